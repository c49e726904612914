//! Fixed-architecture differentiable layers with hand-derived backward
//! passes: convolution, transposed convolution, instance normalization,
//! pointwise activations, dropout, and the conv/norm/dropout composite
//! blocks the networks are assembled from.
//!
//! Tensors are NHWC. Stride-2 convolutions use 4×4 kernels with padding 1
//! (exactly halving even spatial dims), stride-1 convolutions use 3×3 with
//! padding 1 (shape preserving), and transposed convolutions use 4×4 stride
//! 2 padding 1 (exactly doubling).

use crate::error::{Error, Result};
use crate::optim::{accumulate_grad, GradStore, ParamStore};
use crate::tensor::{Tensor, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const INSTANCE_NORM_EPS: f64 = 1e-5;
pub const DROPOUT_RATE: f64 = 0.5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// ---------------------------------------------------------------------------
// convolution

fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

pub struct ConvCtx {
    x: Tensor4,
    stride: usize,
    pad: usize,
    kernel: usize,
    out_h: usize,
    out_w: usize,
}

/// Convolution with weight layout [kh, kw, c_in, c_out] and bias [c_out].
pub fn conv2d_forward(
    x: &Tensor4,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<(Tensor4, ConvCtx)> {
    let kernel = w.dims[0];
    if w.dims.len() != 4 || w.dims[1] != kernel {
        return Err(Error::invalid_argument(format!(
            "conv weight dims {:?} must be [k, k, c_in, c_out]",
            w.dims
        )));
    }
    let (cin, cout) = (w.dims[2], w.dims[3]);
    if x.c != cin {
        return Err(Error::shape_mismatch(format!(
            "conv input has {} channels, weight expects {cin}",
            x.c
        )));
    }
    if b.dims != vec![cout] {
        return Err(Error::invalid_argument("conv bias dims".to_string()));
    }
    let out_h = conv_out_dim(x.h, kernel, stride, pad);
    let out_w = conv_out_dim(x.w, kernel, stride, pad);
    let mut out = Tensor4::zeros(x.n, out_h, out_w, cout);
    let mut acc = vec![0.0; cout];
    for n in 0..x.n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                acc.copy_from_slice(&b.data);
                for ky in 0..kernel {
                    let iy = (oy * stride + ky) as i64 - pad as i64;
                    if iy < 0 || iy >= x.h as i64 {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = (ox * stride + kx) as i64 - pad as i64;
                        if ix < 0 || ix >= x.w as i64 {
                            continue;
                        }
                        let xbase = ((n * x.h + iy as usize) * x.w + ix as usize) * cin;
                        let wbase = (ky * kernel + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = x.data[xbase + ci];
                            let wrow = &w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                            for (a, &wv) in acc.iter_mut().zip(wrow.iter()) {
                                *a += xv * wv;
                            }
                        }
                    }
                }
                let obase = ((n * out_h + oy) * out_w + ox) * cout;
                out.data[obase..obase + cout].copy_from_slice(&acc);
            }
        }
    }
    let ctx = ConvCtx { x: x.clone(), stride, pad, kernel, out_h, out_w };
    Ok((out, ctx))
}

/// Gradients of [`conv2d_forward`] with respect to input, weight, and bias.
pub fn conv2d_backward(
    ctx: &ConvCtx,
    w: &Tensor,
    grad_out: &Tensor4,
) -> Result<(Tensor4, Tensor, Tensor)> {
    let (cin, cout) = (w.dims[2], w.dims[3]);
    if grad_out.h != ctx.out_h || grad_out.w != ctx.out_w || grad_out.c != cout
        || grad_out.n != ctx.x.n
    {
        return Err(Error::InvalidState("conv gradient shape mismatch".into()));
    }
    let x = &ctx.x;
    let kernel = ctx.kernel;
    let mut grad_x = Tensor4::zeros(x.n, x.h, x.w, cin);
    let mut grad_w = Tensor::zeros(&w.dims);
    let mut grad_b = Tensor::zeros(&[cout]);
    for n in 0..x.n {
        for oy in 0..ctx.out_h {
            for ox in 0..ctx.out_w {
                let gbase = ((n * ctx.out_h + oy) * ctx.out_w + ox) * cout;
                let g = &grad_out.data[gbase..gbase + cout];
                for (gb, &gv) in grad_b.data.iter_mut().zip(g.iter()) {
                    *gb += gv;
                }
                for ky in 0..kernel {
                    let iy = (oy * ctx.stride + ky) as i64 - ctx.pad as i64;
                    if iy < 0 || iy >= x.h as i64 {
                        continue;
                    }
                    for kx in 0..kernel {
                        let ix = (ox * ctx.stride + kx) as i64 - ctx.pad as i64;
                        if ix < 0 || ix >= x.w as i64 {
                            continue;
                        }
                        let xbase = ((n * x.h + iy as usize) * x.w + ix as usize) * cin;
                        let wbase = (ky * kernel + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = x.data[xbase + ci];
                            let wrow = &w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                            let grow =
                                &mut grad_w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                            let mut acc = 0.0;
                            for co in 0..cout {
                                let gv = g[co];
                                grow[co] += xv * gv;
                                acc += wrow[co] * gv;
                            }
                            grad_x.data[xbase + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

// ---------------------------------------------------------------------------
// transposed convolution (4x4, stride 2, pad 1: exactly doubles H and W)

pub struct UpconvCtx {
    x: Tensor4,
    out_h: usize,
    out_w: usize,
}

pub fn upconv2d_forward(x: &Tensor4, w: &Tensor, b: &Tensor) -> Result<(Tensor4, UpconvCtx)> {
    if w.dims.len() != 4 || w.dims[0] != 4 || w.dims[1] != 4 {
        return Err(Error::invalid_argument(format!(
            "upconv weight dims {:?} must be [4, 4, c_in, c_out]",
            w.dims
        )));
    }
    let (cin, cout) = (w.dims[2], w.dims[3]);
    if x.c != cin {
        return Err(Error::shape_mismatch(format!(
            "upconv input has {} channels, weight expects {cin}",
            x.c
        )));
    }
    if b.dims != vec![cout] {
        return Err(Error::invalid_argument("upconv bias dims".to_string()));
    }
    let out_h = x.h * 2;
    let out_w = x.w * 2;
    let mut out = Tensor4::zeros(x.n, out_h, out_w, cout);
    // bias first, then scatter every input position through the kernel
    for n in 0..x.n {
        for oy in 0..out_h {
            for ox in 0..out_w {
                let obase = ((n * out_h + oy) * out_w + ox) * cout;
                out.data[obase..obase + cout].copy_from_slice(&b.data);
            }
        }
    }
    for n in 0..x.n {
        for iy in 0..x.h {
            for ix in 0..x.w {
                let xbase = ((n * x.h + iy) * x.w + ix) * cin;
                for ky in 0..4usize {
                    let oy = (2 * iy + ky) as i64 - 1;
                    if oy < 0 || oy >= out_h as i64 {
                        continue;
                    }
                    for kx in 0..4usize {
                        let ox = (2 * ix + kx) as i64 - 1;
                        if ox < 0 || ox >= out_w as i64 {
                            continue;
                        }
                        let obase = ((n * out_h + oy as usize) * out_w + ox as usize) * cout;
                        let wbase = (ky * 4 + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = x.data[xbase + ci];
                            let wrow = &w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                            let orow = &mut out.data[obase..obase + cout];
                            for (o, &wv) in orow.iter_mut().zip(wrow.iter()) {
                                *o += xv * wv;
                            }
                        }
                    }
                }
            }
        }
    }
    let ctx = UpconvCtx { x: x.clone(), out_h, out_w };
    Ok((out, ctx))
}

pub fn upconv2d_backward(
    ctx: &UpconvCtx,
    w: &Tensor,
    grad_out: &Tensor4,
) -> Result<(Tensor4, Tensor, Tensor)> {
    let (cin, cout) = (w.dims[2], w.dims[3]);
    if grad_out.h != ctx.out_h || grad_out.w != ctx.out_w || grad_out.c != cout
        || grad_out.n != ctx.x.n
    {
        return Err(Error::InvalidState("upconv gradient shape mismatch".into()));
    }
    let x = &ctx.x;
    let mut grad_x = Tensor4::zeros(x.n, x.h, x.w, cin);
    let mut grad_w = Tensor::zeros(&w.dims);
    let mut grad_b = Tensor::zeros(&[cout]);
    for gv_chunk in grad_out.data.chunks_exact(cout) {
        for (gb, &gv) in grad_b.data.iter_mut().zip(gv_chunk.iter()) {
            *gb += gv;
        }
    }
    for n in 0..x.n {
        for iy in 0..x.h {
            for ix in 0..x.w {
                let xbase = ((n * x.h + iy) * x.w + ix) * cin;
                for ky in 0..4usize {
                    let oy = (2 * iy + ky) as i64 - 1;
                    if oy < 0 || oy >= ctx.out_h as i64 {
                        continue;
                    }
                    for kx in 0..4usize {
                        let ox = (2 * ix + kx) as i64 - 1;
                        if ox < 0 || ox >= ctx.out_w as i64 {
                            continue;
                        }
                        let gbase =
                            ((n * ctx.out_h + oy as usize) * ctx.out_w + ox as usize) * cout;
                        let g = &grad_out.data[gbase..gbase + cout];
                        let wbase = (ky * 4 + kx) * cin * cout;
                        for ci in 0..cin {
                            let xv = x.data[xbase + ci];
                            let wrow = &w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                            let grow =
                                &mut grad_w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                            let mut acc = 0.0;
                            for co in 0..cout {
                                let gv = g[co];
                                grow[co] += xv * gv;
                                acc += wrow[co] * gv;
                            }
                            grad_x.data[xbase + ci] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok((grad_x, grad_w, grad_b))
}

// ---------------------------------------------------------------------------
// instance normalization

pub struct InstanceNormCtx {
    x_hat: Tensor4,
    inv_std: Vec<f64>, // per (n, c) plane
}

/// Normalizes every (sample, channel) plane to zero mean and unit variance,
/// then applies the affine scale and shift.
pub fn instance_norm_forward(
    x: &Tensor4,
    gamma: &Tensor,
    beta: &Tensor,
) -> Result<(Tensor4, InstanceNormCtx)> {
    if gamma.dims != vec![x.c] || beta.dims != vec![x.c] {
        return Err(Error::invalid_argument(format!(
            "instance norm affine dims must be [{}]",
            x.c
        )));
    }
    let m = (x.h * x.w) as f64;
    let mut out = Tensor4::zeros(x.n, x.h, x.w, x.c);
    let mut x_hat = Tensor4::zeros(x.n, x.h, x.w, x.c);
    let mut inv_std = vec![0.0; x.n * x.c];
    for n in 0..x.n {
        for ch in 0..x.c {
            let mut mean = 0.0;
            for y in 0..x.h {
                for xx in 0..x.w {
                    mean += x.at(n, y, xx, ch);
                }
            }
            mean /= m;
            let mut var = 0.0;
            for y in 0..x.h {
                for xx in 0..x.w {
                    let d = x.at(n, y, xx, ch) - mean;
                    var += d * d;
                }
            }
            var /= m;
            let inv = 1.0 / (var + INSTANCE_NORM_EPS).sqrt();
            inv_std[n * x.c + ch] = inv;
            let (g, b) = (gamma.data[ch], beta.data[ch]);
            for y in 0..x.h {
                for xx in 0..x.w {
                    let xh = (x.at(n, y, xx, ch) - mean) * inv;
                    x_hat.set(n, y, xx, ch, xh);
                    out.set(n, y, xx, ch, g * xh + b);
                }
            }
        }
    }
    Ok((out, InstanceNormCtx { x_hat, inv_std }))
}

pub fn instance_norm_backward(
    ctx: &InstanceNormCtx,
    gamma: &Tensor,
    grad_out: &Tensor4,
) -> Result<(Tensor4, Tensor, Tensor)> {
    let x_hat = &ctx.x_hat;
    if !grad_out.same_shape(x_hat) {
        return Err(Error::InvalidState(
            "instance norm gradient shape mismatch".into(),
        ));
    }
    let m = (x_hat.h * x_hat.w) as f64;
    let mut grad_x = Tensor4::zeros(x_hat.n, x_hat.h, x_hat.w, x_hat.c);
    let mut grad_gamma = Tensor::zeros(&[x_hat.c]);
    let mut grad_beta = Tensor::zeros(&[x_hat.c]);
    for n in 0..x_hat.n {
        for ch in 0..x_hat.c {
            let inv = ctx.inv_std[n * x_hat.c + ch];
            let g = gamma.data[ch];
            let mut sum_gy = 0.0;
            let mut sum_gy_xhat = 0.0;
            for y in 0..x_hat.h {
                for xx in 0..x_hat.w {
                    let gy = grad_out.at(n, y, xx, ch);
                    let xh = x_hat.at(n, y, xx, ch);
                    sum_gy += gy;
                    sum_gy_xhat += gy * xh;
                }
            }
            grad_beta.data[ch] += sum_gy;
            grad_gamma.data[ch] += sum_gy_xhat;
            let mean_gy = sum_gy / m;
            let mean_gy_xhat = sum_gy_xhat / m;
            for y in 0..x_hat.h {
                for xx in 0..x_hat.w {
                    let gy = grad_out.at(n, y, xx, ch);
                    let xh = x_hat.at(n, y, xx, ch);
                    let gx = g * inv * (gy - mean_gy - xh * mean_gy_xhat);
                    grad_x.set(n, y, xx, ch, gx);
                }
            }
        }
    }
    Ok((grad_x, grad_gamma, grad_beta))
}

// ---------------------------------------------------------------------------
// pointwise activations

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    None,
}

pub struct ActCtx {
    act: Activation,
    /// pre-activation for ReLU, post-activation for tanh/sigmoid
    saved: Tensor4,
}

pub fn activation_forward(x: &Tensor4, act: Activation) -> (Tensor4, ActCtx) {
    match act {
        Activation::Relu => {
            let mut out = x.clone();
            for v in out.data.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            (out, ActCtx { act, saved: x.clone() })
        }
        Activation::Tanh => {
            let mut out = x.clone();
            for v in out.data.iter_mut() {
                *v = v.tanh();
            }
            (out.clone(), ActCtx { act, saved: out })
        }
        Activation::Sigmoid => {
            let mut out = x.clone();
            for v in out.data.iter_mut() {
                *v = 1.0 / (1.0 + (-*v).exp());
            }
            (out.clone(), ActCtx { act, saved: out })
        }
        Activation::None => (x.clone(), ActCtx { act, saved: Tensor4::zeros(0, 0, 0, 0) }),
    }
}

pub fn activation_backward(ctx: &ActCtx, grad_out: &Tensor4) -> Tensor4 {
    let mut grad = grad_out.clone();
    match ctx.act {
        Activation::Relu => {
            for (g, &pre) in grad.data.iter_mut().zip(ctx.saved.data.iter()) {
                if pre <= 0.0 {
                    *g = 0.0;
                }
            }
        }
        Activation::Tanh => {
            for (g, &y) in grad.data.iter_mut().zip(ctx.saved.data.iter()) {
                *g *= 1.0 - y * y;
            }
        }
        Activation::Sigmoid => {
            for (g, &y) in grad.data.iter_mut().zip(ctx.saved.data.iter()) {
                *g *= y * (1.0 - y);
            }
        }
        Activation::None => {}
    }
    grad
}

// ---------------------------------------------------------------------------
// dropout

pub struct DropoutCtx {
    /// multiplicative mask: 0 or 1/keep
    mask: Vec<f64>,
}

/// Train-time dropout. Kept units are scaled by 1/keep so the eval-time
/// identity needs no rescaling.
pub fn dropout_forward(x: &Tensor4, rate: f64, rng: &mut ChaCha8Rng) -> (Tensor4, DropoutCtx) {
    let keep = 1.0 - rate;
    let mut out = x.clone();
    let mut mask = vec![0.0; x.data.len()];
    for (m, v) in mask.iter_mut().zip(out.data.iter_mut()) {
        if rng.random::<f64>() < keep {
            *m = 1.0 / keep;
            *v *= *m;
        } else {
            *v = 0.0;
        }
    }
    (out, DropoutCtx { mask })
}

pub fn dropout_backward(ctx: &DropoutCtx, grad_out: &Tensor4) -> Tensor4 {
    let mut grad = grad_out.clone();
    for (g, &m) in grad.data.iter_mut().zip(ctx.mask.iter()) {
        *g *= m;
    }
    grad
}

// ---------------------------------------------------------------------------
// composite blocks

/// Convolution flavour of a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvOp {
    /// stride-1 3×3 (shape preserving) or stride-2 4×4 (halving)
    Down { stride: usize },
    /// 4×4 stride-2 transposed convolution (doubling)
    Up,
}

/// One conv(-norm)(-dropout)-activation block.
#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub name: String,
    pub op: ConvOp,
    pub in_ch: usize,
    pub out_ch: usize,
    pub norm: bool,
    pub dropout: bool,
    pub act: Activation,
}

pub struct BlockCtx {
    conv: ConvKindCtx,
    norm: Option<InstanceNormCtx>,
    drop: Option<DropoutCtx>,
    act: ActCtx,
}

enum ConvKindCtx {
    Down(ConvCtx),
    Up(UpconvCtx),
}

impl BlockSpec {
    pub fn conv_block(name: impl Into<String>, in_ch: usize, out_ch: usize, stride: usize, act: Activation) -> Self {
        BlockSpec {
            name: name.into(),
            op: ConvOp::Down { stride },
            in_ch,
            out_ch,
            norm: false,
            dropout: false,
            act,
        }
    }

    pub fn kernel(&self) -> usize {
        match self.op {
            ConvOp::Down { stride: 1 } => 3,
            _ => 4,
        }
    }

    fn pad(&self) -> usize {
        1
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        match self.op {
            ConvOp::Down { stride } => (
                conv_out_dim(h, self.kernel(), stride, self.pad()),
                conv_out_dim(w, self.kernel(), stride, self.pad()),
            ),
            ConvOp::Up => (h * 2, w * 2),
        }
    }

    fn weight_name(&self) -> String {
        format!("{}.conv.w", self.name)
    }

    fn bias_name(&self) -> String {
        format!("{}.conv.b", self.name)
    }

    fn gamma_name(&self) -> String {
        format!("{}.norm.gamma", self.name)
    }

    fn beta_name(&self) -> String {
        format!("{}.norm.beta", self.name)
    }

    /// Registers this block's parameters: weights from a seeded normal
    /// distribution (std 0.02, per-tensor stream derived from the name so
    /// registration order does not matter), biases zero, norm scale one.
    pub fn init_params(&self, store: &mut ParamStore, seed: u64) {
        let k = self.kernel();
        let wname = self.weight_name();
        let mut w = Tensor::zeros(&[k, k, self.in_ch, self.out_ch]);
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &wname));
        let dist = Normal::new(0.0, INIT_STD).unwrap();
        for v in w.data.iter_mut() {
            *v = dist.sample(&mut rng);
        }
        store.insert(wname, w);
        store.insert(self.bias_name(), Tensor::zeros(&[self.out_ch]));
        if self.norm {
            let mut gamma = Tensor::zeros(&[self.out_ch]);
            gamma.data.fill(1.0);
            store.insert(self.gamma_name(), gamma);
            store.insert(self.beta_name(), Tensor::zeros(&[self.out_ch]));
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        x: &Tensor4,
        mode: Mode,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(Tensor4, BlockCtx)> {
        let w = store.get(&self.weight_name())?;
        let b = store.get(&self.bias_name())?;
        let (mut out, conv_ctx) = match self.op {
            ConvOp::Down { stride } => {
                let (o, c) = conv2d_forward(x, w, b, stride, self.pad())?;
                (o, ConvKindCtx::Down(c))
            }
            ConvOp::Up => {
                let (o, c) = upconv2d_forward(x, w, b)?;
                (o, ConvKindCtx::Up(c))
            }
        };
        let norm_ctx = if self.norm {
            let gamma = store.get(&self.gamma_name())?;
            let beta = store.get(&self.beta_name())?;
            let (o, c) = instance_norm_forward(&out, gamma, beta)?;
            out = o;
            Some(c)
        } else {
            None
        };
        let drop_ctx = if self.dropout && mode == Mode::Train {
            let rng = rng.ok_or_else(|| {
                Error::InvalidState(format!("block {} needs an rng in train mode", self.name))
            })?;
            let (o, c) = dropout_forward(&out, DROPOUT_RATE, rng);
            out = o;
            Some(c)
        } else {
            None
        };
        let (out, act_ctx) = activation_forward(&out, self.act);
        Ok((out, BlockCtx { conv: conv_ctx, norm: norm_ctx, drop: drop_ctx, act: act_ctx }))
    }

    /// Backward pass; accumulates parameter gradients and returns the input
    /// gradient.
    pub fn backward(
        &self,
        store: &ParamStore,
        ctx: &BlockCtx,
        grad_out: &Tensor4,
        grads: &mut GradStore,
    ) -> Result<Tensor4> {
        let mut g = activation_backward(&ctx.act, grad_out);
        if let Some(drop_ctx) = &ctx.drop {
            g = dropout_backward(drop_ctx, &g);
        }
        if let Some(norm_ctx) = &ctx.norm {
            let gamma = store.get(&self.gamma_name())?;
            let (gx, ggamma, gbeta) = instance_norm_backward(norm_ctx, gamma, &g)?;
            accumulate_grad(grads, &self.gamma_name(), &ggamma);
            accumulate_grad(grads, &self.beta_name(), &gbeta);
            g = gx;
        }
        let w = store.get(&self.weight_name())?;
        let (gx, gw, gb) = match &ctx.conv {
            ConvKindCtx::Down(c) => conv2d_backward(c, w, &g)?,
            ConvKindCtx::Up(c) => upconv2d_backward(c, w, &g)?,
        };
        accumulate_grad(grads, &self.weight_name(), &gw);
        accumulate_grad(grads, &self.bias_name(), &gb);
        Ok(gx)
    }
}

/// Stable per-tensor seed: FNV-1a of the name folded into the base seed.
fn mix_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for byte in name.as_bytes() {
        h ^= *byte as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h ^ seed.wrapping_mul(0x9e3779b97f4a7c15)
}

/// Deterministic sub-seed for iteration/lane streams.
pub fn stream_seed(seed: u64, iteration: u64, lane: u64) -> u64 {
    let mut s = seed;
    s = s.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(iteration.wrapping_mul(0xbf58476d1ce4e5b9));
    s ^= lane.wrapping_mul(0x94d049bb133111eb);
    s ^ (s >> 31)
}

/// Deterministic per-iteration stream for dropout and sampling.
pub fn derive_rng(seed: u64, iteration: u64, lane: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, iteration, lane))
}
