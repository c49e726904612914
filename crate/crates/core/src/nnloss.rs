//! Reconstruction losses over feature volumes.
//!
//! The nearest-neighbour loss scores each position of the generated feature
//! volume against its best match within a small window of the target volume,
//! which tolerates slight spatial misalignment that plain elementwise
//! differences would penalize. Two evaluation routes are provided: a direct
//! per-pixel loop, and a shifted-volume route that makes one whole-image
//! pass per window offset; the two agree bitwise. Sums are unnormalized.
//!
//! Feature volumes come from a frozen two-layer convolutional extractor
//! whose stride-1 same-padded 3×3 filters give every output a 5×5 receptive
//! field at the resolution of the input image.

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Feature volume of an image: same spatial resolution, arbitrary channels.
pub type FeatureVolume = FeatureMap;

/// Square search window; offsets range over [-(n-1)/2, +(n-1)/2].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborhoodSpec {
    n: usize,
}

impl NeighborhoodSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || n % 2 == 0 {
            return Err(Error::invalid_argument(format!(
                "neighbourhood side must be odd and positive, got {n}"
            )));
        }
        Ok(NeighborhoodSpec { n })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> i64 {
        (self.n as i64 - 1) / 2
    }
}

/// Best window offset per position, recorded by the forward pass.
#[derive(Debug, Clone)]
pub struct ArgminField {
    pub h: usize,
    pub w: usize,
    pub offsets: Vec<(i16, i16)>,
}

impl ArgminField {
    #[inline]
    pub fn at(&self, y: usize, x: usize) -> (i16, i16) {
        self.offsets[y * self.w + x]
    }
}

fn check_same_shape(a: &FeatureVolume, b: &FeatureVolume) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::shape_mismatch(format!(
            "feature volumes {}x{}x{} vs {}x{}x{}",
            a.h, a.w, a.c, b.h, b.w, b.c
        )));
    }
    Ok(())
}

/// Channelwise L1 distance between position p of `c_hat` and p+(dy,dx) of
/// `c_b`. Caller guarantees the offset position is in bounds.
#[inline]
fn point_l1(c_hat: &FeatureVolume, c_b: &FeatureVolume, y: usize, x: usize, qy: usize, qx: usize) -> f64 {
    let mut s = 0.0;
    for ch in 0..c_hat.c {
        s += (c_hat.at(y, x, ch) - c_b.at(qy, qx, ch)).abs();
    }
    s
}

/// Direct evaluation: for every position, loop over all in-bounds window
/// offsets and keep the smallest channelwise L1 distance.
pub fn nn_loss_bruteforce(
    c_hat: &FeatureVolume,
    c_b: &FeatureVolume,
    nb: NeighborhoodSpec,
) -> Result<f64> {
    check_same_shape(c_hat, c_b)?;
    let r = nb.radius();
    let mut total = 0.0;
    for y in 0..c_hat.h {
        for x in 0..c_hat.w {
            let mut best = f64::MAX;
            for dy in -r..=r {
                for dx in -r..=r {
                    let qy = y as i64 + dy;
                    let qx = x as i64 + dx;
                    if qy < 0 || qx < 0 || qy >= c_hat.h as i64 || qx >= c_hat.w as i64 {
                        continue;
                    }
                    let s = point_l1(c_hat, c_b, y, x, qy as usize, qx as usize);
                    if s < best {
                        best = s;
                    }
                }
            }
            total += best;
        }
    }
    Ok(total)
}

/// Shifted-volume evaluation: one whole-image difference pass per window
/// offset, with out-of-bounds positions held at the largest finite value so
/// they never win the pointwise minimum. Offsets are scanned in (dy, dx)
/// ascending order and ties keep the first minimizer, so the recorded
/// argmin is deterministic. Numerically equal to [`nn_loss_bruteforce`].
pub fn nn_loss_shifted(
    c_hat: &FeatureVolume,
    c_b: &FeatureVolume,
    nb: NeighborhoodSpec,
) -> Result<(f64, ArgminField)> {
    check_same_shape(c_hat, c_b)?;
    let r = nb.radius();
    let (h, w) = (c_hat.h, c_hat.w);
    let mut best = vec![f64::MAX; h * w];
    let mut offsets = vec![(0i16, 0i16); h * w];
    for dy in -r..=r {
        for dx in -r..=r {
            // per-offset distance plane; border positions keep the sentinel
            for y in 0..h {
                let qy = y as i64 + dy;
                if qy < 0 || qy >= h as i64 {
                    continue;
                }
                for x in 0..w {
                    let qx = x as i64 + dx;
                    if qx < 0 || qx >= w as i64 {
                        continue;
                    }
                    let s = point_l1(c_hat, c_b, y, x, qy as usize, qx as usize);
                    let slot = y * w + x;
                    if s < best[slot] {
                        best[slot] = s;
                        offsets[slot] = (dy as i16, dx as i16);
                    }
                }
            }
        }
    }
    let mut total = 0.0;
    for row in 0..h {
        for col in 0..w {
            total += best[row * w + col];
        }
    }
    Ok((total, ArgminField { h, w, offsets }))
}

/// Subgradient of the nearest-neighbour loss with respect to `c_hat`,
/// holding the recorded argmin offsets fixed: sign of the channelwise
/// difference at each position's best match, scaled by `grad`.
pub fn nn_loss_backward(
    grad: f64,
    argmin: &ArgminField,
    c_hat: &FeatureVolume,
    c_b: &FeatureVolume,
) -> Result<FeatureVolume> {
    check_same_shape(c_hat, c_b).map_err(|_| {
        Error::InvalidState("feature volumes do not match".into())
    })?;
    if argmin.h != c_hat.h || argmin.w != c_hat.w {
        return Err(Error::InvalidState(
            "argmin field does not match volume shape".into(),
        ));
    }
    let mut out = FeatureVolume::zeros(c_hat.h, c_hat.w, c_hat.c);
    for y in 0..c_hat.h {
        for x in 0..c_hat.w {
            let (dy, dx) = argmin.at(y, x);
            let qy = (y as i64 + dy as i64) as usize;
            let qx = (x as i64 + dx as i64) as usize;
            for ch in 0..c_hat.c {
                let diff = c_hat.at(y, x, ch) - c_b.at(qy, qx, ch);
                let sign = if diff > 0.0 {
                    1.0
                } else if diff < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                out.set(y, x, ch, grad * sign);
            }
        }
    }
    Ok(out)
}

/// Unnormalized sum over positions of the channelwise L1 difference.
pub fn l1_loss(x_hat: &FeatureMap, x_b: &FeatureMap) -> Result<f64> {
    check_same_shape(x_hat, x_b)?;
    let mut total = 0.0;
    for y in 0..x_hat.h {
        for x in 0..x_hat.w {
            total += point_l1(x_hat, x_b, y, x, y, x);
        }
    }
    Ok(total)
}

/// Gradient of [`l1_loss`] with respect to `x_hat`: elementwise sign.
pub fn l1_loss_backward(grad: f64, x_hat: &FeatureMap, x_b: &FeatureMap) -> Result<FeatureMap> {
    check_same_shape(x_hat, x_b)?;
    let mut out = FeatureMap::zeros(x_hat.h, x_hat.w, x_hat.c);
    for (o, (a, b)) in out
        .data
        .iter_mut()
        .zip(x_hat.data.iter().zip(x_b.data.iter()))
    {
        let diff = a - b;
        *o = if diff > 0.0 {
            grad
        } else if diff < 0.0 {
            -grad
        } else {
            0.0
        };
    }
    Ok(out)
}

/// Element-to-element L1 in feature space, i.e. the nearest-neighbour loss
/// with a 1×1 window.
pub fn perceptual_elementwise_loss(c_hat: &FeatureVolume, c_b: &FeatureVolume) -> Result<f64> {
    l1_loss(c_hat, c_b)
}

/// Default seed for the frozen extractor weights. The extractor is part of
/// the loss definition, so it must be identical across runs and resumes.
pub const EXTRACTOR_SEED: u64 = 0x5EED_FACE;

/// Frozen two-layer convolutional feature extractor g(·).
///
/// Two stride-1 same-padded 3×3 convolutions with ReLU, weights drawn once
/// from a seeded normal distribution. Externally trained weights can be
/// substituted through [`FeatureExtractor::from_tensors`].
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    /// [3, 3, c_in, c_out]
    w1: Tensor,
    b1: Tensor,
    w2: Tensor,
    b2: Tensor,
}

/// Saved activations from [`FeatureExtractor::forward`].
pub struct ExtractorCtx {
    input: FeatureMap,
    pre1: FeatureMap,
    act1: FeatureMap,
    pre2: FeatureMap,
}

impl FeatureExtractor {
    /// Weights from the fixed-seed distribution: `channels` filters per layer
    /// over a 3-channel input.
    pub fn new_random(seed: u64, channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weight_dist = Normal::new(0.0, 0.25).unwrap();
        let bias_dist = Normal::new(0.0, 0.1).unwrap();
        let draw = |dims: &[usize], dist: &Normal<f64>, rng: &mut ChaCha8Rng| {
            let mut t = Tensor::zeros(dims);
            for v in t.data.iter_mut() {
                *v = dist.sample(rng);
            }
            t
        };
        FeatureExtractor {
            w1: draw(&[3, 3, 3, channels], &weight_dist, &mut rng),
            b1: draw(&[channels], &bias_dist, &mut rng),
            w2: draw(&[3, 3, channels, channels], &weight_dist, &mut rng),
            b2: draw(&[channels], &bias_dist, &mut rng),
        }
    }

    pub const fn default_channels() -> usize {
        8
    }

    /// Builds the extractor from externally supplied tensors, e.g. loaded
    /// from a tensor container with entries conv1.weight, conv1.bias,
    /// conv2.weight, conv2.bias (weights shaped [kh, kw, c_in, c_out]).
    pub fn from_tensors(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self> {
        for (name, w, b) in [("conv1", &w1, &b1), ("conv2", &w2, &b2)] {
            if w.dims.len() != 4 || w.dims[0] != 3 || w.dims[1] != 3 {
                return Err(Error::invalid_argument(format!(
                    "{name}.weight must be [3, 3, c_in, c_out], got {:?}",
                    w.dims
                )));
            }
            if b.dims.len() != 1 || b.dims[0] != w.dims[3] {
                return Err(Error::invalid_argument(format!(
                    "{name}.bias must have {} entries, got {:?}",
                    w.dims[3], b.dims
                )));
            }
        }
        if w1.dims[2] != 3 {
            return Err(Error::invalid_argument(format!(
                "conv1.weight input channels must be 3, got {}",
                w1.dims[2]
            )));
        }
        if w2.dims[2] != w1.dims[3] {
            return Err(Error::invalid_argument(
                "conv2.weight input channels must match conv1 output",
            ));
        }
        Ok(FeatureExtractor { w1, b1, w2, b2 })
    }

    pub fn weight_tensors(&self) -> [(&'static str, &Tensor); 4] {
        [
            ("conv1.weight", &self.w1),
            ("conv1.bias", &self.b1),
            ("conv2.weight", &self.w2),
            ("conv2.bias", &self.b2),
        ]
    }

    pub fn out_channels(&self) -> usize {
        self.w2.dims[3]
    }

    pub fn extract(&self, image: &FeatureMap) -> FeatureVolume {
        let (vol, _) = self.forward(image);
        vol
    }

    /// Forward pass keeping the activations needed by [`Self::backward`].
    pub fn forward(&self, image: &FeatureMap) -> (FeatureVolume, ExtractorCtx) {
        let pre1 = conv3x3_same(image, &self.w1, &self.b1);
        let act1 = relu(&pre1);
        let pre2 = conv3x3_same(&act1, &self.w2, &self.b2);
        let out = relu(&pre2);
        (
            out,
            ExtractorCtx { input: image.clone(), pre1, act1, pre2 },
        )
    }

    /// Gradient with respect to the input image (the weights are frozen).
    pub fn backward(&self, ctx: &ExtractorCtx, grad_out: &FeatureVolume) -> Result<FeatureMap> {
        if grad_out.h != ctx.pre2.h || grad_out.w != ctx.pre2.w || grad_out.c != ctx.pre2.c {
            return Err(Error::InvalidState(
                "extractor gradient does not match forward context".into(),
            ));
        }
        let g2 = relu_backward(&ctx.pre2, grad_out);
        let g1_post = conv3x3_same_backward_input(&g2, &self.w2, ctx.act1.c);
        let g1 = relu_backward(&ctx.pre1, &g1_post);
        Ok(conv3x3_same_backward_input(&g1, &self.w1, ctx.input.c))
    }
}

fn relu(x: &FeatureMap) -> FeatureMap {
    let mut out = x.clone();
    for v in out.data.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

fn relu_backward(pre: &FeatureMap, grad: &FeatureMap) -> FeatureMap {
    let mut out = grad.clone();
    for (g, &p) in out.data.iter_mut().zip(pre.data.iter()) {
        if p <= 0.0 {
            *g = 0.0;
        }
    }
    out
}

/// Stride-1 same-padded 3×3 convolution. Weight layout [ky, kx, c_in, c_out].
fn conv3x3_same(x: &FeatureMap, w: &Tensor, b: &Tensor) -> FeatureMap {
    let (h, wd, cin) = (x.h, x.w, x.c);
    let cout = w.dims[3];
    debug_assert_eq!(w.dims, vec![3, 3, cin, cout]);
    let mut out = FeatureMap::zeros(h, wd, cout);
    let mut acc = vec![0.0; cout];
    for oy in 0..h {
        for ox in 0..wd {
            acc.copy_from_slice(&b.data);
            for ky in 0..3usize {
                let iy = oy as i64 + ky as i64 - 1;
                if iy < 0 || iy >= h as i64 {
                    continue;
                }
                for kx in 0..3usize {
                    let ix = ox as i64 + kx as i64 - 1;
                    if ix < 0 || ix >= wd as i64 {
                        continue;
                    }
                    let xbase = ((iy as usize) * wd + ix as usize) * cin;
                    let wbase = (ky * 3 + kx) * cin * cout;
                    for ci in 0..cin {
                        let xv = x.data[xbase + ci];
                        let wrow = &w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                        for (a, &wv) in acc.iter_mut().zip(wrow.iter()) {
                            *a += xv * wv;
                        }
                    }
                }
            }
            let obase = (oy * wd + ox) * cout;
            out.data[obase..obase + cout].copy_from_slice(&acc);
        }
    }
    out
}

/// Input gradient of [`conv3x3_same`] given the output gradient.
fn conv3x3_same_backward_input(grad_out: &FeatureMap, w: &Tensor, cin: usize) -> FeatureMap {
    let (h, wd) = (grad_out.h, grad_out.w);
    let cout = grad_out.c;
    let mut grad_in = FeatureMap::zeros(h, wd, cin);
    for oy in 0..h {
        for ox in 0..wd {
            let gbase = (oy * wd + ox) * cout;
            let g = &grad_out.data[gbase..gbase + cout];
            for ky in 0..3usize {
                let iy = oy as i64 + ky as i64 - 1;
                if iy < 0 || iy >= h as i64 {
                    continue;
                }
                for kx in 0..3usize {
                    let ix = ox as i64 + kx as i64 - 1;
                    if ix < 0 || ix >= wd as i64 {
                        continue;
                    }
                    let ibase = ((iy as usize) * wd + ix as usize) * cin;
                    let wbase = (ky * 3 + kx) * cin * cout;
                    for ci in 0..cin {
                        let wrow = &w.data[wbase + ci * cout..wbase + (ci + 1) * cout];
                        let mut acc = 0.0;
                        for (gv, wv) in g.iter().zip(wrow.iter()) {
                            acc += gv * wv;
                        }
                        grad_in.data[ibase + ci] += acc;
                    }
                }
            }
        }
    }
    grad_in
}
