//! Fully convolutional conditional discriminator.
//!
//! The four inputs (conditioning image, its heat maps, the judged image, the
//! target heat maps) concatenate along channels and pass through a stack of
//! stride-2 conv-ReLU layers ending in a sigmoid patch map whose mean is the
//! real-image confidence.

use crate::error::{Error, Result};
use crate::nn::{Activation, BlockCtx, BlockSpec, ConvOp, Mode};
use crate::optim::{GradStore, ParamStore};
use crate::pose::JOINT_COUNT;
use crate::tensor::{FeatureMap, Tensor4};

pub struct Discriminator {
    specs: Vec<BlockSpec>,
    image_h: usize,
    image_w: usize,
}

pub struct DiscCtx {
    block_ctxs: Vec<BlockCtx>,
    patch_count: usize,
}

/// Channel offset of the judged image inside the concatenated input.
pub const JUDGED_CHANNEL_OFFSET: usize = 3 + JOINT_COUNT;

impl Discriminator {
    pub fn new(image_h: usize, image_w: usize, divisor: usize) -> Result<Self> {
        if divisor == 0 {
            return Err(Error::invalid_argument("divisor must be positive"));
        }
        let in_ch = 3 + JOINT_COUNT + 3 + JOINT_COUNT;
        let filters: Vec<usize> = [64usize, 128, 256, 512]
            .iter()
            .map(|f| (f / divisor).max(1))
            .collect();
        if image_h % 32 != 0 || image_w % 32 != 0 || image_h < 32 || image_w < 32 {
            return Err(Error::invalid_argument(format!(
                "discriminator needs image dims divisible by 32, got {image_h}x{image_w}"
            )));
        }
        let mut specs = Vec::new();
        let mut prev = in_ch;
        for (i, &f) in filters.iter().enumerate() {
            specs.push(BlockSpec {
                name: format!("d.c{i}"),
                op: ConvOp::Down { stride: 2 },
                in_ch: prev,
                out_ch: f,
                norm: false,
                dropout: false,
                act: Activation::Relu,
            });
            prev = f;
        }
        specs.push(BlockSpec {
            name: "d.out".to_string(),
            op: ConvOp::Down { stride: 2 },
            in_ch: prev,
            out_ch: 1,
            norm: false,
            dropout: false,
            act: Activation::Sigmoid,
        });
        Ok(Discriminator { specs, image_h, image_w })
    }

    pub fn init_params(&self, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        for spec in &self.specs {
            spec.init_params(&mut store, seed);
        }
        store
    }

    /// Patch-map spatial size for this geometry.
    pub fn patch_dims(&self) -> (usize, usize) {
        (self.image_h / 32, self.image_w / 32)
    }

    /// Scores the judged image `y` against the conditioning pair: the mean
    /// of the sigmoid patch map, strictly inside (0, 1).
    pub fn forward(
        &self,
        params: &ParamStore,
        x_a: &FeatureMap,
        h_a: &FeatureMap,
        y: &FeatureMap,
        h_b: &FeatureMap,
    ) -> Result<(f64, DiscCtx)> {
        for (name, map, ch) in [
            ("conditioning image", x_a, 3),
            ("conditioning heat maps", h_a, JOINT_COUNT),
            ("judged image", y, 3),
            ("target heat maps", h_b, JOINT_COUNT),
        ] {
            if map.h != self.image_h || map.w != self.image_w || map.c != ch {
                return Err(Error::shape_mismatch(format!(
                    "{name} must be {}x{}x{ch}, got {}x{}x{}",
                    self.image_h, self.image_w, map.h, map.w, map.c
                )));
            }
        }
        let input = FeatureMap::concat_channels(&[x_a, h_a, y, h_b])?;
        let mut x = Tensor4::from_single(&input);
        let mut block_ctxs = Vec::with_capacity(self.specs.len());
        for spec in &self.specs {
            let (out, ctx) = spec.forward(params, &x, Mode::Eval, None)?;
            block_ctxs.push(ctx);
            x = out;
        }
        let patch_count = x.data.len();
        let score = x.data.iter().sum::<f64>() / patch_count as f64;
        Ok((score, DiscCtx { block_ctxs, patch_count }))
    }

    /// Backward pass from the scalar score gradient. Accumulates parameter
    /// gradients into `grads` and returns the gradient on the concatenated
    /// input tensor.
    pub fn backward(
        &self,
        params: &ParamStore,
        ctx: &DiscCtx,
        d_score: f64,
        grads: &mut GradStore,
    ) -> Result<Tensor4> {
        let (ph, pw) = self.patch_dims();
        if ctx.patch_count != ph * pw {
            return Err(Error::InvalidState("discriminator context mismatch".into()));
        }
        // mean backward: every patch output receives d_score / count
        let mut g = Tensor4::zeros(1, ph, pw, 1);
        let per = d_score / ctx.patch_count as f64;
        g.data.fill(per);
        for (spec, block_ctx) in self.specs.iter().zip(ctx.block_ctxs.iter()).rev() {
            g = spec.backward(params, block_ctx, &g, grads)?;
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
        let mut f = FeatureMap::zeros(h, w, c);
        for v in f.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn score_is_in_open_unit_interval_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let disc = Discriminator::new(64, 32, 8).unwrap();
        let params = disc.init_params(0);
        let x_a = random_map(&mut rng, 64, 32, 3);
        let h_a = random_map(&mut rng, 64, 32, 18);
        let y = random_map(&mut rng, 64, 32, 3);
        let h_b = random_map(&mut rng, 64, 32, 18);
        let (score, _) = disc.forward(&params, &x_a, &h_a, &y, &h_b).unwrap();
        assert!(score > 0.0 && score < 1.0);
        let (again, _) = disc.forward(&params, &x_a, &h_a, &y, &h_b).unwrap();
        assert_eq!(score, again);
        // swapping the judged image changes the input, and the score
        let y2 = random_map(&mut rng, 64, 32, 3);
        let (other, _) = disc.forward(&params, &x_a, &h_a, &y2, &h_b).unwrap();
        assert_ne!(score, other);
    }

    #[test]
    fn patch_dims_follow_the_stride_chain() {
        let disc = Discriminator::new(64, 32, 8).unwrap();
        assert_eq!(disc.patch_dims(), (2, 1));
        let disc = Discriminator::new(64, 64, 8).unwrap();
        assert_eq!(disc.patch_dims(), (2, 2));
        assert!(Discriminator::new(48, 32, 8).is_err());
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let disc = Discriminator::new(64, 32, 16).unwrap();
        let params = disc.init_params(1);
        let x_a = random_map(&mut rng, 64, 32, 3);
        let h_a = random_map(&mut rng, 64, 32, 18);
        let mut y = random_map(&mut rng, 64, 32, 3);
        let h_b = random_map(&mut rng, 64, 32, 18);
        let (_, ctx) = disc.forward(&params, &x_a, &h_a, &y, &h_b).unwrap();
        let mut grads = GradStore::new();
        let gin = disc.backward(&params, &ctx, 1.0, &mut grads).unwrap();
        // check the slice of the gradient that lands on the judged image
        let step = 1e-5;
        let mut rng2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..12 {
            let yy = rng2.random_range(0..64usize);
            let xx = rng2.random_range(0..32usize);
            let ch = rng2.random_range(0..3usize);
            let orig = y.at(yy, xx, ch);
            y.set(yy, xx, ch, orig + step);
            let up = disc.forward(&params, &x_a, &h_a, &y, &h_b).unwrap().0;
            y.set(yy, xx, ch, orig - step);
            let down = disc.forward(&params, &x_a, &h_a, &y, &h_b).unwrap().0;
            y.set(yy, xx, ch, orig);
            let numeric = (up - down) / (2.0 * step);
            let analytic = gin.at(0, yy, xx, JUDGED_CHANNEL_OFFSET + ch);
            let denom = analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "({yy},{xx},{ch}): analytic {analytic}, numeric {numeric}"
            );
        }
    }
}
