//! Structural similarity (SSIM) and its masked variant.
//!
//! Images are converted to grayscale by channel mean, local statistics come
//! from an 11×11 Gaussian window (sigma 1.5, normalized to sum 1) evaluated
//! over fully interior windows, and the score is the mean of the local
//! similarity map. Stabilizers are C1 = (K1·L)² and C2 = (K2·L)² for the
//! declared dynamic range L.

use crate::error::{Error, Result};
use crate::region::RegionMask;
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimConfig {
    pub window: usize,
    pub window_sigma: f64,
    pub k1: f64,
    pub k2: f64,
    /// dynamic range of the pixel values: 2.0 for [-1, 1] images, 255.0 for
    /// 8-bit files
    pub l: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        SsimConfig { window: 11, window_sigma: 1.5, k1: 0.01, k2: 0.03, l: 2.0 }
    }
}

impl SsimConfig {
    pub fn for_unit_range() -> Self {
        Self::default()
    }

    pub fn for_8bit() -> Self {
        SsimConfig { l: 255.0, ..Self::default() }
    }

    fn kernel(&self) -> Vec<f64> {
        let n = self.window;
        let half = (n as f64 - 1.0) / 2.0;
        let mut k = vec![0.0; n * n];
        let mut sum = 0.0;
        for y in 0..n {
            for x in 0..n {
                let dy = y as f64 - half;
                let dx = x as f64 - half;
                let v = (-(dx * dx + dy * dy) / (2.0 * self.window_sigma * self.window_sigma))
                    .exp();
                k[y * n + x] = v;
                sum += v;
            }
        }
        for v in k.iter_mut() {
            *v /= sum;
        }
        k
    }
}

fn to_gray(x: &FeatureMap) -> Vec<f64> {
    let mut out = vec![0.0; x.h * x.w];
    for y in 0..x.h {
        for xx in 0..x.w {
            let mut s = 0.0;
            for ch in 0..x.c {
                s += x.at(y, xx, ch);
            }
            out[y * x.w + xx] = s / x.c as f64;
        }
    }
    out
}

/// Mean structural similarity between two same-shaped images, in [-1, 1].
pub fn ssim(x: &FeatureMap, y: &FeatureMap, cfg: &SsimConfig) -> Result<f64> {
    if !x.same_shape(y) {
        return Err(Error::shape_mismatch(format!(
            "ssim inputs {}x{}x{} vs {}x{}x{}",
            x.h, x.w, x.c, y.h, y.w, y.c
        )));
    }
    if x.h < cfg.window || x.w < cfg.window {
        return Err(Error::invalid_argument(format!(
            "image {}x{} smaller than the {}x{} ssim window",
            x.h, x.w, cfg.window, cfg.window
        )));
    }
    let gx = to_gray(x);
    let gy = to_gray(y);
    Ok(ssim_gray(&gx, &gy, x.h, x.w, cfg))
}

fn ssim_gray(gx: &[f64], gy: &[f64], h: usize, w: usize, cfg: &SsimConfig) -> f64 {
    let kernel = cfg.kernel();
    let n = cfg.window;
    let c1 = (cfg.k1 * cfg.l) * (cfg.k1 * cfg.l);
    let c2 = (cfg.k2 * cfg.l) * (cfg.k2 * cfg.l);
    let mut total = 0.0;
    let mut count = 0usize;
    for wy in 0..=(h - n) {
        for wx in 0..=(w - n) {
            let mut mx = 0.0;
            let mut my = 0.0;
            let mut mxx = 0.0;
            let mut myy = 0.0;
            let mut mxy = 0.0;
            for ky in 0..n {
                for kx in 0..n {
                    let kw = kernel[ky * n + kx];
                    let xv = gx[(wy + ky) * w + (wx + kx)];
                    let yv = gy[(wy + ky) * w + (wx + kx)];
                    mx += kw * xv;
                    my += kw * yv;
                    mxx += kw * xv * xv;
                    myy += kw * yv * yv;
                    mxy += kw * xv * yv;
                }
            }
            let sxx = mxx - mx * mx;
            let syy = myy - my * my;
            let sxy = mxy - mx * my;
            // identical inputs give bitwise-equal numerator and denominator
            let num = (2.0 * mx * my + c1) * (2.0 * sxy + c2);
            let den = (mx * mx + my * my + c1) * (sxx + syy + c2);
            total += num / den;
            count += 1;
        }
    }
    total / count as f64
}

/// SSIM after zeroing both images outside the mask.
pub fn mask_ssim(x: &FeatureMap, y: &FeatureMap, mask: &RegionMask, cfg: &SsimConfig) -> Result<f64> {
    if mask.h != x.h || mask.w != x.w {
        return Err(Error::shape_mismatch(format!(
            "mask {}x{} vs image {}x{}",
            mask.h, mask.w, x.h, x.w
        )));
    }
    let masked = |img: &FeatureMap| {
        let mut out = img.clone();
        for yy in 0..img.h {
            for xx in 0..img.w {
                if mask.at(yy, xx) == 0 {
                    for ch in 0..img.c {
                        out.set(yy, xx, ch, 0.0);
                    }
                }
            }
        }
        out
    };
    ssim(&masked(x), &masked(y), cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
        let mut f = FeatureMap::zeros(h, w, c);
        for v in f.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        f
    }

    fn constant_image(h: usize, w: usize, value: f64) -> FeatureMap {
        let mut f = FeatureMap::zeros(h, w, 1);
        f.data.fill(value);
        f
    }

    #[test]
    fn self_similarity_is_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SsimConfig::default();
        for _ in 0..10 {
            let img = random_image(&mut rng, 16, 13, 3);
            assert_eq!(ssim(&img, &img, &cfg).unwrap(), 1.0);
        }
    }

    #[test]
    fn ssim_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SsimConfig::default();
        let a = random_image(&mut rng, 14, 14, 3);
        let b = random_image(&mut rng, 14, 14, 3);
        let ab = ssim(&a, &b, &cfg).unwrap();
        let ba = ssim(&b, &a, &cfg).unwrap();
        assert!((ab - ba).abs() < 1e-12);
    }

    #[test]
    fn constant_images_match_closed_form() {
        let cfg = SsimConfig::default();
        let (a, b) = (0.25, -0.5);
        let x = constant_image(12, 12, a);
        let y = constant_image(12, 12, b);
        let c1 = (cfg.k1 * cfg.l).powi(2);
        // variance terms vanish, so only the luminance factor remains
        let want = (2.0 * a * b + c1) / (a * a + b * b + c1);
        let got = ssim(&x, &y, &cfg).unwrap();
        assert!((got - want).abs() < 1e-9, "got {got}, want {want}");
    }

    #[test]
    fn shared_offset_shifts_only_the_luminance_term() {
        let cfg = SsimConfig::default();
        let (a, b, off) = (0.1, -0.2, 0.3);
        let c1 = (cfg.k1 * cfg.l).powi(2);
        let x = constant_image(12, 12, a + off);
        let y = constant_image(12, 12, b + off);
        let want =
            (2.0 * (a + off) * (b + off) + c1) / ((a + off).powi(2) + (b + off).powi(2) + c1);
        let got = ssim(&x, &y, &cfg).unwrap();
        assert!((got - want).abs() < 1e-9);
    }

    #[test]
    fn noise_degrades_ssim_monotonically() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SsimConfig::default();
        // smooth base image so noise is the only structure change
        let mut base = FeatureMap::zeros(20, 20, 1);
        for y in 0..20 {
            for x in 0..20 {
                base.set(y, x, 0, 0.4 * ((y as f64) / 19.0) - 0.2 + 0.3 * ((x as f64) / 19.0));
            }
        }
        let noise: Vec<f64> = (0..400).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut prev = 1.0;
        for level in 0..10 {
            let amp = 0.002 * 2.0f64.powi(level);
            let mut noisy = base.clone();
            for (v, n) in noisy.data.iter_mut().zip(noise.iter()) {
                *v += amp * n;
            }
            let s = ssim(&base, &noisy, &cfg).unwrap();
            assert!(s <= prev + 1e-9, "level {level}: {s} > {prev}");
            prev = s;
        }
    }

    #[test]
    fn mask_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SsimConfig::default();
        let x = random_image(&mut rng, 16, 16, 3);
        let y = random_image(&mut rng, 16, 16, 3);
        let mut ones = RegionMask::zeros(None, 16, 16);
        ones.values.fill(1);
        let masked = mask_ssim(&x, &y, &ones, &cfg).unwrap();
        assert_eq!(masked, ssim(&x, &y, &cfg).unwrap());

        // all-zero mask compares two zero images
        let zeros = RegionMask::zeros(None, 16, 16);
        assert_eq!(mask_ssim(&x, &y, &zeros, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn random_mask_matches_premultiplied_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = SsimConfig::default();
        let x = random_image(&mut rng, 16, 16, 3);
        let y = random_image(&mut rng, 16, 16, 3);
        let mut mask = RegionMask::zeros(None, 16, 16);
        for v in mask.values.iter_mut() {
            *v = if rng.random::<f64>() < 0.6 { 1 } else { 0 };
        }
        let mut mx = x.clone();
        let mut my = y.clone();
        for yy in 0..16 {
            for xx in 0..16 {
                let m = mask.at(yy, xx) as f64;
                for ch in 0..3 {
                    mx.set(yy, xx, ch, x.at(yy, xx, ch) * m);
                    my.set(yy, xx, ch, y.at(yy, xx, ch) * m);
                }
            }
        }
        assert_eq!(
            mask_ssim(&x, &y, &mask, &cfg).unwrap(),
            ssim(&mx, &my, &cfg).unwrap()
        );
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let cfg = SsimConfig::default();
        let a = FeatureMap::zeros(16, 16, 3);
        let b = FeatureMap::zeros(16, 12, 3);
        assert!(ssim(&a, &b, &cfg).is_err());
        // image smaller than the window
        let small = FeatureMap::zeros(8, 8, 3);
        assert!(ssim(&small, &small, &cfg).is_err());
    }
}
