//! Deformable feature-map warping.
//!
//! Each body part masks the feature map, moves the masked content through
//! its fitted affine transform, and the per-part results merge by taking the
//! elementwise maximum. Moving is realized as inverse warping with bilinear
//! interpolation: the output value at q samples the masked source at
//! f⁻¹(q), which reduces to an exact copy for integer translations and has
//! a well-defined gradient. Samples outside the source extent are zero.

use crate::affine::{apply_affine, AffineParams};
use crate::error::{Error, Result};
use crate::region::{BodyPart, RegionMask, PART_COUNT};
use crate::tensor::FeatureMap;

/// Linear-part determinant below which a transform cannot be inverted for
/// warping.
const MIN_WARP_DET: f64 = 1e-8;

/// Sentinel part index marking output positions not covered by any part.
pub const NO_PART: u8 = u8::MAX;

/// Per-part transform and mask at one feature resolution. An absent affine
/// goes with an all-zero mask: the part contributes nothing.
#[derive(Debug, Clone)]
pub struct PlanPart {
    pub part: BodyPart,
    pub affine: Option<AffineParams>,
    pub mask: RegionMask,
}

/// The ten per-part (affine, mask) entries at a stated feature resolution.
#[derive(Debug, Clone)]
pub struct WarpPlan {
    pub h: usize,
    pub w: usize,
    pub parts: Vec<PlanPart>,
}

impl WarpPlan {
    pub fn new(h: usize, w: usize, parts: Vec<PlanPart>) -> Result<Self> {
        if parts.len() != PART_COUNT {
            return Err(Error::invalid_argument(format!(
                "warp plan needs {PART_COUNT} parts, got {}",
                parts.len()
            )));
        }
        for p in &parts {
            if p.mask.h != h || p.mask.w != w {
                return Err(Error::shape_mismatch(format!(
                    "mask for {} is {}x{}, plan is {}x{}",
                    p.part.name(),
                    p.mask.h,
                    p.mask.w,
                    h,
                    w
                )));
            }
            if p.affine.is_none() && !p.mask.is_all_zero() {
                return Err(Error::invalid_argument(format!(
                    "part {} has no transform but a non-zero mask",
                    p.part.name()
                )));
            }
        }
        Ok(WarpPlan { h, w, parts })
    }

    pub fn active_parts(&self) -> impl Iterator<Item = &PlanPart> {
        self.parts.iter().filter(|p| p.affine.is_some())
    }

    pub fn empty_parts(&self) -> impl Iterator<Item = BodyPart> + '_ {
        self.parts.iter().filter(|p| p.affine.is_none()).map(|p| p.part)
    }
}

/// Records which part supplied each output element, for routing gradients.
#[derive(Debug, Clone)]
pub struct ArgmaxField {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub idx: Vec<u8>,
}

/// Warps the masked feature map through `params` by inverse bilinear
/// sampling. All channels of a source point move together.
pub fn deform_masked(
    f: &FeatureMap,
    mask: &RegionMask,
    params: &AffineParams,
) -> Result<FeatureMap> {
    if mask.h != f.h || mask.w != f.w {
        return Err(Error::shape_mismatch(format!(
            "mask {}x{} vs feature map {}x{}",
            mask.h, mask.w, f.h, f.w
        )));
    }
    let inv = invert_for_warp(params)?;
    let mut out = FeatureMap::zeros(f.h, f.w, f.c);
    for oy in 0..f.h {
        for ox in 0..f.w {
            let (sx, sy) = apply_affine(&inv, (ox as f64, oy as f64));
            sample_masked_into(f, mask, sx, sy, &mut out, oy, ox, 1.0);
        }
    }
    Ok(out)
}

fn invert_for_warp(params: &AffineParams) -> Result<AffineParams> {
    if params.det_linear().abs() < MIN_WARP_DET {
        return Err(Error::SingularTransform(format!(
            "|det A| = {:.3e} below {MIN_WARP_DET:.0e}",
            params.det_linear().abs()
        )));
    }
    params
        .inverse()
        .ok_or_else(|| Error::SingularTransform("transform is not invertible".into()))
}

/// Adds `scale` times the bilinear sample of the masked source at (sx, sy)
/// into `out[oy, ox, :]`. Out-of-extent corners contribute zero.
#[inline]
fn sample_masked_into(
    f: &FeatureMap,
    mask: &RegionMask,
    sx: f64,
    sy: f64,
    out: &mut FeatureMap,
    oy: usize,
    ox: usize,
    scale: f64,
) {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let dx = sx - x0;
    let dy = sy - y0;
    let corners = [
        (x0, y0, (1.0 - dx) * (1.0 - dy)),
        (x0 + 1.0, y0, dx * (1.0 - dy)),
        (x0, y0 + 1.0, (1.0 - dx) * dy),
        (x0 + 1.0, y0 + 1.0, dx * dy),
    ];
    for (cx, cy, weight) in corners {
        if weight == 0.0 || cx < 0.0 || cy < 0.0 {
            continue;
        }
        let (cx, cy) = (cx as usize, cy as usize);
        if cx >= f.w || cy >= f.h {
            continue;
        }
        let m = mask.at(cy, cx) as f64;
        if m == 0.0 {
            continue;
        }
        let coeff = scale * weight * m;
        for ch in 0..f.c {
            out.add(oy, ox, ch, coeff * f.at(cy, cx, ch));
        }
    }
}

/// Elementwise maximum over same-shaped feature maps.
pub fn merge_max(parts: &[FeatureMap]) -> Result<FeatureMap> {
    let first = parts
        .first()
        .ok_or_else(|| Error::invalid_argument("merge of empty part list"))?;
    for p in parts {
        if !p.same_shape(first) {
            return Err(Error::shape_mismatch(format!(
                "merge input {}x{}x{} vs {}x{}x{}",
                p.h, p.w, p.c, first.h, first.w, first.c
            )));
        }
    }
    let mut out = first.clone();
    for p in &parts[1..] {
        for (o, &v) in out.data.iter_mut().zip(p.data.iter()) {
            if v > *o {
                *o = v;
            }
        }
    }
    Ok(out)
}

/// Full deformable-skip forward pass: warps the feature map once per active
/// part and merges by elementwise maximum, recording the winning part for
/// the backward pass. Ties keep the lowest part index. A plan with no active
/// parts yields zeros.
pub fn deform_forward(f: &FeatureMap, plan: &WarpPlan) -> Result<(FeatureMap, ArgmaxField)> {
    if plan.h != f.h || plan.w != f.w {
        return Err(Error::shape_mismatch(format!(
            "plan {}x{} vs feature map {}x{}",
            plan.h, plan.w, f.h, f.w
        )));
    }
    let mut out = FeatureMap::zeros(f.h, f.w, f.c);
    let mut idx = vec![NO_PART; f.h * f.w * f.c];
    let mut first = true;
    for part in plan.active_parts() {
        let warped = deform_masked(f, &part.mask, part.affine.as_ref().unwrap())?;
        let part_idx = part.part as u8;
        if first {
            out = warped;
            idx.fill(part_idx);
            first = false;
        } else {
            for (i, (o, &v)) in out.data.iter_mut().zip(warped.data.iter()).enumerate() {
                if v > *o {
                    *o = v;
                    idx[i] = part_idx;
                }
            }
        }
    }
    if first {
        idx.fill(NO_PART);
    }
    Ok((out, ArgmaxField { h: f.h, w: f.w, c: f.c, idx }))
}

/// Backward pass of [`deform_forward`]: routes each output gradient to the
/// part that won the merge, then through the bilinear weights and mask back
/// to the source feature map.
pub fn deform_backward(
    grad_out: &FeatureMap,
    plan: &WarpPlan,
    f: &FeatureMap,
    saved_argmax: &ArgmaxField,
) -> Result<FeatureMap> {
    if saved_argmax.h != grad_out.h || saved_argmax.w != grad_out.w || saved_argmax.c != grad_out.c
    {
        return Err(Error::InvalidState(
            "argmax field does not match gradient shape".into(),
        ));
    }
    if f.h != grad_out.h || f.w != grad_out.w || f.c != grad_out.c {
        return Err(Error::InvalidState(
            "feature map does not match gradient shape".into(),
        ));
    }
    // inverse transforms per part, computed once
    let mut inverses: [Option<AffineParams>; PART_COUNT] = [None; PART_COUNT];
    for part in plan.active_parts() {
        inverses[part.part as usize] = Some(invert_for_warp(part.affine.as_ref().unwrap())?);
    }

    let mut grad_f = FeatureMap::zeros(f.h, f.w, f.c);
    for oy in 0..grad_out.h {
        for ox in 0..grad_out.w {
            for ch in 0..grad_out.c {
                let part_idx = saved_argmax.idx[(oy * grad_out.w + ox) * grad_out.c + ch];
                if part_idx == NO_PART {
                    continue;
                }
                let g = grad_out.at(oy, ox, ch);
                if g == 0.0 {
                    continue;
                }
                let inv = inverses[part_idx as usize]
                    .as_ref()
                    .ok_or_else(|| Error::InvalidState("argmax names an empty part".into()))?;
                let mask = &plan.parts[part_idx as usize].mask;
                let (sx, sy) = apply_affine(inv, (ox as f64, oy as f64));
                scatter_gradient(&mut grad_f, mask, sx, sy, ch, g);
            }
        }
    }
    Ok(grad_f)
}

#[inline]
fn scatter_gradient(
    grad_f: &mut FeatureMap,
    mask: &RegionMask,
    sx: f64,
    sy: f64,
    ch: usize,
    g: f64,
) {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let dx = sx - x0;
    let dy = sy - y0;
    let corners = [
        (x0, y0, (1.0 - dx) * (1.0 - dy)),
        (x0 + 1.0, y0, dx * (1.0 - dy)),
        (x0, y0 + 1.0, (1.0 - dx) * dy),
        (x0 + 1.0, y0 + 1.0, dx * dy),
    ];
    for (cx, cy, weight) in corners {
        if weight == 0.0 || cx < 0.0 || cy < 0.0 {
            continue;
        }
        let (cx, cy) = (cx as usize, cy as usize);
        if cx >= grad_f.w || cy >= grad_f.h {
            continue;
        }
        let m = mask.at(cy, cx) as f64;
        if m == 0.0 {
            continue;
        }
        grad_f.add(cy, cx, ch, g * weight * m);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ones_mask(h: usize, w: usize) -> RegionMask {
        let mut m = RegionMask::zeros(Some(BodyPart::Torso), w, h);
        m.values.fill(1);
        m
    }

    fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> FeatureMap {
        let mut f = FeatureMap::zeros(h, w, c);
        for v in f.data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        f
    }

    #[test]
    fn identity_warp_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_map(&mut rng, 6, 5, 3);
        let out = deform_masked(&f, &ones_mask(6, 5), &AffineParams::IDENTITY).unwrap();
        assert_eq!(out, f);
    }

    #[test]
    fn mask_zeroes_left_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_map(&mut rng, 4, 6, 2);
        let mut mask = ones_mask(4, 6);
        for y in 0..4 {
            for x in 0..3 {
                mask.values[y * 6 + x] = 0;
            }
        }
        let out = deform_masked(&f, &mask, &AffineParams::IDENTITY).unwrap();
        for y in 0..4 {
            for x in 0..6 {
                for ch in 0..2 {
                    let want = if x < 3 { 0.0 } else { f.at(y, x, ch) };
                    assert_eq!(out.at(y, x, ch), want);
                }
            }
        }
    }

    #[test]
    fn integer_translation_matches_shift_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_map(&mut rng, 5, 7, 2);
        let shift =
            AffineParams { a11: 1.0, a12: 0.0, tx: 1.0, a21: 0.0, a22: 1.0, ty: 0.0 };
        let out = deform_masked(&f, &ones_mask(5, 7), &shift).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                for ch in 0..2 {
                    let want = if x == 0 { 0.0 } else { f.at(y, x - 1, ch) };
                    assert_eq!(out.at(y, x, ch), want, "pixel ({y},{x},{ch})");
                }
            }
        }
    }

    #[test]
    fn singular_transform_is_rejected() {
        let f = FeatureMap::zeros(4, 4, 1);
        let squash = AffineParams { a11: 0.0, a12: 0.0, tx: 0.0, a21: 0.0, a22: 1.0, ty: 0.0 };
        let err = deform_masked(&f, &ones_mask(4, 4), &squash).unwrap_err();
        assert!(matches!(err, Error::SingularTransform(_)));
    }

    #[test]
    fn warp_is_linear_in_features() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f1 = random_map(&mut rng, 6, 6, 2);
        let f2 = random_map(&mut rng, 6, 6, 2);
        let params = AffineParams {
            a11: 0.9,
            a12: 0.2,
            tx: 0.7,
            a21: -0.15,
            a22: 1.1,
            ty: -0.4,
        };
        let mut mask = ones_mask(6, 6);
        mask.values[7] = 0;
        mask.values[22] = 0;
        let (a, b) = (1.7, -0.6);
        let mut combined = FeatureMap::zeros(6, 6, 2);
        for (o, (&x1, &x2)) in combined
            .data
            .iter_mut()
            .zip(f1.data.iter().zip(f2.data.iter()))
        {
            *o = a * x1 + b * x2;
        }
        let w_comb = deform_masked(&combined, &mask, &params).unwrap();
        let w1 = deform_masked(&f1, &mask, &params).unwrap();
        let w2 = deform_masked(&f2, &mask, &params).unwrap();
        for i in 0..w_comb.data.len() {
            let want = a * w1.data[i] + b * w2.data[i];
            assert!((w_comb.data[i] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn merge_max_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = random_map(&mut rng, 3, 3, 2);
        let single = merge_max(std::slice::from_ref(&f)).unwrap();
        assert_eq!(single, f);

        let zero = FeatureMap::zeros(3, 3, 2);
        let merged = merge_max(&[f.clone(), zero]).unwrap();
        for (m, &v) in merged.data.iter().zip(f.data.iter()) {
            assert_eq!(*m, v.max(0.0));
        }

        let bad = FeatureMap::zeros(2, 3, 2);
        assert!(merge_max(&[f, bad]).is_err());
        assert!(merge_max(&[]).is_err());
    }

    #[test]
    fn merge_max_matches_scalar_loop_and_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let maps: Vec<FeatureMap> = (0..10).map(|_| random_map(&mut rng, 4, 5, 3)).collect();
        let merged = merge_max(&maps).unwrap();
        for i in 0..merged.data.len() {
            let mut want = f64::NEG_INFINITY;
            for m in &maps {
                if m.data[i] > want {
                    want = m.data[i];
                }
            }
            assert_eq!(merged.data[i], want);
        }
        let mut reversed = maps.clone();
        reversed.reverse();
        assert_eq!(merge_max(&reversed).unwrap(), merged);
        // duplicating inputs changes nothing
        let mut doubled = maps.clone();
        doubled.extend(maps.iter().cloned());
        assert_eq!(merge_max(&doubled).unwrap(), merged);
    }

    /// Test-only average merge; kept out of the trained pipeline.
    fn merge_avg(parts: &[FeatureMap]) -> FeatureMap {
        let mut out = FeatureMap::zeros(parts[0].h, parts[0].w, parts[0].c);
        for p in parts {
            for (o, &v) in out.data.iter_mut().zip(p.data.iter()) {
                *o += v;
            }
        }
        for o in out.data.iter_mut() {
            *o /= parts.len() as f64;
        }
        out
    }

    #[test]
    fn average_merge_differs_from_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let maps: Vec<FeatureMap> = (0..3).map(|_| random_map(&mut rng, 3, 3, 1)).collect();
        let mx = merge_max(&maps).unwrap();
        let avg = merge_avg(&maps);
        assert!(mx.data.iter().zip(avg.data.iter()).any(|(a, b)| a != b));
        // the max dominates the average pointwise
        for (a, b) in mx.data.iter().zip(avg.data.iter()) {
            assert!(a >= b);
        }
    }

    fn plan_with(parts: Vec<(BodyPart, Option<AffineParams>, RegionMask)>) -> WarpPlan {
        use crate::region::ALL_PARTS;
        let (h, w) = (parts[0].2.h, parts[0].2.w);
        let mut entries: Vec<PlanPart> = ALL_PARTS
            .iter()
            .map(|&p| PlanPart {
                part: p,
                affine: None,
                mask: RegionMask::zeros(Some(p), w, h),
            })
            .collect();
        for (part, affine, mask) in parts {
            entries[part as usize] = PlanPart { part, affine, mask };
        }
        WarpPlan::new(h, w, entries).unwrap()
    }

    #[test]
    fn torso_only_plan_reproduces_features_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let f = random_map(&mut rng, 6, 6, 3);
        let plan = plan_with(vec![(
            BodyPart::Torso,
            Some(AffineParams::IDENTITY),
            ones_mask(6, 6),
        )]);
        let (out, argmax) = deform_forward(&f, &plan).unwrap();
        assert_eq!(out, f);
        assert!(argmax.idx.iter().all(|&i| i == BodyPart::Torso as u8));
    }

    #[test]
    fn all_empty_plan_yields_zeros() {
        let f = FeatureMap::zeros(4, 4, 2);
        let plan = plan_with(vec![(
            BodyPart::Torso,
            None,
            RegionMask::zeros(Some(BodyPart::Torso), 4, 4),
        )]);
        let (out, argmax) = deform_forward(&f, &plan).unwrap();
        assert!(out.data.iter().all(|&v| v == 0.0));
        assert!(argmax.idx.iter().all(|&i| i == NO_PART));
    }

    #[test]
    fn single_part_identity_gradient_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = random_map(&mut rng, 5, 5, 2);
        let plan = plan_with(vec![(
            BodyPart::Torso,
            Some(AffineParams::IDENTITY),
            ones_mask(5, 5),
        )]);
        let (_, argmax) = deform_forward(&f, &plan).unwrap();
        let grad = random_map(&mut rng, 5, 5, 2);
        let back = deform_backward(&grad, &plan, &f, &argmax).unwrap();
        assert_eq!(back, grad);
    }

    #[test]
    fn zero_gradient_stays_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let f = random_map(&mut rng, 5, 5, 2);
        let plan = plan_with(vec![(
            BodyPart::Torso,
            Some(AffineParams::IDENTITY),
            ones_mask(5, 5),
        )]);
        let (_, argmax) = deform_forward(&f, &plan).unwrap();
        let grad = FeatureMap::zeros(5, 5, 2);
        let back = deform_backward(&grad, &plan, &f, &argmax).unwrap();
        assert!(back.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_argmax_is_rejected() {
        let f = FeatureMap::zeros(4, 4, 2);
        let plan = plan_with(vec![(
            BodyPart::Torso,
            Some(AffineParams::IDENTITY),
            ones_mask(4, 4),
        )]);
        let (_, argmax) = deform_forward(&f, &plan).unwrap();
        let grad = FeatureMap::zeros(4, 5, 2);
        let err = deform_backward(&grad, &plan, &f, &argmax).unwrap_err();
        assert!(matches!(err, Error::InvalidState(_)));
    }

    #[test]
    fn two_part_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut f = random_map(&mut rng, 6, 6, 2);
        let mut mask_a = ones_mask(6, 6);
        let mut mask_b = ones_mask(6, 6);
        for i in 0..36 {
            if rng.random::<f64>() < 0.3 {
                mask_a.values[i] = 0;
            }
            if rng.random::<f64>() < 0.3 {
                mask_b.values[i] = 0;
            }
        }
        let plan = plan_with(vec![
            (
                BodyPart::Torso,
                Some(AffineParams {
                    a11: 1.05,
                    a12: 0.1,
                    tx: 0.4,
                    a21: -0.07,
                    a22: 0.95,
                    ty: -0.3,
                }),
                mask_a,
            ),
            (
                BodyPart::Head,
                Some(AffineParams {
                    a11: 0.9,
                    a12: -0.12,
                    tx: -0.6,
                    a21: 0.08,
                    a22: 1.1,
                    ty: 0.5,
                }),
                mask_b,
            ),
        ]);
        let probe = random_map(&mut rng, 6, 6, 2);
        let loss = |f: &FeatureMap| -> f64 {
            let (out, _) = deform_forward(f, &plan).unwrap();
            out.data.iter().zip(probe.data.iter()).map(|(a, b)| a * b).sum()
        };
        let (_, argmax) = deform_forward(&f, &plan).unwrap();
        let analytic = deform_backward(&probe, &plan, &f, &argmax).unwrap();
        let step = 1e-4;
        for i in 0..f.data.len() {
            let orig = f.data[i];
            f.data[i] = orig + step;
            let up = loss(&f);
            f.data[i] = orig - step;
            let down = loss(&f);
            f.data[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let a = analytic.data[i];
            let denom = a.abs().max(numeric.abs()).max(1e-3);
            assert!(
                (a - numeric).abs() / denom < 1e-5,
                "element {i}: analytic {a}, numeric {numeric}"
            );
        }
    }
}
