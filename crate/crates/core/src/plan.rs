//! Glue from pose pairs to per-resolution warp plans.
//!
//! For each body part present in both poses, the four corner correspondences
//! determine an affine transform at image resolution; transform and mask are
//! then rescaled to every feature resolution the generator needs. Parts with
//! missing joints, degenerate corner geometry, or a non-invertible transform
//! contribute nothing (empty mask, no transform).

use crate::affine::{fit_affine, scale_affine, AffineParams};
use crate::error::{Error, Result};
use crate::region::{
    apply_symmetry_fallback, decompose_regions, region_mask, scale_mask, BodyPart, RegionMask,
    RegionSet, ALL_PARTS,
};
use crate::pose::Pose;
use crate::warp::{PlanPart, WarpPlan};

/// Transform below this linear-part determinant cannot be inverted for
/// warping and leaves its part empty.
const MIN_PLAN_DET: f64 = 1e-8;

/// Why a part has no transform, when it has none.
#[derive(Debug, Clone)]
pub enum PartFit {
    Fitted(AffineParams),
    /// region absent in one or both poses
    MissingJoints,
    /// corner geometry rejected by the least-squares fit
    Degenerate(String),
    /// fitted transform is not invertible at warp time
    NotInvertible,
}

#[derive(Debug, Clone)]
pub struct PartOutcome {
    pub part: BodyPart,
    pub fit: PartFit,
}

/// Fits the per-part transforms between two region sets at image resolution.
pub fn fit_region_transforms(regions_a: &RegionSet, regions_b: &RegionSet) -> Vec<PartOutcome> {
    ALL_PARTS
        .iter()
        .map(|&part| {
            let ra = regions_a.get(part);
            let rb = regions_b.get(part);
            let fit = match (ra.corners, rb.corners) {
                (Some(src), Some(dst)) => match fit_affine(&src, &dst) {
                    Ok(params) => {
                        if params.det_linear().abs() < MIN_PLAN_DET {
                            PartFit::NotInvertible
                        } else {
                            PartFit::Fitted(params)
                        }
                    }
                    Err(Error::DegenerateGeometry(msg)) => PartFit::Degenerate(msg),
                    Err(e) => PartFit::Degenerate(e.to_string()),
                },
                _ => PartFit::MissingJoints,
            };
            PartOutcome { part, fit }
        })
        .collect()
}

/// Builds the warp plan at one feature resolution from image-resolution fits.
///
/// Masks come from the source-pose regions, rasterized at image resolution
/// and downsampled; transforms are conjugated to the feature scale. A part
/// whose scaled mask is empty is dropped entirely.
pub fn build_warp_plan(
    regions_a: &RegionSet,
    outcomes: &[PartOutcome],
    image_w: usize,
    image_h: usize,
    feat_w: usize,
    feat_h: usize,
) -> Result<WarpPlan> {
    let sx = feat_w as f64 / image_w as f64;
    let sy = feat_h as f64 / image_h as f64;
    let mut parts = Vec::with_capacity(ALL_PARTS.len());
    for outcome in outcomes {
        let part = outcome.part;
        let entry = match &outcome.fit {
            PartFit::Fitted(params) => {
                let scaled = scale_affine(params, sx, sy)?;
                let full_mask = region_mask(regions_a.get(part), image_w, image_h);
                let mask = scale_mask(&full_mask, feat_w, feat_h)?;
                if mask.is_all_zero() || scaled.det_linear().abs() < MIN_PLAN_DET {
                    PlanPart {
                        part,
                        affine: None,
                        mask: RegionMask::zeros(Some(part), feat_w, feat_h),
                    }
                } else {
                    PlanPart { part, affine: Some(scaled), mask }
                }
            }
            _ => PlanPart {
                part,
                affine: None,
                mask: RegionMask::zeros(Some(part), feat_w, feat_h),
            },
        };
        parts.push(entry);
    }
    WarpPlan::new(feat_h, feat_w, parts)
}

/// Region sets for a pose pair with the left/right twin fallback applied to
/// both sides (each substitution reads the original sets).
pub fn paired_regions(
    pose_a: &Pose,
    pose_b: &Pose,
    width: usize,
    height: usize,
) -> (RegionSet, RegionSet) {
    let raw_a = decompose_regions(pose_a, width, height);
    let raw_b = decompose_regions(pose_b, width, height);
    let fixed_a = apply_symmetry_fallback(&raw_a, &raw_b);
    let fixed_b = apply_symmetry_fallback(&raw_b, &raw_a);
    (fixed_a, fixed_b)
}

/// Foreground evaluation mask: the union of all non-torso region masks (the
/// torso spans the whole image and would make masking a no-op).
pub fn evaluation_mask(regions: &RegionSet, width: usize, height: usize) -> RegionMask {
    let masks: Vec<RegionMask> = regions
        .regions
        .iter()
        .filter(|r| r.part != BodyPart::Torso)
        .map(|r| region_mask(r, width, height))
        .collect();
    let refs: Vec<&RegionMask> = masks.iter().collect();
    RegionMask::union(&refs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{JointId, Keypoint};

    fn full_pose() -> Pose {
        let mut joints = [Keypoint::hidden(); 18];
        let set = |joints: &mut [Keypoint; 18], id: JointId, x: f64, y: f64| {
            joints[id as usize] = Keypoint::visible_at(x, y);
        };
        set(&mut joints, JointId::Nose, 16.0, 7.0);
        set(&mut joints, JointId::Neck, 16.0, 12.0);
        set(&mut joints, JointId::RightShoulder, 11.0, 13.0);
        set(&mut joints, JointId::RightElbow, 9.0, 22.0);
        set(&mut joints, JointId::RightWrist, 8.0, 30.0);
        set(&mut joints, JointId::LeftShoulder, 21.0, 13.0);
        set(&mut joints, JointId::LeftElbow, 23.0, 22.0);
        set(&mut joints, JointId::LeftWrist, 24.0, 30.0);
        set(&mut joints, JointId::RightHip, 12.5, 33.0);
        set(&mut joints, JointId::RightKnee, 12.0, 45.0);
        set(&mut joints, JointId::RightAnkle, 11.5, 57.0);
        set(&mut joints, JointId::LeftHip, 19.5, 33.0);
        set(&mut joints, JointId::LeftKnee, 20.0, 45.0);
        set(&mut joints, JointId::LeftAnkle, 20.5, 57.0);
        set(&mut joints, JointId::RightEye, 14.5, 6.0);
        set(&mut joints, JointId::LeftEye, 17.5, 6.0);
        set(&mut joints, JointId::RightEar, 13.0, 7.0);
        set(&mut joints, JointId::LeftEar, 19.0, 7.0);
        Pose::new(joints)
    }

    #[test]
    fn identical_poses_fit_identity_transforms() {
        let pose = full_pose();
        let (ra, rb) = paired_regions(&pose, &pose, 32, 64);
        let outcomes = fit_region_transforms(&ra, &rb);
        for o in &outcomes {
            match &o.fit {
                PartFit::Fitted(p) => {
                    let id = AffineParams::IDENTITY.as_array();
                    for (g, w) in p.as_array().iter().zip(id.iter()) {
                        assert!((g - w).abs() < 1e-6, "{:?}: {p:?}", o.part);
                    }
                }
                other => panic!("{:?} not fitted: {other:?}", o.part),
            }
        }
    }

    #[test]
    fn all_parts_active_for_a_full_pose() {
        let pose = full_pose();
        let (ra, rb) = paired_regions(&pose, &pose.translated(1.5, -2.0), 32, 64);
        let outcomes = fit_region_transforms(&ra, &rb);
        let plan = build_warp_plan(&ra, &outcomes, 32, 64, 32, 64).unwrap();
        assert_eq!(plan.active_parts().count(), 10);
        // and at a 16x smaller resolution some limb masks may vanish but the
        // torso always stays
        let plan_small = build_warp_plan(&ra, &outcomes, 32, 64, 2, 4).unwrap();
        assert!(plan_small
            .active_parts()
            .any(|p| p.part == BodyPart::Torso));
    }

    #[test]
    fn missing_joints_leave_parts_empty() {
        let mut pose_a = full_pose();
        pose_a.joints[JointId::LeftWrist as usize] = Keypoint::hidden();
        let pose_b = full_pose();
        // twin fallback repairs the left lower arm from the right one
        let (ra, rb) = paired_regions(&pose_a, &pose_b, 32, 64);
        assert!(!ra.get(BodyPart::LeftLowerArm).is_empty());
        assert_eq!(
            ra.get(BodyPart::LeftLowerArm).corners,
            ra.get(BodyPart::RightLowerArm).corners
        );
        let outcomes = fit_region_transforms(&ra, &rb);
        let plan = build_warp_plan(&ra, &outcomes, 32, 64, 32, 64).unwrap();
        assert_eq!(plan.active_parts().count(), 10);

        // hide the whole right arm too: now nothing to mirror from
        let mut pose_c = full_pose();
        pose_c.joints[JointId::LeftWrist as usize] = Keypoint::hidden();
        pose_c.joints[JointId::RightWrist as usize] = Keypoint::hidden();
        let (rc, rd) = paired_regions(&pose_c, &pose_b, 32, 64);
        let outcomes = fit_region_transforms(&rc, &rd);
        let plan = build_warp_plan(&rc, &outcomes, 32, 64, 32, 64).unwrap();
        let empty: Vec<BodyPart> = plan.empty_parts().collect();
        assert!(empty.contains(&BodyPart::LeftLowerArm));
        assert!(empty.contains(&BodyPart::RightLowerArm));
    }

    #[test]
    fn evaluation_mask_covers_figure_not_background() {
        let pose = full_pose();
        let regions = decompose_regions(&pose, 32, 64);
        let mask = evaluation_mask(&regions, 32, 64);
        let area = mask.area();
        assert!(area > 0 && area < 32 * 64, "area {area}");
        // head pixels are covered
        assert_eq!(mask.at(7, 16), 1);
        // far corner is background
        assert_eq!(mask.at(63, 31), 0);
    }
}
