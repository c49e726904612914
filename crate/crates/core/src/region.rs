//! Rigid body regions and their binary masks.
//!
//! The articulated body decomposes into 10 rectangular regions: the head
//! (axis-aligned box of the visible head joints), the torso (the full image,
//! so background texture travels with it), and 8 limb segments (rotated
//! rectangles around the two joints of each segment). A region whose
//! defining joints are not all visible stays empty; empty regions produce
//! all-zero masks.

use crate::error::Result;
use crate::pose::{JointId, Pose};

pub const PART_COUNT: usize = 10;

/// The 10 rigid parts, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum BodyPart {
    Head = 0,
    Torso = 1,
    LeftUpperArm = 2,
    RightUpperArm = 3,
    LeftLowerArm = 4,
    RightLowerArm = 5,
    LeftUpperLeg = 6,
    RightUpperLeg = 7,
    LeftLowerLeg = 8,
    RightLowerLeg = 9,
}

pub const ALL_PARTS: [BodyPart; PART_COUNT] = [
    BodyPart::Head,
    BodyPart::Torso,
    BodyPart::LeftUpperArm,
    BodyPart::RightUpperArm,
    BodyPart::LeftLowerArm,
    BodyPart::RightLowerArm,
    BodyPart::LeftUpperLeg,
    BodyPart::RightUpperLeg,
    BodyPart::LeftLowerLeg,
    BodyPart::RightLowerLeg,
];

impl BodyPart {
    pub fn name(self) -> &'static str {
        match self {
            BodyPart::Head => "head",
            BodyPart::Torso => "torso",
            BodyPart::LeftUpperArm => "left-upper-arm",
            BodyPart::RightUpperArm => "right-upper-arm",
            BodyPart::LeftLowerArm => "left-lower-arm",
            BodyPart::RightLowerArm => "right-lower-arm",
            BodyPart::LeftUpperLeg => "left-upper-leg",
            BodyPart::RightUpperLeg => "right-upper-leg",
            BodyPart::LeftLowerLeg => "left-lower-leg",
            BodyPart::RightLowerLeg => "right-lower-leg",
        }
    }

    /// The left/right twin of a limb part; None for head and torso.
    pub fn mirror(self) -> Option<BodyPart> {
        match self {
            BodyPart::Head | BodyPart::Torso => None,
            BodyPart::LeftUpperArm => Some(BodyPart::RightUpperArm),
            BodyPart::RightUpperArm => Some(BodyPart::LeftUpperArm),
            BodyPart::LeftLowerArm => Some(BodyPart::RightLowerArm),
            BodyPart::RightLowerArm => Some(BodyPart::LeftLowerArm),
            BodyPart::LeftUpperLeg => Some(BodyPart::RightUpperLeg),
            BodyPart::RightUpperLeg => Some(BodyPart::LeftUpperLeg),
            BodyPart::LeftLowerLeg => Some(BodyPart::RightLowerLeg),
            BodyPart::RightLowerLeg => Some(BodyPart::LeftLowerLeg),
        }
    }

    /// The two joints spanning a limb segment; None for head and torso.
    fn limb_joints(self) -> Option<(JointId, JointId)> {
        match self {
            BodyPart::LeftUpperArm => Some((JointId::LeftShoulder, JointId::LeftElbow)),
            BodyPart::RightUpperArm => Some((JointId::RightShoulder, JointId::RightElbow)),
            BodyPart::LeftLowerArm => Some((JointId::LeftElbow, JointId::LeftWrist)),
            BodyPart::RightLowerArm => Some((JointId::RightElbow, JointId::RightWrist)),
            BodyPart::LeftUpperLeg => Some((JointId::LeftHip, JointId::LeftKnee)),
            BodyPart::RightUpperLeg => Some((JointId::RightHip, JointId::RightKnee)),
            BodyPart::LeftLowerLeg => Some((JointId::LeftKnee, JointId::LeftAnkle)),
            BodyPart::RightLowerLeg => Some((JointId::RightKnee, JointId::RightAnkle)),
            _ => None,
        }
    }
}

const HEAD_JOINTS: [JointId; 6] = [
    JointId::Nose,
    JointId::Neck,
    JointId::RightEye,
    JointId::LeftEye,
    JointId::RightEar,
    JointId::LeftEar,
];

/// Shoulder/hip quad whose diagonals set the limb minor-axis length.
const TORSO_QUAD: [JointId; 4] = [
    JointId::LeftShoulder,
    JointId::RightShoulder,
    JointId::RightHip,
    JointId::LeftHip,
];

pub type Point = (f64, f64);

/// One body region: four corners of a (possibly rotated) rectangle, or empty.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyRegion {
    pub part: BodyPart,
    pub corners: Option<[Point; 4]>,
}

impl BodyRegion {
    pub fn empty(part: BodyPart) -> Self {
        BodyRegion { part, corners: None }
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_none()
    }
}

/// All 10 regions, ordered by part.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSet {
    pub regions: Vec<BodyRegion>,
}

impl RegionSet {
    #[inline]
    pub fn get(&self, part: BodyPart) -> &BodyRegion {
        &self.regions[part as usize]
    }
}

/// Binary mask at a stated resolution. The `part` tag records which region
/// produced it; derived masks (such as evaluation-time unions) carry None.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub part: Option<BodyPart>,
    pub w: usize,
    pub h: usize,
    pub values: Vec<u8>,
}

impl RegionMask {
    pub fn zeros(part: Option<BodyPart>, width: usize, height: usize) -> Self {
        RegionMask { part, w: width, h: height, values: vec![0; width * height] }
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> u8 {
        self.values[y * self.w + x]
    }

    pub fn area(&self) -> usize {
        self.values.iter().map(|&v| v as usize).sum()
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }

    /// Pixelwise OR of several same-sized masks.
    pub fn union(masks: &[&RegionMask]) -> RegionMask {
        assert!(!masks.is_empty());
        let (w, h) = (masks[0].w, masks[0].h);
        let mut out = RegionMask::zeros(None, w, h);
        for m in masks {
            assert!(m.w == w && m.h == h);
            for (o, &v) in out.values.iter_mut().zip(m.values.iter()) {
                *o |= v;
            }
        }
        out
    }
}

/// Decomposes `pose` into the 10 regions on a `width`×`height` canvas.
pub fn decompose_regions(pose: &Pose, width: usize, height: usize) -> RegionSet {
    let minor_half = limb_minor_half_extent(pose, width, height);
    let regions = ALL_PARTS
        .iter()
        .map(|&part| match part {
            BodyPart::Head => head_region(pose),
            BodyPart::Torso => torso_region(pose, width, height),
            limb => limb_region(pose, limb, minor_half),
        })
        .collect();
    RegionSet { regions }
}

/// Half of the limb minor-axis length: one sixth of the mean shoulder/hip
/// quad diagonal, or one twelfth of the image diagonal when the quad is
/// incomplete.
fn limb_minor_half_extent(pose: &Pose, width: usize, height: usize) -> f64 {
    let quad: Vec<_> = TORSO_QUAD.iter().map(|&id| pose.joint(id)).collect();
    if quad.iter().all(|k| k.visible) {
        let d1 = dist((quad[0].x, quad[0].y), (quad[2].x, quad[2].y));
        let d2 = dist((quad[1].x, quad[1].y), (quad[3].x, quad[3].y));
        (d1 + d2) / 2.0 / 6.0
    } else {
        let diag = ((width * width + height * height) as f64).sqrt();
        diag / 12.0
    }
}

fn dist(a: Point, b: Point) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (dx * dx + dy * dy).sqrt()
}

fn head_region(pose: &Pose) -> BodyRegion {
    let visible: Vec<_> = HEAD_JOINTS
        .iter()
        .map(|&id| pose.joint(id))
        .filter(|k| k.visible)
        .collect();
    if visible.len() < 2 {
        return BodyRegion::empty(BodyPart::Head);
    }
    let min_x = visible.iter().map(|k| k.x).fold(f64::INFINITY, f64::min);
    let max_x = visible.iter().map(|k| k.x).fold(f64::NEG_INFINITY, f64::max);
    let min_y = visible.iter().map(|k| k.y).fold(f64::INFINITY, f64::min);
    let max_y = visible.iter().map(|k| k.y).fold(f64::NEG_INFINITY, f64::max);
    BodyRegion {
        part: BodyPart::Head,
        corners: Some([(min_x, min_y), (max_x, min_y), (max_x, max_y), (min_x, max_y)]),
    }
}

fn torso_region(pose: &Pose, width: usize, height: usize) -> BodyRegion {
    if !TORSO_QUAD.iter().all(|&id| pose.joint(id).visible) {
        return BodyRegion::empty(BodyPart::Torso);
    }
    let (w, h) = (width as f64 - 1.0, height as f64 - 1.0);
    BodyRegion {
        part: BodyPart::Torso,
        corners: Some([(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)]),
    }
}

fn limb_region(pose: &Pose, part: BodyPart, minor_half: f64) -> BodyRegion {
    let (ja, jb) = part.limb_joints().expect("limb part");
    let a = pose.joint(ja);
    let b = pose.joint(jb);
    if !a.visible || !b.visible {
        return BodyRegion::empty(part);
    }
    let len = dist((a.x, a.y), (b.x, b.y));
    // unit normal to the joint-to-joint axis; degenerate segments keep a
    // fixed normal so the (zero-area) rectangle is still well formed
    let (nx, ny) = if len > 0.0 {
        (-(b.y - a.y) / len, (b.x - a.x) / len)
    } else {
        (0.0, 1.0)
    };
    let m = minor_half;
    BodyRegion {
        part,
        corners: Some([
            (a.x - m * nx, a.y - m * ny),
            (b.x - m * nx, b.y - m * ny),
            (b.x + m * nx, b.y + m * ny),
            (a.x + m * nx, a.y + m * ny),
        ]),
    }
}

/// Rasterizes a region into a binary mask. Pixel (row, col) is tested at
/// continuous coordinates (col, row); the rectangle boundary is inclusive.
pub fn region_mask(region: &BodyRegion, width: usize, height: usize) -> RegionMask {
    let mut mask = RegionMask::zeros(Some(region.part), width, height);
    let corners = match region.corners {
        Some(c) => c,
        None => return mask,
    };
    // project onto the two edge directions of the rectangle
    let origin = corners[0];
    let u = (corners[1].0 - origin.0, corners[1].1 - origin.1);
    let v = (corners[3].0 - origin.0, corners[3].1 - origin.1);
    let uu = u.0 * u.0 + u.1 * u.1;
    let vv = v.0 * v.0 + v.1 * v.1;
    for row in 0..height {
        for col in 0..width {
            let px = col as f64 - origin.0;
            let py = row as f64 - origin.1;
            let tu = px * u.0 + py * u.1;
            let tv = px * v.0 + py * v.1;
            if tu >= 0.0 && tu <= uu && tv >= 0.0 && tv <= vv {
                mask.values[row * width + col] = 1;
            }
        }
    }
    mask
}

/// Fills empty limb regions in `regions_a` from their left/right twin.
///
/// A substitution happens only when the twin limb in `regions_a` is present
/// and the same limb in `regions_b` is present (otherwise no transform could
/// be fitted through the substituted region). Head and torso are never
/// substituted. Idempotent.
pub fn apply_symmetry_fallback(regions_a: &RegionSet, regions_b: &RegionSet) -> RegionSet {
    let mut out = regions_a.clone();
    for &part in ALL_PARTS.iter() {
        let mirror = match part.mirror() {
            Some(m) => m,
            None => continue,
        };
        if regions_a.get(part).is_empty()
            && !regions_a.get(mirror).is_empty()
            && !regions_b.get(part).is_empty()
        {
            out.regions[part as usize].corners = regions_a.get(mirror).corners;
        }
    }
    out
}

/// Nearest-neighbour resampling of a binary mask to a new resolution.
///
/// Target pixel (ty, tx) reads source pixel (ty*h_src/h_dst, tx*w_src/w_dst),
/// rounded down.
pub fn scale_mask(mask: &RegionMask, new_width: usize, new_height: usize) -> Result<RegionMask> {
    if new_width == 0 || new_height == 0 {
        return Err(crate::error::Error::invalid_argument(format!(
            "mask target dimensions must be positive, got {new_width}x{new_height}"
        )));
    }
    let mut out = RegionMask::zeros(mask.part, new_width, new_height);
    for ty in 0..new_height {
        let sy = (ty * mask.h) / new_height;
        for tx in 0..new_width {
            let sx = (tx * mask.w) / new_width;
            out.values[ty * new_width + tx] = mask.at(sy, sx);
        }
    }
    Ok(out)
}
