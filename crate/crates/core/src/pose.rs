//! Keypoint poses and per-joint heat maps.
//!
//! A pose is a fixed set of 18 joints in the OpenPose COCO layout. Each
//! visible joint is rendered into its own 2D map that decays with the
//! distance from the joint, giving downstream consumers widespread
//! information about the joint location instead of a single hot pixel.

use crate::error::{Error, Result};
use crate::tensor::{FeatureMap, Grid};

pub const JOINT_COUNT: usize = 18;

/// Joint indices in the 18-point COCO layout (OpenPose ordering).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(usize)]
pub enum JointId {
    Nose = 0,
    Neck = 1,
    RightShoulder = 2,
    RightElbow = 3,
    RightWrist = 4,
    LeftShoulder = 5,
    LeftElbow = 6,
    LeftWrist = 7,
    RightHip = 8,
    RightKnee = 9,
    RightAnkle = 10,
    LeftHip = 11,
    LeftKnee = 12,
    LeftAnkle = 13,
    RightEye = 14,
    LeftEye = 15,
    RightEar = 16,
    LeftEar = 17,
}

/// One keypoint in image coordinates (origin top-left, x to the right,
/// y down). When `visible` is false the coordinates are ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn visible_at(x: f64, y: f64) -> Self {
        Keypoint { x, y, visible: true }
    }

    pub fn hidden() -> Self {
        Keypoint { x: 0.0, y: 0.0, visible: false }
    }
}

/// A full 18-joint pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose {
    pub joints: [Keypoint; JOINT_COUNT],
}

impl Pose {
    pub fn new(joints: [Keypoint; JOINT_COUNT]) -> Self {
        Pose { joints }
    }

    pub fn all_hidden() -> Self {
        Pose { joints: [Keypoint::hidden(); JOINT_COUNT] }
    }

    #[inline]
    pub fn joint(&self, id: JointId) -> Keypoint {
        self.joints[id as usize]
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose {
        let mut joints = self.joints;
        for j in joints.iter_mut() {
            if j.visible {
                j.x += dx;
                j.y += dy;
            }
        }
        Pose { joints }
    }
}

/// How the per-joint map decays with the distance `d` from the joint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeatmapKernel {
    /// exp(-d / sigma^2): unsquared Euclidean distance over sigma squared.
    #[default]
    DistanceOverSigmaSq,
    /// exp(-d^2 / sigma^2): squared-distance alternative.
    SquaredOverSigmaSq,
}

/// 18 per-joint maps at a common resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatMapStack {
    pub maps: Vec<Grid>,
    pub sigma: f64,
}

impl HeatMapStack {
    pub fn width(&self) -> usize {
        self.maps[0].cols
    }

    pub fn height(&self) -> usize {
        self.maps[0].rows
    }

    /// Repacks the stack as an H×W×18 feature map for network input.
    pub fn to_feature_map(&self) -> FeatureMap {
        let (h, w) = (self.height(), self.width());
        let mut out = FeatureMap::zeros(h, w, JOINT_COUNT);
        for (j, map) in self.maps.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    out.set(y, x, j, map.at(y, x));
                }
            }
        }
        out
    }
}

/// Renders the per-joint maps for `pose` on a `width`×`height` canvas.
///
/// Pixel (row, col) is evaluated at continuous coordinates (col, row). A map
/// for an invisible joint is identically zero.
pub fn heatmap_from_pose(
    pose: &Pose,
    width: usize,
    height: usize,
    sigma: f64,
) -> Result<HeatMapStack> {
    heatmap_from_pose_with(pose, width, height, sigma, HeatmapKernel::default())
}

/// As [`heatmap_from_pose`] with an explicit decay kernel.
pub fn heatmap_from_pose_with(
    pose: &Pose,
    width: usize,
    height: usize,
    sigma: f64,
    kernel: HeatmapKernel,
) -> Result<HeatMapStack> {
    if width == 0 || height == 0 {
        return Err(Error::invalid_argument(format!(
            "heat map dimensions must be positive, got {width}x{height}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::invalid_argument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let sigma_sq = sigma * sigma;
    let mut maps = Vec::with_capacity(JOINT_COUNT);
    for joint in pose.joints.iter() {
        let mut map = Grid::zeros(height, width);
        if joint.visible {
            for row in 0..height {
                for col in 0..width {
                    let dx = col as f64 - joint.x;
                    let dy = row as f64 - joint.y;
                    let dist_sq = dx * dx + dy * dy;
                    let arg = match kernel {
                        HeatmapKernel::DistanceOverSigmaSq => dist_sq.sqrt(),
                        HeatmapKernel::SquaredOverSigmaSq => dist_sq,
                    };
                    map.set(row, col, (-arg / sigma_sq).exp());
                }
            }
        }
        maps.push(map);
    }
    Ok(HeatMapStack { maps, sigma })
}
