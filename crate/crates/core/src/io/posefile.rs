//! Pose JSON files: `{"width": W, "height": H, "joints": [[x, y, v]; 18]}`
//! with v ∈ {0, 1}.

use crate::error::{Error, Result};
use crate::pose::{Keypoint, Pose, JOINT_COUNT};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct PoseFileRaw {
    width: u32,
    height: u32,
    joints: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseFile {
    pub width: usize,
    pub height: usize,
    pub pose: Pose,
}

pub fn read_pose(path: impl AsRef<Path>) -> Result<PoseFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let raw: PoseFileRaw = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    if raw.joints.len() != JOINT_COUNT {
        return Err(Error::Parse(format!(
            "{}: joints: expected {JOINT_COUNT} joints, got {}",
            path.display(),
            raw.joints.len()
        )));
    }
    let mut joints = [Keypoint::hidden(); JOINT_COUNT];
    for (i, triple) in raw.joints.iter().enumerate() {
        let [x, y, v] = *triple;
        if v != 0.0 && v != 1.0 {
            return Err(Error::Parse(format!(
                "{}: joints[{i}]: visibility must be 0 or 1, got {v}",
                path.display()
            )));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::Parse(format!(
                "{}: joints[{i}]: non-finite coordinate",
                path.display()
            )));
        }
        joints[i] = Keypoint { x, y, visible: v == 1.0 };
    }
    Ok(PoseFile { width: raw.width as usize, height: raw.height as usize, pose: Pose::new(joints) })
}

pub fn write_pose(path: impl AsRef<Path>, pose: &Pose, width: usize, height: usize) -> Result<()> {
    let raw = PoseFileRaw {
        width: width as u32,
        height: height as u32,
        joints: pose
            .joints
            .iter()
            .map(|k| [k.x, k.y, if k.visible { 1.0 } else { 0.0 }])
            .collect(),
    };
    let text = serde_json::to_string_pretty(&raw)
        .map_err(|e| Error::Parse(format!("encode pose: {e}")))?;
    fs::write(path, text)?;
    Ok(())
}
