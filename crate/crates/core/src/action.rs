//! Discretized keyframe actions and the workspace voxel grid they live on.
//!
//! Translation bins index voxels of the workspace grid with flat index
//! `(ix * V + iy) * V + iz`. Rotation bins split each Euler angle into 72
//! buckets of 5 degrees over `[0, 2π)`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROTATION_BINS: usize = 72;
pub const ROTATION_BIN_DEG: f64 = 360.0 / ROTATION_BINS as f64;

/// Axis-aligned workspace box; membership is half-open `[min, max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Workspace {
    /// 0.8 m cube over the table top at z = 0; at 20 voxels per axis every
    /// voxel is 4 cm and voxel centers fall on multiples of 4 cm in z.
    fn default() -> Self {
        Self {
            min: [-0.4, -0.4, -0.02],
            max: [0.4, 0.4, 0.78],
        }
    }
}

impl Workspace {
    pub fn validate(&self) -> Result<()> {
        for k in 0..3 {
            if !(self.max[k] - self.min[k] > 0.0) || !self.min[k].is_finite() || !self.max[k].is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "degenerate workspace bounds on axis {k}: [{}, {})",
                    self.min[k], self.max[k]
                )));
            }
        }
        Ok(())
    }

    pub fn extent(&self) -> Vector3<f64> {
        Vector3::new(self.max[0] - self.min[0], self.max[1] - self.min[1], self.max[2] - self.min[2])
    }

    pub fn pitch(&self, resolution: usize) -> Vector3<f64> {
        self.extent() / resolution as f64
    }

    /// Largest side length.
    pub fn max_extent(&self) -> f64 {
        self.extent().max()
    }

    pub fn voxel_of(&self, p: &Vector3<f64>, resolution: usize) -> Option<[usize; 3]> {
        let mut idx = [0; 3];
        for k in 0..3 {
            if !(p[k] >= self.min[k] && p[k] < self.max[k]) {
                return None;
            }
            let f = ((p[k] - self.min[k]) / (self.max[k] - self.min[k]) * resolution as f64).floor();
            idx[k] = (f as usize).min(resolution - 1);
        }
        Some(idx)
    }

    pub fn voxel_center(&self, idx: [usize; 3], resolution: usize) -> Vector3<f64> {
        let pitch = self.pitch(resolution);
        Vector3::new(
            self.min[0] + (idx[0] as f64 + 0.5) * pitch.x,
            self.min[1] + (idx[1] as f64 + 0.5) * pitch.y,
            self.min[2] + (idx[2] as f64 + 0.5) * pitch.z,
        )
    }

    /// Voxel center coordinates mapped to `[0, 1]`.
    pub fn normalized(&self, p: &Vector3<f64>) -> Vector3<f64> {
        let e = self.extent();
        Vector3::new(
            (p.x - self.min[0]) / e.x,
            (p.y - self.min[1]) / e.y,
            (p.z - self.min[2]) / e.z,
        )
    }

    /// Snaps a point to the center of its voxel (clamped into the workspace).
    pub fn snap(&self, p: &Vector3<f64>, resolution: usize) -> Vector3<f64> {
        let pitch = self.pitch(resolution);
        let mut idx = [0; 3];
        for k in 0..3 {
            let f = ((p[k] - self.min[k]) / pitch[k]).floor();
            idx[k] = f.clamp(0.0, resolution as f64 - 1.0) as usize;
        }
        self.voxel_center(idx, resolution)
    }
}

pub fn flat_index(idx: [usize; 3], resolution: usize) -> usize {
    (idx[0] * resolution + idx[1]) * resolution + idx[2]
}

pub fn unflatten_index(flat: usize, resolution: usize) -> [usize; 3] {
    [flat / (resolution * resolution), (flat / resolution) % resolution, flat % resolution]
}

pub fn angle_to_bin(radians: f64) -> usize {
    let deg = radians.to_degrees().rem_euclid(360.0);
    ((deg / ROTATION_BIN_DEG).floor() as usize) % ROTATION_BINS
}

/// Center angle of a rotation bin, in radians within `[0, 2π)`.
pub fn bin_to_angle(bin: usize) -> f64 {
    ((bin as f64 + 0.5) * ROTATION_BIN_DEG).to_radians()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteAction {
    pub translation_bin: usize,
    pub rotation_bins: [usize; 3],
    pub openness: u8,
    pub collision: u8,
}

impl DiscreteAction {
    /// Bins a continuous end-effector pose (position and Euler angles).
    pub fn from_pose(
        position: &Vector3<f64>,
        euler: [f64; 3],
        open: bool,
        collision: bool,
        workspace: &Workspace,
        resolution: usize,
    ) -> Result<Self> {
        let idx = workspace
            .voxel_of(position, resolution)
            .ok_or_else(|| Error::IndexOutOfRange(format!("pose {position:?} outside the workspace")))?;
        Ok(Self {
            translation_bin: flat_index(idx, resolution),
            rotation_bins: euler.map(angle_to_bin),
            openness: open as u8,
            collision: collision as u8,
        })
    }

    pub fn validate(&self, resolution: usize) -> Result<()> {
        let bins = resolution * resolution * resolution;
        if self.translation_bin >= bins {
            return Err(Error::IndexOutOfRange(format!(
                "translation bin {} >= {bins}",
                self.translation_bin
            )));
        }
        if self.rotation_bins.iter().any(|&b| b >= ROTATION_BINS) {
            return Err(Error::IndexOutOfRange(format!("rotation bins {:?}", self.rotation_bins)));
        }
        if self.openness > 1 || self.collision > 1 {
            return Err(Error::IndexOutOfRange("openness/collision must be 0 or 1".into()));
        }
        Ok(())
    }

    pub fn target_position(&self, workspace: &Workspace, resolution: usize) -> Vector3<f64> {
        workspace.voxel_center(unflatten_index(self.translation_bin, resolution), resolution)
    }

    pub fn euler(&self) -> [f64; 3] {
        self.rotation_bins.map(bin_to_angle)
    }

    /// Fixed-width action code fed to the deformation predictor:
    /// normalized target position, the three angles divided by π, openness
    /// and collision.
    pub fn embedding(&self, workspace: &Workspace, resolution: usize) -> [f64; 8] {
        let n = workspace.normalized(&self.target_position(workspace, resolution));
        let e = self.euler();
        [
            n.x,
            n.y,
            n.z,
            e[0] / std::f64::consts::PI,
            e[1] / std::f64::consts::PI,
            e[2] / std::f64::consts::PI,
            self.openness as f64,
            self.collision as f64,
        ]
    }
}

/// Raw scores of the four action heads.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionLogits {
    pub translation: Vec<f64>,
    /// Three consecutive blocks of 72 scores (x, y, z angle).
    pub rotation: Vec<f64>,
    pub openness: [f64; 2],
    pub collision: [f64; 2],
}

impl ActionLogits {
    pub fn zeros(resolution: usize) -> Self {
        Self {
            translation: vec![0.0; resolution.pow(3)],
            rotation: vec![0.0; 3 * ROTATION_BINS],
            openness: [0.0; 2],
            collision: [0.0; 2],
        }
    }

    pub fn head_widths(&self) -> (usize, usize, usize, usize) {
        (self.translation.len(), self.rotation.len(), self.openness.len(), self.collision.len())
    }

    pub fn rotation_axis(&self, axis: usize) -> &[f64] {
        &self.rotation[axis * ROTATION_BINS..(axis + 1) * ROTATION_BINS]
    }

    /// The highest-scoring bin of every head.
    pub fn argmax(&self) -> DiscreteAction {
        DiscreteAction {
            translation_bin: argmax(&self.translation),
            rotation_bins: [0, 1, 2].map(|a| argmax(self.rotation_axis(a))),
            openness: argmax(&self.openness) as u8,
            collision: argmax(&self.collision) as u8,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.translation
            .iter()
            .chain(&self.rotation)
            .chain(&self.openness)
            .chain(&self.collision)
            .all(|v| v.is_finite())
    }
}

/// First index of the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
