//! Lifting an RGB-D view into a sparse voxel grid.

use std::collections::BTreeMap;

use crate::action::{flat_index, Workspace};
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::image::Image;

/// RGB, normalized voxel center, scaled flat index, occupancy, two spare slots.
pub const VOXEL_CHANNELS: usize = 10;

/// One front-camera observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub rgb: Image,
    /// Camera-space depth in meters; 0 marks pixels without a hit.
    pub depth: Image,
    pub proprioception: [f64; 4],
}

impl Observation {
    pub fn validate(&self, cam: &Camera) -> Result<()> {
        if self.rgb.channels != 3 || self.depth.channels != 1 {
            return Err(Error::shape("observation channels", "rgb 3, depth 1", format!(
                "rgb {}, depth {}",
                self.rgb.channels, self.depth.channels
            )));
        }
        for img in [&self.rgb, &self.depth] {
            if img.width != cam.width || img.height != cam.height {
                return Err(Error::shape(
                    "observation size",
                    format!("{}x{}", cam.width, cam.height),
                    format!("{}x{}", img.width, img.height),
                ));
            }
        }
        if self.depth.data.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(Error::InvalidParameter("depth must be finite and non-negative".into()));
        }
        if self.rgb.data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("rgb must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Occupied voxels keyed by flat index, in ascending index order.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub resolution: usize,
    pub workspace: Workspace,
    pub voxels: BTreeMap<usize, [f64; VOXEL_CHANNELS]>,
    /// Lifted points that fell outside the workspace.
    pub dropped: usize,
}

impl VoxelGrid {
    pub fn occupied(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_occupied(&self, idx: [usize; 3]) -> bool {
        self.voxels.contains_key(&flat_index(idx, self.resolution))
    }
}

/// Unprojects every pixel with positive depth and marks the voxel it lands
/// in. Colliding pixels overwrite each other in row-major order.
pub fn voxelize(obs: &Observation, cam: &Camera, workspace: &Workspace, resolution: usize) -> Result<VoxelGrid> {
    workspace.validate()?;
    if resolution == 0 {
        return Err(Error::InvalidParameter("voxel resolution must be positive".into()));
    }
    obs.validate(cam)?;
    let total = (resolution * resolution * resolution) as f64;
    let mut voxels = BTreeMap::new();
    let mut dropped = 0;
    for y in 0..cam.height {
        for x in 0..cam.width {
            let z = obs.depth.pixel(x, y)[0];
            if z <= 0.0 {
                continue;
            }
            let p = cam.unproject(x as f64, y as f64, z);
            let Some(idx) = workspace.voxel_of(&p, resolution) else {
                dropped += 1;
                continue;
            };
            let flat = flat_index(idx, resolution);
            let center = workspace.normalized(&workspace.voxel_center(idx, resolution));
            let rgb = obs.rgb.pixel(x, y);
            voxels.insert(
                flat,
                [rgb[0], rgb[1], rgb[2], center.x, center.y, center.z, flat as f64 / total, 1.0, 0.0, 0.0],
            );
        }
    }
    Ok(VoxelGrid {
        resolution,
        workspace: *workspace,
        voxels,
        dropped,
    })
}

/// `sin(2^f π u)`, `cos(2^f π u)` for each coordinate and frequency.
pub fn positional_encoding(u: [f64; 3], frequencies: usize, out: &mut Vec<f64>) {
    for &c in &u {
        for f in 0..frequencies {
            let a = (1u64 << f) as f64 * std::f64::consts::PI * c;
            out.push(a.sin());
            out.push(a.cos());
        }
    }
}

pub fn encoder_input_width(frequencies: usize) -> usize {
    VOXEL_CHANNELS + 6 * frequencies
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn obs(w: usize, h: usize) -> Observation {
        Observation {
            rgb: Image::filled(w, h, 3, 0.5),
            depth: Image::new(w, h, 1),
            proprioception: [0.0; 4],
        }
    }

    fn cube_workspace() -> Workspace {
        Workspace {
            min: [-1.0, -1.0, 0.0],
            max: [1.0, 1.0, 4.0],
        }
    }

    #[test]
    fn empty_depth_gives_empty_grid() {
        let cam = Camera::identity(5, 5, 5.0);
        let g = voxelize(&obs(5, 5), &cam, &cube_workspace(), 8).unwrap();
        assert_eq!(g.occupied(), 0);
        assert_eq!(g.dropped, 0);
    }

    #[test]
    fn center_pixel_lands_on_axis() {
        let cam = Camera::identity(5, 5, 5.0);
        let mut o = obs(5, 5);
        o.depth.pixel_mut(2, 2)[0] = 2.3;
        let ws = cube_workspace();
        let g = voxelize(&o, &cam, &ws, 8).unwrap();
        // pinhole inverse at the principal point is (0, 0, z); cells are
        // 0.25 wide in x, y and 0.5 deep in z
        let expected = [4, 4, 4];
        assert!(g.is_occupied(expected));
        assert_eq!(g.occupied(), 1);
        assert_eq!(ws.voxel_of(&Vector3::new(0.0, 0.0, 2.3), 8), Some(expected));
        let ch = g.voxels.values().next().unwrap();
        assert_eq!(ch[7], 1.0);
        assert_eq!(&ch[..3], &[0.5, 0.5, 0.5]);
    }

    #[test]
    fn far_face_is_excluded() {
        let cam = Camera::identity(5, 5, 5.0);
        let mut o = obs(5, 5);
        o.depth.pixel_mut(2, 2)[0] = 4.0;
        let g = voxelize(&o, &cam, &cube_workspace(), 8).unwrap();
        assert_eq!(g.occupied(), 0);
        assert_eq!(g.dropped, 1);
    }

    #[test]
    fn last_writer_wins() {
        let cam = Camera::identity(5, 5, 500.0);
        let mut o = obs(5, 5);
        o.depth.pixel_mut(2, 2)[0] = 2.3;
        o.depth.pixel_mut(3, 2)[0] = 2.3;
        o.rgb.pixel_mut(3, 2).copy_from_slice(&[1.0, 0.0, 0.0]);
        let g = voxelize(&o, &cam, &cube_workspace(), 8).unwrap();
        assert_eq!(g.occupied(), 1);
        assert_eq!(&g.voxels.values().next().unwrap()[..3], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn idempotent_and_rejects_degenerate_bounds() {
        let cam = Camera::identity(6, 4, 5.0);
        let mut o = obs(6, 4);
        for (i, d) in o.depth.data.iter_mut().enumerate() {
            *d = 1.0 + 0.1 * i as f64;
        }
        let ws = cube_workspace();
        assert_eq!(voxelize(&o, &cam, &ws, 8).unwrap(), voxelize(&o, &cam, &ws, 8).unwrap());
        let flat = Workspace {
            min: [0.0, 0.0, 0.0],
            max: [1.0, 1.0, 0.0],
        };
        assert!(matches!(voxelize(&o, &cam, &flat, 8), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn encoding_width() {
        let mut v = Vec::new();
        positional_encoding([0.25, 0.5, 1.0], 4, &mut v);
        assert_eq!(v.len() + VOXEL_CHANNELS, encoder_input_width(4));
        assert!((v[0] - (0.25 * std::f64::consts::PI).sin()).abs() < 1e-15);
    }
}
