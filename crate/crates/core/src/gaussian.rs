//! Gaussian primitives, their covariance and color math, and the
//! per-step propagation rule for positions and rotations.
//!
//! Quaternions are scalar-first `(w, x, y, z)`. Scale and opacity are stored
//! post-activation, so a constructed primitive is always valid.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Real spherical-harmonic constants for degrees 0 and 1.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;

/// Number of SH coefficients per color channel (degree 1).
pub const SH_PER_CHANNEL: usize = 4;
pub const SH_COEFFS: usize = 3 * SH_PER_CHANNEL;

const UNIT_TOLERANCE: f64 = 1e-6;

pub type Quat = [f64; 4];

pub const IDENTITY_QUAT: Quat = [1.0, 0.0, 0.0, 0.0];

/// One splat. `position` and `rotation` change over time; everything else is
/// fixed for the lifetime of the primitive.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    position: Vector3<f64>,
    sh_coeffs: [f64; SH_COEFFS],
    rotation: Quat,
    scale: Vector3<f64>,
    opacity: f64,
    semantic: Vector3<f64>,
}

impl GaussianPrimitive {
    /// Builds a primitive, normalizing the rotation. Fails on non-finite input,
    /// non-positive scale, opacity outside `[0, 1]` or a zero quaternion.
    pub fn new(
        position: Vector3<f64>,
        sh_coeffs: [f64; SH_COEFFS],
        rotation: Quat,
        scale: Vector3<f64>,
        opacity: f64,
        semantic: Vector3<f64>,
    ) -> Result<Self> {
        let finite = position.iter().all(|v| v.is_finite())
            && sh_coeffs.iter().all(|v| v.is_finite())
            && rotation.iter().all(|v| v.is_finite())
            && scale.iter().all(|v| v.is_finite())
            && opacity.is_finite()
            && semantic.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("non-finite primitive field".into()));
        }
        if scale.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive, got {:?}",
                scale.as_slice()
            )));
        }
        if !(0.0..=1.0).contains(&opacity) {
            return Err(Error::InvalidParameter(format!("opacity {opacity} outside [0, 1]")));
        }
        let rotation = normalize_quat(rotation)
            .ok_or_else(|| Error::InvalidParameter("zero-norm rotation quaternion".into()))?;
        Ok(Self {
            position,
            sh_coeffs,
            rotation,
            scale,
            opacity,
            semantic,
        })
    }

    /// Flat-colored isotropic splat, handy for tests and examples.
    pub fn isotropic(position: Vector3<f64>, rgb: [f64; 3], radius: f64, opacity: f64) -> Result<Self> {
        Self::new(
            position,
            sh_from_rgb(rgb),
            IDENTITY_QUAT,
            Vector3::repeat(radius),
            opacity,
            Vector3::zeros(),
        )
    }

    pub fn position(&self) -> &Vector3<f64> {
        &self.position
    }

    pub fn sh_coeffs(&self) -> &[f64; SH_COEFFS] {
        &self.sh_coeffs
    }

    pub fn rotation(&self) -> &Quat {
        &self.rotation
    }

    pub fn scale(&self) -> &Vector3<f64> {
        &self.scale
    }

    pub fn opacity(&self) -> f64 {
        self.opacity
    }

    pub fn semantic(&self) -> &Vector3<f64> {
        &self.semantic
    }

    pub fn with_position(mut self, position: Vector3<f64>) -> Result<Self> {
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite position".into()));
        }
        self.position = position;
        Ok(self)
    }

    pub fn with_rotation(mut self, rotation: Quat) -> Result<Self> {
        self.rotation = normalize_quat(rotation)
            .ok_or_else(|| Error::InvalidParameter("zero-norm rotation quaternion".into()))?;
        Ok(self)
    }

    pub fn with_semantic(mut self, semantic: Vector3<f64>) -> Result<Self> {
        if !semantic.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite semantic feature".into()));
        }
        self.semantic = semantic;
        Ok(self)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_unchecked(&self.rotation, &self.scale)
    }
}

/// A set of primitives at one timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicScene {
    pub primitives: Vec<GaussianPrimitive>,
    pub timestep: u64,
    pub background_color: Vector3<f64>,
}

impl DynamicScene {
    pub fn new(primitives: Vec<GaussianPrimitive>, background_color: Vector3<f64>) -> Self {
        Self {
            primitives,
            timestep: 0,
            background_color,
        }
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }
}

/// Per-primitive change of position and rotation between two steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationDelta {
    pub d_position: Vector3<f64>,
    pub d_rotation: [f64; 4],
}

impl DeformationDelta {
    pub fn zero() -> Self {
        Self {
            d_position: Vector3::zeros(),
            d_rotation: [0.0; 4],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.d_position.iter().all(|v| v.is_finite()) && self.d_rotation.iter().all(|v| v.is_finite())
    }
}

pub fn quat_norm(q: &Quat) -> f64 {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Returns `None` for a (numerically) zero quaternion.
pub fn normalize_quat(q: Quat) -> Option<Quat> {
    let n = quat_norm(&q);
    if !(n > 1e-12) || !n.is_finite() {
        return None;
    }
    Some([q[0] / n, q[1] / n, q[2] / n, q[3] / n])
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn rotation_matrix(q: &Quat) -> Matrix3<f64> {
    let [w, x, y, z] = *q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Pulls `dL/dR` back onto the (unit) quaternion components.
pub fn rotation_matrix_backward(q: &Quat, d_r: &Matrix3<f64>) -> Quat {
    let [w, x, y, z] = *q;
    let g = |r: usize, c: usize| d_r[(r, c)];
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1) + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    [dw, dx, dy, dz]
}

/// Gradient of `q / |q|` pulled back from the normalized components.
pub fn normalize_quat_backward(raw: &Quat, d_unit: &Quat) -> Quat {
    let n = quat_norm(raw);
    let u = [raw[0] / n, raw[1] / n, raw[2] / n, raw[3] / n];
    let dot = u[0] * d_unit[0] + u[1] * d_unit[1] + u[2] * d_unit[2] + u[3] * d_unit[3];
    [
        (d_unit[0] - u[0] * dot) / n,
        (d_unit[1] - u[1] * dot) / n,
        (d_unit[2] - u[2] * dot) / n,
        (d_unit[3] - u[3] * dot) / n,
    ]
}

/// World-space covariance `R S Sᵀ Rᵀ`.
pub fn covariance3d(rotation: &Quat, scale: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !rotation.iter().chain(scale.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite rotation or scale".into()));
    }
    if scale.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    if (quat_norm(rotation) - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidParameter("rotation is not a unit quaternion".into()));
    }
    Ok(covariance_unchecked(rotation, scale))
}

pub(crate) fn covariance_unchecked(rotation: &Quat, scale: &Vector3<f64>) -> Matrix3<f64> {
    let m = rotation_matrix(rotation) * Matrix3::from_diagonal(scale);
    let sigma = m * m.transpose();
    // exact symmetry
    (sigma + sigma.transpose()) * 0.5
}

/// Degree-1 real SH basis in the usual splatting sign convention.
pub fn sh_basis(dir: &Vector3<f64>) -> [f64; SH_PER_CHANNEL] {
    [SH_C0, -SH_C1 * dir.y, SH_C1 * dir.z, -SH_C1 * dir.x]
}

/// Unclamped SH color (including the +0.5 offset) per channel.
pub fn sh_to_rgb_raw(sh: &[f64; SH_COEFFS], dir: &Vector3<f64>) -> [f64; 3] {
    let basis = sh_basis(dir);
    let mut out = [0.5; 3];
    for (ch, value) in out.iter_mut().enumerate() {
        for (l, b) in basis.iter().enumerate() {
            *value += sh[ch * SH_PER_CHANNEL + l] * b;
        }
    }
    out
}

/// View-dependent color, clamped below at zero.
pub fn sh_to_rgb(sh: &[f64; SH_COEFFS], view_dir: &Vector3<f64>) -> Result<[f64; 3]> {
    if !sh.iter().chain(view_dir.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite SH input".into()));
    }
    Ok(sh_to_rgb_raw(sh, view_dir).map(|c| c.max(0.0)))
}

/// SH coefficients whose view-independent color is `rgb`.
pub fn sh_from_rgb(rgb: [f64; 3]) -> [f64; SH_COEFFS] {
    let mut sh = [0.0; SH_COEFFS];
    for ch in 0..3 {
        sh[ch * SH_PER_CHANNEL] = (rgb[ch] - 0.5) / SH_C0;
    }
    sh
}

/// Advances a scene by one step: positions add their delta, rotations add
/// their delta and are renormalized, all other fields are carried over.
pub fn propagate(scene: &DynamicScene, deltas: &[DeformationDelta]) -> Result<DynamicScene> {
    if deltas.len() != scene.primitives.len() {
        return Err(Error::shape("propagate", scene.primitives.len(), deltas.len()));
    }
    let mut primitives = Vec::with_capacity(deltas.len());
    for (index, (p, d)) in scene.primitives.iter().zip(deltas).enumerate() {
        if !d.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite deformation for primitive {index}")));
        }
        let summed = [
            p.rotation[0] + d.d_rotation[0],
            p.rotation[1] + d.d_rotation[1],
            p.rotation[2] + d.d_rotation[2],
            p.rotation[3] + d.d_rotation[3],
        ];
        let rotation = normalize_quat(summed).ok_or(Error::DegenerateRotation { index })?;
        primitives.push(GaussianPrimitive {
            position: p.position + d.d_position,
            rotation,
            ..p.clone()
        });
    }
    Ok(DynamicScene {
        primitives,
        timestep: scene.timestep + 1,
        background_color: scene.background_color,
    })
}
