//! Pinhole camera model and rigid transforms.
//!
//! Conventions: pixel coordinates `(u, v)` with `u` along image columns and
//! `v` along rows, both measured at pixel centers (pixel `(0, 0)` is centered
//! at `u = 0.0, v = 0.0`). The camera looks down +z; depth is the z
//! coordinate of a point in the camera frame, in meters.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Pinhole intrinsics together with the image size they refer to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr", into = "IntrinsicsRepr")]
pub struct Intrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

#[derive(Serialize, Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl TryFrom<IntrinsicsRepr> for Intrinsics {
    type Error = Error;
    fn try_from(r: IntrinsicsRepr) -> Result<Self> {
        Intrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<Intrinsics> for IntrinsicsRepr {
    fn from(k: Intrinsics) -> Self {
        IntrinsicsRepr {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
        }
    }
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be finite and positive, got fx={fx} fy={fy}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "principal point must be finite, got cx={cx} cy={cy}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "image size must be at least 1x1, got {width}x{height}"
            )));
        }
        Ok(Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }

    /// Lifts a pixel at the given depth to a camera-frame 3D point.
    ///
    /// Returns `((u - cx) d / fx, (v - cy) d / fy, d)`.
    pub fn back_project(&self, pixel: [f64; 2], depth: f64) -> Result<Vector3<f64>> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "back-projection needs positive depth, got {depth}"
            )));
        }
        let [u, v] = pixel;
        Ok(Vector3::new(
            (u - self.cx) * depth / self.fx,
            (v - self.cy) * depth / self.fy,
            depth,
        ))
    }

    /// Direction of the viewing ray through a pixel, z component fixed to 1.
    ///
    /// `back_project(p, d) == d * ray(p)` for any positive depth.
    pub fn ray(&self, pixel: [f64; 2]) -> Vector3<f64> {
        let [u, v] = pixel;
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Projects a camera-frame point onto the image, returning the pixel and
    /// its depth. The point must be strictly in front of the camera.
    pub fn project(&self, p: Vector3<f64>) -> Result<([f64; 2], f64)> {
        if !(p.z.is_finite() && p.z > 0.0) {
            return Err(Error::InvalidInput(format!(
                "cannot project point with z={} (behind or on the camera plane)",
                p.z
            )));
        }
        let u = self.fx * p.x / p.z + self.cx;
        let v = self.fy * p.y / p.z + self.cy;
        Ok(([u, v], p.z))
    }

    /// True if the pixel lies within the image rectangle `[0, w-1] x [0, h-1]`.
    pub fn contains(&self, pixel: [f64; 2]) -> bool {
        let [u, v] = pixel;
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

/// Maximum deviation from orthonormality accepted by [`Pose::new`].
pub const POSE_ORTHONORMALITY_TOL: f64 = 1e-9;

/// Rigid transform `p -> R p + t` between camera frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PoseRepr", into = "PoseRepr")]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl TryFrom<PoseRepr> for Pose {
    type Error = Error;
    fn try_from(r: PoseRepr) -> Result<Self> {
        Pose::new(
            Matrix3::from_fn(|i, j| r.rotation[i][j]),
            Vector3::from_column_slice(&r.translation),
        )
    }
}

impl From<Pose> for PoseRepr {
    fn from(p: Pose) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                rotation[i][j] = p.rotation[(i, j)];
            }
        }
        PoseRepr {
            rotation,
            translation: [p.translation.x, p.translation.y, p.translation.z],
        }
    }
}

impl Pose {
    /// Validates that `rotation` is a proper rotation (orthonormal within
    /// [`POSE_ORTHONORMALITY_TOL`], determinant +1) and that all entries are
    /// finite.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().any(|x| !x.is_finite()) || translation.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("pose entries must be finite".into()));
        }
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if defect > POSE_ORTHONORMALITY_TOL {
            return Err(Error::InvalidInput(format!(
                "rotation not orthonormal (max |R'R - I| = {defect:.3e})"
            )));
        }
        if (rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput(
                "rotation determinant must be +1 (no reflections)".into(),
            ));
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Pure translation.
    pub fn from_translation(t: [f64; 3]) -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::from_column_slice(&t),
        }
    }

    /// Rotation about the given axis by `angle` radians, then translation.
    pub fn from_axis_angle(axis: [f64; 3], angle: f64, t: [f64; 3]) -> Result<Self> {
        let axis = Vector3::from_column_slice(&axis);
        let n = axis.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidInput("rotation axis must be nonzero".into()));
        }
        let rotation = nalgebra::Rotation3::from_axis_angle(
            &nalgebra::Unit::new_normalize(axis),
            angle,
        )
        .into_inner();
        Pose::new(rotation, Vector3::from_column_slice(&t))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Applies the transform: `R p + t`.
    pub fn transform(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// The inverse transform; `inverse().transform(transform(p)) == p` up to
    /// floating-point rounding.
    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Composition: `(a.compose(b)).transform(p) == a.transform(b.transform(p))`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }
}
