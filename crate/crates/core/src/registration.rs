//! Rigid registration of sensor clouds into the turntable frame.
//!
//! Each sensor transform is the composition of `U`, which moves the plate
//! centre to the origin and turns the plate normal onto +y, and `V`, a
//! rotation about +y by the sensor's configured azimuth `φ`. Points are
//! column vectors (`p' = R·p + t`); the full registration applies `U` first.

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{FrameId, Point3, PointCloud};
use crate::table::TurntableModel;

/// Canonical plate centre.
pub const CANONICAL_CENTER: Point3 = Point3::new(0.0, 0.0, 0.0);
/// Canonical revolution axis.
pub const CANONICAL_AXIS: Point3 = Point3::new(0.0, 1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_rotation(rotation: Matrix3<f64>) -> Self {
        Self {
            rotation,
            translation: Vector3::zeros(),
        }
    }

    /// Accepts a homogeneous matrix whose rotation block is orthonormal with
    /// determinant +1 (within `tol`) and whose last row is `(0, 0, 0, 1)`.
    pub fn from_homogeneous(m: &Matrix4<f64>, tol: f64) -> Result<Self> {
        let t = Self {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        };
        let last = m.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(invalid("last row of a rigid transform must be (0, 0, 0, 1)"));
        }
        if !t.is_rigid(tol) {
            return Err(invalid("rotation block is not a proper rotation"));
        }
        Ok(t)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self` after `first`: `(self ∘ first)(p) = self(first(p))`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn is_rigid(&self, tol: f64) -> bool {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).abs().max();
        ortho <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }

    pub fn transform_cloud(&self, cloud: &PointCloud, frame: FrameId) -> PointCloud {
        PointCloud::new(frame, cloud.iter().map(|p| self.apply(p)).collect())
            .expect("rigid motion keeps points finite")
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    /// Matrix product: `(a * b)(p) = a(b(p))`.
    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

/// Rotation taking unit `from` onto unit `to`.
///
/// Parallel vectors give the identity; antiparallel vectors a half turn
/// about the direction obtained by orthogonalizing +x (or +z) against `to`.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Matrix3<f64> {
    let a = from.normalize();
    let b = to.normalize();
    let axis = a.cross(&b);
    let sin = axis.norm();
    let cos = a.dot(&b);
    if sin <= 1e-15 {
        if cos > 0.0 {
            return Matrix3::identity();
        }
        let candidate = if b.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
        let perp = Unit::new_normalize(candidate - b * candidate.dot(&b));
        return Rotation3::from_axis_angle(&perp, std::f64::consts::PI).into_inner();
    }
    let angle = sin.atan2(cos);
    Rotation3::from_axis_angle(&Unit::new_unchecked(axis / sin), angle).into_inner()
}

/// `U`: maps the plate centre to the origin and the plate normal to +y.
pub fn align_to_canonical(table: &TurntableModel) -> RigidTransform {
    let rotation = rotation_between(&table.normal, &CANONICAL_AXIS);
    RigidTransform {
        rotation,
        translation: CANONICAL_CENTER - rotation * table.center,
    }
}

/// `V`: rotation by `phi` about the canonical axis, no translation.
pub fn axial_rotation(phi: f64) -> RigidTransform {
    let axis = Unit::new_unchecked(CANONICAL_AXIS);
    RigidTransform::from_rotation(Rotation3::from_axis_angle(&axis, phi).into_inner())
}

/// Full sensor registration: `U` then `V`.
pub fn registration_transform(table: &TurntableModel, phi: f64) -> RigidTransform {
    axial_rotation(phi) * align_to_canonical(table)
}

/// Default sensor azimuths `2π·i/n`.
pub fn default_azimuths(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| std::f64::consts::TAU * i as f64 / n as f64)
        .collect()
}

/// Concatenates every cloud mapped by its transform, in sensor order.
pub fn merge_registered(clouds: &[PointCloud], transforms: &[RigidTransform]) -> Result<PointCloud> {
    if clouds.len() != transforms.len() {
        return Err(invalid(format!(
            "{} clouds but {} transforms",
            clouds.len(),
            transforms.len()
        )));
    }
    let total = clouds.iter().map(PointCloud::len).sum();
    let mut points = Vec::with_capacity(total);
    for (cloud, m) in clouds.iter().zip(transforms) {
        points.extend(cloud.iter().map(|p| m.apply(p)));
    }
    PointCloud::new(FrameId::Canonical, points)
}
