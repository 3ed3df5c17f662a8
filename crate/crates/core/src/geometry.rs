//! Point and point-cloud types plus the cylindrical (polar) coordinate frame
//! used around the revolution axis.
//!
//! All lengths are millimetres. The polar frame measures `theta` against a
//! reference direction derived once from the axis (global +x orthogonalized
//! against the axis, or +z when the axis is parallel to +x), so every point
//! converted through the same frame shares one angular origin.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub type Point3 = Vector3<f64>;
/// A point of the profile plane, `(rho, h)`.
pub type Point2 = Vector2<f64>;

const UNIT_TOLERANCE: f64 = 1e-9;

/// Coordinate frame a cloud is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameId {
    Sensor(usize),
    Canonical,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameId::Sensor(i) => write!(f, "sensor{i}"),
            FrameId::Canonical => f.write_str("canonical"),
        }
    }
}

/// Ordered set of finite 3D points in a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    frame: FrameId,
}

impl PointCloud {
    pub fn empty(frame: FrameId) -> Self {
        Self {
            points: Vec::new(),
            frame,
        }
    }

    /// Builds a cloud, rejecting any non-finite coordinate.
    pub fn new(frame: FrameId, points: Vec<Point3>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, frame })
    }

    pub fn push(&mut self, p: Point3) -> Result<()> {
        if !is_finite(&p) {
            return Err(invalid("non-finite point"));
        }
        self.points.push(p);
        Ok(())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn frame(&self) -> FrameId {
        self.frame
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Copies the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            frame: self.frame,
        }
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

fn is_finite(p: &Point3) -> bool {
    p.iter().all(|c| c.is_finite())
}

/// Cylindrical coordinates around an axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub rho: f64,
    pub h: f64,
    pub theta: f64,
}

impl PolarPoint {
    pub fn profile(&self) -> Point2 {
        Point2::new(self.rho, self.h)
    }
}

/// Axis line plus the fixed angular reference used for `theta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarFrame {
    origin: Point3,
    axis: Point3,
    reference: Point3,
    binormal: Point3,
}

impl PolarFrame {
    pub fn new(origin: Point3, axis: Point3) -> Result<Self> {
        if !is_finite(&origin) || !is_finite(&axis) {
            return Err(invalid("axis origin and direction must be finite"));
        }
        if (axis.norm() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(invalid(format!(
                "axis direction must have unit length, got norm {}",
                axis.norm()
            )));
        }
        let reference = reference_direction(&axis);
        Ok(Self {
            origin,
            axis,
            reference,
            binormal: axis.cross(&reference),
        })
    }

    /// Turntable-centred frame: origin at zero, axis +y.
    pub fn canonical() -> Self {
        Self::new(Point3::zeros(), Point3::y()).expect("canonical axis is unit")
    }

    pub fn origin(&self) -> Point3 {
        self.origin
    }

    pub fn axis(&self) -> Point3 {
        self.axis
    }

    /// Direction at which `theta == 0`.
    pub fn reference(&self) -> Point3 {
        self.reference
    }

    pub fn to_polar(&self, p: &Point3) -> PolarPoint {
        let d = p - self.origin;
        let h = d.dot(&self.axis);
        let radial = d - self.axis * h;
        let rho = radial.norm();
        let theta = if rho == 0.0 {
            0.0
        } else {
            wrap_angle(radial.dot(&self.binormal).atan2(radial.dot(&self.reference)))
        };
        PolarPoint { rho, h, theta }
    }

    pub fn from_polar(&self, q: &PolarPoint) -> Point3 {
        let (s, c) = q.theta.sin_cos();
        self.origin + self.axis * q.h + (self.reference * c + self.binormal * s) * q.rho
    }
}

fn reference_direction(axis: &Point3) -> Point3 {
    let candidate = if axis.x.abs() > 1.0 - 1e-6 {
        Point3::z()
    } else {
        Point3::x()
    };
    (candidate - axis * candidate.dot(axis)).normalize()
}

/// Maps any angle into `[0, 2π)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

pub fn to_polar(p: &Point3, axis_origin: &Point3, axis_dir: &Point3) -> Result<PolarPoint> {
    Ok(PolarFrame::new(*axis_origin, *axis_dir)?.to_polar(p))
}

pub fn from_polar(q: &PolarPoint, axis_origin: &Point3, axis_dir: &Point3) -> Result<Point3> {
    Ok(PolarFrame::new(*axis_origin, *axis_dir)?.from_polar(q))
}
