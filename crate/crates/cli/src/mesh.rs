//! Surface of revolution meshes in Wavefront OBJ form.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use revolve_core::geometry::{PolarFrame, PolarPoint};
use revolve_core::spline::ProfileCurve;
use revolve_core::{Point2, Point3};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point3>,
    /// Zero-based vertex indices.
    pub triangles: Vec<[usize; 3]>,
}

/// Revolves the profile, sampled every `step` mm, into `segments` angular
/// slices about the axis of `frame`.
pub fn export_mesh(profile: &ProfileCurve, segments: usize, step: f64, frame: &PolarFrame) -> Result<Mesh> {
    let samples = profile.sample_equidistant(step).map_err(|e| CliError::Config(e.to_string()))?;
    revolve_polyline(&samples, segments, frame)
}

pub fn revolve_polyline(samples: &[Point2], segments: usize, frame: &PolarFrame) -> Result<Mesh> {
    if segments < 3 {
        return Err(CliError::Config(format!("a mesh needs at least 3 segments, got {segments}")));
    }
    let length: f64 = samples.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
    if samples.len() < 2 || !(length > 0.0) {
        return Err(CliError::Config("degenerate profile".into()));
    }
    let mut vertices = Vec::with_capacity(samples.len() * segments);
    for s in samples {
        for k in 0..segments {
            vertices.push(frame.from_polar(&PolarPoint {
                rho: s.x,
                h: s.y,
                theta: TAU * k as f64 / segments as f64,
            }));
        }
    }
    let mut triangles = Vec::with_capacity(2 * (samples.len() - 1) * segments);
    for i in 0..samples.len() - 1 {
        for k in 0..segments {
            let a = i * segments + k;
            let b = i * segments + (k + 1) % segments;
            let (c, d) = (a + segments, b + segments);
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    Ok(Mesh { vertices, triangles })
}

impl Mesh {
    pub fn to_obj(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cylinder() {
        let samples = [Point2::new(10.0, 0.0), Point2::new(10.0, 20.0)];
        let mesh = revolve_polyline(&samples, 4, &PolarFrame::canonical()).unwrap();
        assert_eq!(mesh.vertices.len(), 8);
        assert_eq!(mesh.triangles.len(), 8);
        for v in &mesh.vertices {
            assert!((v.x.hypot(v.z) - 10.0).abs() < 1e-12);
        }
        let obj = mesh.to_obj();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 8);
        let max_index = obj
            .lines()
            .filter(|l| l.starts_with("f "))
            .flat_map(|l| l[2..].split(' ').map(|i| i.parse::<usize>().unwrap()).collect::<Vec<_>>())
            .fold((usize::MAX, 0), |(lo, hi), i| (lo.min(i), hi.max(i)));
        assert_eq!(max_index, (1, 8));
    }

    #[test]
    fn preconditions() {
        let line = [Point2::new(10.0, 0.0), Point2::new(10.0, 20.0)];
        assert!(revolve_polyline(&line, 2, &PolarFrame::canonical()).is_err());
        assert!(revolve_polyline(&line[..1], 8, &PolarFrame::canonical()).is_err());
        let point = [Point2::new(10.0, 0.0), Point2::new(10.0, 0.0)];
        assert!(revolve_polyline(&point, 8, &PolarFrame::canonical()).is_err());
    }
}
