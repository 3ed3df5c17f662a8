#![allow(dead_code)]

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revolve_core::spline::ProfileCurve;
use revolve_core::{FrameId, Point2, Point3, PointCloud};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn canonical(points: Vec<Point3>) -> PointCloud {
    PointCloud::new(FrameId::Canonical, points).unwrap()
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Point3 {
    loop {
        let v = Point3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Cloud in a box around the canonical axis, partly outside the accumulator extent.
pub fn random_canonical_cloud(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-1.1 * radius..1.1 * radius),
                rng.random_range(-0.1 * radius..1.1 * radius),
                rng.random_range(-1.1 * radius..1.1 * radius),
            )
        })
        .collect();
    canonical(pts)
}

/// Points of a profile revolved about the canonical axis, uniform in angle.
pub fn revolved(curve: &ProfileCurve, per_ring: usize, step: f64, phase: f64) -> Vec<Point3> {
    let samples = curve.sample_equidistant(step).unwrap();
    let mut out = Vec::new();
    for (k, s) in samples.iter().enumerate() {
        for i in 0..per_ring {
            let theta = phase + TAU * (i as f64 + 0.37 * k as f64) / per_ring as f64;
            out.push(Point3::new(s.x * theta.cos(), s.y, -s.x * theta.sin()));
        }
    }
    out
}

fn segment_distance(p: &Point2, a: &Point2, b: &Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * t)).norm()
}

/// Distance from a profile-plane point to the curve: coarse polyline search
/// followed by golden-section refinement on the curve parameter.
pub fn distance_to_curve(curve: &ProfileCurve, p: &Point2) -> f64 {
    let n = 2000;
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=n {
        let u = 2.0 * i as f64 / n as f64;
        let d = (curve.eval(u) - p).norm();
        if d < best.0 {
            best = (d, u);
        }
    }
    let f = |u: f64| (curve.eval(u) - p).norm();
    let (mut a, mut b) = ((best.1 - 2.0 / n as f64).max(0.0), (best.1 + 2.0 / n as f64).min(2.0));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f((a + b) / 2.0).min(best.0)
}

/// Distance from a canonical 3D point to the surface of revolution of `curve`,
/// using a polyline of the curve (sub-millimetre accuracy).
pub fn distance_to_surface_polyline(poly: &[Point2], p: &Point3) -> f64 {
    let q = Point2::new((p.x * p.x + p.z * p.z).sqrt(), p.y);
    poly.windows(2)
        .map(|w| segment_distance(&q, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// World-frame object points of one generated frame, before sensor noise.
pub fn scene_object_cloud(scene: &revolve_core::synth::SceneSpec, frame: usize, seed: u64) -> PointCloud {
    use revolve_core::synth::{generate_labeled_frame, PointOrigin};
    let f = generate_labeled_frame(scene, frame, seed).unwrap();
    let mut pts = Vec::new();
    for (labels, clean) in f.labels.iter().zip(&f.world_clean) {
        pts.extend(labels.iter().zip(clean).filter(|(l, _)| **l == PointOrigin::Object).map(|(_, p)| *p));
    }
    canonical(pts)
}
