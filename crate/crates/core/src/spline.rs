//! Five-knot Catmull-Rom profile curves in the `(rho, h)` plane.
//!
//! Only the three inner knots are free. The outer two are reflections of the
//! inner ones through the end knots, so they steer the end tangents and are
//! never sampled. Arc length is measured on a dense polyline of
//! [`SUBSAMPLES_PER_SEGMENT`] evaluations per segment.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Point2;

pub const SUBSAMPLES_PER_SEGMENT: usize = 256;
/// Chordal tension.
pub const DEFAULT_TENSION: f64 = 1.0;

/// Evaluates one Catmull-Rom segment between `ctrl[1]` and `ctrl[2]`.
pub fn eval_segment(ctrl: &[Point2; 4], p: f64, tension: f64) -> Result<Point2> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("progression {p} outside [0, 1]")));
    }
    Ok(eval_unchecked(ctrl, p, tension))
}

#[inline]
pub(crate) fn eval_unchecked(ctrl: &[Point2; 4], p: f64, t: f64) -> Point2 {
    let basis = segment_basis(p, t);
    (ctrl[0] * basis[0] + ctrl[1] * basis[1] + ctrl[2] * basis[2] + ctrl[3] * basis[3]) * 0.5
}

/// `[1 p p² p³] · M(τ)`, one weight per control point (before the ½ factor).
#[inline]
fn segment_basis(p: f64, t: f64) -> [f64; 4] {
    let p2 = p * p;
    let p3 = p2 * p;
    [
        -t * p + 2.0 * t * p2 - t * p3,
        2.0 + (t - 6.0) * p2 + (4.0 - t) * p3,
        t * p - 2.0 * (t - 3.0) * p2 + (t - 4.0) * p3,
        -t * p2 + t * p3,
    ]
}

/// Reflects the inner knots through the end knots: `(2κ₂ − κ₃, 2κ₄ − κ₃)`.
pub fn virtual_knots(k2: &Point2, k3: &Point2, k4: &Point2) -> (Point2, Point2) {
    (k2 * 2.0 - k3, k4 * 2.0 - k3)
}

/// Profile curve given by its three free knots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileCurve {
    pub knots: [Point2; 3],
    #[serde(default = "default_tension")]
    pub tension: f64,
}

fn default_tension() -> f64 {
    DEFAULT_TENSION
}

impl ProfileCurve {
    pub fn new(k2: Point2, k3: Point2, k4: Point2) -> Self {
        Self {
            knots: [k2, k3, k4],
            tension: DEFAULT_TENSION,
        }
    }

    pub fn from_coords(coords: [[f64; 2]; 3]) -> Self {
        Self::new(
            Point2::new(coords[0][0], coords[0][1]),
            Point2::new(coords[1][0], coords[1][1]),
            Point2::new(coords[2][0], coords[2][1]),
        )
    }

    /// All five knots, virtual ones included.
    pub fn control_points(&self) -> [Point2; 5] {
        let [k2, k3, k4] = self.knots;
        let (k1, k5) = virtual_knots(&k2, &k3, &k4);
        [k1, k2, k3, k4, k5]
    }

    pub fn reversed(&self) -> Self {
        Self {
            knots: [self.knots[2], self.knots[1], self.knots[0]],
            tension: self.tension,
        }
    }

    pub fn translated(&self, v: Point2) -> Self {
        Self {
            knots: self.knots.map(|k| k + v),
            tension: self.tension,
        }
    }

    /// Point at global parameter `u ∈ [0, 2]`: segment `⌊u⌋`, progression `u − ⌊u⌋`.
    pub fn eval(&self, u: f64) -> Point2 {
        let u = u.clamp(0.0, 2.0);
        let (segment, p) = if u >= 2.0 { (1, 1.0) } else { (u as usize, u.fract()) };
        let cp = self.control_points();
        let ctrl = [cp[segment], cp[segment + 1], cp[segment + 2], cp[segment + 3]];
        eval_unchecked(&ctrl, p, self.tension)
    }

    /// Dense polyline over the two scored segments, `2·SUBSAMPLES + 1` points.
    pub fn dense_polyline(&self) -> Vec<Point2> {
        let mut out = Vec::with_capacity(2 * SUBSAMPLES_PER_SEGMENT + 1);
        self.fill_dense(&mut out);
        out
    }

    pub(crate) fn fill_dense(&self, out: &mut Vec<Point2>) {
        out.clear();
        let cp = self.control_points();
        let n = SUBSAMPLES_PER_SEGMENT;
        for segment in 0..2 {
            let ctrl = [cp[segment], cp[segment + 1], cp[segment + 2], cp[segment + 3]];
            let start = if segment == 0 { 0 } else { 1 };
            for i in start..=n {
                let p = i as f64 / n as f64;
                out.push(eval_unchecked(&ctrl, p, self.tension));
            }
        }
        // endpoints are the knots themselves
        out[0] = self.knots[0];
        out[n] = self.knots[1];
        out[2 * n] = self.knots[2];
    }

    /// Arc length between the first and last free knot.
    pub fn length(&self) -> f64 {
        polyline_length(&self.dense_polyline())
    }

    /// Points spaced `step` apart along the curve, both endpoints included.
    pub fn sample_equidistant(&self, step: f64) -> Result<Vec<Point2>> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(invalid(format!("sampling step must be positive, got {step}")));
        }
        let mut out = Vec::new();
        let mut scratch = Vec::new();
        self.sample_into(step, &mut scratch, &mut out);
        Ok(out)
    }

    /// Allocation-reusing variant of [`Self::sample_equidistant`]; `step` must be positive.
    pub(crate) fn sample_into(&self, step: f64, dense: &mut Vec<Point2>, out: &mut Vec<Point2>) {
        self.fill_dense(dense);
        resample_polyline(dense, step, out);
    }
}

pub fn curve_length(curve: &ProfileCurve) -> f64 {
    curve.length()
}

pub fn sample_equidistant(curve: &ProfileCurve, step: f64) -> Result<Vec<Point2>> {
    curve.sample_equidistant(step)
}

pub fn polyline_length(points: &[Point2]) -> f64 {
    points.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Re-interpolates a polyline at arc-length multiples of `step`, appending
/// the final vertex unless it coincides with the last emitted sample.
pub fn resample_polyline(poly: &[Point2], step: f64, out: &mut Vec<Point2>) {
    out.clear();
    let Some(&first) = poly.first() else {
        return;
    };
    out.push(first);
    let total = polyline_length(poly);
    if total == 0.0 {
        return;
    }
    let end_tol = 1e-9 * total.max(1.0);
    let mut next = step;
    let mut walked = 0.0;
    for w in poly.windows(2) {
        let seg = (w[1] - w[0]).norm();
        if seg == 0.0 {
            continue;
        }
        while next <= walked + seg && next < total - end_tol {
            let t = (next - walked) / seg;
            out.push(w[0] + (w[1] - w[0]) * t);
            next += step;
        }
        walked += seg;
    }
    out.push(*poly.last().unwrap());
}
