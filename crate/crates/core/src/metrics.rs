//! Profile comparison metrics.
//!
//! Both symmetric metrics average the two directed values. For the
//! Hausdorff distance this differs from the usual `max` symmetrization.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::Point2;
use crate::spline::ProfileCurve;

/// Sampling step used for evaluation (mm).
pub const EVALUATION_STEP: f64 = 0.2;

/// Point sets above this size use the bucketed nearest-neighbour search.
const BRUTE_FORCE_LIMIT: usize = 10_000;

/// Equidistant samples of a profile, `EVALUATION_STEP` apart.
pub fn profile_sampling(curve: &ProfileCurve) -> Vec<Point2> {
    curve
        .sample_equidistant(EVALUATION_STEP)
        .expect("evaluation step is positive")
}

fn check(a: &[Point2], b: &[Point2]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(invalid("metric inputs must be non-empty"));
    }
    Ok(())
}

/// Distance from each point of `a` to its nearest neighbour in `b`.
pub fn nearest_distances(a: &[Point2], b: &[Point2]) -> Vec<f64> {
    if a.len().max(b.len()) <= BRUTE_FORCE_LIMIT {
        a.iter().map(|p| brute_nearest(p, b)).collect()
    } else {
        let index = BucketIndex::new(b);
        a.iter().map(|p| index.nearest(p)).collect()
    }
}

fn brute_nearest(p: &Point2, b: &[Point2]) -> f64 {
    b.iter()
        .map(|q| (p - q).norm_squared())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Uniform-grid bucketing for exact nearest-neighbour queries.
struct BucketIndex<'a> {
    points: &'a [Point2],
    size: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    min: (i64, i64),
    max: (i64, i64),
}

impl<'a> BucketIndex<'a> {
    fn new(points: &'a [Point2]) -> Self {
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = (hi - lo).amax().max(1e-9);
        let size = (extent / (points.len() as f64).sqrt()).max(1e-9);
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let (mut min, mut max) = ((i64::MAX, i64::MAX), (i64::MIN, i64::MIN));
        for (i, p) in points.iter().enumerate() {
            let key = Self::key(p, size);
            min = (min.0.min(key.0), min.1.min(key.1));
            max = (max.0.max(key.0), max.1.max(key.1));
            buckets.entry(key).or_default().push(i);
        }
        Self {
            points,
            size,
            buckets,
            min,
            max,
        }
    }

    fn key(p: &Point2, size: f64) -> (i64, i64) {
        ((p.x / size).floor() as i64, (p.y / size).floor() as i64)
    }

    fn nearest(&self, p: &Point2) -> f64 {
        let (cx, cy) = Self::key(p, self.size);
        let mut best = f64::INFINITY;
        let reach = (self.max.0 - self.min.0)
            .max(self.max.1 - self.min.1)
            .max((cx - self.min.0).abs())
            .max((cx - self.max.0).abs())
            .max((cy - self.min.1).abs())
            .max((cy - self.max.1).abs())
            + 1;
        for ring in 0..=reach {
            // anything in ring `ring + 1` or beyond is at least `ring·size` away
            for (dx, dy) in ring_offsets(ring) {
                if let Some(ids) = self.buckets.get(&(cx + dx, cy + dy)) {
                    for &i in ids {
                        best = best.min((p - self.points[i]).norm_squared());
                    }
                }
            }
            let safe = ring as f64 * self.size;
            if best.is_finite() && best <= safe * safe {
                break;
            }
        }
        best.sqrt()
    }
}

fn ring_offsets(ring: i64) -> Vec<(i64, i64)> {
    if ring == 0 {
        return vec![(0, 0)];
    }
    let mut out = Vec::with_capacity(8 * ring as usize);
    for d in -ring..=ring {
        out.push((d, -ring));
        out.push((d, ring));
    }
    for d in -ring + 1..ring {
        out.push((-ring, d));
        out.push((ring, d));
    }
    out
}

pub fn directed_avg_error(a: &[Point2], b: &[Point2]) -> Result<f64> {
    check(a, b)?;
    let d = nearest_distances(a, b);
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

pub fn directed_hausdorff(a: &[Point2], b: &[Point2]) -> Result<f64> {
    check(a, b)?;
    Ok(nearest_distances(a, b).into_iter().fold(0.0, f64::max))
}

pub fn symmetric_avg_error(p: &[Point2], q: &[Point2]) -> Result<f64> {
    Ok((directed_avg_error(p, q)? + directed_avg_error(q, p)?) / 2.0)
}

pub fn symmetric_hausdorff(p: &[Point2], q: &[Point2]) -> Result<f64> {
    Ok((directed_hausdorff(p, q)? + directed_hausdorff(q, p)?) / 2.0)
}

/// Both symmetric errors between two profiles (mm).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileErrors {
    pub ae_mm: f64,
    pub hd_mm: f64,
}

impl ProfileErrors {
    pub fn between(truth: &ProfileCurve, predicted: &ProfileCurve) -> Self {
        let p = profile_sampling(truth);
        let q = profile_sampling(predicted);
        let to_q = nearest_distances(&p, &q);
        let to_p = nearest_distances(&q, &p);
        let mean = |d: &[f64]| d.iter().sum::<f64>() / d.len() as f64;
        let max = |d: &[f64]| d.iter().copied().fold(0.0, f64::max);
        Self {
            ae_mm: (mean(&to_q) + mean(&to_p)) / 2.0,
            hd_mm: (max(&to_q) + max(&to_p)) / 2.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn identity_is_zero() {
        let a: Vec<Point2> = (0..10).map(|i| Point2::new(i as f64, 2.0)).collect();
        assert_eq!(symmetric_avg_error(&a, &a).unwrap(), 0.0);
        assert_eq!(symmetric_hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_points() {
        let a = [Point2::new(0.0, 0.0)];
        let b = [Point2::new(3.0, 4.0)];
        assert_relative_eq!(directed_avg_error(&a, &b).unwrap(), 5.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(directed_avg_error(&[], &[Point2::zeros()]).is_err());
        assert!(symmetric_hausdorff(&[Point2::zeros()], &[]).is_err());
    }

    #[test]
    fn averaged_hausdorff_form() {
        // directed maxima 1 and 10: symmetric value is their mean, not the max
        let a = [Point2::new(0.0, 0.0)];
        let b = [Point2::new(1.0, 0.0), Point2::new(10.0, 0.0)];
        assert_relative_eq!(symmetric_hausdorff(&a, &b).unwrap(), 5.5);
    }

    #[test]
    fn bucket_index_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let b: Vec<Point2> = (0..3000)
            .map(|_| Point2::new(rng.random_range(0.0..50.0), rng.random_range(-20.0..20.0)))
            .collect();
        let index = BucketIndex::new(&b);
        for _ in 0..500 {
            let p = Point2::new(rng.random_range(-100.0..150.0), rng.random_range(-60.0..60.0));
            assert_eq!(index.nearest(&p), brute_nearest(&p, &b));
        }
    }
}
