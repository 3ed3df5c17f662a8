//! Turntable detection in a single sensor cloud.
//!
//! The plate plane comes from an mSAC search (truncated quadratic cost,
//! adaptive iteration count) optionally polished by local optimization and
//! a weighted least-squares pass. The plate centre is then located with a
//! flat-kernel mean shift over the plane inliers, each inlier weighted by
//! the area its pixel covers on the plate so that dense near-sensor regions
//! do not pull the estimate.

use nalgebra::{Matrix3, SymmetricEigen};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::rng::derive_seed;

/// Plane `normal · p = offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: Point3,
    pub offset: f64,
}

impl Plane {
    pub fn signed_distance(&self, p: &Point3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn project(&self, p: &Point3) -> Point3 {
        p - self.normal * self.signed_distance(p)
    }

    pub fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    fn through_points(a: &Point3, b: &Point3, c: &Point3) -> Option<Self> {
        let n = (b - a).cross(&(c - a));
        let norm = n.norm();
        let scale = (b - a).norm() * (c - a).norm();
        if norm <= 1e-12 * scale || norm == 0.0 {
            return None;
        }
        let normal = n / norm;
        Some(Self {
            normal,
            offset: normal.dot(a),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Refinement {
    pub local_optimization: bool,
    pub weighted_least_squares: bool,
}

impl Refinement {
    pub const NONE: Self = Self {
        local_optimization: false,
        weighted_least_squares: false,
    };
    pub const ALL: Self = Self {
        local_optimization: true,
        weighted_least_squares: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlaneFitConfig {
    /// Inlier distance threshold (mm).
    pub inlier_threshold: f64,
    pub max_iterations: usize,
    pub confidence: f64,
    /// Prior inlier ratio used before the first hypothesis is scored.
    pub expected_inlier_ratio: f64,
    pub refine: Refinement,
}

impl Default for PlaneFitConfig {
    fn default() -> Self {
        Self {
            inlier_threshold: 5.0,
            max_iterations: 1000,
            confidence: 0.99,
            expected_inlier_ratio: 0.3,
            refine: Refinement::ALL,
        }
    }
}

impl PlaneFitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0) {
            return Err(invalid("inlier_threshold must be positive"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(invalid("confidence must lie in (0, 1)"));
        }
        if !(self.expected_inlier_ratio > 0.0 && self.expected_inlier_ratio < 1.0) {
            return Err(invalid("expected_inlier_ratio must lie in (0, 1)"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneFit {
    pub plane: Plane,
    pub inliers: Vec<usize>,
    /// mSAC cost of the returned plane.
    pub cost: f64,
    /// mSAC cost of the best sampled hypothesis, before refinement.
    pub raw_cost: f64,
    pub iterations: usize,
}

/// `Σ min(d², t²)` together with the inlier count.
pub fn msac_cost(points: &[Point3], plane: &Plane, threshold: f64) -> (f64, usize) {
    let t2 = threshold * threshold;
    points.iter().fold((0.0, 0), |(cost, n), p| {
        let d2 = plane.signed_distance(p).powi(2);
        if d2 < t2 {
            (cost + d2, n + 1)
        } else {
            (cost + t2, n)
        }
    })
}

fn inlier_indices(points: &[Point3], plane: &Plane, threshold: f64) -> Vec<usize> {
    let t2 = threshold * threshold;
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| plane.signed_distance(p).powi(2) < t2)
        .map(|(i, _)| i)
        .collect()
}

fn required_iterations(inlier_ratio: f64, confidence: f64, cap: usize) -> usize {
    if inlier_ratio >= 1.0 {
        return 1;
    }
    let p_good = inlier_ratio.powi(3);
    if p_good <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if k.is_finite() {
        (k.ceil().max(1.0) as usize).min(cap)
    } else {
        cap
    }
}

/// Weighted total-least-squares plane: weighted centroid plus the smallest
/// eigenvector of the weighted scatter matrix.
pub fn fit_plane_least_squares(points: &[Point3], weights: Option<&[f64]>) -> Option<Plane> {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..points.len()).map(w).sum();
    if points.len() < 3 || !(total > 0.0) {
        return None;
    }
    let centroid = points
        .iter()
        .enumerate()
        .fold(Point3::zeros(), |acc, (i, p)| acc + p * w(i))
        / total;
    let mut scatter = Matrix3::zeros();
    for (i, p) in points.iter().enumerate() {
        let d = p - centroid;
        scatter += d * d.transpose() * w(i);
    }
    let eig = SymmetricEigen::new(scatter);
    let normal: Point3 = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let norm = normal.norm();
    if !(norm > 0.0) {
        return None;
    }
    let normal = normal / norm;
    Some(Plane {
        normal,
        offset: normal.dot(&centroid),
    })
}

fn check_spread(points: &[Point3]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Point3::zeros(), |a, p| a + p) / n;
    let scatter = points
        .iter()
        .fold(Matrix3::zeros(), |acc, p| acc + (p - centroid) * (p - centroid).transpose());
    let mut ev: Vec<f64> = SymmetricEigen::new(scatter).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Err(Error::DegenerateInput("points are collinear or coincident".into()));
    }
    Ok(())
}

/// Robust plane estimate with mSAC scoring and optional refinement.
///
/// Refinement steps are accepted only when they do not raise the mSAC cost.
pub fn fit_plane_msac(cloud: &PointCloud, cfg: &PlaneFitConfig, seed: u64) -> Result<PlaneFit> {
    cfg.validate()?;
    let points = cloud.points();
    check_spread(points)?;
    let n = points.len();
    let t = cfg.inlier_threshold;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut best: Option<(f64, Plane)> = None;
    let mut needed = required_iterations(cfg.expected_inlier_ratio, cfg.confidence, cfg.max_iterations);
    let mut iterations = 0;
    while iterations < needed {
        iterations += 1;
        let sample = index::sample(&mut rng, n, 3);
        let Some(plane) = Plane::through_points(
            &points[sample.index(0)],
            &points[sample.index(1)],
            &points[sample.index(2)],
        ) else {
            continue;
        };
        let (cost, inliers) = msac_cost(points, &plane, t);
        if best.is_none_or(|(c, _)| cost < c) {
            best = Some((cost, plane));
            needed = required_iterations(inliers as f64 / n as f64, cfg.confidence, cfg.max_iterations);
        }
    }
    let (raw_cost, mut plane) =
        best.ok_or_else(|| Error::DegenerateInput("every sampled triple was collinear".into()))?;
    let mut cost = raw_cost;

    if cfg.refine.local_optimization {
        let mut inliers = inlier_indices(points, &plane, t);
        for _ in 0..10 {
            let subset: Vec<Point3> = inliers.iter().map(|&i| points[i]).collect();
            let Some(candidate) = fit_plane_least_squares(&subset, None) else {
                break;
            };
            let (c, _) = msac_cost(points, &candidate, t);
            if c >= cost {
                break;
            }
            plane = candidate;
            cost = c;
            let next = inlier_indices(points, &plane, t);
            if next == inliers {
                break;
            }
            inliers = next;
        }
    }

    if cfg.refine.weighted_least_squares {
        let t2 = t * t;
        let weights: Vec<f64> = points
            .iter()
            .map(|p| (1.0 - plane.signed_distance(p).powi(2) / t2).clamp(0.0, 1.0))
            .collect();
        if let Some(candidate) = fit_plane_least_squares(points, Some(&weights)) {
            let (c, _) = msac_cost(points, &candidate, t);
            if c <= cost {
                plane = candidate;
                cost = c;
            }
        }
    }

    Ok(PlaneFit {
        inliers: inlier_indices(points, &plane, t),
        plane,
        cost,
        raw_cost,
        iterations,
    })
}

/// Pinhole intrinsics of a depth sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorIntrinsics {
    /// Focal length in pixels.
    pub focal_length: f64,
    pub pixel_pitch: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Default for SensorIntrinsics {
    // 160x120 depth camera with a 90 degree horizontal field of view
    fn default() -> Self {
        Self {
            focal_length: 80.0,
            pixel_pitch: 1.0,
            cx: 80.0,
            cy: 60.0,
            width: 160,
            height: 120,
        }
    }
}

pub const GRAZING_COS_FLOOR: f64 = 0.1;

/// Plate area imaged by the pixel that sees `p`: `(z·pitch/f)² / max(cos α, 0.1)`.
///
/// `z` is the depth along the sensor's optical (+z) axis and `α` the angle
/// between the plate normal and the viewing ray.
pub fn projection_weight(
    p: &Point3,
    plane_normal: &Point3,
    sensor: &SensorIntrinsics,
    sensor_origin: &Point3,
) -> Result<f64> {
    let ray = p - sensor_origin;
    let depth = ray.z;
    if !(depth > 0.0) {
        return Err(invalid(format!("point depth must be positive, got {depth}")));
    }
    let cos = (plane_normal.dot(&ray) / (ray.norm() * plane_normal.norm())).abs();
    let footprint = depth * sensor.pixel_pitch / sensor.focal_length;
    Ok(footprint * footprint / cos.max(GRAZING_COS_FLOOR))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanShiftConfig {
    /// Flat kernel radius (mm); `None` means twice the turntable radius, so the
    /// kernel covers the whole plate from any starting inlier.
    pub bandwidth: Option<f64>,
    pub convergence_eps: f64,
    pub max_iterations: usize,
    pub max_restarts: usize,
}

impl Default for MeanShiftConfig {
    fn default() -> Self {
        Self {
            bandwidth: None,
            convergence_eps: 3.0,
            max_iterations: 200,
            max_restarts: 10,
        }
    }
}

/// Weighted flat-kernel mean shift from a random inlier, projected onto `plane`.
pub fn meanshift_center(
    inliers: &PointCloud,
    weights: &[f64],
    bandwidth: f64,
    cfg: &MeanShiftConfig,
    plane: &Plane,
    seed: u64,
) -> Result<Point3> {
    let points = inliers.points();
    if points.is_empty() {
        return Err(Error::InsufficientData("mean shift needs at least one inlier".into()));
    }
    if weights.len() != points.len() {
        return Err(invalid(format!(
            "{} weights for {} inliers",
            weights.len(),
            points.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(invalid("weights must be finite and non-negative"));
    }
    if !(bandwidth > 0.0) {
        return Err(invalid("kernel bandwidth must be positive"));
    }
    let bw2 = bandwidth * bandwidth;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    'restart: for _ in 0..=cfg.max_restarts {
        let mut x = points[rng.random_range(0..points.len())];
        for _ in 0..cfg.max_iterations {
            let mut sum = Point3::zeros();
            let mut total = 0.0;
            for (p, &w) in points.iter().zip(weights) {
                if (p - x).norm_squared() <= bw2 {
                    sum += p * w;
                    total += w;
                }
            }
            if !(total > 0.0) {
                continue 'restart;
            }
            let next = sum / total;
            let shift = (next - x).norm();
            x = next;
            if shift < cfg.convergence_eps {
                break;
            }
        }
        return Ok(plane.project(&x));
    }
    Err(Error::NoConvergence {
        restarts: cfg.max_restarts,
    })
}

/// Detected plate: centre, unit normal pointing away from the plate towards
/// the sensor, and the known radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurntableModel {
    pub center: Point3,
    pub normal: Point3,
    pub radius: f64,
}

impl TurntableModel {
    pub fn new(center: Point3, normal: Point3, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("turntable radius must be positive"));
        }
        let norm = normal.norm();
        if !(norm > 0.0) || !center.iter().all(|c| c.is_finite()) {
            return Err(invalid("turntable normal must be non-zero and finite"));
        }
        Ok(Self {
            center,
            normal: normal / norm,
            radius,
        })
    }

    pub fn plane(&self) -> Plane {
        Plane {
            normal: self.normal,
            offset: self.normal.dot(&self.center),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectionConfig {
    pub plane: PlaneFitConfig,
    pub meanshift: MeanShiftConfig,
    /// Largest centre displacement between consecutive frames (mm).
    pub sigma_c: f64,
    /// Largest normal change between consecutive frames (radians).
    pub max_normal_angle: f64,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            plane: PlaneFitConfig::default(),
            meanshift: MeanShiftConfig::default(),
            sigma_c: 5.0,
            max_normal_angle: 2f64.to_radians(),
        }
    }
}

/// One-frame turntable estimate; the sensor sits at the frame origin.
pub fn estimate_turntable(
    cloud: &PointCloud,
    radius: f64,
    intrinsics: &SensorIntrinsics,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<TurntableModel> {
    let fit = fit_plane_msac(cloud, &cfg.plane, derive_seed(seed, 0))?;
    // orient the normal towards the sensor, i.e. to the side the object stands on
    let plane = if fit.plane.offset > 0.0 {
        fit.plane.flipped()
    } else {
        fit.plane
    };
    let inliers = cloud.select(&fit.inliers);
    let origin = Point3::zeros();
    let weights: Vec<f64> = inliers
        .iter()
        .map(|p| projection_weight(p, &plane.normal, intrinsics, &origin).unwrap_or(0.0))
        .collect();
    let bandwidth = cfg.meanshift.bandwidth.unwrap_or(2.0 * radius);
    let center = meanshift_center(&inliers, &weights, bandwidth, &cfg.meanshift, &plane, derive_seed(seed, 1))?;
    TurntableModel::new(center, plane.normal, radius)
}

/// Angle between two unit vectors, robust near 0 and π.
pub fn angle_between(a: &Point3, b: &Point3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Per-sensor detection state: a turntable counts as detected once two
/// consecutive frames agree on the normal and the centre.
#[derive(Debug, Clone)]
pub struct TurntableDetector {
    radius: f64,
    intrinsics: SensorIntrinsics,
    cfg: DetectionConfig,
    seed: u64,
    previous: Option<TurntableModel>,
    frames_seen: usize,
    last_error: Option<Error>,
}

impl TurntableDetector {
    pub fn new(radius: f64, intrinsics: SensorIntrinsics, cfg: DetectionConfig, seed: u64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(invalid("turntable radius must be positive"));
        }
        cfg.plane.validate()?;
        Ok(Self {
            radius,
            intrinsics,
            cfg,
            seed,
            previous: None,
            frames_seen: 0,
            last_error: None,
        })
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn last_error(&self) -> Option<&Error> {
        self.last_error.as_ref()
    }

    /// Feeds one frame; returns the model once it is stable.
    pub fn observe(&mut self, cloud: &PointCloud) -> Option<TurntableModel> {
        let frame_seed = derive_seed(self.seed, self.frames_seen as u64);
        self.frames_seen += 1;
        let model = match estimate_turntable(cloud, self.radius, &self.intrinsics, &self.cfg, frame_seed) {
            Ok(m) => m,
            Err(e) => {
                self.last_error = Some(e);
                self.previous = None;
                return None;
            }
        };
        let stable = self.previous.is_some_and(|prev| {
            angle_between(&prev.normal, &model.normal) <= self.cfg.max_normal_angle
                && (prev.center - model.center).norm() <= self.cfg.sigma_c
        });
        self.previous = Some(model);
        stable.then_some(model)
    }
}

/// Runs the detector over a frame stream until two consecutive estimates agree.
///
/// Returns the last model and the index of the frame that completed detection.
pub fn detect_turntable_stable<I>(
    frames: I,
    radius: f64,
    intrinsics: &SensorIntrinsics,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<(TurntableModel, usize)>
where
    I: IntoIterator<Item = PointCloud>,
{
    let mut detector = TurntableDetector::new(radius, *intrinsics, *cfg, seed)?;
    for (i, frame) in frames.into_iter().enumerate() {
        if let Some(model) = detector.observe(&frame) {
            return Ok((model, i));
        }
    }
    let reason = match detector.last_error() {
        Some(e) => format!("stream ended before stability ({e})"),
        None => format!("stream ended after {} frames without stability", detector.frames_seen()),
    };
    Err(Error::DetectionFailed(reason))
}
