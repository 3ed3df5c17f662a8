//! Bootstrap particle filter over profile curves.
//!
//! The accumulator is read as a mixture of isotropic Gaussians, one per
//! cell, centred on the cell and weighted by the cell value. A profile
//! sample scores the mean of the `top_k` largest weighted densities (the
//! divisor stays `top_k` even when fewer cells are non-zero). A particle
//! scores the mean over its equidistant samples.
//!
//! Randomness comes from three seeded ChaCha streams (initial/fresh draws,
//! motion noise, resampling offsets) so that each stage is reproducible on
//! its own.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::accumulator::RadialAccumulator;
use crate::error::{invalid, Error, Result};
use crate::geometry::Point2;
use crate::rng::derive_seed;
use crate::spline::ProfileCurve;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub particles: usize,
    /// Per-axis standard deviation of the knot motion noise (mm).
    pub sigma_m: f64,
    /// Fraction of the next generation drawn from the scored set; the rest is fresh.
    pub resample_ratio: f64,
    pub top_k: usize,
    /// Gaussian standard deviation (mm); defaults to the accumulator cell size.
    pub gaussian_sigma: Option<f64>,
    /// Curve sampling step for scoring (mm); defaults to half a cell.
    pub sample_step: Option<f64>,
    /// Pin the first free knot to the revolution axis.
    pub constrain_axis: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            particles: 1000,
            sigma_m: 2.0,
            resample_ratio: 0.8,
            top_k: 10,
            gaussian_sigma: None,
            sample_step: None,
            constrain_axis: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(invalid("particle count must be at least 1"));
        }
        if !(self.sigma_m >= 0.0) || !self.sigma_m.is_finite() {
            return Err(invalid("sigma_m must be finite and non-negative"));
        }
        if !(0.0..=1.0).contains(&self.resample_ratio) {
            return Err(invalid("resample_ratio must lie in [0, 1]"));
        }
        if self.top_k == 0 {
            return Err(invalid("top_k must be at least 1"));
        }
        for (name, v) in [("gaussian_sigma", self.gaussian_sigma), ("sample_step", self.sample_step)] {
            if let Some(v) = v {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(invalid(format!("{name} must be positive")));
                }
            }
        }
        Ok(())
    }

    pub fn gaussian_sigma_for(&self, cell: f64) -> f64 {
        self.gaussian_sigma.unwrap_or(cell)
    }

    pub fn sample_step_for(&self, cell: f64) -> f64 {
        self.sample_step.unwrap_or(cell / 2.0)
    }
}

/// Search box for the free knots: `[0, rho_max] × [0, h_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub rho_max: f64,
    pub h_max: f64,
}

impl Bounds {
    pub fn clamp(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(0.0, self.rho_max), p.y.clamp(0.0, self.h_max))
    }

    pub fn contains(&self, p: &Point2) -> bool {
        (0.0..=self.rho_max).contains(&p.x) && (0.0..=self.h_max).contains(&p.y)
    }
}

struct RowCells {
    weights: Vec<f64>,
    max_weight: f64,
}

/// Accumulator prepared for repeated mixture queries.
pub struct GmmScorer {
    cell: f64,
    rho_bins: usize,
    rows: Vec<RowCells>,
    max_weight: f64,
    top_k: usize,
    norm: f64,
    inv_two_var: f64,
}

impl GmmScorer {
    pub fn new(acc: &RadialAccumulator, sigma: f64, top_k: usize) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(invalid("gaussian sigma must be positive"));
        }
        if top_k == 0 {
            return Err(invalid("top_k must be at least 1"));
        }
        let rho_bins = acc.rho_bins();
        let rows: Vec<RowCells> = acc
            .values()
            .chunks(rho_bins)
            .map(|row| RowCells {
                weights: row.iter().map(|&w| if w > 0.0 { w } else { 0.0 }).collect(),
                max_weight: row.iter().copied().fold(0.0, f64::max),
            })
            .collect();
        let max_weight = rows.iter().map(|r| r.max_weight).fold(0.0, f64::max);
        Ok(Self {
            cell: acc.cell(),
            rho_bins,
            rows,
            max_weight,
            top_k,
            norm: 1.0 / (2.0 * PI * sigma * sigma),
            inv_two_var: 1.0 / (2.0 * sigma * sigma),
        })
    }

    pub fn from_config(acc: &RadialAccumulator, cfg: &FilterConfig) -> Result<Self> {
        Self::new(acc, cfg.gaussian_sigma_for(acc.cell()), cfg.top_k)
    }

    /// Mean of the `top_k` largest weighted Gaussian densities at `x`.
    pub fn point_score(&self, x: &Point2) -> f64 {
        let mut scratch = ScoreScratch::default();
        self.point_score_with(x, &mut scratch)
    }

    fn point_score_with(&self, x: &Point2, scratch: &mut ScoreScratch) -> f64 {
        if self.max_weight == 0.0 {
            return 0.0;
        }
        let k = self.top_k;
        scratch.top.clear();
        scratch.col_factor.clear();
        scratch.col_factor.resize(self.rho_bins, -1.0);

        let h_bins = self.rows.len();
        let row_start = nearest_bin(x.y, self.cell, h_bins);
        let col_start = nearest_bin(x.x, self.cell, self.rho_bins);
        // walk rows, and columns within each row, outward from the cell holding
        // x; a walk stops once even the heaviest remaining cell could not
        // enter the top k, since Gaussian factors only shrink further out
        for row_dir in [1isize, -1] {
            let mut j = if row_dir > 0 { row_start as isize } else { row_start as isize - 1 };
            while j >= 0 && (j as usize) < h_bins {
                let row = &self.rows[j as usize];
                let d = x.y - (j as f64 + 0.5) * self.cell;
                let row_factor = (-d * d * self.inv_two_var).exp() * self.norm;
                let full = scratch.top.len() == k;
                let kth = if full { scratch.top[k - 1] } else { 0.0 };
                if full && row_factor * self.max_weight <= kth {
                    break;
                }
                if !(full && row_factor * row.max_weight <= kth) {
                    for col_dir in [1isize, -1] {
                        let mut i = if col_dir > 0 { col_start as isize } else { col_start as isize - 1 };
                        while i >= 0 && (i as usize) < self.rho_bins {
                            let col = self.col_factor(x, i as usize, &mut scratch.col_factor);
                            let bound = row_factor * col;
                            if scratch.top.len() == k && bound * row.max_weight <= scratch.top[k - 1] {
                                break;
                            }
                            insert_top(&mut scratch.top, k, row.weights[i as usize] * bound);
                            i += col_dir;
                        }
                    }
                }
                j += row_dir;
            }
        }
        scratch.top.iter().sum::<f64>() / k as f64
    }

    /// Mean point score over equidistant samples of `curve`.
    pub fn curve_score(&self, curve: &ProfileCurve, step: f64) -> Result<f64> {
        if !(step > 0.0) {
            return Err(invalid("sampling step must be positive"));
        }
        Ok(self.curve_score_with(curve, step, &mut ScoreScratch::default()))
    }

    fn curve_score_with(&self, curve: &ProfileCurve, step: f64, scratch: &mut ScoreScratch) -> f64 {
        let mut samples = std::mem::take(&mut scratch.samples);
        let mut dense = std::mem::take(&mut scratch.dense);
        curve.sample_into(step, &mut dense, &mut samples);
        let total: f64 = samples.iter().map(|x| self.point_score_with(x, scratch)).sum();
        let score = total / samples.len() as f64;
        scratch.samples = samples;
        scratch.dense = dense;
        score
    }
}

impl GmmScorer {
    #[inline]
    fn col_factor(&self, x: &Point2, i: usize, cache: &mut [f64]) -> f64 {
        if cache[i] < 0.0 {
            let d = x.x - (i as f64 + 0.5) * self.cell;
            cache[i] = (-d * d * self.inv_two_var).exp();
        }
        cache[i]
    }
}

fn nearest_bin(v: f64, cell: f64, bins: usize) -> usize {
    ((v / cell).floor().max(0.0) as usize).min(bins - 1)
}

#[inline]
fn insert_top(top: &mut Vec<f64>, k: usize, v: f64) {
    if !(v > 0.0) {
        return;
    }
    if top.len() == k {
        if v <= top[k - 1] {
            return;
        }
        top.pop();
    }
    let pos = top.partition_point(|&t| t >= v);
    top.insert(pos, v);
}

#[derive(Default)]
struct ScoreScratch {
    top: Vec<f64>,
    col_factor: Vec<f64>,
    samples: Vec<Point2>,
    dense: Vec<Point2>,
}

pub fn gmm_point_score(x: &Point2, acc: &RadialAccumulator, cfg: &FilterConfig) -> Result<f64> {
    Ok(GmmScorer::from_config(acc, cfg)?.point_score(x))
}

pub fn particle_score(curve: &ProfileCurve, acc: &RadialAccumulator, cfg: &FilterConfig) -> Result<f64> {
    GmmScorer::from_config(acc, cfg)?.curve_score(curve, cfg.sample_step_for(acc.cell()))
}

/// Whether the last resampling drew from the scores or had to start over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleStatus {
    Resampled,
    Reinitialized,
}

#[derive(Debug, Clone)]
struct Streams {
    fresh: ChaCha8Rng,
    motion: ChaCha8Rng,
    resample: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            fresh: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x11)),
            motion: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x22)),
            resample: ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x33)),
        }
    }
}

/// The particle population with its seeded random streams.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<ProfileCurve>,
    scores: Option<Vec<f64>>,
    bounds: Bounds,
    streams: Streams,
}

impl PartialEq for ParticleSet {
    fn eq(&self, other: &Self) -> bool {
        self.particles == other.particles && self.scores == other.scores && self.bounds == other.bounds
    }
}

fn random_curve(rng: &mut ChaCha8Rng, bounds: &Bounds, constrain_axis: bool) -> ProfileCurve {
    let mut knots: [Point2; 3] = std::array::from_fn(|_| {
        let rho = rng.random::<f64>() * bounds.rho_max;
        let h = rng.random::<f64>() * bounds.h_max;
        Point2::new(rho, h)
    });
    if constrain_axis {
        knots[0].x = 0.0;
    }
    ProfileCurve::new(knots[0], knots[1], knots[2])
}

/// Draws `cfg.particles` random curves inside `bounds`.
pub fn init_particles(cfg: &FilterConfig, bounds: Bounds, seed: u64) -> Result<ParticleSet> {
    cfg.validate()?;
    if !(bounds.rho_max > 0.0 && bounds.h_max > 0.0) {
        return Err(invalid("search bounds must be positive"));
    }
    let mut streams = Streams::new(seed);
    let particles = (0..cfg.particles)
        .map(|_| random_curve(&mut streams.fresh, &bounds, cfg.constrain_axis))
        .collect();
    Ok(ParticleSet {
        particles,
        scores: None,
        bounds,
        streams,
    })
}

impl ParticleSet {
    /// Wraps explicit curves, e.g. to resume from saved state.
    pub fn from_particles(particles: Vec<ProfileCurve>, bounds: Bounds, seed: u64) -> Result<Self> {
        if particles.is_empty() {
            return Err(invalid("particle set cannot be empty"));
        }
        Ok(Self {
            particles,
            scores: None,
            bounds,
            streams: Streams::new(seed),
        })
    }

    pub fn particles(&self) -> &[ProfileCurve] {
        &self.particles
    }

    pub fn scores(&self) -> Option<&[f64]> {
        self.scores.as_deref()
    }

    pub fn bounds(&self) -> Bounds {
        self.bounds
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn set_scores(&mut self, scores: Vec<f64>) -> Result<()> {
        if scores.len() != self.particles.len() {
            return Err(invalid("one score per particle required"));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(invalid("scores must be finite and non-negative"));
        }
        self.scores = Some(scores);
        Ok(())
    }

    /// Adds Gaussian noise to every free knot, re-pins the first knot to the
    /// axis and clamps the knots into the search box.
    pub fn motion_update(&mut self, cfg: &FilterConfig) -> Result<()> {
        cfg.validate()?;
        self.scores = None;
        if cfg.sigma_m == 0.0 {
            return Ok(());
        }
        let noise = Normal::new(0.0, cfg.sigma_m).map_err(|e| invalid(e.to_string()))?;
        let bounds = self.bounds;
        let rng = &mut self.streams.motion;
        for curve in &mut self.particles {
            for knot in &mut curve.knots {
                let step = Point2::new(noise.sample(rng), noise.sample(rng));
                *knot = bounds.clamp(*knot + step);
            }
            if cfg.constrain_axis {
                curve.knots[0].x = 0.0;
            }
        }
        Ok(())
    }

    /// Scores every particle against `scorer`.
    pub fn score(&mut self, scorer: &GmmScorer, sample_step: f64) -> Result<()> {
        if !(sample_step > 0.0) {
            return Err(invalid("sampling step must be positive"));
        }
        let mut scratch = ScoreScratch::default();
        let scores = self
            .particles
            .iter()
            .map(|c| scorer.curve_score_with(c, sample_step, &mut scratch))
            .collect();
        self.scores = Some(scores);
        Ok(())
    }

    /// Highest-scoring particle, lowest index on ties.
    pub fn best(&self) -> Result<(usize, ProfileCurve, f64)> {
        let scores = self
            .scores
            .as_ref()
            .ok_or_else(|| Error::InvalidState("particles have not been scored".into()))?;
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        Ok((best, self.particles[best], scores[best]))
    }

    /// Systematic resampling of `round(ratio·N)` particles followed by fresh
    /// random particles for the remainder.
    pub fn systematic_resample(&mut self, cfg: &FilterConfig) -> Result<ResampleStatus> {
        cfg.validate()?;
        let n = self.particles.len();
        let total: f64 = self.scores.as_ref().map_or(0.0, |s| s.iter().sum());
        let keep = ((cfg.resample_ratio * n as f64).round() as usize).min(n);
        let mut next = Vec::with_capacity(n);
        let status = if total > 0.0 && total.is_finite() {
            let scores = self.scores.as_ref().expect("total > 0 implies scores");
            let picks = systematic_indices(scores, keep, &mut self.streams.resample);
            next.extend(picks.into_iter().map(|i| self.particles[i]));
            ResampleStatus::Resampled
        } else {
            ResampleStatus::Reinitialized
        };
        while next.len() < n {
            next.push(random_curve(&mut self.streams.fresh, &self.bounds, cfg.constrain_axis));
        }
        self.particles = next;
        self.scores = None;
        Ok(status)
    }
}

/// Indices drawn by systematic resampling: one offset `u ∈ [0, 1/count)`,
/// then strides of `1/count` over the normalized cumulative weights.
pub fn systematic_indices<R: Rng>(weights: &[f64], count: usize, rng: &mut R) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if count == 0 || weights.is_empty() || !(total > 0.0) {
        return Vec::new();
    }
    let step = 1.0 / count as f64;
    let offset = rng.random::<f64>() * step;
    let mut picks = Vec::with_capacity(count);
    let mut i = 0;
    let mut cumulative = weights[0] / total;
    for k in 0..count {
        let u = offset + k as f64 * step;
        while u >= cumulative && i + 1 < weights.len() {
            i += 1;
            cumulative += weights[i] / total;
        }
        picks.push(i);
    }
    picks
}

pub fn best_particle(set: &ParticleSet) -> Result<ProfileCurve> {
    set.best().map(|(_, c, _)| c)
}

/// Result of one filter iteration on one accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub best: ProfileCurve,
    pub best_score: f64,
    pub mean_score: f64,
    pub status: ResampleStatus,
}

/// Motion, scoring, best-particle extraction, then resampling.
pub fn step(set: &mut ParticleSet, acc: &RadialAccumulator, cfg: &FilterConfig) -> Result<StepOutcome> {
    let scorer = GmmScorer::from_config(acc, cfg)?;
    step_with(set, &scorer, cfg.sample_step_for(acc.cell()), cfg)
}

pub fn step_with(
    set: &mut ParticleSet,
    scorer: &GmmScorer,
    sample_step: f64,
    cfg: &FilterConfig,
) -> Result<StepOutcome> {
    set.motion_update(cfg)?;
    set.score(scorer, sample_step)?;
    let (_, best, best_score) = set.best()?;
    let scores = set.scores().expect("just scored");
    let mean_score = scores.iter().sum::<f64>() / scores.len() as f64;
    let status = set.systematic_resample(cfg)?;
    Ok(StepOutcome {
        best,
        best_score,
        mean_score,
        status,
    })
}
