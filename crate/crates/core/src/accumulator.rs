//! Radial density accumulator over the `(rho, h)` half-plane.
//!
//! Every canonical-frame point falls into a 3D annulus (a ring of width
//! `cell` in rho and height `cell` in h). A cell holds the point count
//! divided by the annulus volume, optionally scaled by `1 − ‖r̄‖`, where r̄
//! is the resultant vector of the annulus angles. Angles are first stretched
//! so that the arc covered by the whole cloud maps onto the full circle: a
//! narrow sensor setup is not penalized, while a blob that fills only part
//! of that arc stays concentrated.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{wrap_angle, PointCloud, PolarFrame};

/// `π·((ρ₀+Δρ)² − ρ₀²)·Δh`.
pub fn annulus_volume(rho_lo: f64, delta_rho: f64, delta_h: f64) -> f64 {
    let outer = rho_lo + delta_rho;
    PI * (outer * outer - rho_lo * rho_lo) * delta_h
}

/// Mean resultant length `‖(1/n)·Σ(cos a, sin a)‖` of a set of angles.
pub fn resultant_length(angles: &[f64]) -> f64 {
    if angles.is_empty() {
        return 0.0;
    }
    let (c, s) = angles
        .iter()
        .fold((0.0, 0.0), |(c, s), a| (c + a.cos(), s + a.sin()));
    let n = angles.len() as f64;
    ((c / n).powi(2) + (s / n).powi(2)).sqrt().min(1.0)
}

/// Resultant length of the annulus angles after stretching their observed
/// span onto `[0, 2π]`, in `[0, 1]`.
///
/// The span is the shortest arc holding every angle, so it does not depend
/// on where the angular origin sits. A zero span (one point, or all angles
/// equal) counts as fully concentrated and returns 1.
pub fn radial_spread(thetas: &[f64]) -> Result<f64> {
    if thetas.is_empty() {
        return Err(invalid("radial spread of an empty annulus"));
    }
    let mut sorted: Vec<f64> = thetas.iter().map(|&t| wrap_angle(t)).collect();
    Ok(spread_of_sorted(&mut sorted))
}

/// Shortest arc `[lo, lo + span]` holding a set of angles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub lo: f64,
    pub span: f64,
}

impl Arc {
    /// Maps an angle of the arc onto `[0, 2π]`.
    pub fn stretch(&self, theta: f64) -> f64 {
        let offset = (theta - self.lo).rem_euclid(TAU);
        TAU * offset / self.span
    }
}

/// Sorts `angles` (already in `[0, 2π)`) and returns the arc left after
/// removing the widest empty gap, wrap-around included.
pub fn covering_arc(angles: &mut [f64]) -> Arc {
    angles.sort_by(f64::total_cmp);
    let n = angles.len();
    let mut start = 0;
    let mut widest = angles[0] + TAU - angles[n - 1];
    for k in 1..n {
        let gap = angles[k] - angles[k - 1];
        if gap > widest {
            widest = gap;
            start = k;
        }
    }
    Arc {
        lo: angles[start],
        span: (TAU - widest).max(0.0),
    }
}

fn spread_of_sorted(angles: &mut [f64]) -> f64 {
    let arc = covering_arc(angles);
    if !(arc.span > 0.0) {
        return 1.0;
    }
    let stretched: Vec<f64> = angles.iter().map(|&t| arc.stretch(t)).collect();
    resultant_length(&stretched)
}

/// Grid geometry shared by the accumulator and its consumers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Cell size along both rho and h (mm).
    pub cell: f64,
    /// Turntable radius, the rho extent (mm).
    pub radius: f64,
    /// Height extent (mm).
    pub h_max: f64,
}

impl GridSpec {
    pub fn new(cell: f64, radius: f64, h_max: f64) -> Result<Self> {
        for (name, v) in [("cell", cell), ("radius", radius), ("h_max", h_max)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { cell, radius, h_max })
    }

    /// Square grid of `bins × bins` cells over `[0, r]²`.
    pub fn square(radius: f64, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(invalid("grid needs at least one bin"));
        }
        Self::new(radius / bins as f64, radius, radius)
    }

    pub fn rho_bins(&self) -> usize {
        bin_count(self.radius, self.cell)
    }

    pub fn h_bins(&self) -> usize {
        bin_count(self.h_max, self.cell)
    }

    /// Cell `(rho_bin, h_bin)` of a polar sample, `None` when discarded.
    #[inline]
    pub fn locate(&self, rho: f64, h: f64) -> Option<(usize, usize)> {
        if h < 0.0 || h > self.h_max || rho > self.radius {
            return None;
        }
        let i = (rho / self.cell).floor() as usize;
        let j = (h / self.cell).floor() as usize;
        (i < self.rho_bins() && j < self.h_bins()).then_some((i, j))
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.cell, (j as f64 + 0.5) * self.cell)
    }
}

fn bin_count(extent: f64, cell: f64) -> usize {
    // guard against 160/10 = 16.000000000000004 style ceil overshoot
    let ratio = extent / cell;
    let rounded = ratio.round();
    if (ratio - rounded).abs() < 1e-9 * ratio.max(1.0) {
        rounded.max(1.0) as usize
    } else {
        ratio.ceil() as usize
    }
}

/// One annulus with the indices of its member points.
#[derive(Debug, Clone, PartialEq)]
pub struct Annulus {
    pub rho_bin: usize,
    pub h_bin: usize,
    pub rho_lo: f64,
    pub h_lo: f64,
    pub delta_rho: f64,
    pub delta_h: f64,
    pub members: Vec<usize>,
}

impl Annulus {
    pub fn volume(&self) -> f64 {
        annulus_volume(self.rho_lo, self.delta_rho, self.delta_h)
    }
}

/// Groups canonical-frame points into non-empty annuli, ordered by
/// `(h_bin, rho_bin)`.
pub fn annuli(cloud: &PointCloud, grid: &GridSpec) -> Vec<Annulus> {
    let frame = PolarFrame::canonical();
    let (nr, nh) = (grid.rho_bins(), grid.h_bins());
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); nr * nh];
    for (idx, p) in cloud.iter().enumerate() {
        let q = frame.to_polar(p);
        if let Some((i, j)) = grid.locate(q.rho, q.h) {
            members[j * nr + i].push(idx);
        }
    }
    members
        .into_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(k, members)| {
            let (i, j) = (k % nr, k / nr);
            Annulus {
                rho_bin: i,
                h_bin: j,
                rho_lo: i as f64 * grid.cell,
                h_lo: j as f64 * grid.cell,
                delta_rho: grid.cell,
                delta_h: grid.cell,
                members,
            }
        })
        .collect()
}

/// Dense density grid, stored row-major with one row per h bin.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialAccumulator {
    grid: GridSpec,
    rho_bins: usize,
    h_bins: usize,
    values: Vec<f64>,
    enhanced: bool,
}

impl RadialAccumulator {
    pub fn zeros(grid: GridSpec, enhanced: bool) -> Self {
        let (rho_bins, h_bins) = (grid.rho_bins(), grid.h_bins());
        Self {
            grid,
            rho_bins,
            h_bins,
            values: vec![0.0; rho_bins * h_bins],
            enhanced,
        }
    }

    /// Builds the accumulator from a canonical-frame cloud.
    pub fn build(cloud: &PointCloud, grid: GridSpec, enhanced: bool) -> Self {
        let mut acc = Self::zeros(grid, enhanced);
        let frame = PolarFrame::canonical();
        let cells = acc.values.len();
        let mut counts = vec![0usize; cells];
        // on-axis points have no direction; they count towards density only
        let mut located = Vec::with_capacity(cloud.len());
        for p in cloud {
            let q = frame.to_polar(p);
            if let Some((i, j)) = grid.locate(q.rho, q.h) {
                let k = j * acc.rho_bins + i;
                counts[k] += 1;
                if q.rho > 0.0 {
                    located.push((k, q.theta));
                }
            }
        }
        let mut spread = vec![1.0; cells];
        if enhanced && !located.is_empty() {
            let mut all: Vec<f64> = located.iter().map(|l| l.1).collect();
            let arc = covering_arc(&mut all);
            if arc.span > 0.0 {
                let mut directed = vec![0usize; cells];
                let mut cos_sum = vec![0.0; cells];
                let mut sin_sum = vec![0.0; cells];
                for &(k, theta) in &located {
                    let (s, c) = arc.stretch(theta).sin_cos();
                    directed[k] += 1;
                    cos_sum[k] += c;
                    sin_sum[k] += s;
                }
                for k in 0..cells {
                    if directed[k] > 1 {
                        let n = directed[k] as f64;
                        spread[k] = ((cos_sum[k] / n).powi(2) + (sin_sum[k] / n).powi(2)).sqrt().min(1.0);
                    }
                }
            }
        }

        for k in 0..cells {
            if counts[k] == 0 {
                continue;
            }
            let i = k % acc.rho_bins;
            let density = counts[k] as f64 / annulus_volume(i as f64 * grid.cell, grid.cell, grid.cell);
            acc.values[k] = if enhanced {
                (1.0 - spread[k]) * density
            } else {
                density
            };
        }
        acc
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn rho_bins(&self) -> usize {
        self.rho_bins
    }

    pub fn h_bins(&self) -> usize {
        self.h_bins
    }

    pub fn is_enhanced(&self) -> bool {
        self.enhanced
    }

    pub fn cell(&self) -> f64 {
        self.grid.cell
    }

    /// Value at `(rho_bin, h_bin)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.rho_bins + i]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(invalid(format!("accumulator values must be finite and >= 0, got {value}")));
        }
        self.values[j * self.rho_bins + i] = value;
        Ok(())
    }

    /// Row-major values, one row per h bin.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Space-separated text grid, one line per h bin from h = 0 upward.
    pub fn to_text_grid(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.rho_bins) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`Self::to_text_grid`] output back into a grid of the given geometry.
    pub fn from_text_grid(text: &str, grid: GridSpec, enhanced: bool) -> Result<Self> {
        let mut acc = Self::zeros(grid, enhanced);
        let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        if rows.len() != acc.h_bins {
            return Err(invalid(format!("expected {} rows, found {}", acc.h_bins, rows.len())));
        }
        for (j, line) in rows.iter().enumerate() {
            let cells: Vec<&str> = line.split_whitespace().collect();
            if cells.len() != acc.rho_bins {
                return Err(invalid(format!(
                    "row {j}: expected {} values, found {}",
                    acc.rho_bins,
                    cells.len()
                )));
            }
            for (i, c) in cells.iter().enumerate() {
                let v: f64 = c.parse().map_err(|_| invalid(format!("row {j}: bad value {c:?}")))?;
                acc.set(i, j, v)?;
            }
        }
        Ok(acc)
    }
}

pub fn build_accumulator(cloud: &PointCloud, grid: GridSpec, enhanced: bool) -> RadialAccumulator {
    RadialAccumulator::build(cloud, grid, enhanced)
}
