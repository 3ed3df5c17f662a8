//! Frame-by-frame reconstruction driver.
//!
//! Phase one feeds every sensor cloud to its turntable detector until all
//! detectors report a stable plate. The registration transforms are then
//! fixed for the rest of the sequence. Every later frame is merged into the
//! canonical frame, stripped of the plate band, binned into a radial accumulator and used for one
//! particle-filter update whose best particle is the frame's profile.

use serde::{Deserialize, Serialize};

use crate::accumulator::{GridSpec, RadialAccumulator};
use crate::error::{invalid, Result};
use crate::filter::{init_particles, step_with, Bounds, FilterConfig, GmmScorer, ParticleSet, StepOutcome};
use crate::geometry::PointCloud;
use crate::registration::{merge_registered, registration_transform, RigidTransform};
use crate::rng::derive_seed;
use crate::spline::ProfileCurve;
use crate::table::{DetectionConfig, SensorIntrinsics, TurntableDetector, TurntableModel};

/// How the particle population carries over between frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TemporalMode {
    /// One filter update per frame on the population from the previous frame.
    Filter,
    /// Fresh population each frame, refined by `iterations` updates on that frame alone.
    Reinitialize { iterations: usize },
}

impl Default for TemporalMode {
    fn default() -> Self {
        Self::Filter
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSetup {
    pub intrinsics: SensorIntrinsics,
    /// Rotation about the revolution axis that completes this sensor's registration (rad).
    pub phi: f64,
}

impl Default for SensorSetup {
    fn default() -> Self {
        Self {
            intrinsics: SensorIntrinsics::default(),
            phi: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Turntable radius (mm).
    pub radius: f64,
    /// Accumulator cell size (mm).
    pub cell: f64,
    /// Accumulator height limit (mm); defaults to the radius.
    pub h_max: Option<f64>,
    pub enhanced: bool,
    /// Points less than this height above the plate are treated as plate and dropped (mm).
    pub plate_margin: f64,
    pub filter: FilterConfig,
    pub detection: DetectionConfig,
    pub temporal: TemporalMode,
    pub sensors: Vec<SensorSetup>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            radius: 160.0,
            cell: 10.0,
            h_max: None,
            enhanced: true,
            plate_margin: 5.0,
            filter: FilterConfig::default(),
            detection: DetectionConfig::default(),
            temporal: TemporalMode::Filter,
            sensors: vec![SensorSetup::default()],
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.cell, self.radius, self.h_max.unwrap_or(self.radius))
    }

    pub fn bounds(&self) -> Bounds {
        Bounds {
            rho_max: self.radius,
            h_max: self.h_max.unwrap_or(self.radius),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.filter.validate()?;
        self.detection.plane.validate()?;
        if !(self.plate_margin >= 0.0) {
            return Err(invalid("plate_margin must be non-negative"));
        }
        if self.sensors.is_empty() {
            return Err(invalid("at least one sensor is required"));
        }
        if let TemporalMode::Reinitialize { iterations: 0 } = self.temporal {
            return Err(invalid("reinitialization needs at least one iteration"));
        }
        if self.sensors.iter().any(|s| !s.phi.is_finite()) {
            return Err(invalid("sensor phi must be finite"));
        }
        Ok(())
    }
}

/// Reconstruction of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameResult {
    pub outcome: StepOutcome,
    pub accumulator: RadialAccumulator,
    pub merged_points: usize,
}

impl FrameResult {
    pub fn profile(&self) -> ProfileCurve {
        self.outcome.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    /// Still waiting for a stable turntable; one flag per sensor.
    Detecting { stable: Vec<bool> },
    /// This frame completed detection; registration is now fixed.
    Registered { tables: Vec<TurntableModel> },
    Reconstructed(Box<FrameResult>),
}

#[derive(Debug, Clone)]
enum Phase {
    Detecting {
        detectors: Vec<TurntableDetector>,
        found: Vec<Option<TurntableModel>>,
    },
    Tracking {
        transforms: Vec<RigidTransform>,
        particles: Option<ParticleSet>,
    },
}

/// One reconstruction run over a multi-sensor frame stream.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: PipelineConfig,
    grid: GridSpec,
    phase: Phase,
    frame: usize,
    tables: Option<Vec<TurntableModel>>,
}

const FILTER_STREAM: u64 = 0xF1;
const DETECTOR_STREAM: u64 = 0xD0;

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let detectors = cfg
            .sensors
            .iter()
            .enumerate()
            .map(|(i, s)| {
                TurntableDetector::new(
                    cfg.radius,
                    s.intrinsics,
                    cfg.detection,
                    derive_seed(cfg.seed, DETECTOR_STREAM + i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let found = vec![None; detectors.len()];
        Ok(Self {
            grid: cfg.grid()?,
            phase: Phase::Detecting { detectors, found },
            frame: 0,
            tables: None,
            cfg,
        })
    }

    /// Skips detection and tracks from the first frame with known transforms.
    pub fn with_transforms(cfg: PipelineConfig, transforms: Vec<RigidTransform>) -> Result<Self> {
        cfg.validate()?;
        if transforms.len() != cfg.sensors.len() {
            return Err(invalid("one transform per sensor required"));
        }
        Ok(Self {
            grid: cfg.grid()?,
            phase: Phase::Tracking {
                transforms,
                particles: None,
            },
            frame: 0,
            tables: None,
            cfg,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn frames_processed(&self) -> usize {
        self.frame
    }

    /// Detected turntables, once detection has finished.
    pub fn tables(&self) -> Option<&[TurntableModel]> {
        self.tables.as_deref()
    }

    pub fn transforms(&self) -> Option<&[RigidTransform]> {
        match &self.phase {
            Phase::Tracking { transforms, .. } => Some(transforms),
            Phase::Detecting { .. } => None,
        }
    }

    pub fn particles(&self) -> Option<&ParticleSet> {
        match &self.phase {
            Phase::Tracking { particles, .. } => particles.as_ref(),
            Phase::Detecting { .. } => None,
        }
    }

    pub fn process_frame(&mut self, clouds: &[PointCloud]) -> Result<FrameOutcome> {
        if clouds.len() != self.cfg.sensors.len() {
            return Err(invalid(format!(
                "expected {} sensor clouds, got {}",
                self.cfg.sensors.len(),
                clouds.len()
            )));
        }
        let frame = self.frame;
        self.frame += 1;
        match &mut self.phase {
            Phase::Detecting { detectors, found } => {
                for ((detector, slot), cloud) in detectors.iter_mut().zip(found.iter_mut()).zip(clouds) {
                    if slot.is_none() {
                        *slot = detector.observe(cloud);
                    }
                }
                if found.iter().all(Option::is_some) {
                    let tables: Vec<TurntableModel> = found.iter().map(|t| t.expect("all found")).collect();
                    let transforms = tables
                        .iter()
                        .zip(&self.cfg.sensors)
                        .map(|(t, s)| registration_transform(t, s.phi))
                        .collect();
                    self.tables = Some(tables.clone());
                    self.phase = Phase::Tracking {
                        transforms,
                        particles: None,
                    };
                    Ok(FrameOutcome::Registered { tables })
                } else {
                    Ok(FrameOutcome::Detecting {
                        stable: found.iter().map(Option::is_some).collect(),
                    })
                }
            }
            Phase::Tracking { transforms, particles } => {
                let merged = crop_plate(merge_registered(clouds, transforms)?, self.cfg.plate_margin);
                let accumulator = RadialAccumulator::build(&merged, self.grid, self.cfg.enhanced);
                let outcome = track(&self.cfg, &accumulator, particles, frame)?;
                Ok(FrameOutcome::Reconstructed(Box::new(FrameResult {
                    outcome,
                    accumulator,
                    merged_points: merged.len(),
                })))
            }
        }
    }
}

/// Drops points lying within `margin` above the canonical plate.
pub fn crop_plate(cloud: PointCloud, margin: f64) -> PointCloud {
    if margin <= 0.0 {
        return cloud;
    }
    let frame = cloud.frame();
    let kept = cloud.into_points().into_iter().filter(|p| p.y >= margin).collect();
    PointCloud::new(frame, kept).expect("subset of a valid cloud")
}

fn track(
    cfg: &PipelineConfig,
    acc: &RadialAccumulator,
    particles: &mut Option<ParticleSet>,
    frame: usize,
) -> Result<StepOutcome> {
    let scorer = GmmScorer::from_config(acc, &cfg.filter)?;
    let sample_step = cfg.filter.sample_step_for(acc.cell());
    let filter_seed = derive_seed(cfg.seed, FILTER_STREAM);
    match cfg.temporal {
        TemporalMode::Filter => {
            if particles.is_none() {
                *particles = Some(init_particles(&cfg.filter, cfg.bounds(), filter_seed)?);
            }
            step_with(particles.as_mut().expect("initialized"), &scorer, sample_step, &cfg.filter)
        }
        TemporalMode::Reinitialize { iterations } => {
            let mut set = init_particles(&cfg.filter, cfg.bounds(), derive_seed(filter_seed, frame as u64))?;
            let mut outcome = step_with(&mut set, &scorer, sample_step, &cfg.filter)?;
            for _ in 1..iterations {
                outcome = step_with(&mut set, &scorer, sample_step, &cfg.filter)?;
            }
            *particles = Some(set);
            Ok(outcome)
        }
    }
}
