//! Sequence evaluation and ablation protocols on synthetic scenes.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::metrics::ProfileErrors;
use crate::pipeline::{FrameOutcome, Pipeline, PipelineConfig, SensorSetup, TemporalMode};
use crate::rng::derive_seed;
use crate::synth::{generate_frame, SceneSpec};

const SCENE_STREAM: u64 = 0x5CE;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub ae_mm: f64,
    pub hd_mm: f64,
    /// Wall time of the frame's pipeline update; excluded from equality-sensitive outputs.
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub seed: u64,
    /// Index of the frame that completed turntable detection, if detection ran.
    pub registered_at: Option<usize>,
    pub frames: Vec<FrameRecord>,
}

impl SequenceReport {
    pub fn mean_ae(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.ae_mm))
    }

    pub fn mean_hd(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.hd_mm))
    }

    pub fn mean_runtime_ms(&self) -> f64 {
        mean(self.frames.iter().map(|f| f.runtime_ms))
    }

    pub fn last(&self) -> Option<&FrameRecord> {
        self.frames.last()
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Pipeline settings matching a scene: the scene's sensor intrinsics and
/// true registration azimuths, everything else from `base`.
pub fn config_for_scene(scene: &SceneSpec, base: &PipelineConfig, seed: u64) -> PipelineConfig {
    let sensors = scene
        .sensors
        .iter()
        .zip(scene.registration_azimuths())
        .map(|(s, phi)| SensorSetup {
            intrinsics: s.intrinsics,
            phi,
        })
        .collect();
    PipelineConfig {
        radius: scene.radius,
        sensors,
        seed,
        ..base.clone()
    }
}

/// Generates every frame of `scene` and runs the full pipeline on it.
pub fn run_sequence(scene: &SceneSpec, base: &PipelineConfig, seed: u64) -> Result<SequenceReport> {
    scene.validate()?;
    let cfg = config_for_scene(scene, base, seed);
    let mut pipeline = Pipeline::new(cfg)?;
    let scene_seed = derive_seed(seed, SCENE_STREAM);
    let mut report = SequenceReport {
        seed,
        registered_at: None,
        frames: Vec::new(),
    };
    for frame in 0..scene.frames {
        let synthetic = generate_frame(scene, frame, scene_seed)?;
        let start = Instant::now();
        let outcome = pipeline.process_frame(&synthetic.clouds)?;
        let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
        match outcome {
            FrameOutcome::Detecting { .. } => {}
            FrameOutcome::Registered { .. } => report.registered_at = Some(frame),
            FrameOutcome::Reconstructed(result) => {
                let e = ProfileErrors::between(&synthetic.truth, &result.profile());
                report.frames.push(FrameRecord {
                    frame,
                    ae_mm: e.ae_mm,
                    hd_mm: e.hd_mm,
                    runtime_ms,
                });
            }
        }
    }
    if report.registered_at.is_none() {
        return Err(crate::Error::DetectionFailed(format!(
            "turntable not stable within {} frames",
            scene.frames
        )));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "settings")]
pub enum Protocol {
    /// Square accumulators with the given number of bins per side.
    AccumulatorSizes(Vec<usize>),
    ParticleCounts(Vec<usize>),
    /// Each entry lists the scene sensors to keep.
    SensorSubsets(Vec<Vec<usize>>),
    /// Plain density against spread-weighted density.
    Enhancement,
    /// Temporal filtering against per-frame reinitialization with the given iteration count.
    Temporal(usize),
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::AccumulatorSizes(_) => "accumulator-size",
            Protocol::ParticleCounts(_) => "particles",
            Protocol::SensorSubsets(_) => "sensors",
            Protocol::Enhancement => "enhancement",
            Protocol::Temporal(_) => "temporal",
        }
    }

    fn settings(&self, scene: &SceneSpec, base: &PipelineConfig) -> Result<Vec<(String, SceneSpec, PipelineConfig)>> {
        let mut out = Vec::new();
        match self {
            Protocol::AccumulatorSizes(sizes) => {
                for &bins in sizes {
                    if bins == 0 {
                        return Err(invalid("accumulator size must be positive"));
                    }
                    let cfg = PipelineConfig {
                        cell: scene.radius / bins as f64,
                        h_max: None,
                        ..base.clone()
                    };
                    out.push((format!("{bins}x{bins}"), scene.clone(), cfg));
                }
            }
            Protocol::ParticleCounts(counts) => {
                for &n in counts {
                    let mut cfg = base.clone();
                    cfg.filter.particles = n;
                    out.push((format!("{n}"), scene.clone(), cfg));
                }
            }
            Protocol::SensorSubsets(subsets) => {
                for subset in subsets {
                    if subset.is_empty() {
                        return Err(invalid("sensor subset cannot be empty"));
                    }
                    let label = subset.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join("+");
                    out.push((label, scene.with_sensors(subset)?, base.clone()));
                }
            }
            Protocol::Enhancement => {
                for (label, enhanced) in [("density", false), ("spread-weighted", true)] {
                    let cfg = PipelineConfig {
                        enhanced,
                        ..base.clone()
                    };
                    out.push((label.to_string(), scene.clone(), cfg));
                }
            }
            Protocol::Temporal(iterations) => {
                let reinit = PipelineConfig {
                    temporal: TemporalMode::Reinitialize {
                        iterations: *iterations,
                    },
                    ..base.clone()
                };
                let filter = PipelineConfig {
                    temporal: TemporalMode::Filter,
                    ..base.clone()
                };
                out.push(("reinitialize".to_string(), scene.clone(), reinit));
                out.push(("temporal".to_string(), scene.clone(), filter));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub ae_mm: f64,
    pub hd_mm: f64,
    /// Mean per-frame runtime (ms).
    pub runtime_ms: f64,
    /// Per-seed sequence averages `(ae, hd)`.
    pub per_seed: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub protocol: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, setting: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    /// Plain-text table; timings are included only on request.
    pub fn to_table(&self, timings: bool) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<18} {:>10} {:>10}", self.protocol, "AE [mm]", "HD [mm]");
        if timings {
            let _ = write!(s, " {:>12}", "ms/frame");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{:<18} {:>10.3} {:>10.3}", r.setting, r.ae_mm, r.hd_mm);
            if timings {
                let _ = write!(s, " {:>12.2}", r.runtime_ms);
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every setting of `protocol` over every seed.
pub fn run_ablation(protocol: &Protocol, scene: &SceneSpec, base: &PipelineConfig, seeds: &[u64]) -> Result<AblationReport> {
    if seeds.is_empty() {
        return Err(invalid("at least one seed is required"));
    }
    let mut rows = Vec::new();
    for (setting, scene, cfg) in protocol.settings(scene, base)? {
        let mut per_seed = Vec::with_capacity(seeds.len());
        let mut runtime = 0.0;
        for &seed in seeds {
            let report = run_sequence(&scene, &cfg, seed)?;
            per_seed.push((report.mean_ae(), report.mean_hd()));
            runtime += report.mean_runtime_ms();
        }
        rows.push(AblationRow {
            setting,
            ae_mm: mean(per_seed.iter().map(|p| p.0)),
            hd_mm: mean(per_seed.iter().map(|p| p.1)),
            runtime_ms: runtime / seeds.len() as f64,
            per_seed,
        });
    }
    Ok(AblationReport {
        protocol: protocol.name().to_string(),
        seeds: seeds.to_vec(),
        rows,
    })
}
