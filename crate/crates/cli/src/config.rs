//! Run configuration, stored as TOML.

use std::path::{Path, PathBuf};

use revolve_core::bench::Protocol;
use revolve_core::filter::FilterConfig;
use revolve_core::pipeline::{PipelineConfig, SensorSetup, TemporalMode};
use revolve_core::synth::SceneSpec;
use revolve_core::table::{DetectionConfig, SensorIntrinsics};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Reconstruct,
    Evaluate,
    Synth,
    Ablate,
}

/// One sensor stream: a directory of per-frame PLY files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorInput {
    pub path: PathBuf,
    /// Axial rotation completing this sensor's registration (rad).
    pub phi: f64,
    pub intrinsics: SensorIntrinsics,
}

impl Default for SensorInput {
    fn default() -> Self {
        Self {
            path: PathBuf::new(),
            phi: 0.0,
            intrinsics: SensorIntrinsics::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationConfig {
    pub protocol: Protocol,
    /// Number of consecutive seeds starting at the run seed.
    pub seeds: usize,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            protocol: Protocol::AccumulatorSizes(vec![16, 32, 64]),
            seeds: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Turntable radius (mm).
    pub radius: f64,
    /// Accumulator cell size (mm).
    pub cell: f64,
    pub h_max: Option<f64>,
    pub enhanced: bool,
    pub plate_margin: f64,
    pub temporal: TemporalMode,
    /// Angular segments of the exported mesh.
    pub mesh_segments: usize,
    /// Sampling step of exported profiles and meshes (mm).
    pub profile_step: f64,
    /// Record wall-clock runtimes; off by default so outputs are reproducible byte for byte.
    pub timings: bool,
    /// Per-frame knot CSV.
    pub ground_truth: Option<PathBuf>,
    pub sensors: Vec<SensorInput>,
    pub filter: FilterConfig,
    pub detection: DetectionConfig,
    pub scene: SceneSpec,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let pipeline = PipelineConfig::default();
        Self {
            mode: Mode::Reconstruct,
            output_dir: PathBuf::from("output"),
            seed: 0,
            radius: pipeline.radius,
            cell: pipeline.cell,
            h_max: pipeline.h_max,
            enhanced: pipeline.enhanced,
            plate_margin: pipeline.plate_margin,
            temporal: pipeline.temporal,
            mesh_segments: 64,
            profile_step: 1.0,
            timings: false,
            ground_truth: None,
            sensors: Vec::new(),
            filter: pipeline.filter,
            detection: pipeline.detection,
            scene: SceneSpec::realistic(),
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it are taken relative to the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.output_dir);
        if let Some(gt) = self.ground_truth.as_mut() {
            join(gt);
        }
        for s in &mut self.sensors {
            join(&mut s.path);
        }
    }

    pub fn pipeline_config(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            radius: self.radius,
            cell: self.cell,
            h_max: self.h_max,
            enhanced: self.enhanced,
            plate_margin: self.plate_margin,
            filter: self.filter,
            detection: self.detection,
            temporal: self.temporal,
            sensors: self
                .sensors
                .iter()
                .map(|s| SensorSetup {
                    intrinsics: s.intrinsics,
                    phi: s.phi,
                })
                .collect(),
            seed,
        }
    }

    /// Checks the fields the current mode relies on, including that input paths exist.
    pub fn validate(&self) -> Result<()> {
        let config = |msg: String| Err(CliError::Config(msg));
        if self.mesh_segments < 3 {
            return config("mesh_segments must be at least 3".into());
        }
        if !(self.profile_step > 0.0) {
            return config("profile_step must be positive".into());
        }
        match self.mode {
            Mode::Reconstruct | Mode::Evaluate => {
                if self.sensors.is_empty() {
                    return config("no sensor inputs configured".into());
                }
                for s in &self.sensors {
                    if !s.path.is_dir() {
                        return config(format!("sensor directory {} does not exist", s.path.display()));
                    }
                }
                match &self.ground_truth {
                    Some(gt) if !gt.is_file() => {
                        return config(format!("ground truth {} does not exist", gt.display()));
                    }
                    None if self.mode == Mode::Evaluate => return config("evaluate needs ground_truth".into()),
                    _ => {}
                }
                self.pipeline_config(self.seed).validate()?;
            }
            Mode::Synth => self.scene.validate()?,
            Mode::Ablate => {
                self.scene.validate()?;
                if self.ablation.seeds == 0 {
                    return config("ablation needs at least one seed".into());
                }
                let probe = PipelineConfig {
                    sensors: vec![SensorSetup::default()],
                    ..self.pipeline_config(self.seed)
                };
                probe.validate()?;
            }
        }
        Ok(())
    }
}
