//! Command-line surface. Flags override fields of the optional config file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use revolve_core::bench::Protocol;
use revolve_core::synth::SceneSpec;

use crate::config::{Mode, RunConfig, SensorInput};
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "revolve", version, about = "Profile reconstruction of revolving objects from depth point clouds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reconstruct profiles from per-sensor PLY sequences.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Reconstruct with ten consecutive seeds and average the errors against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// First of the ten seeds.
        #[arg(long)]
        seed: u64,
    },
    /// Write a synthetic scene as PLY sequences plus ground truth and a matching config.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Number of frames to generate.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Run an ablation protocol on a synthetic scene.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// First seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long, value_enum)]
        protocol: Option<ProtocolArg>,
        /// Number of consecutive seeds.
        #[arg(long)]
        seeds: Option<usize>,
    },
    /// Run whatever mode the config file names.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Sensor directory; repeat once per sensor, replacing configured paths in order.
    #[arg(long = "sensor")]
    pub sensors: Vec<PathBuf>,
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Accumulator cell size (mm).
    #[arg(long)]
    pub cell: Option<f64>,
    #[arg(long)]
    pub particles: Option<usize>,
    /// Record wall-clock runtimes in the outputs.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Noiseless,
    Realistic,
}

impl Preset {
    pub fn scene(self) -> SceneSpec {
        match self {
            Preset::Noiseless => SceneSpec::noiseless(),
            Preset::Realistic => SceneSpec::realistic(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    AccumulatorSize,
    Particles,
    Sensors,
    Enhancement,
    Temporal,
}

impl ProtocolArg {
    /// The protocol with its standard settings.
    pub fn protocol(self) -> Protocol {
        match self {
            ProtocolArg::AccumulatorSize => Protocol::AccumulatorSizes(vec![16, 32, 64]),
            ProtocolArg::Particles => Protocol::ParticleCounts(vec![100, 1000, 5000]),
            ProtocolArg::Sensors => Protocol::SensorSubsets(vec![vec![0], vec![1], vec![0, 1]]),
            ProtocolArg::Enhancement => Protocol::Enhancement,
            ProtocolArg::Temporal => Protocol::Temporal(10),
        }
    }
}

impl Common {
    fn apply(&self, mode: Mode, seed: Option<u64>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.mode = mode;
        if let Some(out) = &self.output {
            cfg.output_dir = out.clone();
        }
        if let Some(seed) = seed {
            cfg.seed = seed;
        }
        for (i, path) in self.sensors.iter().enumerate() {
            match cfg.sensors.get_mut(i) {
                Some(s) => s.path = path.clone(),
                None => cfg.sensors.push(SensorInput {
                    path: path.clone(),
                    ..Default::default()
                }),
            }
        }
        if let Some(gt) = &self.ground_truth {
            cfg.ground_truth = Some(gt.clone());
        }
        if let Some(cell) = self.cell {
            cfg.cell = cell;
        }
        if let Some(n) = self.particles {
            cfg.filter.particles = n;
        }
        cfg.timings |= self.timings;
        Ok(cfg)
    }
}

impl Command {
    /// Resolves the effective configuration for this invocation.
    pub fn config(&self) -> Result<RunConfig> {
        match self {
            Command::Reconstruct { common, seed } => common.apply(Mode::Reconstruct, *seed),
            Command::Evaluate { common, seed } => common.apply(Mode::Evaluate, Some(*seed)),
            Command::Synth {
                common,
                seed,
                preset,
                frames,
            } => {
                let mut cfg = common.apply(Mode::Synth, *seed)?;
                if let Some(p) = preset {
                    cfg.scene = p.scene();
                }
                if let Some(n) = frames {
                    cfg.scene.frames = *n;
                }
                Ok(cfg)
            }
            Command::Ablate {
                common,
                seed,
                preset,
                protocol,
                seeds,
            } => {
                let mut cfg = common.apply(Mode::Ablate, *seed)?;
                if let Some(p) = preset {
                    cfg.scene = p.scene();
                }
                if let Some(p) = protocol {
                    cfg.ablation.protocol = p.protocol();
                }
                if let Some(n) = seeds {
                    cfg.ablation.seeds = *n;
                }
                Ok(cfg)
            }
            Command::Run { config } => RunConfig::load(config),
        }
    }
}
