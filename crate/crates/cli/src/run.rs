//! Command implementations. Every command writes into a staging directory
//! next to the output directory and renames it into place on success.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ply_rs::ply::Encoding;
use revolve_core::bench::{run_ablation, AblationReport};
use revolve_core::filter::ResampleStatus;
use revolve_core::metrics::ProfileErrors;
use revolve_core::pipeline::{FrameOutcome, Pipeline};
use revolve_core::rng::derive_seed;
use revolve_core::spline::ProfileCurve;
use revolve_core::synth::generate_frame;
use revolve_core::table::TurntableModel;
use revolve_core::{FrameId, PolarFrame};
use serde::Serialize;

use crate::config::{Mode, RunConfig, SensorInput};
use crate::error::{CliError, Result};
use crate::io;
use crate::mesh::export_mesh;

/// Stream tag for synthetic scene generation; matches the benchmark driver.
pub const SCENE_STREAM: u64 = 0x5CE;

/// Number of seeds averaged by `evaluate`.
pub const EVALUATION_RUNS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub ae_mm: f64,
    pub hd_mm: f64,
    pub runtime_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame: usize,
    pub knots: [[f64; 2]; 3],
    pub score: f64,
    pub mean_score: f64,
    pub status: ResampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Registration {
    pub frame: usize,
    pub tables: Vec<TurntableModel>,
}

/// Everything one reconstruction run produces, before it is written out.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub registration: Registration,
    pub frames: Vec<FrameRecord>,
    pub profiles: Vec<(usize, ProfileCurve)>,
    pub accumulators: Vec<(usize, String)>,
    pub metrics: Vec<FrameMetrics>,
}

impl Reconstruction {
    pub fn mean_errors(&self) -> Option<ProfileErrors> {
        if self.metrics.is_empty() {
            return None;
        }
        let n = self.metrics.len() as f64;
        Some(ProfileErrors {
            ae_mm: self.metrics.iter().map(|m| m.ae_mm).sum::<f64>() / n,
            hd_mm: self.metrics.iter().map(|m| m.hd_mm).sum::<f64>() / n,
        })
    }
}

/// Runs `body` against a fresh staging directory, then moves it to `out`.
/// On failure the staging directory is removed and `out` is left untouched.
pub fn staged<T>(out: &Path, body: impl FnOnce(&Path) -> Result<T>) -> Result<T> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    io::create_dir(&parent)?;
    let stage = tempfile::Builder::new()
        .prefix(".revolve-stage-")
        .tempdir_in(&parent)
        .map_err(|e| CliError::io(&parent, e))?;
    let value = body(stage.path())?;
    if out.exists() {
        let old = tempfile::Builder::new()
            .prefix(".revolve-old-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        let target = old.path().join("previous");
        fs::rename(out, &target).map_err(|e| CliError::io(out, e))?;
        if let Err(e) = fs::rename(stage.path(), out) {
            let _ = fs::rename(&target, out);
            return Err(CliError::io(out, e));
        }
    } else {
        fs::rename(stage.path(), out).map_err(|e| CliError::io(out, e))?;
    }
    // the staging directory now lives at `out`; keep the guard from deleting it
    let _ = stage.keep();
    Ok(value)
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

fn frame_inputs(sensors: &[SensorInput]) -> Result<Vec<Vec<PathBuf>>> {
    let lists = sensors.iter().map(|s| io::list_frames(&s.path)).collect::<Result<Vec<_>>>()?;
    let n = lists[0].len();
    if n == 0 {
        return Err(CliError::io(&sensors[0].path, "no .ply frames"));
    }
    for (s, list) in sensors.iter().zip(&lists) {
        if list.len() != n {
            return Err(CliError::io(
                &s.path,
                format!("{} frames, but the first sensor has {n}", list.len()),
            ));
        }
    }
    Ok(lists)
}

/// Runs the full pipeline over the configured sensor streams with one seed.
pub fn reconstruct(cfg: &RunConfig, seed: u64) -> Result<Reconstruction> {
    let inputs = frame_inputs(&cfg.sensors)?;
    let truth = match &cfg.ground_truth {
        Some(path) => Some(io::read_knots(path)?),
        None => None,
    };
    let mut pipeline = Pipeline::new(cfg.pipeline_config(seed))?;
    let mut registration = None;
    let mut rec = Reconstruction {
        registration: Registration {
            frame: 0,
            tables: Vec::new(),
        },
        frames: Vec::new(),
        profiles: Vec::new(),
        accumulators: Vec::new(),
        metrics: Vec::new(),
    };
    for frame in 0..inputs[0].len() {
        let clouds = inputs
            .iter()
            .enumerate()
            .map(|(i, files)| io::read_ply(&files[frame], FrameId::Sensor(i)))
            .collect::<Result<Vec<_>>>()?;
        let start = Instant::now();
        let outcome = pipeline.process_frame(&clouds)?;
        let runtime = start.elapsed().as_secs_f64() * 1e3;
        match outcome {
            FrameOutcome::Detecting { .. } => {}
            FrameOutcome::Registered { tables } => registration = Some(Registration { frame, tables }),
            FrameOutcome::Reconstructed(result) => {
                let best = result.outcome.best;
                rec.frames.push(FrameRecord {
                    frame,
                    knots: best.knots.map(|k| [k.x, k.y]),
                    score: result.outcome.best_score,
                    mean_score: result.outcome.mean_score,
                    status: result.outcome.status,
                });
                if let Some(t) = truth.as_ref().and_then(|t| t.get(&frame)) {
                    let e = ProfileErrors::between(t, &best);
                    rec.metrics.push(FrameMetrics {
                        frame,
                        ae_mm: e.ae_mm,
                        hd_mm: e.hd_mm,
                        runtime_ms: cfg.timings.then_some(runtime),
                    });
                }
                rec.profiles.push((frame, best));
                rec.accumulators.push((frame, result.accumulator.to_text_grid()));
            }
        }
    }
    rec.registration = registration.ok_or_else(|| {
        CliError::DetectionFailed(format!("turntable not stable within {} frames", inputs[0].len()))
    })?;
    Ok(rec)
}

/// Writes a reconstruction into `dir`.
pub fn write_reconstruction(cfg: &RunConfig, rec: &Reconstruction, dir: &Path) -> Result<()> {
    let profiles = dir.join("profiles");
    let accumulators = dir.join("accumulators");
    io::create_dir(&profiles)?;
    io::create_dir(&accumulators)?;
    for (frame, curve) in &rec.profiles {
        let samples = curve
            .sample_equidistant(cfg.profile_step)
            .map_err(|e| CliError::Config(e.to_string()))?;
        io::write_text(&profiles.join(format!("frame_{frame:06}.csv")), &io::profile_csv(&samples))?;
    }
    for (frame, grid) in &rec.accumulators {
        io::write_text(&accumulators.join(format!("frame_{frame:06}.txt")), grid)?;
    }
    io::write_knots(&dir.join("knots.csv"), rec.profiles.iter().map(|(f, c)| (*f, c)))?;
    io::write_text(&dir.join("frames.json"), &json(&rec.frames))?;
    io::write_text(&dir.join("registration.json"), &json(&rec.registration))?;
    if cfg.ground_truth.is_some() {
        io::write_text(&dir.join("metrics.json"), &json(&rec.metrics))?;
    }
    if let Some((_, last)) = rec.profiles.last() {
        let mesh = export_mesh(last, cfg.mesh_segments, cfg.profile_step, &PolarFrame::canonical())?;
        io::write_text(&dir.join("mesh.obj"), &mesh.to_obj())?;
    }
    Ok(())
}

pub fn run_reconstruct(cfg: &RunConfig) -> Result<Reconstruction> {
    let rec = reconstruct(cfg, cfg.seed)?;
    staged(&cfg.output_dir, |dir| write_reconstruction(cfg, &rec, dir))?;
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub ae_mm: f64,
    pub hd_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub seeds: Vec<SeedSummary>,
    pub ae_mm: f64,
    pub hd_mm: f64,
    /// Per-frame errors averaged over the seeds.
    pub frames: Vec<FrameMetrics>,
}

/// Reconstructs with seeds `seed..seed+10` and averages the errors.
pub fn run_evaluate(cfg: &RunConfig) -> Result<Evaluation> {
    let runs = (cfg.seed..cfg.seed + EVALUATION_RUNS)
        .map(|s| reconstruct(cfg, s).map(|r| (s, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut seeds = Vec::new();
    let mut per_frame: BTreeMap<usize, (f64, f64, f64, usize)> = BTreeMap::new();
    for (seed, rec) in &runs {
        let e = rec
            .mean_errors()
            .ok_or_else(|| CliError::Config("ground truth covers no reconstructed frame".into()))?;
        seeds.push(SeedSummary {
            seed: *seed,
            ae_mm: e.ae_mm,
            hd_mm: e.hd_mm,
        });
        for m in &rec.metrics {
            let slot = per_frame.entry(m.frame).or_default();
            slot.0 += m.ae_mm;
            slot.1 += m.hd_mm;
            slot.2 += m.runtime_ms.unwrap_or(0.0);
            slot.3 += 1;
        }
    }
    let n = seeds.len() as f64;
    let evaluation = Evaluation {
        ae_mm: seeds.iter().map(|s| s.ae_mm).sum::<f64>() / n,
        hd_mm: seeds.iter().map(|s| s.hd_mm).sum::<f64>() / n,
        frames: per_frame
            .into_iter()
            .map(|(frame, (ae, hd, ms, count))| FrameMetrics {
                frame,
                ae_mm: ae / count as f64,
                hd_mm: hd / count as f64,
                runtime_ms: cfg.timings.then_some(ms / count as f64),
            })
            .collect(),
        seeds,
    };
    staged(&cfg.output_dir, |dir| {
        for (seed, rec) in &runs {
            let sub = dir.join(format!("seed_{seed}"));
            io::create_dir(&sub)?;
            write_reconstruction(cfg, rec, &sub)?;
        }
        io::write_text(&dir.join("metrics.json"), &json(&evaluation.frames))?;
        io::write_text(&dir.join("evaluation.json"), &json(&evaluation))
    })?;
    Ok(evaluation)
}

/// Writes a synthetic scene as per-sensor PLY directories, a ground-truth
/// knot file and a run configuration that reconstructs it.
pub fn run_synth(cfg: &RunConfig) -> Result<RunConfig> {
    let scene = &cfg.scene;
    scene.validate()?;
    let scene_seed = derive_seed(cfg.seed, SCENE_STREAM);
    let sensors: Vec<SensorInput> = scene
        .sensors
        .iter()
        .zip(scene.registration_azimuths())
        .enumerate()
        .map(|(i, (s, phi))| SensorInput {
            path: PathBuf::from(format!("sensor_{i}")),
            phi,
            intrinsics: s.intrinsics,
        })
        .collect();
    let run = RunConfig {
        mode: Mode::Reconstruct,
        output_dir: PathBuf::from("reconstruction"),
        radius: scene.radius,
        ground_truth: Some(PathBuf::from("ground_truth.csv")),
        sensors: sensors.clone(),
        ..cfg.clone()
    };
    staged(&cfg.output_dir, |dir| {
        for s in &sensors {
            io::create_dir(&dir.join(&s.path))?;
        }
        let mut truth = Vec::with_capacity(scene.frames);
        for frame in 0..scene.frames {
            let f = generate_frame(scene, frame, scene_seed)?;
            for (s, cloud) in sensors.iter().zip(&f.clouds) {
                let path = dir.join(&s.path).join(format!("frame_{frame:06}.ply"));
                io::write_ply(&path, cloud, Encoding::BinaryLittleEndian)?;
            }
            truth.push((frame, f.truth));
        }
        io::write_knots(&dir.join("ground_truth.csv"), truth.iter().map(|(f, c)| (*f, c)))?;
        io::write_text(&dir.join("run.toml"), &run.to_toml_string()?)
    })?;
    Ok(run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct AblationRowOut<'a> {
    setting: &'a str,
    ae_mm: f64,
    hd_mm: f64,
    runtime_ms: Option<f64>,
    per_seed: &'a [(f64, f64)],
}

pub fn run_ablate(cfg: &RunConfig) -> Result<AblationReport> {
    let seeds: Vec<u64> = (cfg.seed..cfg.seed + cfg.ablation.seeds as u64).collect();
    let report = run_ablation(&cfg.ablation.protocol, &cfg.scene, &cfg.pipeline_config(cfg.seed), &seeds)?;
    let rows: Vec<AblationRowOut> = report
        .rows
        .iter()
        .map(|r| AblationRowOut {
            setting: &r.setting,
            ae_mm: r.ae_mm,
            hd_mm: r.hd_mm,
            runtime_ms: cfg.timings.then_some(r.runtime_ms),
            per_seed: &r.per_seed,
        })
        .collect();
    staged(&cfg.output_dir, |dir| {
        io::write_text(&dir.join("ablation.txt"), &report.to_table(cfg.timings))?;
        io::write_text(
            &dir.join("ablation.json"),
            &json(&serde_json::json!({
                "protocol": report.protocol,
                "seeds": report.seeds,
                "rows": rows,
            })),
        )
    })?;
    Ok(report)
}

/// Validates and dispatches on the configured mode.
pub fn execute(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    Ok(match cfg.mode {
        Mode::Reconstruct => {
            let rec = run_reconstruct(cfg)?;
            let mut msg = format!(
                "reconstructed {} frames (turntable stable at frame {})",
                rec.frames.len(),
                rec.registration.frame
            );
            if let Some(e) = rec.mean_errors() {
                msg.push_str(&format!("; mean AE {:.3} mm, HD {:.3} mm", e.ae_mm, e.hd_mm));
            }
            msg
        }
        Mode::Evaluate => {
            let e = run_evaluate(cfg)?;
            format!(
                "{} runs from seed {}: mean AE {:.3} mm, HD {:.3} mm",
                e.seeds.len(),
                cfg.seed,
                e.ae_mm,
                e.hd_mm
            )
        }
        Mode::Synth => {
            run_synth(cfg)?;
            format!("wrote {} frames to {}", cfg.scene.frames, cfg.output_dir.display())
        }
        Mode::Ablate => run_ablate(cfg)?.to_table(cfg.timings),
    })
}
