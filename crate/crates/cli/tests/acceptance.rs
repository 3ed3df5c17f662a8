//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Run with `cargo test -p revolve-cli --test acceptance`. The invariant-suite
//! criterion executes the other test binaries found next to this one, so run
//! it after `cargo test --workspace --no-run` or as part of the full test run.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant, SystemTime};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use revolve_cli::config::SensorInput;
use revolve_cli::run::{reconstruct, run_synth, write_reconstruction};
use revolve_cli::RunConfig;
use revolve_core::accumulator::{GridSpec, RadialAccumulator};
use revolve_core::bench::run_sequence;
use revolve_core::filter::{init_particles, FilterConfig, GmmScorer, ParticleSet};
use revolve_core::metrics::{directed_avg_error, directed_hausdorff, symmetric_avg_error, symmetric_hausdorff};
use revolve_core::pipeline::{crop_plate, PipelineConfig, TemporalMode};
use revolve_core::registration::{merge_registered, registration_transform};
use revolve_core::synth::{generate_frame, SceneSpec};
use revolve_core::{FrameId, Point2, Point3, PointCloud};

const SEEDS: u64 = 10;

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        println!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failures += 1;
        }
    }
}

/// Ten-seed sequence averages, cached per scene and configuration.
struct Runs {
    cache: HashMap<String, Averages>,
}

#[derive(Debug, Clone, Copy)]
struct Averages {
    ae: f64,
    hd: f64,
    last_ae: f64,
    max_seconds: f64,
}

impl Runs {
    fn get(&mut self, scene: &SceneSpec, cfg: &PipelineConfig) -> Averages {
        let key = format!("{scene:?}|{cfg:?}");
        if let Some(a) = self.cache.get(&key) {
            return *a;
        }
        let mut a = Averages {
            ae: 0.0,
            hd: 0.0,
            last_ae: 0.0,
            max_seconds: 0.0,
        };
        for seed in 0..SEEDS {
            let start = Instant::now();
            let r = run_sequence(scene, cfg, seed).expect("sequence runs");
            a.max_seconds = a.max_seconds.max(start.elapsed().as_secs_f64());
            a.ae += r.mean_ae() / SEEDS as f64;
            a.hd += r.mean_hd() / SEEDS as f64;
            a.last_ae += r.last().expect("reconstructed frames").ae_mm / SEEDS as f64;
        }
        self.cache.insert(key, a);
        a
    }
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let pts = (0..n)
        .map(|_| {
            Point3::new(
                rng.random_range(-180.0..180.0),
                rng.random_range(-20.0..180.0),
                rng.random_range(-180.0..180.0),
            )
        })
        .collect();
    PointCloud::new(FrameId::Canonical, pts).unwrap()
}

fn accumulator_oracle(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let grid = GridSpec::square(160.0, 16).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let cloud = random_cloud(&mut rng, 5000);
        let acc = RadialAccumulator::build(&cloud, grid, false);
        for j in 0..16 {
            for i in 0..16 {
                let (r0, h0) = (i as f64 * 10.0, j as f64 * 10.0);
                let count = cloud
                    .iter()
                    .map(|p| (p.x.hypot(p.z), p.y))
                    .filter(|&(r, h)| r >= r0 && r < r0 + 10.0 && h >= h0 && h < h0 + 10.0)
                    .count();
                let want = count as f64 / (PI * ((r0 + 10.0).powi(2) - r0 * r0) * 10.0);
                let got = acc.get(i, j);
                if want != got {
                    worst = worst.max((want - got).abs() / want.abs().max(got.abs()));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report.check(
        "oracle: accumulator vs brute-force binning (20 clouds)",
        worst <= 1e-12 && secs < 1.0,
        format!("max relative difference {worst:.1e}, {secs:.2} s"),
    );
}

fn gmm_oracle(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut acc = RadialAccumulator::zeros(GridSpec::square(40.0, 4).unwrap(), false);
        for j in 0..4 {
            for i in 0..4 {
                acc.set(i, j, rng.random_range(0.0..3.0)).unwrap();
            }
        }
        let x = Point2::new(rng.random_range(-10.0..50.0), rng.random_range(-10.0..50.0));
        let sigma = acc.cell();
        let mut all = Vec::new();
        for j in 0..4 {
            for i in 0..4 {
                let (cx, cy) = ((i as f64 + 0.5) * 10.0, (j as f64 + 0.5) * 10.0);
                let d2 = (x.x - cx).powi(2) + (x.y - cy).powi(2);
                all.push(acc.get(i, j) * (-d2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma));
            }
        }
        all.sort_by(|a, b| b.total_cmp(a));
        let want = all[..10].iter().sum::<f64>() / 10.0;
        let got = revolve_core::filter::gmm_point_score(&x, &acc, &FilterConfig::default()).unwrap();
        worst = worst.max((want - got).abs() / want.max(1e-300));
    }
    let secs = start.elapsed().as_secs_f64();
    report.check(
        "oracle: top-10 mixture score vs sort-and-average (4x4, 100 queries)",
        worst <= 1e-12 && secs < 1.0,
        format!("max relative difference {worst:.1e}, {secs:.2} s"),
    );
}

fn metrics_oracle(report: &mut Report) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut exact = true;
    for (na, nb) in [(1, 1), (30, 200), (700, 500), (2000, 2500)] {
        let set = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Point2> {
            (0..n)
                .map(|_| Point2::new(rng.random_range(0.0..160.0), rng.random_range(0.0..160.0)))
                .collect()
        };
        let (a, b) = (set(&mut rng, na), set(&mut rng, nb));
        let directed = |a: &[Point2], b: &[Point2]| {
            let (mut sum, mut max) = (0.0, 0.0f64);
            for p in a {
                let d = b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
                sum += d;
                max = max.max(d);
            }
            (sum / a.len() as f64, max)
        };
        let (ab, ba) = (directed(&a, &b), directed(&b, &a));
        exact &= directed_avg_error(&a, &b).unwrap() == ab.0
            && directed_hausdorff(&a, &b).unwrap() == ab.1
            && symmetric_avg_error(&a, &b).unwrap() == (ab.0 + ba.0) / 2.0
            && symmetric_hausdorff(&a, &b).unwrap() == (ab.1 + ba.1) / 2.0;
    }
    let secs = start.elapsed().as_secs_f64();
    report.check(
        "oracle: AE/HD vs double loop",
        exact && secs < 1.0,
        format!("bit-exact {exact}, {secs:.2} s"),
    );
}

const INVARIANT_SUITES: [(&str, &str); 11] = [
    ("core", "revolve_core"),
    ("core", "geometry"),
    ("core", "registration"),
    ("core", "accumulator"),
    ("core", "spline"),
    ("core", "filter"),
    ("core", "table"),
    ("core", "metrics"),
    ("core", "synthetic"),
    ("cli", "revolve_cli"),
    ("cli", "cli"),
];

fn newest_test_binary(dir: &Path, name: &str) -> Option<PathBuf> {
    let prefix = format!("{name}-");
    std::fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let n = e.file_name().to_string_lossy().into_owned();
            n.starts_with(&prefix) && n[prefix.len()..].chars().all(|c| c.is_ascii_hexdigit())
        })
        .filter_map(|e| Some((e.metadata().ok()?.modified().ok()?, e.path())))
        .max_by_key(|(t, _)| *t)
        .map(|(_, p)| p)
}

fn invariant_suites(report: &mut Report) {
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let crates = Path::new(env!("CARGO_MANIFEST_DIR")).parent().unwrap().to_path_buf();
    let start = Instant::now();
    let mut failed = Vec::new();
    let mut missing = Vec::new();
    let mut tests = 0usize;
    for (krate, name) in INVARIANT_SUITES {
        let Some(bin) = newest_test_binary(&deps, name) else {
            missing.push(name);
            continue;
        };
        let out = Command::new(&bin)
            .current_dir(crates.join(krate))
            .output()
            .expect("test binary runs");
        let stdout = String::from_utf8_lossy(&out.stdout);
        tests += stdout.lines().filter(|l| l.starts_with("test ") && !l.starts_with("test result")).count();
        if !out.status.success() {
            let names: Vec<String> = stdout
                .lines()
                .filter(|l| l.ends_with("FAILED") && l.starts_with("test "))
                .map(|l| format!("{name}::{}", l.trim_start_matches("test ").trim_end_matches(" ... FAILED")))
                .collect();
            failed.extend(names);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report.check(
        "invariant suites: all property tests pass, total < 5 min",
        failed.is_empty() && missing.is_empty() && secs < 300.0,
        format!("{tests} tests in {secs:.0} s; failing {failed:?}; not built {missing:?}"),
    );
}

fn noiseless(report: &mut Report, runs: &mut Runs) {
    let scene = SceneSpec::noiseless();
    let cfg = PipelineConfig::default();
    let a = runs.get(&scene, &cfg);
    report.check(
        "end-to-end noiseless: mean AE <= 10 mm",
        a.ae <= cfg.cell,
        format!("{:.2} mm over {SEEDS} seeds", a.ae),
    );
    report.check(
        "end-to-end noiseless: AE at frame 50 <= 3 mm",
        a.last_ae <= 3.0,
        format!("{:.2} mm", a.last_ae),
    );
    report.check(
        "end-to-end noiseless: runtime < 2 min per run",
        a.max_seconds < 120.0,
        format!("slowest run {:.1} s", a.max_seconds),
    );
}

fn realistic(report: &mut Report, runs: &mut Runs) {
    let scene = SceneSpec::realistic();
    let cfg = PipelineConfig::default();
    let temporal = runs.get(&scene, &cfg);
    report.check(
        "end-to-end realistic: mean AE <= 2 cells (20 mm)",
        temporal.ae <= 2.0 * cfg.cell,
        format!("{:.2} mm", temporal.ae),
    );
    let reinit = runs.get(
        &scene,
        &PipelineConfig {
            temporal: TemporalMode::Reinitialize { iterations: 10 },
            ..cfg.clone()
        },
    );
    report.check(
        "end-to-end realistic: temporal filtering beats per-frame reinitialization",
        temporal.ae < reinit.ae,
        format!("{:.3} vs {:.3} mm", temporal.ae, reinit.ae),
    );
}

fn ablations(report: &mut Report, runs: &mut Runs) {
    let scene = SceneSpec::realistic();
    let base = PipelineConfig::default();

    let both = runs.get(&scene, &base);
    let singles: Vec<f64> = (0..scene.sensors.len())
        .map(|i| runs.get(&scene.with_sensors(&[i]).unwrap(), &base).ae)
        .collect();
    let best_single = singles.iter().copied().fold(f64::INFINITY, f64::min);
    report.check(
        "ablation: two sensors beat the best single sensor",
        both.ae < best_single,
        format!("{:.3} vs {singles:.3?} mm", both.ae),
    );

    let particles = |n: usize| {
        let mut cfg = base.clone();
        cfg.filter.particles = n;
        cfg
    };
    let (p100, p1000, p5000) = (
        runs.get(&scene, &particles(100)),
        runs.get(&scene, &particles(1000)),
        runs.get(&scene, &particles(5000)),
    );
    report.check(
        "ablation: 1000 particles beat 100",
        p1000.ae < p100.ae,
        format!("{:.3} vs {:.3} mm", p1000.ae, p100.ae),
    );
    let gain = (p1000.ae - p5000.ae) / p1000.ae;
    report.check(
        "ablation: 5000 particles improve < 10% over 1000",
        gain < 0.10,
        format!("{:.3} vs {:.3} mm, {:.1}% better", p5000.ae, p1000.ae, 100.0 * gain),
    );

    let sizes: Vec<Averages> = [16.0, 32.0, 64.0]
        .iter()
        .map(|bins| {
            runs.get(
                &scene,
                &PipelineConfig {
                    cell: base.radius / bins,
                    ..base.clone()
                },
            )
        })
        .collect();
    let ae: Vec<f64> = sizes.iter().map(|a| a.ae).collect();
    let hd: Vec<f64> = sizes.iter().map(|a| a.hd).collect();
    report.check(
        "ablation: AE(64x64) <= AE(32x32) <= AE(16x16)",
        ae[2] <= ae[1] && ae[1] <= ae[0],
        format!("{ae:.3?} mm"),
    );
    let (lo, hi) = hd.iter().fold((f64::MAX, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    report.check(
        "ablation: HD changes < 10% across resolutions",
        (hi - lo) / lo < 0.10,
        format!("{hd:.3?} mm, spread {:.1}%", 100.0 * (hi - lo) / lo),
    );

    let plain = runs.get(
        &scene,
        &PipelineConfig {
            enhanced: false,
            ..base.clone()
        },
    );
    report.check(
        "ablation: enhanced accumulator beats plain density",
        both.ae < plain.ae,
        format!("{:.3} vs {:.3} mm", both.ae, plain.ae),
    );
}

/// Merged canonical cloud of one realistic frame using the true registration.
fn realistic_accumulator() -> RadialAccumulator {
    let scene = SceneSpec::realistic();
    let frame = generate_frame(&scene, 10, 7).unwrap();
    let transforms: Vec<_> = scene
        .sensors
        .iter()
        .zip(scene.registration_azimuths())
        .map(|(s, phi)| registration_transform(&s.table_in_sensor(scene.radius), phi))
        .collect();
    let merged = crop_plate(merge_registered(&frame.clouds, &transforms).unwrap(), 5.0);
    RadialAccumulator::build(&merged, GridSpec::square(160.0, 16).unwrap(), true)
}

/// Median wall time of scoring plus resampling one generation.
fn frame_cost(acc: &RadialAccumulator, particles: usize) -> Duration {
    let cfg = FilterConfig {
        particles,
        ..Default::default()
    };
    let scorer = GmmScorer::from_config(acc, &cfg).unwrap();
    let step = cfg.sample_step_for(acc.cell());
    let bounds = revolve_core::filter::Bounds {
        rho_max: 160.0,
        h_max: 160.0,
    };
    let mut set: ParticleSet = init_particles(&cfg, bounds, 5).unwrap();
    let mut times: Vec<Duration> = (0..9)
        .map(|_| {
            set.motion_update(&cfg).unwrap();
            let t = Instant::now();
            set.score(&scorer, step).unwrap();
            set.systematic_resample(&cfg).unwrap();
            t.elapsed()
        })
        .collect();
    times.sort();
    times[times.len() / 2]
}

fn performance(report: &mut Report) {
    let acc = realistic_accumulator();
    let t1000 = frame_cost(&acc, 1000);
    report.check(
        "performance: 1000 particles, 16x16, scoring + resampling < 100 ms",
        t1000 < Duration::from_millis(100),
        format!("{:.1} ms", t1000.as_secs_f64() * 1e3),
    );
    let counts = [200usize, 500, 1000, 2000, 5000];
    let per_particle: Vec<f64> = counts
        .iter()
        .map(|&n| frame_cost(&acc, n).as_secs_f64() * 1e6 / n as f64)
        .collect();
    let (lo, hi) = per_particle.iter().fold((f64::MAX, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
    report.check(
        "performance: runtime within 2x of linear in particle count (200..5000)",
        hi <= 2.0 * lo,
        format!("per-particle us {per_particle:.2?} for N = {counts:?}"),
    );
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism(report: &mut Report) {
    let root = tempfile::tempdir().unwrap();
    let run_once = |name: &str| {
        let data = root.path().join(format!("{name}-data"));
        let cfg = RunConfig {
            seed: 11,
            output_dir: data.clone(),
            scene: SceneSpec {
                frames: 15,
                ..SceneSpec::realistic()
            },
            ..Default::default()
        };
        let mut run = run_synth(&cfg).unwrap();
        run.resolve_paths(&data);
        run.sensors = run
            .sensors
            .into_iter()
            .map(|s| SensorInput { ..s })
            .collect();
        let rec = reconstruct(&run, run.seed).unwrap();
        let out = root.path().join(format!("{name}-out"));
        std::fs::create_dir(&out).unwrap();
        write_reconstruction(&run, &rec, &out).unwrap();
        (snapshot(&data), snapshot(&out))
    };
    let (data_a, out_a) = run_once("a");
    let (data_b, out_b) = run_once("b");
    let files = data_a.len() + out_a.len();
    report.check(
        "determinism: identical config and seed give byte-identical outputs",
        data_a == data_b && out_a == out_b,
        format!("{files} files compared"),
    );
}

fn main() {
    let start = SystemTime::now();
    let mut report = Report { failures: 0 };
    let mut runs = Runs { cache: HashMap::new() };
    accumulator_oracle(&mut report);
    gmm_oracle(&mut report);
    metrics_oracle(&mut report);
    performance(&mut report);
    determinism(&mut report);
    noiseless(&mut report, &mut runs);
    realistic(&mut report, &mut runs);
    ablations(&mut report, &mut runs);
    invariant_suites(&mut report);
    let minutes = start.elapsed().unwrap().as_secs_f64() / 60.0;
    println!("acceptance: {} failing criteria ({minutes:.1} min)", report.failures);
    if report.failures > 0 {
        std::process::exit(1);
    }
}
