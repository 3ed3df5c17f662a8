//! Synthetic multi-sensor scenes with known ground truth.
//!
//! The world frame is the canonical turntable frame (plate centre at the
//! origin, revolution axis +y). Each sensor looks at the object from an
//! azimuth around the plate and only sees the object surface inside its
//! angular sector. Object points are drawn uniformly by surface area from
//! the revolved ground-truth profile. Plate points are where a regular grid
//! of image rays meets the plate, so the near side of the plate is denser.
//! Noise is applied along the viewing ray. Occluders add a dense ellipsoidal blob and
//! remove the object surface in their angular shadow. Clouds are returned in
//! each sensor's own frame.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{wrap_angle, FrameId, Point2, Point3, PointCloud, PolarFrame, PolarPoint};
use crate::registration::{align_to_canonical, RigidTransform, CANONICAL_AXIS};
use crate::rng::derive_seed;
use crate::spline::{ProfileCurve, SUBSAMPLES_PER_SEGMENT};
use crate::table::{SensorIntrinsics, TurntableModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    /// Free knots `(rho, h)` in mm.
    pub knots: [[f64; 2]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorSpec {
    /// Azimuth of the sensor around the plate (rad); also the centre of its sector.
    pub azimuth: f64,
    /// Horizontal distance from the axis (mm).
    pub distance: f64,
    /// Height above the plate (mm).
    pub height: f64,
    /// Height of the point on the axis the sensor looks at (mm).
    pub target_height: f64,
    /// Angular width of the visible object surface (rad).
    pub sector: f64,
    /// Standard deviation of the noise along the viewing ray (mm).
    pub noise: f64,
    pub object_points: usize,
    /// Approximate number of image rays that hit the plate.
    pub plate_points: usize,
    pub intrinsics: SensorIntrinsics,
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            azimuth: 0.0,
            distance: 550.0,
            height: 380.0,
            target_height: 40.0,
            sector: PI,
            noise: 0.0,
            object_points: 4000,
            plate_points: 3000,
            intrinsics: SensorIntrinsics::default(),
        }
    }
}

impl SensorSpec {
    pub fn position(&self) -> Point3 {
        let frame = PolarFrame::canonical();
        frame.from_polar(&PolarPoint {
            rho: self.distance,
            h: self.height,
            theta: self.azimuth,
        })
    }

    /// Sensor-to-world transform; the sensor looks along its +z axis.
    pub fn pose(&self) -> RigidTransform {
        let eye = self.position();
        let target = CANONICAL_AXIS * self.target_height;
        let forward = (target - eye).normalize();
        let right = forward.cross(&CANONICAL_AXIS).normalize();
        let down = forward.cross(&right);
        RigidTransform {
            rotation: Matrix3::from_columns(&[right, down, forward]),
            translation: eye,
        }
    }

    /// The plate as seen from this sensor.
    pub fn table_in_sensor(&self, radius: f64) -> TurntableModel {
        let world_to_sensor = self.pose().inverse();
        TurntableModel {
            center: world_to_sensor.apply(&Point3::zeros()),
            normal: world_to_sensor.apply_vector(&CANONICAL_AXIS),
            radius,
        }
    }

    /// Axial angle that completes the plate alignment into this sensor's true pose.
    pub fn registration_azimuth(&self, radius: f64) -> f64 {
        let u = align_to_canonical(&self.table_in_sensor(radius));
        let residual = self.pose().rotation * u.rotation.transpose();
        residual[(0, 2)].atan2(residual[(0, 0)])
    }

    fn sees(&self, theta: f64) -> bool {
        self.sector >= TAU || angular_distance(theta, self.azimuth) <= self.sector / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OccluderSpec {
    /// Blob centre in cylindrical coordinates `(rho, h, theta)`.
    pub rho: f64,
    pub h: f64,
    pub theta: f64,
    /// Ellipsoid semi-axes (radial, vertical, tangential) in mm.
    pub radii: [f64; 3],
    /// Blob points per sensor that sees it.
    pub points: usize,
    /// Angular width of object surface hidden behind the blob (rad).
    pub shadow: f64,
    /// First and last frame the occluder is present (inclusive).
    pub frames: Option<[usize; 2]>,
}

impl Default for OccluderSpec {
    fn default() -> Self {
        Self {
            rho: 90.0,
            h: 60.0,
            theta: 0.0,
            radii: [15.0, 20.0, 15.0],
            points: 1500,
            shadow: 0.0,
            frames: None,
        }
    }
}

impl OccluderSpec {
    fn active(&self, frame: usize) -> bool {
        self.frames.is_none_or(|[a, b]| (a..=b).contains(&frame))
    }

    fn hides(&self, theta: f64) -> bool {
        self.shadow > 0.0 && angular_distance(theta, self.theta) <= self.shadow / 2.0
    }

    fn angular_half_width(&self) -> f64 {
        (self.radii[2] / self.rho.max(1e-9)).atan()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub radius: f64,
    pub frames: usize,
    pub keyframes: Vec<Keyframe>,
    pub sensors: Vec<SensorSpec>,
    pub occluders: Vec<OccluderSpec>,
    /// Uniform outliers per sensor, as a fraction of that sensor's other points.
    pub outlier_fraction: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self::noiseless()
    }
}

/// Round-bottomed bowl used as the static reference profile.
pub const BOWL: [[f64; 2]; 3] = [[0.0, 20.0], [60.0, 45.0], [100.0, 120.0]];

impl SceneSpec {
    /// Static bowl, two opposite sensors covering the full circle, no noise.
    pub fn noiseless() -> Self {
        Self {
            radius: 160.0,
            frames: 50,
            keyframes: vec![Keyframe { frame: 0, knots: BOWL }],
            sensors: vec![
                SensorSpec {
                    azimuth: 0.0,
                    sector: PI,
                    ..Default::default()
                },
                SensorSpec {
                    azimuth: PI,
                    sector: PI,
                    ..Default::default()
                },
            ],
            occluders: Vec::new(),
            outlier_fraction: 0.0,
        }
    }

    /// Two opposite sensors with quarter-turn sectors (same surface density as
    /// the noiseless preset), 2 mm ray noise, 2 %
    /// outliers, a hand-like blob shadowing 30 % of the observed arc, and a
    /// profile that rises and widens by at most 2 mm per frame.
    pub fn realistic() -> Self {
        let sector = PI / 2.0;
        let sensors: Vec<SensorSpec> = [0.0, PI]
            .into_iter()
            .map(|azimuth| SensorSpec {
                azimuth,
                sector,
                noise: 2.0,
                object_points: 2000,
                ..Default::default()
            })
            .collect();
        let coverage = sensors.len() as f64 * sector;
        Self {
            radius: 160.0,
            frames: 40,
            keyframes: vec![
                Keyframe {
                    frame: 0,
                    knots: [[0.0, 20.0], [55.0, 40.0], [85.0, 95.0]],
                },
                Keyframe {
                    frame: 39,
                    knots: [[0.0, 20.0], [65.0, 48.0], [105.0, 125.0]],
                },
            ],
            sensors,
            occluders: vec![OccluderSpec {
                rho: 100.0,
                h: 75.0,
                theta: 0.15,
                radii: [18.0, 25.0, 18.0],
                points: 1500,
                shadow: 0.3 * coverage,
                frames: None,
            }],
            outlier_fraction: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(invalid("scene radius must be positive"));
        }
        if self.frames == 0 {
            return Err(invalid("scene needs at least one frame"));
        }
        if self.keyframes.is_empty() {
            return Err(invalid("scene needs at least one profile keyframe"));
        }
        if self.keyframes.windows(2).any(|w| w[0].frame >= w[1].frame) {
            return Err(invalid("keyframes must be strictly increasing in frame"));
        }
        if self.sensors.is_empty() {
            return Err(invalid("scene needs at least one sensor"));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if !(s.sector > 0.0 && s.sector <= TAU) {
                return Err(invalid(format!("sensor {i}: sector must lie in (0, 2π]")));
            }
            if !(s.noise >= 0.0) {
                return Err(invalid(format!("sensor {i}: noise must be non-negative")));
            }
            if !(s.distance > self.radius) || !(s.height > 0.0) {
                return Err(invalid(format!("sensor {i}: must sit outside the plate and above it")));
            }
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(invalid("outlier_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Keeps only the listed sensors, in the given order.
    pub fn with_sensors(&self, indices: &[usize]) -> Result<Self> {
        let sensors = indices
            .iter()
            .map(|&i| {
                self.sensors
                    .get(i)
                    .copied()
                    .ok_or_else(|| invalid(format!("no sensor {i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            sensors,
            ..self.clone()
        })
    }

    /// Ground-truth profile at `frame`, linearly interpolated between keyframes.
    pub fn profile_at(&self, frame: usize) -> ProfileCurve {
        let keys = &self.keyframes;
        let knots = match keys.iter().position(|k| k.frame > frame) {
            None => keys.last().expect("validated").knots,
            Some(0) => keys[0].knots,
            Some(i) => {
                let (a, b) = (&keys[i - 1], &keys[i]);
                let t = (frame - a.frame) as f64 / (b.frame - a.frame) as f64;
                std::array::from_fn(|k| {
                    [
                        a.knots[k][0] + t * (b.knots[k][0] - a.knots[k][0]),
                        a.knots[k][1] + t * (b.knots[k][1] - a.knots[k][1]),
                    ]
                })
            }
        };
        ProfileCurve::from_coords(knots)
    }

    /// Largest per-frame knot displacement of the animation (mm).
    pub fn max_knot_speed(&self) -> f64 {
        (1..self.frames)
            .map(|f| {
                let (a, b) = (self.profile_at(f - 1), self.profile_at(f));
                (0..3).map(|k| (b.knots[k] - a.knots[k]).norm()).fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// True `φ` per sensor.
    pub fn registration_azimuths(&self) -> Vec<f64> {
        self.sensors.iter().map(|s| s.registration_azimuth(self.radius)).collect()
    }
}

/// Per-sensor clouds of one frame plus the profile they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub clouds: Vec<PointCloud>,
    pub truth: ProfileCurve,
}

/// Which part of the scene a generated point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointOrigin {
    Object,
    Plate,
    Occluder,
    Outlier,
}

/// Frame clouds with per-point labels, clouds in the world frame before noise
/// is applied alongside, for generator diagnostics.
#[derive(Debug, Clone)]
pub struct LabeledFrame {
    pub frame: SyntheticFrame,
    pub labels: Vec<Vec<PointOrigin>>,
    pub world_clean: Vec<Vec<Point3>>,
}

pub fn generate_frame(spec: &SceneSpec, frame: usize, seed: u64) -> Result<SyntheticFrame> {
    Ok(generate_labeled_frame(spec, frame, seed)?.frame)
}

pub fn generate_labeled_frame(spec: &SceneSpec, frame: usize, seed: u64) -> Result<LabeledFrame> {
    spec.validate()?;
    if frame >= spec.frames {
        return Err(invalid(format!("frame {frame} beyond scene length {}", spec.frames)));
    }
    let truth = spec.profile_at(frame);
    let sampler = SurfaceSampler::new(&truth);
    let polar = PolarFrame::canonical();
    let frame_seed = derive_seed(seed, frame as u64);

    let mut clouds = Vec::with_capacity(spec.sensors.len());
    let mut labels = Vec::with_capacity(spec.sensors.len());
    let mut world_clean = Vec::with_capacity(spec.sensors.len());
    for (index, sensor) in spec.sensors.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(frame_seed, index as u64));
        let mut world: Vec<(Point3, PointOrigin)> = Vec::new();

        let occluders: Vec<&OccluderSpec> = spec.occluders.iter().filter(|o| o.active(frame)).collect();
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < sensor.object_points && attempts < 50 * sensor.object_points.max(1) {
            attempts += 1;
            let theta = sensor_angle(sensor, &mut rng);
            let profile = sampler.sample(&mut rng);
            drawn += 1;
            if occluders.iter().any(|o| o.hides(theta)) {
                continue;
            }
            let p = polar.from_polar(&PolarPoint {
                rho: profile.x,
                h: profile.y,
                theta,
            });
            world.push((p, PointOrigin::Object));
        }

        world.extend(plate_points(sensor, spec.radius).into_iter().map(|p| (p, PointOrigin::Plate)));

        for o in &occluders {
            if !sensor.sees(o.theta) && angular_distance(o.theta, sensor.azimuth) > sensor.sector / 2.0 + o.angular_half_width() {
                continue;
            }
            world.extend(blob_points(o, &mut rng).into_iter().map(|p| (p, PointOrigin::Occluder)));
        }

        let outliers = (spec.outlier_fraction / (1.0 - spec.outlier_fraction) * world.len() as f64).round() as usize;
        let r = spec.radius;
        for _ in 0..outliers {
            let p = Point3::new(
                rng.random_range(-1.2 * r..1.2 * r),
                rng.random_range(-0.1 * r..1.2 * r),
                rng.random_range(-1.2 * r..1.2 * r),
            );
            world.push((p, PointOrigin::Outlier));
        }

        let eye = sensor.position();
        let to_sensor = sensor.pose().inverse();
        let noise = (sensor.noise > 0.0).then(|| Normal::new(0.0, sensor.noise).expect("noise is finite"));
        let mut points = Vec::with_capacity(world.len());
        let mut point_labels = Vec::with_capacity(world.len());
        let mut clean = Vec::with_capacity(world.len());
        for (p, label) in world {
            let noisy = match &noise {
                Some(n) => p + (p - eye).normalize() * n.sample(&mut rng),
                None => p,
            };
            points.push(to_sensor.apply(&noisy));
            point_labels.push(label);
            clean.push(p);
        }
        clouds.push(PointCloud::new(FrameId::Sensor(index), points)?);
        labels.push(point_labels);
        world_clean.push(clean);
    }
    Ok(LabeledFrame {
        frame: SyntheticFrame { clouds, truth },
        labels,
        world_clean,
    })
}

fn sensor_angle(sensor: &SensorSpec, rng: &mut ChaCha8Rng) -> f64 {
    if sensor.sector >= TAU {
        return rng.random::<f64>() * TAU;
    }
    wrap_angle(sensor.azimuth + (rng.random::<f64>() - 0.5) * sensor.sector)
}

/// Smallest absolute difference between two angles.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b);
    d.min(TAU - d)
}

/// Area-weighted sampler over a profile revolved about the axis.
struct SurfaceSampler {
    curve: ProfileCurve,
    /// Cumulative area weight at each dense parameter node.
    cdf: Vec<f64>,
    params: Vec<f64>,
}

impl SurfaceSampler {
    fn new(curve: &ProfileCurve) -> Self {
        let n = 2 * SUBSAMPLES_PER_SEGMENT;
        let params: Vec<f64> = (0..=n).map(|i| 2.0 * i as f64 / n as f64).collect();
        let pts: Vec<Point2> = params.iter().map(|&u| curve.eval(u)).collect();
        let mut cdf = Vec::with_capacity(pts.len());
        cdf.push(0.0);
        for w in pts.windows(2) {
            let ds = (w[1] - w[0]).norm();
            let rho = 0.5 * (w[0].x + w[1].x);
            cdf.push(cdf.last().unwrap() + rho.max(0.0) * ds + 1e-12);
        }
        Self {
            curve: *curve,
            cdf,
            params,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point2 {
        let total = *self.cdf.last().unwrap();
        let target = rng.random::<f64>() * total;
        let k = self.cdf.partition_point(|&c| c <= target).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let t = if c1 > c0 { (target - c0) / (c1 - c0) } else { 0.0 };
        let u = self.params[k - 1] + t * (self.params[k] - self.params[k - 1]);
        self.curve.eval(u)
    }
}

/// Plate samples where a regular grid of image rays meets the plate.
///
/// The grid stride is chosen so that roughly `plate_points` rays land on the
/// plate; density then follows the pinhole footprint like a real sensor.
fn plate_points(sensor: &SensorSpec, radius: f64) -> Vec<Point3> {
    let pose = sensor.pose();
    let k = &sensor.intrinsics;
    let hit = |u: f64, v: f64| -> Option<Point3> {
        let dir = pose.apply_vector(&Vector3::new(
            (u - k.cx) * k.pixel_pitch,
            (v - k.cy) * k.pixel_pitch,
            k.focal_length,
        ));
        if dir.y >= 0.0 {
            return None;
        }
        let p = pose.translation - dir * (pose.translation.y / dir.y);
        (p.x * p.x + p.z * p.z <= radius * radius).then_some(p)
    };
    let cast = |stride: f64| -> Vec<Point3> {
        let (w, h) = (k.width as f64, k.height as f64);
        let mut out = Vec::new();
        let mut v = stride / 2.0;
        while v < h {
            let mut u = stride / 2.0;
            while u < w {
                out.extend(hit(u, v));
                u += stride;
            }
            v += stride;
        }
        out
    };
    if sensor.plate_points == 0 {
        return Vec::new();
    }
    let native = cast(1.0).len().max(1);
    cast((native as f64 / sensor.plate_points as f64).sqrt())
}

fn blob_points(o: &OccluderSpec, rng: &mut ChaCha8Rng) -> Vec<Point3> {
    let frame = PolarFrame::canonical();
    let center = frame.from_polar(&PolarPoint {
        rho: o.rho,
        h: o.h,
        theta: o.theta,
    });
    let radial = Vector3::new(o.theta.cos(), 0.0, -o.theta.sin());
    let tangential = CANONICAL_AXIS.cross(&radial);
    let mut out = Vec::with_capacity(o.points);
    while out.len() < o.points {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() > 1.0 {
            continue;
        }
        out.push(center + radial * (v.x * o.radii[0]) + CANONICAL_AXIS * (v.y * o.radii[1]) + tangential * (v.z * o.radii[2]));
    }
    out
}
