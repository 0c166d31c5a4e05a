//! Seeded synthetic drives with exact ground truth.
//!
//! Device axes: x lateral, y longitudinal, z vertical (gravity on +z).
//! Potholes are 120 ms half-sines on all three axes; lane changes are 2 s
//! lateral S-curves with a longitudinal hump and no vertical component;
//! stops taper speed to zero and back, showing up only on y.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{GeoError, LatLon, Polyline, ReferenceIri, ReferenceIriRecord};
use crate::kinematics::{DriveEvent, EventKind};
use crate::model::{FrameRef, GpsFix, PackageStreams, SensorSample, DEFAULT_FRAME_RATE_FPS, DEFAULT_SENSOR_RATE_HZ};
use crate::packstore::PackageMeta;

pub const GRAVITY: f64 = 9.81;
pub const POTHOLE_MS: i64 = 120;
pub const LANE_CHANGE_MS: i64 = 2000;
/// Duration of each of the deceleration and re-acceleration phases of a stop.
pub const STOP_TAPER_MS: i64 = 8000;
/// Lateral share of a pothole's vertical magnitude on x and y.
const POTHOLE_CROSS_AXIS: f64 = 0.6;
const LANE_CHANGE_LONGITUDINAL: f64 = 0.6;
const DISTANCE_STEP_MS: i64 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InjectedKind {
    Pothole,
    LaneChange,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectedEvent {
    /// Onset, ms from session start.
    pub t_ms: i64,
    pub kind: InjectedKind,
    /// Peak acceleration in m/s², or hold time in seconds for a stop.
    pub magnitude: f64,
}

impl InjectedEvent {
    pub fn duration_ms(&self) -> i64 {
        match self.kind {
            InjectedKind::Pothole => POTHOLE_MS,
            InjectedKind::LaneChange => LANE_CHANGE_MS,
            InjectedKind::Stop => 2 * STOP_TAPER_MS + (self.magnitude * 1000.0).round() as i64,
        }
    }
}

/// Speed from `from_s` until the next step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedStep {
    pub from_s: f64,
    pub speed_mps: f64,
}

/// Extra vertical white noise of standard deviation `amplitude` along
/// route chainage `[start_m, end_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoughPatch {
    pub start_m: f64,
    pub end_m: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub accel_sigma: f64,
    pub gyro_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            accel_sigma: 0.05,
            gyro_sigma: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub route: Vec<LatLon>,
    pub speed_profile: Vec<SpeedStep>,
    #[serde(default)]
    pub events: Vec<InjectedEvent>,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default = "default_gps_rate")]
    pub gps_rate_hz: u32,
    #[serde(default)]
    pub gps_noise_m: f64,
    pub duration_s: f64,
    #[serde(default = "default_sensor_rate")]
    pub sensor_rate_hz: u32,
    #[serde(default = "default_frame_rate")]
    pub frame_rate_fps: u32,
    #[serde(default)]
    pub rough_patches: Vec<RoughPatch>,
    #[serde(default)]
    pub started_at_ms: i64,
}

fn default_gps_rate() -> u32 {
    1
}
fn default_sensor_rate() -> u32 {
    DEFAULT_SENSOR_RATE_HZ
}
fn default_frame_rate() -> u32 {
    DEFAULT_FRAME_RATE_FPS
}

/// A gently curving route westward out of Columbia, MO.
pub fn default_route() -> Vec<LatLon> {
    let start = LatLon::new(38.9517, -92.3341);
    vec![
        start,
        start.offset(-1500.0, 40.0),
        start.offset(-3000.0, -60.0),
        start.offset(-4500.0, 150.0),
    ]
}

impl Scenario {
    /// Event-free drive at a constant speed along [`default_route`].
    pub fn quiet(seed: u64, duration_s: f64) -> Self {
        Scenario {
            seed,
            route: default_route(),
            speed_profile: vec![SpeedStep {
                from_s: 0.0,
                speed_mps: 25.0,
            }],
            events: Vec::new(),
            noise: NoiseSpec::default(),
            gps_rate_hz: default_gps_rate(),
            gps_noise_m: 3.0,
            duration_s,
            sensor_rate_hz: DEFAULT_SENSOR_RATE_HZ,
            frame_rate_fps: DEFAULT_FRAME_RATE_FPS,
            rough_patches: Vec::new(),
            started_at_ms: 1_700_000_000_000,
        }
    }

    pub fn duration_ms(&self) -> i64 {
        (self.duration_s * 1000.0).round() as i64
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be > 0");
        }
        if self.sensor_rate_hz == 0 || self.frame_rate_fps == 0 || self.gps_rate_hz == 0 {
            return bad("rates must be > 0");
        }
        if !(self.noise.accel_sigma >= 0.0 && self.noise.gyro_sigma >= 0.0 && self.gps_noise_m >= 0.0) {
            return bad("noise must be >= 0");
        }
        if self.started_at_ms < 0 {
            return bad("started_at_ms must be >= 0");
        }
        Polyline::new(self.route.clone())?;
        if self.speed_profile.is_empty() {
            return bad("speed_profile must not be empty");
        }
        if self.speed_profile.windows(2).any(|w| w[1].from_s <= w[0].from_s) {
            return bad("speed_profile steps must be strictly increasing");
        }
        if self
            .speed_profile
            .iter()
            .any(|s| !(s.speed_mps >= 0.0 && s.speed_mps.is_finite() && s.from_s.is_finite()))
        {
            return bad("speeds must be finite and >= 0");
        }
        let end = self.duration_ms();
        for e in &self.events {
            if !(e.magnitude > 0.0 && e.magnitude.is_finite()) {
                return bad("event magnitudes must be > 0");
            }
            if e.t_ms < 0 || e.t_ms + e.duration_ms() > end {
                return bad("events must lie within the duration");
            }
        }
        if self
            .rough_patches
            .iter()
            .any(|p| !(p.end_m > p.start_m && p.amplitude > 0.0))
        {
            return bad("rough patches need end_m > start_m and amplitude > 0");
        }
        Ok(())
    }

    fn profile_speed(&self, t_ms: i64) -> f64 {
        let s = t_ms as f64 / 1000.0;
        self.speed_profile
            .iter()
            .take_while(|p| p.from_s <= s)
            .last()
            .unwrap_or(&self.speed_profile[0])
            .speed_mps
    }

    /// Multiplicative speed envelope from stops and its time derivative (1/s).
    fn stop_envelope(&self, t_ms: i64) -> (f64, f64) {
        let mut env = 1.0;
        let mut denv = 0.0;
        let taper = STOP_TAPER_MS as f64;
        for e in self.events.iter().filter(|e| e.kind == InjectedKind::Stop) {
            let hold = (e.magnitude * 1000.0).round();
            let tau = (t_ms - e.t_ms) as f64;
            let (f, df) = if tau < 0.0 || tau > 2.0 * taper + hold {
                (1.0, 0.0)
            } else if tau < taper {
                let p = std::f64::consts::PI * tau / taper;
                (0.5 * (1.0 + p.cos()), -0.5 * p.sin() * std::f64::consts::PI / taper * 1000.0)
            } else if tau <= taper + hold {
                (0.0, 0.0)
            } else {
                let p = std::f64::consts::PI * (tau - taper - hold) / taper;
                (0.5 * (1.0 - p.cos()), 0.5 * p.sin() * std::f64::consts::PI / taper * 1000.0)
            };
            denv = denv * f + env * df;
            env *= f;
        }
        (env, denv)
    }

    /// Vehicle speed in m/s and its derivative in m/s².
    pub fn speed_at(&self, t_ms: i64) -> (f64, f64) {
        let v = self.profile_speed(t_ms);
        let (env, denv) = self.stop_envelope(t_ms);
        (v * env, v * denv)
    }
}

/// Distance along the route sampled every [`DISTANCE_STEP_MS`].
struct Odometer {
    table: Vec<f64>,
}

impl Odometer {
    fn new(s: &Scenario) -> Self {
        let steps = (s.duration_ms() / DISTANCE_STEP_MS + 2) as usize;
        let mut table = Vec::with_capacity(steps);
        let mut d = 0.0;
        let mut prev = s.speed_at(0).0;
        table.push(0.0);
        for i in 1..steps {
            let v = s.speed_at(i as i64 * DISTANCE_STEP_MS).0;
            d += 0.5 * (prev + v) * DISTANCE_STEP_MS as f64 / 1000.0;
            table.push(d);
            prev = v;
        }
        Odometer { table }
    }

    fn at(&self, t_ms: i64) -> f64 {
        let i = (t_ms / DISTANCE_STEP_MS) as usize;
        let f = (t_ms % DISTANCE_STEP_MS) as f64 / DISTANCE_STEP_MS as f64;
        let a = self.table[i.min(self.table.len() - 1)];
        let b = self.table[(i + 1).min(self.table.len() - 1)];
        a + f * (b - a)
    }
}

/// Exact description of what was injected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub events: Vec<TruthEvent>,
    pub rough_patches: Vec<RoughPatch>,
    pub route_length_m: f64,
    /// Distance travelled by the end of the session.
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthEvent {
    pub kind: InjectedKind,
    pub t_start: i64,
    pub t_end: i64,
    pub magnitude: f64,
}

impl GroundTruth {
    pub fn count(&self, kind: InjectedKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// Largest rough-patch amplitude overlapping chainage `[start, end)`.
    pub fn roughness_between(&self, start_m: f64, end_m: f64) -> f64 {
        self.rough_patches
            .iter()
            .filter(|p| p.start_m < end_m && p.end_m > start_m)
            .map(|p| p.amplitude)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub scenario: Scenario,
    pub streams: PackageStreams,
    pub truth: GroundTruth,
}

impl Drive {
    /// Package metadata whose id is derived from the seed, so repeated
    /// generation yields identical packages.
    pub fn package_meta(&self) -> PackageMeta {
        let mut bytes = [0u8; 16];
        bytes[..8].copy_from_slice(&self.scenario.seed.to_be_bytes());
        bytes[8..].copy_from_slice(&(!self.scenario.seed).rotate_left(17).to_le_bytes());
        PackageMeta {
            package_id: Some(uuid::Builder::from_random_bytes(bytes).into_uuid().hyphenated().to_string()),
            device_id: "drivesim".into(),
            started_at_ms: self.scenario.started_at_ms,
            sensor_rate_hz: self.scenario.sensor_rate_hz,
            frame_rate_fps: self.scenario.frame_rate_fps,
        }
    }
}

fn sample_times(rate: u32, duration_ms: i64) -> impl Iterator<Item = i64> {
    (0u64..)
        .map(move |i| ((i as f64) * 1000.0 / rate as f64).round() as i64)
        .take_while(move |&t| t <= duration_ms)
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma >= 0 and finite")
}

pub fn generate_drive(s: &Scenario) -> Result<Drive, ScenarioError> {
    s.validate()?;
    let route = Polyline::new(s.route.clone())?;
    let duration = s.duration_ms();
    let odo = Odometer::new(s);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let accel_noise = normal(s.noise.accel_sigma);
    let gyro_noise = normal(s.noise.gyro_sigma);
    let gps_noise = normal(s.gps_noise_m);
    let unit = normal(1.0);

    let mut samples = Vec::new();
    for t in sample_times(s.sensor_rate_hz, duration) {
        let (_, dv) = s.speed_at(t);
        let dist = odo.at(t);
        let mut x = 0.0;
        let mut y = dv;
        let mut z = GRAVITY;
        let mut yaw = 0.0;
        for e in &s.events {
            let tau = (t - e.t_ms) as f64;
            match e.kind {
                InjectedKind::Pothole if (0.0..POTHOLE_MS as f64).contains(&tau) => {
                    let a = e.magnitude * (std::f64::consts::PI * tau / POTHOLE_MS as f64).sin();
                    z += a;
                    x += POTHOLE_CROSS_AXIS * a;
                    y += POTHOLE_CROSS_AXIS * a;
                }
                InjectedKind::LaneChange if (0.0..LANE_CHANGE_MS as f64).contains(&tau) => {
                    let p = std::f64::consts::PI * tau / LANE_CHANGE_MS as f64;
                    x += e.magnitude * (2.0 * p).sin();
                    y += LANE_CHANGE_LONGITUDINAL * e.magnitude * p.sin();
                    yaw += 0.1 * e.magnitude * p.sin();
                }
                _ => {}
            }
        }
        let rough = s
            .rough_patches
            .iter()
            .filter(|p| (p.start_m..p.end_m).contains(&dist))
            .map(|p| p.amplitude)
            .fold(0.0, f64::max);
        // Fixed draw order keeps streams identical across runs.
        let n = [
            accel_noise.sample(&mut rng),
            accel_noise.sample(&mut rng),
            accel_noise.sample(&mut rng),
            unit.sample(&mut rng),
            gyro_noise.sample(&mut rng),
            gyro_noise.sample(&mut rng),
            gyro_noise.sample(&mut rng),
        ];
        samples.push(SensorSample {
            t,
            ax: x + n[0],
            ay: y + n[1],
            az: z + n[2] + rough * n[3],
            gx: n[4],
            gy: n[5],
            gz: yaw + n[6],
        });
    }

    let gps = sample_times(s.gps_rate_hz, duration)
        .map(|t| {
            let p = route.point_at(odo.at(t));
            let (east, north) = (gps_noise.sample(&mut rng), gps_noise.sample(&mut rng));
            let q = p.offset(east, north);
            GpsFix {
                t,
                lat: q.lat,
                lon: q.lon,
                alt_m: 270.0,
                speed_mps: Some(s.speed_at(t).0),
                h_acc_m: s.gps_noise_m,
            }
        })
        .collect();

    let frames = sample_times(s.frame_rate_fps, duration)
        .enumerate()
        .map(|(i, t)| FrameRef {
            t,
            index: i as u64,
            file: FrameRef::file_for(i as u64),
        })
        .collect();

    let mut events: Vec<TruthEvent> = s
        .events
        .iter()
        .map(|e| TruthEvent {
            kind: e.kind,
            t_start: e.t_ms,
            t_end: e.t_ms + e.duration_ms(),
            magnitude: e.magnitude,
        })
        .collect();
    events.sort_by_key(|e| (e.t_start, e.t_end));

    Ok(Drive {
        scenario: s.clone(),
        streams: PackageStreams {
            samples,
            gps,
            frames,
        },
        truth: GroundTruth {
            events,
            rough_patches: s.rough_patches.clone(),
            route_length_m: route.length_m(),
            distance_m: odo.at(duration),
        },
    })
}

/// Spacing between injected events in [`default_drive`].
const SLOT_MS: i64 = 9000;

/// Two-minute drive with potholes, lane changes and one stop at
/// magnitudes of 10σ, placed pseudo-randomly from the seed.
pub fn default_drive(seed: u64) -> Scenario {
    let mut s = Scenario::quiet(seed, 150.0);
    let sigma = s.noise.accel_sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d71e);
    let kinds = [
        InjectedKind::Pothole,
        InjectedKind::LaneChange,
        InjectedKind::Pothole,
        InjectedKind::Pothole,
        InjectedKind::LaneChange,
        InjectedKind::Pothole,
        InjectedKind::LaneChange,
        InjectedKind::Pothole,
        InjectedKind::LaneChange,
        InjectedKind::Pothole,
        InjectedKind::Pothole,
        InjectedKind::LaneChange,
    ];
    let jitter = rand_distr::Uniform::new(0i64, 3000).expect("non-empty range");
    for (i, kind) in kinds.into_iter().enumerate() {
        s.events.push(InjectedEvent {
            t_ms: 4000 + i as i64 * SLOT_MS + jitter.sample(&mut rng),
            kind,
            magnitude: 10.0 * sigma,
        });
    }
    s.events.push(InjectedEvent {
        t_ms: 4000 + kinds.len() as i64 * SLOT_MS,
        kind: InjectedKind::Stop,
        magnitude: 3.0,
    });
    s
}

/// Precision / recall of detected events against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub detections: usize,
    pub truth_events: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    /// Lane-change injections overlapped by a `Pothole` detection.
    pub lane_changes_as_pothole: usize,
}

fn expected_kind(kind: InjectedKind) -> Option<EventKind> {
    match kind {
        InjectedKind::Pothole => Some(EventKind::Pothole),
        InjectedKind::LaneChange => Some(EventKind::SteeringEvent),
        InjectedKind::Stop => None,
    }
}

fn overlaps(a0: i64, a1: i64, b0: i64, b1: i64, tol: i64) -> bool {
    a0 <= b1 + tol && b0 <= a1 + tol
}

/// Greedy one-to-one matching: a detection matches an unmatched truth
/// event of the corresponding kind whose interval it overlaps, allowing
/// `tol_ms` slack. Stops have no detector label and are not scored; a
/// detection during a stop counts against precision.
pub fn evaluate_detections(truth: &GroundTruth, detected: &[DriveEvent], tol_ms: i64) -> DetectionScore {
    let scored: Vec<&TruthEvent> = truth
        .events
        .iter()
        .filter(|e| expected_kind(e.kind).is_some())
        .collect();
    let detections: Vec<&DriveEvent> = detected.iter().filter(|d| d.kind != EventKind::Calm).collect();
    let mut used = vec![false; scored.len()];
    let mut matched = 0;
    for d in &detections {
        if let Some(j) = (0..scored.len()).find(|&j| {
            !used[j]
                && expected_kind(scored[j].kind) == Some(d.kind)
                && overlaps(d.t_start, d.t_end, scored[j].t_start, scored[j].t_end, tol_ms)
        }) {
            used[j] = true;
            matched += 1;
        }
    }
    let lane_changes_as_pothole = scored
        .iter()
        .filter(|e| e.kind == InjectedKind::LaneChange)
        .filter(|e| {
            detections
                .iter()
                .any(|d| d.kind == EventKind::Pothole && overlaps(d.t_start, d.t_end, e.t_start, e.t_end, 0))
        })
        .count();
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    DetectionScore {
        detections: detections.len(),
        truth_events: scored.len(),
        matched,
        precision: ratio(matched, detections.len()),
        recall: ratio(matched, scored.len()),
        lane_changes_as_pothole,
    }
}

/// Reference roughness per `segment_len_m` of route, rising linearly with
/// the expected vertical RMS (base noise plus any injected patch).
pub fn synthetic_reference(s: &Scenario, truth: &GroundTruth, segment_len_m: f64) -> ReferenceIri {
    let n = (truth.distance_m.min(truth.route_length_m) / segment_len_m).floor() as usize;
    let records = (0..n)
        .map(|i| {
            let (b, e) = (i as f64 * segment_len_m, (i + 1) as f64 * segment_len_m);
            let amp = truth.roughness_between(b, e);
            let expected_rms = (s.noise.accel_sigma.powi(2) + amp.powi(2)).sqrt();
            ReferenceIriRecord {
                begin_log_m: b,
                end_log_m: e,
                iri: 0.8 + 6.0 * expected_rms,
            }
        })
        .collect();
    ReferenceIri {
        units: Some("m/km".into()),
        records,
    }
}
