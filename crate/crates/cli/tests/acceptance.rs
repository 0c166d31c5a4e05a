//! Acceptance suite. Runs every criterion in order and prints one PASS/FAIL
//! line per criterion; exits non-zero if any fails.
//!
//! Positional arguments filter by criterion id (`ac7`) or title substring.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadsense_cli::analysis;
use roadsense_cli::config::AnalysisConfig;
use roadsense_core::canonical::sha256_hex;
use roadsense_core::drivesim::{self, NoiseSpec, RoughPatch, Scenario};
use roadsense_core::geo::{self, LatLon, Polyline, ReferenceIriRecord, EARTH_RADIUS_M};
use roadsense_core::kinematics::{self, SegmentReport};
use roadsense_core::model::{self, Axis, BlobEntry, PackageManifest, PackageStreams, SensorSample};
use roadsense_core::packstore::{
    self, BlobProgress, CrashPoint, PackageMeta, RetryPolicy, UploadEvent, UploadState, UploadStatus,
};
use roadsense_core::timeline::{self, AlignedRecord, TimeIndex};
use roadsense_syncd::replay::{self, NetworkProfile};
use roadsense_syncd::server::PACKAGES_DIR;
use roadsense_syncd::uploader::{TranscriptEntry, UploadError, UploadOptions, Uploader};
use roadsense_syncd::{spawn_background, ServerConfig, ServerHandle, SyncClient};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

trait OrFail<T> {
    fn or_fail(self, what: &str) -> Result<T, String>;
}

impl<T, E: std::fmt::Display> OrFail<T> for Result<T, E> {
    fn or_fail(self, what: &str) -> Result<T, String> {
        self.map_err(|e| format!("{what}: {e}"))
    }
}

impl<T> OrFail<T> for Option<T> {
    fn or_fail(self, what: &str) -> Result<T, String> {
        self.ok_or_else(|| format!("{what}: missing"))
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn tempdir() -> Result<tempfile::TempDir, String> {
    tempfile::tempdir().or_fail("tempdir")
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- AC1

fn hex_string(r: &mut ChaCha8Rng, n: usize) -> String {
    (0..n)
        .map(|_| char::from_digit(r.random_range(0..16), 16).unwrap())
        .collect()
}

fn random_uuid(r: &mut ChaCha8Rng) -> String {
    let h = hex_string(r, 32);
    format!("{}-{}-{}-{}-{}", &h[..8], &h[8..12], &h[12..16], &h[16..20], &h[20..])
}

const DEVICE_CHARS: &[char] = &['a', 'Z', '0', '-', '_', ' ', 'é', '"', '\\', '/', '\u{1F697}', '\n', '日', '\t'];
const BLOB_POOL: &[&str] = &[
    model::SENSORS_BLOB,
    model::GPS_BLOB,
    model::FRAMES_BLOB,
    "frames/000001.jpg",
    "raw/imu.bin",
    "notes.txt",
];

fn random_manifest(r: &mut ChaCha8Rng) -> PackageManifest {
    let device_len = r.random_range(1..24);
    let device_id = (0..device_len)
        .map(|_| DEVICE_CHARS[r.random_range(0..DEVICE_CHARS.len())])
        .collect();
    let started = r.random_range(0..2_000_000_000_000i64);
    let mut names = BLOB_POOL.to_vec();
    names.shuffle(r);
    let k = r.random_range(0..=names.len());
    let blobs = names[..k]
        .iter()
        .map(|n| BlobEntry {
            name: n.to_string(),
            bytes: r.random::<u64>() >> r.random_range(0..64),
            sha256: hex_string(r, 64),
        })
        .collect();
    PackageManifest {
        schema_version: model::SCHEMA_VERSION,
        package_id: random_uuid(r),
        device_id,
        started_at_ms: started,
        ended_at_ms: started + r.random_range(0..10_000_000),
        sensor_rate_hz: r.random_range(1..=400),
        frame_rate_fps: r.random_range(0..=60),
        blobs,
    }
}

fn ac1_round_trip() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    for i in 0..1000 {
        let m = random_manifest(&mut r);
        let bytes = model::serialize_manifest(&m).or_fail("serialize")?;
        let parsed = model::parse_manifest(&bytes).or_fail("parse")?;
        ensure!(parsed == m, "manifest {i}: parse∘serialize changed the value");
        let again = model::serialize_manifest(&parsed).or_fail("reserialize")?;
        ensure!(again == bytes, "manifest {i}: serialization not byte-stable");
        let pretty = serde_json::to_vec_pretty(&m).or_fail("pretty")?;
        let from_pretty = model::parse_manifest(&pretty).or_fail("parse pretty")?;
        ensure!(
            model::serialize_manifest(&from_pretty).or_fail("serialize")? == bytes,
            "manifest {i}: canonical form depends on input layout"
        );
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 5.0, "runtime {secs:.2}s >= 5s");
    Ok(format!("1000 manifests exact and byte-stable in {secs:.2}s"))
}

// ---------------------------------------------------------------- AC2

fn oracle_nearest(times: &[i64], t: i64, tol: u64) -> Option<usize> {
    let mut best: Option<(usize, u64)> = None;
    for (i, &x) in times.iter().enumerate() {
        let d = x.abs_diff(t);
        if best.is_none_or(|b| d < b.1) {
            best = Some((i, d));
        }
    }
    best.filter(|b| b.1 <= tol).map(|b| b.0)
}

fn ac2_timeline_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let (mut queries, mut hits) = (0usize, 0usize);
    while queries < 100_000 {
        let n = r.random_range(0..2000);
        let mut t = r.random_range(-1000..1000i64);
        let times: Vec<i64> = (0..n)
            .map(|_| {
                t += r.random_range(1..60);
                t
            })
            .collect();
        let idx = TimeIndex::build(times.clone()).or_fail("build")?;
        let lo = times.first().copied().unwrap_or(0) - 200;
        let hi = times.last().copied().unwrap_or(0) + 200;
        for _ in 0..1000 {
            queries += 1;
            if r.random_bool(0.5) {
                let q = r.random_range(lo..=hi);
                let tol = r.random_range(0..=120);
                let got = idx.nearest_position(q, tol);
                ensure!(
                    got == oracle_nearest(&times, q, tol),
                    "nearest({q}, {tol}) = {got:?} over {n} items"
                );
                hits += got.is_some() as usize;
            } else {
                let (a, b) = (r.random_range(lo..=hi), r.random_range(lo..=hi));
                match idx.range(a, b) {
                    Ok(got) => {
                        let want: Vec<i64> = times.iter().copied().filter(|&x| a <= x && x <= b).collect();
                        ensure!(got == want.as_slice(), "range({a}, {b}) disagrees");
                    }
                    Err(_) => ensure!(a > b, "range({a}, {b}) rejected"),
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "runtime {secs:.2}s >= 10s");
    Ok(format!("{queries} queries agree with linear scan ({hits} nearest hits) in {secs:.2}s"))
}

// ---------------------------------------------------------------- AC3

fn ac3_sampling_structure() -> Outcome {
    let tmp = tempdir()?;
    let s = Scenario::quiet(7, 60.0);
    let drive = drivesim::generate_drive(&s).or_fail("generate")?;
    let created = packstore::create_package(tmp.path(), &drive.streams, &drive.package_meta()).or_fail("create")?;
    ensure!(created.manifest.sensor_rate_hz == 30 && created.manifest.frame_rate_fps == 10, "rates");
    ensure!(model::validate_package(&created.dir).or_fail("validate")?.valid, "package invalid");
    let streams = PackageStreams::load(&created.dir).or_fail("load")?;
    let aligned = timeline::align_streams(
        &TimeIndex::build(streams.samples).or_fail("samples")?,
        &TimeIndex::build(streams.gps).or_fail("gps")?,
        &TimeIndex::build(streams.frames.clone()).or_fail("frames")?,
        &timeline::AlignConfig::default(),
    );
    let mut refs: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, rec) in aligned.iter().enumerate() {
        if let Some(f) = &rec.frame {
            refs.entry(f.index).or_default().push(i);
        }
    }
    let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
    for f in &streams.frames {
        let positions = refs.get(&f.index).map(Vec::as_slice).unwrap_or(&[]);
        ensure!(
            (2..=4).contains(&positions.len()),
            "frame {} referenced by {} records",
            f.index,
            positions.len()
        );
        ensure!(
            positions.windows(2).all(|w| w[1] == w[0] + 1),
            "frame {} records not consecutive",
            f.index
        );
        *hist.entry(positions.len()).or_default() += 1;
    }
    Ok(format!("{} frames, records per frame {hist:?}", streams.frames.len()))
}

// ---------------------------------------------------------------- AC4

fn random_samples(r: &mut ChaCha8Rng, n: usize) -> Vec<SensorSample> {
    let mut t = 0;
    (0..n)
        .map(|_| {
            t += r.random_range(20..45);
            SensorSample {
                t,
                ax: r.random_range(-3.0..3.0),
                ay: r.random_range(-3.0..3.0),
                az: 9.81 + r.random_range(-3.0..3.0),
                gx: 0.0,
                gy: 0.0,
                gz: 0.0,
            }
        })
        .collect()
}

fn ac4_rms_properties() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    for case in 0..200 {
        let n = r.random_range(2..400);
        let c: f64 = r.random_range(-50.0..50.0);
        let shift: f64 = r.random_range(-100.0..100.0);
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-10.0..10.0)).collect();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let (a, b) = (kinematics::rms(&scaled).or_fail("rms")?, c.abs() * kinematics::rms(&v).or_fail("rms")?);
        worst = worst.max(rel(a, b));
        ensure!(rel_close(a, b, 1e-9), "case {case}: rms homogeneity {a} vs {b}");

        let samples = random_samples(&mut r, n);
        let scaled_samples: Vec<SensorSample> = samples
            .iter()
            .map(|s| {
                let mut s = *s;
                for axis in Axis::ALL {
                    *s.accel_mut(axis) *= c;
                }
                s
            })
            .collect();
        let shifted: Vec<SensorSample> = samples
            .iter()
            .map(|s| SensorSample { az: s.az + shift, ax: s.ax + shift, ..*s })
            .collect();
        for axis in Axis::ALL {
            for detrend in [false, true] {
                let base = kinematics::sliding_rms(&samples, axis, 1000, 500, detrend).or_fail("sliding")?;
                let sc = kinematics::sliding_rms(&scaled_samples, axis, 1000, 500, detrend).or_fail("sliding")?;
                ensure!(base.points.len() == sc.points.len(), "case {case}: window count changed");
                for (p, q) in base.points.iter().zip(&sc.points) {
                    worst = worst.max(rel(q.rms, c.abs() * p.rms));
                    ensure!(
                        rel_close(q.rms, c.abs() * p.rms, 1e-9),
                        "case {case}: sliding homogeneity {axis} detrend={detrend}"
                    );
                }
            }
            let base = kinematics::sliding_rms(&samples, axis, 1000, 500, true).or_fail("sliding")?;
            let sh = kinematics::sliding_rms(&shifted, axis, 1000, 500, true).or_fail("sliding")?;
            for (p, q) in base.points.iter().zip(&sh.points) {
                worst = worst.max(rel(p.rms, q.rms));
                ensure!(rel_close(p.rms, q.rms, 1e-9), "case {case}: detrend shift invariance {axis}");
            }
        }

        let records = |ss: &[SensorSample]| -> Vec<AlignedRecord> {
            ss.iter()
                .map(|s| AlignedRecord {
                    t: s.t,
                    sample: *s,
                    position: None,
                    speed_mps: None,
                    frame: None,
                })
                .collect()
        };
        let chainage: Vec<f64> = (0..n).map(|i| i as f64 * 0.9).collect();
        let seg = kinematics::segment_roughness(&records(&samples), &chainage, 40.0).or_fail("segments")?;
        let seg_c = kinematics::segment_roughness(&records(&scaled_samples), &chainage, 40.0).or_fail("segments")?;
        for (p, q) in seg.iter().zip(&seg_c) {
            if let (Some(a), Some(b)) = (p.rms, q.rms) {
                worst = worst.max(rel(b, c.abs() * a));
                ensure!(rel_close(b, c.abs() * a, 1e-9), "case {case}: segment homogeneity");
            }
        }
    }

    let amp = 2.5;
    let sine: Vec<SensorSample> = (0..2000)
        .map(|i| {
            let t = i * 10;
            SensorSample {
                t,
                ax: 0.0,
                ay: 0.0,
                az: amp * (2.0 * PI * 1.3 * t as f64 / 1000.0).sin(),
                gx: 0.0,
                gy: 0.0,
                gz: 0.0,
            }
        })
        .collect();
    let mut sine_err: f64 = 0.0;
    for detrend in [false, true] {
        let series = kinematics::sliding_rms(&sine, Axis::Z, 5000, 1000, detrend).or_fail("sine")?;
        // Tail windows run past the last sample and hold less than a window
        // of signal; only full windows satisfy window ≫ period.
        let last_t = sine.last().map_or(0, |s| s.t);
        let full: Vec<_> = series.points.iter().filter(|p| p.t_center + 2500 <= last_t + 10).collect();
        ensure!(full.len() >= 10, "only {} full sine windows", full.len());
        for p in full {
            let e = (p.rms - amp * FRAC_1_SQRT_2).abs() / (amp * FRAC_1_SQRT_2);
            sine_err = sine_err.max(e);
            ensure!(e <= 0.02, "sine window at {} off by {:.2}%", p.t_center, 100.0 * e);
        }
    }
    Ok(format!(
        "worst relative deviation {worst:.1e}; sine RMS within {:.3}% of A/√2",
        100.0 * sine_err
    ))
}

// ---------------------------------------------------------------- AC5

fn detection_score(s: &Scenario) -> Result<drivesim::DetectionScore, String> {
    let drive = drivesim::generate_drive(s).or_fail("generate")?;
    let report = analysis::analyze_streams("ac5", &drive.streams, None, None, &AnalysisConfig::default())
        .or_fail("analyze")?;
    Ok(drivesim::evaluate_detections(&drive.truth, &report.events, 250))
}

fn ac5_event_rule() -> Outcome {
    let (mut min_p, mut min_r) = (1.0f64, 1.0f64);
    let (mut matched, mut truths) = (0, 0);
    for seed in 0..20 {
        let noisy = drivesim::default_drive(seed);
        let ns = detection_score(&noisy)?;
        ensure!(
            ns.precision >= 0.9 && ns.recall >= 0.9,
            "seed {seed} noisy: precision {:.3} recall {:.3}",
            ns.precision,
            ns.recall
        );
        ensure!(ns.lane_changes_as_pothole == 0, "seed {seed}: lane change labelled Pothole");
        min_p = min_p.min(ns.precision);
        min_r = min_r.min(ns.recall);
        matched += ns.matched;
        truths += ns.truth_events;

        let mut clean = noisy.clone();
        clean.noise = NoiseSpec {
            accel_sigma: 0.0,
            gyro_sigma: 0.0,
        };
        clean.gps_noise_m = 0.0;
        let cs = detection_score(&clean)?;
        ensure!(
            cs.precision == 1.0 && cs.recall == 1.0,
            "seed {seed} clean: precision {} recall {}",
            cs.precision,
            cs.recall
        );
        ensure!(cs.lane_changes_as_pothole == 0, "seed {seed} clean: lane change labelled Pothole");
    }
    Ok(format!(
        "clean 20/20 exact; noisy min precision {min_p:.3}, min recall {min_r:.3}, {matched}/{truths} matched"
    ))
}

// ---------------------------------------------------------------- AC6

fn ac6_roughness_ranking() -> Outcome {
    let cfg = AnalysisConfig::default();
    let l = cfg.segment_len_m;
    let mut min_ratio = f64::INFINITY;
    for seed in 0..20 {
        let mut s = Scenario::quiet(600 + seed, 60.0);
        s.rough_patches = vec![RoughPatch {
            start_m: 3.0 * l,
            end_m: 4.0 * l,
            amplitude: 0.25,
        }];
        let drive = drivesim::generate_drive(&s).or_fail("generate")?;
        let route = Polyline::new(s.route.clone()).or_fail("route")?;
        let report = analysis::analyze_streams("ac6", &drive.streams, Some(&route), None, &cfg).or_fail("analyze")?;
        let rough = report
            .segments
            .iter()
            .find(|g| g.index == 3)
            .and_then(|g| g.rms)
            .or_fail("segment 3 rms")?;
        let runner_up = report
            .segments
            .iter()
            .filter(|g| g.index != 3)
            .filter_map(|g| g.rms)
            .fold(0.0, f64::max);
        ensure!(
            rough > runner_up,
            "seed {seed}: segment 3 rms {rough:.4} not above {runner_up:.4}"
        );
        min_ratio = min_ratio.min(rough / runner_up);
    }
    Ok(format!("rough segment strict maximum in 20/20 seeds (smallest margin ×{min_ratio:.2})"))
}

// ---------------------------------------------------------------- AC7

/// Great-circle distance via the atan2 form of the spherical Vincenty
/// formula, independent of the haversine implementation.
fn oracle_distance(a: LatLon, b: LatLon) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dl = (b.lon - a.lon).to_radians();
    let y = ((p2.cos() * dl.sin()).powi(2) + (p1.cos() * p2.sin() - p1.sin() * p2.cos() * dl.cos()).powi(2)).sqrt();
    let x = p1.sin() * p2.sin() + p1.cos() * p2.cos() * dl.cos();
    EARTH_RADIUS_M * y.atan2(x)
}

fn random_polyline(r: &mut ChaCha8Rng) -> Vec<LatLon> {
    let mut p = LatLon::new(r.random_range(38.0..40.0), r.random_range(-95.0..-91.0));
    let mut heading: f64 = r.random_range(0.0..2.0 * PI);
    let mut out = vec![p];
    for _ in 0..r.random_range(1..6) {
        let len = r.random_range(40.0..300.0);
        p = p.offset(len * heading.sin(), len * heading.cos());
        out.push(p);
        heading += r.random_range(-1.0..1.0);
    }
    out
}

fn lerp(a: LatLon, b: LatLon, f: f64) -> LatLon {
    LatLon::new(a.lat + f * (b.lat - a.lat), a.lon + f * (b.lon - a.lon))
}

/// Snap check against a 0.1 m densification of the line. `Ok(d)` carries
/// the chainage disagreement.
fn densified_snap_check(p: LatLon, line: &Polyline) -> Result<f64, String> {
    let snap = geo::snap_to_polyline(p, line);
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    let (v, cum) = (line.vertices(), line.cumulative());
    for i in 0..v.len() - 1 {
        let len = cum[i + 1] - cum[i];
        let steps = (len / 0.1).ceil() as usize;
        for k in 0..=steps {
            let f = k as f64 / steps as f64;
            candidates.push((geo::haversine(p, lerp(v[i], v[i + 1], f)), cum[i] + f * len));
        }
    }
    let best = candidates.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
    ensure!(
        (snap.cross_track_m - best).abs() <= 1.0,
        "cross-track {} vs brute force {best}",
        snap.cross_track_m
    );
    // Points equidistant from two parts of the line have several valid
    // chainages; the snap must match one of them.
    let gap = candidates
        .iter()
        .filter(|c| c.0 <= best + 0.01)
        .map(|c| (c.1 - snap.chainage_m).abs())
        .fold(f64::INFINITY, f64::min);
    ensure!(gap <= 1.0, "chainage {} is {gap} m from every brute-force optimum", snap.chainage_m);
    Ok(gap)
}

fn ac7_geo() -> Outcome {
    let columbia = LatLon::new(38.9517, -92.3341);
    let kc = LatLon::new(39.0997, -94.5786);
    let d = geo::haversine(columbia, kc);
    let o = oracle_distance(columbia, kc);
    ensure!((d - o).abs() <= 0.005 * o, "haversine {d} vs oracle {o}");
    ensure!((190_000.0..200_000.0).contains(&d), "Columbia→KC {d} m, expected ≈195 km");

    let mut r = rng(7);
    let mut worst_snap: f64 = 0.0;
    for _ in 0..60 {
        let line = Polyline::new(random_polyline(&mut r)).or_fail("polyline")?;
        for _ in 0..4 {
            let base = line.point_at(r.random_range(0.0..line.length_m()));
            let (e, n) = (r.random_range(-60.0..60.0), r.random_range(-60.0..60.0));
            worst_snap = worst_snap.max(densified_snap_check(base.offset(e, n), &line)?);
        }
    }

    let mut worst_join: f64 = 0.0;
    for case in 0..200 {
        let mut refs = Vec::new();
        let mut at = r.random_range(0..50) as f64;
        while at < 3000.0 {
            let len = r.random_range(10..400) as f64;
            refs.push(ReferenceIriRecord {
                begin_log_m: at,
                end_log_m: at + len,
                iri: r.random_range(0.5..10.0),
            });
            at += len + r.random_range(0..3) as f64 * r.random_range(0..60) as f64;
        }
        let seg_len = r.random_range(50..300) as f64;
        let segments: Vec<SegmentReport> = (0..(3200.0 / seg_len) as usize)
            .map(|i| SegmentReport {
                index: i,
                chainage_start_m: i as f64 * seg_len,
                chainage_end_m: (i + 1) as f64 * seg_len,
                rms: Some(1.0),
                mean_speed_mps: None,
                n_samples: 10,
                reference_iri: None,
            })
            .collect();
        let joined = geo::join_reference(&segments, &refs).or_fail("join")?;
        for s in &joined {
            let (mut sum, mut count) = (0.0, 0u32);
            let mut m = s.chainage_start_m;
            while m < s.chainage_end_m {
                if let Some(rec) = refs.iter().find(|x| x.begin_log_m <= m && m + 1.0 <= x.end_log_m) {
                    sum += rec.iri;
                    count += 1;
                }
                m += 1.0;
            }
            let want = (count > 0).then(|| sum / count as f64);
            match (s.reference_iri, want) {
                (None, None) => {}
                (Some(a), Some(b)) => {
                    worst_join = worst_join.max((a - b).abs());
                    ensure!((a - b).abs() <= 1e-9, "case {case} segment {}: {a} vs {b}", s.index);
                }
                (a, b) => return Err(format!("case {case} segment {}: {a:?} vs {b:?}", s.index)),
            }
        }
    }

    let mut worst_metric: f64 = 0.0;
    for case in 0..500 {
        let n = r.random_range(2..80);
        let truth: Vec<f64> = (0..n).map(|_| r.random_range(0.5..12.0)).collect();
        let pred: Vec<f64> = truth.iter().map(|y| y + r.random_range(-2.0..2.0)).collect();
        let m = geo::regression_metrics(&truth, &pred).or_fail("metrics")?;
        let nf = n as f64;
        let rmse = (truth.iter().zip(&pred).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / nf).sqrt();
        let rmspe = 100.0 * (truth.iter().zip(&pred).map(|(y, p)| ((y - p) / y).powi(2)).sum::<f64>() / nf).sqrt();
        let (sy, sp) = (truth.iter().sum::<f64>(), pred.iter().sum::<f64>());
        let syy = truth.iter().map(|y| y * y).sum::<f64>();
        let spp = pred.iter().map(|p| p * p).sum::<f64>();
        let syp = truth.iter().zip(&pred).map(|(y, p)| y * p).sum::<f64>();
        let r2 = (nf * syp - sy * sp).powi(2) / ((nf * syy - sy * sy) * (nf * spp - sp * sp));
        for (got, want) in [(m.rmse, rmse), (m.rmspe_percent, rmspe), (m.r_squared, r2)] {
            worst_metric = worst_metric.max((got - want).abs());
            ensure!((got - want).abs() <= 1e-12, "case {case}: {got} vs {want}");
        }
        let own = geo::regression_metrics(&truth, &truth).or_fail("self-fit")?;
        ensure!(
            own.rmse == 0.0 && own.rmspe_percent == 0.0 && own.r_squared == 1.0,
            "case {case}: self-fit {own:?}"
        );
    }
    Ok(format!(
        "Columbia→KC {:.1} km (oracle Δ {:.1e} m); snap Δchainage ≤ {worst_snap:.3} m; join Δ ≤ {worst_join:.1e}; metrics Δ ≤ {worst_metric:.1e}; self-fit (0, 0, 1)",
        d / 1000.0,
        (d - o).abs()
    ))
}

// ---------------------------------------------------------------- sync helpers

fn start_server(data: &Path) -> Result<ServerHandle, String> {
    spawn_background(ServerConfig::new("127.0.0.1:0".parse().unwrap(), data)).or_fail("start server")
}

fn fast_policy() -> RetryPolicy {
    RetryPolicy {
        max_retries: 8,
        backoff_base_ms: 10,
        backoff_cap_ms: 200,
    }
}

fn simulated_package(root: &Path, seed: u64, duration_s: f64) -> Result<(PathBuf, PackageManifest), String> {
    let drive = drivesim::generate_drive(&Scenario::quiet(seed, duration_s)).or_fail("generate")?;
    let created = packstore::create_package(root, &drive.streams, &drive.package_meta()).or_fail("create")?;
    Ok((created.dir, created.manifest))
}

/// Every blob the server stores for the package equals the local bytes.
fn audit_server_bytes(data: &Path, dir: &Path, m: &PackageManifest) -> Result<u64, String> {
    let mut total = 0;
    for b in &m.blobs {
        let local = std::fs::read(dir.join(&b.name)).or_fail("local blob")?;
        let stored = std::fs::read(data.join(PACKAGES_DIR).join(&m.package_id).join(&b.name)).or_fail("stored blob")?;
        ensure!(
            stored.len() as u64 == b.bytes,
            "{} {}: server holds {} bytes, blob has {}",
            m.package_id,
            b.name,
            stored.len(),
            b.bytes
        );
        ensure!(stored == local && sha256_hex(&stored) == b.sha256, "{} {}: content differs", m.package_id, b.name);
        total += b.bytes;
    }
    Ok(total)
}

fn verify_download(client: &SyncClient, dir: &Path, m: &PackageManifest) -> Result<(), String> {
    for b in &m.blobs {
        let got = client.download(&m.package_id, &b.name).or_fail("download")?;
        ensure!(sha256_hex(&got) == b.sha256, "{} {}: digest mismatch", m.package_id, b.name);
        ensure!(got == std::fs::read(dir.join(&b.name)).or_fail("local")?, "{}: bytes differ", b.name);
    }
    Ok(())
}

// ---------------------------------------------------------------- AC8

fn ac8_sync_end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempdir()?;
    let data = tmp.path().join("server");
    let server = start_server(&data)?;
    let url = server.url();
    let mut clients = Vec::new();
    for c in 0..8u64 {
        let root = tmp.path().join(format!("client{c}"));
        std::fs::create_dir_all(&root).or_fail("mkdir")?;
        let mut pkgs = Vec::new();
        for k in 0..4u64 {
            pkgs.push(simulated_package(&root, 800 + c * 10 + k, 12.0)?);
        }
        clients.push(pkgs);
    }
    let outcomes: Vec<Result<(), String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = clients
            .iter()
            .map(|pkgs| {
                let url = url.clone();
                scope.spawn(move || -> Result<(), String> {
                    for (dir, _) in pkgs {
                        let out = replay::replay_upload(dir, &url, &NetworkProfile::clean(), fast_policy())
                            .or_fail("replay")?;
                        let state = out.state.or_fail("state")?;
                        ensure!(state.status == UploadStatus::Complete, "{}: {}", dir.display(), state.status);
                    }
                    Ok(())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("client panicked".into()))).collect()
    });
    for o in outcomes {
        o?;
    }
    let client = SyncClient::new(&url);
    let listing = client.query(0).or_fail("query")?;
    let seqs: Vec<u64> = listing.iter().map(|c| c.commit_seq).collect();
    ensure!(seqs == (1..=32).collect::<Vec<_>>(), "commit seqs {seqs:?}");
    let by_id: BTreeMap<&str, &PackageManifest> = listing.iter().map(|c| (c.manifest.package_id.as_str(), &c.manifest)).collect();
    let mut bytes = 0;
    for (dir, m) in clients.iter().flatten() {
        ensure!(by_id.get(m.package_id.as_str()) == Some(&m), "{} missing or different", m.package_id);
        verify_download(&client, dir, m)?;
        bytes += m.total_bytes();
    }
    server.shutdown().or_fail("shutdown")?;
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "runtime {secs:.1}s >= 60s");
    Ok(format!("32 committed, seq dense 1..32, {bytes} bytes verified in {secs:.2}s"))
}

// ---------------------------------------------------------------- AC9

fn ac9_resumability() -> Outcome {
    let tmp = tempdir()?;
    let data = tmp.path().join("server");
    let lib = tmp.path().join("lib");
    std::fs::create_dir_all(&lib).or_fail("mkdir")?;
    let server = start_server(&data)?;

    // Drop at 50% plus two disconnects.
    let (dir, m) = simulated_package(&lib, 901, 30.0)?;
    let profile = NetworkProfile {
        drop_at_fraction: Some(0.5),
        disconnect_count: 2,
        ..NetworkProfile::default()
    };
    let out = replay::replay_upload(&dir, &server.url(), &profile, fast_policy()).or_fail("replay")?;
    let state = out.state.or_fail("state")?;
    ensure!(state.status == UploadStatus::Complete, "chaos upload ended {}", state.status);
    let faults = out.transcript.entries.iter().filter(|e| matches!(e, TranscriptEntry::Fault { .. })).count();
    ensure!(faults == 3, "{faults} faults fired, expected 3");
    let interruptions = out.transcript.transitions().filter(|t| t.2 == UploadStatus::Interrupted).count();
    ensure!(interruptions >= 2, "only {interruptions} interruptions");
    let audited = audit_server_bytes(&data, &dir, &m)?;

    // Crash mid-upload, then restart the server.
    let (dir2, m2) = simulated_package(&lib, 902, 30.0)?;
    let crash = NetworkProfile {
        crash_at_fraction: Some(0.5),
        ..NetworkProfile::default()
    };
    let out = replay::replay_upload(&dir2, &server.url(), &crash, fast_policy()).or_fail("replay")?;
    ensure!(out.state.is_none() && matches!(out.error, Some(UploadError::Crashed)), "crash did not fire");
    let before = SyncClient::new(&server.url()).session(&m2.package_id).or_fail("session")?.or_fail("session")?;
    let durable: u64 = before.blobs.values().map(|b| b.offset).sum();
    ensure!(durable > 0 && durable < m2.total_bytes(), "durable {durable} of {}", m2.total_bytes());
    let committed_before = SyncClient::new(&server.url()).query(0).or_fail("query")?;
    server.shutdown().or_fail("shutdown")?;

    let server = start_server(&data)?;
    let client = SyncClient::new(&server.url());
    let after = client.session(&m2.package_id).or_fail("session")?.or_fail("session after restart")?;
    ensure!(after.blobs == before.blobs, "offsets changed across restart");
    let index = packstore::recover(&lib, Some(&client)).or_fail("recover")?;
    let entry = index.get(&m2.package_id).or_fail("entry")?;
    let st = entry.state.as_ref().or_fail("state")?;
    ensure!(st.status == UploadStatus::Interrupted, "recovered as {}", st.status);
    for (name, p) in &st.blobs {
        ensure!(p.sent == after.blobs[name].offset, "{name}: local {} vs server {}", p.sent, after.blobs[name].offset);
    }
    let resumed = replay::replay_upload(&dir2, &server.url(), &NetworkProfile::clean(), fast_policy()).or_fail("resume")?;
    ensure!(resumed.state.map(|s| s.status) == Some(UploadStatus::Complete), "resume did not complete");
    let resent: u64 = resumed
        .transcript
        .entries
        .iter()
        .filter_map(|e| match e {
            TranscriptEntry::Http { method, range: Some(r), .. } if method == "PUT" => {
                roadsense_syncd::protocol::parse_content_range(r).map(|(s, e, _)| e - s + 1)
            }
            _ => None,
        })
        .sum();
    ensure!(resent == m2.total_bytes() - durable, "resume sent {resent} bytes, expected {}", m2.total_bytes() - durable);
    let audited2 = audit_server_bytes(&data, &dir2, &m2)?;

    // Restart after commit.
    let committed = client.query(0).or_fail("query")?;
    ensure!(committed.len() == committed_before.len() + 1, "commit count");
    server.shutdown().or_fail("shutdown")?;
    let server = start_server(&data)?;
    let client = SyncClient::new(&server.url());
    ensure!(client.query(0).or_fail("query")? == committed, "commit log changed across restart");
    verify_download(&client, &dir, &m)?;
    verify_download(&client, &dir2, &m2)?;
    let (dir3, m3) = simulated_package(&lib, 903, 5.0)?;
    let out = replay::replay_upload(&dir3, &server.url(), &NetworkProfile::clean(), fast_policy()).or_fail("replay")?;
    ensure!(out.state.map(|s| s.status) == Some(UploadStatus::Complete), "post-restart upload");
    let seqs: Vec<u64> = client.query(0).or_fail("query")?.iter().map(|c| c.commit_seq).collect();
    ensure!(seqs == vec![1, 2, 3], "seqs after restarts {seqs:?}");
    audit_server_bytes(&data, &dir3, &m3)?;
    server.shutdown().or_fail("shutdown")?;
    Ok(format!(
        "chaos upload complete after {faults} faults, {audited} bytes stored once; crash resumed from {durable}/{} with {resent} bytes resent; restarts lost nothing",
        audited2
    ))
}

// ---------------------------------------------------------------- AC10

fn tiny_streams(i: u64) -> PackageStreams {
    let samples = (0..5)
        .map(|k| SensorSample {
            t: k * 33,
            ax: 0.0,
            ay: 0.0,
            az: 9.81 + i as f64 * 1e-3,
            gx: 0.0,
            gy: 0.0,
            gz: 0.0,
        })
        .collect();
    let gps = vec![model::GpsFix {
        t: 0,
        lat: 38.95,
        lon: -92.33,
        alt_m: 270.0,
        speed_mps: Some(0.0),
        h_acc_m: 3.0,
    }];
    let frames = vec![model::FrameRef {
        t: 0,
        index: 0,
        file: model::FrameRef::file_for(0),
    }];
    PackageStreams { samples, gps, frames }
}

fn ac10_fan_out() -> Outcome {
    const COMMITS: u64 = 100;
    let tmp = tempdir()?;
    let server = start_server(&tmp.path().join("server"))?;
    let url = server.url();
    let lib = tmp.path().join("lib");
    std::fs::create_dir_all(&lib).or_fail("mkdir")?;

    let results: Vec<Result<(usize, usize), String>> = std::thread::scope(|scope| {
        let producer = scope.spawn(|| -> Result<(usize, usize), String> {
            let client = SyncClient::new(&url);
            let opts = UploadOptions {
                policy: fast_policy(),
                ..UploadOptions::default()
            };
            for i in 0..COMMITS {
                let created = packstore::create_package(&lib, &tiny_streams(i), &PackageMeta::default()).or_fail("create")?;
                let state = Uploader::new(&client, opts.clone()).upload(&created.dir).or_fail("upload")?;
                ensure!(state.status == UploadStatus::Complete, "commit {i}: {}", state.status);
            }
            Ok((0, 0))
        });
        let subscribers: Vec<_> = (0..3u64)
            .map(|k| {
                let url = url.clone();
                scope.spawn(move || -> Result<(usize, usize), String> {
                    let mut r = rng(1000 + k);
                    let client = SyncClient::new(&url);
                    let (mut last, mut dups, mut reconnects) = (0u64, 0usize, 0usize);
                    let mut seen = Vec::new();
                    let deadline = Instant::now() + Duration::from_secs(120);
                    while last < COMMITS {
                        ensure!(Instant::now() < deadline, "subscriber {k} stalled at {last}");
                        let budget = r.random_range(1..=12);
                        let mut got = 0;
                        let stream = client.subscribe(last).or_fail("subscribe")?;
                        for ev in stream {
                            let Ok(ev) = ev else { break };
                            if ev.commit_seq <= last {
                                dups += 1;
                                continue;
                            }
                            ensure!(ev.commit_seq == last + 1, "subscriber {k}: {} after {last}", ev.commit_seq);
                            last = ev.commit_seq;
                            seen.push(last);
                            got += 1;
                            if got >= budget || last == COMMITS {
                                break;
                            }
                        }
                        reconnects += 1;
                        if r.random_bool(0.3) {
                            std::thread::sleep(Duration::from_millis(r.random_range(5..60)));
                        }
                    }
                    ensure!(seen == (1..=COMMITS).collect::<Vec<_>>(), "subscriber {k} saw {seen:?}");
                    Ok((reconnects, dups))
                })
            })
            .collect();
        let mut out = vec![producer.join().unwrap_or_else(|_| Err("producer panicked".into()))];
        out.extend(subscribers.into_iter().map(|h| h.join().unwrap_or_else(|_| Err("subscriber panicked".into()))));
        out
    });
    let mut stats = Vec::new();
    for r in results {
        stats.push(r?);
    }
    let listing = SyncClient::new(&url).query(0).or_fail("query")?;
    ensure!(listing.len() as u64 == COMMITS, "{} commits", listing.len());
    server.shutdown().or_fail("shutdown")?;
    let subs: Vec<String> = stats[1..]
        .iter()
        .map(|(r, d)| format!("{r} connections/{d} dups"))
        .collect();
    Ok(format!("3 subscribers each saw 1..{COMMITS} once in order ({})", subs.join(", ")))
}

// ---------------------------------------------------------------- AC11

fn expected_transition(s: &UploadState, e: &UploadEvent, p: &RetryPolicy) -> Option<UploadState> {
    use UploadStatus::*;
    let mut n = s.clone();
    match (s.status, e) {
        (Pending, UploadEvent::Start) | (Interrupted, UploadEvent::Start) => n.status = InProgress,
        (InProgress, UploadEvent::ChunkAcked { blob, offset }) => {
            let b = n.blobs.get_mut(blob)?;
            if *offset > b.bytes {
                return None;
            }
            b.sent = *offset;
        }
        (InProgress, UploadEvent::NetLost) => n.status = Interrupted,
        (InProgress, UploadEvent::Committed) => {
            if s.blobs.values().any(|b| b.sent != b.bytes) {
                return None;
            }
            n.status = Complete;
            n.last_error = None;
        }
        (Pending | InProgress | Interrupted, UploadEvent::ServerError { message }) => {
            n.status = Interrupted;
            n.attempt_count += 1;
            n.last_error = Some(message.clone());
        }
        (Interrupted, UploadEvent::GiveUp) if s.attempt_count > p.max_retries => n.status = Failed,
        _ => return None,
    }
    Some(n)
}

fn fsm_state(status: UploadStatus, attempts: u32, full: bool) -> UploadState {
    let blobs = [("a.jsonl", 100u64), ("b.jsonl", 40)]
        .into_iter()
        .map(|(n, bytes)| {
            (
                n.to_string(),
                BlobProgress {
                    bytes,
                    sent: if full { bytes } else { bytes / 2 },
                },
            )
        })
        .collect();
    UploadState {
        package_id: "00000000-0000-4000-8000-000000000000".into(),
        status,
        blobs,
        attempt_count: attempts,
        last_error: None,
    }
}

fn fsm_events() -> Vec<UploadEvent> {
    vec![
        UploadEvent::Start,
        UploadEvent::ChunkAcked { blob: "a.jsonl".into(), offset: 0 },
        UploadEvent::ChunkAcked { blob: "a.jsonl".into(), offset: 100 },
        UploadEvent::ChunkAcked { blob: "a.jsonl".into(), offset: 101 },
        UploadEvent::ChunkAcked { blob: "nope".into(), offset: 1 },
        UploadEvent::NetLost,
        UploadEvent::ServerError { message: "503".into() },
        UploadEvent::Committed,
        UploadEvent::GiveUp,
    ]
}

fn normalize(s: &UploadState) -> UploadState {
    if s.status == UploadStatus::InProgress {
        s.advance(&UploadEvent::NetLost, &RetryPolicy::default()).unwrap()
    } else {
        s.clone()
    }
}

fn ac11_fsm() -> Outcome {
    let policy = RetryPolicy {
        max_retries: 3,
        ..RetryPolicy::default()
    };
    let mut cells = 0;
    for status in UploadStatus::ALL {
        for attempts in [0, 3, 4] {
            for full in [false, true] {
                let s = fsm_state(status, attempts, full);
                for e in fsm_events() {
                    cells += 1;
                    let got = s.advance(&e, &policy).ok();
                    let want = expected_transition(&s, &e, &policy);
                    ensure!(got == want, "{status} (attempts {attempts}, full {full}) + {}: {got:?} vs {want:?}", e.name());
                }
            }
        }
    }
    let failed = fsm_state(UploadStatus::Failed, 7, false);
    let requeued = failed.requeue().or_fail("requeue")?;
    ensure!(requeued.status == UploadStatus::Pending && requeued.attempt_count == 0, "requeue");
    for status in UploadStatus::ALL.into_iter().filter(|s| *s != UploadStatus::Failed) {
        ensure!(fsm_state(status, 0, false).requeue().is_err(), "requeue from {status}");
    }

    // Sidecar kills at every persistence point.
    let tmp = tempdir()?;
    let drive = drivesim::generate_drive(&Scenario::quiet(1100, 3.0)).or_fail("generate")?;
    let created = packstore::create_package(tmp.path(), &drive.streams, &drive.package_meta()).or_fail("create")?;
    let manifest = &created.manifest;
    let mut r = rng(11);
    let mut kills = 0;
    for case in 0..100 {
        let mut states = vec![UploadState::new(manifest)];
        for _ in 0..r.random_range(1..12) {
            let cur = states.last().unwrap().clone();
            let mut options: Vec<UploadEvent> = vec![
                UploadEvent::Start,
                UploadEvent::NetLost,
                UploadEvent::ServerError { message: format!("e{case}") },
                UploadEvent::Committed,
                UploadEvent::GiveUp,
            ];
            for b in &manifest.blobs {
                options.push(UploadEvent::ChunkAcked {
                    blob: b.name.clone(),
                    offset: r.random_range(0..=b.bytes),
                });
                options.push(UploadEvent::ChunkAcked { blob: b.name.clone(), offset: b.bytes });
            }
            options.shuffle(&mut r);
            if let Some(next) = options.iter().find_map(|e| cur.advance(e, &fast_policy()).ok()) {
                states.push(next);
            }
        }
        let i = r.random_range(0..states.len());
        let prev = &states[i];
        let next = states.get(i + 1).unwrap_or(prev);
        for point in CrashPoint::ALL {
            kills += 1;
            packstore::save_state(&created.dir, prev).or_fail("save")?;
            packstore::save_state_crashing(&created.dir, next, point).or_fail("crash save")?;
            let index = packstore::recover(tmp.path(), None).or_fail("recover")?;
            let entry = index.get(&manifest.package_id).or_fail("entry")?;
            ensure!(entry.is_valid(), "package invalid after kill");
            let got = entry.state.clone().or_fail("state")?;
            ensure!(
                got == normalize(prev) || got == normalize(next),
                "case {case} {point:?}: recovered {got:?}"
            );
            ensure!(entry.issues.is_empty(), "case {case} {point:?}: {:?}", entry.issues);
        }
    }

    // Process kills during real uploads, resumed after recovery.
    let data = tmp.path().join("server");
    let lib = tmp.path().join("lib");
    std::fs::create_dir_all(&lib).or_fail("mkdir")?;
    let server = start_server(&data)?;
    let client = SyncClient::new(&server.url());
    let mut resumed = 0;
    for k in 0..8u64 {
        let (dir, m) = simulated_package(&lib, 1200 + k, 8.0)?;
        let profile = NetworkProfile {
            crash_at_fraction: Some(k as f64 / 8.0),
            ..NetworkProfile::default()
        };
        let out = replay::replay_upload(&dir, &server.url(), &profile, fast_policy()).or_fail("replay")?;
        ensure!(out.state.is_none(), "kill at {k}/8 did not fire");
        let index = packstore::recover(&lib, Some(&client)).or_fail("recover")?;
        let st = index.get(&m.package_id).and_then(|e| e.state.clone()).or_fail("state")?;
        ensure!(
            matches!(st.status, UploadStatus::Interrupted | UploadStatus::Pending),
            "kill at {k}/8 recovered as {}",
            st.status
        );
        let again = replay::replay_upload(&dir, &server.url(), &NetworkProfile::clean(), fast_policy()).or_fail("resume")?;
        ensure!(again.state.map(|s| s.status) == Some(UploadStatus::Complete), "kill at {k}/8 not resumable");
        audit_server_bytes(&data, &dir, &m)?;
        resumed += 1;
    }
    server.shutdown().or_fail("shutdown")?;
    Ok(format!(
        "{cells} (state × event) cells match the table; {kills} sidecar kills recovered to a persisted state; {resumed} upload kills resumed to Complete"
    ))
}

// ---------------------------------------------------------------- AC12

fn roadsense(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_roadsense"))
        .args(args)
        .output()
        .or_fail("spawn roadsense")?;
    ensure!(
        out.status.success(),
        "roadsense {}: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn ac12_determinism() -> Outcome {
    let tmp = tempdir()?;
    let mut reports = Vec::new();
    for run in ["first", "second"] {
        let base = tmp.path().join(run);
        let lib = base.join("lib");
        let route = base.join("route.geojson");
        let reference = base.join("reference.csv");
        let out = base.join("report");
        let pkg = roadsense(&[
            "simulate",
            "--seed",
            "42",
            "--library",
            path_str(&lib),
            "--route-out",
            path_str(&route),
            "--reference-out",
            path_str(&reference),
        ])?;
        roadsense(&[
            "analyze",
            pkg.trim(),
            "--route",
            path_str(&route),
            "--reference",
            path_str(&reference),
            "--out",
            path_str(&out),
        ])?;
        reports.push(std::fs::read(out.join("report.json")).or_fail("report.json")?);
    }
    ensure!(reports[0] == reports[1], "report.json differs between runs");
    let parsed: serde_json::Value = serde_json::from_slice(&reports[0]).or_fail("parse report")?;
    let events = parsed["events"].as_array().map_or(0, Vec::len);
    let segments = parsed["segments"].as_array().map_or(0, Vec::len);
    ensure!(events > 0 && segments > 0, "report is empty");
    Ok(format!(
        "two runs, {} bytes identical ({events} events, {segments} segments, sha256 {}…)",
        reports[0].len(),
        &sha256_hex(&reports[0])[..12]
    ))
}

// ---------------------------------------------------------------- runner

struct Criterion {
    id: u32,
    title: &'static str,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, title: "manifest round-trip", run: ac1_round_trip },
    Criterion { id: 2, title: "timeline oracle", run: ac2_timeline_oracle },
    Criterion { id: 3, title: "sampling-rate structure", run: ac3_sampling_structure },
    Criterion { id: 4, title: "RMS properties", run: ac4_rms_properties },
    Criterion { id: 5, title: "event rule exactness", run: ac5_event_rule },
    Criterion { id: 6, title: "roughness ranking", run: ac6_roughness_ranking },
    Criterion { id: 7, title: "geo oracles", run: ac7_geo },
    Criterion { id: 8, title: "sync end-to-end", run: ac8_sync_end_to_end },
    Criterion { id: 9, title: "resumability under chaos", run: ac9_resumability },
    Criterion { id: 10, title: "commit fan-out", run: ac10_fan_out },
    Criterion { id: 11, title: "upload FSM totality", run: ac11_fsm },
    Criterion { id: 12, title: "end-to-end determinism", run: ac12_determinism },
];

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<String>()
        .cloned()
        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |c: &Criterion| {
        filters.is_empty()
            || filters
                .iter()
                .any(|f| f.eq_ignore_ascii_case(&format!("ac{}", c.id)) || c.title.contains(f.as_str()))
    };
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| selected(c)) {
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| Err(panic_text(p)));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("AC{:02} PASS  {}: {detail} [{secs:.2}s]", c.id, c.title),
            Err(why) => {
                failed += 1;
                println!("AC{:02} FAIL  {}: {why} [{secs:.2}s]", c.id, c.title);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
