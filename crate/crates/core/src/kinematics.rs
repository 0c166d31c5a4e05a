//! IMU signal analysis: RMS roughness, robust spike detection and the
//! event rule that separates potholes from steering manoeuvres.
//!
//! Roughness is the RMS of mean-removed vertical acceleration. No
//! quarter-car IRI is simulated; reference IRI only enters through joined
//! ground-truth files (see [`crate::geo::join_reference`]).
//!
//! Event rule, by the set of axes that spiked together:
//!
//! | axes              | kind            |
//! |-------------------|-----------------|
//! | contains `z`      | `Pothole`       |
//! | non-empty ⊆ {x,y} | `SteeringEvent` |
//! | gap between these | `Calm`          |

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crate::model::Axis;
use crate::model::SensorSample;
use crate::timeline::AlignedRecord;

/// Consistency constant making MAD an estimator of σ for Gaussian data.
pub const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KinematicsError {
    #[error("empty input")]
    EmptyInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}

pub fn rms(values: &[f64]) -> Result<f64, KinematicsError> {
    if values.is_empty() {
        return Err(KinematicsError::EmptyInput);
    }
    Ok((values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt())
}

/// RMS about the mean. Requires a non-empty slice.
fn detrended_rms(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RmsPoint {
    pub t_center: i64,
    pub rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmsSeries {
    pub window_ms: u64,
    pub hop_ms: u64,
    pub points: Vec<RmsPoint>,
}

/// Windowed RMS of one acceleration axis over `[start, start + window)`
/// windows stepped by `hop_ms`. Windows with fewer than two samples are
/// skipped. `samples` must be time-ordered.
pub fn sliding_rms(
    samples: &[SensorSample],
    axis: Axis,
    window_ms: u64,
    hop_ms: u64,
    detrend: bool,
) -> Result<RmsSeries, KinematicsError> {
    if window_ms == 0 {
        return Err(KinematicsError::InvalidParameter("window_ms must be > 0"));
    }
    if hop_ms == 0 {
        return Err(KinematicsError::InvalidParameter("hop_ms must be > 0"));
    }
    let mut points = Vec::new();
    if let (Some(first), Some(last)) = (samples.first(), samples.last()) {
        let values: Vec<f64> = samples.iter().map(|s| s.accel(axis)).collect();
        let (mut lo, mut hi) = (0, 0);
        let mut start = first.t;
        while start <= last.t {
            let end = start + window_ms as i64;
            while lo < samples.len() && samples[lo].t < start {
                lo += 1;
            }
            hi = hi.max(lo);
            while hi < samples.len() && samples[hi].t < end {
                hi += 1;
            }
            let window = &values[lo..hi];
            if window.len() >= 2 {
                let value = if detrend {
                    detrended_rms(window)
                } else {
                    rms(window)?
                };
                points.push(RmsPoint {
                    t_center: start + (window_ms / 2) as i64,
                    rms: value,
                });
            }
            start += hop_ms as i64;
        }
    }
    Ok(RmsSeries {
        window_ms,
        hop_ms,
        points,
    })
}

/// Subset of {x, y, z}.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct AxisSet(u8);

impl AxisSet {
    pub const EMPTY: AxisSet = AxisSet(0);

    fn bit(axis: Axis) -> u8 {
        match axis {
            Axis::X => 1,
            Axis::Y => 2,
            Axis::Z => 4,
        }
    }

    pub fn of(axes: &[Axis]) -> Self {
        axes.iter().fold(AxisSet::EMPTY, |s, &a| s.with(a))
    }

    pub fn with(self, axis: Axis) -> Self {
        AxisSet(self.0 | Self::bit(axis))
    }

    pub fn union(self, other: AxisSet) -> Self {
        AxisSet(self.0 | other.0)
    }

    pub fn contains(self, axis: Axis) -> bool {
        self.0 & Self::bit(axis) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = Axis> {
        Axis::ALL.into_iter().filter(move |&a| self.contains(a))
    }

    /// All eight subsets, for exhaustive checks.
    pub fn all_subsets() -> impl Iterator<Item = AxisSet> {
        (0u8..8).map(AxisSet)
    }
}

impl fmt::Display for AxisSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.iter().map(|a| a.to_string()).collect();
        write!(f, "{{{}}}", names.join(","))
    }
}

impl Serialize for AxisSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for AxisSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(AxisSet::of(&Vec::<Axis>::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpikeConfig {
    /// |robust z| threshold.
    pub k: f64,
    /// Width of the centred window the median / MAD baseline is taken over.
    pub window_ms: u64,
    /// Events whose gap is at most this coalesce.
    pub merge_gap_ms: u64,
    /// Lower bound on the robust scale, m/s². A window whose MAD is zero
    /// only scores samples that differ from its median, against this floor;
    /// a floor of 0 scores all of them 0.
    pub min_scale: f64,
    /// Shortest run of consecutive over-threshold samples that counts.
    pub min_run: usize,
}

impl Default for SpikeConfig {
    fn default() -> Self {
        SpikeConfig {
            k: 3.0,
            window_ms: 5000,
            merge_gap_ms: 600,
            min_scale: 0.05,
            min_run: 2,
        }
    }
}

/// Coincident over-threshold excursions on one or more axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub t_start: i64,
    pub t_end: i64,
    pub axes: AxisSet,
    pub peak_score: BTreeMap<Axis, f64>,
}

fn median_of(buf: &mut [f64]) -> f64 {
    buf.sort_unstable_by(f64::total_cmp);
    let n = buf.len();
    if n % 2 == 1 {
        buf[n / 2]
    } else {
        (buf[n / 2 - 1] + buf[n / 2]) / 2.0
    }
}

/// Robust z-score of every value against the median / MAD of the samples
/// within `±window_ms / 2` of it.
pub fn robust_scores(times: &[i64], values: &[f64], window_ms: u64, min_scale: f64) -> Vec<f64> {
    let half = (window_ms / 2) as i64;
    let (mut lo, mut hi) = (0, 0);
    let mut buf = Vec::new();
    times
        .iter()
        .zip(values)
        .map(|(&t, &v)| {
            while times[lo] < t - half {
                lo += 1;
            }
            while hi < times.len() && times[hi] <= t + half {
                hi += 1;
            }
            buf.clear();
            buf.extend_from_slice(&values[lo..hi]);
            let med = median_of(&mut buf);
            for x in buf.iter_mut() {
                *x = (*x - med).abs();
            }
            let scale = (MAD_TO_SIGMA * median_of(&mut buf)).max(min_scale);
            let dev = v - med;
            if dev == 0.0 || scale == 0.0 {
                0.0
            } else {
                dev / scale
            }
        })
        .collect()
}

struct Excursion {
    t_start: i64,
    t_end: i64,
    axis: Axis,
    peak: f64,
}

/// Per-axis robust spikes, merged across axes into events.
pub fn detect_axis_spikes(
    samples: &[SensorSample],
    cfg: &SpikeConfig,
) -> Result<Vec<SpikeEvent>, KinematicsError> {
    if !(cfg.k > 0.0) {
        return Err(KinematicsError::InvalidParameter("k must be > 0"));
    }
    if cfg.window_ms == 0 {
        return Err(KinematicsError::InvalidParameter("window_ms must be > 0"));
    }
    let times: Vec<i64> = samples.iter().map(|s| s.t).collect();
    let mut excursions = Vec::new();
    for axis in Axis::ALL {
        let values: Vec<f64> = samples.iter().map(|s| s.accel(axis)).collect();
        let scores = robust_scores(&times, &values, cfg.window_ms, cfg.min_scale);
        let mut i = 0;
        while i < scores.len() {
            if scores[i].abs() < cfg.k {
                i += 1;
                continue;
            }
            let start = i;
            let mut peak = 0.0f64;
            while i < scores.len() && scores[i].abs() >= cfg.k {
                peak = peak.max(scores[i].abs());
                i += 1;
            }
            if i - start >= cfg.min_run.max(1) {
                excursions.push(Excursion {
                    t_start: times[start],
                    t_end: times[i - 1],
                    axis,
                    peak,
                });
            }
        }
    }
    excursions.sort_by_key(|e| (e.t_start, e.t_end, e.axis));

    let mut events: Vec<SpikeEvent> = Vec::new();
    for e in excursions {
        if let Some(cur) = events.last_mut() {
            if e.t_start <= cur.t_end + cfg.merge_gap_ms as i64 {
                cur.t_end = cur.t_end.max(e.t_end);
                cur.axes = cur.axes.with(e.axis);
                let p = cur.peak_score.entry(e.axis).or_insert(0.0);
                *p = p.max(e.peak);
                continue;
            }
        }
        events.push(SpikeEvent {
            t_start: e.t_start,
            t_end: e.t_end,
            axes: AxisSet::EMPTY.with(e.axis),
            peak_score: BTreeMap::from([(e.axis, e.peak)]),
        });
    }
    Ok(events)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Pothole,
    SteeringEvent,
    Calm,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Pothole => "Pothole",
            EventKind::SteeringEvent => "SteeringEvent",
            EventKind::Calm => "Calm",
        })
    }
}

/// Vertical participation marks a road defect; lateral / longitudinal only
/// marks a lane change or curve.
pub fn classify_axes(axes: AxisSet) -> EventKind {
    if axes.contains(Axis::Z) {
        EventKind::Pothole
    } else if axes.is_empty() {
        EventKind::Calm
    } else {
        EventKind::SteeringEvent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriveEvent {
    pub kind: EventKind,
    pub t_start: i64,
    pub t_end: i64,
    pub source: Option<SpikeEvent>,
}

/// Labels each spike and fills the gaps between consecutive spikes with
/// `Calm` intervals.
pub fn classify_events(spikes: &[SpikeEvent]) -> Vec<DriveEvent> {
    let mut out = Vec::with_capacity(spikes.len() * 2);
    for (i, s) in spikes.iter().enumerate() {
        if i > 0 {
            let prev_end = spikes[i - 1].t_end;
            if s.t_start > prev_end {
                out.push(calm(prev_end, s.t_start));
            }
        }
        out.push(DriveEvent {
            kind: classify_axes(s.axes),
            t_start: s.t_start,
            t_end: s.t_end,
            source: Some(s.clone()),
        });
    }
    out
}

/// [`classify_events`] plus leading and trailing `Calm` up to the session
/// bounds `[t0, t1]`.
pub fn classify_events_within(spikes: &[SpikeEvent], t0: i64, t1: i64) -> Vec<DriveEvent> {
    let inner = classify_events(spikes);
    let mut out = Vec::with_capacity(inner.len() + 2);
    match (spikes.first(), spikes.last()) {
        (Some(first), Some(last)) => {
            if first.t_start > t0 {
                out.push(calm(t0, first.t_start));
            }
            out.extend(inner);
            if t1 > last.t_end {
                out.push(calm(last.t_end, t1));
            }
        }
        _ if t1 >= t0 => out.push(calm(t0, t1)),
        _ => {}
    }
    out
}

fn calm(t_start: i64, t_end: i64) -> DriveEvent {
    DriveEvent {
        kind: EventKind::Calm,
        t_start,
        t_end,
        source: None,
    }
}

/// Roughness and speed over one chainage interval `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub index: usize,
    pub chainage_start_m: f64,
    pub chainage_end_m: f64,
    /// RMS of mean-removed vertical acceleration; absent below two samples.
    pub rms: Option<f64>,
    pub mean_speed_mps: Option<f64>,
    pub n_samples: usize,
    pub reference_iri: Option<f64>,
}

/// Partitions records into `[i·L, (i+1)·L)` chainage bins. Every bin
/// between the first and last record is emitted, empty ones with
/// `n_samples = 0`. A final record sitting exactly on a bin boundary closes
/// the previous bin instead of opening a new one.
pub fn segment_roughness(
    aligned: &[AlignedRecord],
    chainage: &[f64],
    segment_len_m: f64,
) -> Result<Vec<SegmentReport>, KinematicsError> {
    if !(segment_len_m > 0.0 && segment_len_m.is_finite()) {
        return Err(KinematicsError::InvalidParameter("segment_len_m must be > 0"));
    }
    if aligned.len() != chainage.len() {
        return Err(KinematicsError::InvalidParameter("one chainage per record required"));
    }
    if chainage.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(KinematicsError::InvalidParameter("chainage must be finite and >= 0"));
    }
    if chainage.windows(2).any(|w| w[1] < w[0]) {
        return Err(KinematicsError::InvalidParameter("chainage must be nondecreasing"));
    }
    let (Some(&first), Some(&last)) = (chainage.first(), chainage.last()) else {
        return Ok(Vec::new());
    };
    let first_bin = (first / segment_len_m).floor() as usize;
    let mut last_bin = (last / segment_len_m).floor() as usize;
    if last > first && last_bin > first_bin && last_bin as f64 * segment_len_m == last {
        last_bin -= 1;
    }
    let count = last_bin - first_bin + 1;
    let mut az: Vec<Vec<f64>> = vec![Vec::new(); count];
    let mut speeds: Vec<Vec<f64>> = vec![Vec::new(); count];
    for (rec, &c) in aligned.iter().zip(chainage) {
        let bin = ((c / segment_len_m).floor() as usize).min(last_bin) - first_bin;
        az[bin].push(rec.sample.az);
        if let Some(v) = rec.speed_mps {
            speeds[bin].push(v);
        }
    }
    Ok((0..count)
        .map(|k| {
            let index = first_bin + k;
            SegmentReport {
                index,
                chainage_start_m: index as f64 * segment_len_m,
                chainage_end_m: (index + 1) as f64 * segment_len_m,
                rms: (az[k].len() >= 2).then(|| detrended_rms(&az[k])),
                mean_speed_mps: (!speeds[k].is_empty())
                    .then(|| speeds[k].iter().sum::<f64>() / speeds[k].len() as f64),
                n_samples: az[k].len(),
                reference_iri: None,
            }
        })
        .collect())
}
