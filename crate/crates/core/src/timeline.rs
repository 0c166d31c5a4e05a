//! Time indexes over the package streams and the queries built on them:
//! nearest-timestamp lookup, inclusive range scans, GPS interpolation and
//! per-sample stream alignment.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine, LatLon};
use crate::model::{FrameRef, GpsFix, SensorSample};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimelineError {
    #[error("timestamp {found} at position {position} does not follow {previous}")]
    NotIncreasing {
        position: usize,
        previous: i64,
        found: i64,
    },
    #[error("invalid range: t0 {t0} > t1 {t1}")]
    InvalidRange { t0: i64, t1: i64 },
}

pub trait Timestamped {
    fn t(&self) -> i64;
}

impl Timestamped for SensorSample {
    fn t(&self) -> i64 {
        self.t
    }
}

impl Timestamped for GpsFix {
    fn t(&self) -> i64 {
        self.t
    }
}

impl Timestamped for FrameRef {
    fn t(&self) -> i64 {
        self.t
    }
}

impl Timestamped for i64 {
    fn t(&self) -> i64 {
        *self
    }
}

impl<T: Timestamped + ?Sized> Timestamped for &T {
    fn t(&self) -> i64 {
        (**self).t()
    }
}

/// Items of one stream sorted by strictly increasing timestamp.
#[derive(Debug, Clone)]
pub struct TimeIndex<T> {
    times: Vec<i64>,
    items: Vec<T>,
}

impl<T> Default for TimeIndex<T> {
    fn default() -> Self {
        TimeIndex {
            times: Vec::new(),
            items: Vec::new(),
        }
    }
}

impl<T: Timestamped> TimeIndex<T> {
    /// Rejects the first duplicate or out-of-order timestamp.
    pub fn build(items: Vec<T>) -> Result<Self, TimelineError> {
        let times: Vec<i64> = items.iter().map(Timestamped::t).collect();
        for (i, w) in times.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(TimelineError::NotIncreasing {
                    position: i + 1,
                    previous: w[0],
                    found: w[1],
                });
            }
        }
        Ok(TimeIndex { times, items })
    }
}

impl<T> TimeIndex<T> {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn times(&self) -> &[i64] {
        &self.times
    }

    pub fn get(&self, i: usize) -> Option<&T> {
        self.items.get(i)
    }

    /// Position of the item closest to `t`, if within `tol_ms`. Ties go to
    /// the earlier timestamp.
    pub fn nearest_position(&self, t: i64, tol_ms: u64) -> Option<usize> {
        let i = self.times.partition_point(|&x| x < t);
        let before = i.checked_sub(1).map(|j| (j, t.abs_diff(self.times[j])));
        let after = self.times.get(i).map(|&x| (i, x.abs_diff(t)));
        let best = match (before, after) {
            (Some(b), Some(a)) => {
                if a.1 < b.1 {
                    a
                } else {
                    b
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => return None,
        };
        (best.1 <= tol_ms).then_some(best.0)
    }

    pub fn nearest(&self, t: i64, tol_ms: u64) -> Option<&T> {
        self.nearest_position(t, tol_ms).map(|i| &self.items[i])
    }

    /// Items with `t0 <= t <= t1`, in time order.
    pub fn range(&self, t0: i64, t1: i64) -> Result<&[T], TimelineError> {
        if t0 > t1 {
            return Err(TimelineError::InvalidRange { t0, t1 });
        }
        let lo = self.times.partition_point(|&x| x < t0);
        let hi = self.times.partition_point(|&x| x <= t1);
        Ok(&self.items[lo..hi])
    }

    /// `(i, j)` with `times[i] <= t <= times[j]` and `j - i <= 1`, or `None`
    /// outside coverage.
    fn bracket(&self, t: i64) -> Option<(usize, usize)> {
        let first = *self.times.first()?;
        let last = *self.times.last()?;
        if t < first || t > last {
            return None;
        }
        let i = self.times.partition_point(|&x| x < t);
        if self.times[i] == t {
            Some((i, i))
        } else {
            Some((i - 1, i))
        }
    }
}

/// Linear interpolation of lat/lon between the bracketing fixes.
///
/// `None` outside `[first.t, last.t]` or when the bracketing fixes are more
/// than `max_gap_ms` apart.
pub fn interpolate_position(gps: &TimeIndex<GpsFix>, t: i64, max_gap_ms: u64) -> Option<LatLon> {
    let (i, j) = gps.bracket(t)?;
    let a = &gps.items[i];
    if i == j {
        return Some(LatLon::new(a.lat, a.lon));
    }
    let b = &gps.items[j];
    if b.t.abs_diff(a.t) > max_gap_ms {
        return None;
    }
    let f = (t - a.t) as f64 / (b.t - a.t) as f64;
    Some(LatLon::new(
        a.lat + f * (b.lat - a.lat),
        a.lon + f * (b.lon - a.lon),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    /// Nearest-frame tolerance; half a 10 fps frame period by default.
    pub frame_tol_ms: u64,
    /// Bracketing fixes further apart than this are a dropout.
    pub gps_max_gap_ms: u64,
    /// Half-width of the central difference used when GPS carries no speed.
    pub speed_fd_half_ms: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            frame_tol_ms: 50,
            gps_max_gap_ms: 5000,
            speed_fd_half_ms: 500,
        }
    }
}

/// Speed at `t`: interpolated from the GPS speed field where both bracketing
/// fixes carry one, otherwise a finite difference of interpolated positions.
pub fn speed_at(gps: &TimeIndex<GpsFix>, t: i64, cfg: &AlignConfig) -> Option<f64> {
    let (i, j) = gps.bracket(t)?;
    let (a, b) = (&gps.items[i], &gps.items[j]);
    if b.t.abs_diff(a.t) > cfg.gps_max_gap_ms {
        return None;
    }
    if let (Some(sa), Some(sb)) = (a.speed_mps, b.speed_mps) {
        if i == j {
            return Some(sa);
        }
        let f = (t - a.t) as f64 / (b.t - a.t) as f64;
        return Some(sa + f * (sb - sa));
    }
    let h = cfg.speed_fd_half_ms as i64;
    let here = interpolate_position(gps, t, cfg.gps_max_gap_ms);
    let before = interpolate_position(gps, t - h, cfg.gps_max_gap_ms);
    let after = interpolate_position(gps, t + h, cfg.gps_max_gap_ms);
    let (p, q, dt_ms) = match (before, here, after) {
        (Some(p), _, Some(q)) => (p, q, 2 * h),
        (None, Some(p), Some(q)) => (p, q, h),
        (Some(p), Some(q), None) => (p, q, h),
        _ => return None,
    };
    (dt_ms > 0).then(|| haversine(p, q) / (dt_ms as f64 / 1000.0))
}

/// One IMU sample fused with the GPS and frame streams.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedRecord {
    pub t: i64,
    pub sample: SensorSample,
    pub position: Option<LatLon>,
    pub speed_mps: Option<f64>,
    pub frame: Option<FrameRef>,
}

/// One record per IMU sample, always.
pub fn align_streams(
    samples: &TimeIndex<SensorSample>,
    gps: &TimeIndex<GpsFix>,
    frames: &TimeIndex<FrameRef>,
    cfg: &AlignConfig,
) -> Vec<AlignedRecord> {
    samples
        .items()
        .iter()
        .map(|s| AlignedRecord {
            t: s.t,
            sample: *s,
            position: interpolate_position(gps, s.t, cfg.gps_max_gap_ms),
            speed_mps: speed_at(gps, s.t, cfg),
            frame: frames.nearest(s.t, cfg.frame_tol_ms).cloned(),
        })
        .collect()
}
