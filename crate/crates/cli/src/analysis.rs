//! The package analysis pipeline.
//!
//! align → spikes → classify → chainage (route) → segment roughness →
//! reference join (reference) → fit metrics. Every step is a pure function
//! of the package streams and the config, so one input always yields one
//! report.

use std::path::Path;

use roadsense_core::geo::{
    self, FitMetrics, LatLon, Polyline, ReferenceIri, TraceAccuracy,
};
use roadsense_core::kinematics::{self, DriveEvent, EventKind, RmsSeries, SegmentReport};
use roadsense_core::model::{self, Axis, PackageStreams, MANIFEST_FILE};
use roadsense_core::timeline::{self, AlignedRecord, TimeIndex};
use serde::Serialize;

use crate::config::AnalysisConfig;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SessionSummary {
    pub t_start: i64,
    pub t_end: i64,
    pub samples: usize,
    pub gps_fixes: usize,
    pub frames: usize,
    /// Samples with an interpolated position, i.e. with a chainage when a
    /// route is supplied.
    pub positioned_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EventCounts {
    pub pothole: usize,
    pub steering_event: usize,
    pub calm: usize,
}

/// One GPS fix against the route.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TracePoint {
    pub t: i64,
    pub fix: LatLon,
    pub snapped: LatLon,
    pub chainage_m: f64,
    pub cross_track_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisSeries {
    pub axis: Axis,
    pub series: RmsSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitPair {
    pub segment: usize,
    pub rms: f64,
    pub reference_iri: f64,
    pub predicted_iri: f64,
}

/// Reference IRI regressed on segment RMS by ordinary least squares,
/// `iri ≈ intercept + slope · rms`, and scored in-sample.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fit {
    pub units: Option<String>,
    pub intercept: Option<f64>,
    pub slope: Option<f64>,
    pub pairs: Vec<FitPair>,
    pub metrics: Option<FitMetrics>,
    /// Why `metrics` is absent.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub package_id: String,
    pub config: AnalysisConfig,
    pub session: SessionSummary,
    pub event_counts: EventCounts,
    pub events: Vec<DriveEvent>,
    /// Empty without a route.
    pub segments: Vec<SegmentReport>,
    pub gps_accuracy: Option<TraceAccuracy>,
    pub trace: Vec<TracePoint>,
    pub route: Option<Vec<LatLon>>,
    /// Windowed RMS of each acceleration axis.
    pub vibration: Vec<AxisSeries>,
    pub fit: Option<Fit>,
}

pub fn load_route(path: &Path) -> Result<Polyline, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Polyline::from_geojson(&bytes).map_err(|e| CliError::Argument(format!("{}: {e}", path.display())))
}

pub fn load_reference(path: &Path) -> Result<ReferenceIri, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    ReferenceIri::parse_csv(&text).map_err(|e| CliError::Argument(format!("{}: {e}", path.display())))
}

/// Validates the package at `dir`, then analyzes it.
pub fn analyze(
    dir: &Path,
    route: Option<&Polyline>,
    reference: Option<&ReferenceIri>,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, CliError> {
    if reference.is_some() && route.is_none() {
        return Err(CliError::Argument("a reference file needs a route: joining is by chainage".into()));
    }
    let report = model::validate_package(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    if !report.valid {
        return Err(CliError::Validation(format!(
            "{}: {}",
            dir.display(),
            report.problems().join("; ")
        )));
    }
    let manifest = std::fs::read(dir.join(MANIFEST_FILE))
        .map_err(|e| CliError::Io(e.to_string()))
        .and_then(|b| model::parse_manifest(&b).map_err(|e| CliError::Validation(e.to_string())))?;
    let streams = PackageStreams::load(dir).map_err(|e| CliError::Validation(e.to_string()))?;
    analyze_streams(&manifest.package_id, &streams, route, reference, cfg)
}

/// Chainage of every positioned record, forced nondecreasing with a running
/// maximum so GPS jitter cannot move the vehicle backwards. Records without
/// a position are dropped.
pub fn chainage_along(records: &[AlignedRecord], route: &Polyline) -> (Vec<AlignedRecord>, Vec<f64>) {
    let mut kept = Vec::with_capacity(records.len());
    let mut chainage = Vec::with_capacity(records.len());
    let mut high = f64::NEG_INFINITY;
    for r in records {
        let Some(p) = r.position else { continue };
        high = high.max(geo::snap_to_polyline(p, route).chainage_m);
        kept.push(r.clone());
        chainage.push(high);
    }
    (kept, chainage)
}

/// Least-squares line through `(x, y)`; `None` when `x` is constant or
/// fewer than two points are given.
pub fn ols(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mx, slope))
}

fn fit_reference(segments: &[SegmentReport], units: Option<String>) -> Fit {
    let observed: Vec<(usize, f64, f64)> = segments
        .iter()
        .filter_map(|s| Some((s.index, s.rms?, s.reference_iri?)))
        .collect();
    let x: Vec<f64> = observed.iter().map(|o| o.1).collect();
    let y: Vec<f64> = observed.iter().map(|o| o.2).collect();
    let Some((intercept, slope)) = ols(&x, &y) else {
        return Fit {
            units,
            intercept: None,
            slope: None,
            pairs: Vec::new(),
            metrics: None,
            error: Some(format!(
                "need at least two segments with both RMS and reference IRI and varying RMS, have {}",
                observed.len()
            )),
        };
    };
    let pairs: Vec<FitPair> = observed
        .iter()
        .map(|&(segment, rms, reference_iri)| FitPair {
            segment,
            rms,
            reference_iri,
            predicted_iri: intercept + slope * rms,
        })
        .collect();
    let pred: Vec<f64> = pairs.iter().map(|p| p.predicted_iri).collect();
    let (metrics, error) = match geo::regression_metrics(&y, &pred) {
        Ok(m) => (Some(m), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Fit {
        units,
        intercept: Some(intercept),
        slope: Some(slope),
        pairs,
        metrics,
        error,
    }
}

pub fn analyze_streams(
    package_id: &str,
    streams: &PackageStreams,
    route: Option<&Polyline>,
    reference: Option<&ReferenceIri>,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, CliError> {
    if reference.is_some() && route.is_none() {
        return Err(CliError::Argument("a reference file needs a route: joining is by chainage".into()));
    }
    let invalid = |e: timeline::TimelineError| CliError::Validation(e.to_string());
    let samples = TimeIndex::build(streams.samples.clone()).map_err(invalid)?;
    let gps = TimeIndex::build(streams.gps.clone()).map_err(invalid)?;
    let frames = TimeIndex::build(streams.frames.clone()).map_err(invalid)?;
    let aligned = timeline::align_streams(&samples, &gps, &frames, &cfg.align);
    let argument = |e: kinematics::KinematicsError| CliError::Argument(e.to_string());

    let spikes = kinematics::detect_axis_spikes(samples.items(), &cfg.spikes).map_err(argument)?;
    let (t_start, t_end) = match (samples.items().first(), samples.items().last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => (0, 0),
    };
    let events = if samples.is_empty() {
        Vec::new()
    } else {
        kinematics::classify_events_within(&spikes, t_start, t_end)
    };
    let mut counts = EventCounts::default();
    for e in &events {
        match e.kind {
            EventKind::Pothole => counts.pothole += 1,
            EventKind::SteeringEvent => counts.steering_event += 1,
            EventKind::Calm => counts.calm += 1,
        }
    }

    let vibration = Axis::ALL
        .iter()
        .map(|&axis| {
            kinematics::sliding_rms(samples.items(), axis, cfg.rms.window_ms, cfg.rms.hop_ms, cfg.rms.detrend)
                .map(|series| AxisSeries { axis, series })
                .map_err(argument)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let positioned_samples = aligned.iter().filter(|r| r.position.is_some()).count();
    let mut segments = Vec::new();
    let mut trace = Vec::new();
    let mut gps_accuracy = None;
    let mut fit = None;
    if let Some(route) = route {
        let (kept, chainage) = chainage_along(&aligned, route);
        segments = kinematics::segment_roughness(&kept, &chainage, cfg.segment_len_m).map_err(argument)?;
        trace = gps
            .items()
            .iter()
            .map(|f| {
                let fix = LatLon::new(f.lat, f.lon);
                let s = geo::snap_to_polyline(fix, route);
                TracePoint {
                    t: f.t,
                    fix,
                    snapped: s.point,
                    chainage_m: s.chainage_m,
                    cross_track_m: s.cross_track_m,
                }
            })
            .collect();
        if !gps.is_empty() {
            gps_accuracy = Some(geo::trace_accuracy(gps.items(), route).map_err(|e| CliError::Argument(e.to_string()))?);
        }
        if let Some(reference) = reference {
            segments = geo::join_reference(&segments, &reference.records)
                .map_err(|e| CliError::Validation(format!("reference: {e}")))?;
            fit = Some(fit_reference(&segments, reference.units.clone()));
        }
    }

    Ok(AnalysisReport {
        package_id: package_id.to_string(),
        config: *cfg,
        session: SessionSummary {
            t_start,
            t_end,
            samples: samples.len(),
            gps_fixes: gps.len(),
            frames: frames.len(),
            positioned_samples,
        },
        event_counts: counts,
        events,
        segments,
        gps_accuracy,
        trace,
        route: route.map(|r| r.vertices().to_vec()),
        vibration,
        fit,
    })
}
