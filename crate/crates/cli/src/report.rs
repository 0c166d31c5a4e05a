//! Static report files for one [`AnalysisReport`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use roadsense_core::canonical;
use roadsense_core::kinematics::EventKind;
use roadsense_core::model::Axis;
use serde_json::{json, Value};

use crate::analysis::AnalysisReport;
use crate::CliError;

pub const REPORT_JSON: &str = "report.json";
pub const SEGMENTS_CSV: &str = "segments.csv";
pub const EVENTS_CSV: &str = "events.csv";
pub const TRACE_GEOJSON: &str = "trace.geojson";
pub const ACCEL_SVG: &str = "accel.svg";
pub const FIT_SVG: &str = "fit.svg";

pub const SEGMENTS_HEADER: [&str; 8] = [
    "index",
    "chainage_start_m",
    "chainage_end_m",
    "rms",
    "mean_speed_mps",
    "n_samples",
    "reference_iri",
    "predicted_iri",
];

pub const EVENTS_HEADER: [&str; 8] = ["index", "kind", "t_start", "t_end", "axes", "peak_x", "peak_y", "peak_z"];

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn csv_bytes<const N: usize>(header: [&str; N], rows: Vec<[String; N]>) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Segment rows in the `segments.csv` layout. Floats use the shortest
/// representation that parses back to the same value.
pub fn segments_csv(r: &AnalysisReport) -> Result<Vec<u8>, csv::Error> {
    let predicted: BTreeMap<usize, f64> = r
        .fit
        .iter()
        .flat_map(|f| f.pairs.iter().map(|p| (p.segment, p.predicted_iri)))
        .collect();
    let rows = r
        .segments
        .iter()
        .map(|s| {
            [
                s.index.to_string(),
                s.chainage_start_m.to_string(),
                s.chainage_end_m.to_string(),
                opt(s.rms),
                opt(s.mean_speed_mps),
                s.n_samples.to_string(),
                opt(s.reference_iri),
                opt(predicted.get(&s.index).copied()),
            ]
        })
        .collect();
    csv_bytes(SEGMENTS_HEADER, rows)
}

pub fn events_csv(r: &AnalysisReport) -> Result<Vec<u8>, csv::Error> {
    let rows = r
        .events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let axes = e
                .source
                .as_ref()
                .map(|s| s.axes.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(""))
                .unwrap_or_default();
            let peak = |axis: Axis| opt(e.source.as_ref().and_then(|s| s.peak_score.get(&axis).copied()));
            [
                i.to_string(),
                e.kind.to_string(),
                e.t_start.to_string(),
                e.t_end.to_string(),
                axes,
                peak(Axis::X),
                peak(Axis::Y),
                peak(Axis::Z),
            ]
        })
        .collect();
    csv_bytes(EVENTS_HEADER, rows)
}

/// Route, the snapped trace, and every fix with its cross-track error.
pub fn trace_geojson(r: &AnalysisReport) -> Value {
    let mut features = Vec::new();
    if let Some(route) = &r.route {
        features.push(json!({
            "type": "Feature",
            "properties": {"role": "route"},
            "geometry": {
                "type": "LineString",
                "coordinates": route.iter().map(|p| [p.lon, p.lat]).collect::<Vec<_>>(),
            },
        }));
    }
    if r.trace.len() >= 2 {
        features.push(json!({
            "type": "Feature",
            "properties": {"role": "snapped_trace"},
            "geometry": {
                "type": "LineString",
                "coordinates": r.trace.iter().map(|p| [p.snapped.lon, p.snapped.lat]).collect::<Vec<_>>(),
            },
        }));
    }
    for p in &r.trace {
        features.push(json!({
            "type": "Feature",
            "properties": {
                "role": "fix",
                "t": p.t,
                "chainage_m": p.chainage_m,
                "cross_track_m": p.cross_track_m,
                "snapped": [p.snapped.lon, p.snapped.lat],
            },
            "geometry": {"type": "Point", "coordinates": [p.fix.lon, p.fix.lat]},
        }));
    }
    json!({"type": "FeatureCollection", "features": features})
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const W: f64 = 1000.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const PANEL_H: f64 = 150.0;
const GAP: f64 = 20.0;

fn kind_class(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Pothole => "pothole",
        EventKind::SteeringEvent => "steering",
        EventKind::Calm => "calm",
    }
}

/// Three stacked panels of windowed RMS per axis over session time. Every
/// event gets one `<rect class="event …">` spanning all panels.
pub fn accel_svg(r: &AnalysisReport) -> String {
    let height = TOP + 3.0 * PANEL_H + 2.0 * GAP + 40.0;
    let (t0, t1) = (r.session.t_start as f64, r.session.t_end as f64);
    let span = if t1 > t0 { t1 - t0 } else { 1.0 };
    let plot_w = W - LEFT - RIGHT;
    let x_of = |t: f64| LEFT + (t - t0) / span * plot_w;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}">"#
    );
    s.push_str(concat!(
        "<style>.event.pothole{fill:#d62728;fill-opacity:0.25}",
        ".event.steering{fill:#1f77b4;fill-opacity:0.2}",
        ".event.calm{fill:#2ca02c;fill-opacity:0.05}",
        ".trace{fill:none;stroke:#222;stroke-width:1}",
        "text{font-family:sans-serif;font-size:12px}</style>\n"
    ));
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="18">{} windowed RMS acceleration (m/s²)</text>"#,
        escape(&r.package_id)
    );
    let full_h = 3.0 * PANEL_H + 2.0 * GAP;
    for e in &r.events {
        let x = x_of(e.t_start as f64);
        let w = (x_of(e.t_end as f64) - x).max(1.0);
        let _ = writeln!(
            s,
            r#"<rect class="event {}" x="{x:.2}" y="{TOP:.2}" width="{w:.2}" height="{full_h:.2}"/>"#,
            kind_class(e.kind)
        );
    }
    for (k, axis) in Axis::ALL.iter().enumerate() {
        let top = TOP + k as f64 * (PANEL_H + GAP);
        let _ = writeln!(
            s,
            r##"<rect class="panel" x="{LEFT}" y="{top:.2}" width="{plot_w:.2}" height="{PANEL_H:.2}" fill="none" stroke="#999"/>"##
        );
        let _ = writeln!(s, r#"<text x="8" y="{:.2}">{axis}</text>"#, top + PANEL_H / 2.0);
        let Some(series) = r.vibration.iter().find(|v| v.axis == *axis) else {
            continue;
        };
        let ymax = series.series.points.iter().map(|p| p.rms).fold(0.0, f64::max);
        let ymax = if ymax > 0.0 { ymax } else { 1.0 };
        let _ = writeln!(s, r#"<text x="8" y="{:.2}">{ymax:.3}</text>"#, top + 12.0);
        if series.series.points.len() >= 2 {
            let pts: Vec<String> = series
                .series
                .points
                .iter()
                .map(|p| format!("{:.2},{:.2}", x_of(p.t_center as f64), top + PANEL_H - p.rms / ymax * PANEL_H))
                .collect();
            let _ = writeln!(s, r#"<polyline class="trace" points="{}"/>"#, pts.join(" "));
        }
    }
    let _ = writeln!(
        s,
        r#"<text x="{LEFT}" y="{:.2}">t = {} … {} ms</text>"#,
        TOP + full_h + 25.0,
        r.session.t_start,
        r.session.t_end
    );
    s.push_str("</svg>\n");
    s
}

/// Reference against predicted IRI, one `<circle class="point">` per
/// segment, with the identity line.
pub fn fit_svg(r: &AnalysisReport) -> String {
    let size = 500.0;
    let pad = 60.0;
    let pairs = r.fit.as_ref().map(|f| f.pairs.as_slice()).unwrap_or(&[]);
    let (lo, hi) = pairs
        .iter()
        .flat_map(|p| [p.reference_iri, p.predicted_iri])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let plot = size - 2.0 * pad;
    let sx = |v: f64| pad + (v - lo) / (hi - lo) * plot;
    let sy = |v: f64| size - pad - (v - lo) / (hi - lo) * plot;
    let units = r
        .fit
        .as_ref()
        .and_then(|f| f.units.as_deref())
        .map(|u| format!(" ({})", escape(u)))
        .unwrap_or_default();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    s.push_str("<style>.point{fill:#1f77b4;fill-opacity:0.7}text{font-family:sans-serif;font-size:12px}</style>\n");
    let _ = writeln!(
        s,
        r##"<rect x="{pad}" y="{pad}" width="{plot}" height="{plot}" fill="none" stroke="#999"/>"##
    );
    let _ = writeln!(
        s,
        r##"<line class="identity" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
        sx(lo),
        sy(lo),
        sx(hi),
        sy(hi)
    );
    for p in pairs {
        let _ = writeln!(
            s,
            r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3"/>"#,
            sx(p.reference_iri),
            sy(p.predicted_iri)
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}">reference IRI{units}</text>"#, pad, size - 20.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {})">predicted IRI{units}</text>"#,
        size / 2.0,
        size / 2.0
    );
    let caption = match r.fit.as_ref().and_then(|f| f.metrics) {
        Some(m) => format!(
            "n={} RMSE={:.3} RMSPE={:.1}% r²={:.3}",
            pairs.len(),
            m.rmse,
            m.rmspe_percent,
            m.r_squared
        ),
        None => match r.fit.as_ref().and_then(|f| f.error.as_deref()) {
            Some(e) => escape(e),
            None => "no reference supplied".to_string(),
        },
    };
    let _ = writeln!(s, r#"<text x="{pad}" y="30">{caption}</text>"#);
    s.push_str("</svg>\n");
    s
}

/// Writes every report file into `out`, creating it if needed.
pub fn emit_report(r: &AnalysisReport, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let encode = |e: serde_json::Error| CliError::Io(format!("encoding report: {e}"));
    let csv_err = |e: csv::Error| CliError::Io(format!("encoding csv: {e}"));
    Ok(vec![
        write_file(out, REPORT_JSON, &canonical::to_canonical_vec(r).map_err(encode)?)?,
        write_file(out, SEGMENTS_CSV, &segments_csv(r).map_err(csv_err)?)?,
        write_file(out, EVENTS_CSV, &events_csv(r).map_err(csv_err)?)?,
        write_file(out, TRACE_GEOJSON, &canonical::to_canonical_vec(&trace_geojson(r)).map_err(encode)?)?,
        write_file(out, ACCEL_SVG, accel_svg(r).as_bytes())?,
        write_file(out, FIT_SVG, fit_svg(r).as_bytes())?,
    ])
}
