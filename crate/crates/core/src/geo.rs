//! Geodesy and road referencing.
//!
//! Spherical Earth, R = 6 371 km. Chainage is distance along a reference
//! polyline; snapping projects a point onto the nearest segment in a local
//! equirectangular frame centred on that segment.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::kinematics::SegmentReport;
use crate::model::GpsFix;

pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeoError {
    #[error("polyline needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polyline segment {0} has zero length")]
    DegenerateSegment(usize),
    #[error("invalid coordinate at vertex {0}")]
    InvalidCoordinate(usize),
    #[error("empty GPS trace")]
    EmptyTrace,
    #[error("GeoJSON: {0}")]
    GeoJson(String),
    #[error("reference row {row}: {reason}")]
    InvalidReference { row: usize, reason: String },
    #[error("reference records [{a_begin}, {a_end}) and [{b_begin}, {b_end}) overlap")]
    OverlappingReferences {
        a_begin: f64,
        a_end: f64,
        b_begin: f64,
        b_end: f64,
    },
    #[error("metrics: {0}")]
    Metrics(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }

    fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Point `east_m` / `north_m` away in a local tangent plane.
    pub fn offset(self, east_m: f64, north_m: f64) -> LatLon {
        let dlat = north_m / EARTH_RADIUS_M;
        let dlon = east_m / (EARTH_RADIUS_M * self.lat.to_radians().cos());
        LatLon::new(self.lat + dlat.to_degrees(), self.lon + dlon.to_degrees())
    }

    fn lerp(self, other: LatLon, f: f64) -> LatLon {
        LatLon::new(
            self.lat + f * (other.lat - self.lat),
            self.lon + f * (other.lon - self.lon),
        )
    }
}

/// Great-circle distance in meters.
pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Reference line with cumulative chainage per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    vertices: Vec<LatLon>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub fn new(vertices: Vec<LatLon>) -> Result<Self, GeoError> {
        if vertices.len() < 2 {
            return Err(GeoError::TooFewVertices(vertices.len()));
        }
        if let Some(i) = vertices.iter().position(|v| !v.is_valid()) {
            return Err(GeoError::InvalidCoordinate(i));
        }
        let mut cumulative = Vec::with_capacity(vertices.len());
        cumulative.push(0.0);
        for (i, w) in vertices.windows(2).enumerate() {
            let d = haversine(w[0], w[1]);
            if d <= 0.0 {
                return Err(GeoError::DegenerateSegment(i));
            }
            cumulative.push(cumulative[i] + d);
        }
        Ok(Polyline {
            vertices,
            cumulative,
        })
    }

    pub fn vertices(&self) -> &[LatLon] {
        &self.vertices
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn length_m(&self) -> f64 {
        *self.cumulative.last().expect("at least two vertices")
    }

    /// Point at `chainage_m`, clamped to the line.
    pub fn point_at(&self, chainage_m: f64) -> LatLon {
        let s = chainage_m.clamp(0.0, self.length_m());
        let i = self
            .cumulative
            .partition_point(|&c| c <= s)
            .clamp(1, self.vertices.len() - 1);
        let (c0, c1) = (self.cumulative[i - 1], self.cumulative[i]);
        self.vertices[i - 1].lerp(self.vertices[i], (s - c0) / (c1 - c0))
    }

    /// Accepts a LineString geometry, a Feature wrapping one, or the first
    /// LineString feature of a FeatureCollection. Coordinates are `[lon, lat]`.
    pub fn from_geojson(bytes: &[u8]) -> Result<Self, GeoError> {
        let v: Value = serde_json::from_slice(bytes).map_err(|e| GeoError::GeoJson(e.to_string()))?;
        let geometry = find_linestring(&v).ok_or_else(|| GeoError::GeoJson("no LineString found".into()))?;
        let coords = geometry["coordinates"]
            .as_array()
            .ok_or_else(|| GeoError::GeoJson("coordinates missing".into()))?;
        let vertices = coords
            .iter()
            .map(|c| match (c.get(0).and_then(Value::as_f64), c.get(1).and_then(Value::as_f64)) {
                (Some(lon), Some(lat)) => Ok(LatLon::new(lat, lon)),
                _ => Err(GeoError::GeoJson(format!("bad position {c}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Polyline::new(vertices)
    }

    pub fn to_geojson(&self) -> Value {
        json!({
            "type": "Feature",
            "properties": { "length_m": self.length_m() },
            "geometry": {
                "type": "LineString",
                "coordinates": self.vertices.iter().map(|v| [v.lon, v.lat]).collect::<Vec<_>>(),
            }
        })
    }
}

fn find_linestring(v: &Value) -> Option<&Value> {
    match v.get("type")?.as_str()? {
        "LineString" => Some(v),
        "Feature" => find_linestring(v.get("geometry")?),
        "FeatureCollection" => v.get("features")?.as_array()?.iter().find_map(find_linestring),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnapResult {
    pub chainage_m: f64,
    pub cross_track_m: f64,
    pub segment_index: usize,
    pub point: LatLon,
}

/// Nearest point on `line` to `p`. Ties go to the lower segment index.
pub fn snap_to_polyline(p: LatLon, line: &Polyline) -> SnapResult {
    let mut best: Option<SnapResult> = None;
    for (i, w) in line.vertices.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let lat0 = ((a.lat + b.lat) / 2.0).to_radians();
        let to_xy = |q: LatLon| {
            (
                EARTH_RADIUS_M * (q.lon - a.lon).to_radians() * lat0.cos(),
                EARTH_RADIUS_M * (q.lat - a.lat).to_radians(),
            )
        };
        let (bx, by) = to_xy(b);
        let (px, py) = to_xy(p);
        let len2 = bx * bx + by * by;
        let f = ((px * bx + py * by) / len2).clamp(0.0, 1.0);
        let (dx, dy) = (px - f * bx, py - f * by);
        let dist = (dx * dx + dy * dy).sqrt();
        if best.is_none_or(|b| dist < b.cross_track_m) {
            let (c0, c1) = (line.cumulative[i], line.cumulative[i + 1]);
            best = Some(SnapResult {
                chainage_m: c0 + f * (c1 - c0),
                cross_track_m: dist,
                segment_index: i,
                point: a.lerp(b, f),
            });
        }
    }
    best.expect("polyline has at least one segment")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceAccuracy {
    pub fixes: usize,
    pub mean_cross_track_m: f64,
    pub p95_cross_track_m: f64,
}

/// Mean and nearest-rank 95th percentile of cross-track error.
pub fn trace_accuracy(fixes: &[GpsFix], line: &Polyline) -> Result<TraceAccuracy, GeoError> {
    if fixes.is_empty() {
        return Err(GeoError::EmptyTrace);
    }
    let mut errors: Vec<f64> = fixes
        .iter()
        .map(|f| snap_to_polyline(LatLon::new(f.lat, f.lon), line).cross_track_m)
        .collect();
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    errors.sort_by(f64::total_cmp);
    Ok(TraceAccuracy {
        fixes: errors.len(),
        mean_cross_track_m: mean,
        p95_cross_track_m: nearest_rank(&errors, 95.0),
    })
}

/// Nearest-rank percentile of an ascending, non-empty slice.
pub fn nearest_rank(sorted: &[f64], pct: f64) -> f64 {
    let n = sorted.len();
    let rank = ((pct / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// One begin/end-log record; `iri` is in whatever unit the file declares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceIriRecord {
    pub begin_log_m: f64,
    pub end_log_m: f64,
    pub iri: f64,
}

/// Contents of a reference-IRI CSV file.
///
/// ```text
/// # units: in/mi
/// begin_log_m,end_log_m,iri
/// 0,1609.34,63.2
/// ```
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceIri {
    pub units: Option<String>,
    pub records: Vec<ReferenceIriRecord>,
}

impl ReferenceIri {
    pub fn parse_csv(text: &str) -> Result<Self, GeoError> {
        let mut units = None;
        for line in text.lines() {
            if let Some(rest) = line.trim_start().strip_prefix('#') {
                if let Some(u) = rest.trim().strip_prefix("units:") {
                    units = Some(u.trim().to_string());
                }
            }
        }
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| GeoError::InvalidReference { row: 0, reason: e.to_string() })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["begin_log_m", "end_log_m", "iri"] {
            return Err(GeoError::InvalidReference {
                row: 0,
                reason: format!("expected header begin_log_m,end_log_m,iri, got {}", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut records = Vec::new();
        for (i, row) in reader.deserialize::<ReferenceIriRecord>().enumerate() {
            let rec = row.map_err(|e| GeoError::InvalidReference { row: i + 1, reason: e.to_string() })?;
            check_reference(&rec).map_err(|reason| GeoError::InvalidReference { row: i + 1, reason })?;
            records.push(rec);
        }
        Ok(ReferenceIri { units, records })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(u) = &self.units {
            out.push_str(&format!("# units: {u}\n"));
        }
        out.push_str("begin_log_m,end_log_m,iri\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{}\n", r.begin_log_m, r.end_log_m, r.iri));
        }
        out
    }
}

fn check_reference(r: &ReferenceIriRecord) -> Result<(), String> {
    if !(r.begin_log_m.is_finite() && r.end_log_m.is_finite() && r.iri.is_finite()) {
        return Err("non-finite value".into());
    }
    if r.end_log_m <= r.begin_log_m {
        return Err("end_log_m must exceed begin_log_m".into());
    }
    if r.iri < 0.0 {
        return Err("iri must be >= 0".into());
    }
    Ok(())
}

/// Assigns each segment the length-weighted mean IRI of the reference
/// records it overlaps. Segments with no overlap keep `reference_iri: None`.
pub fn join_reference(
    segments: &[SegmentReport],
    refs: &[ReferenceIriRecord],
) -> Result<Vec<SegmentReport>, GeoError> {
    let mut sorted = refs.to_vec();
    for (i, r) in sorted.iter().enumerate() {
        check_reference(r).map_err(|reason| GeoError::InvalidReference { row: i + 1, reason })?;
    }
    sorted.sort_by(|a, b| a.begin_log_m.total_cmp(&b.begin_log_m));
    for w in sorted.windows(2) {
        if w[1].begin_log_m < w[0].end_log_m {
            return Err(GeoError::OverlappingReferences {
                a_begin: w[0].begin_log_m,
                a_end: w[0].end_log_m,
                b_begin: w[1].begin_log_m,
                b_end: w[1].end_log_m,
            });
        }
    }
    Ok(segments
        .iter()
        .map(|seg| {
            let (lo, hi) = (seg.chainage_start_m, seg.chainage_end_m);
            let first = sorted.partition_point(|r| r.end_log_m <= lo);
            let (mut weight, mut mass) = (0.0, 0.0);
            for r in sorted[first..].iter().take_while(|r| r.begin_log_m < hi) {
                let overlap = hi.min(r.end_log_m) - lo.max(r.begin_log_m);
                if overlap > 0.0 {
                    weight += overlap;
                    mass += overlap * r.iri;
                }
            }
            SegmentReport {
                reference_iri: (weight > 0.0).then(|| mass / weight),
                ..seg.clone()
            }
        })
        .collect())
}

/// Goodness of fit between reference values and predictions.
///
/// `r_squared` is the squared Pearson correlation (the R² of the linear
/// trend through the true-vs-predicted scatter), not `1 - SSres/SStot`; the
/// two differ for biased predictors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub rmse: f64,
    pub rmspe_percent: f64,
    pub r_squared: f64,
}

pub fn regression_metrics(truth: &[f64], pred: &[f64]) -> Result<FitMetrics, GeoError> {
    if truth.len() != pred.len() {
        return Err(GeoError::Metrics("truth and prediction lengths differ"));
    }
    if truth.len() < 2 {
        return Err(GeoError::Metrics("need at least two pairs"));
    }
    if truth.iter().any(|&y| y == 0.0) {
        return Err(GeoError::Metrics("rmspe undefined: zero in truth"));
    }
    let n = truth.len() as f64;
    let pairs = || truth.iter().zip(pred);
    let mse = pairs().map(|(y, p)| (y - p).powi(2)).sum::<f64>() / n;
    let mspe = pairs().map(|(y, p)| ((y - p) / y).powi(2)).sum::<f64>() / n;

    let mean_y = truth.iter().sum::<f64>() / n;
    let mean_p = pred.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (y, p) in pairs() {
        let (dy, dp) = (y - mean_y, p - mean_p);
        sxy += dy * dp;
        sxx += dy * dy;
        syy += dp * dp;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(GeoError::Metrics("r_squared undefined: zero variance"));
    }
    // Exactly 1 when pred == truth, since then sxy == sxx == syy.
    let r_squared = (sxy * sxy) / (sxx * syy);
    Ok(FitMetrics {
        rmse: mse.sqrt(),
        rmspe_percent: 100.0 * mspe.sqrt(),
        r_squared: r_squared.clamp(0.0, 1.0),
    })
}
