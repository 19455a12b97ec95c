//! File formats, dataset ingestion and experiment orchestration: map JSON,
//! survey and geographic CSVs, placement/report/trace/comparison CSVs, the
//! run manifest, and the `run_experiment` / `compare_methods` drivers the
//! CLI wraps.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{place_baseline, BaselineConfig, BaselineKind, EvalContext};
use crate::evaluation::{
    error_on_distribution, evaluate_error, DisplacementErrorModel, DisplacementFitOptions,
    ErrorReport, EvalError, Objective, Placement,
};
use crate::geometry::{sample_map, BoundaryPolicy, GeometryError, Map, Point, Wall};
use crate::localizers::LocalizerConfig;
use crate::optimizer::{
    place_beacons, Budget, OptimizerError, PlaceConfig, SearchOptions, SearchTrace,
};
use crate::signal::{fit_signal_model, SignalError, SignalModel, SignalSample, SurveyCollection};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error("{path} is empty")]
    EmptyFile { path: PathBuf },
    #[error("{path}: invalid JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("geographic extent is degenerate (all points coincident)")]
    DegenerateExtent,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

// --------------------------------------------------------------------------
// map JSON
// --------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WallFile {
    a: [f64; 2],
    b: [f64; 2],
    attenuation_db: f64,
}

#[derive(Serialize, Deserialize)]
struct MapFile {
    boundary: Vec<[f64; 2]>,
    #[serde(default)]
    walls: Vec<WallFile>,
    boundary_policy: BoundaryPolicy,
}

pub fn load_map(path: &Path) -> Result<Map, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.into(), source })?;
    let file: MapFile = serde_json::from_str(&text)
        .map_err(|source| IoError::Json { path: path.into(), source })?;
    let boundary = file.boundary.iter().map(|&[x, y]| Point::new(x, y)).collect();
    let walls = file
        .walls
        .iter()
        .map(|w| Wall {
            a: Point::new(w.a[0], w.a[1]),
            b: Point::new(w.b[0], w.b[1]),
            attenuation_db: w.attenuation_db,
        })
        .collect();
    Ok(Map::new(boundary, walls, file.boundary_policy)?)
}

pub fn save_map(map: &Map, path: &Path) -> Result<(), IoError> {
    let file = MapFile {
        boundary: map.boundary().iter().map(|p| [p.x, p.y]).collect(),
        walls: map
            .walls()
            .iter()
            .map(|w| WallFile {
                a: [w.a.x, w.a.y],
                b: [w.b.x, w.b.y],
                attenuation_db: w.attenuation_db,
            })
            .collect(),
        boundary_policy: map.policy(),
    };
    write_text(path, &(serde_json::to_string_pretty(&file).expect("map serializes") + "\n"))
}

// --------------------------------------------------------------------------
// survey CSV: x,y,beacon_x,beacon_y,rss_dbm,walls
// --------------------------------------------------------------------------

/// Parse a survey CSV. Malformed rows are reported with their line number
/// and the whole ingest is rejected (no partial data).
pub fn ingest_survey(path: &Path) -> Result<Vec<SignalSample>, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.into(), source })?;
    if text.trim().is_empty() {
        return Err(IoError::EmptyFile { path: path.into() });
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let expected = ["x", "y", "beacon_x", "beacon_y", "rss_dbm", "walls"];
    let headers = reader
        .headers()
        .map_err(|e| IoError::Parse { path: path.into(), line: 1, message: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(IoError::Parse {
            path: path.into(),
            line: 1,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record.map_err(|e| IoError::Parse {
            path: path.into(),
            line,
            message: e.to_string(),
        })?;
        let bad = |message: String| IoError::Parse { path: path.into(), line, message };
        if record.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", record.len())));
        }
        let num = |idx: usize, name: &str| -> Result<f64, IoError> {
            record[idx]
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("{name}: {e}")))
        };
        let sample = SignalSample {
            location: Point::new(num(0, "x")?, num(1, "y")?),
            beacon_location: Point::new(num(2, "beacon_x")?, num(3, "beacon_y")?),
            rss_dbm: num(4, "rss_dbm")?,
            walls_crossed: record[5]
                .trim()
                .parse::<u32>()
                .map_err(|e| bad(format!("walls: {e}")))?,
        };
        if !sample.location.is_finite() || !sample.beacon_location.is_finite() {
            return Err(bad("coordinates must be finite".into()));
        }
        if !(-120.0..=0.0).contains(&sample.rss_dbm) {
            return Err(bad(format!("rss_dbm {} outside [-120, 0]", sample.rss_dbm)));
        }
        samples.push(sample);
    }
    if samples.is_empty() {
        return Err(IoError::EmptyFile { path: path.into() });
    }
    Ok(samples)
}

pub fn write_survey(samples: &[SignalSample], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("x,y,beacon_x,beacon_y,rss_dbm,walls\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.location.x,
            s.location.y,
            s.beacon_location.x,
            s.beacon_location.y,
            s.rss_dbm,
            s.walls_crossed
        ));
    }
    write_text(path, &out)
}

// --------------------------------------------------------------------------
// geographic CSV: lat,lon,ap_id,rss_dbm
// --------------------------------------------------------------------------

/// Equirectangular local projection about a fixed origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoProjection {
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
    pub meters_per_deg_lat: f64,
    pub meters_per_deg_lon: f64,
}

pub const METERS_PER_DEG_LAT: f64 = 111_320.0;

impl GeoProjection {
    pub fn about(origin_lat_deg: f64, origin_lon_deg: f64) -> Self {
        Self {
            origin_lat_deg,
            origin_lon_deg,
            meters_per_deg_lat: METERS_PER_DEG_LAT,
            meters_per_deg_lon: METERS_PER_DEG_LAT * origin_lat_deg.to_radians().cos(),
        }
    }

    pub fn project(&self, lat_deg: f64, lon_deg: f64) -> Point {
        Point::new(
            (lon_deg - self.origin_lon_deg) * self.meters_per_deg_lon,
            (lat_deg - self.origin_lat_deg) * self.meters_per_deg_lat,
        )
    }
}

/// Planar view of a geographic signal dataset: candidate placement points,
/// per-access-point observations as survey samples, and the estimated (or
/// supplied) access point positions.
#[derive(Debug, Clone)]
pub struct GeoIngest {
    pub projection: GeoProjection,
    pub candidates: Vec<Point>,
    pub observations: Vec<SignalSample>,
    pub ap_positions: Vec<(String, Point)>,
}

/// Ingest a lat,lon,ap_id,rss_dbm CSV. Locations are projected to local
/// planar meters about the dataset centroid (or the given projection);
/// sampled locations become candidate placement points; access point
/// positions default to the linear-power weighted centroid of their
/// observations unless supplied explicitly.
pub fn ingest_geo(
    path: &Path,
    projection: Option<GeoProjection>,
    ap_positions: Option<&[(String, f64, f64)]>,
) -> Result<GeoIngest, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.into(), source })?;
    if text.trim().is_empty() {
        return Err(IoError::EmptyFile { path: path.into() });
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IoError::Parse { path: path.into(), line: 1, message: e.to_string() })?;
    if headers.iter().collect::<Vec<_>>() != ["lat", "lon", "ap_id", "rss_dbm"] {
        return Err(IoError::Parse {
            path: path.into(),
            line: 1,
            message: "expected header lat,lon,ap_id,rss_dbm".into(),
        });
    }
    let mut rows: Vec<(f64, f64, String, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record
            .map_err(|e| IoError::Parse { path: path.into(), line, message: e.to_string() })?;
        let bad = |message: String| IoError::Parse { path: path.into(), line, message };
        if record.len() != 4 {
            return Err(bad(format!("expected 4 fields, got {}", record.len())));
        }
        let lat: f64 = record[0].trim().parse().map_err(|e| bad(format!("lat: {e}")))?;
        let lon: f64 = record[1].trim().parse().map_err(|e| bad(format!("lon: {e}")))?;
        let rss: f64 = record[3].trim().parse().map_err(|e| bad(format!("rss_dbm: {e}")))?;
        if !(-120.0..=0.0).contains(&rss) {
            return Err(bad(format!("rss_dbm {rss} outside [-120, 0]")));
        }
        rows.push((lat, lon, record[2].trim().to_string(), rss));
    }
    if rows.is_empty() {
        return Err(IoError::EmptyFile { path: path.into() });
    }

    let projection = projection.unwrap_or_else(|| {
        let lat0 = rows.iter().map(|r| r.0).sum::<f64>() / rows.len() as f64;
        let lon0 = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
        GeoProjection::about(lat0, lon0)
    });

    let points: Vec<Point> = rows.iter().map(|r| projection.project(r.0, r.1)).collect();
    let extent = points
        .iter()
        .map(|p| p.distance(&points[0]))
        .fold(0.0, f64::max);
    if rows.len() > 1 && extent < 1e-9 {
        return Err(IoError::DegenerateExtent);
    }

    // candidate placement points: unique sampled locations in row order
    let mut candidates: Vec<Point> = Vec::new();
    for p in &points {
        if !candidates.iter().any(|q| q.distance(p) < 1e-9) {
            candidates.push(*p);
        }
    }

    // access point positions: supplied, else rss-weighted centroid
    let mut ap_ids: Vec<String> = Vec::new();
    for r in &rows {
        if !ap_ids.contains(&r.2) {
            ap_ids.push(r.2.clone());
        }
    }
    let ap_positions: Vec<(String, Point)> = match ap_positions {
        Some(list) => list
            .iter()
            .map(|(id, lat, lon)| (id.clone(), projection.project(*lat, *lon)))
            .collect(),
        None => ap_ids
            .iter()
            .map(|id| {
                let mut wx = 0.0;
                let mut wy = 0.0;
                let mut wsum = 0.0;
                for (row, p) in rows.iter().zip(&points) {
                    if &row.2 == id {
                        let w = 10f64.powf(row.3 / 10.0); // linear power weight
                        wx += w * p.x;
                        wy += w * p.y;
                        wsum += w;
                    }
                }
                (id.clone(), Point::new(wx / wsum, wy / wsum))
            })
            .collect(),
    };

    let observations: Vec<SignalSample> = rows
        .iter()
        .zip(&points)
        .map(|(row, p)| {
            let ap = ap_positions
                .iter()
                .find(|(id, _)| id == &row.2)
                .map(|(_, pos)| *pos)
                .unwrap_or(*p);
            SignalSample { location: *p, beacon_location: ap, rss_dbm: row.3, walls_crossed: 0 }
        })
        .collect();

    Ok(GeoIngest { projection, candidates, observations, ap_positions })
}

/// Optional ap_id,lat,lon override file for ground-truth positions.
pub fn load_ap_positions(path: &Path) -> Result<Vec<(String, f64, f64)>, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record
            .map_err(|e| IoError::Parse { path: path.into(), line, message: e.to_string() })?;
        let bad = |message: String| IoError::Parse { path: path.into(), line, message };
        let lat: f64 = record[1].trim().parse().map_err(|e| bad(format!("lat: {e}")))?;
        let lon: f64 = record[2].trim().parse().map_err(|e| bad(format!("lon: {e}")))?;
        out.push((record[0].trim().to_string(), lat, lon));
    }
    Ok(out)
}

// --------------------------------------------------------------------------
// placement / report / trace / comparison CSVs
// --------------------------------------------------------------------------

pub fn write_placement(placement: &Placement, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("beacon_id,x,y\n");
    for (i, p) in placement.locations.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", p.x, p.y));
    }
    write_text(path, &out)
}

pub fn read_placement(path: &Path) -> Result<Placement, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let mut locations = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record
            .map_err(|e| IoError::Parse { path: path.into(), line, message: e.to_string() })?;
        let bad = |message: String| IoError::Parse { path: path.into(), line, message };
        let x: f64 = record[1].trim().parse().map_err(|e| bad(format!("x: {e}")))?;
        let y: f64 = record[2].trim().parse().map_err(|e| bad(format!("y: {e}")))?;
        locations.push(Point::new(x, y));
    }
    if locations.is_empty() {
        return Err(IoError::EmptyFile { path: path.into() });
    }
    Ok(Placement::new(locations))
}

pub fn write_report(placement_id: &str, report: &ErrorReport, path: &Path) -> Result<(), IoError> {
    let mut out = String::from("placement_id,ari_m,geo_m,med_m,abn_frac,elapsed_s\n");
    out.push_str(&format!(
        "{placement_id},{},{},{},{},{}\n",
        report.ari_m, report.geo_m, report.med_m, report.abn_frac, report.elapsed_s
    ));
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub placement_id: String,
    pub ari_m: f64,
    pub geo_m: f64,
    pub med_m: f64,
    pub abn_frac: f64,
    pub elapsed_s: f64,
}

pub fn read_report(path: &Path) -> Result<ReportRow, IoError> {
    let text = fs::read_to_string(path)
        .map_err(|source| IoError::Read { path: path.into(), source })?;
    let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let record = reader
        .records()
        .next()
        .ok_or(IoError::EmptyFile { path: path.into() })?
        .map_err(|e| IoError::Parse { path: path.into(), line: 2, message: e.to_string() })?;
    let bad = |message: String| IoError::Parse { path: path.into(), line: 2, message };
    let num = |idx: usize| -> Result<f64, IoError> {
        record[idx].trim().parse::<f64>().map_err(|e| bad(e.to_string()))
    };
    Ok(ReportRow {
        placement_id: record[0].to_string(),
        ari_m: num(1)?,
        geo_m: num(2)?,
        med_m: num(3)?,
        abn_frac: num(4)?,
        elapsed_s: num(5)?,
    })
}

/// Optional per-point error dump next to a report.
pub fn write_per_point(points: &[Point], errors: &[f64], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("point_x,point_y,error_m\n");
    for (p, e) in points.iter().zip(errors) {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, e));
    }
    write_text(path, &out)
}

pub fn write_trace(trace: &SearchTrace, path: &Path) -> Result<(), IoError> {
    let mut out =
        String::from("intl_m,evaluated,memo_hits,skipped,surrogate_pruned,best_ari_m,elapsed_s\n");
    for l in &trace.levels {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            l.intl_m, l.evaluated, l.memo_hits, l.skipped, l.surrogate_pruned,
            l.best_objective_m, l.elapsed_s
        ));
    }
    write_text(path, &out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: Method,
    pub report: Option<ReportRow>,
}

pub fn write_comparison(rows: &[ComparisonRow], path: &Path) -> Result<(), IoError> {
    let mut out = String::from("method,ari_m,geo_m,med_m,abn_frac\n");
    for row in rows {
        match &row.report {
            Some(r) => out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.method, r.ari_m, r.geo_m, r.med_m, r.abn_frac
            )),
            None => out.push_str(&format!("{},nan,nan,nan,nan\n", row.method)),
        }
    }
    write_text(path, &out)
}

fn write_text(path: &Path, content: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| IoError::Write { path: path.into(), source })?;
    }
    let mut f =
        fs::File::create(path).map_err(|source| IoError::Write { path: path.into(), source })?;
    f.write_all(content.as_bytes())
        .map_err(|source| IoError::Write { path: path.into(), source })
}

// --------------------------------------------------------------------------
// experiment configuration, manifest and drivers
// --------------------------------------------------------------------------

/// Placement method selector: the four references plus the budgeted search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Random,
    Rkc,
    Uniform,
    Ceracc,
    Bnp,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Method::Random => "random",
            Method::Rkc => "rkc",
            Method::Uniform => "uniform",
            Method::Ceracc => "ceracc",
            Method::Bnp => "bnp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Method::Random),
            "rkc" => Ok(Method::Rkc),
            "uniform" => Ok(Method::Uniform),
            "ceracc" => Ok(Method::Ceracc),
            "bnp" => Ok(Method::Bnp),
            other => {
                Err(format!("unknown method '{other}' (want random|rkc|uniform|ceracc|bnp)"))
            }
        }
    }
}

/// Synthetic signal model parameters used when no survey is supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p0_dbm: f64,
    pub eta: f64,
    pub d0_m: f64,
    pub noise_sigma_db: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { p0_dbm: -40.0, eta: 3.0, d0_m: 1.0, noise_sigma_db: 0.0 }
    }
}

fn default_restarts() -> usize {
    3
}
fn default_k_cover() -> usize {
    1
}
fn default_intl0() -> f64 {
    4.0
}
fn default_t_acc() -> f64 {
    20.0
}
fn default_delta_e() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    0.5
}
fn default_n_beacons() -> usize {
    6
}
fn default_objective() -> Objective {
    Objective::Ari
}

/// Everything a run needs; the JSON config file mirrors this and CLI flags
/// override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub map_path: PathBuf,
    pub method: Method,
    pub algorithm: LocalizerConfig,
    #[serde(default = "default_n_beacons")]
    pub n_beacons: usize,
    #[serde(default = "default_t_acc")]
    pub t_acc_s: f64,
    #[serde(default = "default_delta_e")]
    pub delta_e_acc_m: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_intl0")]
    pub intl0_m: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_objective")]
    pub objective: Objective,
    pub output_dir: PathBuf,
    /// 0 lets the worker pool pick the core count.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub eval_interval_m: Option<f64>,
    #[serde(default)]
    pub survey_path: Option<PathBuf>,
    #[serde(default)]
    pub model_path: Option<PathBuf>,
    #[serde(default)]
    pub g_path: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelParams>,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_k_cover")]
    pub k_cover: usize,
    #[serde(default)]
    pub coverage_radius_m: Option<f64>,
    #[serde(default)]
    pub search: SearchOptions,
    #[serde(default)]
    pub per_point_dump: bool,
}

impl ExperimentConfig {
    pub fn new(map_path: PathBuf, method: Method, output_dir: PathBuf) -> Self {
        Self {
            map_path,
            method,
            algorithm: LocalizerConfig::lateration(),
            n_beacons: default_n_beacons(),
            t_acc_s: default_t_acc(),
            delta_e_acc_m: default_delta_e(),
            alpha: default_alpha(),
            intl0_m: default_intl0(),
            seed: 0,
            objective: Objective::Ari,
            output_dir,
            threads: 0,
            eval_interval_m: None,
            survey_path: None,
            model_path: None,
            g_path: None,
            model: None,
            restarts: default_restarts(),
            k_cover: default_k_cover(),
            coverage_radius_m: None,
            search: SearchOptions::default(),
            per_point_dump: false,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path)
            .map_err(|source| IoError::Read { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })
    }
}

/// Resolved quantities a rerun must pin to reproduce the outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResolvedValues {
    pub delta_p_acc_m: Option<f64>,
    pub t_eval_s: Option<f64>,
    pub area_scale: Option<f64>,
    pub eval_interval_m: f64,
    pub n_in_area: Option<usize>,
}

/// The machine-readable record of one run: software version, the
/// configuration as given, the configuration with every resolved value
/// baked in, and wall times. A rerun from `pinned_config` reproduces the
/// data outputs byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub pinned_config: ExperimentConfig,
    pub resolved: ResolvedValues,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn from_json_file(path: &Path) -> Result<Self, IoError> {
        let text = fs::read_to_string(path)
            .map_err(|source| IoError::Read { path: path.into(), source })?;
        serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.into(), source })
    }
}

/// What `run_experiment` produced and where it wrote it.
#[derive(Debug)]
pub struct RunArtifacts {
    pub placement: Placement,
    pub report: ErrorReport,
    pub trace: Option<SearchTrace>,
    pub manifest: RunManifest,
    pub placement_path: PathBuf,
    pub report_path: PathBuf,
    pub trace_path: Option<PathBuf>,
    pub manifest_path: PathBuf,
}

fn resolve_model(config: &ExperimentConfig) -> Result<(SignalModel, SurveyCollection), IoError> {
    if let Some(path) = &config.model_path {
        let text = fs::read_to_string(path)
            .map_err(|source| IoError::Read { path: path.clone(), source })?;
        let model: SignalModel = serde_json::from_str(&text)
            .map_err(|source| IoError::Json { path: path.clone(), source })?;
        let coll = match &config.survey_path {
            Some(sp) => SurveyCollection::from_samples(ingest_survey(sp)?),
            None => SurveyCollection::empty(),
        };
        return Ok((model, coll));
    }
    if let Some(path) = &config.survey_path {
        let samples = ingest_survey(path)?;
        let (coll, model) = fit_signal_model(&samples)?;
        return Ok((model, coll));
    }
    let p = config.model.unwrap_or_default();
    Ok((
        SignalModel::synthetic(p.p0_dbm, p.eta, p.d0_m, p.noise_sigma_db),
        SurveyCollection::empty(),
    ))
}

fn load_g(config: &ExperimentConfig) -> Result<Option<DisplacementErrorModel>, IoError> {
    match &config.g_path {
        None => Ok(None),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|source| IoError::Read { path: path.clone(), source })?;
            let g = serde_json::from_str(&text)
                .map_err(|source| IoError::Json { path: path.clone(), source })?;
            Ok(Some(g))
        }
    }
}

fn eval_interval_for(config: &ExperimentConfig, map: &Map) -> f64 {
    config.eval_interval_m.unwrap_or_else(|| (map.area().sqrt() / 15.0).max(0.5))
}

/// Run one placement experiment end to end: load the environment, place by
/// the chosen method, score the result on the full map, and write the
/// placement CSV, report CSV, trace CSV (search runs only) and the manifest
/// into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunArtifacts, IoError> {
    let started = Instant::now();
    if config.n_beacons == 0 {
        return Err(IoError::InvalidConfig("n_beacons must be at least 1".into()));
    }
    let map = load_map(&config.map_path)?;
    let (model, coll) = resolve_model(config)?;
    let g = load_g(config)?;
    let eval_interval = eval_interval_for(config, &map);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| IoError::InvalidConfig(format!("worker pool: {e}")))?;

    let (placement, report, trace) = pool.install(|| -> Result<_, IoError> {
        match config.method {
            Method::Bnp => {
                let mut options = config.search.clone();
                options.g = g.clone();
                options.eval_interval_m = Some(eval_interval);
                let place_config = PlaceConfig {
                    n_beacons: config.n_beacons,
                    localizer: config.algorithm,
                    budget: Budget {
                        t_acc_s: config.t_acc_s,
                        delta_e_acc_m: config.delta_e_acc_m,
                        alpha: config.alpha,
                    },
                    intl0_m: config.intl0_m,
                    seed: config.seed,
                    objective: config.objective,
                    options,
                };
                let out = place_beacons(&map, &model, &coll, &place_config)?;
                Ok((out.placement, out.report, Some(out.trace)))
            }
            method => {
                let grid = sample_map(&map, eval_interval)?;
                let ctx = EvalContext {
                    map: &map,
                    localizer: &config.algorithm,
                    model: &model,
                    coll: &coll,
                    grid: &grid,
                    objective: config.objective,
                    seed: config.seed,
                };
                let kind = match method {
                    Method::Random => BaselineKind::Random,
                    Method::Rkc => BaselineKind::Rkc,
                    Method::Uniform => BaselineKind::Uniform,
                    Method::Ceracc => BaselineKind::Ceracc,
                    Method::Bnp => unreachable!(),
                };
                let baseline = BaselineConfig {
                    kind,
                    restarts: config.restarts,
                    coverage_radius_m: config.coverage_radius_m,
                    k_cover: config.k_cover,
                };
                let placement = place_baseline(&ctx, &baseline, config.n_beacons, config.seed)?;
                let report = evaluate_error(
                    &map,
                    &placement,
                    &grid,
                    &config.algorithm,
                    &model,
                    &coll,
                    config.seed,
                )?;
                Ok((placement, report, None))
            }
        }
    })?;

    // pin every resolved quantity so a manifest rerun is exact
    let mut pinned = config.clone();
    pinned.eval_interval_m = Some(eval_interval);
    if let Some(t) = &trace {
        pinned.search.delta_p_acc_m = Some(t.delta_p_acc_m);
        pinned.search.t_eval_s = Some(t.t_eval_s);
        pinned.search.area_scale = Some(t.area_m2 / map.area());
    }
    let resolved = ResolvedValues {
        delta_p_acc_m: trace.as_ref().map(|t| t.delta_p_acc_m),
        t_eval_s: trace.as_ref().map(|t| t.t_eval_s),
        area_scale: trace.as_ref().map(|t| t.area_m2 / map.area()),
        eval_interval_m: eval_interval,
        n_in_area: trace.as_ref().map(|t| t.n_in_area),
    };

    let dir = &config.output_dir;
    let placement_path = dir.join("placement.csv");
    let report_path = dir.join("report.csv");
    write_placement(&placement, &placement_path)?;
    let run_id = format!("{}-{}", config.method, config.seed);
    write_report(&run_id, &report, &report_path)?;
    let mut outputs = vec![placement_path.clone(), report_path.clone()];
    let trace_path = match &trace {
        Some(t) => {
            let p = dir.join("trace.csv");
            write_trace(t, &p)?;
            outputs.push(p.clone());
            Some(p)
        }
        None => None,
    };
    if config.per_point_dump {
        let grid = sample_map(&map, eval_interval)?;
        let p = dir.join("errors.csv");
        write_per_point(&grid.points, &report.per_point, &p)?;
        outputs.push(p);
    }

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        pinned_config: pinned,
        resolved,
        wall_time_s: started.elapsed().as_secs_f64(),
        outputs,
    };
    let manifest_path = dir.join("manifest.json");
    write_text(
        &manifest_path,
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )?;

    Ok(RunArtifacts {
        placement,
        report,
        trace,
        manifest,
        placement_path,
        report_path,
        trace_path,
        manifest_path,
    })
}

/// Run several methods under the identical environment and seed and emit the
/// comparison table. Per-method artifacts land in subdirectories; the table
/// is a pure aggregation of the per-run report files.
pub fn compare_methods(
    config: &ExperimentConfig,
    methods: &[Method],
) -> Result<(Vec<ComparisonRow>, PathBuf), IoError> {
    if methods.len() < 2 {
        return Err(IoError::InvalidConfig("compare needs at least 2 methods".into()));
    }
    let mut rows = Vec::new();
    for &method in methods {
        let mut sub = config.clone();
        sub.method = method;
        sub.output_dir = config.output_dir.join(method.to_string());
        let row = match run_experiment(&sub) {
            Ok(artifacts) => {
                ComparisonRow { method, report: Some(read_report(&artifacts.report_path)?) }
            }
            Err(err) => {
                eprintln!("method {method} failed: {err}");
                ComparisonRow { method, report: None }
            }
        };
        rows.push(row);
    }
    let table_path = config.output_dir.join("comparison.csv");
    write_comparison(&rows, &table_path)?;
    Ok((rows, table_path))
}

/// Re-aggregate a comparison table from stored per-run reports.
pub fn comparison_from_reports(
    base_dir: &Path,
    methods: &[Method],
) -> Result<Vec<ComparisonRow>, IoError> {
    methods
        .iter()
        .map(|&method| {
            let path = base_dir.join(method.to_string()).join("report.csv");
            Ok(ComparisonRow { method, report: Some(read_report(&path)?) })
        })
        .collect()
}

/// Fit a displacement-error relation for the configured environment and
/// write it as JSON (the `fit-g` subcommand).
pub fn fit_g_to_file(
    config: &ExperimentConfig,
    n_trials: usize,
    out: &Path,
) -> Result<DisplacementErrorModel, IoError> {
    let map = load_map(&config.map_path)?;
    let (model, coll) = resolve_model(config)?;
    let g = error_on_distribution(
        &map,
        config.n_beacons,
        &config.algorithm,
        &model,
        &coll,
        n_trials,
        config.seed,
        DisplacementFitOptions { objective: config.objective, ..Default::default() },
    )?;
    write_text(out, &(serde_json::to_string_pretty(&g).expect("g serializes") + "\n"))?;
    Ok(g)
}

/// Fit a signal model from a survey CSV and write it as JSON (the
/// `fit-node` subcommand).
pub fn fit_node_to_file(survey: &Path, out: &Path) -> Result<SignalModel, IoError> {
    let samples = ingest_survey(survey)?;
    let (_, model) = fit_signal_model(&samples)?;
    write_text(out, &(serde_json::to_string_pretty(&model).expect("model serializes") + "\n"))?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn demo_map(dir: &Path) -> PathBuf {
        let map = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly)
            .with_walls(vec![Wall {
                a: Point::new(10.3, 0.0),
                b: Point::new(10.3, 21.0),
                attenuation_db: 6.0,
            }])
            .unwrap();
        let path = dir.join("map.json");
        save_map(&map, &path).unwrap();
        path
    }

    #[test]
    fn map_round_trips_through_json() {
        let dir = tempdir().unwrap();
        let path = demo_map(dir.path());
        let map = load_map(&path).unwrap();
        assert_eq!(map.boundary().len(), 4);
        assert_eq!(map.walls().len(), 1);
        assert_eq!(map.policy(), BoundaryPolicy::InsideOnly);
    }

    #[test]
    fn survey_round_trip_is_lossless() {
        let dir = tempdir().unwrap();
        let samples = vec![
            SignalSample {
                location: Point::new(1.25, 2.5),
                beacon_location: Point::new(0.0, 0.0),
                rss_dbm: -47.375,
                walls_crossed: 1,
            },
            SignalSample {
                location: Point::new(3.0, 4.0),
                beacon_location: Point::new(0.5, 0.25),
                rss_dbm: -60.0,
                walls_crossed: 0,
            },
        ];
        let path = dir.path().join("survey.csv");
        write_survey(&samples, &path).unwrap();
        let back = ingest_survey(&path).unwrap();
        assert_eq!(back, samples);
    }

    #[test]
    fn survey_rejects_bad_rss_with_line_number() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("survey.csv");
        fs::write(
            &path,
            "x,y,beacon_x,beacon_y,rss_dbm,walls\n1,2,0,0,-50,0\n1,2,0,0,7.5,0\n",
        )
        .unwrap();
        match ingest_survey(&path).unwrap_err() {
            IoError::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("7.5"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn survey_empty_file_is_an_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("survey.csv");
        fs::write(&path, "").unwrap();
        assert!(matches!(ingest_survey(&path), Err(IoError::EmptyFile { .. })));
    }

    #[test]
    fn geo_projection_constants() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("geo.csv");
        fs::write(
            &path,
            "lat,lon,ap_id,rss_dbm\n45.0,-122.0,ap1,-60\n45.001,-122.0,ap1,-62\n",
        )
        .unwrap();
        let out = ingest_geo(&path, None, None).unwrap();
        // 0.001 deg of latitude is ~111.32 m
        let d = out.candidates[0].distance(&out.candidates[1]);
        assert!((d - 111.32).abs() < 0.01, "distance {d}");
        assert_eq!(out.ap_positions.len(), 1);
    }

    #[test]
    fn geo_single_row_projects_to_origin() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("geo.csv");
        fs::write(&path, "lat,lon,ap_id,rss_dbm\n45.0,-122.0,ap1,-60\n").unwrap();
        let out = ingest_geo(&path, None, None).unwrap();
        assert_eq!(out.candidates, vec![Point::new(0.0, 0.0)]);
    }

    #[test]
    fn geo_rejects_coincident_extent() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("geo.csv");
        fs::write(&path, "lat,lon,ap_id,rss_dbm\n45.0,-122.0,a,-60\n45.0,-122.0,b,-61\n")
            .unwrap();
        assert!(matches!(ingest_geo(&path, None, None), Err(IoError::DegenerateExtent)));
    }

    #[test]
    fn geo_estimates_one_position_per_ap() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("geo.csv");
        let mut text = String::from("lat,lon,ap_id,rss_dbm\n");
        for ap in 0..72 {
            for k in 0..3 {
                text.push_str(&format!(
                    "{},{},ap{ap},-{}\n",
                    45.0 + 0.0001 * (ap as f64) + 0.0001 * k as f64,
                    -122.0 + 0.0002 * k as f64,
                    50 + k
                ));
            }
        }
        fs::write(&path, text).unwrap();
        let out = ingest_geo(&path, None, None).unwrap();
        assert_eq!(out.ap_positions.len(), 72);
        assert_eq!(out.observations.len(), 72 * 3);
    }

    #[test]
    fn uniform_smoke_run_writes_three_files() {
        let dir = tempdir().unwrap();
        let map_path = demo_map(dir.path());
        let mut config = ExperimentConfig::new(map_path, Method::Uniform, dir.path().join("out"));
        config.n_beacons = 4;
        let artifacts = run_experiment(&config).unwrap();
        assert!(artifacts.placement_path.exists());
        assert!(artifacts.report_path.exists());
        assert!(artifacts.manifest_path.exists());
        assert!(artifacts.trace_path.is_none());
        assert_eq!(artifacts.placement.len(), 4);
        // placement CSV round-trips
        let back = read_placement(&artifacts.placement_path).unwrap();
        assert_eq!(back, artifacts.placement);
    }

    #[test]
    fn missing_map_yields_read_error_naming_path() {
        let dir = tempdir().unwrap();
        let config = ExperimentConfig::new(
            dir.path().join("nope.json"),
            Method::Uniform,
            dir.path().join("out"),
        );
        match run_experiment(&config) {
            Err(IoError::Read { path, .. }) => assert!(path.ends_with("nope.json")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn compare_writes_table_and_reaggregates_identically() {
        let dir = tempdir().unwrap();
        let map_path = demo_map(dir.path());
        let mut config = ExperimentConfig::new(map_path, Method::Uniform, dir.path().join("cmp"));
        config.n_beacons = 4;
        config.model = Some(ModelParams { noise_sigma_db: 3.0, ..Default::default() });
        let methods = [Method::Uniform, Method::Random];
        let (rows, table_path) = compare_methods(&config, &methods).unwrap();
        assert_eq!(rows.len(), 2);
        let original = fs::read_to_string(&table_path).unwrap();
        let re_rows = comparison_from_reports(&config.output_dir, &methods).unwrap();
        let re_path = dir.path().join("re.csv");
        write_comparison(&re_rows, &re_path).unwrap();
        assert_eq!(original, fs::read_to_string(&re_path).unwrap());
    }

    #[test]
    fn config_json_round_trip_with_partial_file() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(
            &path,
            r#"{
  "map_path": "maps/demo.json",
  "method": "bnp",
  "algorithm": { "kind": "lateration", "k_neighbors": 3, "min_beacons": 3 },
  "output_dir": "out"
}"#,
        )
        .unwrap();
        let config = ExperimentConfig::from_json_file(&path).unwrap();
        assert_eq!(config.method, Method::Bnp);
        assert_eq!(config.n_beacons, 6); // default
        assert_eq!(config.alpha, 0.5); // default
    }
}
