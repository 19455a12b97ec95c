//! Signal environment characterization: log-distance path-loss fitting from
//! survey samples, synthesis of full signal maps (with wall attenuation,
//! shadowing noise and survey-sample lookup), and the coverage contour.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::Placement;
use crate::geometry::{Map, Point, SampleGrid};

/// Receiver sensitivity floor; anything weaker is "beacon not heard".
pub const SIGNAL_FLOOR_DBM: f64 = -120.0;

/// Default log-distance reference distance.
pub const D0_DEFAULT_M: f64 = 1.0;

/// Default radius for "similar points" lookup in the survey collection:
/// half the finest sampling interval used in practice (1 m).
pub const SIMILARITY_RADIUS_DEFAULT_M: f64 = 0.5;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("no wall-count partition has the {min} samples required for fitting")]
    InsufficientSamples { min: usize },
    #[error("all samples of partition {walls} lie at one distance; cannot fit")]
    DegenerateFit { walls: u32 },
    #[error("model has no zero-wall partition")]
    MissingZeroWallPartition,
}

/// One surveyed signal measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalSample {
    pub location: Point,
    pub beacon_location: Point,
    pub rss_dbm: f64,
    pub walls_crossed: u32,
}

impl SignalSample {
    pub fn distance(&self) -> f64 {
        self.location.distance(&self.beacon_location)
    }
}

/// Raw survey samples partitioned by wall-crossing count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyCollection {
    pub samples: Vec<SignalSample>,
    /// walls_crossed -> indices into `samples`
    pub partitions: BTreeMap<u32, Vec<usize>>,
    pub similarity_radius_m: f64,
}

impl SurveyCollection {
    pub fn empty() -> Self {
        Self {
            samples: Vec::new(),
            partitions: BTreeMap::new(),
            similarity_radius_m: SIMILARITY_RADIUS_DEFAULT_M,
        }
    }

    pub fn from_samples(samples: Vec<SignalSample>) -> Self {
        let mut partitions: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (i, s) in samples.iter().enumerate() {
            partitions.entry(s.walls_crossed).or_default().push(i);
        }
        Self { samples, partitions, similarity_radius_m: SIMILARITY_RADIUS_DEFAULT_M }
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean rss of samples in the matching wall partition whose distance is
    /// within the similarity radius of `distance`, if any.
    pub fn lookup_mean(&self, walls: u32, distance: f64) -> Option<f64> {
        let idx = self.partitions.get(&walls)?;
        let mut sum = 0.0;
        let mut count = 0usize;
        for &i in idx {
            let s = &self.samples[i];
            if (s.distance() - distance).abs() <= self.similarity_radius_m {
                sum += s.rss_dbm;
                count += 1;
            }
        }
        (count > 0).then(|| sum / count as f64)
    }
}

/// How wall crossings affect the synthesized signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WallMode {
    /// One fitted (p0, eta) per wall-count partition, as in indoor surveys.
    PartitionFit,
    /// Single zero-wall model; each crossed wall subtracts its attenuation.
    ExplicitAttenuation,
}

/// Fitted log-distance parameters for one wall-count partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub p0_dbm: f64,
    pub eta: f64,
}

impl PathLoss {
    /// rss at distance `d` given reference distance `d0`.
    pub fn rss_at(&self, d: f64, d0: f64) -> f64 {
        self.p0_dbm - 10.0 * self.eta * (d.max(1e-6) / d0).log10()
    }
}

/// The fitted signal expression: per-partition (p0, eta), the reference
/// distance and the pooled shadowing deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    pub d0_m: f64,
    pub partitions: BTreeMap<u32, PathLoss>,
    pub noise_sigma_db: f64,
    pub wall_mode: WallMode,
}

impl SignalModel {
    /// Synthetic single-partition model with explicit wall attenuation.
    pub fn synthetic(p0_dbm: f64, eta: f64, d0_m: f64, noise_sigma_db: f64) -> Self {
        let mut partitions = BTreeMap::new();
        partitions.insert(0, PathLoss { p0_dbm, eta });
        Self { d0_m, partitions, noise_sigma_db, wall_mode: WallMode::ExplicitAttenuation }
    }

    /// Parameters for a wall count: exact partition if present, else the
    /// largest fitted partition below it, else the smallest one above.
    pub fn path_loss(&self, walls: u32) -> &PathLoss {
        if let Some(p) = self.partitions.get(&walls) {
            return p;
        }
        if let Some((_, p)) = self.partitions.range(..walls).next_back() {
            return p;
        }
        self.partitions
            .values()
            .next()
            .expect("SignalModel has at least one partition")
    }

    pub fn zero_wall(&self) -> Result<&PathLoss, SignalError> {
        self.partitions.get(&0).ok_or(SignalError::MissingZeroWallPartition)
    }

    /// Expected rss at distance `d` through `walls` crossings (partition
    /// parameters only; explicit attenuation is the map's business).
    pub fn predict(&self, d: f64, walls: u32) -> f64 {
        self.path_loss(walls).rss_at(d, self.d0_m)
    }

    /// Free-space distance at which the zero-wall expression reaches
    /// `threshold_dbm`: d = d0 * 10^((p0 - thr) / (10 eta)).
    pub fn coverage_contour(&self, threshold_dbm: f64) -> f64 {
        let pl = self.path_loss(0);
        self.d0_m * 10f64.powf((pl.p0_dbm - threshold_dbm) / (10.0 * pl.eta))
    }

    /// Invert the zero-wall expression to a range estimate.
    pub fn invert_range(&self, rss_dbm: f64) -> f64 {
        let pl = self.path_loss(0);
        self.d0_m * 10f64.powf((pl.p0_dbm - rss_dbm) / (10.0 * pl.eta))
    }
}

/// Minimum samples a partition needs before it is fitted.
pub const MIN_SAMPLES_PER_PARTITION: usize = 5;

/// Fit per-partition log-distance parameters from survey samples and return
/// both the raw collection and the fitted model. Partitions with fewer than
/// [`MIN_SAMPLES_PER_PARTITION`] samples are left unfitted; it is an error if
/// no partition qualifies, or if a qualifying partition has all samples at a
/// single distance.
pub fn fit_signal_model(
    samples: &[SignalSample],
) -> Result<(SurveyCollection, SignalModel), SignalError> {
    fit_signal_model_with_d0(samples, D0_DEFAULT_M)
}

pub fn fit_signal_model_with_d0(
    samples: &[SignalSample],
    d0_m: f64,
) -> Result<(SurveyCollection, SignalModel), SignalError> {
    let coll = SurveyCollection::from_samples(samples.to_vec());
    let mut partitions = BTreeMap::new();
    let mut sq_residuals = 0.0;
    let mut n_fit = 0usize;
    for (&walls, idx) in &coll.partitions {
        if idx.len() < MIN_SAMPLES_PER_PARTITION {
            continue;
        }
        // rss = p0 + eta * u with u = -10 log10(d / d0)
        let us: Vec<f64> = idx
            .iter()
            .map(|&i| -10.0 * (coll.samples[i].distance().max(1e-6) / d0_m).log10())
            .collect();
        let ys: Vec<f64> = idx.iter().map(|&i| coll.samples[i].rss_dbm).collect();
        let spread = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - us.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread < 1e-9 {
            return Err(SignalError::DegenerateFit { walls });
        }
        let coeff = crate::numeric::polyfit(&us, &ys, 1)
            .ok_or(SignalError::DegenerateFit { walls })?;
        let (p0, eta) = (coeff[0], coeff[1]);
        for (&u, &y) in us.iter().zip(&ys) {
            let r = y - (p0 + eta * u);
            sq_residuals += r * r;
        }
        n_fit += us.len();
        partitions.insert(walls, PathLoss { p0_dbm: p0, eta });
    }
    if partitions.is_empty() {
        return Err(SignalError::InsufficientSamples { min: MIN_SAMPLES_PER_PARTITION });
    }
    let dof = n_fit.saturating_sub(2 * partitions.len()).max(1);
    let noise_sigma_db = (sq_residuals / dof as f64).sqrt();
    let model = SignalModel {
        d0_m,
        partitions,
        noise_sigma_db,
        wall_mode: WallMode::PartitionFit,
    };
    Ok((coll, model))
}

/// One synthesized rss entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RssEntry {
    Value(f64),
    BelowFloor,
}

impl RssEntry {
    pub fn heard(&self) -> Option<f64> {
        match *self {
            RssEntry::Value(v) => Some(v),
            RssEntry::BelowFloor => None,
        }
    }

    /// Value with the floor substituted for unheard beacons (fingerprint
    /// vectors store the floor explicitly).
    pub fn or_floor(&self) -> f64 {
        self.heard().unwrap_or(SIGNAL_FLOOR_DBM)
    }
}

/// The synthesized signal map: per (grid point, beacon) rss entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMap {
    pub grid: SampleGrid,
    pub beacons: Placement,
    /// entries[point_index][beacon_index]
    pub entries: Vec<Vec<RssEntry>>,
}

impl SignalMap {
    pub fn row(&self, point_index: usize) -> &[RssEntry] {
        &self.entries[point_index]
    }
}

/// Stable per-entry noise stream seed, independent of evaluation order.
fn entry_seed(seed: u64, point: usize, beacon: usize) -> u64 {
    use crate::numeric::splitmix64;
    splitmix64(splitmix64(splitmix64(seed) ^ point as u64) ^ beacon as u64)
}

/// Synthesize the signal map for a placement over a sample grid.
///
/// Per (point, beacon) pair: wall crossings are counted on the straight
/// segment; if the survey collection holds samples of the matching partition
/// within the similarity radius of the true distance, their mean rss is
/// emitted verbatim; otherwise the fitted expression is evaluated (explicit
/// wall attenuation subtracted in that mode) and Gaussian shadowing with the
/// model's sigma is added from a generator seeded by (seed, point, beacon).
/// Entries are clamped to [-120, 0] dBm, with weaker signals reported as
/// [`RssEntry::BelowFloor`].
pub fn synthesize_signal_map(
    map: &Map,
    placement: &Placement,
    grid: &SampleGrid,
    coll: &SurveyCollection,
    model: &SignalModel,
    seed: u64,
) -> SignalMap {
    let entries: Vec<Vec<RssEntry>> = grid
        .points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            placement
                .locations
                .iter()
                .enumerate()
                .map(|(j, b)| synthesize_entry(map, p, b, coll, model, seed, i, j))
                .collect()
        })
        .collect();
    SignalMap { grid: grid.clone(), beacons: placement.clone(), entries }
}

fn synthesize_entry(
    map: &Map,
    point: &Point,
    beacon: &Point,
    coll: &SurveyCollection,
    model: &SignalModel,
    seed: u64,
    point_index: usize,
    beacon_index: usize,
) -> RssEntry {
    let d = point.distance(beacon).max(1e-6);
    let walls = map.walls_crossed(point, beacon);
    let rss = if let Some(mean) = coll.lookup_mean(walls, d) {
        mean
    } else {
        let mut v = match model.wall_mode {
            WallMode::PartitionFit => model.predict(d, walls),
            WallMode::ExplicitAttenuation => {
                model.predict(d, 0) - map.attenuation_along(point, beacon)
            }
        };
        if model.noise_sigma_db > 0.0 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(entry_seed(seed, point_index, beacon_index));
            let normal = Normal::new(0.0, model.noise_sigma_db).expect("sigma >= 0");
            v += normal.sample(&mut rng);
        }
        v
    };
    let rss = rss.min(0.0);
    if rss < SIGNAL_FLOOR_DBM {
        RssEntry::BelowFloor
    } else {
        RssEntry::Value(rss)
    }
}
