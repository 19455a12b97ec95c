//! Pluggable localization algorithms: range-inversion lateration solved by
//! Gauss-Newton least squares, and kNN signal-space fingerprinting.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::Placement;
use crate::geometry::{Point, SampleGrid};
use crate::signal::{SignalMap, SignalModel};

#[derive(Debug, Error, PartialEq)]
pub enum LocalizeError {
    #[error("need at least {need} readings for lateration, got {got}")]
    TooFewBeacons { need: usize, got: usize },
    #[error("fingerprint database is empty")]
    EmptyDatabase,
    #[error("k = {k} exceeds the {available} usable database entries")]
    KTooLarge { k: usize, available: usize },
}

/// One per-beacon signal observation at the (unknown) target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub beacon_index: usize,
    pub rss_dbm: f64,
}

/// Which algorithm positions targets, and its knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalizerKind {
    Lateration,
    Fingerprint,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizerConfig {
    pub kind: LocalizerKind,
    /// Fingerprint only; the original RADAR choice.
    pub k_neighbors: usize,
    /// Lateration only.
    pub min_beacons: usize,
}

impl LocalizerConfig {
    pub fn lateration() -> Self {
        Self { kind: LocalizerKind::Lateration, k_neighbors: 3, min_beacons: 3 }
    }

    pub fn fingerprint() -> Self {
        Self { kind: LocalizerKind::Fingerprint, k_neighbors: 3, min_beacons: 3 }
    }
}

/// A position estimate; `converged` is false when Gauss-Newton ran out of
/// iterations and the best iterate is returned instead (large finite errors
/// keep bad placements rankable).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fix {
    pub point: Point,
    pub converged: bool,
}

const MAX_ITERATIONS: usize = 100;
const STEP_TOLERANCE_M: f64 = 1e-6;

/// Range-inversion lateration: readings become ranges through the zero-wall
/// model inversion, then Gauss-Newton minimizes sum_i (||x - b_i|| - d_i)^2
/// from the centroid of the `min_beacons` nearest-by-range beacons.
pub fn localize_lateration(
    readings: &[Reading],
    placement: &Placement,
    model: &SignalModel,
    config: &LocalizerConfig,
) -> Result<Fix, LocalizeError> {
    if readings.len() < config.min_beacons {
        return Err(LocalizeError::TooFewBeacons {
            need: config.min_beacons,
            got: readings.len(),
        });
    }
    // Canonical processing order: estimates must not depend on reading order.
    let mut obs: Vec<(usize, f64)> = readings
        .iter()
        .map(|r| (r.beacon_index, model.invert_range(r.rss_dbm)))
        .collect();
    obs.sort_by(|a, b| a.0.cmp(&b.0));

    let mut by_range = obs.clone();
    by_range.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let k = config.min_beacons.min(by_range.len());
    let mut x = 0.0;
    let mut y = 0.0;
    for (idx, _) in by_range.iter().take(k) {
        let b = placement.locations[*idx];
        x += b.x;
        y += b.y;
    }
    x /= k as f64;
    y /= k as f64;

    let residual_norm = |x: f64, y: f64| -> f64 {
        obs.iter()
            .map(|&(idx, d)| {
                let b = placement.locations[idx];
                let r = (x - b.x).hypot(y - b.y) - d;
                r * r
            })
            .sum::<f64>()
    };

    let mut best = (x, y, residual_norm(x, y));
    for _ in 0..MAX_ITERATIONS {
        let mut jtj = [[0.0f64; 2]; 2];
        let mut jtr = [0.0f64; 2];
        for &(idx, d) in &obs {
            let b = placement.locations[idx];
            let dx = x - b.x;
            let dy = y - b.y;
            let dist = dx.hypot(dy).max(1e-15);
            let r = dist - d;
            let jx = dx / dist;
            let jy = dy / dist;
            jtj[0][0] += jx * jx;
            jtj[0][1] += jx * jy;
            jtj[1][0] += jy * jx;
            jtj[1][1] += jy * jy;
            jtr[0] += jx * r;
            jtr[1] += jy * r;
        }
        let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
        if det.abs() < 1e-14 {
            // degenerate geometry (collinear beacons): keep the best iterate
            return Ok(Fix { point: Point::new(best.0, best.1), converged: false });
        }
        let inv = 1.0 / det;
        let step_x = inv * (jtj[1][1] * jtr[0] - jtj[0][1] * jtr[1]);
        let step_y = inv * (-jtj[1][0] * jtr[0] + jtj[0][0] * jtr[1]);
        x -= step_x;
        y -= step_y;
        let rn = residual_norm(x, y);
        if rn < best.2 {
            best = (x, y, rn);
        }
        if step_x.hypot(step_y) < STEP_TOLERANCE_M {
            return Ok(Fix { point: Point::new(x, y), converged: true });
        }
    }
    Ok(Fix { point: Point::new(best.0, best.1), converged: false })
}

/// Signal-space fingerprint database: one vector of per-beacon rss per known
/// location, unheard beacons stored at the floor value.
#[derive(Debug, Clone, PartialEq)]
pub struct FingerprintDb {
    pub locations: Vec<Point>,
    pub vectors: Vec<Vec<f64>>,
}

impl FingerprintDb {
    pub fn len(&self) -> usize {
        self.locations.len()
    }
    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
    pub fn n_beacons(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }
}

/// One database entry per grid point, in grid order.
pub fn build_fingerprint_db(grid: &SampleGrid, signal_map: &SignalMap) -> FingerprintDb {
    let vectors = signal_map
        .entries
        .iter()
        .map(|row| row.iter().map(|e| e.or_floor()).collect())
        .collect();
    FingerprintDb { locations: grid.points.clone(), vectors }
}

/// kNN in signal space: Euclidean distance in dB between the reading vector
/// (missing beacons at the floor) and each entry, unweighted centroid of the
/// k nearest locations. Ties break by entry index ascending.
pub fn localize_fingerprint(
    readings: &[Reading],
    db: &FingerprintDb,
    k: usize,
) -> Result<Point, LocalizeError> {
    localize_fingerprint_excluding(readings, db, k, None)
}

/// Same as [`localize_fingerprint`] but optionally skipping one entry, for
/// leave-one-out evaluation when the query grid is the database grid.
pub fn localize_fingerprint_excluding(
    readings: &[Reading],
    db: &FingerprintDb,
    k: usize,
    exclude: Option<usize>,
) -> Result<Point, LocalizeError> {
    if db.is_empty() {
        return Err(LocalizeError::EmptyDatabase);
    }
    let available = db.len() - usize::from(exclude.is_some());
    if k > available || k == 0 {
        return Err(LocalizeError::KTooLarge { k, available });
    }
    let mut query = vec![crate::signal::SIGNAL_FLOOR_DBM; db.n_beacons()];
    for r in readings {
        query[r.beacon_index] = r.rss_dbm;
    }
    let mut scored: Vec<(f64, usize)> = db
        .vectors
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, v)| {
            let d2: f64 = v.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
            (d2, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut x = 0.0;
    let mut y = 0.0;
    for &(_, i) in scored.iter().take(k) {
        x += db.locations[i].x;
        y += db.locations[i].y;
    }
    Ok(Point::new(x / k as f64, y / k as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_map, BoundaryPolicy, Map};
    use crate::signal::{synthesize_signal_map, SurveyCollection};

    fn model() -> SignalModel {
        SignalModel::synthetic(-40.0, 3.0, 1.0, 0.0)
    }

    fn noiseless_readings(target: Point, beacons: &[Point], m: &SignalModel) -> Vec<Reading> {
        beacons
            .iter()
            .enumerate()
            .map(|(i, b)| Reading {
                beacon_index: i,
                rss_dbm: m.predict(target.distance(b), 0),
            })
            .collect()
    }

    #[test]
    fn lateration_recovers_noiseless_target() {
        let beacons = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(0.0, 10.0)];
        let m = model();
        let target = Point::new(3.0, 4.0);
        let readings = noiseless_readings(target, &beacons, &m);
        let fix = localize_lateration(
            &readings,
            &Placement::new(beacons),
            &m,
            &LocalizerConfig::lateration(),
        )
        .unwrap();
        assert!(fix.converged);
        assert!(fix.point.distance(&target) < 1e-4, "{:?}", fix.point);
    }

    #[test]
    fn lateration_near_coincident_beacon() {
        let beacons = vec![Point::new(2.0, 2.0), Point::new(10.0, 0.0), Point::new(0.0, 10.0)];
        let m = model();
        // target sits on beacon 0: extremely strong reading -> near-zero range
        let mut readings = noiseless_readings(Point::new(2.0, 2.0), &beacons, &m);
        readings[0].rss_dbm = m.predict(1e-5, 0);
        let fix = localize_lateration(
            &readings,
            &Placement::new(beacons.clone()),
            &m,
            &LocalizerConfig::lateration(),
        )
        .unwrap();
        assert!(fix.point.distance(&beacons[0]) < 1e-3, "{:?}", fix.point);
    }

    #[test]
    fn lateration_rejects_two_readings() {
        let beacons = vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0)];
        let m = model();
        let readings = noiseless_readings(Point::new(3.0, 4.0), &beacons, &m);
        let err = localize_lateration(
            &readings,
            &Placement::new(beacons),
            &m,
            &LocalizerConfig::lateration(),
        )
        .unwrap_err();
        assert_eq!(err, LocalizeError::TooFewBeacons { need: 3, got: 2 });
    }

    #[test]
    fn lateration_collinear_beacons_flagged_not_crashed() {
        let beacons = vec![Point::new(0.0, 5.0), Point::new(5.0, 5.0), Point::new(10.0, 5.0)];
        let m = model();
        let readings = noiseless_readings(Point::new(3.0, 8.0), &beacons, &m);
        let fix = localize_lateration(
            &readings,
            &Placement::new(beacons),
            &m,
            &LocalizerConfig::lateration(),
        )
        .unwrap();
        assert!(fix.point.x.is_finite() && fix.point.y.is_finite());
    }

    #[test]
    fn lateration_invariant_under_reading_permutation() {
        let beacons = vec![
            Point::new(0.0, 0.0),
            Point::new(12.0, 1.0),
            Point::new(3.0, 11.0),
            Point::new(9.0, 9.0),
        ];
        let m = model();
        let readings = noiseless_readings(Point::new(4.2, 6.9), &beacons, &m);
        let mut shuffled = readings.clone();
        shuffled.swap(0, 3);
        shuffled.swap(1, 2);
        let cfg = LocalizerConfig::lateration();
        let p = Placement::new(beacons);
        let a = localize_lateration(&readings, &p, &m, &cfg).unwrap();
        let b = localize_lateration(&shuffled, &p, &m, &cfg).unwrap();
        assert_eq!(a.point, b.point);
    }

    fn small_db() -> FingerprintDb {
        FingerprintDb {
            locations: vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(0.0, 10.0)],
            vectors: vec![
                vec![-40.0, -60.0, -60.0],
                vec![-60.0, -40.0, -60.0],
                vec![-60.0, -60.0, -40.0],
            ],
        }
    }

    #[test]
    fn fingerprint_exact_match_k1() {
        let db = small_db();
        let readings = vec![
            Reading { beacon_index: 0, rss_dbm: -60.0 },
            Reading { beacon_index: 1, rss_dbm: -40.0 },
            Reading { beacon_index: 2, rss_dbm: -60.0 },
        ];
        let p = localize_fingerprint(&readings, &db, 1).unwrap();
        assert_eq!(p, Point::new(10.0, 0.0));
    }

    #[test]
    fn fingerprint_k_equals_db_size_gives_centroid() {
        let db = small_db();
        let readings = vec![Reading { beacon_index: 0, rss_dbm: -40.0 }];
        let p = localize_fingerprint(&readings, &db, 3).unwrap();
        assert!((p.x - 10.0 / 3.0).abs() < 1e-12);
        assert!((p.y - 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fingerprint_knn_midpoint_of_two_nearest() {
        // distances in signal space: 1, 2, 9 -> k=2 picks the first two
        let db = FingerprintDb {
            locations: vec![Point::new(0.0, 0.0), Point::new(4.0, 0.0), Point::new(50.0, 50.0)],
            vectors: vec![vec![-50.0], vec![-51.0], vec![-58.0]],
        };
        let readings = vec![Reading { beacon_index: 0, rss_dbm: -49.0 }];
        let p = localize_fingerprint(&readings, &db, 2).unwrap();
        assert_eq!(p, Point::new(2.0, 0.0));
    }

    #[test]
    fn fingerprint_empty_db_and_bad_k() {
        let empty = FingerprintDb { locations: vec![], vectors: vec![] };
        assert_eq!(
            localize_fingerprint(&[], &empty, 1).unwrap_err(),
            LocalizeError::EmptyDatabase
        );
        let db = small_db();
        assert!(matches!(
            localize_fingerprint(&[], &db, 4).unwrap_err(),
            LocalizeError::KTooLarge { .. }
        ));
    }

    #[test]
    fn fingerprint_estimate_in_convex_hull_and_permutation_invariant() {
        let db = small_db();
        let readings = vec![
            Reading { beacon_index: 2, rss_dbm: -47.0 },
            Reading { beacon_index: 0, rss_dbm: -44.0 },
            Reading { beacon_index: 1, rss_dbm: -52.0 },
        ];
        let mut reordered = readings.clone();
        reordered.rotate_left(1);
        let a = localize_fingerprint(&readings, &db, 2).unwrap();
        let b = localize_fingerprint(&reordered, &db, 2).unwrap();
        assert_eq!(a, b);
        // hull of the three db locations is the triangle (0,0),(10,0),(0,10)
        assert!(a.x >= 0.0 && a.y >= 0.0 && a.x + a.y <= 10.0 + 1e-9);
    }

    #[test]
    fn db_from_signal_map_has_grid_shape_and_is_deterministic() {
        let map = Map::rectangle(20.0, 20.0, BoundaryPolicy::InsideOnly);
        let grid = sample_map(&map, 10.0).unwrap();
        let placement = Placement::new(vec![
            Point::new(5.0, 5.0),
            Point::new(15.0, 5.0),
            Point::new(10.0, 15.0),
        ]);
        let m = model();
        let coll = SurveyCollection::empty();
        let sm = synthesize_signal_map(&map, &placement, &grid, &coll, &m, 9);
        let db1 = build_fingerprint_db(&grid, &sm);
        let db2 = build_fingerprint_db(&grid, &sm);
        assert_eq!(db1, db2);
        assert_eq!(db1.len(), grid.len());
        assert!(db1.vectors.iter().all(|v| v.len() == 3));
    }
}
