//! The exact localization-error function over a sample grid, the four error
//! statistics, and the fitted displacement-error relation used to turn an
//! error tolerance into a sampling interval.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{sample_map, Map, Point, SampleGrid};
use crate::localizers::{
    build_fingerprint_db, localize_fingerprint_excluding, localize_lateration, LocalizerConfig,
    LocalizerKind, Reading,
};
use crate::numeric::{horner, isotonic_non_decreasing, polyfit, splitmix64};
use crate::signal::{synthesize_signal_map, SignalModel, SurveyCollection};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("per-point error list is empty")]
    EmptyList,
    #[error("evaluation grid is empty")]
    EmptyGrid,
    #[error("placement is empty")]
    EmptyPlacement,
    #[error("need at least {min} trials for the displacement-error fit, got {got}")]
    InsufficientTrials { min: usize, got: usize },
}

/// An assignment of beacons to locations; order is the beacon identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub locations: Vec<Point>,
}

impl Placement {
    pub fn new(locations: Vec<Point>) -> Self {
        Self { locations }
    }
    pub fn len(&self) -> usize {
        self.locations.len()
    }
    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
    pub fn translated(&self, offset: Point) -> Placement {
        Placement::new(self.locations.iter().map(|&p| p + offset).collect())
    }
}

/// Which error statistic an optimizer minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Ari,
    Geo,
    Med,
}

impl Objective {
    pub fn of(&self, report: &ErrorReport) -> f64 {
        match self {
            Objective::Ari => report.ari_m,
            Objective::Geo => report.geo_m,
            Objective::Med => report.med_m,
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ari" => Ok(Objective::Ari),
            "geo" => Ok(Objective::Geo),
            "med" => Ok(Objective::Med),
            other => Err(format!("unknown objective '{other}' (want ari|geo|med)")),
        }
    }
}

/// The four error statistics over the evaluated points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub ari_m: f64,
    pub geo_m: f64,
    pub med_m: f64,
    pub abn_frac: f64,
    pub per_point: Vec<f64>,
    pub elapsed_s: f64,
}

/// Floor applied inside the geometric mean so zero errors stay finite.
pub const GEO_FLOOR_M: f64 = 1e-9;

/// (ari, geo, med, abn) of a non-empty list of non-negative errors.
///
/// geo uses a 1e-9 m floor per value; med is the standard median (even
/// lengths average the two middle values); abn counts values >= 2*ari.
pub fn error_stats(per_point: &[f64]) -> Result<(f64, f64, f64, f64), EvalError> {
    if per_point.is_empty() {
        return Err(EvalError::EmptyList);
    }
    let n = per_point.len() as f64;
    let ari = per_point.iter().sum::<f64>() / n;
    let geo = (per_point.iter().map(|&e| e.max(GEO_FLOOR_M).ln()).sum::<f64>() / n).exp();
    let mut sorted = per_point.to_vec();
    sorted.sort_by(f64::total_cmp);
    let med = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2]) / 2.0
    };
    // a zero error is never abnormal (the >= rule would otherwise flag
    // everything whenever the mean itself is zero)
    let abn = per_point.iter().filter(|&&e| e > 0.0 && e >= 2.0 * ari).count() as f64 / n;
    Ok((ari, geo, med, abn))
}

/// Evaluation knobs beyond the core inputs.
#[derive(Debug, Clone, Copy)]
pub struct EvalOptions {
    /// Exclude each queried point's own fingerprint entry (keeps f(.)
    /// non-degenerate when the query grid is the database grid). The
    /// self-match mode exists only as a calibration sentinel.
    pub leave_one_out: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { leave_one_out: true }
    }
}

/// The exact error function f(.): synthesize the signal map over the grid,
/// localize every grid point from its readings, and aggregate the four
/// statistics. Deterministic given the seed. Points that cannot be localized
/// (too few beacons heard, or an unusable fingerprint query) contribute the
/// map diameter.
pub fn evaluate_error(
    map: &Map,
    placement: &Placement,
    grid: &SampleGrid,
    localizer: &LocalizerConfig,
    model: &SignalModel,
    coll: &SurveyCollection,
    seed: u64,
) -> Result<ErrorReport, EvalError> {
    evaluate_error_with(map, placement, grid, localizer, model, coll, seed, EvalOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_error_with(
    map: &Map,
    placement: &Placement,
    grid: &SampleGrid,
    localizer: &LocalizerConfig,
    model: &SignalModel,
    coll: &SurveyCollection,
    seed: u64,
    options: EvalOptions,
) -> Result<ErrorReport, EvalError> {
    if placement.is_empty() {
        return Err(EvalError::EmptyPlacement);
    }
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    let started = Instant::now();
    let signal_map = synthesize_signal_map(map, placement, grid, coll, model, seed);
    let db = match localizer.kind {
        LocalizerKind::Fingerprint => Some(build_fingerprint_db(grid, &signal_map)),
        LocalizerKind::Lateration => None,
    };
    let penalty = map.diameter();
    let point_error = |i: usize| -> f64 {
        let truth = grid.points[i];
        let readings: Vec<Reading> = signal_map
            .row(i)
            .iter()
            .enumerate()
            .filter_map(|(j, e)| e.heard().map(|rss_dbm| Reading { beacon_index: j, rss_dbm }))
            .collect();
        match localizer.kind {
            LocalizerKind::Lateration => {
                match localize_lateration(&readings, placement, model, localizer) {
                    Ok(fix) => fix.point.distance(&truth),
                    Err(_) => penalty,
                }
            }
            LocalizerKind::Fingerprint => {
                let exclude = options.leave_one_out.then_some(i);
                match localize_fingerprint_excluding(
                    &readings,
                    db.as_ref().unwrap(),
                    localizer.k_neighbors,
                    exclude,
                ) {
                    Ok(p) => p.distance(&truth),
                    Err(_) => penalty,
                }
            }
        }
    };
    // Order-preserving collection keeps the statistics independent of the
    // worker schedule.
    let per_point: Vec<f64> = if grid.len() >= 64 {
        (0..grid.len()).into_par_iter().map(point_error).collect()
    } else {
        (0..grid.len()).map(point_error).collect()
    };
    let (ari_m, geo_m, med_m, abn_frac) = error_stats(&per_point)?;
    Ok(ErrorReport {
        ari_m,
        geo_m,
        med_m,
        abn_frac,
        per_point,
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

/// Lower clamp for the displacement derived from an error budget.
pub const DISPLACEMENT_FLOOR_M: f64 = 0.25;

/// Stand-in error spread when the environment shows no error variation.
pub const ERROR_FLOOR_M: f64 = 1e-6;

/// The fitted relation delta_p = g(delta_e): a monotone polynomial over the
/// sampled (error change, mean displacement) pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementErrorModel {
    /// Polynomial coefficients, constant-first.
    pub coefficients: Vec<f64>,
    pub degree: usize,
    /// (delta_e, delta_p) pairs the fit was computed from.
    pub sample_pairs: Vec<(f64, f64)>,
    pub fit_r2: f64,
    /// Set when the error surface showed no variation and the linear
    /// fallback slope was installed.
    pub degenerate: bool,
    pub delta_p_max_m: f64,
    pub map_diameter_m: f64,
}

impl DisplacementErrorModel {
    /// A plain linear relation; handy for tests and pinned configurations.
    pub fn linear(slope: f64, intercept: f64, map_diameter_m: f64) -> Self {
        Self {
            coefficients: vec![intercept, slope],
            degree: 1,
            sample_pairs: Vec::new(),
            fit_r2: 1.0,
            degenerate: false,
            delta_p_max_m: map_diameter_m / 4.0,
            map_diameter_m,
        }
    }

    /// Raw polynomial value at `delta_e`, no clamping.
    pub fn raw(&self, delta_e: f64) -> f64 {
        horner(&self.coefficients, delta_e)
    }

    /// Evaluate g at the error budget, clamped to
    /// [[`DISPLACEMENT_FLOOR_M`], map diameter]. This is the sampling
    /// interval the search derives from the user's error tolerance.
    pub fn displacement_for(&self, delta_e_acc: f64) -> f64 {
        self.raw(delta_e_acc).clamp(DISPLACEMENT_FLOOR_M, self.map_diameter_m)
    }
}

/// Fit the monotone polynomial delta_p = g(delta_e) from sampled pairs:
/// ordinary least squares, isotonic projection onto non-decreasing values,
/// then a re-fit; degree falls back toward linear if the re-fit still wiggles
/// downward anywhere on the sampled range.
pub fn fit_displacement_relation(
    pairs: &[(f64, f64)],
    degree: usize,
    delta_p_max_m: f64,
    map_diameter_m: f64,
) -> DisplacementErrorModel {
    let degree = degree.clamp(1, 3);
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = sorted.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = sorted.iter().map(|p| p.1).collect();
    let x_spread = xs.last().copied().unwrap_or(0.0) - xs.first().copied().unwrap_or(0.0);
    if xs.is_empty() || x_spread < 1e-12 {
        let max_dp = ys.iter().cloned().fold(0.0, f64::max).max(delta_p_max_m);
        return DisplacementErrorModel {
            coefficients: vec![0.0, max_dp / ERROR_FLOOR_M],
            degree: 1,
            sample_pairs: pairs.to_vec(),
            fit_r2: 0.0,
            degenerate: true,
            delta_p_max_m,
            map_diameter_m,
        };
    }

    let mut deg = degree.min(xs.len() - 1).max(1);
    let coefficients = loop {
        let fitted = polyfit(&xs, &ys, deg).unwrap_or_else(|| vec![ys[0]]);
        let smoothed: Vec<f64> = xs.iter().map(|&x| horner(&fitted, x)).collect();
        let monotone = isotonic_non_decreasing(&smoothed);
        let refit = polyfit(&xs, &monotone, deg).unwrap_or(fitted);
        if is_non_decreasing_on(&refit, xs[0], xs[xs.len() - 1]) {
            break refit;
        }
        if deg == 1 {
            // non-negative-slope line through the data
            let mean_x = xs.iter().sum::<f64>() / xs.len() as f64;
            let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
            let slope = (refit.get(1).copied().unwrap_or(0.0)).max(0.0);
            break vec![mean_y - slope * mean_x, slope];
        }
        deg -= 1;
    };

    let mean_y = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|&y| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = y - horner(&coefficients, x);
            r * r
        })
        .sum();
    let fit_r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };
    DisplacementErrorModel {
        degree: coefficients.len().saturating_sub(1).max(1),
        coefficients,
        sample_pairs: pairs.to_vec(),
        fit_r2,
        degenerate: false,
        delta_p_max_m,
        map_diameter_m,
    }
}

/// Derivative-sign scan over 1000 points of the fitted range.
fn is_non_decreasing_on(coefficients: &[f64], lo: f64, hi: f64) -> bool {
    if hi <= lo {
        return true;
    }
    let mut last = f64::NEG_INFINITY;
    let tol = 1e-9 * (1.0 + hi.abs());
    for i in 0..=1000 {
        let x = lo + (hi - lo) * i as f64 / 1000.0;
        let v = horner(coefficients, x);
        if v < last - tol {
            return false;
        }
        last = v;
    }
    true
}

/// Knobs for the random-displacement sampling behind the g fit.
#[derive(Debug, Clone, Copy)]
pub struct DisplacementFitOptions {
    pub degree: usize,
    /// Grid interval for the per-trial evaluations; default diameter/12.
    pub grid_interval: Option<f64>,
    /// Largest mean displacement sampled; default diameter/4.
    pub delta_p_max: Option<f64>,
    pub objective: Objective,
}

impl Default for DisplacementFitOptions {
    fn default() -> Self {
        Self { degree: 2, grid_interval: None, delta_p_max: None, objective: Objective::Ari }
    }
}

pub const MIN_DISPLACEMENT_TRIALS: usize = 20;

/// Sample the displacement-error relation: random placements are nudged by a
/// random mean offset and the error change is recorded, then the monotone
/// polynomial delta_p = g(delta_e) is fitted over the pairs.
///
/// Both evaluations of a trial share one noise seed, so delta_e measures the
/// placement change rather than noise resampling.
#[allow(clippy::too_many_arguments)]
pub fn error_on_distribution(
    map: &Map,
    n_beacons: usize,
    localizer: &LocalizerConfig,
    model: &SignalModel,
    coll: &SurveyCollection,
    n_trials: usize,
    seed: u64,
    options: DisplacementFitOptions,
) -> Result<DisplacementErrorModel, EvalError> {
    if n_trials < MIN_DISPLACEMENT_TRIALS {
        return Err(EvalError::InsufficientTrials { min: MIN_DISPLACEMENT_TRIALS, got: n_trials });
    }
    let diameter = map.diameter();
    let delta_p_max = options.delta_p_max.unwrap_or(diameter / 4.0);
    let interval = options.grid_interval.unwrap_or((diameter / 12.0).max(0.25));
    let grid = sample_map(map, interval).map_err(|_| EvalError::EmptyGrid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_trials);
    for trial in 0..n_trials {
        let base: Vec<Point> = (0..n_beacons).map(|_| uniform_point_in(map, &mut rng)).collect();
        let delta_p: f64 = rng.random_range(0.0..1.0) * delta_p_max;
        let delta_p = delta_p.max(1e-6 * delta_p_max);
        let moved: Vec<Point> = base
            .iter()
            .map(|p| {
                let theta = rng.random_range(0.0..std::f64::consts::TAU);
                Point::new(p.x + delta_p * theta.cos(), p.y + delta_p * theta.sin())
            })
            .collect();
        let eval_seed = splitmix64(seed ^ (trial as u64).wrapping_mul(0x51a2b3c4d5e6f701));
        let e0 = evaluate_error(map, &Placement::new(base), &grid, localizer, model, coll, eval_seed)?;
        let e1 =
            evaluate_error(map, &Placement::new(moved), &grid, localizer, model, coll, eval_seed)?;
        let delta_e = (options.objective.of(&e1) - options.objective.of(&e0)).abs();
        pairs.push((delta_e, delta_p));
    }
    Ok(fit_displacement_relation(&pairs, options.degree, delta_p_max, diameter))
}

/// Rejection-sample a uniform point inside the map polygon.
pub fn uniform_point_in(map: &Map, rng: &mut ChaCha8Rng) -> Point {
    let b = map.bounds();
    for _ in 0..100_000 {
        let p = Point::new(
            b.min.x + rng.random_range(0.0..1.0) * b.width(),
            b.min.y + rng.random_range(0.0..1.0) * b.height(),
        );
        if map.contains(&p) {
            return p;
        }
    }
    map.centroid()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryPolicy;
    use proptest::prelude::*;

    #[test]
    fn stats_singleton() {
        let (ari, geo, med, abn) = error_stats(&[2.0]).unwrap();
        assert_eq!((ari, geo, med, abn), (2.0, 2.0, 2.0, 0.0));
    }

    #[test]
    fn stats_two_values() {
        let (ari, geo, med, abn) = error_stats(&[1.0, 4.0]).unwrap();
        assert!((ari - 2.5).abs() < 1e-12);
        assert!((geo - 2.0).abs() < 1e-12);
        assert!((med - 2.5).abs() < 1e-12);
        assert_eq!(abn, 0.0);
    }

    #[test]
    fn stats_abnormal_fraction() {
        let (ari, geo, med, abn) = error_stats(&[1.0, 1.0, 1.0, 9.0]).unwrap();
        assert!((ari - 3.0).abs() < 1e-12);
        assert!((geo - 9f64.powf(0.25)).abs() < 1e-12); // (1*1*1*9)^(1/4) ~ 1.732
        assert!((med - 1.0).abs() < 1e-12);
        assert!((abn - 0.25).abs() < 1e-12);
    }

    #[test]
    fn stats_value_exactly_twice_mean_counts_as_abnormal() {
        // mean 1, value 2 == 2*ari -> abnormal by the >= rule
        let (_, _, _, abn) = error_stats(&[0.0, 2.0]).unwrap();
        assert_eq!(abn, 0.5);
    }

    #[test]
    fn stats_rejects_empty() {
        assert_eq!(error_stats(&[]).unwrap_err(), EvalError::EmptyList);
    }

    fn env() -> (Map, SignalModel, SurveyCollection) {
        (
            Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly),
            SignalModel::synthetic(-40.0, 3.0, 1.0, 0.0),
            SurveyCollection::empty(),
        )
    }

    #[test]
    fn fingerprint_self_match_sentinel_gives_zero_error() {
        let (map, model, coll) = env();
        let grid = sample_map(&map, 6.0).unwrap();
        let placement = Placement::new(vec![
            Point::new(7.0, 7.0),
            Point::new(23.0, 7.0),
            Point::new(15.0, 23.0),
        ]);
        let mut cfg = LocalizerConfig::fingerprint();
        cfg.k_neighbors = 1;
        let report = evaluate_error_with(
            &map,
            &placement,
            &grid,
            &cfg,
            &model,
            &coll,
            5,
            EvalOptions { leave_one_out: false },
        )
        .unwrap();
        assert_eq!(report.ari_m, 0.0);
        assert!((report.geo_m - GEO_FLOOR_M).abs() < 1e-12); // geometric-mean floor
        assert_eq!(report.med_m, 0.0);
        assert_eq!(report.abn_frac, 0.0);
    }

    #[test]
    fn lateration_noiseless_ari_below_1e3() {
        let (map, model, coll) = env();
        let grid = sample_map(&map, 5.0).unwrap();
        let placement = Placement::new(vec![
            Point::new(4.0, 4.0),
            Point::new(26.0, 4.0),
            Point::new(4.0, 26.0),
            Point::new(26.0, 26.0),
        ]);
        let report = evaluate_error(
            &map,
            &placement,
            &grid,
            &LocalizerConfig::lateration(),
            &model,
            &coll,
            1,
        )
        .unwrap();
        assert!(report.ari_m < 1e-3, "ari {}", report.ari_m);
    }

    #[test]
    fn evaluation_invariant_under_beacon_relabeling() {
        let (map, model, coll) = env();
        let grid = sample_map(&map, 5.0).unwrap();
        let a = Placement::new(vec![
            Point::new(4.0, 4.0),
            Point::new(26.0, 4.0),
            Point::new(15.0, 26.0),
        ]);
        let b = Placement::new(vec![
            Point::new(15.0, 26.0),
            Point::new(4.0, 4.0),
            Point::new(26.0, 4.0),
        ]);
        // noise is per (point, beacon-index); relabeling permutes streams, so
        // only the noiseless environment is exactly invariant
        let ra =
            evaluate_error(&map, &a, &grid, &LocalizerConfig::lateration(), &model, &coll, 3)
                .unwrap();
        let rb =
            evaluate_error(&map, &b, &grid, &LocalizerConfig::lateration(), &model, &coll, 3)
                .unwrap();
        assert!((ra.ari_m - rb.ari_m).abs() < 1e-9);
    }

    #[test]
    fn uncoverable_points_pay_the_map_diameter() {
        let map = Map::rectangle(200.0, 200.0, BoundaryPolicy::InsideOnly);
        // steep model: floor reached at ~40 m
        let model = SignalModel::synthetic(-40.0, 5.0, 1.0, 0.0);
        let coll = SurveyCollection::empty();
        let placement = Placement::new(vec![
            Point::new(5.0, 5.0),
            Point::new(15.0, 5.0),
            Point::new(5.0, 15.0),
        ]);
        let grid = SampleGrid {
            interval: 1.0,
            points: vec![Point::new(190.0, 190.0), Point::new(6.0, 6.0)],
        };
        let report = evaluate_error(
            &map,
            &placement,
            &grid,
            &LocalizerConfig::lateration(),
            &model,
            &coll,
            0,
        )
        .unwrap();
        assert_eq!(report.per_point[0], map.diameter());
        assert!(report.per_point[1] < 1.0);
    }

    #[test]
    fn displacement_identity_polynomial() {
        let g = DisplacementErrorModel::linear(1.0, 0.0, 100.0);
        assert_eq!(g.displacement_for(2.0), 2.0);
        // below the floor -> clamped
        assert_eq!(g.displacement_for(0.01), DISPLACEMENT_FLOOR_M);
        // above the diameter -> clamped
        assert_eq!(g.displacement_for(1e9), 100.0);
    }

    #[test]
    fn fit_on_all_zero_pairs_passes_through_origin() {
        let pairs = vec![(0.0, 0.0); 30];
        let g = fit_displacement_relation(&pairs, 2, 1.0, 100.0);
        assert!(g.degenerate);
        assert_eq!(g.raw(0.0), 0.0);
    }

    #[test]
    fn constant_error_surface_gets_fallback_slope() {
        let pairs: Vec<(f64, f64)> = (1..=30).map(|i| (0.0, i as f64 * 0.1)).collect();
        let g = fit_displacement_relation(&pairs, 2, 3.0, 100.0);
        assert!(g.degenerate);
        let expected_slope = 3.0 / ERROR_FLOOR_M;
        assert!((g.coefficients[1] - expected_slope).abs() / expected_slope < 1e-12);
    }

    #[test]
    fn fit_is_monotone_on_noisy_increasing_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs: Vec<(f64, f64)> = (0..200)
            .map(|_| {
                let de: f64 = rng.random_range(0.0..5.0);
                let dp = 0.8 * de + 0.3 * de * de + rng.random_range(-0.5..0.5);
                (de, dp.max(0.0))
            })
            .collect();
        let g = fit_displacement_relation(&pairs, 3, 10.0, 50.0);
        assert!(!g.degenerate);
        let mut last = f64::NEG_INFINITY;
        for i in 0..=1000 {
            let x = 5.0 * i as f64 / 1000.0;
            let v = g.raw(x);
            assert!(v >= last - 1e-9, "not monotone at {x}");
            last = v;
        }
        assert!(g.fit_r2 > 0.5, "r2 {}", g.fit_r2);
    }

    fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
        fn ranks(v: &[f64]) -> Vec<f64> {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
            let mut r = vec![0.0; v.len()];
            for (rank, &i) in idx.iter().enumerate() {
                r[i] = rank as f64;
            }
            r
        }
        let rx = ranks(xs);
        let ry = ranks(ys);
        let n = xs.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
        cov / (vx.sqrt() * vy.sqrt())
    }

    #[test]
    fn displacement_error_correlation_in_smooth_environment() {
        let map = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
        let model = SignalModel::synthetic(-40.0, 3.0, 1.0, 2.0);
        let coll = SurveyCollection::empty();
        let g = error_on_distribution(
            &map,
            3,
            &LocalizerConfig::lateration(),
            &model,
            &coll,
            200,
            7,
            DisplacementFitOptions::default(),
        )
        .unwrap();
        let xs: Vec<f64> = g.sample_pairs.iter().map(|p| p.1).collect(); // delta_p
        let ys: Vec<f64> = g.sample_pairs.iter().map(|p| p.0).collect(); // delta_e
        let rho = spearman(&xs, &ys);
        assert!(rho > 0.3, "spearman {rho}");
        // fitted displacement for a mid-range error lies in the sampled range
        let mid_e = ys.iter().cloned().fold(0.0, f64::max) / 2.0;
        let dp = g.displacement_for(mid_e);
        let dp_max = xs.iter().cloned().fold(0.0, f64::max);
        assert!(dp <= dp_max + 1e-9, "dp {dp} beyond sampled {dp_max}");
    }

    #[test]
    fn too_few_trials_is_an_error() {
        let (map, model, coll) = env();
        let err = error_on_distribution(
            &map,
            2,
            &LocalizerConfig::lateration(),
            &model,
            &coll,
            5,
            0,
            DisplacementFitOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, EvalError::InsufficientTrials { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn geo_never_exceeds_ari(values in proptest::collection::vec(0.001f64..100.0, 1..40)) {
            let (ari, geo, _, _) = error_stats(&values).unwrap();
            prop_assert!(geo <= ari + 1e-9);
        }

        #[test]
        fn med_between_min_and_max(values in proptest::collection::vec(0.0f64..100.0, 1..40)) {
            let (_, _, med, _) = error_stats(&values).unwrap();
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(0.0, f64::max);
            prop_assert!(med >= lo - 1e-12 && med <= hi + 1e-12);
        }

        #[test]
        fn abn_zero_when_max_below_twice_mean(values in proptest::collection::vec(1.0f64..2.0, 2..30)) {
            // values in [1,2): max < 2 <= 2*mean, so nothing is abnormal
            let (_, _, _, abn) = error_stats(&values).unwrap();
            prop_assert_eq!(abn, 0.0);
        }
    }
}
