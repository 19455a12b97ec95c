//! The placement pipeline: selected-area sizing under the wall-clock budget,
//! multiresolution combinatorial search with memoization, skipping and
//! surrogate pruning, pattern tiling over the rest of the map, boundary
//! processing and coverage adaptation.

mod memo;
mod surrogate;

pub use memo::{
    assignment_cost, canonical_form, CanonicalQuery, MemoHit, MemoRecord, MemoStore,
    ThresholdOrdering, Verdict,
};
pub use surrogate::{descriptor, Surrogate};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::place_uniform;
use crate::evaluation::{
    error_on_distribution, evaluate_error, DisplacementErrorModel, DisplacementFitOptions,
    ErrorReport, EvalError, Objective, Placement,
};
use crate::geometry::{
    overlap_fraction, sample_map, sample_uniform, tile_pattern, BoundaryPolicy, GeometryError,
    Map, Point, Region, RegionShape, SampleGrid,
};
use crate::localizers::LocalizerConfig;
use crate::numeric::{binomial_exact, ln_binomial, splitmix64};
use crate::signal::{SignalModel, SurveyCollection};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(
        "budget too small: even one node on three sample points needs {needed:.3}s > {t_acc:.3}s"
    )]
    BudgetTooSmall { needed: f64, t_acc: f64 },
    #[error("initial interval {intl0} m is finer than the acceptable interval {delta_p:.3} m")]
    InfeasibleInterval { intl0: f64, delta_p: f64 },
    #[error(transparent)]
    Thresholds(#[from] ThresholdOrdering),
    #[error("no refinement level produced any candidate placement")]
    NoCandidates,
    #[error("level holds {combinations} candidate combinations; too many to rank")]
    SearchSpaceTooLarge { combinations: u128 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// The user contract: wall-clock budget, error tolerance and the pruning
/// ratio applied by the approximation techniques.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub t_acc_s: f64,
    pub delta_e_acc_m: f64,
    pub alpha: f64,
}

impl Budget {
    pub fn new(t_acc_s: f64, delta_e_acc_m: f64) -> Self {
        Self { t_acc_s, delta_e_acc_m, alpha: 0.5 }
    }
}

/// Integer ceiling with a relative epsilon so exact products do not round up.
fn ceil_count(x: f64) -> u64 {
    (x - 1e-9 * x.abs().max(1.0)).ceil().max(0.0) as u64
}

/// The sized selected area and the counts behind it.
#[derive(Debug, Clone)]
pub struct AreaSizing {
    pub region: Region,
    pub area_m2: f64,
    /// ceil(S * d_s): predicted sample points in the area.
    pub sample_points: u64,
    /// ceil(S * d_b): nodes to place in the area.
    pub nodes: u64,
    /// Exact predicted candidate count when it fits in u128.
    pub combinations: Option<u128>,
    pub delta_p_acc_m: f64,
    /// The sizing reached the whole map.
    pub capped_at_map: bool,
}

/// Solve the largest area size S with
/// alpha * C(ceil(S*d_s), ceil(S*d_b)) * t_eval <= t_acc, where the sampling
/// density d_s comes from the displacement budget and d_b from the beacon
/// density, then return a region of that size at the map centroid.
pub fn selected_area(
    map: &Map,
    n_beacons: usize,
    g: &DisplacementErrorModel,
    budget: &Budget,
    t_eval_s: f64,
    shape: RegionShape,
) -> Result<AreaSizing, OptimizerError> {
    let delta_p = g.displacement_for(budget.delta_e_acc_m);
    selected_area_from_delta_p(map, n_beacons, delta_p, budget, t_eval_s, shape)
}

pub fn selected_area_from_delta_p(
    map: &Map,
    n_beacons: usize,
    delta_p_acc_m: f64,
    budget: &Budget,
    t_eval_s: f64,
    shape: RegionShape,
) -> Result<AreaSizing, OptimizerError> {
    assert!(t_eval_s > 0.0, "t_eval must be positive");
    let d_s = 1.0 / (delta_p_acc_m * delta_p_acc_m);
    let d_b = n_beacons as f64 / map.area();
    let cost = |s: f64| -> f64 {
        let m = ceil_count(s * d_s).max(1);
        let n = ceil_count(s * d_b).max(1);
        budget.alpha * ln_binomial(m, n.min(m)).exp() * t_eval_s
    };
    let minimal = budget.alpha * 3.0 * t_eval_s; // one node on three points
    if minimal > budget.t_acc_s {
        return Err(OptimizerError::BudgetTooSmall { needed: minimal, t_acc: budget.t_acc_s });
    }
    let map_area = map.area();
    let (s, capped) = if cost(map_area) <= budget.t_acc_s {
        (map_area, true)
    } else {
        let mut lo = (3.0 / d_s).min(1.0 / d_b).min(map_area);
        if cost(lo) > budget.t_acc_s {
            // even the smallest sensible area busts the budget
            return Err(OptimizerError::BudgetTooSmall {
                needed: cost(lo),
                t_acc: budget.t_acc_s,
            });
        }
        let mut hi = map_area;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cost(mid) <= budget.t_acc_s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, false)
    };
    let sample_points = ceil_count(s * d_s).max(1);
    let nodes = ceil_count(s * d_b).max(1);
    Ok(AreaSizing {
        region: Region::with_area(shape, map.centroid(), s),
        area_m2: s,
        sample_points,
        nodes,
        combinations: binomial_exact(sample_points, nodes.min(sample_points)),
        delta_p_acc_m,
        capped_at_map: capped,
    })
}

/// Search toggles and overrides. Defaults run the full pipeline; tests and
/// pinned reruns switch individual techniques off or fix measured values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchOptions {
    pub memoization: bool,
    pub skipping: bool,
    pub surrogate: bool,
    pub bad_factor: f64,
    pub min_witnesses: usize,
    pub surrogate_min_records: usize,
    pub region_shape: RegionShape,
    /// Bypass the g fit and use this sampling interval directly.
    pub delta_p_acc_m: Option<f64>,
    /// Force the selected area to this fraction of the map area.
    pub area_scale: Option<f64>,
    /// Pin the measured per-candidate evaluation time.
    pub t_eval_s: Option<f64>,
    pub t_mem_m: Option<f64>,
    pub t_skp_m: Option<f64>,
    /// Pre-fitted displacement-error relation; fitted internally when absent.
    #[serde(skip)]
    pub g: Option<DisplacementErrorModel>,
    pub g_trials: usize,
    /// Grid interval of the final full-map error report.
    pub eval_interval_m: Option<f64>,
    pub adapt_threshold_dbm: f64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            memoization: true,
            skipping: true,
            surrogate: true,
            bad_factor: 1.5,
            min_witnesses: 3,
            surrogate_min_records: 200,
            region_shape: RegionShape::Circle,
            delta_p_acc_m: None,
            area_scale: None,
            t_eval_s: None,
            t_mem_m: None,
            t_skp_m: None,
            g: None,
            g_trials: 40,
            eval_interval_m: None,
            adapt_threshold_dbm: -70.0,
        }
    }
}

/// Full placement request.
#[derive(Debug, Clone)]
pub struct PlaceConfig {
    pub n_beacons: usize,
    pub localizer: LocalizerConfig,
    pub budget: Budget,
    pub intl0_m: f64,
    pub seed: u64,
    pub objective: Objective,
    pub options: SearchOptions,
}

/// Counters for one refinement level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub intl_m: f64,
    pub candidates: u64,
    pub evaluated: u64,
    pub memo_hits: u64,
    pub skipped: u64,
    pub surrogate_pruned: u64,
    pub best_objective_m: f64,
    pub elapsed_s: f64,
}

/// What the search did and how long it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub levels: Vec<LevelTrace>,
    pub wall_time_s: f64,
    pub deadline_hit: bool,
    pub delta_p_acc_m: f64,
    pub t_eval_s: f64,
    pub area_m2: f64,
    pub n_in_area: usize,
    pub whole_map: bool,
    pub tiles_kept: usize,
    pub tiles_dropped: usize,
}

/// Result of [`place_beacons`].
#[derive(Debug, Clone)]
pub struct PlacementOutcome {
    pub placement: Placement,
    pub report: ErrorReport,
    pub trace: SearchTrace,
}

/// The best in-area pattern, the area it was found in, and the tiles it gets
/// applied to.
#[derive(Debug, Clone)]
pub struct PatternTiling {
    pub area: Region,
    pub pattern: Vec<Point>,
    pub tiles: Vec<Region>,
}

struct Incumbent {
    raw: Vec<Point>,
    canonical: Vec<Point>,
    error: f64,
}

fn lex_points(a: &[Point], b: &[Point]) -> std::cmp::Ordering {
    for (p, q) in a.iter().zip(b) {
        let c = p.lex_cmp(q);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    a.len().cmp(&b.len())
}

impl Incumbent {
    /// Strict improvement order: error, then canonical form, then raw
    /// locations, all ascending.
    fn improves(&self, error: f64, canonical: &[Point], raw: &[Point]) -> bool {
        use std::cmp::Ordering::*;
        match error.total_cmp(&self.error) {
            Less => true,
            Greater => false,
            Equal => match lex_points(canonical, &self.canonical) {
                Less => true,
                Greater => false,
                Equal => lex_points(raw, &self.raw) == Less,
            },
        }
    }
}

/// Lexicographic k-combination stream over 0..m.
struct Combinations {
    m: usize,
    n: usize,
    cur: Vec<usize>,
    started: bool,
    done: bool,
}

impl Combinations {
    fn new(m: usize, n: usize) -> Self {
        Self { m, n, cur: (0..n).collect(), started: false, done: n > m || n == 0 }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;
    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.cur.clone());
        }
        let n = self.n;
        let mut i = n;
        loop {
            if i == 0 {
                self.done = true;
                return None;
            }
            i -= 1;
            if self.cur[i] < self.m - n + i {
                break;
            }
        }
        self.cur[i] += 1;
        for k in i + 1..n {
            self.cur[k] = self.cur[k - 1] + 1;
        }
        Some(self.cur.clone())
    }
}

const BATCH_SIZE: usize = 512;
const MAX_RANKED_CANDIDATES: u128 = 20_000_000;

enum Outcome {
    Evaluated(f64),
    MemoHit(f64),
    Skipped,
    AfterDeadline,
}

/// Run the full placement pipeline (the paper's divide-and-conquer search).
///
/// Structure: fit or take g, derive the acceptable interval, size the
/// selected area under the budget, then refine the in-area lattice from
/// `intl0` down to that interval enumerating all C(m, n) candidate patterns
/// per level. Candidates short-circuit through coarser-level memo hits, can
/// be skipped when surrounded by bad memorized neighbors, and are pruned by
/// the surrogate ranking once enough records exist. The best pattern is then
/// tiled over the rest of the map, low-overlap tiles are dropped, the
/// boundary policy is enforced, the pattern adapts to the coverage contour
/// when obstacles are present, and the final placement is scored on a
/// full-map grid.
pub fn place_beacons(
    map: &Map,
    model: &SignalModel,
    coll: &SurveyCollection,
    config: &PlaceConfig,
) -> Result<PlacementOutcome, OptimizerError> {
    let started = Instant::now();
    let opts = &config.options;
    let deadline_passed = |margin: f64| started.elapsed().as_secs_f64() + margin >= config.budget.t_acc_s;

    // 1. displacement budget
    let delta_p = match opts.delta_p_acc_m {
        Some(v) => v,
        None => {
            let g = match &opts.g {
                Some(g) => g.clone(),
                None => error_on_distribution(
                    map,
                    config.n_beacons,
                    &config.localizer,
                    model,
                    coll,
                    opts.g_trials,
                    splitmix64(config.seed ^ 0xd00d_f00d_0000_0001),
                    DisplacementFitOptions { objective: config.objective, ..Default::default() },
                )?,
            };
            g.displacement_for(config.budget.delta_e_acc_m)
        }
    };
    if config.intl0_m < delta_p * (1.0 - 1e-9) {
        return Err(OptimizerError::InfeasibleInterval { intl0: config.intl0_m, delta_p });
    }

    let inside_only = map.policy() == BoundaryPolicy::InsideOnly;
    // region = None means the search domain is the whole map
    let build_grid = |region: Option<&Region>, intl: f64| -> Result<SampleGrid, GeometryError> {
        match region {
            None => sample_map(map, intl),
            Some(region) => {
                let mut grid = sample_uniform(region, intl)?;
                if inside_only {
                    grid.points.retain(|p| map.contains(p));
                    if grid.points.is_empty() {
                        return Err(GeometryError::EmptyGrid);
                    }
                }
                Ok(grid)
            }
        }
    };
    let eval_candidate = |points: &[Point], grid: &SampleGrid, offsets: &[Point]| -> f64 {
        let mut locations = points.to_vec();
        for off in offsets {
            locations.extend(points.iter().map(|&p| p + *off));
        }
        let report = evaluate_error(
            map,
            &Placement::new(locations),
            grid,
            &config.localizer,
            model,
            coll,
            config.seed,
        )
        .expect("candidate evaluation on a non-empty grid");
        config.objective.of(&report)
    };
    let n_for_area = |area_m2: f64| -> usize {
        ((area_m2 * config.n_beacons as f64 / map.area()).round() as usize)
            .clamp(1, config.n_beacons)
    };

    // 2. per-candidate evaluation time (median of 5 pilot runs)
    let mut t_eval = match opts.t_eval_s {
        Some(v) => v,
        None => {
            let pilot_interval = delta_p.max((map.area() / 400.0).sqrt());
            let pilot_grid = sample_map(map, pilot_interval)?;
            let pilot = place_uniform(map, config.n_beacons)?;
            let mut times = Vec::with_capacity(5);
            for rep in 0..5 {
                let t0 = Instant::now();
                let _ = evaluate_error(
                    map,
                    &pilot,
                    &pilot_grid,
                    &config.localizer,
                    model,
                    coll,
                    splitmix64(config.seed ^ rep),
                )?;
                times.push(t0.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            times[2].max(1e-9)
        }
    };

    // 3. the selected area
    let size_with = |t: f64| -> Result<AreaSizing, OptimizerError> {
        match opts.area_scale {
            Some(scale) => {
                let s = (scale * map.area()).clamp(f64::MIN_POSITIVE, map.area());
                let d_s = 1.0 / (delta_p * delta_p);
                let sample_points = ceil_count(s * d_s).max(1);
                let nodes = ceil_count(s * config.n_beacons as f64 / map.area()).max(1);
                Ok(AreaSizing {
                    region: Region::with_area(opts.region_shape, map.centroid(), s),
                    area_m2: s,
                    sample_points,
                    nodes,
                    combinations: binomial_exact(sample_points, nodes.min(sample_points)),
                    delta_p_acc_m: delta_p,
                    capped_at_map: s >= map.area() * (1.0 - 1e-9),
                })
            }
            None => selected_area_from_delta_p(
                map,
                config.n_beacons,
                delta_p,
                &config.budget,
                t,
                opts.region_shape,
            ),
        }
    };
    let mut sizing = size_with(t_eval)?;
    // The first pilot times a bare evaluation; in-area candidates also pay
    // for the six replicated neighbor patterns. When the sized area is a
    // proper subregion, re-time a real candidate and size again.
    if opts.t_eval_s.is_none() && opts.area_scale.is_none() && !sizing.capped_at_map {
        let probe_region = sizing.region;
        if let Ok(grid) = build_grid(Some(&probe_region), delta_p) {
            let n_probe = n_for_area(sizing.area_m2).min(grid.len());
            if n_probe >= 1 {
                let step = (grid.len() / n_probe).max(1);
                let pattern: Vec<Point> =
                    (0..n_probe).map(|i| grid.points[(i * step).min(grid.len() - 1)]).collect();
                let offsets = probe_region.neighbor_offsets();
                let mut times = Vec::with_capacity(5);
                for _ in 0..5 {
                    let t0 = Instant::now();
                    let _ = eval_candidate(&pattern, &grid, &offsets);
                    times.push(t0.elapsed().as_secs_f64());
                }
                times.sort_by(f64::total_cmp);
                t_eval = times[2].max(1e-9);
                sizing = size_with(t_eval)?;
            }
        }
    }
    let whole_map = sizing.capped_at_map;
    let region = sizing.region;
    let n_in_area = n_for_area(sizing.area_m2);

    // 4. memo thresholds tied to the sampling scale
    let t_mem = opts.t_mem_m.unwrap_or(n_in_area as f64 * delta_p / 2.0);
    let t_skp = opts.t_skp_m.unwrap_or(2.0 * t_mem);
    let mut store = MemoStore::new(t_mem, t_skp)?;
    store.min_witnesses = opts.min_witnesses;

    let search_region = if whole_map { None } else { Some(&region) };
    let level_grid = |intl: f64| build_grid(search_region, intl);
    let neighbor_offsets: Vec<Point> =
        if whole_map { Vec::new() } else { region.neighbor_offsets() };
    let candidate_error =
        |points: &[Point], grid: &SampleGrid| eval_candidate(points, grid, &neighbor_offsets);

    // 5. multiresolution search
    let mut incumbent: Option<Incumbent> = None;
    let mut levels: Vec<LevelTrace> = Vec::new();
    let mut deadline_hit = false;
    let mut intl = config.intl0_m;
    let mut level: u32 = 0;
    while intl >= delta_p * (1.0 - 1e-9) && !deadline_hit {
        let level_start = Instant::now();
        let grid = match level_grid(intl) {
            Ok(g) => g,
            Err(GeometryError::EmptyGrid) => {
                intl /= 2.0;
                level += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let m = grid.len();
        let mut trace = LevelTrace {
            intl_m: intl,
            candidates: 0,
            evaluated: 0,
            memo_hits: 0,
            skipped: 0,
            surrogate_pruned: 0,
            best_objective_m: f64::INFINITY,
            elapsed_s: 0.0,
        };
        if m >= n_in_area {
            let total = binomial_exact(m as u64, n_in_area as u64).unwrap_or(u128::MAX);
            trace.candidates = total.min(u64::MAX as u128) as u64;

            // surrogate ranking: keep the top alpha fraction, prune the rest
            let surrogate_model = (opts.surrogate
                && n_in_area >= 2
                && store.len() >= opts.surrogate_min_records)
                .then(|| Surrogate::train(store.records()))
                .flatten();
            let combos: Box<dyn Iterator<Item = Vec<usize>>> = match &surrogate_model {
                Some(sur) => {
                    if total > MAX_RANKED_CANDIDATES {
                        return Err(OptimizerError::SearchSpaceTooLarge { combinations: total });
                    }
                    let all: Vec<Vec<usize>> = Combinations::new(m, n_in_area).collect();
                    let mut ranked: Vec<(f64, usize)> = all
                        .par_iter()
                        .enumerate()
                        .map(|(i, combo)| {
                            let pts: Vec<Point> =
                                combo.iter().map(|&k| grid.points[k]).collect();
                            (sur.predict(&descriptor(&canonical_form(&pts))), i)
                        })
                        .collect();
                    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let keep = ((config.budget.alpha * all.len() as f64).ceil() as usize)
                        .clamp(1, all.len());
                    trace.surrogate_pruned = (all.len() - keep) as u64;
                    let mut selected: Vec<Vec<usize>> = ranked[..keep]
                        .iter()
                        .map(|&(_, i)| all[i].clone())
                        .collect();
                    selected.sort(); // back to lexicographic order
                    Box::new(selected.into_iter())
                }
                None => Box::new(Combinations::new(m, n_in_area)),
            };

            let mut combos = combos.peekable();
            while combos.peek().is_some() {
                let batch: Vec<Vec<usize>> = combos.by_ref().take(BATCH_SIZE).collect();
                // Records inserted before this batch are the visible snapshot:
                // results cannot depend on intra-batch evaluation order, so
                // the outcome is identical for any worker count.
                let visible = store.len();
                let best_before = incumbent.as_ref().map_or(f64::INFINITY, |i| i.error);
                let outcomes: Vec<(Vec<Point>, CanonicalQuery, Outcome)> = batch
                    .par_iter()
                    .map(|combo| {
                        let points: Vec<Point> =
                            combo.iter().map(|&k| grid.points[k]).collect();
                        let query = CanonicalQuery::new(&points);
                        if deadline_passed(0.0) {
                            return (points, query, Outcome::AfterDeadline);
                        }
                        if opts.memoization && level > 0 {
                            if let Some(hit) = store.lookup_visible(&query, Some(level), visible)
                            {
                                return (points, query, Outcome::MemoHit(hit.error));
                            }
                        }
                        if opts.skipping
                            && store.should_skip_visible(
                                &query,
                                best_before,
                                opts.bad_factor,
                                visible,
                            )
                        {
                            return (points, query, Outcome::Skipped);
                        }
                        let e = candidate_error(&points, &grid);
                        (points, query, Outcome::Evaluated(e))
                    })
                    .collect();

                for (points, query, outcome) in outcomes {
                    match outcome {
                        Outcome::Evaluated(e) => {
                            trace.evaluated += 1;
                            let best_now =
                                incumbent.as_ref().map_or(f64::INFINITY, |i| i.error);
                            let verdict = if e >= opts.bad_factor * best_now {
                                Verdict::Bad
                            } else {
                                Verdict::Good
                            };
                            if opts.memoization || opts.skipping {
                                store.insert(MemoRecord::new(
                                    Placement::new(points.clone()),
                                    e,
                                    verdict,
                                    level,
                                ));
                            }
                            let improves = incumbent
                                .as_ref()
                                .map_or(true, |inc| inc.improves(e, &query.canonical, &points));
                            if improves {
                                incumbent = Some(Incumbent {
                                    raw: points,
                                    canonical: query.canonical,
                                    error: e,
                                });
                            }
                        }
                        Outcome::MemoHit(e) => {
                            trace.memo_hits += 1;
                            let improves = incumbent
                                .as_ref()
                                .map_or(true, |inc| inc.improves(e, &query.canonical, &points));
                            if improves {
                                incumbent = Some(Incumbent {
                                    raw: points,
                                    canonical: query.canonical,
                                    error: e,
                                });
                            }
                        }
                        Outcome::Skipped => trace.skipped += 1,
                        Outcome::AfterDeadline => deadline_hit = true,
                    }
                }
                store.rebuild_index();
                if deadline_hit || deadline_passed(0.0) {
                    deadline_hit = true;
                    break;
                }
            }
        }
        trace.best_objective_m = incumbent.as_ref().map_or(f64::INFINITY, |i| i.error);
        trace.elapsed_s = level_start.elapsed().as_secs_f64();
        levels.push(trace);
        intl /= 2.0;
        level += 1;
    }

    let best = incumbent.ok_or(OptimizerError::NoCandidates)?;

    // 6. apply the pattern to the rest of the map
    let mut tiles_kept = 0usize;
    let mut tiles_dropped = 0usize;
    let placement = if whole_map {
        Placement::new(best.raw.clone())
    } else {
        let all_tiles = tile_pattern(map, &region);
        let mut kept: Vec<Region> = Vec::new();
        for tile in all_tiles {
            if overlap_fraction(&tile, map) >= 1.0 / 3.0 - 1e-9 {
                kept.push(tile);
            } else {
                tiles_dropped += 1;
            }
        }
        tiles_kept = kept.len();
        let tiling = PatternTiling { area: region, pattern: best.raw.clone(), tiles: kept };
        let mut tiles = boundary_processed_tiles(map, &store, &tiling);
        if !map.walls().is_empty() {
            let contour = model.coverage_contour(opts.adapt_threshold_dbm);
            if contour < region.radius() {
                for t in &mut tiles {
                    let (shrunk, moved) =
                        adapt_area(&t.region, model, opts.adapt_threshold_dbm, &t.beacons);
                    t.region = shrunk;
                    t.beacons = moved;
                }
            }
        }
        let mut locations: Vec<Point> = tiles.into_iter().flat_map(|t| t.beacons).collect();
        if inside_only {
            locations = locations.into_iter().map(|p| map.project_inside(p)).collect();
        }
        Placement::new(locations)
    };

    // 7. full-map report
    let eval_interval = opts
        .eval_interval_m
        .unwrap_or_else(|| (map.area().sqrt() / 15.0).max(0.5));
    let report = evaluate_error(
        map,
        &placement,
        &sample_map(map, eval_interval)?,
        &config.localizer,
        model,
        coll,
        config.seed,
    )?;

    let trace = SearchTrace {
        levels,
        wall_time_s: started.elapsed().as_secs_f64(),
        deadline_hit,
        delta_p_acc_m: delta_p,
        t_eval_s: t_eval,
        area_m2: sizing.area_m2,
        n_in_area,
        whole_map,
        tiles_kept,
        tiles_dropped,
    };
    Ok(PlacementOutcome { placement, report, trace })
}

/// One tile (or the original area) with its beacons after boundary handling.
#[derive(Debug, Clone)]
pub struct AssembledTile {
    pub region: Region,
    pub beacons: Vec<Point>,
}

/// Boundary handling per tile: with `AllowOutside` every copy is kept as-is;
/// otherwise a tile whose copy pokes outside is replaced by the lowest-error
/// memorized record that fits entirely inside, falling back to projecting
/// each outer beacon to the nearest boundary point.
pub fn boundary_processed_tiles(
    map: &Map,
    store: &MemoStore,
    tiling: &PatternTiling,
) -> Vec<AssembledTile> {
    let area_center = tiling.area.center();
    let mut out =
        vec![AssembledTile { region: tiling.area, beacons: tiling.pattern.clone() }];
    for tile in &tiling.tiles {
        let offset = tile.center() - area_center;
        let moved: Vec<Point> = tiling.pattern.iter().map(|&p| p + offset).collect();
        let beacons = match map.policy() {
            BoundaryPolicy::AllowOutside => moved,
            BoundaryPolicy::InsideOnly => {
                if moved.iter().all(|p| map.contains(p)) {
                    moved
                } else if let Some(rec) = store.best_record_inside(map, offset) {
                    rec.raw.locations.iter().map(|&p| p + offset).collect()
                } else {
                    moved.into_iter().map(|p| map.project_inside(p)).collect()
                }
            }
        };
        out.push(AssembledTile { region: *tile, beacons });
    }
    out
}

/// The flattened boundary-processed placement: the in-area pattern first,
/// then each kept tile's beacons in tile order.
pub fn processing_boundary(map: &Map, store: &MemoStore, tiling: &PatternTiling) -> Placement {
    Placement::new(
        boundary_processed_tiles(map, store, tiling)
            .into_iter()
            .flat_map(|t| t.beacons)
            .collect(),
    )
}

/// Shrink a region to the coverage contour of the model at `threshold_dbm`
/// and remap beacons by interpolating their normalized coordinates from the
/// old bounding box to the new one. Identity when the contour already
/// reaches the region radius.
pub fn adapt_area(
    region: &Region,
    model: &SignalModel,
    threshold_dbm: f64,
    beacons: &[Point],
) -> (Region, Vec<Point>) {
    let contour = model.coverage_contour(threshold_dbm);
    let radius = region.radius();
    if contour >= radius {
        return (*region, beacons.to_vec());
    }
    let f = contour / radius;
    let c = region.center();
    let moved = beacons
        .iter()
        .map(|b| Point::new(c.x + (b.x - c.x) * f, c.y + (b.y - c.y) * f))
        .collect();
    (region.scaled(f), moved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundaryPolicy;

    #[test]
    fn combinations_enumerate_lexicographically() {
        let all: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(
            all,
            vec![
                vec![0, 1],
                vec![0, 2],
                vec![0, 3],
                vec![1, 2],
                vec![1, 3],
                vec![2, 3]
            ]
        );
        assert_eq!(Combinations::new(3, 5).count(), 0);
        assert_eq!(Combinations::new(36, 3).count(), 7140);
    }

    #[test]
    fn sizing_reproduces_the_286_combination_fixture() {
        // densities that force 13 sample points and 3 nodes at the sized area
        let map = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
        let n_beacons = 6; // d_b = 6/900: 3 nodes at S = 450
        let delta_p = (450.0f64 / 13.0).sqrt(); // d_s: 13 points at S = 450
        let t_eval = 1e-3;
        // C(13,3) = 286 feasible, C(14,4) = 1001 not: threshold at 500 evals
        let budget = Budget { t_acc_s: 0.5 * 500.0 * t_eval, delta_e_acc_m: 1.0, alpha: 0.5 };
        let sizing = selected_area_from_delta_p(
            &map,
            n_beacons,
            delta_p,
            &budget,
            t_eval,
            RegionShape::Circle,
        )
        .unwrap();
        assert_eq!(sizing.sample_points, 13);
        assert_eq!(sizing.nodes, 3);
        assert_eq!(sizing.combinations, Some(286));
        // the returned size is maximal: one more square meter busts a count
        let s = sizing.area_m2;
        assert!(s <= 450.0 + 1e-6);
        assert!(450.0 - s < 1.0, "sized area {s} not near the slab edge");
    }

    #[test]
    fn sizing_caps_at_map_area_under_generous_budget() {
        let map = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
        let g = DisplacementErrorModel::linear(1.0, 0.0, map.diameter());
        let budget = Budget::new(1e6, 5.0);
        let sizing =
            selected_area(&map, 3, &g, &budget, 1e-4, RegionShape::Circle).unwrap();
        assert!(sizing.capped_at_map);
        assert!((sizing.area_m2 - 900.0).abs() < 1e-9);
        assert_eq!(sizing.sample_points, 36); // 900 / 25
        assert_eq!(sizing.nodes, 3);
    }

    #[test]
    fn sizing_rejects_hopeless_budget() {
        let map = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
        let g = DisplacementErrorModel::linear(1.0, 0.0, map.diameter());
        let budget = Budget { t_acc_s: 1e-9, delta_e_acc_m: 5.0, alpha: 0.5 };
        assert!(matches!(
            selected_area(&map, 3, &g, &budget, 1.0, RegionShape::Circle),
            Err(OptimizerError::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn single_node_budget_floor_case() {
        // budget only fits the minimal configuration: expect 1 node area
        let map = Map::rectangle(100.0, 100.0, BoundaryPolicy::InsideOnly);
        let g = DisplacementErrorModel::linear(1.0, 0.0, map.diameter());
        let t_eval = 1.0;
        let budget = Budget { t_acc_s: 1.6, delta_e_acc_m: 5.0, alpha: 0.5 };
        let sizing = selected_area(&map, 10, &g, &budget, t_eval, RegionShape::Circle).unwrap();
        assert_eq!(sizing.nodes, 1);
        assert!(sizing.sample_points <= 3);
    }

    #[test]
    fn adapt_area_identity_when_contour_reaches_radius() {
        let model = SignalModel::synthetic(-40.0, 2.0, 1.0, 0.0); // contour(-70) ~ 31.6
        let region = Region::circle(Point::new(0.0, 0.0), 10.0);
        let beacons = vec![Point::new(3.0, 4.0)];
        let (r2, b2) = adapt_area(&region, &model, -70.0, &beacons);
        assert_eq!(r2, region);
        assert_eq!(b2, beacons);
    }

    #[test]
    fn adapt_area_halving_radius_halves_offsets() {
        // contour(-70) = 10^(30/30) = 10; radius 20 -> factor 0.5
        let model = SignalModel::synthetic(-40.0, 3.0, 1.0, 0.0);
        let region = Region::circle(Point::new(5.0, 5.0), 20.0);
        let beacons = vec![Point::new(13.0, 5.0), Point::new(5.0, -3.0)];
        let (r2, b2) = adapt_area(&region, &model, -70.0, &beacons);
        assert!((r2.radius() - 10.0).abs() < 1e-9);
        assert!((b2[0].x - 9.0).abs() < 1e-9 && (b2[0].y - 5.0).abs() < 1e-9);
        assert!((b2[1].x - 5.0).abs() < 1e-9 && (b2[1].y - 1.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_identity_cases() {
        let map = Map::rectangle(40.0, 40.0, BoundaryPolicy::AllowOutside);
        let store = MemoStore::new(1.0, 2.0).unwrap();
        let area = Region::circle(Point::new(20.0, 20.0), 8.0);
        let tiling = PatternTiling {
            area,
            pattern: vec![Point::new(18.0, 20.0), Point::new(22.0, 20.0)],
            tiles: vec![area.translated(Point::new(3f64.sqrt() * 8.0, 0.0))],
        };
        // AllowOutside: copies kept verbatim even if they poke out
        let p = processing_boundary(&map, &store, &tiling);
        assert_eq!(p.len(), 4);
        assert!(p.locations[2].distance(&Point::new(18.0 + 3f64.sqrt() * 8.0, 20.0)) < 1e-9);
    }

    #[test]
    fn boundary_substitutes_stored_inside_record() {
        let map = Map::rectangle(40.0, 20.0, BoundaryPolicy::InsideOnly);
        let mut store = MemoStore::new(1.0, 2.0).unwrap();
        // pattern pokes above the top edge when copied upward; a stored
        // all-inside record with low error should be substituted
        let area = Region::circle(Point::new(20.0, 10.0), 6.0);
        let pattern = vec![Point::new(20.0, 15.0), Point::new(20.0, 5.0)];
        let inside_rec = Placement::new(vec![Point::new(18.0, 9.0), Point::new(22.0, 9.0)]);
        store.insert(MemoRecord::new(inside_rec, 0.7, Verdict::Good, 0));
        store.rebuild_index();
        let up = Point::new(0.0, 1.5 * 6.0);
        let right = Point::new(3f64.sqrt() * 6.0, 0.0);
        let tiling = PatternTiling {
            area,
            pattern: pattern.clone(),
            tiles: vec![area.translated(up), area.translated(right)],
        };
        let tiles = boundary_processed_tiles(&map, &store, &tiling);
        // tile 1 (shifted up): pattern would reach y = 24 -> substituted
        assert_eq!(tiles[1].beacons, vec![Point::new(18.0, 18.0), Point::new(22.0, 18.0)]);
        // tile 2 (shifted right): fully inside -> plain copy
        assert_eq!(tiles[2].beacons[0].y, 15.0);
    }

    #[test]
    fn boundary_projects_when_no_record_fits() {
        let map = Map::rectangle(40.0, 20.0, BoundaryPolicy::InsideOnly);
        let store = MemoStore::new(1.0, 2.0).unwrap();
        let area = Region::circle(Point::new(20.0, 10.0), 6.0);
        let pattern = vec![Point::new(20.0, 15.0)];
        let up = Point::new(0.0, 9.0);
        let tiling =
            PatternTiling { area, pattern, tiles: vec![area.translated(up)] };
        let tiles = boundary_processed_tiles(&map, &store, &tiling);
        // 15 + 9 = 24 is above the map; projected back to y = 20
        assert_eq!(tiles[1].beacons, vec![Point::new(20.0, 20.0)]);
    }
}
