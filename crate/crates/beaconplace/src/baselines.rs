//! The four reference placement methods: best-of-k random draws, randomized
//! greedy k-coverage (RKC), a uniform lattice, and a deterministic
//! triangular-lattice k-cover (CERACC).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::{
    evaluate_error, uniform_point_in, EvalError, Objective, Placement,
};
use crate::geometry::{GeometryError, Map, Point, SampleGrid};
use crate::localizers::LocalizerConfig;
use crate::numeric::splitmix64;
use crate::signal::{SignalModel, SurveyCollection};

/// Everything needed to score a candidate placement.
pub struct EvalContext<'a> {
    pub map: &'a Map,
    pub localizer: &'a LocalizerConfig,
    pub model: &'a SignalModel,
    pub coll: &'a SurveyCollection,
    pub grid: &'a SampleGrid,
    pub objective: Objective,
    pub seed: u64,
}

impl EvalContext<'_> {
    pub fn score(&self, placement: &Placement) -> Result<f64, EvalError> {
        let report = evaluate_error(
            self.map,
            placement,
            self.grid,
            self.localizer,
            self.model,
            self.coll,
            self.seed,
        )?;
        Ok(self.objective.of(&report))
    }
}

/// Which reference method to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Rkc,
    Uniform,
    Ceracc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub restarts: usize,
    /// From the coverage contour when absent.
    pub coverage_radius_m: Option<f64>,
    pub k_cover: usize,
}

impl BaselineConfig {
    pub fn new(kind: BaselineKind) -> Self {
        Self { kind, restarts: 3, coverage_radius_m: None, k_cover: 1 }
    }
}

/// Best of `restarts` uniform draws by evaluated error.
pub fn place_random(
    ctx: &EvalContext,
    n: usize,
    restarts: usize,
    seed: u64,
) -> Result<Placement, EvalError> {
    let restarts = restarts.max(1);
    let mut best: Option<(f64, Placement)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ r as u64));
        let placement =
            Placement::new((0..n).map(|_| uniform_point_in(ctx.map, &mut rng)).collect());
        let score = ctx.score(&placement)?;
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, placement));
        }
    }
    Ok(best.expect("restarts >= 1").1)
}

/// RKC result; `complete` is false when n nodes could not k-cover the grid
/// and the best partial cover is returned instead.
#[derive(Debug, Clone)]
pub struct RkcPlacement {
    pub placement: Placement,
    pub complete: bool,
}

/// Randomized greedy set cover: repeatedly place a node on the candidate
/// covering the most under-covered grid points within the coverage radius,
/// picking uniformly among the top three candidates; best of `restarts` runs
/// by evaluated error.
pub fn place_rkc(
    ctx: &EvalContext,
    n: usize,
    coverage_radius_m: f64,
    k_cover: usize,
    restarts: usize,
    seed: u64,
) -> Result<RkcPlacement, EvalError> {
    let restarts = restarts.max(1);
    let candidates = &ctx.grid.points;
    let mut best: Option<(f64, RkcPlacement)> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ (0x5bd1 + r as u64)));
        let mut cover = vec![0usize; candidates.len()];
        let mut chosen: Vec<Point> = Vec::new();
        while chosen.len() < n && cover.iter().any(|&c| c < k_cover) {
            let mut gains: Vec<(usize, usize)> = candidates
                .iter()
                .enumerate()
                .map(|(ci, c)| {
                    let gain = candidates
                        .iter()
                        .zip(&cover)
                        .filter(|(p, &cv)| cv < k_cover && c.distance(p) <= coverage_radius_m)
                        .count();
                    (gain, ci)
                })
                .collect();
            gains.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            if gains[0].0 == 0 {
                break; // nothing left in range of any candidate
            }
            let top = gains.iter().take(3).filter(|g| g.0 > 0).count();
            let pick = gains[rng.random_range(0..top)].1;
            let node = candidates[pick];
            for (p, cv) in candidates.iter().zip(cover.iter_mut()) {
                if node.distance(p) <= coverage_radius_m {
                    *cv += 1;
                }
            }
            chosen.push(node);
        }
        let complete = cover.iter().all(|&c| c >= k_cover);
        let placement = Placement::new(chosen);
        let score = ctx.score(&placement)?;
        if best.as_ref().is_none_or(|(s, _)| score < *s) {
            best = Some((score, RkcPlacement { placement, complete }));
        }
    }
    Ok(best.expect("restarts >= 1").1)
}

/// Nominal lattice spacing placing n nodes over the given area.
pub fn uniform_spacing(area_m2: f64, n: usize) -> f64 {
    (area_m2 / n as f64).sqrt()
}

/// Square lattice at spacing sqrt(area/n) anchored on the centroid, clipped
/// to the map, nearest-to-centroid points kept. The spacing contracts
/// slightly when clipping leaves fewer than n points.
pub fn place_uniform(map: &Map, n: usize) -> Result<Placement, GeometryError> {
    assert!(n >= 1);
    let mut spacing = uniform_spacing(map.area(), n);
    for _ in 0..200 {
        if let Ok(grid) = crate::geometry::sample_map(map, spacing) {
            if grid.len() >= n {
                return Ok(nearest_to_centroid(map, grid.points, n));
            }
        }
        spacing *= 0.9;
    }
    Err(GeometryError::EmptyGrid)
}

fn nearest_to_centroid(map: &Map, mut points: Vec<Point>, n: usize) -> Placement {
    let c = map.centroid();
    points.sort_by(|a, b| {
        a.distance(&c)
            .total_cmp(&b.distance(&c))
            .then(a.y.total_cmp(&b.y))
            .then(a.x.total_cmp(&b.x))
    });
    points.truncate(n);
    points.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    Placement::new(points)
}

/// Deterministic triangular lattice sized for k-coverage: column spacing
/// s = sqrt(3) * r / sqrt(k), row spacing (sqrt(3)/2) s, alternate rows
/// offset s/2; clipped to the map and truncated to the n nodes nearest the
/// centroid.
pub fn place_ceracc(map: &Map, n: usize, coverage_radius_m: f64, k_cover: usize) -> Placement {
    assert!(n >= 1 && k_cover >= 1);
    let s = 3f64.sqrt() * coverage_radius_m / (k_cover as f64).sqrt();
    let row = 3f64.sqrt() / 2.0 * s;
    let c = map.centroid();
    let b = map.bounds();
    let mut points: Vec<Point> = Vec::new();
    let j_min = ((b.min.y - c.y) / row).floor() as i64 - 1;
    let j_max = ((b.max.y - c.y) / row).ceil() as i64 + 1;
    for j in j_min..=j_max {
        let y = c.y + j as f64 * row;
        let off = if j.rem_euclid(2) == 1 { s / 2.0 } else { 0.0 };
        let i_min = ((b.min.x - c.x - off) / s).floor() as i64 - 1;
        let i_max = ((b.max.x - c.x - off) / s).ceil() as i64 + 1;
        for i in i_min..=i_max {
            let p = Point::new(c.x + off + i as f64 * s, y);
            if map.contains(&p) {
                points.push(p);
            }
        }
    }
    nearest_to_centroid(map, points, n)
}

/// Dispatch one of the four reference methods.
pub fn place_baseline(
    ctx: &EvalContext,
    config: &BaselineConfig,
    n: usize,
    seed: u64,
) -> Result<Placement, EvalError> {
    let radius = config
        .coverage_radius_m
        .unwrap_or_else(|| ctx.model.coverage_contour(-70.0));
    match config.kind {
        BaselineKind::Random => place_random(ctx, n, config.restarts, seed),
        BaselineKind::Rkc => Ok(place_rkc(ctx, n, radius, config.k_cover, config.restarts, seed)?
            .placement),
        BaselineKind::Uniform => {
            Ok(place_uniform(ctx.map, n).expect("uniform lattice fits the map"))
        }
        BaselineKind::Ceracc => Ok(place_ceracc(ctx.map, n, radius, config.k_cover)),
    }
}
