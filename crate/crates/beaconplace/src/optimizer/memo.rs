//! Memoization of evaluated beacon distributions: translation-normalized
//! canonical forms, similarity lookup by optimal assignment cost, and the
//! bad-neighborhood skipping test.

use crate::evaluation::Placement;
use crate::geometry::Point;
use crate::numeric::min_cost_assignment;

/// Translation-normalize a distribution: translate the lexicographically
/// least beacon to the origin, then sort points lexicographically.
pub fn canonical_form(points: &[Point]) -> Vec<Point> {
    let anchor = points
        .iter()
        .copied()
        .min_by(|a, b| a.lex_cmp(b))
        .expect("canonical_form of empty distribution");
    let mut out: Vec<Point> = points.iter().map(|&p| p - anchor).collect();
    out.sort_by(|a, b| a.lex_cmp(b));
    out
}

/// Whether a memorized distribution looked worth keeping when recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Good,
    Bad,
}

/// One memorized (distribution, error) result.
#[derive(Debug, Clone)]
pub struct MemoRecord {
    pub canonical: Vec<Point>,
    pub raw: Placement,
    pub error: f64,
    pub verdict: Verdict,
    /// Refinement level the record was evaluated at (0 = coarsest).
    pub level: u32,
    centroid: Point,
    sorted_y: Vec<f64>,
}

impl MemoRecord {
    pub fn new(raw: Placement, error: f64, verdict: Verdict, level: u32) -> Self {
        let canonical = canonical_form(&raw.locations);
        let centroid = centroid_of(&canonical);
        let sorted_y = sorted_ys(&canonical);
        Self { canonical, raw, error, verdict, level, centroid, sorted_y }
    }
}

fn centroid_of(points: &[Point]) -> Point {
    let n = points.len() as f64;
    Point::new(
        points.iter().map(|p| p.x).sum::<f64>() / n,
        points.iter().map(|p| p.y).sum::<f64>() / n,
    )
}

fn sorted_ys(points: &[Point]) -> Vec<f64> {
    let mut ys: Vec<f64> = points.iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    ys
}

/// Candidate-side precomputation for repeated store queries.
#[derive(Debug, Clone)]
pub struct CanonicalQuery {
    pub canonical: Vec<Point>,
    centroid: Point,
    sorted_y: Vec<f64>,
}

impl CanonicalQuery {
    pub fn new(points: &[Point]) -> Self {
        let canonical = canonical_form(points);
        let centroid = centroid_of(&canonical);
        let sorted_y = sorted_ys(&canonical);
        Self { canonical, centroid, sorted_y }
    }
}

/// Cheap lower bounds on the assignment cost, used to dodge the O(n^3)
/// solve: the centroid shift bound and the two sorted-marginal bounds.
fn cost_lower_bound(q: &CanonicalQuery, r: &MemoRecord) -> f64 {
    let n = q.canonical.len() as f64;
    let centroid_lb = n * q.centroid.distance(&r.centroid);
    // canonical forms are lex-sorted, so x coordinates are already sorted
    let x_lb: f64 = q
        .canonical
        .iter()
        .zip(&r.canonical)
        .map(|(a, b)| (a.x - b.x).abs())
        .sum();
    let y_lb: f64 = q
        .sorted_y
        .iter()
        .zip(&r.sorted_y)
        .map(|(a, b)| (a - b).abs())
        .sum();
    centroid_lb.max(x_lb).max(y_lb)
}

/// Exact minimum-cost matching between two equal-size canonical point sets.
pub fn assignment_cost(a: &[Point], b: &[Point]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|p| b.iter().map(|q| p.distance(q)).collect())
        .collect();
    min_cost_assignment(&cost).1
}

/// A successful similarity lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoHit {
    pub error: f64,
    pub cost: f64,
    pub record_index: usize,
}

/// Memorized (distribution, error) records with the two similarity
/// thresholds. `t_skp > t_mem` is enforced at construction: reused results
/// must be more trustworthy than results used merely to condemn a region.
#[derive(Debug, Clone)]
pub struct MemoStore {
    records: Vec<MemoRecord>,
    pub t_mem: f64,
    pub t_skp: f64,
    pub min_witnesses: usize,
    /// (canonical centroid x, record index), sorted; rebuilt lazily.
    index: Vec<(f64, usize)>,
    index_dirty: bool,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("t_skp ({t_skp}) must exceed t_mem ({t_mem})")]
pub struct ThresholdOrdering {
    pub t_mem: f64,
    pub t_skp: f64,
}

impl MemoStore {
    pub fn new(t_mem: f64, t_skp: f64) -> Result<Self, ThresholdOrdering> {
        if !(t_skp > t_mem) || !(t_mem >= 0.0) {
            return Err(ThresholdOrdering { t_mem, t_skp });
        }
        Ok(Self {
            records: Vec::new(),
            t_mem,
            t_skp,
            min_witnesses: 3,
            index: Vec::new(),
            index_dirty: false,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }
    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
    pub fn records(&self) -> &[MemoRecord] {
        &self.records
    }

    pub fn insert(&mut self, record: MemoRecord) {
        self.records.push(record);
        self.index_dirty = true;
    }

    /// Refresh the centroid index after a batch of inserts.
    pub fn rebuild_index(&mut self) {
        if !self.index_dirty {
            return;
        }
        self.index = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.centroid.x, i))
            .collect();
        self.index
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.index_dirty = false;
    }

    /// Record indices whose assignment cost to the query could be within
    /// `threshold`, by the centroid-x window. `visible` bounds the records
    /// considered (snapshot semantics for deterministic parallel batches).
    fn window<'a>(
        &'a self,
        q: &'a CanonicalQuery,
        threshold: f64,
        visible: usize,
    ) -> impl Iterator<Item = usize> + 'a {
        assert!(!self.index_dirty, "rebuild_index before querying");
        let n = q.canonical.len() as f64;
        let half = threshold / n + 1e-12;
        let lo = self.index.partition_point(|e| e.0 < q.centroid.x - half);
        self.index[lo..]
            .iter()
            .take_while(move |e| e.0 <= q.centroid.x + half)
            .map(|e| e.1)
            .filter(move |&i| i < visible)
    }

    /// Similarity lookup: the memorized error of the record with the
    /// smallest assignment cost within `t_mem` (ties by insertion order),
    /// optionally restricted to records from levels before `max_level`.
    pub fn lookup(&self, query: &CanonicalQuery, max_level: Option<u32>) -> Option<MemoHit> {
        self.lookup_visible(query, max_level, self.records.len())
    }

    pub fn lookup_visible(
        &self,
        query: &CanonicalQuery,
        max_level: Option<u32>,
        visible: usize,
    ) -> Option<MemoHit> {
        let mut best: Option<MemoHit> = None;
        for i in self.window(query, self.t_mem, visible) {
            let r = &self.records[i];
            if r.canonical.len() != query.canonical.len() {
                continue;
            }
            if let Some(max) = max_level {
                if r.level >= max {
                    continue;
                }
            }
            if cost_lower_bound(query, r) > self.t_mem {
                continue;
            }
            let cost = assignment_cost(&query.canonical, &r.canonical);
            if cost > self.t_mem {
                continue;
            }
            let better = match best {
                None => true,
                Some(b) => cost < b.cost || (cost == b.cost && i < b.record_index),
            };
            if better {
                best = Some(MemoHit { error: r.error, cost, record_index: i });
            }
        }
        best
    }

    /// True iff at least `min_witnesses` records lie within assignment cost
    /// `t_skp` of the candidate and every one of them is bad (error at least
    /// `bad_factor * best_error`).
    pub fn should_skip(&self, query: &CanonicalQuery, best_error: f64, bad_factor: f64) -> bool {
        self.should_skip_visible(query, best_error, bad_factor, self.records.len())
    }

    pub fn should_skip_visible(
        &self,
        query: &CanonicalQuery,
        best_error: f64,
        bad_factor: f64,
        visible: usize,
    ) -> bool {
        debug_assert!(bad_factor > 1.0);
        if !best_error.is_finite() {
            return false;
        }
        let mut bad_witnesses = 0usize;
        for i in self.window(query, self.t_skp, visible) {
            let r = &self.records[i];
            if r.canonical.len() != query.canonical.len() {
                continue;
            }
            if cost_lower_bound(query, r) > self.t_skp {
                continue;
            }
            if assignment_cost(&query.canonical, &r.canonical) > self.t_skp {
                continue;
            }
            if r.error < bad_factor * best_error {
                return false; // a good neighbor blocks skipping
            }
            bad_witnesses += 1;
        }
        bad_witnesses >= self.min_witnesses
    }

    /// Lowest-error record whose beacons, translated by `offset`, all fall
    /// inside the map. Ties by insertion order.
    pub fn best_record_inside(
        &self,
        map: &crate::geometry::Map,
        offset: Point,
    ) -> Option<&MemoRecord> {
        let mut best: Option<&MemoRecord> = None;
        for r in &self.records {
            if let Some(b) = best {
                if r.error >= b.error {
                    continue;
                }
            }
            if r.raw.locations.iter().all(|&p| map.contains(&(p + offset))) {
                best = Some(r);
            }
        }
        best
    }
}
