//! Maps, regions, sampling lattices and the point/segment predicates the rest
//! of the crate builds on.
//!
//! A [`Map`] is a simple polygon with zero-thickness attenuating wall segments
//! inside it. Search areas are [`Region`]s (circles or regular hexagons);
//! sampling lattices are axis-aligned square grids centered on the region (or
//! map) so that tiling a pattern stays translation-invariant.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::halton;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polygon coordinates must be finite")]
    NonFiniteCoordinate,
    #[error("polygon is self-intersecting")]
    SelfIntersecting,
    #[error("polygon area must be positive")]
    DegenerateArea,
    #[error("wall segment lies outside the boundary's bounding box")]
    WallOutsideBounds,
    #[error("sampling interval must be positive, got {0}")]
    BadInterval(f64),
    #[error("no lattice point falls inside the region")]
    EmptyGrid,
}

/// A location in map coordinates, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Lexicographic (x, then y) total order; no NaNs by construction.
    pub fn lex_cmp(&self, other: &Point) -> std::cmp::Ordering {
        self.x
            .total_cmp(&other.x)
            .then(self.y.total_cmp(&other.y))
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Whether beacons may end up outside the map boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    AllowOutside,
    InsideOnly,
}

/// A zero-thickness obstacle segment; each crossing costs `attenuation_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wall {
    pub a: Point,
    pub b: Point,
    pub attenuation_db: f64,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point,
    pub max: Point,
}

impl Bounds {
    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }
    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }
    pub fn center(&self) -> Point {
        Point::new((self.min.x + self.max.x) / 2.0, (self.min.y + self.max.y) / 2.0)
    }
    fn contains(&self, p: &Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }
}

/// The bounded deployment region: a simple polygon, its walls and the
/// boundary policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Map {
    boundary: Vec<Point>,
    walls: Vec<Wall>,
    policy: BoundaryPolicy,
    area: f64,
    centroid: Point,
    bounds: Bounds,
    diameter: f64,
}

impl Map {
    pub fn new(
        boundary: Vec<Point>,
        walls: Vec<Wall>,
        policy: BoundaryPolicy,
    ) -> Result<Self, GeometryError> {
        if boundary.len() < 3 {
            return Err(GeometryError::TooFewVertices(boundary.len()));
        }
        if !boundary.iter().all(Point::is_finite)
            || !walls.iter().all(|w| w.a.is_finite() && w.b.is_finite())
        {
            return Err(GeometryError::NonFiniteCoordinate);
        }
        if is_self_intersecting(&boundary) {
            return Err(GeometryError::SelfIntersecting);
        }
        let signed = signed_area(&boundary);
        if signed.abs() < 1e-12 {
            return Err(GeometryError::DegenerateArea);
        }
        let mut boundary = boundary;
        if signed < 0.0 {
            boundary.reverse(); // normalize to counter-clockwise
        }
        let area = signed.abs();
        let centroid = polygon_centroid(&boundary, area);
        let bounds = bounds_of(&boundary);
        for w in &walls {
            if !bounds.contains(&w.a) || !bounds.contains(&w.b) {
                return Err(GeometryError::WallOutsideBounds);
            }
        }
        let mut diameter: f64 = 0.0;
        for i in 0..boundary.len() {
            for j in i + 1..boundary.len() {
                diameter = diameter.max(boundary[i].distance(&boundary[j]));
            }
        }
        Ok(Self { boundary, walls, policy, area, centroid, bounds, diameter })
    }

    /// Axis-aligned rectangle helper used throughout the tests and demos.
    pub fn rectangle(width: f64, height: f64, policy: BoundaryPolicy) -> Self {
        Map::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(width, 0.0),
                Point::new(width, height),
                Point::new(0.0, height),
            ],
            Vec::new(),
            policy,
        )
        .expect("rectangle is a valid polygon")
    }

    pub fn with_walls(mut self, walls: Vec<Wall>) -> Result<Self, GeometryError> {
        for w in &walls {
            if !self.bounds.contains(&w.a) || !self.bounds.contains(&w.b) {
                return Err(GeometryError::WallOutsideBounds);
            }
        }
        self.walls = walls;
        Ok(self)
    }

    pub fn boundary(&self) -> &[Point] {
        &self.boundary
    }
    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }
    pub fn policy(&self) -> BoundaryPolicy {
        self.policy
    }
    pub fn area(&self) -> f64 {
        self.area
    }
    pub fn centroid(&self) -> Point {
        self.centroid
    }
    pub fn bounds(&self) -> Bounds {
        self.bounds
    }
    /// Largest vertex-to-vertex distance; the error penalty for uncoverable
    /// targets and the clamp ceiling for displacement budgets.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Point-in-polygon, boundary-inclusive.
    pub fn contains(&self, p: &Point) -> bool {
        if self.on_boundary(p, 1e-9) {
            return true;
        }
        point_in_polygon(&self.boundary, p)
    }

    fn on_boundary(&self, p: &Point, tol: f64) -> bool {
        edges(&self.boundary).any(|(a, b)| point_segment_distance(p, &a, &b) <= tol)
    }

    /// Nearest inside-or-on-boundary point; identity for inside points.
    pub fn project_inside(&self, p: Point) -> Point {
        if self.contains(&p) {
            return p;
        }
        let mut best = self.boundary[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in edges(&self.boundary) {
            let q = closest_point_on_segment(&p, &a, &b);
            let d = p.distance(&q);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Number of wall segments the open segment p..q crosses.
    pub fn walls_crossed(&self, p: &Point, q: &Point) -> u32 {
        self.walls
            .iter()
            .filter(|w| segments_intersect(p, q, &w.a, &w.b))
            .count() as u32
    }

    /// Total attenuation along the segment p..q, in dB.
    pub fn attenuation_along(&self, p: &Point, q: &Point) -> f64 {
        self.walls
            .iter()
            .filter(|w| segments_intersect(p, q, &w.a, &w.b))
            .map(|w| w.attenuation_db)
            .sum()
    }
}

/// The shape a selected area can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    Circle,
    Hexagon,
}

/// A circle or flat-top regular hexagon used as the selected search area and
/// as the tile applied over the rest of the map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    Circle { center: Point, radius: f64 },
    /// Flat-top regular hexagon: vertices at angles 0, 60, ..., 300 degrees.
    Hexagon { center: Point, circumradius: f64 },
}

impl Region {
    pub fn circle(center: Point, radius: f64) -> Self {
        Region::Circle { center, radius }
    }

    pub fn hexagon(center: Point, circumradius: f64) -> Self {
        Region::Hexagon { center, circumradius }
    }

    /// Region of the given shape and area, centered at `center`.
    pub fn with_area(shape: RegionShape, center: Point, area: f64) -> Self {
        match shape {
            RegionShape::Circle => {
                Region::Circle { center, radius: (area / std::f64::consts::PI).sqrt() }
            }
            RegionShape::Hexagon => {
                let r = (2.0 * area / (3.0 * 3f64.sqrt())).sqrt();
                Region::Hexagon { center, circumradius: r }
            }
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Region::Circle { center, .. } | Region::Hexagon { center, .. } => center,
        }
    }

    /// Analytic area of the shape.
    pub fn area(&self) -> f64 {
        match *self {
            Region::Circle { radius, .. } => std::f64::consts::PI * radius * radius,
            Region::Hexagon { circumradius, .. } => {
                1.5 * 3f64.sqrt() * circumradius * circumradius
            }
        }
    }

    /// Characteristic radius: circle radius or hexagon circumradius.
    pub fn radius(&self) -> f64 {
        match *self {
            Region::Circle { radius, .. } => radius,
            Region::Hexagon { circumradius, .. } => circumradius,
        }
    }

    pub fn translated(&self, offset: Point) -> Region {
        match *self {
            Region::Circle { center, radius } => {
                Region::Circle { center: center + offset, radius }
            }
            Region::Hexagon { center, circumradius } => {
                Region::Hexagon { center: center + offset, circumradius }
            }
        }
    }

    /// Same shape scaled about its center.
    pub fn scaled(&self, factor: f64) -> Region {
        match *self {
            Region::Circle { center, radius } => {
                Region::Circle { center, radius: radius * factor }
            }
            Region::Hexagon { center, circumradius } => {
                Region::Hexagon { center, circumradius: circumradius * factor }
            }
        }
    }

    pub fn shape(&self) -> RegionShape {
        match self {
            Region::Circle { .. } => RegionShape::Circle,
            Region::Hexagon { .. } => RegionShape::Hexagon,
        }
    }

    pub fn bounds(&self) -> Bounds {
        match *self {
            Region::Circle { center, radius } => Bounds {
                min: Point::new(center.x - radius, center.y - radius),
                max: Point::new(center.x + radius, center.y + radius),
            },
            Region::Hexagon { center, circumradius } => {
                let h = 3f64.sqrt() / 2.0 * circumradius;
                Bounds {
                    min: Point::new(center.x - circumradius, center.y - h),
                    max: Point::new(center.x + circumradius, center.y + h),
                }
            }
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match *self {
            Region::Circle { center, radius } => center.distance(p) <= radius + 1e-12,
            Region::Hexagon { .. } => {
                let verts = self.hexagon_vertices();
                convex_contains(&verts, p)
            }
        }
    }

    fn hexagon_vertices(&self) -> Vec<Point> {
        match *self {
            Region::Hexagon { center, circumradius } => (0..6)
                .map(|k| {
                    let ang = std::f64::consts::PI / 3.0 * k as f64;
                    Point::new(
                        center.x + circumradius * ang.cos(),
                        center.y + circumradius * ang.sin(),
                    )
                })
                .collect(),
            _ => panic!("not a hexagon"),
        }
    }

    /// Offsets to the six adjacent tiles in the covering lattice this shape
    /// tiles under (see [`tile_pattern`]).
    pub fn neighbor_offsets(&self) -> Vec<Point> {
        match *self {
            Region::Circle { radius, .. } => {
                let a = 3f64.sqrt() * radius; // lattice spacing of the covering
                vec![
                    Point::new(a, 0.0),
                    Point::new(-a, 0.0),
                    Point::new(a / 2.0, 1.5 * radius),
                    Point::new(-a / 2.0, 1.5 * radius),
                    Point::new(a / 2.0, -1.5 * radius),
                    Point::new(-a / 2.0, -1.5 * radius),
                ]
            }
            Region::Hexagon { circumradius, .. } => {
                let v = 3f64.sqrt() * circumradius;
                vec![
                    Point::new(0.0, v),
                    Point::new(0.0, -v),
                    Point::new(1.5 * circumradius, v / 2.0),
                    Point::new(1.5 * circumradius, -v / 2.0),
                    Point::new(-1.5 * circumradius, v / 2.0),
                    Point::new(-1.5 * circumradius, -v / 2.0),
                ]
            }
        }
    }
}

/// A square lattice of sample locations clipped to some domain.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    pub interval: f64,
    pub points: Vec<Point>,
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Per-axis lattice offsets: `round(extent/interval)` points (at least one),
/// symmetric about zero. Odd counts place a point on the anchor, even counts
/// straddle it by half an interval, so the lattice density tracks
/// `extent/interval` without boundary double-counting.
fn centered_axis_offsets(extent: f64, interval: f64) -> Vec<f64> {
    let k = (extent / interval).round().max(1.0) as i64;
    (0..k)
        .map(|i| (i as f64 - (k as f64 - 1.0) / 2.0) * interval)
        .collect()
}

fn lattice_over(center: Point, bounds: Bounds, interval: f64) -> impl Iterator<Item = Point> {
    let xs = centered_axis_offsets(bounds.width(), interval);
    let ys = centered_axis_offsets(bounds.height(), interval);
    ys.into_iter().flat_map(move |dy| {
        let xs = xs.clone();
        xs.into_iter()
            .map(move |dx| Point::new(center.x + dx, center.y + dy))
    })
}

/// Uniform sampling of a region: the centered square lattice clipped to it.
/// Deterministic; row-major (y, then x) point order.
pub fn sample_uniform(region: &Region, interval: f64) -> Result<SampleGrid, GeometryError> {
    if !(interval > 0.0) {
        return Err(GeometryError::BadInterval(interval));
    }
    let points: Vec<Point> = lattice_over(region.center(), region.bounds(), interval)
        .filter(|p| region.contains(p))
        .collect();
    if points.is_empty() {
        return Err(GeometryError::EmptyGrid);
    }
    Ok(SampleGrid { interval, points })
}

/// Uniform sampling of the whole map: the lattice is centered on the map
/// centroid and clipped to the polygon.
pub fn sample_map(map: &Map, interval: f64) -> Result<SampleGrid, GeometryError> {
    if !(interval > 0.0) {
        return Err(GeometryError::BadInterval(interval));
    }
    let points: Vec<Point> = lattice_over(map.centroid(), map.bounds(), interval)
        .filter(|p| map.contains(p))
        .collect();
    if points.is_empty() {
        return Err(GeometryError::EmptyGrid);
    }
    Ok(SampleGrid { interval, points })
}

/// Congruent translated copies of `area` covering what the original area
/// leaves of the map. Copies may overhang the boundary; the original position
/// is excluded; order is row-major (y, then x) for determinism.
///
/// Circles are laid out on the hexagonal covering lattice (spacing sqrt(3)*r,
/// row pitch 1.5*r) so every point of the plane is within one radius of a
/// center; hexagons tile exactly in a honeycomb.
pub fn tile_pattern(map: &Map, area: &Region) -> Vec<Region> {
    // Map points the original area does not cover; a tile is kept iff it
    // covers at least one of them.
    let scan = (map.area().sqrt() / 64.0).max(0.05);
    let remainder: Vec<Point> = match sample_map(map, scan) {
        Ok(grid) => grid.points.into_iter().filter(|p| !area.contains(p)).collect(),
        Err(_) => Vec::new(),
    };
    if remainder.is_empty() {
        return Vec::new();
    }

    let c = area.center();
    let bounds = map.bounds();
    let mut centers: Vec<Point> = Vec::new();
    match *area {
        Region::Circle { radius, .. } => {
            let a = 3f64.sqrt() * radius;
            let row_pitch = 1.5 * radius;
            let j_min = ((bounds.min.y - radius - c.y) / row_pitch).floor() as i64;
            let j_max = ((bounds.max.y + radius - c.y) / row_pitch).ceil() as i64;
            for j in j_min..=j_max {
                let y = c.y + j as f64 * row_pitch;
                let x_off = if j.rem_euclid(2) == 1 { a / 2.0 } else { 0.0 };
                let i_min = ((bounds.min.x - radius - c.x - x_off) / a).floor() as i64;
                let i_max = ((bounds.max.x + radius - c.x - x_off) / a).ceil() as i64;
                for i in i_min..=i_max {
                    centers.push(Point::new(c.x + x_off + i as f64 * a, y));
                }
            }
        }
        Region::Hexagon { circumradius, .. } => {
            let col_pitch = 1.5 * circumradius;
            let v = 3f64.sqrt() * circumradius;
            let q_min = ((bounds.min.x - circumradius - c.x) / col_pitch).floor() as i64;
            let q_max = ((bounds.max.x + circumradius - c.x) / col_pitch).ceil() as i64;
            for q in q_min..=q_max {
                let x = c.x + q as f64 * col_pitch;
                let y_off = if q.rem_euclid(2) == 1 { v / 2.0 } else { 0.0 };
                let p_min = ((bounds.min.y - v - c.y - y_off) / v).floor() as i64;
                let p_max = ((bounds.max.y + v - c.y - y_off) / v).ceil() as i64;
                for p in p_min..=p_max {
                    centers.push(Point::new(x, c.y + y_off + p as f64 * v));
                }
            }
        }
    }
    centers.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    centers
        .into_iter()
        .filter(|t| t.distance(&c) > 1e-9) // skip the original
        .map(|t| area.translated(t - c))
        .filter(|tile| remainder.iter().any(|p| tile.contains(p)))
        .collect()
}

/// Fraction of the region's area lying inside the map, by deterministic
/// quasi-random (Halton) integration with at least 10^4 region samples.
pub fn overlap_fraction(region: &Region, map: &Map) -> f64 {
    const WANT: usize = 10_000;
    let b = region.bounds();
    let mut inside_region = 0usize;
    let mut inside_map = 0usize;
    let mut i: u64 = 1;
    // Circle/hexagon fill >= 3/4 of their bounding box, so this terminates
    // quickly; the iteration cap is pure paranoia.
    while inside_region < WANT && i < 40 * WANT as u64 {
        let p = Point::new(
            b.min.x + halton(i, 2) * b.width(),
            b.min.y + halton(i, 3) * b.height(),
        );
        if region.contains(&p) {
            inside_region += 1;
            if map.contains(&p) {
                inside_map += 1;
            }
        }
        i += 1;
    }
    if inside_region == 0 {
        return 0.0;
    }
    inside_map as f64 / inside_region as f64
}

// --- polygon / segment primitives -----------------------------------------

fn edges(poly: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..poly.len()).map(move |i| (poly[i], poly[(i + 1) % poly.len()]))
}

fn signed_area(poly: &[Point]) -> f64 {
    edges(poly).map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>() / 2.0
}

fn polygon_centroid(poly: &[Point], area: f64) -> Point {
    let mut cx = 0.0;
    let mut cy = 0.0;
    for (a, b) in edges(poly) {
        let w = a.x * b.y - b.x * a.y;
        cx += (a.x + b.x) * w;
        cy += (a.y + b.y) * w;
    }
    // `poly` is CCW here, so the signed area equals `area`.
    Point::new(cx / (6.0 * area), cy / (6.0 * area))
}

fn bounds_of(poly: &[Point]) -> Bounds {
    let mut min = poly[0];
    let mut max = poly[0];
    for p in poly {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    Bounds { min, max }
}

fn point_in_polygon(poly: &[Point], p: &Point) -> bool {
    let mut inside = false;
    for (a, b) in edges(poly) {
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn convex_contains(verts: &[Point], p: &Point) -> bool {
    // CCW vertex order; boundary counts as inside.
    for i in 0..verts.len() {
        let a = verts[i];
        let b = verts[(i + 1) % verts.len()];
        let cross = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
        if cross < -1e-9 {
            return false;
        }
    }
    true
}

fn closest_point_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let ab = *b - *a;
    let len2 = ab.x * ab.x + ab.y * ab.y;
    if len2 == 0.0 {
        return *a;
    }
    let t = (((p.x - a.x) * ab.x + (p.y - a.y) * ab.y) / len2).clamp(0.0, 1.0);
    Point::new(a.x + t * ab.x, a.y + t * ab.y)
}

fn point_segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    p.distance(&closest_point_on_segment(p, a, b))
}

fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Segment intersection, endpoints included.
pub fn segments_intersect(p1: &Point, p2: &Point, q1: &Point, q2: &Point) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on = |d: f64, a: &Point, b: &Point, c: &Point| {
        d == 0.0
            && c.x >= a.x.min(b.x)
            && c.x <= a.x.max(b.x)
            && c.y >= a.y.min(b.y)
            && c.y <= a.y.max(b.y)
    };
    on(d1, q1, q2, p1) || on(d2, q1, q2, p2) || on(d3, p1, p2, q1) || on(d4, p1, p2, q2)
}

fn is_self_intersecting(poly: &[Point]) -> bool {
    let n = poly.len();
    for i in 0..n {
        let (a1, a2) = (poly[i], poly[(i + 1) % n]);
        for j in i + 1..n {
            // skip adjacent edges (they share an endpoint)
            if j == i || (j + 1) % n == i || (i + 1) % n == j {
                continue;
            }
            let (b1, b2) = (poly[j], poly[(j + 1) % n]);
            if segments_intersect(&a1, &a2, &b1, &b2) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Map {
        Map::rectangle(1.0, 1.0, BoundaryPolicy::InsideOnly)
    }

    #[test]
    fn map_rejects_self_intersection() {
        let bowtie = vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(1.0, 0.0),
            Point::new(0.0, 1.0),
        ];
        assert_eq!(
            Map::new(bowtie, vec![], BoundaryPolicy::AllowOutside).unwrap_err(),
            GeometryError::SelfIntersecting
        );
    }

    #[test]
    fn map_rejects_wall_outside_bbox() {
        let err = unit_square()
            .with_walls(vec![Wall {
                a: Point::new(0.5, 0.5),
                b: Point::new(2.0, 0.5),
                attenuation_db: 3.0,
            }])
            .unwrap_err();
        assert_eq!(err, GeometryError::WallOutsideBounds);
    }

    #[test]
    fn map_area_and_centroid() {
        let m = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
        assert!((m.area() - 900.0).abs() < 1e-9);
        assert!((m.centroid().x - 15.0).abs() < 1e-9);
        assert!((m.centroid().y - 15.0).abs() < 1e-9);
        assert!((m.diameter() - (1800f64).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn tiny_circle_grid_is_single_center_point() {
        let region = Region::circle(Point::new(0.0, 0.0), 1.0);
        let grid = sample_uniform(&region, 10.0).unwrap();
        assert_eq!(grid.points, vec![Point::new(0.0, 0.0)]);
    }

    #[test]
    fn square_map_interval_5_gives_36_points() {
        let m = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
        let grid = sample_map(&m, 5.0).unwrap();
        assert_eq!(grid.len(), 36);
        // half-offset lattice: 2.5, 7.5, ..., 27.5 per axis
        assert!(grid.points.iter().all(|p| ((p.x - 2.5) / 5.0).fract().abs() < 1e-9));
    }

    #[test]
    fn hexagon_grid_matches_membership_oracle() {
        let region = Region::hexagon(Point::new(3.0, -2.0), 10.0);
        let grid = sample_uniform(&region, 3.0).unwrap();
        // independent scan of the same lattice with a fresh containment check
        let b = region.bounds();
        let mut count = 0;
        let xs = centered_axis_offsets(b.width(), 3.0);
        let ys = centered_axis_offsets(b.height(), 3.0);
        for &dy in &ys {
            for &dx in &xs {
                let p = Point::new(3.0 + dx, -2.0 + dy);
                // half-plane form of the flat-top hexagon
                let (lx, ly) = (p.x - 3.0, p.y + 2.0);
                let h = 3f64.sqrt() / 2.0 * 10.0;
                if ly.abs() <= h + 1e-9
                    && (3f64.sqrt() * lx + ly).abs() <= 2.0 * h + 1e-9
                    && (3f64.sqrt() * lx - ly).abs() <= 2.0 * h + 1e-9
                {
                    count += 1;
                }
            }
        }
        assert_eq!(grid.len(), count);
    }

    #[test]
    fn halving_interval_roughly_quadruples_points() {
        let region = Region::circle(Point::new(0.0, 0.0), 20.0);
        let coarse = sample_uniform(&region, 2.0).unwrap().len() as f64;
        let fine = sample_uniform(&region, 1.0).unwrap().len() as f64;
        let ratio = fine / coarse;
        assert!((3.8..=4.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn grid_density_tracks_region_area() {
        for r in [10.0, 17.0, 31.0] {
            let region = Region::circle(Point::new(5.0, 5.0), r);
            let grid = sample_uniform(&region, 1.0).unwrap();
            let density = grid.len() as f64 * 1.0 / region.area();
            assert!((0.8..=1.2).contains(&density), "r={r} density={density}");
        }
    }

    #[test]
    fn sample_uniform_is_deterministic() {
        let region = Region::hexagon(Point::new(1.0, 2.0), 7.0);
        let a = sample_uniform(&region, 1.3).unwrap();
        let b = sample_uniform(&region, 1.3).unwrap();
        assert_eq!(a.points, b.points);
    }

    #[test]
    fn empty_grid_when_centroid_outside_horseshoe() {
        // U-shape whose centroid falls in the notch.
        let m = Map::new(
            vec![
                Point::new(0.0, 0.0),
                Point::new(9.0, 0.0),
                Point::new(9.0, 10.0),
                Point::new(8.0, 10.0),
                Point::new(8.0, 1.0),
                Point::new(1.0, 1.0),
                Point::new(1.0, 10.0),
                Point::new(0.0, 10.0),
            ],
            vec![],
            BoundaryPolicy::InsideOnly,
        )
        .unwrap();
        assert_eq!(sample_map(&m, 50.0).unwrap_err(), GeometryError::EmptyGrid);
    }

    #[test]
    fn tile_pattern_empty_when_area_covers_map() {
        let m = Map::rectangle(10.0, 10.0, BoundaryPolicy::InsideOnly);
        // circle big enough to cover the whole square
        let area = Region::circle(Point::new(5.0, 5.0), 8.0);
        assert!(tile_pattern(&m, &area).is_empty());
    }

    #[test]
    fn hexagon_tiles_cover_map() {
        let m = Map::rectangle(30.0, 30.0, BoundaryPolicy::InsideOnly);
        let area = Region::hexagon(m.centroid(), 5.0);
        let tiles = tile_pattern(&m, &area);
        assert!(!tiles.is_empty());
        // Monte-Carlo coverage of area ∪ tiles
        let mut covered = 0;
        let total = 100_000;
        for i in 1..=total {
            let p = Point::new(30.0 * halton(i, 2), 30.0 * halton(i, 3));
            if area.contains(&p) || tiles.iter().any(|t| t.contains(&p)) {
                covered += 1;
            }
        }
        let frac = covered as f64 / total as f64;
        assert!(frac >= 0.999, "coverage {frac}");
    }

    #[test]
    fn circle_tiles_leave_no_point_farther_than_radius() {
        let m = Map::rectangle(60.0, 30.0, BoundaryPolicy::InsideOnly);
        let area = Region::circle(m.centroid(), 10.0);
        let tiles = tile_pattern(&m, &area);
        let grid = sample_map(&m, 1.0).unwrap();
        for p in &grid.points {
            let d = tiles
                .iter()
                .map(|t| t.center().distance(p))
                .chain(std::iter::once(area.center().distance(p)))
                .fold(f64::INFINITY, f64::min);
            assert!(d <= 10.0 + 1e-9, "point {:?} at {d}", p);
        }
    }

    #[test]
    fn tiles_are_row_major_ordered() {
        let m = Map::rectangle(40.0, 40.0, BoundaryPolicy::InsideOnly);
        let area = Region::circle(m.centroid(), 6.0);
        let tiles = tile_pattern(&m, &area);
        for w in tiles.windows(2) {
            let (a, b) = (w[0].center(), w[1].center());
            assert!(a.y < b.y + 1e-9);
            if (a.y - b.y).abs() < 1e-9 {
                assert!(a.x < b.x);
            }
        }
    }

    #[test]
    fn overlap_fraction_trivial_cases() {
        let m = Map::rectangle(100.0, 100.0, BoundaryPolicy::InsideOnly);
        let inside = Region::circle(Point::new(50.0, 50.0), 10.0);
        assert!((overlap_fraction(&inside, &m) - 1.0).abs() <= 0.01);
        let outside = Region::circle(Point::new(500.0, 50.0), 10.0);
        assert_eq!(overlap_fraction(&outside, &m), 0.0);
        let straddling = Region::circle(Point::new(0.0, 50.0), 10.0);
        assert!((overlap_fraction(&straddling, &m) - 0.5).abs() <= 0.01);
    }

    #[test]
    fn overlap_fraction_monotone_toward_centroid() {
        let m = Map::rectangle(50.0, 50.0, BoundaryPolicy::InsideOnly);
        let mut last = 0.0;
        for step in 0..6 {
            let center = Point::new(-10.0 + step as f64 * 7.0, 25.0);
            let f = overlap_fraction(&Region::circle(center, 8.0), &m);
            assert!(f >= last - 0.01, "step {step}: {f} < {last}");
            last = f;
        }
    }

    #[test]
    fn project_inside_examples() {
        let m = unit_square();
        let inside = Point::new(0.25, 0.75);
        assert_eq!(m.project_inside(inside), inside);
        let edge = m.project_inside(Point::new(2.0, 0.5));
        assert!((edge.x - 1.0).abs() < 1e-12 && (edge.y - 0.5).abs() < 1e-12);
        let corner = m.project_inside(Point::new(2.0, 2.0));
        assert!((corner.x - 1.0).abs() < 1e-12 && (corner.y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn walls_crossed_counts_crossings() {
        let m = Map::rectangle(10.0, 10.0, BoundaryPolicy::InsideOnly)
            .with_walls(vec![
                Wall {
                    a: Point::new(5.0, 0.0),
                    b: Point::new(5.0, 10.0),
                    attenuation_db: 3.0,
                },
                Wall {
                    a: Point::new(7.0, 0.0),
                    b: Point::new(7.0, 10.0),
                    attenuation_db: 4.5,
                },
            ])
            .unwrap();
        let a = Point::new(1.0, 5.0);
        assert_eq!(m.walls_crossed(&a, &Point::new(4.0, 5.0)), 0);
        assert_eq!(m.walls_crossed(&a, &Point::new(6.0, 5.0)), 1);
        assert_eq!(m.walls_crossed(&a, &Point::new(9.0, 5.0)), 2);
        assert!((m.attenuation_along(&a, &Point::new(9.0, 5.0)) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn region_area_matches_analytic_within_1e9_relative() {
        let c = Region::circle(Point::new(0.0, 0.0), 3.0);
        assert!((c.area() - std::f64::consts::PI * 9.0).abs() / c.area() < 1e-9);
        let h = Region::hexagon(Point::new(0.0, 0.0), 2.0);
        assert!((h.area() - 6.0 * 3f64.sqrt()).abs() / h.area() < 1e-9);
    }

    proptest! {
        #[test]
        fn project_inside_is_idempotent(x in -5.0f64..5.0, y in -5.0f64..5.0) {
            let m = unit_square();
            let p1 = m.project_inside(Point::new(x, y));
            let p2 = m.project_inside(p1);
            prop_assert!(p1.distance(&p2) < 1e-9);
        }

        #[test]
        fn grid_points_lie_inside_region(r in 1.0f64..20.0, i in 0.4f64..3.0) {
            let region = Region::circle(Point::new(0.0, 0.0), r);
            let grid = sample_uniform(&region, i).unwrap();
            prop_assert!(grid.points.iter().all(|p| region.contains(p)));
        }
    }
}
