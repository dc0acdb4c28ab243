//! Voronoi tessellation of city points, community polygons and GeoJSON output.
//!
//! Geometry is planar in (longitude, latitude). Each Voronoi cell is built by
//! clipping the bounding rectangle with the perpendicular-bisector half-planes
//! of nearby generators; every cell edge remembers which neighbour (or the
//! rectangle) produced it, which gives the Delaunay neighbour relation and lets
//! community merging dissolve shared edges by topology alone.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use serde_json::{json, Value};

use crate::community::Partition;
use crate::geo::City;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).dot(self.sub(o)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

pub const DEFAULT_CLIP_PADDING: f64 = 0.05;

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Result<Self> {
        if !(min_x < max_x && min_y < max_y)
            || ![min_x, min_y, max_x, max_y].iter().all(|v| v.is_finite())
        {
            return Err(Error::invalid("clip rectangle must have positive extent"));
        }
        Ok(Rect {
            min_x,
            min_y,
            max_x,
            max_y,
        })
    }

    /// Bounding box of `points` padded by `padding` times its extent per side.
    pub fn around(points: &[Point], padding: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("no points to bound"));
        }
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(1.0);
        let px = ((hi.x - lo.x) * padding).max(span * padding);
        let py = ((hi.y - lo.y) * padding).max(span * padding);
        Rect::new(lo.x - px, lo.y - py, hi.x + px, hi.y + py)
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    fn diagonal(&self) -> f64 {
        Point::new(self.min_x, self.min_y).dist(Point::new(self.max_x, self.max_y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeSource {
    /// Bisector with the given generator.
    Neighbor(usize),
    /// Side of the clip rectangle.
    Boundary,
}

/// Convex cell; edge `k` runs from `vertices[k]` to `vertices[k + 1]` (cyclic)
/// counter-clockwise and was produced by `sources[k]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub vertices: Vec<Point>,
    pub sources: Vec<EdgeSource>,
    #[serde(skip)]
    vertex_ids: Vec<usize>,
}

impl Cell {
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Point-in-convex-polygon with a small absolute tolerance.
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let n = self.vertices.len();
        (0..n).all(|k| {
            let (a, b) = (self.vertices[k], self.vertices[(k + 1) % n]);
            let edge = b.sub(a);
            edge.cross(p.sub(a)) >= -tol * edge.dot(edge).sqrt()
        })
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point, EdgeSource, usize, usize)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |k| {
            let next = (k + 1) % n;
            (
                self.vertices[k],
                self.vertices[next],
                self.sources[k],
                self.vertex_ids[k],
                self.vertex_ids[next],
            )
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoronoiDiagram {
    pub clip: Rect,
    pub sites: Vec<Point>,
    pub cells: Vec<Cell>,
    /// Generator pairs `(a, b)`, `a < b`, whose cells share an edge of positive length.
    pub neighbors: Vec<(usize, usize)>,
}

impl VoronoiDiagram {
    /// Shared edge of two neighbouring cells, as seen from cell `a`.
    pub fn shared_edge(&self, a: usize, b: usize) -> Option<(Point, Point)> {
        self.cells[a]
            .edges()
            .find(|e| e.2 == EdgeSource::Neighbor(b))
            .map(|e| (e.0, e.1))
            .or_else(|| {
                self.cells[b]
                    .edges()
                    .find(|e| e.2 == EdgeSource::Neighbor(a))
                    .map(|e| (e.1, e.0))
            })
    }
}

pub fn signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|k| ring[k].cross(ring[(k + 1) % n]))
        .sum::<f64>()
        / 2.0
}

/// City locations as planar points `(lon, lat)`.
pub fn city_points(cities: &[City]) -> Vec<Point> {
    cities
        .iter()
        .map(|c| Point::new(c.location.lon, c.location.lat))
        .collect()
}

/// Voronoi diagram of the cities in the equirectangular (lon, lat) plane.
pub fn voronoi(cities: &[City], clip: Rect) -> Result<VoronoiDiagram> {
    voronoi_points(&city_points(cities), clip)
}

pub fn voronoi_points(sites: &[Point], clip: Rect) -> Result<VoronoiDiagram> {
    if sites.len() < 2 {
        return Err(Error::invalid(
            "Voronoi diagram needs at least 2 generators",
        ));
    }
    let diag = clip.diagonal();
    for (i, p) in sites.iter().enumerate() {
        if !p.x.is_finite() || !p.y.is_finite() || !clip.contains(*p) {
            return Err(Error::invalid(format!(
                "generator {i} at ({}, {}) lies outside the clip rectangle",
                p.x, p.y
            )));
        }
    }
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| {
        sites[a]
            .x
            .total_cmp(&sites[b].x)
            .then(sites[a].y.total_cmp(&sites[b].y))
    });
    for w in order.windows(2) {
        if sites[w[0]].dist(sites[w[1]]) <= 1e-12 * diag {
            return Err(Error::invalid(format!(
                "generators {} and {} coincide",
                w[0], w[1]
            )));
        }
    }

    let mut cells: Vec<Cell> = (0..sites.len())
        .map(|i| build_cell(sites, i, &clip))
        .collect();
    snap_vertices(&mut cells, 1e-9 * diag);

    let min_len = 1e-9 * diag;
    let mut pairs = std::collections::BTreeSet::new();
    for (i, cell) in cells.iter().enumerate() {
        for (a, b, src, _, _) in cell.edges() {
            if let EdgeSource::Neighbor(j) = src {
                if a.dist(b) > min_len {
                    pairs.insert((i.min(j), i.max(j)));
                }
            }
        }
    }
    Ok(VoronoiDiagram {
        clip,
        sites: sites.to_vec(),
        cells,
        neighbors: pairs.into_iter().collect(),
    })
}

fn build_cell(sites: &[Point], i: usize, clip: &Rect) -> Cell {
    let p = sites[i];
    let mut poly: Vec<(Point, EdgeSource)> = vec![
        (Point::new(clip.min_x, clip.min_y), EdgeSource::Boundary),
        (Point::new(clip.max_x, clip.min_y), EdgeSource::Boundary),
        (Point::new(clip.max_x, clip.max_y), EdgeSource::Boundary),
        (Point::new(clip.min_x, clip.max_y), EdgeSource::Boundary),
    ];
    let mut others: Vec<(f64, usize)> = (0..sites.len())
        .filter(|&j| j != i)
        .map(|j| (p.dist(sites[j]), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let eps = 1e-12 * clip.diagonal();
    let radius =
        |poly: &[(Point, EdgeSource)]| poly.iter().map(|(v, _)| v.dist(p)).fold(0.0, f64::max);
    let mut reach = radius(&poly);
    for (dist, j) in others {
        // generators beyond twice the cell radius cannot cut the cell
        if dist > 2.0 * reach + eps {
            break;
        }
        poly = clip_half_plane(&poly, p, sites[j], j, eps);
        reach = radius(&poly);
    }
    Cell {
        vertices: poly.iter().map(|(v, _)| *v).collect(),
        sources: poly.iter().map(|(_, s)| *s).collect(),
        vertex_ids: Vec::new(),
    }
}

/// Keeps the part of `poly` closer to `p` than to `q`.
fn clip_half_plane(
    poly: &[(Point, EdgeSource)],
    p: Point,
    q: Point,
    j: usize,
    eps: f64,
) -> Vec<(Point, EdgeSource)> {
    let normal = q.sub(p);
    let mid = Point::new((p.x + q.x) / 2.0, (p.y + q.y) / 2.0);
    let tol = eps * normal.dot(normal).sqrt();
    let side = |v: Point| v.sub(mid).dot(normal);
    let n = poly.len();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..n {
        let (cur, src) = poly[k];
        let next = poly[(k + 1) % n].0;
        let (fc, fn_) = (side(cur), side(next));
        let cur_in = fc <= tol;
        let next_in = fn_ <= tol;
        let cut = |a: Point, b: Point, fa: f64, fb: f64| {
            let t = fa / (fa - fb);
            Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
        };
        match (cur_in, next_in) {
            (true, true) => out.push((cur, src)),
            (true, false) => {
                out.push((cur, src));
                if fc < -tol {
                    out.push((cut(cur, next, fc, fn_), EdgeSource::Neighbor(j)));
                } else {
                    // cur sits on the bisector; the edge leaving it follows the bisector
                    out.last_mut().expect("just pushed").1 = EdgeSource::Neighbor(j);
                }
            }
            (false, true) => {
                if fn_ < -tol {
                    out.push((cut(cur, next, fc, fn_), src));
                }
            }
            (false, false) => {}
        }
    }
    dedupe_ring(out, tol.max(eps))
}

/// Drops vertices that coincide with their successor.
fn dedupe_ring<T: Copy>(ring: Vec<(Point, T)>, tol: f64) -> Vec<(Point, T)> {
    let mut out: Vec<(Point, T)> = Vec::with_capacity(ring.len());
    let n = ring.len();
    for k in 0..n {
        let next = ring[(k + 1) % n].0;
        if ring[k].0.dist(next) > tol || n == 1 {
            out.push(ring[k]);
        }
    }
    out
}

/// Merges vertices closer than `tol` across all cells so that shared corners
/// are bitwise identical, and assigns global vertex ids.
fn snap_vertices(cells: &mut [Cell], tol: f64) {
    let key = |p: Point| ((p.x / tol).floor() as i64, (p.y / tol).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut reps: Vec<Point> = Vec::new();
    for cell in cells.iter_mut() {
        let mut ids = Vec::with_capacity(cell.vertices.len());
        for v in cell.vertices.iter_mut() {
            let (kx, ky) = key(*v);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = grid.get(&(kx + dx, ky + dy)) {
                        if let Some(&id) = list.iter().find(|&&id| reps[id].dist(*v) <= tol) {
                            found = Some(id);
                            break 'search;
                        }
                    }
                }
            }
            let id = found.unwrap_or_else(|| {
                reps.push(*v);
                grid.entry((kx, ky)).or_default().push(reps.len() - 1);
                reps.len() - 1
            });
            *v = reps[id];
            ids.push(id);
        }
        // snapping can collapse an edge; drop the vertex that starts it
        let n = ids.len();
        let keep: Vec<bool> = (0..n).map(|k| ids[k] != ids[(k + 1) % n]).collect();
        let mut k = 0;
        cell.vertices.retain(|_| (keep[k], k += 1).0);
        k = 0;
        cell.sources.retain(|_| (keep[k], k += 1).0);
        k = 0;
        ids.retain(|_| (keep[k], k += 1).0);
        cell.vertex_ids = ids;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolygonRings {
    /// Counter-clockwise, not closed (first vertex not repeated).
    pub exterior: Vec<Point>,
    /// Clockwise rings.
    pub holes: Vec<Vec<Point>>,
}

impl PolygonRings {
    pub fn area(&self) -> f64 {
        signed_area(&self.exterior) + self.holes.iter().map(|h| signed_area(h)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Region {
    pub community: usize,
    pub polygons: Vec<PolygonRings>,
}

impl Region {
    pub fn area(&self) -> f64 {
        self.polygons.iter().map(PolygonRings::area).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Border {
    pub a: usize,
    pub b: usize,
    pub start: Point,
    pub end: Point,
    pub split_frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionMap {
    pub clip: Rect,
    pub regions: Vec<Region>,
    pub borders: Vec<Border>,
}

impl RegionMap {
    pub fn area(&self) -> f64 {
        self.regions.iter().map(Region::area).sum()
    }
}

/// Dissolves edges between cells of the same community and annotates the
/// surviving neighbour edges with their split frequency.
///
/// `split_freq` is keyed by `(min, max)` generator pair and must cover every
/// neighbour pair that ends up on a border.
pub fn merge_regions(
    v: &VoronoiDiagram,
    p: &Partition,
    split_freq: &HashMap<(usize, usize), f64>,
) -> Result<RegionMap> {
    if p.len() != v.cells.len() {
        return Err(Error::invalid(format!(
            "partition covers {} cities but the diagram has {} generators",
            p.len(),
            v.cells.len()
        )));
    }
    let labels = p.labels();
    let mut borders = Vec::new();
    for &(a, b) in &v.neighbors {
        if labels[a] == labels[b] {
            continue;
        }
        let frequency = *split_freq.get(&(a, b)).ok_or_else(|| {
            Error::invalid(format!("no split frequency for neighbour pair ({a}, {b})"))
        })?;
        if !(0.0..=1.0).contains(&frequency) {
            return Err(Error::invalid(format!(
                "split frequency {frequency} outside [0, 1]"
            )));
        }
        let (start, end) = v.shared_edge(a, b).expect("neighbours share an edge");
        borders.push(Border {
            a,
            b,
            start,
            end,
            split_frequency: frequency,
        });
    }

    let mut boundary: Vec<Vec<(usize, usize, Point, Point)>> = vec![Vec::new(); p.count()];
    for (i, cell) in v.cells.iter().enumerate() {
        for (a, b, src, ia, ib) in cell.edges() {
            let keep = match src {
                EdgeSource::Boundary => true,
                EdgeSource::Neighbor(j) => labels[j] != labels[i],
            };
            if keep {
                boundary[labels[i]].push((ia, ib, a, b));
            }
        }
    }
    let regions = boundary
        .into_iter()
        .enumerate()
        .map(|(community, edges)| Region {
            community,
            polygons: assemble_polygons(trace_rings(edges)),
        })
        .collect();
    Ok(RegionMap {
        clip: v.clip,
        regions,
        borders,
    })
}

/// Chains directed boundary edges into closed rings. At a vertex with several
/// outgoing edges the sharpest left turn is taken, which keeps rings simple.
fn trace_rings(edges: Vec<(usize, usize, Point, Point)>) -> Vec<Vec<Point>> {
    let mut outgoing: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, e) in edges.iter().enumerate() {
        outgoing.entry(e.0).or_default().push(k);
    }
    let mut used = vec![false; edges.len()];
    let mut rings = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut k = start;
        loop {
            used[k] = true;
            let (_, to, a, b) = edges[k];
            ring.push(a);
            let dir = b.sub(a);
            let next = outgoing
                .get(&to)
                .into_iter()
                .flatten()
                .copied()
                .filter(|&c| !used[c])
                .max_by(|&x, &y| {
                    let turn = |c: usize| {
                        let d = edges[c].3.sub(edges[c].2);
                        dir.cross(d).atan2(dir.dot(d))
                    };
                    turn(x).total_cmp(&turn(y))
                });
            match next {
                Some(c) => k = c,
                None => break,
            }
        }
        rings.push(ring);
    }
    rings
}

fn point_in_ring(p: Point, ring: &[Point]) -> bool {
    let n = ring.len();
    let mut inside = false;
    for k in 0..n {
        let (a, b) = (ring[k], ring[(k + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x) {
            inside = !inside;
        }
    }
    inside
}

/// Groups counter-clockwise exteriors with the clockwise holes they contain.
fn assemble_polygons(rings: Vec<Vec<Point>>) -> Vec<PolygonRings> {
    let (exteriors, holes): (Vec<_>, Vec<_>) = rings
        .into_iter()
        .filter(|r| r.len() >= 3)
        .partition(|r| signed_area(r) > 0.0);
    let mut polygons: Vec<PolygonRings> = exteriors
        .into_iter()
        .map(|exterior| PolygonRings {
            exterior,
            holes: Vec::new(),
        })
        .collect();
    for hole in holes {
        // a point just left of the first hole edge lies in the region itself
        let (a, b) = (hole[0], hole[1]);
        let d = b.sub(a);
        let len = d.dot(d).sqrt();
        let probe = Point::new(
            (a.x + b.x) / 2.0 - d.y / len * len * 1e-6,
            (a.y + b.y) / 2.0 + d.x / len * len * 1e-6,
        );
        let owner = polygons
            .iter()
            .enumerate()
            .filter(|(_, poly)| point_in_ring(probe, &poly.exterior))
            .min_by(|x, y| signed_area(&x.1.exterior).total_cmp(&signed_area(&y.1.exterior)))
            .map(|(k, _)| k);
        if let Some(k) = owner {
            polygons[k].holes.push(hole);
        }
    }
    polygons
}

fn closed_ring(ring: &[Point]) -> Vec<[f64; 2]> {
    ring.iter()
        .chain(ring.first())
        .map(|p| [p.x, p.y])
        .collect()
}

/// GeoJSON FeatureCollection: one feature per community polygon set plus one
/// LineString per border segment.
pub fn to_geojson(map: &RegionMap, cities: &[City]) -> Value {
    let mut features = Vec::new();
    for region in &map.regions {
        let polys: Vec<Vec<Vec<[f64; 2]>>> = region
            .polygons
            .iter()
            .map(|p| {
                std::iter::once(&p.exterior)
                    .chain(&p.holes)
                    .map(|r| closed_ring(r))
                    .collect()
            })
            .collect();
        let geometry = if polys.len() == 1 {
            json!({ "type": "Polygon", "coordinates": polys[0] })
        } else {
            json!({ "type": "MultiPolygon", "coordinates": polys })
        };
        features.push(json!({
            "type": "Feature",
            "properties": { "community": region.community },
            "geometry": geometry,
        }));
    }
    for b in &map.borders {
        let mut props = json!({ "split_frequency": b.split_frequency });
        if let (Some(ca), Some(cb)) = (cities.get(b.a), cities.get(b.b)) {
            props["city_a"] = json!(ca.id.as_str());
            props["city_b"] = json!(cb.id.as_str());
        }
        features.push(json!({
            "type": "Feature",
            "properties": props,
            "geometry": {
                "type": "LineString",
                "coordinates": [[b.start.x, b.start.y], [b.end.x, b.end.y]],
            },
        }));
    }
    json!({ "type": "FeatureCollection", "features": features })
}
