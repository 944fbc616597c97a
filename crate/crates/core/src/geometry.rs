//! Planar geometry in projected coordinates (meters): polygons, road
//! networks, facility layers, buffering and nearest-feature queries.

use alloc::collections::BTreeMap;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use i_overlay::core::fill_rule::FillRule;
use i_overlay::float::simplify::SimplifyShape;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Number of vertices used to approximate a full circle in buffers.
pub const CIRCLE_SEGMENTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Twice the signed area of the triangle `a, b, c` (positive when counter-clockwise).
#[inline]
pub fn orient(a: &Point, b: &Point, c: &Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Signed area of a ring (positive when counter-clockwise).
pub fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let p = &ring[i];
        let q = &ring[(i + 1) % n];
        acc += p.x * q.y - q.x * p.y;
    }
    0.5 * acc
}

/// Closest point on segment `a-b` to `p`.
pub fn closest_point_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return *a;
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    Point::new(a.x + t * dx, a.y + t * dy)
}

fn on_segment(p: &Point, a: &Point, b: &Point) -> bool {
    let len = a.distance(b);
    let tol = 1e-12 * len.max(1e-300);
    if orient(a, b, p).abs() > tol * len {
        return false;
    }
    p.x >= a.x.min(b.x) - tol
        && p.x <= a.x.max(b.x) + tol
        && p.y >= a.y.min(b.y) - tol
        && p.y <= a.y.max(b.y) + tol
}

/// Whether two closed segments cross at a point interior to both.
fn proper_crossing(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

/// A polygon with holes. Rings are stored open (the closing vertex is
/// implicit); the exterior is counter-clockwise and holes are clockwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    exterior: Vec<Point>,
    holes: Vec<Vec<Point>>,
}

fn clean_ring(mut ring: Vec<Point>, what: &str) -> Result<Vec<Point>> {
    if ring.iter().any(|p| !p.is_finite()) {
        return Err(invalid(format!("{what} has non-finite coordinates")));
    }
    ring.dedup();
    while ring.len() > 1 && ring.first() == ring.last() {
        ring.pop();
    }
    if ring.len() < 3 {
        return Err(invalid(format!("{what} needs at least three distinct vertices")));
    }
    Ok(ring)
}

impl Polygon {
    /// Builds a polygon, normalizing ring orientation and closing vertices.
    ///
    /// Rejects rings with fewer than three vertices, zero area, holes outside
    /// the exterior and properly crossing edges.
    pub fn new(exterior: Vec<Point>, holes: Vec<Vec<Point>>) -> Result<Self> {
        let mut exterior = clean_ring(exterior, "polygon exterior")?;
        if ring_signed_area(&exterior) < 0.0 {
            exterior.reverse();
        }
        let ext_area = ring_signed_area(&exterior);
        let scale = bbox_of(&exterior).diagonal();
        if !(ext_area > 1e-14 * scale * scale) {
            return Err(invalid("polygon exterior has zero area"));
        }
        let mut cleaned = Vec::with_capacity(holes.len());
        for hole in holes {
            let mut hole = clean_ring(hole, "polygon hole")?;
            if ring_signed_area(&hole) > 0.0 {
                hole.reverse();
            }
            if ring_signed_area(&hole).abs() <= 1e-14 * scale * scale {
                return Err(invalid("polygon hole has zero area"));
            }
            cleaned.push(hole);
        }
        let poly = Self {
            exterior,
            holes: cleaned,
        };
        for hole in &poly.holes {
            if !ring_contains(&poly.exterior, &hole[0]) {
                return Err(invalid("polygon hole lies outside the exterior ring"));
            }
        }
        if poly.has_crossing_edges() {
            return Err(invalid("polygon rings self-intersect"));
        }
        Ok(poly)
    }

    pub fn rectangle(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        Self::new(
            alloc::vec![
                Point::new(xmin, ymin),
                Point::new(xmax, ymin),
                Point::new(xmax, ymax),
                Point::new(xmin, ymax),
            ],
            Vec::new(),
        )
    }

    pub fn exterior(&self) -> &[Point] {
        &self.exterior
    }

    pub fn holes(&self) -> &[Vec<Point>] {
        &self.holes
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Point]> {
        core::iter::once(self.exterior.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }

    pub fn area(&self) -> f64 {
        ring_signed_area(&self.exterior) + self.holes.iter().map(|h| ring_signed_area(h)).sum::<f64>()
    }

    pub fn bbox(&self) -> BBox {
        bbox_of(&self.exterior)
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings().flat_map(|ring| {
            let n = ring.len();
            (0..n).map(move |i| (ring[i], ring[(i + 1) % n]))
        })
    }

    /// Sweep over x-sorted edge boxes looking for proper crossings.
    fn has_crossing_edges(&self) -> bool {
        let mut edges: Vec<(Point, Point)> = self.edges().collect();
        edges.sort_by(|e, f| e.0.x.min(e.1.x).total_cmp(&f.0.x.min(f.1.x)));
        for i in 0..edges.len() {
            let (a, b) = edges[i];
            let xmax = a.x.max(b.x);
            let (ylo, yhi) = (a.y.min(b.y), a.y.max(b.y));
            for &(c, d) in &edges[i + 1..] {
                if c.x.min(d.x) > xmax {
                    break;
                }
                if c.y.max(d.y) < ylo || c.y.min(d.y) > yhi {
                    continue;
                }
                if proper_crossing(&a, &b, &c, &d) {
                    return true;
                }
            }
        }
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub const EMPTY: BBox = BBox {
        xmin: f64::INFINITY,
        ymin: f64::INFINITY,
        xmax: f64::NEG_INFINITY,
        ymax: f64::NEG_INFINITY,
    };

    pub fn include(&mut self, p: &Point) {
        self.xmin = self.xmin.min(p.x);
        self.ymin = self.ymin.min(p.y);
        self.xmax = self.xmax.max(p.x);
        self.ymax = self.ymax.max(p.y);
    }

    pub fn merge(&mut self, other: &BBox) {
        self.xmin = self.xmin.min(other.xmin);
        self.ymin = self.ymin.min(other.ymin);
        self.xmax = self.xmax.max(other.xmax);
        self.ymax = self.ymax.max(other.ymax);
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

pub fn bbox_of(points: &[Point]) -> BBox {
    let mut b = BBox::EMPTY;
    for p in points {
        b.include(p);
    }
    b
}

/// Bounding box of a polygon collection.
pub fn domain_bbox(polys: &[Polygon]) -> BBox {
    let mut b = BBox::EMPTY;
    for poly in polys {
        b.merge(&poly.bbox());
    }
    b
}

/// Crossing-number test for a single ring; boundary points count as inside.
fn ring_contains(ring: &[Point], p: &Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let a = &ring[i];
        let b = &ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Whether `p` lies in `poly` (inside the exterior and outside every hole).
/// Points on any ring count as inside.
pub fn point_in_polygon(p: &Point, poly: &Polygon) -> bool {
    if poly.edges().any(|(a, b)| on_segment(p, &a, &b)) {
        return true;
    }
    ring_contains(&poly.exterior, p) && !poly.holes.iter().any(|h| ring_contains(h, p))
}

/// Whether `p` lies in any polygon of a domain.
pub fn point_in_domain(p: &Point, domain: &[Polygon]) -> bool {
    domain.iter().any(|poly| point_in_polygon(p, poly))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub id: u64,
    pub a: Point,
    pub b: Point,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl Segment {
    pub fn new(id: u64, a: Point, b: Point) -> Self {
        Self {
            id,
            a,
            b,
            metadata: BTreeMap::new(),
        }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(&self.b)
    }

    pub fn midpoint(&self) -> Point {
        Point::new(0.5 * (self.a.x + self.b.x), 0.5 * (self.a.y + self.b.y))
    }
}

/// Road segments with unique ids and positive lengths, sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadNetwork {
    segments: Vec<Segment>,
}

impl RoadNetwork {
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        segments.sort_by_key(|s| s.id);
        let mut seen = BTreeSet::new();
        for s in &segments {
            if !seen.insert(s.id) {
                return Err(invalid(format!("duplicate road segment id {}", s.id)));
            }
            if !s.a.is_finite() || !s.b.is_finite() {
                return Err(invalid(format!("segment {} has non-finite coordinates", s.id)));
            }
            if !(s.length() > 0.0) {
                return Err(invalid(format!("segment {} has zero length", s.id)));
            }
        }
        Ok(Self { segments })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn bbox(&self) -> BBox {
        let mut b = BBox::EMPTY;
        for s in &self.segments {
            b.include(&s.a);
            b.include(&s.b);
        }
        b
    }

    /// Points spaced at most `spacing` apart along every segment, placed at the
    /// midpoints of equal sub-pieces. Returns `(segment_id, point)` pairs.
    pub fn sample_points(&self, spacing: f64) -> Result<Vec<(u64, Point)>> {
        if !(spacing > 0.0) {
            return Err(invalid("sampling spacing must be positive"));
        }
        let mut out = Vec::new();
        for s in &self.segments {
            let pieces = (s.length() / spacing).ceil().max(1.0) as usize;
            for k in 0..pieces {
                let t = (k as f64 + 0.5) / pieces as f64;
                out.push((s.id, Point::new(s.a.x + t * (s.b.x - s.a.x), s.a.y + t * (s.b.y - s.a.y))));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snap {
    pub segment_id: u64,
    pub point: Point,
    pub distance: f64,
}

/// Projects `p` onto the nearest segment (ties go to the smallest id).
pub fn snap_to_network(p: &Point, net: &RoadNetwork) -> Result<Snap> {
    let mut best: Option<Snap> = None;
    // Segments are sorted by id, so a strict comparison keeps the smallest id on ties.
    for s in &net.segments {
        let foot = closest_point_on_segment(p, &s.a, &s.b);
        let d = p.distance(&foot);
        if best.map_or(true, |b| d < b.distance) {
            best = Some(Snap {
                segment_id: s.id,
                point: foot,
                distance: d,
            });
        }
    }
    best.ok_or_else(|| invalid("cannot snap to an empty road network"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FacilityKind {
    School,
    BusStation,
    Market,
    Worship,
    Restaurant,
    Hospital,
}

impl FacilityKind {
    pub const ALL: [FacilityKind; 6] = [
        FacilityKind::School,
        FacilityKind::BusStation,
        FacilityKind::Market,
        FacilityKind::Worship,
        FacilityKind::Restaurant,
        FacilityKind::Hospital,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FacilityKind::School => "school",
            FacilityKind::BusStation => "bus_station",
            FacilityKind::Market => "market",
            FacilityKind::Worship => "worship",
            FacilityKind::Restaurant => "restaurant",
            FacilityKind::Hospital => "hospital",
        }
    }
}

impl fmt::Display for FacilityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FacilityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FacilityKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown facility kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityLayer {
    pub kind: FacilityKind,
    pub points: Vec<Point>,
}

/// Euclidean distance from `p` to the closest facility of the layer.
pub fn nearest_distance(p: &Point, layer: &FacilityLayer) -> Result<f64> {
    if layer.points.is_empty() {
        return Err(invalid(format!("facility layer `{}` is empty", layer.kind)));
    }
    Ok(layer
        .points
        .iter()
        .map(|q| p.distance(q))
        .fold(f64::INFINITY, f64::min))
}

type Contour = Vec<[f64; 2]>;

/// Convex outline of a segment dilated by `w`: a rectangle capped by the two
/// halves of a regular 16-gon whose vertices include the rectangle corners.
fn capsule(a: &Point, b: &Point, w: f64) -> Contour {
    let ux = (b.x - a.x) / a.distance(b);
    let uy = (b.y - a.y) / a.distance(b);
    let normal = uy.atan2(ux) + 0.5 * PI;
    let half = CIRCLE_SEGMENTS / 2;
    let step = 2.0 * PI / CIRCLE_SEGMENTS as f64;
    let mut c = Vec::with_capacity(CIRCLE_SEGMENTS + 2);
    // Cap around b from the right-hand normal to the left-hand one, then around a.
    for k in 0..=half {
        let ang = normal + PI + k as f64 * step;
        c.push([b.x + w * ang.cos(), b.y + w * ang.sin()]);
    }
    for k in 0..=half {
        let ang = normal + k as f64 * step;
        c.push([a.x + w * ang.cos(), a.y + w * ang.sin()]);
    }
    c
}

fn ring_contour(ring: &[Point]) -> Contour {
    ring.iter().map(|p| [p.x, p.y]).collect()
}

/// Drops vertices that coincide with, or lie on the line through, their
/// neighbours (overlay output can contain such near-duplicates).
fn simplify_ring(mut ring: Vec<Point>) -> Vec<Point> {
    let b = bbox_of(&ring);
    let tol = 1e-9 * b.diagonal().max(f64::MIN_POSITIVE);
    loop {
        let n = ring.len();
        if n < 3 {
            return ring;
        }
        let drop = (0..n).find(|&i| {
            let (a, p, c) = (&ring[(i + n - 1) % n], &ring[i], &ring[(i + 1) % n]);
            let ac = a.distance(c);
            a.distance(p) <= tol || ac <= tol || orient(a, c, p).abs() <= tol * ac
        });
        match drop {
            Some(i) => {
                ring.remove(i);
            }
            None => return ring,
        }
    }
}

/// Non-zero-winding union of counter-clockwise contours.
fn union_contours(contours: &[Contour]) -> Result<Vec<Polygon>> {
    let shapes = contours.simplify_shape_as::<i64>(FillRule::NonZero);
    let mut out = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let mut rings = shape
            .into_iter()
            .map(|c| simplify_ring(c.into_iter().map(|[x, y]| Point::new(x, y)).collect()))
            .filter(|r| r.len() >= 3);
        let exterior = match rings.next() {
            Some(e) => e,
            None => continue,
        };
        out.push(Polygon::new(exterior, rings.collect())?);
    }
    // Deterministic order: by lower-left corner.
    out.sort_by(|p, q| {
        let (bp, bq) = (p.bbox(), q.bbox());
        bp.xmin.total_cmp(&bq.xmin).then(bp.ymin.total_cmp(&bq.ymin))
    });
    Ok(out)
}

/// Union of the width-`width` capsules around every road segment, as
/// disjoint polygons.
pub fn buffer_network(net: &RoadNetwork, width: f64) -> Result<Vec<Polygon>> {
    if !(width > 0.0) || !width.is_finite() {
        return Err(invalid("buffer width must be positive"));
    }
    if net.is_empty() {
        return Err(invalid("cannot buffer an empty road network"));
    }
    let contours: Vec<Contour> = net.segments.iter().map(|s| capsule(&s.a, &s.b, width)).collect();
    union_contours(&contours)
}

/// Minkowski-style dilation of a polygon collection by `width` (corners
/// rounded with 16-gon arcs). Holes narrower than `2 * width` disappear.
pub fn dilate(domain: &[Polygon], width: f64) -> Result<Vec<Polygon>> {
    if !(width >= 0.0) || !width.is_finite() {
        return Err(invalid("dilation width must be non-negative"));
    }
    if width == 0.0 {
        return Ok(domain.to_vec());
    }
    let mut contours = Vec::new();
    for poly in domain {
        for ring in poly.rings() {
            contours.push(ring_contour(ring));
            let n = ring.len();
            for i in 0..n {
                contours.push(capsule(&ring[i], &ring[(i + 1) % n], width));
            }
        }
    }
    union_contours(&contours)
}
