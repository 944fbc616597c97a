//! Constrained triangulations of study domains with an optional extension
//! ring, barycentric projection and lumped dual-cell areas.
//!
//! Two constrained Delaunay triangulations are built and merged: one of the
//! study domain itself (refined to `max_edge_inner`) and one of the ring
//! between the domain and its dilation (refined to `max_edge_outer`). The
//! domain boundary is pre-split to `max_edge_inner` and kept as a constraint
//! in both, so the two pieces share every boundary vertex exactly.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use spade::handles::{FixedFaceHandle, FixedUndirectedEdgeHandle};
use spade::{AngleLimit, ConstrainedDelaunayTriangulation, Point2, RefinementParameters, Triangulation};

use crate::error::{invalid, Error, Result};
use crate::geometry::{bbox_of, closest_point_on_segment, dilate, domain_bbox, orient, BBox, Point, Polygon};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshConfig {
    /// Longest edge allowed inside the study domain.
    pub max_edge_inner: f64,
    /// Longest edge allowed in the extension ring.
    pub max_edge_outer: f64,
    /// Width of the extension ring around the domain (0 disables it).
    pub extension_width: f64,
    /// Smallest triangle angle targeted by refinement, in degrees.
    pub min_angle: f64,
    /// Cap on the number of vertices refinement may create.
    #[serde(default = "default_max_vertices")]
    pub max_vertices: usize,
}

fn default_max_vertices() -> usize {
    500_000
}

impl MeshConfig {
    pub fn new(max_edge_inner: f64, max_edge_outer: f64, extension_width: f64) -> Self {
        Self {
            max_edge_inner,
            max_edge_outer,
            extension_width,
            min_angle: 25.0,
            max_vertices: default_max_vertices(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_edge_inner > 0.0) || !self.max_edge_inner.is_finite() {
            return Err(invalid("max_edge_inner must be positive"));
        }
        if !(self.max_edge_outer >= self.max_edge_inner) || !self.max_edge_outer.is_finite() {
            return Err(invalid("max_edge_outer must be at least max_edge_inner"));
        }
        if !(self.extension_width >= 0.0) || !self.extension_width.is_finite() {
            return Err(invalid("extension_width must be non-negative"));
        }
        if !(self.min_angle > 0.0 && self.min_angle < 34.0) {
            return Err(invalid("min_angle must lie in (0, 34) degrees"));
        }
        Ok(())
    }
}

/// A planar triangle mesh. Vertices flagged `inner` belong to the study
/// domain (including its boundary); triangles flagged `inner` tile it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub inner_flag: Vec<bool>,
    pub triangle_inner: Vec<bool>,
}

impl Mesh {
    /// Validates and assembles a mesh (e.g. after deserialization).
    pub fn new(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        inner_flag: Vec<bool>,
        triangle_inner: Vec<bool>,
    ) -> Result<Self> {
        let mesh = Self {
            vertices,
            triangles,
            inner_flag,
            triangle_inner,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.vertices.len();
        if self.inner_flag.len() != m || self.triangle_inner.len() != self.triangles.len() {
            return Err(invalid("mesh flag arrays have the wrong length"));
        }
        if self.vertices.iter().any(|p| !p.is_finite()) {
            return Err(invalid("mesh has non-finite vertex coordinates"));
        }
        let mut edge_count: BTreeMap<(usize, usize), u8> = BTreeMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= m) {
                return Err(invalid(format!("triangle {t} references a missing vertex")));
            }
            let longest = (0..3).map(|k| self.vertices[tri[k]].distance(&self.vertices[tri[(k + 1) % 3]])).fold(0.0, f64::max);
            if !(self.triangle_area(t) > 1e-10 * longest * longest) {
                return Err(invalid(format!("triangle {t} is degenerate or clockwise")));
            }
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let c = edge_count.entry((a.min(b), a.max(b))).or_insert(0);
                *c += 1;
                if *c > 2 {
                    return Err(invalid(format!("edge ({a}, {b}) is shared by more than two triangles")));
                }
            }
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        0.5 * orient(&self.vertices[a], &self.vertices[b], &self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Area of the study domain (inner triangles only).
    pub fn inner_area(&self) -> f64 {
        (0..self.triangles.len())
            .filter(|&t| self.triangle_inner[t])
            .map(|t| self.triangle_area(t))
            .sum()
    }

    /// Unique undirected edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut set = BTreeSet::new();
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                set.insert((a.min(b), a.max(b)));
            }
        }
        set.into_iter().collect()
    }

    pub fn bbox(&self) -> BBox {
        bbox_of(&self.vertices)
    }

    /// Smallest interior angle of triangle `t`, in degrees.
    pub fn min_angle(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        let angle = |p: &Point, q: &Point, r: &Point| {
            let (ux, uy) = (q.x - p.x, q.y - p.y);
            let (vx, vy) = (r.x - p.x, r.y - p.y);
            (ux * vy - uy * vx).abs().atan2(ux * vx + uy * vy).to_degrees()
        };
        angle(&a, &b, &c).min(angle(&b, &c, &a)).min(angle(&c, &a, &b))
    }

    pub fn max_edge(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t].map(|i| self.vertices[i]);
        a.distance(&b).max(b.distance(&c)).max(c.distance(&a))
    }

    /// Dual-cell areas restricted to the study domain: one third of every
    /// incident inner triangle. Vertices touching only ring triangles get 0.
    pub fn inner_dual_areas(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.vertices.len()];
        for (t, tri) in self.triangles.iter().enumerate() {
            if self.triangle_inner[t] {
                let a = self.triangle_area(t) / 3.0;
                for &v in tri {
                    w[v] += a;
                }
            }
        }
        w
    }

    pub fn locator(&self) -> TriangleLocator<'_> {
        TriangleLocator::new(self)
    }
}

/// Lumped barycentric dual areas: each vertex receives a third of the area
/// of every incident triangle.
pub fn dual_areas(mesh: &Mesh) -> Vec<f64> {
    let mut w = vec![0.0; mesh.vertices.len()];
    for t in 0..mesh.triangles.len() {
        let a = mesh.triangle_area(t) / 3.0;
        for &v in &mesh.triangles[t] {
            w[v] += a;
        }
    }
    w
}

/// Uniform-grid bucket index over triangle bounding boxes.
#[derive(Debug, Clone)]
pub struct TriangleLocator<'a> {
    mesh: &'a Mesh,
    bbox: BBox,
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    cells: Vec<Vec<u32>>,
}

impl<'a> TriangleLocator<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        let bbox = mesh.bbox();
        let nt = mesh.triangles.len().max(1);
        let side = ((nt as f64).sqrt().ceil() as usize).max(1);
        let aspect = if bbox.height() > 0.0 { bbox.width() / bbox.height() } else { 1.0 };
        let nx = ((side as f64 * aspect.sqrt()).ceil() as usize).clamp(1, 4096);
        let ny = ((side as f64 / aspect.sqrt()).ceil() as usize).clamp(1, 4096);
        let cell_w = (bbox.width() / nx as f64).max(f64::MIN_POSITIVE);
        let cell_h = (bbox.height() / ny as f64).max(f64::MIN_POSITIVE);
        let mut loc = Self {
            mesh,
            bbox,
            nx,
            ny,
            cell_w,
            cell_h,
            cells: vec![Vec::new(); nx * ny],
        };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let tb = bbox_of(&tri.map(|i| mesh.vertices[i]));
            let (x0, y0) = loc.cell_of(tb.xmin, tb.ymin);
            let (x1, y1) = loc.cell_of(tb.xmax, tb.ymax);
            for cy in y0..=y1 {
                for cx in x0..=x1 {
                    loc.cells[cy * nx + cx].push(t as u32);
                }
            }
        }
        loc
    }

    fn cell_of(&self, x: f64, y: f64) -> (usize, usize) {
        let cx = ((x - self.bbox.xmin) / self.cell_w).floor();
        let cy = ((y - self.bbox.ymin) / self.cell_h).floor();
        (
            (cx.max(0.0) as usize).min(self.nx - 1),
            (cy.max(0.0) as usize).min(self.ny - 1),
        )
    }

    /// Lowest-index triangle containing `p`, with barycentric weights.
    pub fn locate(&self, p: &Point) -> Option<(usize, [f64; 3])> {
        let b = &self.bbox;
        let slack = 1e-12 * b.diagonal();
        if !(p.x >= b.xmin - slack && p.x <= b.xmax + slack && p.y >= b.ymin - slack && p.y <= b.ymax + slack) {
            return None;
        }
        let (cx, cy) = self.cell_of(p.x, p.y);
        for &t in &self.cells[cy * self.nx + cx] {
            if let Some(w) = barycentric(self.mesh, t as usize, p) {
                return Some((t as usize, w));
            }
        }
        None
    }
}

fn barycentric(mesh: &Mesh, t: usize, p: &Point) -> Option<[f64; 3]> {
    let [a, b, c] = mesh.triangles[t].map(|i| mesh.vertices[i]);
    let area2 = orient(&a, &b, &c);
    let w = [orient(p, &b, &c), orient(&a, p, &c), orient(&a, &b, p)];
    let tol = -1e-12 * area2;
    if w.iter().any(|&wi| wi < tol) {
        return None;
    }
    let w = w.map(|wi| wi.max(0.0));
    let s = w[0] + w[1] + w[2];
    Some(w.map(|wi| wi / s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorRow {
    /// Containing triangle, `None` for points outside the mesh.
    pub triangle: Option<usize>,
    pub vertices: [usize; 3],
    pub weights: [f64; 3],
}

/// Sparse barycentric interpolation matrix: one row per query point with at
/// most three non-negative weights summing to one. Rows for points outside
/// the mesh are all zero and flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projector {
    pub n_vertices: usize,
    pub rows: Vec<ProjectorRow>,
}

impl Projector {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_inside(&self, i: usize) -> bool {
        self.rows[i].triangle.is_some()
    }

    pub fn outside_rows(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| !self.is_inside(i)).collect()
    }

    /// `A · values` (zero for outside rows).
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| (0..3).map(|k| r.weights[k] * values[r.vertices[k]]).sum())
            .collect()
    }

    /// Dense row `i` (for tests and small problems).
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vertices];
        let r = &self.rows[i];
        for k in 0..3 {
            out[r.vertices[k]] += r.weights[k];
        }
        out
    }
}

/// Barycentric projector for `pts` (ties on shared edges resolve to the
/// lowest-index triangle).
pub fn project(mesh: &Mesh, pts: &[Point]) -> Projector {
    let loc = mesh.locator();
    let rows = pts
        .iter()
        .map(|p| match loc.locate(p) {
            Some((t, w)) => ProjectorRow {
                triangle: Some(t),
                vertices: mesh.triangles[t],
                weights: w,
            },
            None => ProjectorRow {
                triangle: None,
                vertices: [0; 3],
                weights: [0.0; 3],
            },
        })
        .collect();
    Projector {
        n_vertices: mesh.vertices.len(),
        rows,
    }
}

type Cdt = ConstrainedDelaunayTriangulation<Point2<f64>>;

fn subdivide_ring(ring: &[Point], h: f64) -> Vec<Point> {
    let n = ring.len();
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let pieces = (a.distance(&b) / h).ceil().max(1.0) as usize;
        for k in 0..pieces {
            let t = k as f64 / pieces as f64;
            out.push(Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)));
        }
    }
    out
}

/// Equilateral lattice of spacing `h` over the region (odd winding of
/// `loops`), keeping at least `h/2` away from every boundary edge.
fn lattice_seeds(loops: &[Vec<Point>], h: f64, bbox: &BBox) -> Vec<Point> {
    let edges: Vec<(Point, Point)> = loops
        .iter()
        .flat_map(|r| (0..r.len()).map(move |i| (r[i], r[(i + 1) % r.len()])))
        .collect();
    let dy = h * 3f64.sqrt() / 2.0;
    let rows = (bbox.height() / dy).floor() as usize;
    let cols = (bbox.width() / h).floor() as usize;
    let mut out = Vec::new();
    for j in 0..=rows {
        let y = bbox.ymin + 0.5 * (bbox.height() - rows as f64 * dy) + j as f64 * dy;
        let shift = if j % 2 == 1 { 0.5 * h } else { 0.0 };
        for i in 0..=cols {
            let p = Point::new(bbox.xmin + 0.5 * (bbox.width() - cols as f64 * h) + shift + i as f64 * h, y);
            let mut inside = false;
            let mut clear = true;
            for (a, b) in &edges {
                if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
                    inside = !inside;
                }
                if p.distance(&closest_point_on_segment(&p, a, b)) < 0.5 * h {
                    clear = false;
                    break;
                }
            }
            if inside && clear {
                out.push(p);
            }
        }
    }
    out
}

struct Piece {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
}

/// Refines the region bounded by `loops` (odd winding = inside) until every
/// inside edge is at most `h` and angles meet the limit.
fn triangulate_region(loops: &[Vec<Point>], h: f64, cfg: &MeshConfig) -> Result<Piece> {
    let mut cdt = Cdt::new();
    for ring in loops {
        let n = ring.len();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            cdt.add_constraint_edge(Point2::new(a.x, a.y), Point2::new(b.x, b.y))
                .map_err(|e| invalid(format!("cannot insert domain boundary: {e:?}")))?;
        }
    }
    let region_bbox = {
        let mut b = BBox::EMPTY;
        for ring in loops {
            b.merge(&bbox_of(ring));
        }
        b
    };
    for p in lattice_seeds(loops, 0.92 * h, &region_bbox) {
        cdt.insert(Point2::new(p.x, p.y))
            .map_err(|e| invalid(format!("cannot insert interior vertex: {e:?}")))?;
    }
    let target_area = 2.0 * h * h * 3f64.sqrt() / 4.0;
    let tol = h * (1.0 + 1e-9);
    const MAX_ROUNDS: usize = 256;
    for _ in 0..MAX_ROUNDS {
        let budget = cfg.max_vertices.saturating_sub(cdt.num_vertices());
        let params = RefinementParameters::<f64>::new()
            .exclude_outer_faces(true)
            .keep_constraint_edges()
            .with_angle_limit(AngleLimit::from_deg(cfg.min_angle))
            .with_max_allowed_area(target_area)
            .with_max_additional_vertices(budget);
        let result = cdt.refine(params);
        let excluded: BTreeSet<FixedFaceHandle<_>> = result.excluded_faces.iter().copied().collect();
        if !result.refinement_complete || cdt.num_vertices() >= cfg.max_vertices {
            return Err(refinement_error(&cdt, &excluded, cfg, region_bbox));
        }
        // Split over-long edges, longest first and at most one per triangle
        // per round, so neighbouring splits do not compound.
        let mut long: Vec<(f64, FixedUndirectedEdgeHandle)> = Vec::new();
        let mut seen = BTreeSet::new();
        for face in cdt.inner_faces() {
            if excluded.contains(&face.fix()) {
                continue;
            }
            for e in face.adjacent_edges() {
                let ue = e.as_undirected();
                let len = ue.length_2().sqrt();
                if cdt.is_constraint_edge(ue.fix()) || len <= tol {
                    continue;
                }
                if seen.insert(ue.fix()) {
                    long.push((len, ue.fix()));
                }
            }
        }
        long.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut touched = BTreeSet::new();
        let mut midpoints: Vec<Point2<f64>> = Vec::new();
        for (_, fix) in long {
            let ue = cdt.undirected_edge(fix);
            let de = ue.as_directed();
            let faces = [de.face().fix(), de.rev().face().fix()];
            if faces.iter().any(|f| touched.contains(f)) {
                continue;
            }
            touched.extend(faces);
            let [p, q] = ue.positions();
            midpoints.push(Point2::new(0.5 * (p.x + q.x), 0.5 * (p.y + q.y)));
        }
        if midpoints.is_empty() {
            return Ok(extract(&cdt, &excluded));
        }
        for m in midpoints {
            cdt.insert(m).map_err(|e| invalid(format!("cannot insert refinement vertex: {e:?}")))?;
        }
    }
    Err(refinement_error(&cdt, &BTreeSet::new(), cfg, region_bbox))
}

fn refinement_error(
    cdt: &Cdt,
    excluded: &BTreeSet<FixedFaceHandle<spade::handles::InnerTag>>,
    cfg: &MeshConfig,
    fallback: BBox,
) -> Error {
    let limit = cfg.min_angle.to_radians();
    let mut b = BBox::EMPTY;
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let [p, q, r] = face.positions();
        let pts = [Point::new(p.x, p.y), Point::new(q.x, q.y), Point::new(r.x, r.y)];
        let tri = Mesh {
            vertices: pts.to_vec(),
            triangles: vec![[0, 1, 2]],
            inner_flag: vec![true; 3],
            triangle_inner: vec![true],
        };
        if tri.min_angle(0).to_radians() < limit {
            for p in &pts {
                b.include(p);
            }
        }
    }
    if !b.xmin.is_finite() {
        b = fallback;
    }
    Error::MeshRefinement {
        cap: cfg.max_vertices,
        xmin: b.xmin,
        ymin: b.ymin,
        xmax: b.xmax,
        ymax: b.ymax,
    }
}

fn extract(cdt: &Cdt, excluded: &BTreeSet<FixedFaceHandle<spade::handles::InnerTag>>) -> Piece {
    let mut remap = vec![usize::MAX; cdt.num_vertices()];
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for face in cdt.inner_faces() {
        if excluded.contains(&face.fix()) {
            continue;
        }
        let mut tri = [0usize; 3];
        for (k, v) in face.vertices().iter().enumerate() {
            let idx = v.fix().index();
            if remap[idx] == usize::MAX {
                remap[idx] = vertices.len();
                let p = v.position();
                vertices.push(Point::new(p.x, p.y));
            }
            tri[k] = remap[idx];
        }
        if orient(&vertices[tri[0]], &vertices[tri[1]], &vertices[tri[2]]) < 0.0 {
            tri.swap(1, 2);
        }
        triangles.push(tri);
    }
    Piece { vertices, triangles }
}

/// Triangulates `domain` (plus an extension ring of `cfg.extension_width`).
pub fn build_mesh(domain: &[Polygon], cfg: &MeshConfig) -> Result<Mesh> {
    cfg.validate()?;
    if domain.is_empty() {
        return Err(invalid("mesh domain is empty"));
    }
    let dbox = domain_bbox(domain);
    let total: f64 = domain.iter().map(Polygon::area).sum();
    if !(total > 1e-12 * dbox.area()) {
        return Err(invalid("mesh domain has (near) zero area"));
    }
    let inner_loops: Vec<Vec<Point>> = domain
        .iter()
        .flat_map(|p| p.rings())
        .map(|r| subdivide_ring(r, cfg.max_edge_inner))
        .collect();
    let inner = triangulate_region(&inner_loops, cfg.max_edge_inner, cfg)?;

    let mut vertices = inner.vertices;
    let mut inner_flag = vec![true; vertices.len()];
    let mut triangles = inner.triangles;
    let mut triangle_inner = vec![true; triangles.len()];

    if cfg.extension_width > 0.0 {
        let outer = dilate(domain, cfg.extension_width)?;
        let mut loops: Vec<Vec<Point>> = outer
            .iter()
            .flat_map(|p| p.rings())
            .map(|r| subdivide_ring(r, cfg.max_edge_outer))
            .collect();
        loops.extend(inner_loops.iter().cloned());
        let ring = triangulate_region(&loops, cfg.max_edge_outer, cfg)?;
        let mut index: BTreeMap<(u64, u64), usize> = vertices
            .iter()
            .enumerate()
            .map(|(i, p)| ((p.x.to_bits(), p.y.to_bits()), i))
            .collect();
        let remap: Vec<usize> = ring
            .vertices
            .iter()
            .map(|p| {
                *index.entry((p.x.to_bits(), p.y.to_bits())).or_insert_with(|| {
                    vertices.push(*p);
                    inner_flag.push(false);
                    vertices.len() - 1
                })
            })
            .collect();
        for tri in ring.triangles {
            triangles.push(tri.map(|v| remap[v]));
            triangle_inner.push(false);
        }
    }
    Mesh::new(vertices, triangles, inner_flag, triangle_inner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_square() -> Vec<Polygon> {
        alloc::vec![Polygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap()]
    }

    #[test]
    fn unit_square_mesh_respects_edge_bound_and_area() {
        let cfg = MeshConfig::new(0.3, 0.3, 0.0);
        let mesh = build_mesh(&unit_square(), &cfg).unwrap();
        for t in 0..mesh.n_triangles() {
            assert!(mesh.max_edge(t) <= 0.3 * (1.0 + 1e-9));
            assert!(mesh.min_angle(t) >= cfg.min_angle - 1e-6, "angle {}", mesh.min_angle(t));
        }
        assert!((mesh.total_area() - 1.0).abs() < 1e-9);
        assert!(mesh.inner_flag.iter().all(|&f| f));
    }

    #[test]
    fn euler_characteristic_of_disk() {
        for cfg in [MeshConfig::new(0.3, 0.3, 0.0), MeshConfig::new(0.2, 0.4, 0.5)] {
            let mesh = build_mesh(&unit_square(), &cfg).unwrap();
            let v = mesh.n_vertices() as i64;
            let e = mesh.edges().len() as i64;
            let f = mesh.n_triangles() as i64 + 1;
            assert_eq!(v - e + f, 2);
        }
    }

    #[test]
    fn extension_ring_covers_dilated_domain() {
        let cfg = MeshConfig::new(0.1, 0.25, 0.5);
        let mesh = build_mesh(&unit_square(), &cfg).unwrap();
        assert!(mesh.inner_flag.iter().any(|&f| !f));
        let dilated = 1.0 + 4.0 * 0.5 + core::f64::consts::PI * 0.25;
        assert!((mesh.total_area() - dilated).abs() / dilated < 0.02);
        assert!((mesh.inner_area() - 1.0).abs() < 1e-9);
        for t in 0..mesh.n_triangles() {
            let h = if mesh.triangle_inner[t] { 0.1 } else { 0.25 };
            assert!(mesh.max_edge(t) <= h * (1.0 + 1e-9));
        }
        // Inner vertices are exactly those of inner triangles.
        for (t, tri) in mesh.triangles.iter().enumerate() {
            if mesh.triangle_inner[t] {
                assert!(tri.iter().all(|&v| mesh.inner_flag[v]));
            }
        }
    }

    #[test]
    fn degenerate_config_and_domain_rejected() {
        assert!(build_mesh(&unit_square(), &MeshConfig::new(0.0, 1.0, 0.0)).is_err());
        assert!(build_mesh(&unit_square(), &MeshConfig::new(0.5, 0.2, 0.0)).is_err());
        let mut cfg = MeshConfig::new(0.3, 0.3, 0.0);
        cfg.min_angle = 40.0;
        assert!(build_mesh(&unit_square(), &cfg).is_err());
        assert!(build_mesh(&[], &MeshConfig::new(0.3, 0.3, 0.0)).is_err());
    }

    #[test]
    fn vertex_cap_reports_region() {
        let mut cfg = MeshConfig::new(0.01, 0.01, 0.0);
        cfg.max_vertices = 200;
        match build_mesh(&unit_square(), &cfg) {
            Err(Error::MeshRefinement { cap, .. }) => assert_eq!(cap, 200),
            other => panic!("expected refinement error, got {other:?}"),
        }
    }

    #[test]
    fn projector_identity_and_centroid() {
        let mesh = build_mesh(&unit_square(), &MeshConfig::new(0.3, 0.3, 0.0)).unwrap();
        let pts: Vec<Point> = mesh.vertices.clone();
        let a = project(&mesh, &pts);
        for (k, _) in pts.iter().enumerate() {
            let row = a.dense_row(k);
            for (j, v) in row.iter().enumerate() {
                assert_eq!(*v, if j == k { 1.0 } else { 0.0 });
            }
        }
        let [i, j, l] = mesh.triangles[0];
        let c = Point::new(
            (mesh.vertices[i].x + mesh.vertices[j].x + mesh.vertices[l].x) / 3.0,
            (mesh.vertices[i].y + mesh.vertices[j].y + mesh.vertices[l].y) / 3.0,
        );
        let row = project(&mesh, &[c]).rows[0];
        assert_eq!(row.triangle, Some(0));
        for w in row.weights {
            assert!((w - 1.0 / 3.0).abs() < 1e-14);
        }
        let outside = project(&mesh, &[Point::new(2.0, 2.0), Point::new(0.5, -1e-3)]);
        assert_eq!(outside.outside_rows(), alloc::vec![0, 1]);
        assert_eq!(outside.apply(&alloc::vec![1.0; mesh.n_vertices()]), alloc::vec![0.0, 0.0]);
    }

    #[test]
    fn shared_edge_points_resolve_to_lowest_triangle() {
        let mesh = build_mesh(&unit_square(), &MeshConfig::new(0.5, 0.5, 0.0)).unwrap();
        for (a, b) in mesh.edges() {
            let p = Point::new(0.5 * (mesh.vertices[a].x + mesh.vertices[b].x), 0.5 * (mesh.vertices[a].y + mesh.vertices[b].y));
            let owners: Vec<usize> = (0..mesh.n_triangles())
                .filter(|&t| mesh.triangles[t].contains(&a) && mesh.triangles[t].contains(&b))
                .collect();
            let row = project(&mesh, &[p]).rows[0];
            assert_eq!(row.triangle, Some(owners[0]));
        }
    }

    #[test]
    fn right_triangle_dual_areas() {
        let mesh = Mesh::new(
            alloc::vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)],
            alloc::vec![[0, 1, 2]],
            alloc::vec![true; 3],
            alloc::vec![true],
        )
        .unwrap();
        for w in dual_areas(&mesh) {
            assert!((w - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn dual_areas_invariant_under_remeshing() {
        for h in [0.15, 0.4] {
            let mesh = build_mesh(&unit_square(), &MeshConfig::new(h, h, 0.0)).unwrap();
            let w = dual_areas(&mesh);
            assert!(w.iter().all(|&x| x > 0.0));
            let sum: f64 = w.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let tri_sum = mesh.total_area();
            assert!((sum - tri_sum).abs() < 1e-13);
        }
    }

    #[test]
    fn triangle_count_monotone_in_edge_length() {
        let counts: Vec<usize> = [0.1, 0.2, 0.4]
            .iter()
            .map(|&h| build_mesh(&unit_square(), &MeshConfig::new(h, h, 0.0)).unwrap().n_triangles())
            .collect();
        assert!(counts[0] >= counts[1] && counts[1] >= counts[2], "{counts:?}");
    }

    #[test]
    fn extension_rings_have_no_slivers() {
        for (side, h, ext) in [(4.0, 0.5, 1.0), (6.0, 0.5, 1.0), (10.0, 1.0, 2.0), (3.0, 0.6, 0.5)] {
            let mesh = build_mesh(&[Polygon::rectangle(0.0, 0.0, side, side).unwrap()], &MeshConfig::new(h, 2.0 * h, ext)).unwrap();
            let worst = (0..mesh.n_triangles()).map(|t| mesh.min_angle(t)).fold(f64::INFINITY, f64::min);
            assert!(worst > 10.0, "side {side}: min angle {worst}");
        }
    }

    #[test]
    fn invalid_meshes_rejected() {
        let pts = alloc::vec![Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!(Mesh::new(pts.clone(), alloc::vec![[0, 2, 1]], alloc::vec![true; 3], alloc::vec![true]).is_err());
        assert!(Mesh::new(pts.clone(), alloc::vec![[0, 1, 3]], alloc::vec![true; 3], alloc::vec![true]).is_err());
        assert!(Mesh::new(pts, alloc::vec![[0, 1, 2]], alloc::vec![true; 2], alloc::vec![true]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn projector_reproduces_affine_functions(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64,
                                                 pts in proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64), 1..50)) {
            let mesh = build_mesh(&unit_square(), &MeshConfig::new(0.25, 0.25, 0.0)).unwrap();
            let f: Vec<f64> = mesh.vertices.iter().map(|p| a + b * p.x + c * p.y).collect();
            let q: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
            let proj = project(&mesh, &q);
            let vals = proj.apply(&f);
            for (p, v) in q.iter().zip(vals) {
                let want = a + b * p.x + c * p.y;
                prop_assert!((v - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
            for r in &proj.rows {
                prop_assert!(r.weights.iter().all(|&w| w >= 0.0));
                prop_assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            }
        }
    }
}
