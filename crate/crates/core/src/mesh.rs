//! Conforming triangulations of rectangular domains.
//!
//! Cells are stored counterclockwise. Local edge `k` of a cell is the edge
//! opposite local vertex `k`, i.e. `(v[(k + 1) % 3], v[(k + 2) % 3])`.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

/// Axis-aligned box `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self { x0, y0, x1, y1 }
    }

    /// The square `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64) -> Self {
        Self::new(lo, lo, hi, hi)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Whether `p` lies on the boundary, up to a tolerance relative to the box size.
    pub fn on_boundary(&self, p: &Point2<f64>) -> bool {
        let tol = 1e-12 * self.width().max(self.height());
        (p.x - self.x0).abs() <= tol
            || (p.x - self.x1).abs() <= tol
            || (p.y - self.y0).abs() <= tol
            || (p.y - self.y1).abs() <= tol
    }
}

/// An edge on the domain boundary, oriented as in its owning cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFacet {
    pub vertices: [usize; 2],
    pub cell: usize,
    /// Local edge index within `cell`.
    pub local_edge: usize,
    pub normal: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshsizeReport {
    pub h_max: f64,
    pub h_min: f64,
    pub per_cell_h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    domain: Rect,
    vertices: Vec<Point2<f64>>,
    cells: Vec<[usize; 3]>,
    refinement_edges: Vec<u8>,
    /// Sorted unique vertex pairs `(min, max)`.
    edges: Vec<[usize; 2]>,
    /// Global edge index of each local edge.
    cell_edges: Vec<[usize; 3]>,
    boundary_facets: Vec<BoundaryFacet>,
}

fn local_edge(cell: &[usize; 3], k: usize) -> [usize; 2] {
    [cell[(k + 1) % 3], cell[(k + 2) % 3]]
}

fn sorted_pair(e: [usize; 2]) -> [usize; 2] {
    if e[0] < e[1] {
        e
    } else {
        [e[1], e[0]]
    }
}

fn signed_area(a: &Point2<f64>, b: &Point2<f64>, c: &Point2<f64>) -> f64 {
    0.5 * ((b - a).perp(&(c - a)))
}

impl Mesh {
    /// Builds a mesh from raw parts, computing edges, boundary facets and
    /// longest-edge refinement markers, then validates it.
    pub fn from_parts(
        domain: Rect,
        vertices: Vec<Point2<f64>>,
        cells: Vec<[usize; 3]>,
    ) -> Result<Self> {
        let refinement_edges = vec![0; cells.len()];
        let mut mesh = Self::assemble(domain, vertices, cells, refinement_edges)?;
        mesh.reset_refinement_edges();
        mesh.validate()?;
        Ok(mesh)
    }

    fn assemble(
        domain: Rect,
        vertices: Vec<Point2<f64>>,
        cells: Vec<[usize; 3]>,
        refinement_edges: Vec<u8>,
    ) -> Result<Self> {
        for (c, cell) in cells.iter().enumerate() {
            if cell.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} references a vertex out of range"
                )));
            }
        }
        let mut edges: Vec<[usize; 2]> = cells
            .iter()
            .flat_map(|cell| (0..3).map(move |k| sorted_pair(local_edge(cell, k))))
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut incidence = vec![0usize; edges.len()];
        let cell_edges: Vec<[usize; 3]> = cells
            .iter()
            .map(|cell| {
                let mut ids = [0; 3];
                for (k, id) in ids.iter_mut().enumerate() {
                    let e = sorted_pair(local_edge(cell, k));
                    *id = edges.binary_search(&e).expect("edge was collected above");
                    incidence[*id] += 1;
                }
                ids
            })
            .collect();

        let mut boundary_facets = Vec::new();
        for (c, cell) in cells.iter().enumerate() {
            for k in 0..3 {
                if incidence[cell_edges[c][k]] == 1 {
                    let [a, b] = local_edge(cell, k);
                    let d = vertices[b] - vertices[a];
                    let normal = Vector2::new(d.y, -d.x).normalize();
                    boundary_facets.push(BoundaryFacet {
                        vertices: [a, b],
                        cell: c,
                        local_edge: k,
                        normal,
                    });
                }
            }
        }
        if let Some(e) = incidence.iter().position(|&n| n > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {:?} is shared by more than two cells",
                edges[e]
            )));
        }

        Ok(Self {
            domain,
            vertices,
            cells,
            refinement_edges,
            edges,
            cell_edges,
            boundary_facets,
        })
    }

    /// Marks the longest edge of every cell as its refinement edge. Ties within
    /// a relative `1e-12` go to the lowest sorted vertex pair.
    fn reset_refinement_edges(&mut self) {
        for (c, cell) in self.cells.iter().enumerate() {
            let mut best = 0;
            let mut best_len = -1.0;
            let mut best_pair = [usize::MAX; 2];
            for k in 0..3 {
                let [a, b] = local_edge(cell, k);
                let len = (self.vertices[b] - self.vertices[a]).norm();
                let pair = sorted_pair([a, b]);
                let tie = (len - best_len).abs() <= 1e-12 * len.max(best_len);
                if (!tie && len > best_len) || (tie && pair < best_pair) {
                    best = k;
                    best_len = len;
                    best_pair = pair;
                }
            }
            self.refinement_edges[c] = best as u8;
        }
    }

    /// Checks orientation, edge incidence, boundary placement and total area.
    pub fn validate(&self) -> Result<()> {
        let mut total = 0.0;
        for (c, cell) in self.cells.iter().enumerate() {
            let area = self.cell_area(c);
            if area <= 0.0 || !area.is_finite() {
                return Err(Error::InvalidMesh(format!(
                    "cell {c} {cell:?} has non-positive signed area {area}"
                )));
            }
            total += area;
        }
        for f in &self.boundary_facets {
            let [a, b] = f.vertices;
            let mid = Point2::from((self.vertices[a].coords + self.vertices[b].coords) * 0.5);
            if !(self.domain.on_boundary(&self.vertices[a])
                && self.domain.on_boundary(&self.vertices[b])
                && self.domain.on_boundary(&mid))
            {
                return Err(Error::InvalidMesh(format!(
                    "edge ({a}, {b}) has a single cell but is not on the domain boundary"
                )));
            }
        }
        let expected = self.domain.area();
        if (total - expected).abs() > 1e-12 * expected {
            return Err(Error::InvalidMesh(format!(
                "cells cover area {total}, domain area is {expected}"
            )));
        }
        Ok(())
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    pub fn cells(&self) -> &[[usize; 3]] {
        &self.cells
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn cell_edges(&self) -> &[[usize; 3]] {
        &self.cell_edges
    }

    pub fn boundary_facets(&self) -> &[BoundaryFacet] {
        &self.boundary_facets
    }

    pub fn refinement_edges(&self) -> &[u8] {
        &self.refinement_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn cell_points(&self, c: usize) -> [Point2<f64>; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn cell_area(&self, c: usize) -> f64 {
        let [a, b, d] = self.cell_points(c);
        signed_area(&a, &b, &d)
    }

    /// Longest edge of cell `c`.
    pub fn cell_diameter(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        (0..3)
            .map(|k| (p[(k + 2) % 3] - p[(k + 1) % 3]).norm())
            .fold(0.0, f64::max)
    }

    pub fn cell_centroid(&self, c: usize) -> Point2<f64> {
        let [a, b, d] = self.cell_points(c);
        Point2::from((a.coords + b.coords + d.coords) / 3.0)
    }

    /// Smallest interior angle of cell `c`, in radians.
    pub fn cell_min_angle(&self, c: usize) -> f64 {
        let p = self.cell_points(c);
        (0..3)
            .map(|k| {
                let u = p[(k + 1) % 3] - p[k];
                let v = p[(k + 2) % 3] - p[k];
                (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn meshsize(&self) -> MeshsizeReport {
        let per_cell_h: Vec<f64> = (0..self.n_cells()).map(|c| self.cell_diameter(c)).collect();
        let h_max = per_cell_h.iter().copied().fold(0.0, f64::max);
        let h_min = per_cell_h.iter().copied().fold(f64::INFINITY, f64::min);
        MeshsizeReport {
            h_max,
            h_min,
            per_cell_h,
        }
    }

    pub fn h_max(&self) -> f64 {
        self.meshsize().h_max
    }

    /// Plain-text dump: `vertices N cells M`, then `x y` and `i j k` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "vertices {} cells {}", self.n_vertices(), self.n_cells());
        for p in &self.vertices {
            let _ = writeln!(out, "{:.16e} {:.16e}", p.x, p.y);
        }
        for [a, b, c] in &self.cells {
            let _ = writeln!(out, "{a} {b} {c}");
        }
        out
    }

    /// Parses the format written by [`Mesh::to_text`].
    pub fn from_text(domain: Rect, text: &str) -> Result<Self> {
        let parse_err = |msg: &str| Error::Parse(format!("mesh: {msg}"));
        let mut lines = text.lines();
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| parse_err("empty input"))?
            .split_whitespace()
            .collect();
        let (nv, nc) = match header.as_slice() {
            ["vertices", nv, "cells", nc] => (
                nv.parse::<usize>().map_err(|_| parse_err("bad vertex count"))?,
                nc.parse::<usize>().map_err(|_| parse_err("bad cell count"))?,
            ),
            _ => return Err(parse_err("bad header")),
        };
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let line = lines.next().ok_or_else(|| parse_err("missing vertex line"))?;
            let xy: Vec<f64> = line
                .split_whitespace()
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err("bad vertex coordinate"))?;
            if xy.len() != 2 {
                return Err(parse_err("vertex line needs two coordinates"));
            }
            vertices.push(Point2::new(xy[0], xy[1]));
        }
        let mut cells = Vec::with_capacity(nc);
        for _ in 0..nc {
            let line = lines.next().ok_or_else(|| parse_err("missing cell line"))?;
            let ids: Vec<usize> = line
                .split_whitespace()
                .map(|s| s.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| parse_err("bad cell index"))?;
            if ids.len() != 3 {
                return Err(parse_err("cell line needs three indices"));
            }
            cells.push([ids[0], ids[1], ids[2]]);
        }
        Self::from_parts(domain, vertices, cells)
    }
}

/// `n x n` grid of subsquares, each split into four triangles through its
/// centroid. Grid vertices come first (row-major), then centroids.
pub fn generate_criss_cross(domain: Rect, n: usize) -> Result<Mesh> {
    if !(domain.width() > 0.0 && domain.height() > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "domain {domain:?} must have positive side lengths"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "criss-cross subdivision count must be at least 1".into(),
        ));
    }
    let dx = domain.width() / n as f64;
    let dy = domain.height() / n as f64;
    let grid = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            // Pin the far sides exactly so boundary tests see exact coordinates.
            let x = if i == n { domain.x1 } else { domain.x0 + i as f64 * dx };
            let y = if j == n { domain.y1 } else { domain.y0 + j as f64 * dy };
            vertices.push(Point2::new(x, y));
        }
    }
    let centroid_base = vertices.len();
    for j in 0..n {
        for i in 0..n {
            let x = 0.5 * (vertices[grid(i, j)].x + vertices[grid(i + 1, j)].x);
            let y = 0.5 * (vertices[grid(i, j)].y + vertices[grid(i, j + 1)].y);
            vertices.push(Point2::new(x, y));
        }
    }
    let mut cells = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let c = centroid_base + j * n + i;
            let (sw, se) = (grid(i, j), grid(i + 1, j));
            let (ne, nw) = (grid(i + 1, j + 1), grid(i, j + 1));
            cells.push([c, sw, se]);
            cells.push([c, se, ne]);
            cells.push([c, ne, nw]);
            cells.push([c, nw, sw]);
        }
    }
    Mesh::from_parts(domain, vertices, cells)
}

/// Red refinement: every cell is split into four similar children through its
/// edge midpoints. New vertices follow the old ones in sorted-edge order.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let nv = mesh.n_vertices();
    let mut vertices = mesh.vertices.clone();
    vertices.extend(mesh.edges.iter().map(|&[a, b]| {
        Point2::from((mesh.vertices[a].coords + mesh.vertices[b].coords) * 0.5)
    }));
    let mut cells = Vec::with_capacity(4 * mesh.n_cells());
    for (c, &[v0, v1, v2]) in mesh.cells.iter().enumerate() {
        let e = mesh.cell_edges[c];
        let (m0, m1, m2) = (nv + e[0], nv + e[1], nv + e[2]);
        cells.push([v0, m2, m1]);
        cells.push([m2, v1, m0]);
        cells.push([m1, m0, v2]);
        cells.push([m0, m1, m2]);
    }
    Mesh::from_parts(mesh.domain, vertices, cells)
}

/// Newest-vertex bisection of the marked cells plus the closure needed to
/// keep the mesh conforming. An empty marking returns a copy of the input.
pub fn refine_adaptive(mesh: &Mesh, marked: &[usize]) -> Result<Mesh> {
    if let Some(&c) = marked.iter().find(|&&c| c >= mesh.n_cells()) {
        return Err(Error::InvalidArgument(format!(
            "marked cell {c} out of range ({} cells)",
            mesh.n_cells()
        )));
    }
    if marked.is_empty() {
        return Ok(mesh.clone());
    }

    let ref_edge = |c: usize| mesh.cell_edges[c][mesh.refinement_edges[c] as usize];
    let mut edge_marked = vec![false; mesh.n_edges()];
    for &c in marked {
        edge_marked[ref_edge(c)] = true;
    }
    // Closure: a cell with any marked edge must also bisect its refinement edge.
    let mut changed = true;
    while changed {
        changed = false;
        for c in 0..mesh.n_cells() {
            let re = ref_edge(c);
            if !edge_marked[re] && mesh.cell_edges[c].iter().any(|&e| edge_marked[e]) {
                edge_marked[re] = true;
                changed = true;
            }
        }
    }

    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<[usize; 2], usize> = HashMap::new();
    for (e, &[a, b]) in mesh.edges.iter().enumerate() {
        if edge_marked[e] {
            midpoint.insert([a, b], vertices.len());
            vertices.push(Point2::from(
                (mesh.vertices[a].coords + mesh.vertices[b].coords) * 0.5,
            ));
        }
    }

    let mut cells = Vec::with_capacity(mesh.n_cells() + 2 * midpoint.len());
    let mut refinement_edges = Vec::with_capacity(cells.capacity());
    for (c, cell) in mesh.cells.iter().enumerate() {
        let r = mesh.refinement_edges[c] as usize;
        // Rotate so that the refinement edge is local edge 0.
        let rotated = [cell[r], cell[(r + 1) % 3], cell[(r + 2) % 3]];
        bisect(rotated, &midpoint, &mut cells, &mut refinement_edges);
    }
    let refined = Mesh::assemble(mesh.domain, vertices, cells, refinement_edges)?;
    refined.validate()?;
    Ok(refined)
}

/// Bisects `cell` (refinement edge = local edge 0) while its refinement edge
/// has a midpoint, pushing the leaves.
fn bisect(
    cell: [usize; 3],
    midpoint: &HashMap<[usize; 2], usize>,
    cells: &mut Vec<[usize; 3]>,
    refinement_edges: &mut Vec<u8>,
) {
    let [v0, v1, v2] = cell;
    match midpoint.get(&sorted_pair([v1, v2])) {
        Some(&m) => {
            bisect([m, v0, v1], midpoint, cells, refinement_edges);
            bisect([m, v2, v0], midpoint, cells, refinement_edges);
        }
        None => {
            cells.push(cell);
            refinement_edges.push(0);
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Moves every interior vertex by a deterministic hash-based offset of length
/// at most `fraction * h_min`. Boundary vertices stay put.
pub fn jitter_interior(mesh: &Mesh, fraction: f64) -> Result<Mesh> {
    let h_min = mesh.meshsize().h_min;
    let amplitude = fraction * h_min;
    let mut on_boundary = vec![false; mesh.n_vertices()];
    for f in &mesh.boundary_facets {
        on_boundary[f.vertices[0]] = true;
        on_boundary[f.vertices[1]] = true;
    }
    let vertices = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if on_boundary[i] {
                return *p;
            }
            let h1 = splitmix64(i as u64);
            let h2 = splitmix64(h1);
            let radius = (h1 >> 11) as f64 / (1u64 << 53) as f64;
            let angle = (h2 >> 11) as f64 / (1u64 << 53) as f64 * std::f64::consts::TAU;
            p + Vector2::new(angle.cos(), angle.sin()) * (amplitude * radius)
        })
        .collect();
    Mesh::from_parts(mesh.domain, vertices, mesh.cells.clone())
}

/// Criss-cross mesh refined once, with interior vertices jittered by up to
/// `0.1 h_min`. Deterministic.
pub fn generate_irregular(domain: Rect, n: usize) -> Result<Mesh> {
    let fine = refine_uniform(&generate_criss_cross(domain, n)?)?;
    jitter_interior(&fine, 0.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> Rect {
        Rect::square(-1.0, 1.0)
    }

    #[test]
    fn criss_cross_counts() {
        let m = generate_criss_cross(unit(), 1).unwrap();
        assert_eq!((m.n_vertices(), m.n_cells()), (5, 4));
        let m = generate_criss_cross(unit(), 2).unwrap();
        assert_eq!((m.n_vertices(), m.n_cells()), (13, 16));
    }

    #[test]
    fn criss_cross_rejects_bad_input() {
        assert!(matches!(
            generate_criss_cross(unit(), 0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            generate_criss_cross(Rect::square(1.0, 1.0), 2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn euler_characteristic() {
        for n in 1..6 {
            let m = generate_criss_cross(unit(), n).unwrap();
            let chi = m.n_vertices() as i64 - m.n_edges() as i64 + m.n_cells() as i64;
            assert_eq!(chi, 1);
        }
    }

    #[test]
    fn uniform_refinement_halves_h() {
        let m = generate_criss_cross(unit(), 1).unwrap();
        assert_eq!(m.h_max(), 2.0);
        let r = refine_uniform(&m).unwrap();
        assert_eq!(r.n_cells(), 16);
        assert_eq!(r.n_vertices(), 13);
        assert_eq!(r.h_max(), 1.0);
    }

    #[test]
    fn uniform_refinement_keeps_min_angle() {
        let m = generate_irregular(Rect::square(-0.95, 1.0), 2).unwrap();
        let r = refine_uniform(&m).unwrap();
        for c in 0..m.n_cells() {
            let parent = m.cell_min_angle(c);
            for child in 4 * c..4 * c + 4 {
                assert!((r.cell_min_angle(child) - parent).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn boundary_normals_point_outward() {
        let m = generate_criss_cross(unit(), 3).unwrap();
        assert_eq!(m.boundary_facets().len(), 12);
        for f in m.boundary_facets() {
            let mid = (m.vertices()[f.vertices[0]].coords + m.vertices()[f.vertices[1]].coords) / 2.0;
            let inside = m.cell_centroid(f.cell).coords;
            assert!(f.normal.dot(&(mid - inside)) > 0.0);
            assert!((f.normal.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn criss_cross_refinement_edge_is_the_square_side() {
        let m = generate_criss_cross(unit(), 2).unwrap();
        for (c, &r) in m.refinement_edges().iter().enumerate() {
            assert_eq!(r, 0, "cell {c}: centroid is local vertex 0");
        }
    }

    #[test]
    fn adaptive_identity_and_all_marked() {
        let m = generate_criss_cross(unit(), 2).unwrap();
        let same = refine_adaptive(&m, &[]).unwrap();
        assert_eq!(same.cells(), m.cells());
        assert_eq!(same.vertices(), m.vertices());

        let all: Vec<usize> = (0..m.n_cells()).collect();
        let r = refine_adaptive(&m, &all).unwrap();
        assert!(r.n_cells() >= 2 * m.n_cells());
        assert!(matches!(
            refine_adaptive(&m, &[m.n_cells()]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn text_round_trip() {
        let m = generate_irregular(unit(), 2).unwrap();
        let text = m.to_text();
        assert!(text.starts_with(&format!("vertices {} cells {}\n", m.n_vertices(), m.n_cells())));
        let back = Mesh::from_text(unit(), &text).unwrap();
        assert_eq!(back.vertices(), m.vertices());
        assert_eq!(back.cells(), m.cells());
    }

    #[test]
    fn irregular_mesh_is_deterministic_and_valid() {
        let a = generate_irregular(Rect::square(-0.95, 1.0), 4).unwrap();
        let b = generate_irregular(Rect::square(-0.95, 1.0), 4).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let regular = refine_uniform(&generate_criss_cross(Rect::square(-0.95, 1.0), 4).unwrap()).unwrap();
        let h = regular.meshsize().h_min;
        let moved = a
            .vertices()
            .iter()
            .zip(regular.vertices())
            .map(|(p, q)| (p - q).norm())
            .fold(0.0, f64::max);
        assert!(moved > 0.0 && moved <= 0.1 * h + 1e-15);
    }
}
