//! Lagrange P1/P2 spaces on a [`Mesh`].
//!
//! Global DOF numbering: vertex DOFs in vertex order, then (for P2) one DOF
//! per edge in the mesh's sorted-edge order. Local DOFs: vertices 0..3, then
//! edge midpoints 3..6 with local edge `k` opposite local vertex `k`.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{Matrix2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::quadrature::{LineRule, QuadratureRule};

pub const MAX_LOCAL: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Degree {
    P1,
    P2,
}

impl Degree {
    pub fn order(self) -> usize {
        match self {
            Degree::P1 => 1,
            Degree::P2 => 2,
        }
    }

    /// Local DOFs per cell, `(p + 1)(p + 2) / 2`.
    pub fn n_local(self) -> usize {
        match self {
            Degree::P1 => 3,
            Degree::P2 => 6,
        }
    }
}

impl TryFrom<usize> for Degree {
    type Error = Error;

    fn try_from(p: usize) -> Result<Self> {
        match p {
            1 => Ok(Degree::P1),
            2 => Ok(Degree::P2),
            _ => Err(Error::UnsupportedDegree(p)),
        }
    }
}

/// Basis values and derivatives with respect to the three barycentric
/// coordinates, at one reference point.
#[derive(Debug, Clone, Copy)]
pub struct BasisEval {
    pub values: [f64; MAX_LOCAL],
    pub dlambda: [[f64; 3]; MAX_LOCAL],
}

pub fn eval_basis(degree: Degree, bary: [f64; 3]) -> BasisEval {
    let mut values = [0.0; MAX_LOCAL];
    let mut dlambda = [[0.0; 3]; MAX_LOCAL];
    match degree {
        Degree::P1 => {
            for i in 0..3 {
                values[i] = bary[i];
                dlambda[i][i] = 1.0;
            }
        }
        Degree::P2 => {
            for i in 0..3 {
                values[i] = bary[i] * (2.0 * bary[i] - 1.0);
                dlambda[i][i] = 4.0 * bary[i] - 1.0;
            }
            for k in 0..3 {
                let (a, b) = ((k + 1) % 3, (k + 2) % 3);
                values[3 + k] = 4.0 * bary[a] * bary[b];
                dlambda[3 + k][a] = 4.0 * bary[b];
                dlambda[3 + k][b] = 4.0 * bary[a];
            }
        }
    }
    BasisEval { values, dlambda }
}

/// Affine map data of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub vertices: [Point2<f64>; 3],
    /// `det J = 2 |K|`.
    pub det: f64,
    pub grad_lambda: [Vector2<f64>; 3],
}

impl CellGeometry {
    pub fn new(vertices: [Point2<f64>; 3]) -> Self {
        let jac = Matrix2::from_columns(&[vertices[1] - vertices[0], vertices[2] - vertices[0]]);
        let det = jac.determinant();
        let inv_t = jac
            .try_inverse()
            .expect("cells have positive area")
            .transpose();
        let g1 = inv_t * Vector2::new(1.0, 0.0);
        let g2 = inv_t * Vector2::new(0.0, 1.0);
        Self {
            vertices,
            det,
            grad_lambda: [-g1 - g2, g1, g2],
        }
    }

    pub fn point(&self, bary: [f64; 3]) -> Point2<f64> {
        Point2::from(
            self.vertices[0].coords * bary[0]
                + self.vertices[1].coords * bary[1]
                + self.vertices[2].coords * bary[2],
        )
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det
    }

    /// Physical gradient from barycentric derivatives.
    pub fn gradient(&self, dlambda: &[f64; 3]) -> Vector2<f64> {
        self.grad_lambda[0] * dlambda[0]
            + self.grad_lambda[1] * dlambda[1]
            + self.grad_lambda[2] * dlambda[2]
    }
}

/// Basis values tabulated at the points of a quadrature rule.
#[derive(Debug, Clone)]
pub struct BasisTable {
    pub evals: Vec<BasisEval>,
}

impl BasisTable {
    pub fn new(degree: Degree, points: &[[f64; 3]]) -> Self {
        Self {
            evals: points.iter().map(|&b| eval_basis(degree, b)).collect(),
        }
    }
}

#[derive(Debug)]
pub struct FunctionSpace {
    mesh: Arc<Mesh>,
    degree: Degree,
    dof_coords: Vec<Point2<f64>>,
    cell_dofs: Vec<[usize; MAX_LOCAL]>,
    boundary_dofs: Vec<usize>,
    interior_dofs: Vec<usize>,
    /// Position in `interior_dofs`, or `usize::MAX` on the boundary.
    interior_index: Vec<usize>,
    geometry: Vec<CellGeometry>,
    volume_rule: QuadratureRule,
    volume_table: BasisTable,
    facet_rule: LineRule,
}

/// Builds the Lagrange space of degree `p` on `mesh`.
///
/// Volume terms use the degree-`2p + 2` triangle rule, boundary terms the
/// degree-`2p` Gauss-Legendre rule.
pub fn build_space(mesh: Arc<Mesh>, p: usize) -> Result<Arc<FunctionSpace>> {
    let degree = Degree::try_from(p)?;
    let nv = mesh.n_vertices();
    let mut dof_coords: Vec<Point2<f64>> = mesh.vertices().to_vec();
    let mut cell_dofs = Vec::with_capacity(mesh.n_cells());
    for (c, cell) in mesh.cells().iter().enumerate() {
        let mut dofs = [usize::MAX; MAX_LOCAL];
        dofs[..3].copy_from_slice(cell);
        if degree == Degree::P2 {
            for k in 0..3 {
                dofs[3 + k] = nv + mesh.cell_edges()[c][k];
            }
        }
        cell_dofs.push(dofs);
    }
    if degree == Degree::P2 {
        let verts = mesh.vertices();
        dof_coords.extend(
            mesh.edges()
                .iter()
                .map(|&[a, b]| Point2::from((verts[a].coords + verts[b].coords) * 0.5)),
        );
    }
    let n = dof_coords.len();

    let mut is_boundary = vec![false; n];
    for f in mesh.boundary_facets() {
        is_boundary[f.vertices[0]] = true;
        is_boundary[f.vertices[1]] = true;
        if degree == Degree::P2 {
            is_boundary[nv + mesh.cell_edges()[f.cell][f.local_edge]] = true;
        }
    }
    let boundary_dofs: Vec<usize> = (0..n).filter(|&i| is_boundary[i]).collect();
    let interior_dofs: Vec<usize> = (0..n).filter(|&i| !is_boundary[i]).collect();
    let mut interior_index = vec![usize::MAX; n];
    for (k, &i) in interior_dofs.iter().enumerate() {
        interior_index[i] = k;
    }

    let geometry = (0..mesh.n_cells())
        .map(|c| CellGeometry::new(mesh.cell_points(c)))
        .collect();
    let volume_rule = QuadratureRule::triangle(2 * degree.order() + 2);
    let volume_table = BasisTable::new(degree, &volume_rule.points);
    let facet_rule = LineRule::gauss_legendre(2 * degree.order());

    Ok(Arc::new(FunctionSpace {
        mesh,
        degree,
        dof_coords,
        cell_dofs,
        boundary_dofs,
        interior_dofs,
        interior_index,
        geometry,
        volume_rule,
        volume_table,
        facet_rule,
    }))
}

impl FunctionSpace {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> Degree {
        self.degree
    }

    pub fn n_dofs(&self) -> usize {
        self.dof_coords.len()
    }

    pub fn n_interior_dofs(&self) -> usize {
        self.interior_dofs.len()
    }

    pub fn n_local(&self) -> usize {
        self.degree.n_local()
    }

    pub fn dof_coords(&self) -> &[Point2<f64>] {
        &self.dof_coords
    }

    /// Local-to-global DOF map of cell `c`.
    pub fn cell_dofs(&self, c: usize) -> &[usize] {
        &self.cell_dofs[c][..self.n_local()]
    }

    pub fn boundary_dofs(&self) -> &[usize] {
        &self.boundary_dofs
    }

    pub fn interior_dofs(&self) -> &[usize] {
        &self.interior_dofs
    }

    pub fn is_boundary_dof(&self, i: usize) -> bool {
        self.interior_index[i] == usize::MAX
    }

    /// Position of DOF `i` among the interior DOFs.
    pub fn interior_index(&self, i: usize) -> Option<usize> {
        let k = self.interior_index[i];
        (k != usize::MAX).then_some(k)
    }

    pub fn geometry(&self, c: usize) -> &CellGeometry {
        &self.geometry[c]
    }

    pub fn volume_rule(&self) -> &QuadratureRule {
        &self.volume_rule
    }

    pub fn volume_table(&self) -> &BasisTable {
        &self.volume_table
    }

    pub fn facet_rule(&self) -> &LineRule {
        &self.facet_rule
    }

    pub fn n_quadrature_points(&self) -> usize {
        self.mesh.n_cells() * self.volume_rule.len()
    }

    /// Physical volume quadrature points, indexed `cell * n_q + q`.
    pub fn quadrature_points(&self) -> Vec<Point2<f64>> {
        self.geometry
            .iter()
            .flat_map(|g| self.volume_rule.points.iter().map(move |&b| g.point(b)))
            .collect()
    }

    /// Physical quadrature weights matching [`FunctionSpace::quadrature_points`].
    pub fn quadrature_weights(&self) -> Vec<f64> {
        self.geometry
            .iter()
            .flat_map(|g| self.volume_rule.weights.iter().map(move |w| w * g.det))
            .collect()
    }

    /// Evaluates `field` at every volume quadrature point.
    pub fn sample<T, F>(&self, field: F) -> Vec<T>
    where
        F: Fn(&Point2<f64>) -> T,
    {
        self.quadrature_points().iter().map(field).collect()
    }
}

/// Nodal interpolant of `field`.
pub fn interpolate<F>(field: F, space: &Arc<FunctionSpace>) -> Result<FEFunction>
where
    F: Fn(&Point2<f64>) -> f64,
{
    let coeffs = space
        .dof_coords()
        .iter()
        .map(|p| {
            let value = field(p);
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFinite { point: *p, value })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FEFunction::new(Arc::clone(space), coeffs))
}

#[derive(Debug, Clone)]
pub struct FEFunction {
    space: Arc<FunctionSpace>,
    coeffs: Vec<f64>,
}

impl FEFunction {
    pub fn new(space: Arc<FunctionSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.n_dofs(), "coefficient length must match the space");
        Self { space, coeffs }
    }

    pub fn zero(space: &Arc<FunctionSpace>) -> Self {
        Self::new(Arc::clone(space), vec![0.0; space.n_dofs()])
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Value and physical gradient at barycentric point `bary` of `cell`.
    pub fn evaluate(&self, cell: usize, bary: [f64; 3]) -> Result<(f64, Vector2<f64>)> {
        let n_cells = self.space.mesh().n_cells();
        if cell >= n_cells {
            return Err(Error::OutOfRange {
                index: cell,
                len: n_cells,
            });
        }
        let eval = eval_basis(self.space.degree(), bary);
        Ok(self.combine(cell, &eval))
    }

    fn combine(&self, cell: usize, eval: &BasisEval) -> (f64, Vector2<f64>) {
        let g = self.space.geometry(cell);
        let mut value = 0.0;
        let mut dl = [0.0; 3];
        for (i, &dof) in self.space.cell_dofs(cell).iter().enumerate() {
            let c = self.coeffs[dof];
            value += c * eval.values[i];
            for m in 0..3 {
                dl[m] += c * eval.dlambda[i][m];
            }
        }
        (value, g.gradient(&dl))
    }

    /// Values and gradients at every volume quadrature point (`cell * n_q + q`).
    pub fn at_quadrature_points(&self) -> Vec<(f64, Vector2<f64>)> {
        let table = self.space.volume_table();
        (0..self.space.mesh().n_cells())
            .flat_map(|c| table.evals.iter().map(move |e| self.combine(c, e)))
            .collect()
    }

    /// Plain-text dump, one `dof value` pair per line.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.coeffs.len() * 28);
        for (i, v) in self.coeffs.iter().enumerate() {
            let _ = writeln!(out, "{i} {v:.16e}");
        }
        out
    }

    pub fn from_text(space: &Arc<FunctionSpace>, text: &str) -> Result<Self> {
        let mut coeffs = vec![f64::NAN; space.n_dofs()];
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut it = line.split_whitespace();
            let (Some(i), Some(v), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad function line {line:?}")));
            };
            let i: usize = i.parse().map_err(|_| Error::Parse(format!("bad dof {i:?}")))?;
            let v: f64 = v.parse().map_err(|_| Error::Parse(format!("bad value {v:?}")))?;
            *coeffs.get_mut(i).ok_or(Error::OutOfRange {
                index: i,
                len: space.n_dofs(),
            })? = v;
        }
        if let Some(i) = coeffs.iter().position(|v| v.is_nan()) {
            return Err(Error::Parse(format!("dof {i} missing")));
        }
        Ok(Self::new(Arc::clone(space), coeffs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_criss_cross, generate_irregular, Rect};

    fn space(n: usize, p: usize) -> Arc<FunctionSpace> {
        let mesh = generate_criss_cross(Rect::square(-1.0, 1.0), n).unwrap();
        build_space(Arc::new(mesh), p).unwrap()
    }

    #[test]
    fn dof_counts() {
        let s1 = space(1, 1);
        assert_eq!(s1.n_dofs(), 5);
        assert_eq!(s1.boundary_dofs(), &[0, 1, 2, 3]);
        assert_eq!(s1.n_interior_dofs(), 1);
        let s2 = space(1, 2);
        assert_eq!(s2.n_dofs(), 13);
        assert_eq!(s2.cell_dofs(0).len(), 6);
        assert_eq!(s2.boundary_dofs().len(), 8);
    }

    #[test]
    fn unsupported_degree() {
        let mesh = Arc::new(generate_criss_cross(Rect::square(-1.0, 1.0), 1).unwrap());
        assert!(matches!(build_space(Arc::clone(&mesh), 3), Err(Error::UnsupportedDegree(3))));
        assert!(matches!(build_space(mesh, 0), Err(Error::UnsupportedDegree(0))));
    }

    #[test]
    fn boundary_dofs_lie_on_the_boundary() {
        for p in [1, 2] {
            let s = space(3, p);
            let domain = s.mesh().domain();
            for (i, x) in s.dof_coords().iter().enumerate() {
                assert_eq!(s.is_boundary_dof(i), domain.on_boundary(x), "dof {i} at {x}");
            }
        }
    }

    #[test]
    fn partition_of_unity() {
        for p in [Degree::P1, Degree::P2] {
            for q in QuadratureRule::triangle(6).points {
                let e = eval_basis(p, q);
                let sum: f64 = e.values[..p.n_local()].iter().sum();
                assert!((sum - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn interpolation_reproduces_linears() {
        for p in [1, 2] {
            let s = space(3, p);
            let u = interpolate(|x| x.x + x.y, &s).unwrap();
            for c in 0..s.mesh().n_cells() {
                let bary = [0.2, 0.3, 0.5];
                let (v, g) = u.evaluate(c, bary).unwrap();
                let x = s.geometry(c).point(bary);
                assert!((v - (x.x + x.y)).abs() < 1e-14);
                assert!((g - Vector2::new(1.0, 1.0)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn interpolation_values() {
        let s = space(2, 1);
        let u = interpolate(|_| 1.0, &s).unwrap();
        assert!(u.coeffs().iter().all(|&c| c == 1.0));
        let g = interpolate(|x| (-10.0 * x.coords.norm_squared()).exp(), &s).unwrap();
        let origin = s.dof_coords().iter().position(|x| x.coords.norm() == 0.0).unwrap();
        assert_eq!(g.coeffs()[origin], 1.0);
        assert!(matches!(
            interpolate(|x| 1.0 / x.x, &s),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn gradient_of_quadratic_at_centroid() {
        let s = space(2, 2);
        let u = interpolate(|x| x.x * x.x, &s).unwrap();
        for c in 0..s.mesh().n_cells() {
            let (_, g) = u.evaluate(c, [1.0 / 3.0; 3]).unwrap();
            let xbar = s.mesh().cell_centroid(c);
            assert!((g - Vector2::new(2.0 * xbar.x, 0.0)).norm() < 1e-13);
        }
        let lin = interpolate(|x| x.x, &space(2, 1)).unwrap();
        let (_, g) = lin.evaluate(5, [0.1, 0.1, 0.8]).unwrap();
        assert!((g - Vector2::new(1.0, 0.0)).norm() < 1e-14);
        assert!(matches!(lin.evaluate(99, [1.0, 0.0, 0.0]), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn continuity_across_edges() {
        let mesh = Arc::new(generate_irregular(Rect::square(-1.0, 1.0), 2).unwrap());
        let s = build_space(mesh, 2).unwrap();
        let coeffs = (0..s.n_dofs()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let u = FEFunction::new(Arc::clone(&s), coeffs);
        let m = s.mesh();
        // Compare both sides at a point along every interior edge.
        let mut owner: std::collections::HashMap<usize, (usize, usize)> = Default::default();
        for c in 0..m.n_cells() {
            for k in 0..3 {
                let e = m.cell_edges()[c][k];
                if let Some(&(c0, k0)) = owner.get(&e) {
                    let t = 0.3;
                    let point_on = |cell: usize, kk: usize| {
                        let a = m.cells()[cell][(kk + 1) % 3];
                        let mut bary = [0.0; 3];
                        let (ia, ib) = ((kk + 1) % 3, (kk + 2) % 3);
                        if a == m.edges()[e][0] {
                            bary[ia] = 1.0 - t;
                            bary[ib] = t;
                        } else {
                            bary[ia] = t;
                            bary[ib] = 1.0 - t;
                        }
                        bary
                    };
                    let (v0, _) = u.evaluate(c0, point_on(c0, k0)).unwrap();
                    let (v1, _) = u.evaluate(c, point_on(c, k)).unwrap();
                    assert!((v0 - v1).abs() < 1e-12);
                } else {
                    owner.insert(e, (c, k));
                }
            }
        }
    }

    #[test]
    fn text_round_trip() {
        let s = space(2, 2);
        let u = interpolate(|x| (x.x * 3.0).sin() + x.y, &s).unwrap();
        let back = FEFunction::from_text(&s, &u.to_text()).unwrap();
        assert_eq!(back.coeffs(), u.coeffs());
    }

    #[test]
    fn quadrature_weights_sum_to_area() {
        let s = space(3, 2);
        let total: f64 = s.quadrature_weights().iter().sum();
        assert!((total - 4.0).abs() < 1e-13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn interpolation_reproduces_polynomials(
                c in proptest::array::uniform6(-3.0f64..3.0),
                p in 1usize..=2,
            ) {
                let s = space(2, p);
                let poly = |x: &Point2<f64>| {
                    let lin = c[0] + c[1] * x.x + c[2] * x.y;
                    if p == 2 { lin + c[3] * x.x * x.x + c[4] * x.x * x.y + c[5] * x.y * x.y } else { lin }
                };
                let u = interpolate(poly, &s).unwrap();
                for cell in 0..s.mesh().n_cells() {
                    for &b in &s.volume_rule().points {
                        let (v, _) = u.evaluate(cell, b).unwrap();
                        let x = s.geometry(cell).point(b);
                        prop_assert!((v - poly(&x)).abs() < 1e-12);
                    }
                }
            }
        }
    }
}
