//! Sparse operators of the coupled nonvariational system.
//!
//! Row index = test function, column index = trial function throughout.
//! Coefficient fields are passed as samples at the space's volume quadrature
//! points, indexed `cell * n_q + q`.

use std::sync::Arc;

use nalgebra::{Matrix2, Point2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fespace::{eval_basis, FunctionSpace, MAX_LOCAL};
use crate::sparse::{CholeskyFactor, SparseMatrix};

type LocalMatrix = [[f64; MAX_LOCAL]; MAX_LOCAL];

/// Assembles an `N x N` matrix from per-cell local matrices computed in
/// parallel. Accumulation order is fixed by cell index, so the result does
/// not depend on the thread count.
fn assemble_cells<F>(space: &FunctionSpace, local: F) -> SparseMatrix
where
    F: Fn(usize, &mut LocalMatrix) + Sync,
{
    let nl = space.n_local();
    let blocks: Vec<LocalMatrix> = (0..space.mesh().n_cells())
        .into_par_iter()
        .map(|c| {
            let mut m = [[0.0; MAX_LOCAL]; MAX_LOCAL];
            local(c, &mut m);
            m
        })
        .collect();
    let mut triplets = Vec::with_capacity(blocks.len() * nl * nl);
    for (c, m) in blocks.iter().enumerate() {
        let dofs = space.cell_dofs(c);
        for i in 0..nl {
            for j in 0..nl {
                triplets.push((dofs[i], dofs[j], m[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(space.n_dofs(), space.n_dofs(), &triplets)
}

fn check_samples(space: &FunctionSpace, len: usize) -> Result<()> {
    if len != space.n_quadrature_points() {
        return Err(Error::InvalidArgument(format!(
            "expected {} quadrature samples, got {len}",
            space.n_quadrature_points()
        )));
    }
    Ok(())
}

/// `M_kl = ∫ φ_k φ_l`.
pub fn assemble_mass(space: &FunctionSpace) -> SparseMatrix {
    assemble_weighted_mass(space, None).expect("unweighted mass needs no samples")
}

/// `C_kl = ∫ w φ_k φ_l` with `w` sampled at quadrature points (1 if `None`).
pub fn assemble_weighted_mass(space: &FunctionSpace, weight: Option<&[f64]>) -> Result<SparseMatrix> {
    if let Some(w) = weight {
        check_samples(space, w.len())?;
    }
    let rule = space.volume_rule();
    let table = space.volume_table();
    let nl = space.n_local();
    let nq = rule.len();
    Ok(assemble_cells(space, |c, m| {
        let det = space.geometry(c).det;
        for (q, e) in table.evals.iter().enumerate() {
            let wq = rule.weights[q] * det * weight.map_or(1.0, |w| w[c * nq + q]);
            for i in 0..nl {
                for j in 0..nl {
                    m[i][j] += wq * e.values[i] * e.values[j];
                }
            }
        }
    }))
}

/// `S_kl = ∫ A ∇φ_l · ∇φ_k` with `A` sampled at quadrature points (identity
/// if `None`).
pub fn assemble_stiffness(space: &FunctionSpace, coefficient: Option<&[Matrix2<f64>]>) -> Result<SparseMatrix> {
    if let Some(a) = coefficient {
        check_samples(space, a.len())?;
    }
    let rule = space.volume_rule();
    let table = space.volume_table();
    let nl = space.n_local();
    let nq = rule.len();
    Ok(assemble_cells(space, |c, m| {
        let g = space.geometry(c);
        for (q, e) in table.evals.iter().enumerate() {
            let wq = rule.weights[q] * g.det;
            let grads: Vec<_> = (0..nl).map(|i| g.gradient(&e.dlambda[i])).collect();
            let a = coefficient.map_or_else(Matrix2::identity, |a| a[c * nq + q]);
            for i in 0..nl {
                for j in 0..nl {
                    m[i][j] += wq * (a * grads[j]).dot(&grads[i]);
                }
            }
        }
    }))
}

/// `b_k = ∫ f φ_k` with `f` sampled at quadrature points.
pub fn assemble_load(space: &FunctionSpace, samples: &[f64]) -> Result<Vec<f64>> {
    check_samples(space, samples.len())?;
    let rule = space.volume_rule();
    let table = space.volume_table();
    let nq = rule.len();
    let mut b = vec![0.0; space.n_dofs()];
    for c in 0..space.mesh().n_cells() {
        let det = space.geometry(c).det;
        for (q, e) in table.evals.iter().enumerate() {
            let wq = rule.weights[q] * det * samples[c * nq + q];
            for (i, &dof) in space.cell_dofs(c).iter().enumerate() {
                b[dof] += wq * e.values[i];
            }
        }
    }
    Ok(b)
}

/// The right-hand-side operators of the Hessian recovery equation:
/// `(B_ij U)_k = -∫ ∂_i U ∂_j φ_k + ∮ ∂_i U n_j φ_k`, tested against the
/// full space.
#[derive(Debug, Clone)]
pub struct HessianOperator {
    pub blocks: [[SparseMatrix; 2]; 2],
}

impl HessianOperator {
    pub fn block(&self, i: usize, j: usize) -> &SparseMatrix {
        &self.blocks[i][j]
    }
}

pub fn assemble_hessian_operator(space: &FunctionSpace) -> HessianOperator {
    let rule = space.volume_rule();
    let table = space.volume_table();
    let nl = space.n_local();
    let n_cells = space.mesh().n_cells();

    let locals: Vec<[[LocalMatrix; 2]; 2]> = (0..n_cells)
        .into_par_iter()
        .map(|c| {
            let mut m = [[[[0.0; MAX_LOCAL]; MAX_LOCAL]; 2]; 2];
            let g = space.geometry(c);
            for (q, e) in table.evals.iter().enumerate() {
                let wq = rule.weights[q] * g.det;
                let grads: Vec<_> = (0..nl).map(|i| g.gradient(&e.dlambda[i])).collect();
                for (bi, row) in m.iter_mut().enumerate() {
                    for (bj, block) in row.iter_mut().enumerate() {
                        for k in 0..nl {
                            for l in 0..nl {
                                block[k][l] -= wq * grads[l][bi] * grads[k][bj];
                            }
                        }
                    }
                }
            }
            m
        })
        .collect();

    let mut triplets: [[Vec<(usize, usize, f64)>; 2]; 2] = Default::default();
    for (c, m) in locals.iter().enumerate() {
        let dofs = space.cell_dofs(c);
        for bi in 0..2 {
            for bj in 0..2 {
                for k in 0..nl {
                    for l in 0..nl {
                        triplets[bi][bj].push((dofs[k], dofs[l], m[bi][bj][k][l]));
                    }
                }
            }
        }
    }

    let line = space.facet_rule();
    for facet in space.mesh().boundary_facets() {
        let c = facet.cell;
        let g = space.geometry(c);
        let dofs = space.cell_dofs(c);
        let (ia, ib) = ((facet.local_edge + 1) % 3, (facet.local_edge + 2) % 3);
        let length = (g.vertices[ib] - g.vertices[ia]).norm();
        for (t, w) in line.points.iter().zip(&line.weights) {
            let mut bary = [0.0; 3];
            bary[ia] = 1.0 - t;
            bary[ib] = *t;
            let e = eval_basis(space.degree(), bary);
            let grads: Vec<_> = (0..nl).map(|i| g.gradient(&e.dlambda[i])).collect();
            for bi in 0..2 {
                for bj in 0..2 {
                    for k in 0..nl {
                        for l in 0..nl {
                            let v = w * length * grads[l][bi] * facet.normal[bj] * e.values[k];
                            triplets[bi][bj].push((dofs[k], dofs[l], v));
                        }
                    }
                }
            }
        }
    }

    let n = space.n_dofs();
    let [[t00, t01], [t10, t11]] = triplets;
    HessianOperator {
        blocks: [
            [SparseMatrix::from_triplets(n, n, &t00), SparseMatrix::from_triplets(n, n, &t01)],
            [SparseMatrix::from_triplets(n, n, &t10), SparseMatrix::from_triplets(n, n, &t11)],
        ],
    }
}

/// Operators that depend only on the mesh and degree: mass matrix (and its
/// Cholesky factor), Hessian recovery operator and the Laplace stiffness.
#[derive(Debug)]
pub struct Discretization {
    space: Arc<FunctionSpace>,
    mass: SparseMatrix,
    mass_factor: CholeskyFactor,
    hessian: HessianOperator,
}

impl Discretization {
    pub fn new(space: &Arc<FunctionSpace>) -> Result<Self> {
        let mass = assemble_mass(space);
        let mass_factor = CholeskyFactor::new(&mass)?;
        let hessian = assemble_hessian_operator(space);
        Ok(Self {
            space: Arc::clone(space),
            mass,
            mass_factor,
            hessian,
        })
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        &self.space
    }

    pub fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    pub fn hessian_operator(&self) -> &HessianOperator {
        &self.hessian
    }

    pub fn mass_solve(&self, b: &[f64]) -> Vec<f64> {
        self.mass_factor.solve(b)
    }

    /// Coefficients of the finite element Hessian: `H_ij = M^{-1} B_ij u`.
    pub fn hessian_coefficients(&self, u: &[f64]) -> [[Vec<f64>; 2]; 2] {
        let solved: Vec<Vec<f64>> = [(0, 0), (0, 1), (1, 0), (1, 1)]
            .par_iter()
            .map(|&(i, j)| self.mass_solve(&self.hessian.block(i, j).mul_vec(u)))
            .collect();
        let mut it = solved.into_iter();
        let mut next = || it.next().expect("four blocks");
        [[next(), next()], [next(), next()]]
    }

    /// `|v|_{L2}` of the finite element function with coefficients `v`.
    pub fn l2_norm(&self, v: &[f64]) -> f64 {
        crate::sparse::dot(v, &self.mass.mul_vec(v)).max(0.0).sqrt()
    }
}

/// `K = Σ_ij C[A_ij] M^{-1} B_ij` restricted to interior test functions,
/// applied without ever forming `M^{-1}`. `K` maps full coefficient vectors
/// (boundary values included) to `N_0` interior moments.
#[derive(Debug)]
pub struct SchurOperator<'a> {
    disc: &'a Discretization,
    /// `C[A_ij]` with interior rows only (`N_0 x N`).
    weighted: [[SparseMatrix; 2]; 2],
}

impl<'a> SchurOperator<'a> {
    pub fn discretization(&self) -> &'a Discretization {
        self.disc
    }

    pub fn weighted_mass(&self, i: usize, j: usize) -> &SparseMatrix {
        &self.weighted[i][j]
    }

    /// `K u` for a full coefficient vector.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let h = self.disc.hessian_coefficients(u);
        let mut out = vec![0.0; self.disc.space.n_interior_dofs()];
        for i in 0..2 {
            for j in 0..2 {
                self.weighted[i][j].mul_vec_add(1.0, &h[i][j], &mut out);
            }
        }
        out
    }

    /// `K` on interior coefficients only (boundary values zero).
    pub fn apply_interior(&self, u0: &[f64]) -> Vec<f64> {
        let space = &self.disc.space;
        let mut full = vec![0.0; space.n_dofs()];
        for (k, &i) in space.interior_dofs().iter().enumerate() {
            full[i] = u0[k];
        }
        self.apply(&full)
    }

    /// Dense `N_0 x N_0` interior block, column by column. Meant for small
    /// problems and tests.
    pub fn to_dense_interior(&self) -> nalgebra::DMatrix<f64> {
        let n0 = self.disc.space.n_interior_dofs();
        let mut k = nalgebra::DMatrix::zeros(n0, n0);
        let mut e = vec![0.0; n0];
        for col in 0..n0 {
            e[col] = 1.0;
            let kc = self.apply_interior(&e);
            k.set_column(col, &nalgebra::DVector::from_vec(kc));
            e[col] = 0.0;
        }
        k
    }
}

/// Builds the Schur-complement operator of the coupled system for the
/// coefficient `A` sampled at quadrature points.
pub fn assemble_weighted_second_order<'a>(
    disc: &'a Discretization,
    coefficient: &[Matrix2<f64>],
) -> Result<SchurOperator<'a>> {
    let space = &disc.space;
    check_samples(space, coefficient.len())?;
    if let Some(p) = coefficient.iter().position(|a| a.iter().any(|v| !v.is_finite())) {
        let point = space.quadrature_points()[p];
        return Err(Error::NonFinite {
            point,
            value: coefficient[p].iter().copied().find(|v| !v.is_finite()).unwrap(),
        });
    }
    let interior = space.interior_dofs();
    let block = |i: usize, j: usize| -> Result<SparseMatrix> {
        let w: Vec<f64> = coefficient.iter().map(|a| a[(i, j)]).collect();
        Ok(assemble_weighted_mass(space, Some(&w))?.select_rows(interior))
    };
    Ok(SchurOperator {
        disc,
        weighted: [[block(0, 0)?, block(0, 1)?], [block(1, 0)?, block(1, 1)?]],
    })
}

/// A Dirichlet-reduced linear system on the interior DOFs.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    /// Interior rows and columns.
    pub matrix: SparseMatrix,
    /// Interior right side with the lift moved over.
    pub rhs: Vec<f64>,
    /// Full-length vector: boundary values of `g`, zero in the interior.
    pub lift: Vec<f64>,
}

impl ReducedSystem {
    /// Full coefficient vector from an interior solution.
    pub fn expand(&self, space: &FunctionSpace, interior: &[f64]) -> Vec<f64> {
        let mut full = self.lift.clone();
        for (k, &i) in space.interior_dofs().iter().enumerate() {
            full[i] = interior[k];
        }
        full
    }
}

/// Full-length vector holding the nodal interpolant of `g` on boundary DOFs.
pub fn dirichlet_lift<G>(space: &FunctionSpace, g: G) -> Result<Vec<f64>>
where
    G: Fn(&Point2<f64>) -> f64,
{
    let mut lift = vec![0.0; space.n_dofs()];
    for &i in space.boundary_dofs() {
        let p = space.dof_coords()[i];
        let value = g(&p);
        if !value.is_finite() {
            return Err(Error::NonFinite { point: p, value });
        }
        lift[i] = value;
    }
    Ok(lift)
}

/// Fixes boundary DOFs of the square system `matrix x = rhs` to the nodal
/// values of `g` and eliminates them.
pub fn apply_dirichlet<G>(matrix: &SparseMatrix, rhs: &[f64], g: G, space: &FunctionSpace) -> Result<ReducedSystem>
where
    G: Fn(&Point2<f64>) -> f64,
{
    let n = space.n_dofs();
    if matrix.n_rows() != n || matrix.n_cols() != n || rhs.len() != n {
        return Err(Error::InvalidArgument(format!(
            "system is {}x{} with rhs {}, space has {n} DOFs",
            matrix.n_rows(),
            matrix.n_cols(),
            rhs.len()
        )));
    }
    let lift = dirichlet_lift(space, g)?;
    let interior = space.interior_dofs();
    let moved = matrix.mul_vec(&lift);
    let reduced_rhs = interior.iter().map(|&i| rhs[i] - moved[i]).collect();
    Ok(ReducedSystem {
        matrix: matrix.select(interior, interior),
        rhs: reduced_rhs,
        lift,
    })
}
