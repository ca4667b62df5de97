//! Finite element Hessians and linear equations in nonvariational form.
//!
//! The discrete problem couples `U` with its recovered Hessian:
//!
//! ```text
//! M H_ij = B_ij U                 (all test functions)
//! Σ_ij C[A_ij] H_ij = ∫ f φ_k     (interior test functions)
//! U = g                           (boundary DOFs)
//! ```
//!
//! Eliminating `H` gives `K U = F` with `K = Σ C[A_ij] M^{-1} B_ij`. `K` is
//! dense, so it is only ever applied, never stored.

use std::sync::Arc;

use nalgebra::{Matrix2, Point2};

use crate::assembly::{
    assemble_load, assemble_stiffness, assemble_weighted_mass, assemble_weighted_second_order, dirichlet_lift,
    Discretization, SchurOperator,
};
use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FunctionSpace};
use crate::sparse::{gmres, norm2, CholeskyFactor, LuFactor, SparseMatrix};

/// Values of the finite element function with coefficients `coeffs` at the
/// volume quadrature points.
pub fn values_at_quadrature_points(space: &FunctionSpace, coeffs: &[f64]) -> Vec<f64> {
    let table = space.volume_table();
    let mut out = Vec::with_capacity(space.n_quadrature_points());
    for c in 0..space.mesh().n_cells() {
        let dofs = space.cell_dofs(c);
        for e in &table.evals {
            out.push(dofs.iter().enumerate().map(|(i, &d)| e.values[i] * coeffs[d]).sum());
        }
    }
    out
}

/// A 2x2 matrix of finite element functions on one space.
#[derive(Debug, Clone)]
pub struct MatrixField {
    components: [[FEFunction; 2]; 2],
}

impl MatrixField {
    pub fn new(components: [[FEFunction; 2]; 2]) -> Self {
        Self { components }
    }

    pub fn from_coefficients(space: &Arc<FunctionSpace>, coeffs: [[Vec<f64>; 2]; 2]) -> Self {
        let [[a, b], [c, d]] = coeffs;
        let f = |v| FEFunction::new(Arc::clone(space), v);
        Self {
            components: [[f(a), f(b)], [f(c), f(d)]],
        }
    }

    pub fn space(&self) -> &Arc<FunctionSpace> {
        self.components[0][0].space()
    }

    pub fn component(&self, i: usize, j: usize) -> &FEFunction {
        &self.components[i][j]
    }

    pub fn at_quadrature_points(&self) -> Vec<Matrix2<f64>> {
        let space = self.space();
        let v: Vec<Vec<f64>> = self
            .components
            .iter()
            .flatten()
            .map(|f| values_at_quadrature_points(space, f.coeffs()))
            .collect();
        (0..v[0].len())
            .map(|q| Matrix2::new(v[0][q], v[1][q], v[2][q], v[3][q]))
            .collect()
    }

    /// Coefficient values as 2x2 matrices, one per DOF.
    pub fn nodal_values(&self) -> Vec<Matrix2<f64>> {
        let c = |i: usize, j: usize| self.components[i][j].coeffs();
        (0..self.space().n_dofs())
            .map(|k| Matrix2::new(c(0, 0)[k], c(0, 1)[k], c(1, 0)[k], c(1, 1)[k]))
            .collect()
    }

    /// `max_k |H12_k - H21_k|`.
    pub fn symmetry_defect(&self) -> f64 {
        self.components[0][1]
            .coeffs()
            .iter()
            .zip(self.components[1][0].coeffs())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// One line per DOF: `index h11 h12 h21 h22`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, h) in self.nodal_values().iter().enumerate() {
            out.push_str(&format!(
                "{k} {:.16e} {:.16e} {:.16e} {:.16e}\n",
                h[(0, 0)],
                h[(0, 1)],
                h[(1, 0)],
                h[(1, 1)]
            ));
        }
        out
    }
}

impl Discretization {
    pub fn recover_hessian(&self, u: &FEFunction) -> Result<MatrixField> {
        if !Arc::ptr_eq(u.space(), self.space()) {
            return Err(Error::InvalidArgument("function lives on a different space".into()));
        }
        Ok(MatrixField::from_coefficients(self.space(), self.hessian_coefficients(u.coeffs())))
    }
}

/// The finite element Hessian `H[U]` defined by `∫ H[U] φ = -∫ ∇U ⊗ ∇φ + ∮ ∇U ⊗ n φ`
/// for all `φ` in the space of `U`.
pub fn recover_hessian(u: &FEFunction) -> Result<MatrixField> {
    Discretization::new(u.space())?.recover_hessian(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// GMRES when the sampled coefficient is elliptic, falling back to the
    /// block LU if it stalls; block LU otherwise.
    #[default]
    Auto,
    /// Restarted GMRES on `K`, right-preconditioned by the stiffness matrix
    /// of the symmetric part of `A`.
    Gmres,
    /// Sparse LU of the full coupled system in `(U, H11, H12, H21, H22)`.
    BlockLu,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOptions {
    pub solver: LinearSolver,
    pub rtol: f64,
    pub restart: usize,
    pub max_iterations: usize,
    /// Reject coefficients whose symmetric part is not positive definite at
    /// some quadrature point.
    pub check_ellipticity: bool,
}

impl Default for LinearOptions {
    fn default() -> Self {
        Self {
            solver: LinearSolver::Auto,
            rtol: 1e-12,
            restart: 80,
            max_iterations: 800,
            check_ellipticity: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearReport {
    /// `Gmres` or `BlockLu`: the method that produced the solution.
    pub solver: LinearSolver,
    pub iterations: usize,
    /// `max_ij |M H_ij - B_ij U| / (|M| |H_ij| + |B_ij| |U|)` in the max norm.
    pub recovery_residual: f64,
    /// `|F - Σ C_ij H_ij| / (|F| + |Σ C_ij H_ij|)` over interior rows.
    pub equation_residual: f64,
}

#[derive(Debug, Clone)]
pub struct LinearNVSolution {
    pub u: FEFunction,
    pub h: MatrixField,
    pub report: LinearReport,
}

fn smallest_symmetric_eigenvalue(a: &Matrix2<f64>) -> f64 {
    let (p, q, r) = (a[(0, 0)], 0.5 * (a[(0, 1)] + a[(1, 0)]), a[(1, 1)]);
    0.5 * (p + r) - (0.25 * (p - r) * (p - r) + q * q).sqrt()
}

/// Fails with `Error::Ellipticity` at the first quadrature point where the
/// symmetric part of `A` is not positive definite.
pub fn check_ellipticity(space: &FunctionSpace, coefficient: &[Matrix2<f64>]) -> Result<()> {
    for (q, a) in coefficient.iter().enumerate() {
        if let Some(&value) = a.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                point: quadrature_point(space, q),
                value,
            });
        }
        let min_eigenvalue = smallest_symmetric_eigenvalue(a);
        if min_eigenvalue <= 0.0 || min_eigenvalue.is_nan() {
            return Err(Error::Ellipticity {
                point: quadrature_point(space, q),
                min_eigenvalue,
            });
        }
    }
    Ok(())
}

fn quadrature_point(space: &FunctionSpace, q: usize) -> Point2<f64> {
    let nq = space.volume_rule().len();
    let (c, i) = (q / nq, q % nq);
    space.geometry(c).point(space.volume_rule().points[i])
}

/// Solves `Σ C[A_ij] H_ij = b0` (interior rows) with `U = lift` on the
/// boundary. Returns the full coefficient vector of `U`.
pub(crate) fn solve_coupled(
    disc: &Discretization,
    coefficient: &[Matrix2<f64>],
    b0: &[f64],
    lift: &[f64],
    options: &LinearOptions,
) -> Result<(Vec<f64>, LinearSolver, usize)> {
    let space = disc.space();
    if b0.len() != space.n_interior_dofs() || lift.len() != space.n_dofs() {
        return Err(Error::InvalidArgument("right side or lift has the wrong length".into()));
    }
    let schur = assemble_weighted_second_order(disc, coefficient)?;
    // The preconditioner is only spectrally close when the coefficient is
    // elliptic; otherwise GMRES tends to stall, so Auto goes straight to LU.
    let elliptic = coefficient.iter().all(|a| {
        let s = (a + a.transpose()) * 0.5;
        s[(0, 0)] > 0.0 && s.determinant() > 0.0
    });
    let try_gmres = match options.solver {
        LinearSolver::Gmres => true,
        LinearSolver::Auto => elliptic,
        LinearSolver::BlockLu => false,
    };
    if try_gmres {
        match solve_gmres(&schur, coefficient, b0, lift, options) {
            Ok((u, iterations)) => return Ok((u, LinearSolver::Gmres, iterations)),
            Err(e) if options.solver == LinearSolver::Gmres => return Err(e),
            Err(_) => {}
        }
    }
    let u = solve_block_lu(disc, coefficient, b0, lift)?;
    Ok((u, LinearSolver::BlockLu, 1))
}

enum Preconditioner {
    Cholesky(CholeskyFactor),
    Lu(LuFactor),
}

fn solve_gmres(
    schur: &SchurOperator<'_>,
    coefficient: &[Matrix2<f64>],
    b0: &[f64],
    lift: &[f64],
    options: &LinearOptions,
) -> Result<(Vec<f64>, usize)> {
    let disc = schur.discretization();
    let space = disc.space();
    let interior = space.interior_dofs();

    let moved = schur.apply(lift);
    let rhs: Vec<f64> = b0.iter().zip(&moved).map(|(b, m)| b - m).collect();

    // K = -S_A exactly for constant A, so -S_sym(A) is a natural preconditioner.
    let sym: Vec<Matrix2<f64>> = coefficient.iter().map(|a| (a + a.transpose()) * 0.5).collect();
    let stiff = assemble_stiffness(space, Some(&sym))?.select(interior, interior);
    let precond = match CholeskyFactor::new(&stiff) {
        Ok(f) => Preconditioner::Cholesky(f),
        Err(_) => Preconditioner::Lu(LuFactor::new(&stiff)?),
    };
    let apply_precond = |v: &[f64]| -> Result<Vec<f64>> {
        let mut x = match &precond {
            Preconditioner::Cholesky(f) => f.solve(v),
            Preconditioner::Lu(f) => f.solve(v)?,
        };
        x.iter_mut().for_each(|t| *t = -*t);
        Ok(x)
    };

    let mut x = vec![0.0; interior.len()];
    let report = gmres(
        |v| Ok(schur.apply_interior(v)),
        apply_precond,
        &rhs,
        &mut x,
        options.rtol,
        options.restart,
        options.max_iterations,
    )?;
    if !report.converged {
        return Err(Error::LinearSolver(format!(
            "GMRES stalled after {} iterations at relative residual {:.3e}",
            report.iterations, report.relative_residual
        )));
    }
    let mut u = lift.to_vec();
    for (k, &i) in interior.iter().enumerate() {
        u[i] = x[k];
    }
    Ok((u, report.iterations))
}

/// Block LU of the coupled system in the unknowns `(U, H11, H12, H21, H22)`.
fn solve_block_lu(disc: &Discretization, coefficient: &[Matrix2<f64>], b0: &[f64], lift: &[f64]) -> Result<Vec<f64>> {
    let space = disc.space();
    let n = space.n_dofs();
    let blocks = [(0, 0), (0, 1), (1, 0), (1, 1)];
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; 5 * n];

    for &i in space.boundary_dofs() {
        triplets.push((i, i, 1.0));
        rhs[i] = lift[i];
    }
    for (b, &(i, j)) in blocks.iter().enumerate() {
        let w: Vec<f64> = coefficient.iter().map(|a| a[(i, j)]).collect();
        let c = assemble_weighted_mass(space, Some(&w))?;
        for (r, col, v) in c.triplets() {
            if !space.is_boundary_dof(r) {
                triplets.push((r, (1 + b) * n + col, v));
            }
        }
        let row0 = (1 + b) * n;
        for (r, col, v) in disc.mass().triplets() {
            triplets.push((row0 + r, row0 + col, v));
        }
        for (r, col, v) in disc.hessian_operator().block(i, j).triplets() {
            triplets.push((row0 + r, col, -v));
        }
    }
    for (k, &i) in space.interior_dofs().iter().enumerate() {
        rhs[i] = b0[k];
    }
    let system = SparseMatrix::from_triplets(5 * n, 5 * n, &triplets);
    let z = LuFactor::new(&system)?.solve(&rhs)?;
    Ok(z[..n].to_vec())
}

/// Residuals of the coupled system at a computed solution.
fn residual_report(
    disc: &Discretization,
    schur: &SchurOperator<'_>,
    u: &[f64],
    h: &[[Vec<f64>; 2]; 2],
    b0: &[f64],
) -> (f64, f64) {
    let max_norm = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut recovery = 0.0f64;
    let m_norm = disc.mass().norm_inf();
    for i in 0..2 {
        for j in 0..2 {
            let b = disc.hessian_operator().block(i, j);
            let mh = disc.mass().mul_vec(&h[i][j]);
            let bu = b.mul_vec(u);
            let r: Vec<f64> = mh.iter().zip(&bu).map(|(x, y)| x - y).collect();
            let scale = m_norm * max_norm(&h[i][j]) + b.norm_inf() * max_norm(u);
            if scale > 0.0 {
                recovery = recovery.max(max_norm(&r) / scale);
            }
        }
    }
    let mut ch = vec![0.0; b0.len()];
    for i in 0..2 {
        for j in 0..2 {
            schur.weighted_mass(i, j).mul_vec_add(1.0, &h[i][j], &mut ch);
        }
    }
    let r: Vec<f64> = b0.iter().zip(&ch).map(|(b, c)| b - c).collect();
    let scale = norm2(b0) + norm2(&ch);
    let equation = if scale > 0.0 { norm2(&r) / scale } else { 0.0 };
    (recovery, equation)
}

/// Solves `A : D²u = f` in `Ω`, `u = g` on `∂Ω`, in nonvariational form.
///
/// `coefficient` and `source` are sampled at the quadrature points of the
/// discretization's space; `lift` holds the boundary values (see
/// [`dirichlet_lift`]).
pub fn solve_linear_nonvariational(
    disc: &Discretization,
    coefficient: &[Matrix2<f64>],
    source: &[f64],
    lift: &[f64],
    options: &LinearOptions,
) -> Result<LinearNVSolution> {
    let space = disc.space();
    if coefficient.len() != space.n_quadrature_points() {
        return Err(Error::InvalidArgument(format!(
            "expected {} coefficient samples, got {}",
            space.n_quadrature_points(),
            coefficient.len()
        )));
    }
    if options.check_ellipticity {
        check_ellipticity(space, coefficient)?;
    }
    if let Some(q) = source.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            point: quadrature_point(space, q),
            value: source[q],
        });
    }
    let load = assemble_load(space, source)?;
    let b0: Vec<f64> = space.interior_dofs().iter().map(|&i| load[i]).collect();
    let (u, solver, iterations) = solve_coupled(disc, coefficient, &b0, lift, options)?;
    let h = disc.hessian_coefficients(&u);
    let schur = assemble_weighted_second_order(disc, coefficient)?;
    let (recovery_residual, equation_residual) = residual_report(disc, &schur, &u, &h, &b0);
    Ok(LinearNVSolution {
        u: FEFunction::new(Arc::clone(space), u),
        h: MatrixField::from_coefficients(space, h),
        report: LinearReport {
            solver,
            iterations,
            recovery_residual,
            equation_residual,
        },
    })
}

/// Convenience wrapper taking pointwise data.
pub fn solve_linear_nonvariational_fn<A, F, G>(
    space: &Arc<FunctionSpace>,
    coefficient: A,
    source: F,
    boundary: G,
) -> Result<LinearNVSolution>
where
    A: Fn(&Point2<f64>) -> Matrix2<f64> + Sync,
    F: Fn(&Point2<f64>) -> f64 + Sync,
    G: Fn(&Point2<f64>) -> f64,
{
    let disc = Discretization::new(space)?;
    let a = space.sample(coefficient);
    let f = space.sample(source);
    let lift = dirichlet_lift(space, boundary)?;
    solve_linear_nonvariational(&disc, &a, &f, &lift, &LinearOptions::default())
}

/// Standard Galerkin approximation of `Δu = f`, `u = g` on `∂Ω`, with `f`
/// sampled at quadrature points.
pub fn solve_poisson(space: &Arc<FunctionSpace>, source: &[f64], lift: &[f64]) -> Result<FEFunction> {
    let stiff = assemble_stiffness(space, None)?;
    let load = assemble_load(space, source)?;
    let interior = space.interior_dofs();
    let moved = stiff.mul_vec(lift);
    let rhs: Vec<f64> = interior.iter().map(|&i| -load[i] - moved[i]).collect();
    let x = CholeskyFactor::new(&stiff.select(interior, interior))?.solve(&rhs);
    let mut u = lift.to_vec();
    for (k, &i) in interior.iter().enumerate() {
        u[i] = x[k];
    }
    Ok(FEFunction::new(Arc::clone(space), u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::{build_space, interpolate};
    use crate::mesh::{generate_criss_cross, generate_irregular, Rect};
    use proptest::prelude::*;

    fn space(n: usize, p: usize) -> Arc<FunctionSpace> {
        build_space(Arc::new(generate_criss_cross(Rect::square(-1.0, 1.0), n).unwrap()), p).unwrap()
    }

    fn solve(
        disc: &Discretization,
        a: Matrix2<f64>,
        f: impl Fn(&Point2<f64>) -> f64 + Sync,
        g: impl Fn(&Point2<f64>) -> f64,
        solver: LinearSolver,
    ) -> LinearNVSolution {
        let s = disc.space();
        let coeff = vec![a; s.n_quadrature_points()];
        let lift = dirichlet_lift(s, g).unwrap();
        let options = LinearOptions {
            solver,
            ..LinearOptions::default()
        };
        solve_linear_nonvariational(disc, &coeff, &s.sample(f), &lift, &options).unwrap()
    }

    #[test]
    fn hessian_of_quadratic_is_exact() {
        let s = space(4, 2);
        let u = interpolate(|x| x.x * x.x - 2.0 * x.x * x.y, &s).unwrap();
        let h = recover_hessian(&u).unwrap();
        let expected = [[2.0, -2.0], [-2.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                let err = h.component(i, j).coeffs().iter().fold(0.0f64, |m, v| m.max((v - expected[i][j]).abs()));
                assert!(err < 1e-11, "({i},{j}) err {err}");
            }
        }
    }

    #[test]
    fn hessian_of_linear_is_zero() {
        let s = space(3, 2);
        let u = interpolate(|x| 3.0 - x.x + 4.0 * x.y, &s).unwrap();
        let h = recover_hessian(&u).unwrap();
        assert!(h.nodal_values().iter().all(|m| m.amax() < 1e-11));
    }

    #[test]
    fn laplacian_recovers_quadratic() {
        let s = space(4, 2);
        let disc = Discretization::new(&s).unwrap();
        let exact = |x: &Point2<f64>| x.x * x.x + x.y * x.y;
        for solver in [LinearSolver::Gmres, LinearSolver::BlockLu] {
            let sol = solve(&disc, Matrix2::identity(), |_| 4.0, exact, solver);
            for (i, x) in s.dof_coords().iter().enumerate() {
                assert!((sol.u.coeffs()[i] - exact(x)).abs() < 1e-10, "{solver:?}");
            }
            assert!(sol.report.recovery_residual < 1e-10);
            assert!(sol.report.equation_residual < 1e-10);
            assert_eq!(sol.report.solver, solver);
        }
    }

    #[test]
    fn identity_coefficient_matches_galerkin_poisson() {
        let s = space(4, 2);
        let disc = Discretization::new(&s).unwrap();
        let f = |x: &Point2<f64>| (3.0 * x.x).sin() * x.y.exp();
        let g = |x: &Point2<f64>| x.x * x.y;
        let nv = solve(&disc, Matrix2::identity(), f, g, LinearSolver::Gmres);
        let lift = dirichlet_lift(&s, g).unwrap();
        let fem = solve_poisson(&s, &s.sample(f), &lift).unwrap();
        for (a, b) in nv.u.coeffs().iter().zip(fem.coeffs()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn poisson_constant_source_centre_value() {
        let s = space(16, 2);
        let lift = vec![0.0; s.n_dofs()];
        let u = solve_poisson(&s, &vec![2.0; s.n_quadrature_points()], &lift).unwrap();
        let centre = s.dof_coords().iter().position(|x| x.coords.norm() < 1e-14).unwrap();
        assert!((u.coeffs()[centre] + 0.5894).abs() < 1e-3, "{}", u.coeffs()[centre]);
    }

    #[test]
    fn solvers_agree_on_variable_coefficient() {
        let s = build_space(Arc::new(generate_irregular(Rect::square(-1.0, 1.0), 3).unwrap()), 2).unwrap();
        let disc = Discretization::new(&s).unwrap();
        let coeff = s.sample(|x| Matrix2::new(2.0 + x.x, 0.3 * x.y, 0.3 * x.y, 1.0 + x.y * x.y));
        let f = s.sample(|x| (x.x + 2.0 * x.y).cos());
        let lift = dirichlet_lift(&s, |x| x.x - x.y * x.y).unwrap();
        let run = |solver| {
            let options = LinearOptions {
                solver,
                ..LinearOptions::default()
            };
            solve_linear_nonvariational(&disc, &coeff, &f, &lift, &options).unwrap()
        };
        let a = run(LinearSolver::Gmres);
        let b = run(LinearSolver::BlockLu);
        let diff = a.u.coeffs().iter().zip(b.u.coeffs()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-10, "{diff}");
        assert!(a.h.symmetry_defect() < 1e-10);
    }

    #[test]
    fn rejects_non_elliptic_coefficient() {
        let s = space(2, 1);
        let disc = Discretization::new(&s).unwrap();
        let coeff = vec![Matrix2::new(1.0, 0.0, 0.0, -1.0); s.n_quadrature_points()];
        let zero = vec![0.0; s.n_quadrature_points()];
        let lift = vec![0.0; s.n_dofs()];
        let err = solve_linear_nonvariational(&disc, &coeff, &zero, &lift, &LinearOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Ellipticity { min_eigenvalue, .. } if min_eigenvalue == -1.0));
    }

    #[test]
    fn rejects_non_finite_source() {
        let s = space(2, 1);
        let disc = Discretization::new(&s).unwrap();
        let coeff = vec![Matrix2::identity(); s.n_quadrature_points()];
        let mut f = vec![0.0; s.n_quadrature_points()];
        f[3] = f64::NAN;
        let lift = vec![0.0; s.n_dofs()];
        let err = solve_linear_nonvariational(&disc, &coeff, &f, &lift, &LinearOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn scaling_the_equation_leaves_the_solution(c in 0.01..100.0f64, a11 in 0.5..3.0f64, a12 in -0.4..0.4f64) {
            let s = space(3, 2);
            let disc = Discretization::new(&s).unwrap();
            let a = Matrix2::new(a11, a12, a12, 1.0);
            let f = |x: &Point2<f64>| 1.0 + x.x * x.y;
            let g = |x: &Point2<f64>| x.x;
            let u1 = solve(&disc, a, f, g, LinearSolver::Gmres);
            let u2 = solve(&disc, a * c, move |x| c * f(x), g, LinearSolver::Gmres);
            for (x, y) in u1.u.coeffs().iter().zip(u2.u.coeffs()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn recovered_hessian_is_linear(seed in 0u64..1000, t in -3.0..3.0f64) {
            let s = space(2, 2);
            let disc = Discretization::new(&s).unwrap();
            let n = s.n_dofs();
            let v: Vec<f64> = (0..n).map(|i| (((i as u64 + 1) * (seed + 7)) % 17) as f64 - 8.0).collect();
            let w: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.37 + seed as f64).sin()).collect();
            let comb: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + t * b).collect();
            let hv = disc.hessian_coefficients(&v);
            let hw = disc.hessian_coefficients(&w);
            let hc = disc.hessian_coefficients(&comb);
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..n {
                        let expected = hv[i][j][k] + t * hw[i][j][k];
                        prop_assert!((hc[i][j][k] - expected).abs() < 1e-9 * (1.0 + expected.abs()));
                    }
                }
            }
        }
    }
}
