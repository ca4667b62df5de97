//! Newton–NVFEM (linearise, then discretise) and FNFEM (discretise, then
//! algebraic Newton).

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::Matrix2;
use serde::Serialize;

use crate::assembly::{assemble_load, dirichlet_lift, Discretization};
use crate::error::{Error, Result};
use crate::fespace::{FEFunction, FunctionSpace};
use crate::nvfem::{solve_coupled, solve_linear_nonvariational, solve_poisson, LinearOptions, MatrixField};
use crate::problems::{InitialGuess, Nonlinearity, ProblemSpec, Strategy};
use crate::sparse::norm2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    /// NVFEM stops on the `L2` step norm, FNFEM on the Euclidean norm of the
    /// algebraic residual.
    pub tol: f64,
    pub max_iterations: usize,
    /// Backtracking on the algebraic residual norm (halving, at most 8 times).
    pub line_search: bool,
    /// Also check ellipticity of the linearisation about `U^0`. Off by
    /// default: the Poisson-based Monge–Ampère guess is not convex in the
    /// corner cells once the mesh resolves its corner singularity, while the
    /// iterates that follow are.
    pub check_initial_ellipticity: bool,
    pub linear: LinearOptions,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 50,
            line_search: false,
            check_initial_ellipticity: false,
            linear: LinearOptions::default(),
        }
    }
}

/// Smallest values of `det H` and `H_11` over the quadrature points; both
/// positive means `H` is positive definite there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Convexity {
    pub min_det: f64,
    pub min_h11: f64,
}

impl Convexity {
    pub fn of(samples: &[Matrix2<f64>]) -> Self {
        samples.iter().fold(
            Self {
                min_det: f64::INFINITY,
                min_h11: f64::INFINITY,
            },
            |c, h| Self {
                min_det: c.min_det.min(h.determinant()),
                min_h11: c.min_h11.min(h[(0, 0)]),
            },
        )
    }

    pub fn is_convex(&self) -> bool {
        self.min_det > 0.0 && self.min_h11 > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NewtonIterate {
    /// `|U^{n} - U^{n-1}|_{L2}`.
    pub step_norm: f64,
    /// Euclidean norm of the algebraic residual over interior rows at `U^n`.
    pub residual_norm: f64,
    pub convexity: Convexity,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonTrace {
    pub initial_residual: f64,
    pub initial_convexity: Convexity,
    pub iterates: Vec<NewtonIterate>,
    pub converged: bool,
}

impl NewtonTrace {
    pub fn n_iterations(&self) -> usize {
        self.iterates.len()
    }

    /// `iter,step_norm,residual_norm`, with iteration 0 the initial guess.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,step_norm,residual_norm\n");
        let _ = writeln!(out, "0,,{:.6e}", self.initial_residual);
        for (k, it) in self.iterates.iter().enumerate() {
            let _ = writeln!(out, "{},{:.6e},{:.6e}", k + 1, it.step_norm, it.residual_norm);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct NonlinearSolution {
    pub u: FEFunction,
    pub h: MatrixField,
    pub trace: NewtonTrace,
}

/// State at one iterate: Hessian coefficients, samples and residual.
struct Iterate {
    u: Vec<f64>,
    h: [[Vec<f64>; 2]; 2],
    samples: Vec<Matrix2<f64>>,
    residual: Vec<f64>,
}

impl Iterate {
    fn new(disc: &Discretization, nonlinearity: &dyn Nonlinearity, source: &[f64], u: Vec<f64>) -> Result<Self> {
        let space = disc.space();
        let h = disc.hessian_coefficients(&u);
        let samples = MatrixField::from_coefficients(space, h.clone()).at_quadrature_points();
        let values: Vec<f64> = samples.iter().zip(source).map(|(x, f)| nonlinearity.value(x) - f).collect();
        let load = assemble_load(space, &values)?;
        let residual = space.interior_dofs().iter().map(|&i| load[i]).collect();
        Ok(Self { u, h, samples, residual })
    }

    fn residual_norm(&self) -> f64 {
        norm2(&self.residual)
    }

    fn into_solution(self, space: &Arc<FunctionSpace>, trace: NewtonTrace) -> NonlinearSolution {
        NonlinearSolution {
            u: FEFunction::new(Arc::clone(space), self.u),
            h: MatrixField::from_coefficients(space, self.h),
            trace,
        }
    }
}

fn l2_distance(disc: &Discretization, a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    disc.l2_norm(&d)
}

fn check_start(disc: &Discretization, u0: &FEFunction, options: &NewtonOptions) -> Result<()> {
    if !Arc::ptr_eq(u0.space(), disc.space()) {
        return Err(Error::InvalidArgument("initial guess lives on a different space".into()));
    }
    if !(options.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", options.tol)));
    }
    Ok(())
}

fn breakdown(
    iteration: usize,
    source: Error,
    state: Iterate,
    space: &Arc<FunctionSpace>,
    trace: NewtonTrace,
) -> Error {
    Error::NewtonBreakdown {
        iteration,
        source: Box::new(source),
        last: Box::new(state.into_solution(space, trace)),
    }
}

/// Damped update `U + λ (target - U)` accepting the first `λ = 2^{-k}` that
/// reduces the residual norm.
fn line_search(
    disc: &Discretization,
    nonlinearity: &dyn Nonlinearity,
    source: &[f64],
    current: &Iterate,
    target: Vec<f64>,
) -> Result<Iterate> {
    let full = Iterate::new(disc, nonlinearity, source, target.clone())?;
    let r0 = current.residual_norm();
    if full.residual_norm() < r0 {
        return Ok(full);
    }
    let mut lambda = 1.0;
    for _ in 0..8 {
        lambda *= 0.5;
        let u: Vec<f64> = current.u.iter().zip(&target).map(|(a, b)| a + lambda * (b - a)).collect();
        let trial = Iterate::new(disc, nonlinearity, source, u)?;
        if trial.residual_norm() < r0 {
            return Ok(trial);
        }
    }
    Ok(full)
}

/// Newton's method on the PDE: each step solves the linear nonvariational
/// problem `N(H[U^n]) : D²U^{n+1} = f - F(H[U^n]) + N(H[U^n]) : H[U^n]`.
///
/// Stops when `|U^{n+1} - U^n|_{L2} <= tol`. Exceeding the iteration limit
/// returns a non-converged solution; a failed inner solve returns
/// `Error::NewtonBreakdown`.
pub fn newton_nvfem(
    problem: &ProblemSpec,
    disc: &Discretization,
    u0: &FEFunction,
    options: &NewtonOptions,
) -> Result<NonlinearSolution> {
    check_start(disc, u0, options)?;
    let space = disc.space();
    let n = problem.nonlinearity.as_ref();
    let source = space.sample(|x| (problem.source)(x));
    let lift = dirichlet_lift(space, |x| (problem.boundary)(x))?;

    let mut state = Iterate::new(disc, n, &source, u0.coeffs().to_vec())?;
    let mut trace = NewtonTrace {
        initial_residual: state.residual_norm(),
        initial_convexity: Convexity::of(&state.samples),
        iterates: Vec::new(),
        converged: false,
    };

    for iteration in 1..=options.max_iterations {
        let coefficient: Vec<Matrix2<f64>> = state.samples.iter().map(|x| n.derivative(x)).collect();
        let rhs: Vec<f64> = state.samples.iter().zip(&source).map(|(x, f)| n.newton_rhs(x, *f)).collect();
        let linear = LinearOptions {
            check_ellipticity: options.linear.check_ellipticity && (iteration > 1 || options.check_initial_ellipticity),
            ..options.linear
        };
        let solved = match solve_linear_nonvariational(disc, &coefficient, &rhs, &lift, &linear) {
            Ok(s) => s,
            Err(e) => return Err(breakdown(iteration, e, state, space, trace)),
        };
        let target = solved.u.into_coeffs();
        let next = if options.line_search {
            line_search(disc, n, &source, &state, target)?
        } else {
            Iterate::new(disc, n, &source, target)?
        };
        let step_norm = l2_distance(disc, &next.u, &state.u);
        trace.iterates.push(NewtonIterate {
            step_norm,
            residual_norm: next.residual_norm(),
            convexity: Convexity::of(&next.samples),
        });
        state = next;
        if step_norm <= options.tol {
            trace.converged = true;
            break;
        }
        if !step_norm.is_finite() {
            break;
        }
    }
    Ok(state.into_solution(space, trace))
}

/// Newton's method on the discrete system `R(U) = C(F(H[U])) - (f, Φ) = 0`
/// over interior test functions, with the exact Jacobian
/// `J = Σ C[F'(H[U])_ij] M^{-1} B_ij`.
///
/// Stops when `|R(U)|_2 <= tol`. The initial guess is overwritten with the
/// boundary data on boundary DOFs.
pub fn fnfem_solve(
    problem: &ProblemSpec,
    disc: &Discretization,
    u0: &FEFunction,
    options: &NewtonOptions,
) -> Result<NonlinearSolution> {
    check_start(disc, u0, options)?;
    let space = disc.space();
    let n = problem.nonlinearity.as_ref();
    let source = space.sample(|x| (problem.source)(x));
    let lift = dirichlet_lift(space, |x| (problem.boundary)(x))?;

    let mut u = u0.coeffs().to_vec();
    for &i in space.boundary_dofs() {
        u[i] = lift[i];
    }
    let mut state = Iterate::new(disc, n, &source, u)?;
    let mut trace = NewtonTrace {
        initial_residual: state.residual_norm(),
        initial_convexity: Convexity::of(&state.samples),
        iterates: Vec::new(),
        converged: state.residual_norm() <= options.tol,
    };
    let zero_lift = vec![0.0; space.n_dofs()];

    let mut iteration = 0;
    while !trace.converged && iteration < options.max_iterations {
        iteration += 1;
        let jacobian: Vec<Matrix2<f64>> = state.samples.iter().map(|x| n.derivative(x)).collect();
        let rhs: Vec<f64> = state.residual.iter().map(|r| -r).collect();
        let delta = match solve_coupled(disc, &jacobian, &rhs, &zero_lift, &options.linear) {
            Ok((d, _, _)) => d,
            Err(e) => return Err(breakdown(iteration, e, state, space, trace)),
        };
        let target: Vec<f64> = state.u.iter().zip(&delta).map(|(a, b)| a + b).collect();
        let next = if options.line_search {
            line_search(disc, n, &source, &state, target)?
        } else {
            Iterate::new(disc, n, &source, target)?
        };
        let residual_norm = next.residual_norm();
        trace.iterates.push(NewtonIterate {
            step_norm: l2_distance(disc, &next.u, &state.u),
            residual_norm,
            convexity: Convexity::of(&next.samples),
        });
        state = next;
        trace.converged = residual_norm <= options.tol;
        if !residual_norm.is_finite() {
            break;
        }
    }
    Ok(state.into_solution(space, trace))
}

/// Standard FEM solve of `ΔU = 2 sqrt(f)` with the problem's boundary data;
/// convex when `f > 0`. Fails with `Error::NegativeSource` otherwise.
pub fn initial_guess_ma(problem: &ProblemSpec, space: &Arc<FunctionSpace>) -> Result<FEFunction> {
    let points = space.quadrature_points();
    let mut rhs = Vec::with_capacity(points.len());
    for p in &points {
        let f = (problem.source)(p);
        if !f.is_finite() {
            return Err(Error::NonFinite { point: *p, value: f });
        }
        if f < 0.0 {
            return Err(Error::NegativeSource { point: *p, value: f });
        }
        rhs.push(2.0 * f.sqrt());
    }
    let lift = dirichlet_lift(space, |x| (problem.boundary)(x))?;
    solve_poisson(space, &rhs, &lift)
}

/// The problem's prescribed starting point.
pub fn initial_guess(problem: &ProblemSpec, space: &Arc<FunctionSpace>) -> Result<FEFunction> {
    match problem.initial_guess {
        InitialGuess::Zero => Ok(FEFunction::zero(space)),
        InitialGuess::MongeAmpere => initial_guess_ma(problem, space),
        InitialGuess::Harmonic => {
            let lift = dirichlet_lift(space, |x| (problem.boundary)(x))?;
            solve_poisson(space, &vec![0.0; space.n_quadrature_points()], &lift)
        }
    }
}

/// Runs the problem's strategy from its prescribed initial guess.
pub fn solve(problem: &ProblemSpec, disc: &Discretization, options: &NewtonOptions) -> Result<NonlinearSolution> {
    let u0 = initial_guess(problem, disc.space())?;
    match problem.strategy {
        Strategy::NewtonNvfem => newton_nvfem(problem, disc, &u0, options),
        Strategy::Fnfem => fnfem_solve(problem, disc, &u0, options),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::build_space;
    use crate::mesh::{generate_criss_cross, Rect};
    use crate::problems::{self, Linear, ProblemSpec};
    use nalgebra::Point2;

    fn disc(n: usize, p: usize, domain: Rect) -> Discretization {
        let s = build_space(Arc::new(generate_criss_cross(domain, n).unwrap()), p).unwrap();
        Discretization::new(&s).unwrap()
    }

    fn poisson_problem() -> ProblemSpec {
        let mut p = problems::sine();
        p.nonlinearity = Arc::new(Linear::laplacian());
        p.source = Arc::new(|x: &Point2<f64>| x.x.cos() + x.y);
        p.boundary = Arc::new(|x: &Point2<f64>| x.x * x.y);
        p
    }

    #[test]
    fn linear_problem_converges_after_one_solve() {
        let d = disc(4, 2, Rect::square(-1.0, 1.0));
        let p = poisson_problem();
        let u0 = FEFunction::new(Arc::clone(d.space()), (0..d.space().n_dofs()).map(|i| i as f64).collect());
        let sol = newton_nvfem(&p, &d, &u0, &NewtonOptions::default()).unwrap();
        assert!(sol.trace.converged);
        // The first step lands on the solution; the second confirms it.
        assert_eq!(sol.trace.n_iterations(), 2);
        assert!(sol.trace.iterates[1].step_norm < 1e-10);
    }

    #[test]
    fn strategies_agree_on_sine() {
        let d = disc(4, 2, Rect::square(-1.0, 1.0));
        let p = problems::sine();
        let u0 = FEFunction::zero(d.space());
        let a = newton_nvfem(&p, &d, &u0, &NewtonOptions::default()).unwrap();
        let b = fnfem_solve(
            &p,
            &d,
            &u0,
            &NewtonOptions {
                tol: 1e-10,
                ..NewtonOptions::default()
            },
        )
        .unwrap();
        assert!(a.trace.converged && b.trace.converged);
        let diff = a.u.coeffs().iter().zip(b.u.coeffs()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff < 1e-7, "{diff}");
    }

    #[test]
    fn hessian_of_result_matches_recovery() {
        let d = disc(4, 1, Rect::square(-1.0, 1.0));
        let sol = solve(&problems::cubic(), &d, &NewtonOptions::default()).unwrap();
        let h = d.recover_hessian(&sol.u).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for (a, b) in h.component(i, j).coeffs().iter().zip(sol.h.component(i, j).coeffs()) {
                    assert!((a - b).abs() <= 1e-11 * (1.0 + a.abs()));
                }
            }
        }
    }

    #[test]
    fn iteration_limit_gives_unconverged_result() {
        let d = disc(4, 1, Rect::square(-1.0, 1.0));
        let options = NewtonOptions {
            max_iterations: 1,
            ..NewtonOptions::default()
        };
        let sol = solve(&problems::sine(), &d, &options).unwrap();
        assert!(!sol.trace.converged);
        assert_eq!(sol.trace.n_iterations(), 1);
    }

    #[test]
    fn bad_initial_guess_breaks_monge_ampere() {
        let d = disc(4, 2, Rect::square(-1.0, 1.0));
        let p = problems::ma_radial();
        let u0 = FEFunction::zero(d.space());
        match newton_nvfem(&p, &d, &u0, &NewtonOptions::default()) {
            Err(Error::NewtonBreakdown { iteration, source, .. }) => {
                assert_eq!(iteration, 1);
                assert!(matches!(*source, Error::LinearSolver(_)), "{source}");
            }
            other => panic!("expected breakdown, got {other:?}"),
        }
        let strict = NewtonOptions {
            check_initial_ellipticity: true,
            ..NewtonOptions::default()
        };
        match newton_nvfem(&p, &d, &u0, &strict) {
            Err(Error::NewtonBreakdown { iteration, source, .. }) => {
                assert_eq!(iteration, 1);
                assert!(matches!(*source, Error::Ellipticity { .. }));
            }
            other => panic!("expected breakdown, got {other:?}"),
        }
    }

    #[test]
    fn negative_source_has_no_initial_guess() {
        let d = disc(2, 2, Rect::square(-1.0, 1.0));
        let err = initial_guess_ma(&problems::ma_power(0.45), d.space()).unwrap_err();
        assert!(matches!(err, Error::NegativeSource { value, .. } if value < 0.0));
    }

    #[test]
    fn ma_initial_guess_is_convex() {
        let d = disc(8, 2, Rect::square(-1.0, 1.0));
        let u0 = initial_guess_ma(&problems::ma_radial(), d.space()).unwrap();
        let h = d.recover_hessian(&u0).unwrap();
        assert!(h.at_quadrature_points().iter().all(|m| m.trace() > 0.0));
    }

    #[test]
    fn trace_csv_layout() {
        let d = disc(4, 1, Rect::square(-1.0, 1.0));
        let sol = solve(&problems::sine(), &d, &NewtonOptions::default()).unwrap();
        let csv = sol.trace.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "iter,step_norm,residual_norm");
        assert_eq!(lines.len(), sol.trace.n_iterations() + 2);
        assert!(lines[1].starts_with("0,,"));
    }
}
