//! Refinement studies: solve a problem on a sequence of meshes and collect
//! errors, rates and Newton statistics.

use std::sync::Arc;

use serde::Serialize;

use crate::analysis::{dorfler_mark, error_norms, zz_estimate, EocTable, ErrorNorms};
use crate::assembly::Discretization;
use crate::error::{Error, Result};
use crate::fespace::build_space;
use crate::mesh::{generate_criss_cross, generate_irregular, refine_adaptive, refine_uniform, Mesh};
use crate::nonlinear::{solve, NewtonOptions, NewtonTrace, NonlinearSolution};
use crate::nvfem::LinearOptions;
use crate::problems::{MeshKind, ProblemSpec, Strategy};

/// When to use the step-halving line search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Damping {
    Off,
    Always,
    /// Plain Newton first; a level that breaks down or does not converge is
    /// solved again with damping.
    OnFailure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyOptions {
    pub degree: usize,
    /// Number of meshes to solve on.
    pub levels: usize,
    /// Criss-cross resolution of the coarsest mesh.
    pub n0: usize,
    /// Refine with ZZ indicators and Dörfler marking instead of uniformly.
    pub adaptive: bool,
    pub theta: f64,
    /// Newton tolerance; `None` picks 1e-8 (step norm) for Newton–NVFEM and
    /// 1e-10 (residual) for FNFEM.
    pub tol: Option<f64>,
    pub max_iterations: usize,
    /// Adaptive studies stop once a mesh has at least this many DOFs.
    pub max_dofs: Option<usize>,
    /// Keep every level's discrete solution in the result.
    pub keep_solutions: bool,
    pub damping: Damping,
    /// Inner solver settings. Studies sample ellipticity without enforcing
    /// it: near a singularity even the recovered Hessian of the exact
    /// solution's interpolant fails to be convex.
    pub linear: LinearOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            degree: 2,
            levels: 4,
            n0: 4,
            adaptive: false,
            theta: 0.5,
            tol: None,
            max_iterations: 50,
            max_dofs: None,
            keep_solutions: false,
            damping: Damping::Off,
            linear: LinearOptions {
                check_ellipticity: false,
                ..LinearOptions::default()
            },
        }
    }
}

impl StudyOptions {
    /// Newton settings for the first attempt at a level.
    pub fn newton_options(&self, strategy: Strategy) -> NewtonOptions {
        let tol = self.tol.unwrap_or(match strategy {
            Strategy::NewtonNvfem => 1e-8,
            Strategy::Fnfem => 1e-10,
        });
        NewtonOptions {
            tol,
            max_iterations: self.max_iterations,
            line_search: self.damping == Damping::Always,
            check_initial_ellipticity: false,
            linear: self.linear,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub n_dofs: usize,
    pub n_cells: usize,
    pub h_max: f64,
    pub errors: Option<ErrorNorms>,
    pub trace: Option<NewtonTrace>,
    pub converged: bool,
    /// The reported run used the line search.
    pub damped: bool,
    /// Why the level has no solution, if it has none.
    pub failure: Option<String>,
    #[serde(skip)]
    pub solution: Option<NonlinearSolution>,
}

impl LevelResult {
    pub fn newton_iterations(&self) -> usize {
        self.trace.as_ref().map_or(0, NewtonTrace::n_iterations)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Study {
    pub problem: String,
    pub degree: usize,
    pub adaptive: bool,
    pub levels: Vec<LevelResult>,
}

impl Study {
    pub fn eoc_table(&self) -> EocTable {
        let rows: Vec<_> = self
            .levels
            .iter()
            .map(|l| (l.n_dofs, l.h_max, l.errors, l.newton_iterations(), l.converged))
            .collect();
        EocTable::new(&rows)
    }

    pub fn all_converged(&self) -> bool {
        self.levels.iter().all(|l| l.converged)
    }
}

pub fn initial_mesh(problem: &ProblemSpec, n0: usize) -> Result<Mesh> {
    match problem.mesh {
        MeshKind::CrissCross => generate_criss_cross(problem.domain, n0),
        MeshKind::Irregular => generate_irregular(problem.domain, n0),
    }
}

enum Attempt {
    Solved(NonlinearSolution),
    Broken { failure: String, last: Option<NonlinearSolution> },
}

impl Attempt {
    fn converged(&self) -> bool {
        matches!(self, Self::Solved(sol) if sol.trace.converged)
    }
}

fn attempt(problem: &ProblemSpec, disc: &Discretization, newton: &NewtonOptions) -> Result<Attempt> {
    match solve(problem, disc, newton) {
        Ok(sol) => Ok(Attempt::Solved(sol)),
        Err(Error::NewtonBreakdown { iteration, source, last }) => Ok(Attempt::Broken {
            failure: format!("Newton iteration {iteration}: {source}"),
            last: Some(*last),
        }),
        Err(e @ (Error::NegativeSource { .. } | Error::NonFinite { .. } | Error::Ellipticity { .. })) => {
            Ok(Attempt::Broken {
                failure: e.to_string(),
                last: None,
            })
        }
        Err(e) => Err(e),
    }
}

/// Solves on one mesh. Newton breakdowns and unusable data become
/// non-converged levels; the returned solution (if any) feeds adaptivity.
fn solve_level(
    problem: &ProblemSpec,
    mesh: Arc<Mesh>,
    level: usize,
    options: &StudyOptions,
) -> Result<(LevelResult, Option<NonlinearSolution>)> {
    let space = build_space(Arc::clone(&mesh), options.degree)?;
    let disc = Discretization::new(&space)?;
    let mut newton = options.newton_options(problem.strategy);
    let mut outcome = attempt(problem, &disc, &newton)?;
    let retry = options.damping == Damping::OnFailure
        && !outcome.converged()
        && !matches!(outcome, Attempt::Broken { last: None, .. });
    if retry {
        newton.line_search = true;
        outcome = attempt(problem, &disc, &newton)?;
    }
    let mut result = LevelResult {
        level,
        n_dofs: space.n_dofs(),
        n_cells: mesh.n_cells(),
        h_max: mesh.h_max(),
        errors: None,
        trace: None,
        converged: false,
        damped: newton.line_search,
        failure: None,
        solution: None,
    };
    let errors = |sol: &NonlinearSolution| {
        problem
            .exact
            .as_ref()
            .map(|exact| error_norms(&sol.u, &sol.h, exact.as_ref()))
    };
    match outcome {
        Attempt::Broken { failure, last } => {
            // Errors of the last iterate that was reached, for reporting only.
            result.failure = Some(failure);
            if let Some(last) = last {
                result.errors = errors(&last);
                result.trace = Some(last.trace);
            }
            Ok((result, None))
        }
        Attempt::Solved(sol) => {
            result.converged = sol.trace.converged;
            if !result.converged {
                result.failure = Some(format!("no convergence in {} iterations", sol.trace.n_iterations()));
            }
            result.errors = errors(&sol);
            result.trace = Some(sol.trace.clone());
            Ok((result, Some(sol)))
        }
    }
}

pub fn run_study(problem: &ProblemSpec, options: &StudyOptions) -> Result<Study> {
    if options.levels == 0 {
        return Err(Error::InvalidArgument("at least one level is needed".into()));
    }
    if options.adaptive && !(options.theta > 0.0 && options.theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in (0, 1], got {}", options.theta)));
    }
    let mut mesh = Arc::new(initial_mesh(problem, options.n0)?);
    let mut levels = Vec::with_capacity(options.levels);
    for level in 0..options.levels {
        let (mut result, solution) = solve_level(problem, Arc::clone(&mesh), level, options)?;
        let done = level + 1 == options.levels
            || options.max_dofs.is_some_and(|m| result.n_dofs >= m);
        let next = if done {
            None
        } else if options.adaptive {
            match &solution {
                Some(sol) => {
                    let marked = dorfler_mark(&zz_estimate(&sol.u), options.theta);
                    Some(refine_adaptive(&mesh, &marked)?)
                }
                None => None,
            }
        } else {
            Some(refine_uniform(&mesh)?)
        };
        if options.keep_solutions {
            result.solution = solution;
        }
        levels.push(result);
        match next {
            Some(m) => mesh = Arc::new(m),
            None => break,
        }
    }
    Ok(Study {
        problem: problem.name.clone(),
        degree: options.degree,
        adaptive: options.adaptive,
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems;

    #[test]
    fn uniform_study_shape() {
        let opts = StudyOptions {
            degree: 1,
            levels: 2,
            n0: 2,
            ..StudyOptions::default()
        };
        let s = run_study(&problems::sine(), &opts).unwrap();
        assert_eq!(s.levels.len(), 2);
        assert!(s.levels[1].n_dofs > s.levels[0].n_dofs);
        assert!((s.levels[1].h_max - 0.5 * s.levels[0].h_max).abs() < 1e-12);
        assert!(s.all_converged());
        assert!(s.levels.iter().all(|l| l.errors.is_some() && l.solution.is_none()));
    }

    #[test]
    fn negative_source_levels_are_unconverged() {
        let opts = StudyOptions {
            levels: 2,
            n0: 2,
            ..StudyOptions::default()
        };
        let s = run_study(&problems::ma_power(0.45), &opts).unwrap();
        assert_eq!(s.levels.len(), 2);
        assert!(s.levels.iter().all(|l| !l.converged && l.failure.is_some()));
    }

    #[test]
    fn adaptive_study_refines_locally() {
        let opts = StudyOptions {
            degree: 1,
            levels: 3,
            n0: 4,
            adaptive: true,
            ..StudyOptions::default()
        };
        let s = run_study(&problems::sine(), &opts).unwrap();
        assert_eq!(s.levels.len(), 3);
        let quad = s.levels[0].n_cells * 4;
        assert!(s.levels[1].n_cells > s.levels[0].n_cells && s.levels[1].n_cells < quad);
    }

    #[test]
    fn rejects_bad_options() {
        let p = problems::sine();
        assert!(run_study(&p, &StudyOptions { levels: 0, ..StudyOptions::default() }).is_err());
        let bad_theta = StudyOptions {
            adaptive: true,
            theta: 1.5,
            ..StudyOptions::default()
        };
        assert!(run_study(&p, &bad_theta).is_err());
    }
}
