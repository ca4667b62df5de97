//! Benchmark driver behind the `nvfem` binary: configuration, the refinement
//! run and the output files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use nvfem::assembly::{dirichlet_lift, Discretization};
use nvfem::mesh::Rect;
use nvfem::nvfem::solve_poisson;
use nvfem::problems::{problem_by_name, ProblemSpec, Strategy};
use nvfem::study::{run_study, Damping, Study, StudyOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid `{field}`: {message}")]
    Config { field: &'static str, message: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] nvfem::Error),
}

impl CliError {
    fn config(field: &'static str, message: impl Into<String>) -> Self {
        Self::Config {
            field,
            message: message.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

/// Every setting optional; used both for the config file and for flags.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub problem: Option<String>,
    pub degree: Option<usize>,
    /// `[x0, y0, x1, y1]`; defaults to the problem's own domain.
    pub domain: Option<[f64; 4]>,
    pub n0: Option<usize>,
    pub levels: Option<usize>,
    pub adaptive: Option<bool>,
    pub theta: Option<f64>,
    pub max_dofs: Option<usize>,
    pub newton_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub max_iterations: Option<usize>,
    pub strategy: Option<String>,
    pub damping: Option<String>,
    pub out: Option<PathBuf>,
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config("config", e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: Settings) -> Settings {
        Settings {
            problem: over.problem.or(self.problem),
            degree: over.degree.or(self.degree),
            domain: over.domain.or(self.domain),
            n0: over.n0.or(self.n0),
            levels: over.levels.or(self.levels),
            adaptive: over.adaptive.or(self.adaptive),
            theta: over.theta.or(self.theta),
            max_dofs: over.max_dofs.or(self.max_dofs),
            newton_tol: over.newton_tol.or(self.newton_tol),
            residual_tol: over.residual_tol.or(self.residual_tol),
            max_iterations: over.max_iterations.or(self.max_iterations),
            strategy: over.strategy.or(self.strategy),
            damping: over.damping.or(self.damping),
            out: over.out.or(self.out),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Refinement {
    Uniform { levels: usize },
    /// `max_cycles` counts solves, the first mesh included.
    Adaptive {
        theta: f64,
        max_dofs: Option<usize>,
        max_cycles: usize,
    },
}

/// A validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub problem: String,
    pub degree: usize,
    pub domain: Rect,
    pub n0: usize,
    pub refinement: Refinement,
    pub newton_tol: f64,
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub strategy: Strategy,
    pub damping: Damping,
    pub out: PathBuf,
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::NewtonNvfem => "newton-nvfem",
        Strategy::Fnfem => "fnfem",
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::config(field, format!("must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_settings(s: Settings) -> Result<Self, CliError> {
        let name = s.problem.ok_or_else(|| CliError::config("problem", "missing"))?;
        let spec = problem_by_name(&name).map_err(|e| CliError::config("problem", e.to_string()))?;
        let degree = s.degree.unwrap_or(2);
        if !(1..=2).contains(&degree) {
            return Err(CliError::config("degree", format!("must be 1 or 2, got {degree}")));
        }
        let domain = match s.domain {
            None => spec.domain,
            Some([x0, y0, x1, y1]) => {
                if !(x1 > x0 && y1 > y0) {
                    return Err(CliError::config("domain", "needs x0 < x1 and y0 < y1"));
                }
                Rect::new(x0, y0, x1, y1)
            }
        };
        let n0 = s.n0.unwrap_or(4);
        if n0 == 0 {
            return Err(CliError::config("n0", "must be at least 1"));
        }
        let refinement = if s.adaptive.unwrap_or(false) {
            let theta = s.theta.unwrap_or(0.5);
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(CliError::config("theta", format!("must lie in (0, 1], got {theta}")));
            }
            let max_cycles = s.levels.unwrap_or(30);
            if max_cycles == 0 {
                return Err(CliError::config("levels", "must be at least 1"));
            }
            Refinement::Adaptive {
                theta,
                max_dofs: s.max_dofs,
                max_cycles,
            }
        } else {
            let levels = s.levels.unwrap_or(4);
            if levels == 0 {
                return Err(CliError::config("levels", "must be at least 1"));
            }
            Refinement::Uniform { levels }
        };
        let strategy = match s.strategy.as_deref() {
            None => spec.strategy,
            Some("newton-nvfem") => Strategy::NewtonNvfem,
            Some("fnfem") => Strategy::Fnfem,
            Some(other) => {
                return Err(CliError::config(
                    "strategy",
                    format!("unknown strategy '{other}' (newton-nvfem or fnfem)"),
                ))
            }
        };
        if name.starts_with("ma-") && strategy != Strategy::NewtonNvfem {
            return Err(CliError::config("strategy", "Monge–Ampère problems require newton-nvfem"));
        }
        let damping = match s.damping.as_deref() {
            None | Some("off") => Damping::Off,
            Some("always") => Damping::Always,
            Some("on-failure") => Damping::OnFailure,
            Some(other) => {
                return Err(CliError::config(
                    "damping",
                    format!("unknown damping '{other}' (off, always or on-failure)"),
                ))
            }
        };
        let max_iterations = s.max_iterations.unwrap_or(50);
        if max_iterations == 0 {
            return Err(CliError::config("max_iterations", "must be at least 1"));
        }
        Ok(Self {
            problem: name,
            degree,
            domain,
            n0,
            refinement,
            newton_tol: positive("newton_tol", s.newton_tol.unwrap_or(1e-8))?,
            residual_tol: positive("residual_tol", s.residual_tol.unwrap_or(1e-10))?,
            max_iterations,
            strategy,
            damping,
            out: s.out.unwrap_or_else(|| PathBuf::from("nvfem-out")),
        })
    }

    pub fn tolerance(&self) -> f64 {
        match self.strategy {
            Strategy::NewtonNvfem => self.newton_tol,
            Strategy::Fnfem => self.residual_tol,
        }
    }

    pub fn problem_spec(&self) -> Result<ProblemSpec, CliError> {
        let mut spec = problem_by_name(&self.problem).map_err(|e| CliError::config("problem", e.to_string()))?;
        spec.domain = self.domain;
        spec.strategy = self.strategy;
        Ok(spec)
    }

    pub fn study_options(&self) -> StudyOptions {
        let (levels, adaptive, theta, max_dofs) = match self.refinement {
            Refinement::Uniform { levels } => (levels, false, 0.5, None),
            Refinement::Adaptive {
                theta,
                max_dofs,
                max_cycles,
            } => (max_cycles, true, theta, max_dofs),
        };
        StudyOptions {
            degree: self.degree,
            levels,
            n0: self.n0,
            adaptive,
            theta,
            tol: Some(self.tolerance()),
            max_iterations: self.max_iterations,
            max_dofs,
            keep_solutions: true,
            damping: self.damping,
            ..StudyOptions::default()
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub study: Study,
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    pub fn all_converged(&self) -> bool {
        self.study.all_converged()
    }

    /// 0 when every level converged, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.all_converged() {
            0
        } else {
            2
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Write {
        path: path.clone(),
        source,
    })?;
    files.push(path);
    Ok(())
}

/// `L2` distance between a level's solution and the Poisson solve with the
/// same boundary data.
fn poisson_difference(spec: &ProblemSpec, u: &nvfem::fespace::FEFunction) -> Result<f64, CliError> {
    let space = u.space();
    let lift = dirichlet_lift(space, |x| (spec.boundary)(x))?;
    let poisson = solve_poisson(space, &vec![0.0; space.n_quadrature_points()], &lift)?;
    let diff: Vec<f64> = u.coeffs().iter().zip(poisson.coeffs()).map(|(a, b)| a - b).collect();
    Ok(Discretization::new(space)?.l2_norm(&diff))
}

fn gnuplot_table(study: &Study) -> String {
    let mut out = String::from("# n_dofs h_max err_l2 err_h1 err_hess\n");
    for l in &study.levels {
        if let Some(e) = l.errors {
            let _ = writeln!(out, "{} {:.6e} {:.6e} {:.6e} {:.6e}", l.n_dofs, l.h_max, e.l2, e.h1, e.hessian);
        }
    }
    out
}

/// Runs the study and writes every output file into `config.out`.
pub fn run_benchmark(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let spec = config.problem_spec()?;
    let study = run_study(&spec, &config.study_options())?;
    let dir = &config.out;
    fs::create_dir_all(dir).map_err(|source| CliError::Write {
        path: dir.clone(),
        source,
    })?;
    let mut files = Vec::new();
    let table = study.eoc_table();
    write(dir, "eoc.csv", &table.to_csv(), &mut files)?;

    let mut rows = Vec::with_capacity(study.levels.len());
    for (level, row) in study.levels.iter().zip(&table.rows) {
        let k = level.level;
        if let Some(trace) = &level.trace {
            write(dir, &format!("newton_trace_{k}.csv"), &trace.to_csv(), &mut files)?;
        }
        let mut difference = None;
        if let Some(sol) = &level.solution {
            let space = sol.u.space();
            write(dir, &format!("solution_{k}.txt"), &sol.u.to_text(), &mut files)?;
            write(dir, &format!("hessian_{k}.txt"), &sol.h.to_text(), &mut files)?;
            write(dir, &format!("mesh_{k}.txt"), &space.mesh().to_text(), &mut files)?;
            let mut coords = String::new();
            for (i, p) in space.dof_coords().iter().enumerate() {
                let _ = writeln!(coords, "{i} {:.16e} {:.16e}", p.x, p.y);
            }
            write(dir, &format!("dofs_{k}.txt"), &coords, &mut files)?;
            difference = Some(poisson_difference(&spec, &sol.u)?);
        }
        let e = row.errors;
        rows.push(json!({
            "n_dofs": row.n_dofs,
            "h_max": row.h_max,
            "err_l2": e.map(|e| e.l2),
            "rate_l2": row.rate_l2,
            "err_h1": e.map(|e| e.h1),
            "rate_h1": row.rate_h1,
            "err_hess": e.map(|e| e.hessian),
            "rate_hess": row.rate_hess,
            "newton_iters": row.newton_iters,
            "converged": level.converged,
            "damped": level.damped,
            "failure": level.failure,
            "poisson_l2_difference": difference,
        }));
    }
    let doc = json!({
        "problem": config.problem,
        "degree": config.degree,
        "strategy": strategy_name(config.strategy),
        "tolerance": config.tolerance(),
        "refinement": config.refinement,
        "all_converged": study.all_converged(),
        "rows": rows,
    });
    let text = serde_json::to_string_pretty(&doc).expect("JSON values serialize");
    write(dir, "eoc.json", &(text + "\n"), &mut files)?;
    write(dir, "gnuplot.dat", &gnuplot_table(&study), &mut files)?;
    Ok(RunOutcome { study, files })
}

/// Reads `NVFEM_THREADS` (0 or unset = rayon's default).
pub fn thread_count(value: Option<&str>) -> Result<usize, CliError> {
    match value {
        None => Ok(0),
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::config("NVFEM_THREADS", format!("not a thread count: {v:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(problem: &str) -> Settings {
        Settings {
            problem: Some(problem.into()),
            ..Settings::default()
        }
    }

    #[test]
    fn flags_override_file() {
        let file = Settings::from_toml("problem = \"sine\"\ndegree = 1\nlevels = 5\n").unwrap();
        let flags = Settings {
            levels: Some(2),
            ..Settings::default()
        };
        let c = RunConfig::from_settings(file.merge(flags)).unwrap();
        assert_eq!(c.degree, 1);
        assert_eq!(c.refinement, Refinement::Uniform { levels: 2 });
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            Settings::from_toml("problme = \"sine\""),
            Err(CliError::Config { field: "config", .. })
        ));
    }

    #[test]
    fn errors_name_the_field() {
        let field_of = |s: Settings| match RunConfig::from_settings(s) {
            Err(CliError::Config { field, .. }) => field,
            other => panic!("expected a config error, got {other:?}"),
        };
        assert_eq!(field_of(Settings::default()), "problem");
        assert_eq!(field_of(settings("nope")), "problem");
        assert_eq!(
            field_of(Settings {
                degree: Some(3),
                ..settings("sine")
            }),
            "degree"
        );
        assert_eq!(
            field_of(Settings {
                levels: Some(0),
                ..settings("sine")
            }),
            "levels"
        );
        assert_eq!(
            field_of(Settings {
                newton_tol: Some(-1.0),
                ..settings("sine")
            }),
            "newton_tol"
        );
        assert_eq!(
            field_of(Settings {
                adaptive: Some(true),
                theta: Some(0.0),
                ..settings("sine")
            }),
            "theta"
        );
        assert_eq!(
            field_of(Settings {
                strategy: Some("fnfem".into()),
                ..settings("ma-radial")
            }),
            "strategy"
        );
    }

    #[test]
    fn strategy_defaults_follow_the_problem() {
        let pucci = RunConfig::from_settings(settings("pucci:2")).unwrap();
        assert_eq!(pucci.strategy, Strategy::Fnfem);
        assert_eq!(pucci.tolerance(), 1e-10);
        let sine = RunConfig::from_settings(Settings {
            strategy: Some("fnfem".into()),
            ..settings("sine")
        })
        .unwrap();
        assert_eq!(sine.strategy, Strategy::Fnfem);
    }

    #[test]
    fn adaptive_settings() {
        let c = RunConfig::from_settings(Settings {
            adaptive: Some(true),
            max_dofs: Some(1000),
            ..settings("sine")
        })
        .unwrap();
        assert_eq!(
            c.refinement,
            Refinement::Adaptive {
                theta: 0.5,
                max_dofs: Some(1000),
                max_cycles: 30
            }
        );
        let o = c.study_options();
        assert!(o.adaptive && o.keep_solutions);
    }

    #[test]
    fn thread_count_parsing() {
        assert_eq!(thread_count(None).unwrap(), 0);
        assert_eq!(thread_count(Some("3")).unwrap(), 3);
        assert!(thread_count(Some("many")).is_err());
    }
}
