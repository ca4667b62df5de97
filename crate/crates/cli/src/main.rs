use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use nvfem_cli::{run_benchmark, thread_count, CliError, RunConfig, Settings};

/// Refinement studies for fully nonlinear elliptic problems.
///
/// Exit status: 0 when every level converged, 2 when some level did not,
/// 1 on configuration or I/O errors.
#[derive(Debug, Parser)]
#[command(name = "nvfem", version)]
struct Args {
    /// TOML file with run settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem name: sine, cubic, ma-radial, ma-cone, ma-alpha:<a>, pucci:<a>, pucci-pw:<a>.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// Uniform levels, or the cycle cap of an adaptive run.
    #[arg(long)]
    levels: Option<usize>,
    /// Refine adaptively (ZZ indicators with Dörfler marking).
    #[arg(long)]
    adaptive: bool,
    #[arg(long)]
    theta: Option<f64>,
    /// Stop an adaptive run once a mesh has this many DOFs.
    #[arg(long)]
    max_dofs: Option<usize>,
    /// Newton tolerance of the selected strategy.
    #[arg(long)]
    tol: Option<f64>,
    /// newton-nvfem or fnfem.
    #[arg(long)]
    strategy: Option<String>,
    /// Criss-cross resolution of the first mesh.
    #[arg(long)]
    n0: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn settings(args: &Args) -> Result<Settings, CliError> {
    let file = match &args.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let flags = Settings {
        problem: args.problem.clone(),
        degree: args.degree,
        n0: args.n0,
        levels: args.levels,
        adaptive: args.adaptive.then_some(true),
        theta: args.theta,
        max_dofs: args.max_dofs,
        strategy: args.strategy.clone(),
        out: args.out.clone(),
        ..Settings::default()
    };
    let mut merged = file.merge(flags);
    // --tol applies to whichever strategy ends up selected.
    if let Some(tol) = args.tol {
        let probe = RunConfig::from_settings(merged.clone())?;
        match probe.strategy {
            nvfem::problems::Strategy::NewtonNvfem => merged.newton_tol = Some(tol),
            nvfem::problems::Strategy::Fnfem => merged.residual_tol = Some(tol),
        }
    }
    Ok(merged)
}

fn run(args: &Args) -> Result<i32, CliError> {
    let threads = thread_count(std::env::var("NVFEM_THREADS").ok().as_deref())?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Config {
                field: "NVFEM_THREADS",
                message: e.to_string(),
            })?;
    }
    let config = RunConfig::from_settings(settings(args)?)?;
    let outcome = run_benchmark(&config)?;
    print!("{}", outcome.study.eoc_table().to_csv());
    for level in outcome.study.levels.iter().filter(|l| !l.converged) {
        eprintln!(
            "level {}: {}",
            level.level,
            level.failure.as_deref().unwrap_or("not converged")
        );
    }
    eprintln!("wrote {} files to {}", outcome.files.len(), config.out.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
