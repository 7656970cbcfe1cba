//! Batch front end: parse a config, run the requested experiment, write
//! CSV/plot artifacts, print a per-level summary table.
//!
//! Exit codes: 0 success, 2 bad config or usage, 3 solver failure, 4 io
//! failure.  Failures print a single `error: <class>: <message>` line on
//! stderr.

mod config;
mod vtk;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_config, Mode, RunConfig};
use gpmg::{
    error_vs_reference, run_direct_all_levels, run_multigrid, write_compare_csv, write_errors_csv,
    write_errors_dat, write_run_csv, BoxDomain, MultigridRun, Potential, ProblemParams, RunContext,
    ScfConfig, SolverOptions,
};

const ARTIFACT_HELP: &str = "\
CONFIG KEYS (`key = value`, `#` comments)
  dim              1, 2, or 3 (required)
  cells_per_axis   coarsest-mesh cells per axis, >= 2 (required)
  n_levels         hierarchy depth; each level doubles cells per axis (required)
  zeta             interaction strength, >= 0 (default 0)
  gammas           comma-separated trap coefficients, one per axis (default all 0)
  damping          SCF mixing weight in (0, 1] (default by interaction strength:
                   1.0 at zeta = 0, 0.7 up to zeta = 10, 0.3 beyond, with
                   automatic halving restarts on stalls)
  residual_tol     SCF convergence threshold (default 1e-10)
  max_iters        SCF iteration cap per attempt (default 500)
  direct_max_dofs  largest correction system solved by direct factorization
                   (default 20000; 0 forces the iterative path everywhere)
  tol_base         floor for per-level linear tolerances (default 1e-10)
  c_tol            scale of the h^2 part of per-level tolerances (default 0.01)
  mode             multigrid | direct | both (default multigrid)
  output_dir       artifact directory (default out)

ARTIFACTS (column order never depends on the config; reruns overwrite)
  run.csv      level,elements,dofs,h_max,lambda,residual,norm_drift,scf_iterations,newton_method,newton_iters,newton_residual,build_seconds,solve_seconds
               multigrid rows in modes multigrid/both, direct rows in mode direct
  lambda.dat   gnuplot data: # dofs lambda solve_seconds
  compare.csv  mode both only: level,dofs,lambda_multigrid,lambda_direct,lambda_gap,l2_distance,seconds_multigrid,seconds_direct
  errors.csv   mode both only: level,err_lambda,err_h1,err_l2,order_lambda,order_h1,order_l2
               multigrid levels 1..n-1 against the direct level-n solution
               (header only when n_levels = 1)
  errors.dat   gnuplot data: # dofs err_lambda err_h1 err_l2
  level_k.vtk  with --export-vtk: legacy ASCII VTK, eigenfunction as point data

EXIT CODES
  0 success    2 bad config or usage    3 solver failure    4 io failure";

#[derive(Parser)]
#[command(
    name = "gpmg",
    version,
    about = "Ground-state solver for the Gross-Pitaevskii equation on box domains",
    after_help = ARTIFACT_HELP,
    after_long_help = ARTIFACT_HELP
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the experiment described by a config file
    Run {
        /// Path to a `key = value` config file
        config: PathBuf,
        /// Override the config's mode (multigrid, direct, both)
        #[arg(long)]
        mode: Option<String>,
        /// Override the config's output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write one legacy-VTK file per level
        #[arg(long)]
        export_vtk: bool,
        /// Suppress the summary table
        #[arg(long)]
        quiet: bool,
    },
}

struct Failure {
    code: u8,
    class: &'static str,
    message: String,
}

impl Failure {
    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            class: "config",
            message: message.into(),
        }
    }

    fn io(message: impl Into<String>) -> Self {
        Failure {
            code: 4,
            class: "io",
            message: message.into(),
        }
    }
}

/// Library errors split into the two runtime exit classes.
fn solver_failure(e: gpmg::Error) -> Failure {
    match e {
        gpmg::Error::Io(inner) => Failure::io(inner.to_string()),
        other => Failure {
            code: 3,
            class: "solver",
            message: other.to_string(),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Cmd::Run {
        config,
        mode,
        out,
        export_vtk,
        quiet,
    } = cli.cmd;
    match run(&config, mode, out, export_vtk, quiet) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            // Single line, fixed shape, safe to grep in scripts.
            eprintln!("error: {}: {}", f.class, f.message.replace('\n', "; "));
            ExitCode::from(f.code)
        }
    }
}

fn run(
    config_path: &Path,
    mode: Option<String>,
    out: Option<PathBuf>,
    export_vtk: bool,
    quiet: bool,
) -> Result<(), Failure> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| Failure::io(format!("{}: {e}", config_path.display())))?;
    let mut cfg = parse_config(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", config_path.display())))?;
    if let Some(m) = mode {
        cfg.mode = m.parse().map_err(Failure::config)?;
    }
    if let Some(o) = out {
        cfg.output_dir = o.to_string_lossy().into_owned();
    }
    execute(&cfg, export_vtk, quiet)
}

fn execute(cfg: &RunConfig, export_vtk: bool, quiet: bool) -> Result<(), Failure> {
    let domain = BoxDomain::unit(cfg.dim).map_err(solver_failure)?;
    let potential = Potential::new(cfg.gammas.clone()).map_err(solver_failure)?;
    let params = ProblemParams::new(domain, potential, cfg.zeta).map_err(solver_failure)?;
    let ctx =
        RunContext::prepare(&params, cfg.cells_per_axis, cfg.n_levels).map_err(solver_failure)?;
    let scf = ScfConfig {
        residual_tol: cfg.residual_tol,
        max_iters: cfg.max_iters,
        damping: cfg.damping,
    };
    let opts = SolverOptions {
        direct_max_dofs: cfg.direct_max_dofs,
        tol_base: cfg.tol_base,
        c_tol: cfg.c_tol,
        ..SolverOptions::default()
    };

    let multigrid = match cfg.mode {
        Mode::Multigrid | Mode::Both => {
            Some(run_multigrid(&ctx, &scf, &opts).map_err(solver_failure)?)
        }
        Mode::Direct => None,
    };
    let direct = match cfg.mode {
        Mode::Direct | Mode::Both => {
            Some(run_direct_all_levels(&ctx, &scf).map_err(solver_failure)?)
        }
        Mode::Multigrid => None,
    };

    let dir = Path::new(&cfg.output_dir);
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(format!("{}: {e}", dir.display())))?;
    // run.csv and the plot data describe the headline algorithm whenever
    // it ran; mode direct reports the reference chain instead.
    let primary = multigrid.as_ref().or(direct.as_ref()).unwrap();
    write_run_csv(primary, &dir.join("run.csv")).map_err(solver_failure)?;
    write_lambda_dat(primary, &dir.join("lambda.dat")).map_err(|e| Failure::io(e.to_string()))?;
    if let (Some(mg), Some(dr)) = (&multigrid, &direct) {
        write_compare_csv(&ctx, mg, dr, &dir.join("compare.csv")).map_err(solver_failure)?;
        let records = if cfg.n_levels >= 2 {
            let trimmed = MultigridRun {
                levels: mg.levels[..cfg.n_levels - 1].to_vec(),
                total_seconds: 0.0,
            };
            error_vs_reference(&ctx, &trimmed, &dr.finest().pair).map_err(solver_failure)?
        } else {
            Vec::new()
        };
        write_errors_csv(&records, &dir.join("errors.csv")).map_err(solver_failure)?;
        write_errors_dat(&records, &dir.join("errors.dat")).map_err(solver_failure)?;
    }
    if export_vtk {
        for l in &primary.levels {
            let path = dir.join(format!("level_{}.vtk", l.level));
            vtk::write_vtk(ctx.hierarchy().mesh(l.level), &l.pair.u, &path)
                .map_err(|e| Failure::io(format!("{}: {e}", path.display())))?;
        }
    }

    if !quiet {
        if let Some(mg) = &multigrid {
            print_summary("multigrid", mg);
        }
        if let Some(dr) = &direct {
            print_summary("direct", dr);
        }
        println!("artifacts in {}", dir.display());
    }
    Ok(())
}

fn write_lambda_dat(run: &MultigridRun, path: &Path) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# dofs lambda solve_seconds")?;
    for l in &run.levels {
        writeln!(
            f,
            "{} {:.16e} {:.3e}",
            l.dofs, l.pair.lambda, l.solve_seconds
        )?;
    }
    Ok(())
}

fn print_summary(label: &str, run: &MultigridRun) {
    println!("mode {label}");
    println!("{:>5}  {:>10}  {:>9}", "level", "elements", "seconds");
    for l in &run.levels {
        println!(
            "{:>5}  {:>10}  {:>9.4}",
            l.level, l.elements, l.solve_seconds
        );
    }
    println!(
        "total {:.4} s, lambda = {:.10}",
        run.total_seconds,
        run.finest().pair.lambda
    );
}
