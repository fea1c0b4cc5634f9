//! Single binary, subcommand per task. Exit codes: 0 success,
//! 1 verification failure, 2 config error, 3 runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tpms_cpia::constraints::SurfaceKind;

use commands::AppError;
use config::{Command, Overrides};

#[derive(Parser)]
#[command(
    name = "tpms-cpia",
    version,
    about = "B-spline fitting of triply periodic minimal surface patches with \
             constrained progressive iteration"
)]
struct Cli {
    /// JSON config file; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Surface family: gyroid, diamond or schwarz_p
    #[arg(long, global = true)]
    surface: Option<SurfaceKind>,
    /// Control net side length (one patch is n x n points)
    #[arg(long, global = true)]
    n: Option<usize>,
    /// B-spline degree per direction
    #[arg(long, global = true)]
    degree: Option<usize>,
    /// Step-norm stopping tolerance for fits
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Iteration budget for fits
    #[arg(long = "max-iters", global = true)]
    max_iters: Option<usize>,
    /// Output directory (created if missing); all files land here
    #[arg(long = "out", global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for the randomized verification checks
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Option<CmdLine>,
}

#[derive(Subcommand)]
enum CmdLine {
    /// Dump constraint matrices as coordinate CSV plus an eigen/rank report
    Matrices {
        /// Matrix to dump: m:i:j, alpha:i, beta:i, n:k or t:surface:k (repeatable)
        #[arg(long = "which", value_name = "SPEC")]
        which: Vec<String>,
    },
    /// Fit a constrained B-spline patch and write net, log and summary
    Fit {
        /// Sample grid CSV (n x n, taken at the collocation sites); fresh
        /// samples are generated when absent
        #[arg(long, value_name = "PATH")]
        data: Option<PathBuf>,
        /// Transform indices for the four boundaries of the configurable
        /// family, e.g. 1,2,3,4
        #[arg(long = "gyroid-assignment", value_delimiter = ',', value_name = "K1,K2,K3,K4")]
        gyroid_assignment: Option<Vec<usize>>,
    },
    /// Tabulate representation derivatives and maximize the normal second
    /// derivative
    Derivatives {
        /// Grid cells per direction for the table, e.g. 32,32
        #[arg(long, value_delimiter = ',', value_name = "SU,SV")]
        samples: Option<Vec<usize>>,
        /// Coarse grid side for the maximization
        #[arg(long)]
        grid: Option<usize>,
        /// Refinement passes after the coarse scan
        #[arg(long = "refine-levels")]
        refine_levels: Option<usize>,
    },
    /// Sample a surface patch to a CSV grid and an OBJ mesh
    Sample {
        /// Grid cells per direction, e.g. 32,32
        #[arg(long, value_delimiter = ',', value_name = "SU,SV")]
        samples: Option<Vec<usize>>,
        /// Associate-family rotation angle in radians
        #[arg(long)]
        bonnet: Option<f64>,
    },
    /// Run the cross-module invariant suite and write a JSON report
    Verify {
        /// Sample count for the randomized derivative checks
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long = "tamper-t1d", hide = true)]
        tamper_t1d: bool,
    },
}

fn pair(v: Vec<usize>, what: &str) -> Result<(usize, usize), AppError> {
    match v.as_slice() {
        [a, b] => Ok((*a, *b)),
        other => Err(AppError::Config(format!("{what} takes two values, got {other:?}"))),
    }
}

fn quad(v: Vec<usize>, what: &str) -> Result<[usize; 4], AppError> {
    match v.as_slice() {
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        other => Err(AppError::Config(format!("{what} takes four values, got {other:?}"))),
    }
}

fn overrides(cli: &Cli) -> Result<Overrides, AppError> {
    let mut ov = Overrides {
        command: None,
        surface: cli.surface,
        n: cli.n,
        degree: cli.degree,
        tol: cli.tol,
        max_iters: cli.max_iters,
        out: cli.out.clone(),
        seed: cli.seed,
        ..Overrides::default()
    };
    match &cli.command {
        None => {}
        Some(CmdLine::Matrices { which }) => {
            ov.command = Some(Command::Matrices);
            ov.which = which.clone();
        }
        Some(CmdLine::Fit { data, gyroid_assignment }) => {
            ov.command = Some(Command::Fit);
            ov.data = data.clone();
            if let Some(a) = gyroid_assignment {
                ov.gyroid_assignment = Some(quad(a.clone(), "--gyroid-assignment")?);
            }
        }
        Some(CmdLine::Derivatives { samples, grid, refine_levels }) => {
            ov.command = Some(Command::Derivatives);
            if let Some(s) = samples {
                ov.samples = Some(pair(s.clone(), "--samples")?);
            }
            ov.grid = *grid;
            ov.refine_levels = *refine_levels;
        }
        Some(CmdLine::Sample { samples, bonnet }) => {
            ov.command = Some(Command::Sample);
            if let Some(s) = samples {
                ov.samples = Some(pair(s.clone(), "--samples")?);
            }
            ov.bonnet = *bonnet;
        }
        Some(CmdLine::Verify { samples, tamper_t1d }) => {
            ov.command = Some(Command::Verify);
            ov.verify_samples = *samples;
            ov.tamper_t1d = *tamper_t1d;
        }
    }
    Ok(ov)
}

fn real_main() -> Result<(), AppError> {
    let cli = Cli::parse();
    config::configure_threads().map_err(AppError::Config)?;
    let ov = overrides(&cli)?;
    let cfg = config::resolve(cli.config.as_deref(), &ov).map_err(AppError::Config)?;
    commands::run(&cfg)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::VerifyFailed) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(AppError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
