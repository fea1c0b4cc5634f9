//! Run configuration: JSON file merged with command-line overrides.
//!
//! Precedence is defaults < config file < flags. Unknown keys anywhere in
//! the file are rejected with the offending key named, so a typo cannot
//! silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use tpms_cpia::constraints::SurfaceKind;
use tpms_cpia::weierstrass::Domain;

/// Which subcommand runs. Mirrored by the clap subcommand enum; kept
/// separate so a config file alone can select the command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Matrices,
    Fit,
    Derivatives,
    Sample,
    Verify,
}

impl std::str::FromStr for Command {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "matrices" => Ok(Command::Matrices),
            "fit" => Ok(Command::Fit),
            "derivatives" => Ok(Command::Derivatives),
            "sample" => Ok(Command::Sample),
            "verify" => Ok(Command::Verify),
            other => Err(format!("unknown command {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
}

/// The config file schema. Every field optional; defaults fill the gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    command: Option<String>,
    surface: Option<String>,
    n: Option<usize>,
    degree: Option<usize>,
    tol: Option<f64>,
    max_iters: Option<usize>,
    domain: Option<DomainFile>,
    /// Grid cells per direction for `sample` and `derivatives`.
    samples: Option<[usize; 2]>,
    output_dir: Option<PathBuf>,
    gyroid_assignment: Option<[usize; 4]>,
    seed: Option<u64>,
    /// Associate-family rotation angle; per-surface default when absent.
    bonnet: Option<f64>,
    /// Sample grid CSV consumed by `fit` instead of fresh sampling.
    data: Option<PathBuf>,
    /// Coarse grid side for the derivative maximization.
    grid: Option<usize>,
    refine_levels: Option<usize>,
    /// Matrices to dump, e.g. "m:1:2", "alpha:4", "n:1", "t:gyroid:5".
    which: Option<Vec<String>>,
    /// Sample count for the randomized checks in `verify`.
    verify_samples: Option<usize>,
    /// Fault-injection hook for `verify`; exercised by tests only.
    tamper_t1d: Option<bool>,
}

/// Fully-resolved configuration every subcommand consumes.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub surface: Option<SurfaceKind>,
    pub n: usize,
    pub degree: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub domain: Domain,
    pub samples: (usize, usize),
    pub output_dir: PathBuf,
    pub gyroid_assignment: Option<[usize; 4]>,
    pub seed: u64,
    pub bonnet: Option<f64>,
    pub data: Option<PathBuf>,
    pub grid: usize,
    pub refine_levels: usize,
    pub which: Vec<String>,
    pub verify_samples: usize,
    pub tamper_t1d: bool,
}

/// Command-line overrides already parsed by clap; `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub surface: Option<SurfaceKind>,
    pub n: Option<usize>,
    pub degree: Option<usize>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<(usize, usize)>,
    pub gyroid_assignment: Option<[usize; 4]>,
    pub bonnet: Option<f64>,
    pub data: Option<PathBuf>,
    pub grid: Option<usize>,
    pub refine_levels: Option<usize>,
    pub which: Vec<String>,
    pub verify_samples: Option<usize>,
    pub tamper_t1d: bool,
}

pub fn resolve(config_path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, String> {
    let file: FileConfig = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("config {}: {e}", path.display()))?
        }
        None => FileConfig::default(),
    };

    let command = match ov.command.or(file
        .command
        .as_deref()
        .map(|s| s.parse())
        .transpose()?)
    {
        Some(c) => c,
        None => return Err("no command: pass a subcommand or set \"command\" in the config".into()),
    };

    let surface = match (&ov.surface, &file.surface) {
        (Some(s), _) => Some(*s),
        (None, Some(s)) => Some(s.parse::<SurfaceKind>()?),
        (None, None) => None,
    };

    let domain = match &file.domain {
        Some(d) => Domain::new(d.re_min, d.re_max, d.im_min, d.im_max)
            .map_err(|e| format!("domain: {e}"))?,
        None => tpms_cpia::weierstrass::default_domain(),
    };

    let samples = ov.samples.or(file.samples.map(|[a, b]| (a, b))).unwrap_or((32, 32));
    let cfg = RunConfig {
        command,
        surface,
        n: ov.n.or(file.n).unwrap_or(8),
        degree: ov.degree.or(file.degree).unwrap_or(3),
        tol: ov.tol.or(file.tol).unwrap_or(1e-10),
        max_iters: ov.max_iters.or(file.max_iters).unwrap_or(500),
        domain,
        samples,
        output_dir: ov.out.clone().or(file.output_dir).unwrap_or_else(|| PathBuf::from("out")),
        gyroid_assignment: ov.gyroid_assignment.or(file.gyroid_assignment),
        seed: ov.seed.or(file.seed).unwrap_or(42),
        bonnet: ov.bonnet.or(file.bonnet),
        data: ov.data.clone().or(file.data),
        grid: ov.grid.or(file.grid).unwrap_or(64),
        refine_levels: ov.refine_levels.or(file.refine_levels).unwrap_or(3),
        which: if ov.which.is_empty() { file.which.unwrap_or_default() } else { ov.which.clone() },
        verify_samples: ov.verify_samples.or(file.verify_samples).unwrap_or(200),
        tamper_t1d: ov.tamper_t1d || file.tamper_t1d.unwrap_or(false),
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &RunConfig) -> Result<(), String> {
    if cfg.n == 0 || cfg.degree == 0 || cfg.max_iters == 0 {
        return Err("n, degree and max_iters must be positive".into());
    }
    if !(cfg.tol > 0.0) {
        return Err(format!("tol must be positive, got {}", cfg.tol));
    }
    if cfg.samples.0 < 2 || cfg.samples.1 < 2 {
        return Err(format!("samples must be at least 2 per direction, got {:?}", cfg.samples));
    }
    if cfg.grid < 2 {
        return Err(format!("grid must be at least 2, got {}", cfg.grid));
    }
    if cfg.verify_samples == 0 {
        return Err("verify_samples must be positive".into());
    }
    // the boundary stencils only exist from n = 7 up
    if matches!(cfg.command, Command::Fit | Command::Matrices) && cfg.n < 7 {
        return Err(format!("n = {} is too small: the constraint stencils need n >= 7", cfg.n));
    }
    if matches!(cfg.command, Command::Fit | Command::Sample) && cfg.surface.is_none() {
        return Err("this command needs a surface: pass --surface or set it in the config".into());
    }
    if let Some(a) = cfg.gyroid_assignment {
        for k in a {
            if !(1..=7).contains(&k) {
                return Err(format!("gyroid_assignment entries must be in 1..=7, got {k}"));
            }
        }
    }
    Ok(())
}

/// Applies `TPMS_CPIA_THREADS` to the global thread pool. Call once, first.
pub fn configure_threads() -> Result<(), String> {
    match std::env::var("TPMS_CPIA_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let k: usize = raw
                .parse()
                .map_err(|_| format!("TPMS_CPIA_THREADS must be a positive integer, got {raw:?}"))?;
            if k == 0 {
                return Err("TPMS_CPIA_THREADS must be a positive integer, got \"0\"".into());
            }
            // a second initialization (tests in-process) is harmless
            let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
            Ok(())
        }
    }
}
