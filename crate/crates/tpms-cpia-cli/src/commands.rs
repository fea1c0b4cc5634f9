//! The five subcommands. Each takes the resolved config, writes its files
//! under `output_dir`, and reports failure through [`AppError`].

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde_json::json;

use tpms_cpia::bspline::{
    greville_collocation, limit_solution, make_knots, spectral_radius,
};
use tpms_cpia::constraints::{
    alpha, beta, eigen_moduli, m_matrix, n_selector, t_matrix, HomTransform, SparseSelector,
    SurfaceKind,
};
use tpms_cpia::cpia::{project_constraint_rows, run_logged};
use tpms_cpia::sampler_io::{
    default_bonnet, diamond_second_patch, export_grid_mesh, load_grid, sample_grid_at,
    sample_patch, save_grid, DataGrid, PatchSpec,
};
use tpms_cpia::verify::{run_verification, VerifyConfig};
use tpms_cpia::weierstrass::{bundle, max_second_derivative, ComplexParam};

use crate::config::RunConfig;

#[derive(Debug)]
pub enum AppError {
    /// Bad input: exit code 2.
    Config(String),
    /// Numeric or I/O failure during a run: exit code 3.
    Runtime(String),
    /// The verification suite ran and found failures: exit code 1.
    VerifyFailed,
}

impl From<tpms_cpia::Error> for AppError {
    fn from(e: tpms_cpia::Error) -> Self {
        AppError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Runtime(e.to_string())
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), AppError> {
    fs::write(path, text).map_err(|e| AppError::Runtime(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------- matrices

enum AnyMatrix {
    Sparse(SparseSelector),
    Transform(HomTransform),
}

/// Parses one dump request: `m:i:j`, `alpha:i`, `beta:i`, `n:k`, or
/// `t:<surface>:k`.
fn parse_which(spec: &str, n: usize) -> Result<(String, AnyMatrix), AppError> {
    let bad = |msg: String| AppError::Config(msg);
    let parts: Vec<&str> = spec.split(':').collect();
    let idx = |s: &str| -> Result<usize, AppError> {
        s.parse::<usize>().map_err(|_| bad(format!("bad index {s:?} in {spec:?}")))
    };
    let built = match parts.as_slice() {
        ["m", i, j] => AnyMatrix::Sparse(m_matrix(idx(i)?, idx(j)?, n)?),
        ["alpha", i] => AnyMatrix::Sparse(alpha(idx(i)?, n)?),
        ["beta", i] => AnyMatrix::Sparse(beta(idx(i)?, n)?),
        ["n", k] => AnyMatrix::Sparse(n_selector(idx(k)?, n)?),
        ["t", surf, k] => {
            let surface: SurfaceKind = surf.parse().map_err(bad)?;
            AnyMatrix::Transform(t_matrix(surface, idx(k)?)?)
        }
        _ => {
            return Err(bad(format!(
                "bad matrix spec {spec:?}: expected m:i:j, alpha:i, beta:i, n:k or t:surface:k"
            )))
        }
    };
    let name = spec.to_ascii_lowercase().replace(':', "_");
    Ok((name, built))
}

fn coordinate_csv_sparse(m: &SparseSelector) -> String {
    let mut out = String::from("row,col,value\n");
    for (r, c, v) in m.entries_one_based() {
        writeln!(out, "{r},{c},{v}").expect("string write");
    }
    out
}

fn coordinate_csv_dense(m: &DMatrix<f64>) -> String {
    let mut out = String::from("row,col,value\n");
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if m[(r, c)] != 0.0 {
                writeln!(out, "{},{},{}", r + 1, c + 1, m[(r, c)]).expect("string write");
            }
        }
    }
    out
}

// Spectrum of a sparse stencil. Every stencil and combination here is
// triangular in the natural index order, so the eigenvalues are just the
// diagonal entries; everything off the diagonal contributes zeros. A QR
// fallback on the compressed support block covers non-triangular input,
// with an iteration cap because exactly nilpotent blocks can stall it.
fn sparse_eigen_moduli(s: &SparseSelector) -> Result<Vec<f64>, AppError> {
    let (rows, _) = s.dims();
    let lower = s.entries().iter().all(|&(r, c, _)| r >= c);
    let upper = s.entries().iter().all(|&(r, c, _)| r <= c);
    if lower || upper {
        let mut moduli = vec![0.0; rows];
        for &(r, c, v) in s.entries() {
            if r == c {
                moduli[r] = v.abs();
            }
        }
        return Ok(moduli);
    }
    let mut support: Vec<usize> = s.entries().iter().flat_map(|&(r, c, _)| [r, c]).collect();
    support.sort_unstable();
    support.dedup();
    let k = support.len();
    let pos = |i: usize| support.binary_search(&i).expect("entry index in support");
    let mut block = DMatrix::zeros(k, k);
    for &(r, c, v) in s.entries() {
        block[(pos(r), pos(c))] = v;
    }
    let schur = block
        .try_schur(1e-12, 10_000)
        .ok_or_else(|| AppError::Runtime("eigenvalue iteration stalled".into()))?;
    let mut moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|l| l.norm()).collect();
    moduli.resize(rows, 0.0);
    Ok(moduli)
}

fn eigen_summary(moduli: &[f64]) -> serde_json::Value {
    let unit = moduli.iter().filter(|m| (*m - 1.0).abs() < 1e-9).count();
    let zero = moduli.iter().filter(|m| **m < 1e-9).count();
    let max = moduli.iter().cloned().fold(0.0, f64::max);
    let min = moduli.iter().cloned().fold(f64::INFINITY, f64::min);
    json!({
        "max_modulus": max,
        "min_modulus": min,
        "unit_count": unit,
        "zero_count": zero,
    })
}

pub fn cmd_matrices(cfg: &RunConfig) -> Result<(), AppError> {
    if cfg.which.is_empty() {
        return Err(AppError::Config(
            "matrices: nothing requested; pass --which, e.g. --which m:1:2".into(),
        ));
    }
    let mut report = Vec::new();
    for spec in &cfg.which {
        let (name, matrix) = parse_which(spec, cfg.n)?;
        let path = cfg.output_dir.join(format!("{name}.csv"));
        let entry = match matrix {
            AnyMatrix::Sparse(s) => {
                write_file(&path, &coordinate_csv_sparse(&s))?;
                let moduli = sparse_eigen_moduli(&s)?;
                json!({
                    "name": name,
                    "rows": s.dims().0,
                    "cols": s.dims().1,
                    "nnz": s.nnz(),
                    "rank": s.rank(),
                    "eigen": eigen_summary(&moduli),
                })
            }
            AnyMatrix::Transform(t) => {
                let dense = DMatrix::from_fn(4, 4, |r, c| t.matrix()[(r, c)]);
                write_file(&path, &coordinate_csv_dense(&dense))?;
                let moduli = eigen_moduli(&t);
                json!({
                    "name": name,
                    "rows": 4,
                    "cols": 4,
                    "nnz": dense.iter().filter(|v| **v != 0.0).count(),
                    "rank": dense.svd(false, false).rank(1e-12),
                    "eigen": eigen_summary(&moduli),
                })
            }
        };
        report.push(entry);
    }
    let text = serde_json::to_string_pretty(&serde_json::Value::Array(report))
        .expect("report serializes");
    write_file(&cfg.output_dir.join("matrices.json"), &text)?;
    Ok(())
}

// --------------------------------------------------------------------- fit

/// Builds the collocation system and the target grid for a fit, stacking
/// the transformed second patch for the two-patch family. Data is made
/// boundary-consistent before fitting: the plain collocation solve is
/// projected onto the constraint relations and mapped back through the
/// system, so the iteration's limit satisfies the same relations it
/// enforces.
fn fit_inputs(
    cfg: &RunConfig,
    surface: SurfaceKind,
) -> Result<(tpms_cpia::bspline::CollocationSystem, DMatrix<f64>), AppError> {
    let n = cfg.n;
    let sys = greville_collocation(n, cfg.degree)?;
    let first: DataGrid = match &cfg.data {
        Some(path) => {
            let grid = load_grid(path)?;
            if grid.dims() != (n, n) {
                return Err(AppError::Config(format!(
                    "data grid {} is {:?}, the fit needs {}x{} samples at the collocation sites",
                    path.display(),
                    grid.dims(),
                    n,
                    n
                )));
            }
            grid
        }
        None => {
            let sites = make_knots(n, cfg.degree)?.greville();
            let angle = cfg.bonnet.unwrap_or_else(|| default_bonnet(surface));
            sample_grid_at(&cfg.domain, angle, &sites, &sites)?
        }
    };
    let (sys, q_raw) = if surface == SurfaceKind::Diamond {
        let second = diamond_second_patch(&first)?;
        let nn = n * n;
        let mut q = DMatrix::zeros(2 * nn, 4);
        q.view_mut((0, 0), (nn, 4)).copy_from(&first.to_matrix());
        q.view_mut((nn, 0), (nn, 4)).copy_from(&second.to_matrix());
        (sys.block_double(), q)
    } else {
        (sys, first.to_matrix())
    };
    let limit = limit_solution(&sys, &q_raw)?;
    let projected = project_constraint_rows(surface, &limit, n, cfg.gyroid_assignment)?;
    let q = sys.apply_bw(projected.matrix())?;
    Ok((sys, q))
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(), AppError> {
    let surface = cfg.surface.expect("validated");
    let (sys, q) = fit_inputs(cfg, surface)?;
    let (result, log) =
        run_logged(surface, &sys, &q, cfg.tol, cfg.max_iters, cfg.gyroid_assignment)?;

    let mut net = String::from("index,x,y,z\n");
    for r in 0..result.final_net.len() {
        let p = result.final_net.row_xyz(r);
        writeln!(net, "{},{:.16e},{:.16e},{:.16e}", r + 1, p[0], p[1], p[2])
            .expect("string write");
    }
    write_file(&cfg.output_dir.join("net.csv"), &net)?;

    let mut log_csv = String::from("k,step_norm,limit_gap\n");
    for (k, (s, g)) in log.step_norms.iter().zip(log.limit_gaps.iter()).enumerate() {
        writeln!(log_csv, "{},{:.16e},{:.16e}", k + 1, s, g).expect("string write");
    }
    write_file(&cfg.output_dir.join("log.csv"), &log_csv)?;

    let d = DMatrix::identity(sys.size(), sys.size()) - sys.bw_dense();
    let rho = spectral_radius(&d, 1e-10)?;
    let summary = json!({
        "converged": result.converged,
        "iterations": result.iterations,
        "contraction_estimate": result.contraction_estimate,
        "spectral_radius": rho,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&cfg.output_dir.join("summary.json"), &text)?;
    println!(
        "fit {}: converged={} iterations={} contraction={:.6} rho={:.6}",
        surface, result.converged, result.iterations, result.contraction_estimate, rho
    );
    Ok(())
}

// ------------------------------------------------------------- derivatives

pub fn cmd_derivatives(cfg: &RunConfig) -> Result<(), AppError> {
    let (su, sv) = cfg.samples;
    let mut csv = String::from(
        "re_tau,im_tau,p1,p2,p3,q1,q2,q3,dp1,dp2,dp3,dq1,dq2,dq3,\
         ddp1,ddp2,ddp3,ddq1,ddq2,ddq3,a1,nx,ny,nz,xpp,ypp,zpp\n",
    );
    for i in 0..=su {
        for j in 0..=sv {
            let u = i as f64 / su as f64;
            let v = j as f64 / sv as f64;
            let tau = cfg.domain.at(u, v);
            let b = bundle(&ComplexParam::new(tau)?)?;
            write!(csv, "{:.16e},{:.16e}", tau.re, tau.im).expect("string write");
            for block in [b.p, b.q, b.p1, b.q1, b.p2, b.q2] {
                for x in block {
                    write!(csv, ",{x:.16e}").expect("string write");
                }
            }
            write!(csv, ",{:.16e}", b.a1).expect("string write");
            for x in b.normal.iter().chain(b.d2.iter()) {
                write!(csv, ",{x:.16e}").expect("string write");
            }
            csv.push('\n');
        }
    }
    write_file(&cfg.output_dir.join("derivatives.csv"), &csv)?;

    let m = max_second_derivative(&cfg.domain, (cfg.grid, cfg.grid), cfg.refine_levels)?;
    let summary = json!({
        "max_abs": m.max_abs,
        "argmax_re": m.argmax_re,
        "argmax_im": m.argmax_im,
        "component": m.component.to_string(),
        "grid": [cfg.grid, cfg.grid],
        "refine_levels": cfg.refine_levels,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&cfg.output_dir.join("max.json"), &text)?;
    println!(
        "max |second derivative| = {:.12} at ({:.6}, {:.6}) component {}",
        m.max_abs, m.argmax_re, m.argmax_im, m.component
    );
    Ok(())
}

// ------------------------------------------------------------------ sample

pub fn cmd_sample(cfg: &RunConfig) -> Result<(), AppError> {
    let surface = cfg.surface.expect("validated");
    let spec = PatchSpec {
        surface,
        domain: cfg.domain,
        bonnet_angle: cfg.bonnet.unwrap_or_else(|| default_bonnet(surface)),
        samples: cfg.samples,
    };
    let grid = sample_patch(&spec)?;
    save_grid(&grid, &cfg.output_dir.join("grid.csv"))?;
    export_grid_mesh(&grid, &cfg.output_dir.join("mesh.obj"))?;
    let (rows, cols) = grid.dims();
    println!("sampled {surface}: {rows}x{cols} points");
    Ok(())
}

// ------------------------------------------------------------------ verify

pub fn cmd_verify(cfg: &RunConfig) -> Result<(), AppError> {
    let report = run_verification(&VerifyConfig {
        seed: cfg.seed,
        samples: cfg.verify_samples,
        tamper_t1d: cfg.tamper_t1d,
    });
    let text = report.to_json();
    write_file(&cfg.output_dir.join("report.json"), &text)?;
    println!("{text}");
    if report.all_pass {
        Ok(())
    } else {
        Err(AppError::VerifyFailed)
    }
}

pub fn run(cfg: &RunConfig) -> Result<(), AppError> {
    fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| AppError::Config(format!("output_dir {}: {e}", cfg.output_dir.display())))?;
    match cfg.command {
        crate::config::Command::Matrices => cmd_matrices(cfg),
        crate::config::Command::Fit => cmd_fit(cfg),
        crate::config::Command::Derivatives => cmd_derivatives(cfg),
        crate::config::Command::Sample => cmd_sample(cfg),
        crate::config::Command::Verify => cmd_verify(cfg),
    }
}
