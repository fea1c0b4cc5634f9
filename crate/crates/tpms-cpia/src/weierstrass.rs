//! Representation functions of the minimal surface family and their
//! derivatives.
//!
//! Everything is driven by R(tau) = sqrt(tau^8 - 14 tau^4 + 1) on its
//! principal branch and the three functions
//!
//! ```text
//! phi1 = (1 - tau^2) / R,  phi2 = i (1 + tau^2) / R,  phi3 = 2 tau / R.
//! ```
//!
//! The module exposes their real/imaginary splits, the first and second
//! derivative formulas (expanded over R^3 = s R and R^5 = s^2 R so every
//! power shares one branch choice), the area form A1 of the p/q frame, the
//! signed unit normal, and the second derivatives of the normal components,
//! which are what offset-surface analysis needs. Derivatives are taken along
//! the real-tau direction; the functions are holomorphic, so the direction
//! only matters when comparing against finite differences.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default branch-proximity guard: |tau^8 - 14 tau^4 + 1| must exceed this.
pub const BRANCH_EPS: f64 = 1e-8;

/// Radius of the branch point nearest the origin: (2 - sqrt(3))^(1/2).
pub fn branch_radius() -> f64 {
    (2.0 - 3.0_f64.sqrt()).sqrt()
}

/// Conservative working radius, strictly inside the branch radius (~0.5176),
/// where R stays well conditioned.
pub const SAFE_RADIUS: f64 = 0.45;

/// tau^8 - 14 tau^4 + 1, the radicand under R.
pub fn radicand(tau: Complex64) -> Complex64 {
    let t4 = tau.powu(4);
    t4 * t4 - 14.0 * t4 + Complex64::new(1.0, 0.0)
}

/// A validated complex surface parameter, kept away from branch points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexParam {
    tau: Complex64,
}

impl ComplexParam {
    pub fn new(tau: Complex64) -> Result<Self> {
        Self::with_eps(tau, BRANCH_EPS)
    }

    pub fn with_eps(tau: Complex64, eps: f64) -> Result<Self> {
        if radicand(tau).norm() <= eps {
            return Err(Error::BranchPoint { tau, eps });
        }
        Ok(ComplexParam { tau })
    }

    pub fn tau(&self) -> Complex64 {
        self.tau
    }
}

/// Real and imaginary parts of (phi1, phi2, phi3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PQSplit {
    pub p: [f64; 3],
    pub q: [f64; 3],
}

/// Everything the offset second-derivative formulas consume at one tau.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBundle {
    pub p: [f64; 3],
    pub q: [f64; 3],
    pub p1: [f64; 3],
    pub q1: [f64; 3],
    pub p2: [f64; 3],
    pub q2: [f64; 3],
    pub a1: f64,
    pub normal: [f64; 3],
    pub d2: [f64; 3],
}

/// The three representation functions at tau.
pub fn phi(tau: &ComplexParam) -> (Complex64, Complex64, Complex64) {
    let t = tau.tau();
    let r = radicand(t).sqrt();
    let t2 = t * t;
    (
        (Complex64::new(1.0, 0.0) - t2) / r,
        Complex64::new(0.0, 1.0) * (Complex64::new(1.0, 0.0) + t2) / r,
        2.0 * t / r,
    )
}

/// Splits a phi triple into real parts p and imaginary parts q.
pub fn split(values: (Complex64, Complex64, Complex64)) -> PQSplit {
    PQSplit {
        p: [values.0.re, values.1.re, values.2.re],
        q: [values.0.im, values.1.im, values.2.im],
    }
}

fn dphi(t: Complex64) -> (Complex64, Complex64, Complex64) {
    let s = radicand(t);
    let sp = 8.0 * t.powu(7) - 56.0 * t.powu(3);
    let r = s.sqrt();
    let r3 = s * r; // R^3 on the same branch as R
    let t2 = t * t;
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let f1 = -(one - t2) * sp / (2.0 * r3) - 2.0 * t / r;
    let f2 = 2.0 * i * t / r - i * (t2 + one) * sp / (2.0 * r3);
    let f3 = 2.0 / r - t * sp / r3;
    (f1, f2, f3)
}

fn ddphi(t: Complex64) -> (Complex64, Complex64, Complex64) {
    let s = radicand(t);
    let sp = 8.0 * t.powu(7) - 56.0 * t.powu(3);
    let spp = 56.0 * t.powu(6) - 168.0 * t * t;
    let r = s.sqrt();
    let r3 = s * r;
    let r5 = s * s * r; // R^5, branch tied to R
    let t2 = t * t;
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    let inner = 3.0 * sp * sp / (4.0 * r5) - spp / (2.0 * r3);
    let f1 = -2.0 / r + 2.0 * t * sp / r3 + (one - t2) * inner;
    let f2 = 2.0 * i / r - 2.0 * i * t * sp / r3 + i * (t2 + one) * inner;
    let f3 = 2.0 * t * inner - 2.0 * sp / r3;
    (f1, f2, f3)
}

/// Real/imaginary parts of the first derivatives of phi1..phi3.
pub fn phi_first_derivatives(tau: &ComplexParam) -> ([f64; 3], [f64; 3]) {
    let (f1, f2, f3) = dphi(tau.tau());
    ([f1.re, f2.re, f3.re], [f1.im, f2.im, f3.im])
}

/// Real/imaginary parts of the second derivatives of phi1..phi3.
pub fn phi_second_derivatives(tau: &ComplexParam) -> ([f64; 3], [f64; 3]) {
    let (f1, f2, f3) = ddphi(tau.tau());
    ([f1.re, f2.re, f3.re], [f1.im, f2.im, f3.im])
}

/// Area form of the p/q frame: the sum of squared 2x2 minors.
/// Equals |p x q|^2.
pub fn a1(pq: &PQSplit) -> f64 {
    let (p, q) = (&pq.p, &pq.q);
    let c12 = p[1] * q[0] - p[0] * q[1];
    let c13 = p[2] * q[0] - p[0] * q[2];
    let c23 = p[2] * q[1] - p[1] * q[2];
    c12 * c12 + c13 * c13 + c23 * c23
}

/// Signed unit normal (c23, -c13, c12) / sqrt(A1), where c_jk are the minors
/// p_k q_j - p_j q_k. The sign convention makes the offset second-derivative
/// formulas literal second derivatives of these components.
pub fn unit_normal(pq: &PQSplit) -> Result<[f64; 3]> {
    let (p, q) = (&pq.p, &pq.q);
    let c12 = p[1] * q[0] - p[0] * q[1];
    let c13 = p[2] * q[0] - p[0] * q[2];
    let c23 = p[2] * q[1] - p[1] * q[2];
    let a = c12 * c12 + c13 * c13 + c23 * c23;
    if a <= BRANCH_EPS {
        return Err(Error::DegenerateFrame { a1: a });
    }
    let s = a.sqrt();
    Ok([c23 / s, -c13 / s, c12 / s])
}

/// Second derivatives of the signed unit normal components, assembled from
/// the frame and its first two derivatives. Inputs are the p/q splits of phi
/// and of its first and second derivatives.
pub fn offset_second_derivatives(
    p: &[f64; 3],
    q: &[f64; 3],
    p1: &[f64; 3],
    q1: &[f64; 3],
    p2: &[f64; 3],
    q2: &[f64; 3],
) -> Result<[f64; 3]> {
    let c12 = p[1] * q[0] - p[0] * q[1];
    let c13 = p[2] * q[0] - p[0] * q[2];
    let c23 = p[2] * q[1] - p[1] * q[2];
    let a = c12 * c12 + c13 * c13 + c23 * c23;
    if a <= BRANCH_EPS {
        return Err(Error::DegenerateFrame { a1: a });
    }
    // first derivatives of the minors
    let d12 = q[0] * p1[1] + p[1] * q1[0] - q[1] * p1[0] - p[0] * q1[1];
    let d13 = q[0] * p1[2] + p[2] * q1[0] - q[2] * p1[0] - p[0] * q1[2];
    let d23 = q[1] * p1[2] + p[2] * q1[1] - q[2] * p1[1] - p[1] * q1[2];
    // second derivatives of the minors
    let dd12 = 2.0 * p1[1] * q1[0] - 2.0 * p1[0] * q1[1] - q[1] * p2[0] + q[0] * p2[1]
        + p[1] * q2[0]
        - p[0] * q2[1];
    let dd13 = 2.0 * p1[2] * q1[0] - 2.0 * p1[0] * q1[2] - q[2] * p2[0] + q[0] * p2[2]
        + p[2] * q2[0]
        - p[0] * q2[2];
    let dd23 = 2.0 * p1[2] * q1[1] - 2.0 * p1[1] * q1[2] - q[2] * p2[1] + q[1] * p2[2]
        + p[2] * q2[1]
        - p[1] * q2[2];
    let g = c12 * d12 + c13 * d13 + c23 * d23; // = A1' / 2
    let sq = d12 * d12 + d13 * d13 + d23 * d23;
    let den = 4.0 * a.powf(2.5);
    let xpp = (8.0 * a * (-d23) * g + 4.0 * a * a * dd23 + 12.0 * c23 * g * g
        - 4.0 * a * c23 * sq
        - 4.0 * a * c23 * (c12 * dd12 + c13 * dd13)
        - 4.0 * a * c23 * c23 * dd23)
        / den;
    let ypp = (-8.0 * a * (-d13) * g - 4.0 * a * a * dd13 - 12.0 * c13 * g * g
        + 4.0 * a * c13 * sq
        + 4.0 * a * c13 * (c12 * dd12 + c13 * dd13)
        + 4.0 * a * c13 * c23 * dd23)
        / den;
    let zpp = (8.0 * a * (-d12) * g + 4.0 * a * a * dd12 + 12.0 * c12 * g * g
        - 4.0 * a * c12 * sq
        - 4.0 * a * c12 * (c12 * dd12 + c13 * dd13)
        - 4.0 * a * c12 * c23 * dd23)
        / den;
    Ok([xpp, ypp, zpp])
}

/// Assembles the full bundle at one tau: frame, derivatives, area form,
/// normal, and normal second derivatives.
pub fn bundle(tau: &ComplexParam) -> Result<DerivativeBundle> {
    let pq = split(phi(tau));
    let (p1, q1) = phi_first_derivatives(tau);
    let (p2, q2) = phi_second_derivatives(tau);
    let a = a1(&pq);
    let normal = unit_normal(&pq)?;
    let d2 = offset_second_derivatives(&pq.p, &pq.q, &p1, &q1, &p2, &q2)?;
    Ok(DerivativeBundle { p: pq.p, q: pq.q, p1, q1, p2, q2, a1: a, normal, d2 })
}

/// Axis label for the component attaining a maximum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// Axis-aligned rectangle in the complex tau plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Domain {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        if !(re_min < re_max && im_min < im_max) {
            return Err(Error::InvalidDimensions {
                what: format!("degenerate domain [{re_min}, {re_max}] x [{im_min}, {im_max}]"),
            });
        }
        Ok(Domain { re_min, re_max, im_min, im_max })
    }

    /// Square of half-width h centered at the origin.
    pub fn square(h: f64) -> Result<Self> {
        Domain::new(-h, h, -h, h)
    }

    /// Exact at the corners: u, v = 0 or 1 return the stored bounds.
    pub fn at(&self, u: f64, v: f64) -> Complex64 {
        Complex64::new(
            (1.0 - u) * self.re_min + u * self.re_max,
            (1.0 - v) * self.im_min + v * self.im_max,
        )
    }

    fn distance_to(&self, p: Complex64) -> f64 {
        let dx = (self.re_min - p.re).max(0.0).max(p.re - self.re_max);
        let dy = (self.im_min - p.im).max(0.0).max(p.im - self.im_max);
        (dx * dx + dy * dy).sqrt()
    }

    /// True when any branch point lies inside or within margin of the
    /// rectangle. The branch points sit on the axes at radii
    /// (2 -+ sqrt(3))^(1/2).
    pub fn contains_branch_point(&self, margin: f64) -> bool {
        let r1 = branch_radius();
        let r2 = (2.0 + 3.0_f64.sqrt()).sqrt();
        for r in [r1, r2] {
            for bp in [
                Complex64::new(r, 0.0),
                Complex64::new(-r, 0.0),
                Complex64::new(0.0, r),
                Complex64::new(0.0, -r),
            ] {
                if self.distance_to(bp) <= margin {
                    return true;
                }
            }
        }
        false
    }
}

/// Default maximization domain: the origin-centered square of half-width 0.3,
/// comfortably inside the safe disk.
pub fn default_domain() -> Domain {
    Domain::square(0.3).expect("static bounds")
}

/// Result of maximizing |x''|, |y''|, |z''| over a domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxSecondDerivative {
    pub max_abs: f64,
    pub argmax_re: f64,
    pub argmax_im: f64,
    pub component: Axis,
}

// Scans one grid; returns (value, flat index, axis, tau). Ties keep the
// lowest flat index, so parallel evaluation stays deterministic.
fn scan_grid(
    domain: &Domain,
    dims: (usize, usize),
) -> Option<(f64, usize, Axis, Complex64)> {
    let (gu, gv) = dims;
    let rows: Vec<Option<(f64, usize, Axis, Complex64)>> = (0..gu)
        .into_par_iter()
        .map(|iu| {
            let mut best: Option<(f64, usize, Axis, Complex64)> = None;
            for iv in 0..gv {
                let u = iu as f64 / (gu - 1) as f64;
                let v = iv as f64 / (gv - 1) as f64;
                let t = domain.at(u, v);
                let Ok(param) = ComplexParam::new(t) else { continue };
                let Ok(b) = bundle(&param) else { continue };
                let idx = iu * gv + iv;
                for (axis, val) in
                    [(Axis::X, b.d2[0]), (Axis::Y, b.d2[1]), (Axis::Z, b.d2[2])]
                {
                    let a = val.abs();
                    if best.map_or(true, |(bv, bi, _, _)| a > bv || (a == bv && idx < bi)) {
                        best = Some((a, idx, axis, t));
                    }
                }
            }
            best
        })
        .collect();
    rows.into_iter().flatten().fold(None, |acc, cand| match acc {
        None => Some(cand),
        Some(best) => {
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                Some(cand)
            } else {
                Some(best)
            }
        }
    })
}

/// Maximizes the absolute normal second derivatives over a rectangle: a
/// coarse uniform grid pass, then refine_levels passes that re-grid a window
/// of one coarse cell around the incumbent. Deterministic; refinement can
/// only raise the result.
pub fn max_second_derivative(
    domain: &Domain,
    coarse_grid: (usize, usize),
    refine_levels: usize,
) -> Result<MaxSecondDerivative> {
    if coarse_grid.0 < 2 || coarse_grid.1 < 2 {
        return Err(Error::InvalidDimensions {
            what: format!("grid {:?} needs at least 2 points per direction", coarse_grid),
        });
    }
    if domain.contains_branch_point(BRANCH_EPS.max(1e-3)) {
        return Err(Error::DomainContainsBranchPoint { margin: BRANCH_EPS.max(1e-3) });
    }
    let mut window = *domain;
    let mut overall: Option<(f64, usize, Axis, Complex64)> = None;
    for level in 0..=refine_levels {
        if let Some(cand) = scan_grid(&window, coarse_grid) {
            let better = overall.map_or(true, |best| cand.0 > best.0);
            if better {
                overall = Some(cand);
            }
        }
        if level == refine_levels {
            break;
        }
        let Some((_, _, _, center)) = overall else { break };
        // window of +-1 current cell around the incumbent, clamped to the domain
        let cell_re = (window.re_max - window.re_min) / (coarse_grid.0 - 1) as f64;
        let cell_im = (window.im_max - window.im_min) / (coarse_grid.1 - 1) as f64;
        let re_min = (center.re - cell_re).max(domain.re_min);
        let re_max = (center.re + cell_re).min(domain.re_max);
        let im_min = (center.im - cell_im).max(domain.im_min);
        let im_max = (center.im + cell_im).min(domain.im_max);
        if re_min >= re_max || im_min >= im_max {
            break;
        }
        window = Domain { re_min, re_max, im_min, im_max };
    }
    let (max_abs, _, component, t) = overall.ok_or(Error::DomainContainsBranchPoint {
        margin: BRANCH_EPS,
    })?;
    Ok(MaxSecondDerivative { max_abs, argmax_re: t.re, argmax_im: t.im, component })
}
