//! Tensor-product B-spline collocation: clamped knot vectors, basis and
//! collocation matrices, direct limit solves, surface evaluation, and a
//! power-iteration spectral radius estimate.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Clamped knot vector on [0, 1] with uniformly spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

/// Builds the clamped uniform knot vector carrying n basis functions of the
/// given degree: degree + 1 zeros, interior knots i / (n - degree), then
/// degree + 1 ones.
pub fn make_knots(n: usize, degree: usize) -> Result<KnotVector> {
    if degree < 1 || n <= degree {
        return Err(Error::InvalidDimensions {
            what: format!("need n > degree >= 1, got n = {n}, degree = {degree}"),
        });
    }
    let p = degree;
    let mut knots = vec![0.0; p + 1];
    for i in 1..(n - p) {
        knots.push(i as f64 / (n - p) as f64);
    }
    knots.extend(std::iter::repeat(1.0).take(p + 1));
    Ok(KnotVector { degree, knots })
}

impl KnotVector {
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of basis functions this knot vector carries.
    pub fn basis_count(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    /// Greville abscissae: averages of degree consecutive interior knots.
    pub fn greville(&self) -> Vec<f64> {
        let p = self.degree;
        let n = self.basis_count();
        (0..n)
            .map(|i| self.knots[i + 1..i + p + 1].iter().sum::<f64>() / p as f64)
            .collect()
    }

    /// Index of the knot span containing u.
    pub fn find_span(&self, u: f64) -> usize {
        let n = self.basis_count();
        let p = self.degree;
        if u >= self.knots[n] {
            return n - 1;
        }
        let (mut lo, mut hi) = (p, n);
        loop {
            let mid = (lo + hi) / 2;
            if u < self.knots[mid] {
                hi = mid;
            } else if u >= self.knots[mid + 1] {
                lo = mid;
            } else {
                return mid;
            }
        }
    }

    /// The degree + 1 nonzero basis values at u, for the span returned by
    /// find_span. Cox-de Boor recurrence in its numerically stable form.
    pub fn basis_funs(&self, span: usize, u: f64) -> Vec<f64> {
        let p = self.degree;
        let mut vals = vec![0.0; p + 1];
        vals[0] = 1.0;
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        for j in 1..=p {
            left[j] = u - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                let tmp = vals[r] / (right[r + 1] + left[j - r]);
                vals[r] = saved + right[r + 1] * tmp;
                saved = left[j - r] * tmp;
            }
            vals[j] = saved;
        }
        vals
    }

    /// Dense row of all n basis values at u.
    pub fn basis_row(&self, u: f64) -> Vec<f64> {
        let n = self.basis_count();
        let span = self.find_span(u);
        let vals = self.basis_funs(span, u);
        let mut row = vec![0.0; n];
        row[span - self.degree..=span].copy_from_slice(&vals);
        row
    }
}

/// Square collocation system: basis matrix B at the parameter sites, diagonal
/// weights w, and the sites themselves.
#[derive(Debug, Clone)]
pub struct CollocationSystem {
    b: DMatrix<f64>,
    weights: Vec<f64>,
    params: Vec<(f64, f64)>,
    knots_u: KnotVector,
    knots_v: KnotVector,
}

/// Builds the tensor-product collocation matrix at the given (u, v) sites:
/// B[k, r * nv + c] = Nu_r(u_k) * Nv_c(v_k), 0-based. The system must be
/// square (#params = #basis functions); weights start uniform.
pub fn basis_matrix(
    knots_u: &KnotVector,
    knots_v: &KnotVector,
    params: &[(f64, f64)],
) -> Result<CollocationSystem> {
    let nu = knots_u.basis_count();
    let nv = knots_v.basis_count();
    let nn = nu * nv;
    if params.len() != nn {
        return Err(Error::NonSquareSystem { params: params.len(), basis: nn });
    }
    let mut b = DMatrix::zeros(nn, nn);
    for (k, &(u, v)) in params.iter().enumerate() {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return Err(Error::ParamOutOfRange {
                what: format!("site {k} = ({u}, {v}) outside [0, 1]^2"),
            });
        }
        let ru = knots_u.basis_row(u);
        let rv = knots_v.basis_row(v);
        for r in 0..nu {
            if ru[r] == 0.0 {
                continue;
            }
            for c in 0..nv {
                let val = ru[r] * rv[c];
                if val != 0.0 {
                    b[(k, r * nv + c)] = val;
                }
            }
        }
    }
    Ok(CollocationSystem {
        b,
        weights: vec![1.0; nn],
        params: params.to_vec(),
        knots_u: knots_u.clone(),
        knots_v: knots_v.clone(),
    })
}

/// Collocation at the tensor grid of Greville abscissae, the standard square
/// and provably invertible choice.
pub fn greville_collocation(n: usize, degree: usize) -> Result<CollocationSystem> {
    let ku = make_knots(n, degree)?;
    let kv = make_knots(n, degree)?;
    let gu = ku.greville();
    let gv = kv.greville();
    let params: Vec<(f64, f64)> =
        gu.iter().flat_map(|&u| gv.iter().map(move |&v| (u, v))).collect();
    basis_matrix(&ku, &kv, &params)
}

impl CollocationSystem {
    /// Side length of the square system.
    pub fn size(&self) -> usize {
        self.b.nrows()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn params(&self) -> &[(f64, f64)] {
        &self.params
    }

    pub fn knots_u(&self) -> &KnotVector {
        &self.knots_u
    }

    pub fn knots_v(&self) -> &KnotVector {
        &self.knots_v
    }

    /// Replaces the diagonal weights; all must be strictly positive.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.size() {
            return Err(Error::DimensionMismatch {
                what: format!("{} weights for size {}", weights.len(), self.size()),
            });
        }
        if weights.iter().any(|&w| w <= 0.0 || !w.is_finite()) {
            return Err(Error::ParamOutOfRange {
                what: "weights must be strictly positive and finite".into(),
            });
        }
        self.weights = weights;
        Ok(self)
    }

    /// Dense product B * diag(w).
    pub fn bw_dense(&self) -> DMatrix<f64> {
        let mut m = self.b.clone();
        for c in 0..m.ncols() {
            let w = self.weights[c];
            if w != 1.0 {
                for r in 0..m.nrows() {
                    m[(r, c)] *= w;
                }
            }
        }
        m
    }

    /// Applies B * diag(w) to row-stacked data.
    pub fn apply_bw(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if p.nrows() != self.size() {
            return Err(Error::DimensionMismatch {
                what: format!("system size {} vs data rows {}", self.size(), p.nrows()),
            });
        }
        let uniform = self.weights.iter().all(|&w| w == 1.0);
        if uniform {
            return Ok(&self.b * p);
        }
        let mut scaled = p.clone();
        for r in 0..scaled.nrows() {
            let w = self.weights[r];
            for c in 0..scaled.ncols() {
                scaled[(r, c)] *= w;
            }
        }
        Ok(&self.b * scaled)
    }

    /// Doubles the system block-diagonally for a stacked two-patch net.
    pub fn block_double(&self) -> CollocationSystem {
        let nn = self.size();
        let mut b = DMatrix::zeros(2 * nn, 2 * nn);
        b.view_mut((0, 0), (nn, nn)).copy_from(&self.b);
        b.view_mut((nn, nn), (nn, nn)).copy_from(&self.b);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&self.weights);
        let mut params = self.params.clone();
        params.extend_from_slice(&self.params);
        CollocationSystem {
            b,
            weights,
            params,
            knots_u: self.knots_u.clone(),
            knots_v: self.knots_v.clone(),
        }
    }
}

/// Row-stacked homogeneous control points: N rows of [x, y, z, 1]. A Diamond
/// net stacks two patches, so N is n^2 or 2 n^2.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlNet {
    points: DMatrix<f64>,
}

impl ControlNet {
    /// Wraps an N x 4 matrix; the fourth column must be 1 up to roundoff.
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        if points.ncols() != 4 {
            return Err(Error::InvalidDimensions {
                what: format!("control net needs 4 columns, got {}", points.ncols()),
            });
        }
        for r in 0..points.nrows() {
            if (points[(r, 3)] - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidDimensions {
                    what: format!("homogeneous column drifted at row {r}: {}", points[(r, 3)]),
                });
            }
        }
        Ok(ControlNet { points })
    }

    /// Builds from xyz rows, appending the homogeneous 1.
    pub fn from_xyz(rows: &[[f64; 3]]) -> Self {
        let mut m = DMatrix::zeros(rows.len(), 4);
        for (i, p) in rows.iter().enumerate() {
            m[(i, 0)] = p[0];
            m[(i, 1)] = p[1];
            m[(i, 2)] = p[2];
            m[(i, 3)] = 1.0;
        }
        ControlNet { points: m }
    }

    pub fn stack(top: &ControlNet, bottom: &ControlNet) -> ControlNet {
        let (a, b) = (&top.points, &bottom.points);
        let mut m = DMatrix::zeros(a.nrows() + b.nrows(), 4);
        m.view_mut((0, 0), (a.nrows(), 4)).copy_from(a);
        m.view_mut((a.nrows(), 0), (b.nrows(), 4)).copy_from(b);
        ControlNet { points: m }
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.points
    }

    pub fn row_xyz(&self, r: usize) -> [f64; 3] {
        [self.points[(r, 0)], self.points[(r, 1)], self.points[(r, 2)]]
    }

    pub fn set_row_xyz(&mut self, r: usize, p: [f64; 3]) {
        self.points[(r, 0)] = p[0];
        self.points[(r, 1)] = p[1];
        self.points[(r, 2)] = p[2];
        self.points[(r, 3)] = 1.0;
    }

    /// Largest absolute deviation of the homogeneous column from 1.
    pub fn homogeneous_drift(&self) -> f64 {
        (0..self.len())
            .map(|r| (self.points[(r, 3)] - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Max-norm (largest absolute entry) of a dense matrix.
pub fn max_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, &v| acc.max(v.abs()))
}

/// Solves (B w) P = Q directly. This is the stationary point the iteration
/// converges to, so its residual is checked tightly before returning.
pub fn limit_solution(sys: &CollocationSystem, q: &DMatrix<f64>) -> Result<ControlNet> {
    if q.nrows() != sys.size() {
        return Err(Error::DimensionMismatch {
            what: format!("system size {} vs data rows {}", sys.size(), q.nrows()),
        });
    }
    let bw = sys.bw_dense();
    let lu = bw.clone().lu();
    let p = lu.solve(q).ok_or(Error::SingularSystem)?;
    let residual = max_norm(&(&bw * &p - q));
    if residual > 1e-10 * max_norm(q).max(1.0) {
        return Err(Error::SingularSystem);
    }
    ControlNet::new(p)
}

/// Evaluates a single-patch tensor-product surface at (u, v).
pub fn surface_eval(
    net: &ControlNet,
    u: f64,
    v: f64,
    knots_u: &KnotVector,
    knots_v: &KnotVector,
) -> Result<[f64; 3]> {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return Err(Error::ParamOutOfRange { what: format!("(u, v) = ({u}, {v})") });
    }
    let nu = knots_u.basis_count();
    let nv = knots_v.basis_count();
    if net.len() != nu * nv {
        return Err(Error::DimensionMismatch {
            what: format!("net has {} rows, basis grid is {nu} x {nv}", net.len()),
        });
    }
    let su = knots_u.find_span(u);
    let sv = knots_v.find_span(v);
    let bu = knots_u.basis_funs(su, u);
    let bv = knots_v.basis_funs(sv, v);
    let (pu, pv) = (knots_u.degree(), knots_v.degree());
    let mut out = [0.0; 3];
    for (a, &wu) in bu.iter().enumerate() {
        let r = su - pu + a;
        for (b, &wv) in bv.iter().enumerate() {
            let c = sv - pv + b;
            let p = net.row_xyz(r * nv + c);
            let w = wu * wv;
            out[0] += w * p[0];
            out[1] += w * p[1];
            out[2] += w * p[2];
        }
    }
    Ok(out)
}

/// Spectral radius by power iteration with seeded random restarts.
///
/// The estimate for one start vector is the geometric mean of the step growth
/// over a trailing window, which also settles for complex dominant pairs
/// where the raw step ratio oscillates. Restarts guard against a start vector
/// that is deficient in the dominant eigenspace.
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what: format!("spectral radius of {} x {} matrix", m.nrows(), m.ncols()),
        });
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let tol = if tol > 0.0 { tol } else { 1e-10 };
    let n = m.nrows();
    let restarts = 4usize;
    let max_steps = 100_000usize;
    let window = 32usize;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7355_70ec);
    let mut best: Option<f64> = None;
    let mut settled_any = false;
    for _ in 0..restarts {
        let mut v = nalgebra::DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let mut norm = v.norm();
        if norm == 0.0 {
            continue;
        }
        v /= norm;
        let mut log_ratios: Vec<f64> = Vec::with_capacity(max_steps.min(4096));
        let mut prev_est = f64::NAN;
        let mut settled = false;
        for step in 0..max_steps {
            let av = m * &v;
            norm = av.norm();
            if norm == 0.0 {
                // v was annihilated; spectral radius along this start is 0
                prev_est = 0.0;
                settled = true;
                break;
            }
            log_ratios.push(norm.ln());
            v = av / norm;
            if step >= window && step % 8 == 0 {
                let tail = &log_ratios[log_ratios.len() - window..];
                let est = (tail.iter().sum::<f64>() / window as f64).exp();
                if prev_est.is_finite() && (est - prev_est).abs() <= tol * est.max(1.0) {
                    prev_est = est;
                    settled = true;
                    break;
                }
                prev_est = est;
            }
        }
        if settled {
            settled_any = true;
            best = Some(best.map_or(prev_est, |b: f64| b.max(prev_est)));
        }
    }
    match (settled_any, best) {
        (true, Some(b)) => Ok(b),
        _ => Err(Error::NoConvergence { restarts }),
    }
}
