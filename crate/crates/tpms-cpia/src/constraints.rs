//! Sparse index stencils, homogeneous symmetry transforms, and block
//! selectors that encode the boundary relations between control points of a
//! fitted patch.
//!
//! All builders accept 1-based indices, matching the usual control-point
//! numbering over an n x n net: index = (row - 1) * n + column. Entries are
//! stored 0-based internally.

use nalgebra::{DMatrix, Matrix4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which surface family a transform set or constraint assembly belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceKind {
    Gyroid,
    Diamond,
    SchwarzP,
}

impl SurfaceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SurfaceKind::Gyroid => "Gyroid",
            SurfaceKind::Diamond => "Diamond",
            SurfaceKind::SchwarzP => "SchwarzP",
        }
    }
}

impl std::str::FromStr for SurfaceKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "gyroid" | "g" => Ok(SurfaceKind::Gyroid),
            "diamond" | "d" => Ok(SurfaceKind::Diamond),
            "schwarzp" | "schwarz_p" | "p" => Ok(SurfaceKind::SchwarzP),
            other => Err(format!("unknown surface {other:?}")),
        }
    }
}

impl std::fmt::Display for SurfaceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Sparse matrix with a handful of nonzeros, used for index stencils and
/// selectors. Entries are kept sorted by (row, col); at most one entry per
/// (row, col) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSelector {
    rows: usize,
    cols: usize,
    // (row, col, value), 0-based, sorted, deduplicated
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSelector {
    pub fn zero(rows: usize, cols: usize) -> Self {
        SparseSelector { rows, cols, entries: Vec::new() }
    }

    /// Builds from 1-based (row, col, value) triples. Entries at the same
    /// position are summed; exact zeros are dropped.
    pub fn from_one_based(
        rows: usize,
        cols: usize,
        triples: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        for (i, j, v) in triples {
            if i == 0 || j == 0 || i > rows || j > cols {
                return Err(Error::IndexOutOfRange {
                    what: format!("entry ({i}, {j}) outside {rows} x {cols}"),
                });
            }
            entries.push((i - 1, j - 1, v));
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        merged.retain(|&(_, _, v)| v != 0.0);
        Ok(SparseSelector { rows, cols, entries: merged })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries as 1-based (row, col, value) triples in sorted order.
    pub fn entries_one_based(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|&(r, c, v)| (r + 1, c + 1, v))
    }

    /// 0-based entries, sorted by (row, col).
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Column indices (0-based) that carry at least one nonzero, ascending.
    /// These are the net rows a stencil reads from.
    pub fn source_rows(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.entries.iter().map(|&(_, c, _)| c).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.entries {
            e.2 *= factor;
        }
        out.entries.retain(|&(_, _, v)| v != 0.0);
        out
    }

    /// Entrywise sum; dimensions must agree.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                what: format!("sparse add {:?} vs {:?}", self.dims(), other.dims()),
            });
        }
        let triples = self
            .entries_one_based()
            .chain(other.entries_one_based())
            .collect::<Vec<_>>();
        Self::from_one_based(self.rows, self.cols, triples)
    }

    /// Embeds this matrix as one block of a (block_rows * rows) x
    /// (block_cols * cols) sparse matrix, at block position (bi, bj), 0-based.
    pub fn embed_block(&self, block_rows: usize, block_cols: usize, bi: usize, bj: usize) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(r, c, v)| (bi * self.rows + r, bj * self.cols + c, v))
            .collect();
        SparseSelector {
            rows: block_rows * self.rows,
            cols: block_cols * self.cols,
            entries,
        }
    }

    /// Left-multiplies a dense matrix: out = self * m.
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.cols {
            return Err(Error::DimensionMismatch {
                what: format!("sparse {} cols vs dense {} rows", self.cols, m.nrows()),
            });
        }
        let mut out = DMatrix::zeros(self.rows, m.ncols());
        for &(r, c, v) in &self.entries {
            for k in 0..m.ncols() {
                out[(r, k)] += v * m[(c, k)];
            }
        }
        Ok(out)
    }

    /// Accumulates factor * self * m into out.
    pub fn apply_into(&self, m: &DMatrix<f64>, factor: f64, out: &mut DMatrix<f64>) {
        for &(r, c, v) in &self.entries {
            for k in 0..m.ncols() {
                out[(r, k)] += factor * v * m[(c, k)];
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for &(r, c, v) in &self.entries {
            d[(r, c)] = v;
        }
        d
    }

    /// Rank of the dense expansion, with tolerance scaled to the entries.
    pub fn rank(&self) -> usize {
        if self.entries.is_empty() {
            return 0;
        }
        self.to_dense().rank(1e-10)
    }
}

/// 4x4 homogeneous transform; last row is (0, 0, 0, 1).
///
/// Control nets store points as homogeneous rows [x, y, z, 1], so a transform
/// acts on a net from the right as P * T^transpose. That convention keeps the
/// fourth column of the net identically 1 and moves each point by
/// x -> L x + t, where L is the linear block and t the last column.
#[derive(Debug, Clone, PartialEq)]
pub struct HomTransform {
    m: Matrix4<f64>,
}

impl HomTransform {
    pub fn new(m: Matrix4<f64>) -> Result<Self> {
        let last = m.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidDimensions {
                what: "homogeneous transform must have last row (0, 0, 0, 1)".into(),
            });
        }
        if m.determinant().abs() < 1e-12 {
            return Err(Error::SingularSystem);
        }
        Ok(HomTransform { m })
    }

    pub fn identity() -> Self {
        HomTransform { m: Matrix4::identity() }
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    /// Upper-left 3x3 linear block.
    pub fn linear(&self) -> nalgebra::Matrix3<f64> {
        self.m.fixed_view::<3, 3>(0, 0).into_owned()
    }

    /// Translation part (last column, first three entries).
    pub fn translation(&self) -> nalgebra::Vector3<f64> {
        self.m.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn compose(&self, other: &HomTransform) -> HomTransform {
        HomTransform { m: self.m * other.m }
    }

    pub fn inverse(&self) -> HomTransform {
        // invertibility checked at construction
        HomTransform { m: self.m.try_inverse().expect("validated invertible") }
    }

    /// Applies the transform to row-stacked homogeneous points: P * T^t.
    pub fn act_on_rows(&self, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if p.ncols() != 4 {
            return Err(Error::DimensionMismatch {
                what: format!("expected 4 columns, got {}", p.ncols()),
            });
        }
        let tt = DMatrix::from_fn(4, 4, |r, c| self.m[(c, r)]);
        Ok(p * tt)
    }

    /// Applies the point map x -> L x + t to one 3-vector.
    pub fn act_on_point(&self, x: [f64; 3]) -> [f64; 3] {
        let v = self.linear() * nalgebra::Vector3::new(x[0], x[1], x[2]) + self.translation();
        [v[0], v[1], v[2]]
    }
}

/// Matrix with a single 1 at 1-based position (i, j).
pub fn j_unit(i: usize, j: usize, dim: (usize, usize)) -> Result<SparseSelector> {
    SparseSelector::from_one_based(dim.0, dim.1, [(i, j, 1.0)])
}

/// The twenty index stencils, identical for all three surface families.
/// Family j picks a patch boundary (1 last rows, 2 left column, 3 first rows,
/// 4 right column); i = 1..5 picks which ring pair the stencil connects.
/// Returns an n^2 x n^2 sparse matrix.
pub fn m_matrix(i: usize, j: usize, n: usize) -> Result<SparseSelector> {
    if n < 7 {
        return Err(Error::UnsupportedGridSize { n });
    }
    if !(1..=5).contains(&i) || !(1..=4).contains(&j) {
        return Err(Error::IndexOutOfRange {
            what: format!("m_matrix indices (i, j) = ({i}, {j})"),
        });
    }
    let nn = n * n;
    let triples = m_pattern(i, j, n)
        .into_iter()
        .map(|(tgt, src)| (tgt, src, 1.0))
        .collect::<Vec<_>>();
    SparseSelector::from_one_based(nn, nn, triples)
}

/// 1-based (target, source) index pairs for stencil (i, j) at grid size n.
/// Each stencil is a sum of unit matrices J placed along one boundary ring.
pub(crate) fn m_pattern(i: usize, j: usize, n: usize) -> Vec<(usize, usize)> {
    let r5 = 0..=(n - 5); // first-ring runs
    let r7 = 0..=(n - 7); // second-ring runs
    let r3 = 0..=(n - 3); // the one longer first-ring run
    let f = |k: usize| -> (usize, usize) {
        match (i, j) {
            (1, 1) => (n * n - n + 2 + k, n * n - 2 * n + 2 + k),
            (2, 1) => (n * n - 2 * n + 2 + k, n * n - 2 * n + 2 + k),
            (3, 1) => (n * n - n + 3 + k, n * n - 3 * n + 3 + k),
            (4, 1) => (n * n - 2 * n + 3 + k, n * n - 3 * n + 3 + k),
            (5, 1) => (n * n - 3 * n + 3 + k, n * n - 3 * n + 3 + k),
            (1, 2) => (2 * n + k * n, 2 * n + 1 + k * n),
            (2, 2) => (2 * n + 1 + k * n, 2 * n + 1 + k * n),
            (3, 2) => (3 * n + k * n, 3 * n + 2 + k * n),
            (4, 2) => (3 * n + 1 + k * n, 3 * n + 2 + k * n),
            (5, 2) => (3 * n + 2 + k * n, 3 * n + 2 + k * n),
            (1, 3) => (2 + k, n + 2 + k),
            (2, 3) => (n + 2 + k, n + 2 + k),
            (3, 3) => (3 + k, 2 * n + 3 + k),
            (4, 3) => (n + 3 + k, 2 * n + 3 + k),
            (5, 3) => (2 * n + 3 + k, 2 * n + 3 + k),
            (1, 4) => (3 * n - 1 + k * n, 3 * n - 2 + k * n),
            (2, 4) => (3 * n - 2 + k * n, 3 * n - 2 + k * n),
            (3, 4) => (4 * n - 1 + k * n, 4 * n - 3 + k * n),
            (4, 4) => (4 * n - 2 + k * n, 4 * n - 3 + k * n),
            (5, 4) => (4 * n - 3 + k * n, 4 * n - 3 + k * n),
            _ => unreachable!("indices validated by m_matrix"),
        }
    };
    let range = match (i, j) {
        (1, 3) => r3,
        (1 | 2, _) => r5,
        _ => r7,
    };
    range.map(f).collect()
}

/// Second-ring combination 3 M(4, i) - 2 M(3, i) - M(5, i).
pub fn alpha(i: usize, n: usize) -> Result<SparseSelector> {
    let a = m_matrix(4, i, n)?.scale(3.0);
    let b = m_matrix(3, i, n)?.scale(-2.0);
    let c = m_matrix(5, i, n)?.scale(-1.0);
    a.add(&b)?.add(&c)
}

/// First-ring combination M(2, i) - M(1, i).
pub fn beta(i: usize, n: usize) -> Result<SparseSelector> {
    let a = m_matrix(2, i, n)?;
    let b = m_matrix(1, i, n)?.scale(-1.0);
    a.add(&b)
}

/// Block selectors over a stacked two-patch net (2 n^2 rows). Both map into
/// the top block: N1 stack(P1, P2) = stack(P1, 0) and
/// N2 stack(P1, P2) = stack(P2, 0).
pub fn n_selector(k: usize, n: usize) -> Result<SparseSelector> {
    if !(1..=2).contains(&k) {
        return Err(Error::IndexOutOfRange { what: format!("n_selector k = {k}") });
    }
    let nn = n * n;
    let triples = (1..=nn).map(|r| (r, if k == 1 { r } else { nn + r }, 1.0));
    SparseSelector::from_one_based(2 * nn, 2 * nn, triples)
}

const SQ2: f64 = std::f64::consts::SQRT_2;

/// Symmetry transforms per surface family. Gyroid has k = 1..7 where 4..7
/// are compositions and inverses of the listed 1..3; Diamond has k = 1..2;
/// SchwarzP has k = 1..4.
pub fn t_matrix(surface: SurfaceKind, k: usize) -> Result<HomTransform> {
    #[rustfmt::skip]
    let rows: [[f64; 4]; 4] = match (surface, k) {
        (SurfaceKind::Gyroid, 1) => [
            [0.0, 0.0, -1.0, 1.0],
            [1.0, 0.0,  0.0, 0.0],
            [0.0, 1.0,  0.0, 0.0],
            [0.0, 0.0,  0.0, 1.0],
        ],
        (SurfaceKind::Gyroid, 2) => [
            [0.0,  0.0, 1.0,  1.0],
            [1.0,  0.0, 0.0, -1.0],
            [0.0, -1.0, 0.0,  1.0],
            [0.0,  0.0, 0.0,  1.0],
        ],
        (SurfaceKind::Gyroid, 3) => [
            [0.0, -1.0,  0.0,  1.5],
            [1.0,  0.0,  0.0, -0.5],
            [0.0,  0.0, -1.0,  0.5],
            [0.0,  0.0,  0.0,  1.0],
        ],
        (SurfaceKind::Gyroid, 4) => {
            return Ok(t_matrix(surface, 1)?.compose(&t_matrix(surface, 3)?));
        }
        (SurfaceKind::Gyroid, 5) => return Ok(t_matrix(surface, 4)?.inverse()),
        (SurfaceKind::Gyroid, 6) => {
            return Ok(t_matrix(surface, 2)?.compose(&t_matrix(surface, 3)?));
        }
        (SurfaceKind::Gyroid, 7) => return Ok(t_matrix(surface, 6)?.inverse()),
        (SurfaceKind::Diamond, 1) => [
            [0.0, -1.0,  0.0, 0.0],
            [1.0,  0.0,  0.0, 0.0],
            [0.0,  0.0, -1.0, 0.0],
            [0.0,  0.0,  0.0, 1.0],
        ],
        (SurfaceKind::Diamond, 2) => [
            [-0.5,      -0.5,       SQ2 / 2.0, SQ2 / 2.0],
            [-0.5,      -0.5,      -SQ2 / 2.0, SQ2 / 2.0],
            [SQ2 / 2.0, -SQ2 / 2.0, 0.0,       0.0],
            [0.0,        0.0,       0.0,       1.0],
        ],
        (SurfaceKind::SchwarzP, 1) => [
            [ 0.5,       -0.5,       -SQ2 / 2.0, -SQ2 / 4.0],
            [-0.5,        0.5,       -SQ2 / 2.0, -SQ2 / 4.0],
            [-SQ2 / 2.0, -SQ2 / 2.0,  0.0,       -0.5],
            [ 0.0,        0.0,        0.0,        1.0],
        ],
        (SurfaceKind::SchwarzP, 2) => [
            [ 0.5,        0.5,      -SQ2 / 2.0,  SQ2 / 4.0],
            [ 0.5,        0.5,       SQ2 / 2.0, -SQ2 / 4.0],
            [-SQ2 / 2.0,  SQ2 / 2.0, 0.0,        0.5],
            [ 0.0,        0.0,       0.0,        1.0],
        ],
        (SurfaceKind::SchwarzP, 3) => [
            [ 0.0, -1.0, 0.0, 0.0],
            [-1.0,  0.0, 0.0, 0.0],
            [ 0.0,  0.0, 1.0, 0.0],
            [ 0.0,  0.0, 0.0, 1.0],
        ],
        (SurfaceKind::SchwarzP, 4) => [
            [0.0, 1.0, 0.0, 0.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ],
        _ => {
            return Err(Error::IndexOutOfRange {
                what: format!("t_matrix({surface}, {k})"),
            });
        }
    };
    HomTransform::new(Matrix4::from_fn(|r, c| rows[r][c]))
}

/// Number of listed transforms per surface family.
pub fn t_count(surface: SurfaceKind) -> usize {
    match surface {
        SurfaceKind::Gyroid => 7,
        SurfaceKind::Diamond => 2,
        SurfaceKind::SchwarzP => 4,
    }
}

/// Moduli of the four eigenvalues, ascending.
pub fn eigen_moduli(t: &HomTransform) -> [f64; 4] {
    let eig = t.m.complex_eigenvalues();
    let mut mods = [eig[0].norm(), eig[1].norm(), eig[2].norm(), eig[3].norm()];
    mods.sort_by(|a, b| a.partial_cmp(b).expect("finite moduli"));
    mods
}
