//! Data generation and file formats: surface points come from numerically
//! integrating the Weierstrass forms along paths from the origin, grids are
//! stored as diff-able CSV, and nets or grids export as triangulated OBJ.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::bspline::ControlNet;
use crate::constraints::{t_matrix, HomTransform, SurfaceKind};
use crate::error::{Error, Result};
use crate::weierstrass::{branch_radius, phi, ComplexParam, Domain};

/// Order-8 Gauss-Legendre nodes on [-1, 1].
const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];

/// Matching Gauss-Legendre weights.
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

/// Segment-doubling stops once successive composite values differ by less
/// than this, one order below the 1e-8 accuracy contract.
const QUAD_TOL: f64 = 1e-9;
const MAX_SEGMENTS: usize = 256;

/// Dense rectangular sample set: homogeneous points and their parameter
/// sites, both row-major with the first index major.
#[derive(Debug, Clone, PartialEq)]
pub struct DataGrid {
    rows: usize,
    cols: usize,
    points: Vec<[f64; 4]>,
    params: Vec<(f64, f64)>,
}

impl DataGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        points: Vec<[f64; 4]>,
        params: Vec<(f64, f64)>,
    ) -> Result<Self> {
        if rows < 1 || cols < 1 || points.len() != rows * cols || params.len() != rows * cols {
            return Err(Error::InvalidDimensions {
                what: format!(
                    "{rows}x{cols} grid with {} points and {} params",
                    points.len(),
                    params.len()
                ),
            });
        }
        if points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidDimensions { what: "non-finite sample".into() });
        }
        Ok(DataGrid { rows, cols, points, params })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn points(&self) -> &[[f64; 4]] {
        &self.points
    }

    pub fn params(&self) -> &[(f64, f64)] {
        &self.params
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 4] {
        self.points[i * self.cols + j]
    }

    /// Rows stacked into a dense matrix, one homogeneous point per row.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows * self.cols, 4, |r, c| self.points[r][c])
    }

    /// Applies a homogeneous transform to every sample.
    pub fn transformed(&self, t: &HomTransform) -> DataGrid {
        let points = self
            .points
            .iter()
            .map(|p| {
                let q = t.act_on_point([p[0], p[1], p[2]]);
                [q[0], q[1], q[2], p[3]]
            })
            .collect();
        DataGrid { rows: self.rows, cols: self.cols, points, params: self.params.clone() }
    }
}

/// What to sample: a surface family, a parameter rectangle, the associate
/// rotation angle, and cell counts per direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    pub surface: SurfaceKind,
    pub domain: Domain,
    pub bonnet_angle: f64,
    /// Cells per direction; the grid carries one more point than cells.
    pub samples: (usize, usize),
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.samples.0 < 2 || self.samples.1 < 2 {
            return Err(Error::InvalidDimensions {
                what: format!("needs at least 2 cells per direction, got {:?}", self.samples),
            });
        }
        domain_clear_of_branch_points(&self.domain)
    }
}

/// Fails if the rectangle reaches the branch radius or holds a branch point.
fn domain_clear_of_branch_points(domain: &Domain) -> Result<()> {
    let corners = [
        domain.at(0.0, 0.0),
        domain.at(1.0, 0.0),
        domain.at(0.0, 1.0),
        domain.at(1.0, 1.0),
    ];
    let max_mod = corners.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let margin = branch_radius() - max_mod;
    if margin <= 1e-9 || domain.contains_branch_point(1e-9) {
        return Err(Error::DomainContainsBranchPoint { margin: margin.max(0.0) });
    }
    Ok(())
}

/// Integration route from the origin to a parameter value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationPath {
    /// One straight segment.
    Straight,
    /// Along the real axis, then parallel to the imaginary axis.
    Axes,
}

/// Composite order-8 Gauss rule for the three forms over one straight
/// segment split into `segs` pieces.
fn composite_segment(z0: Complex64, z1: Complex64, segs: usize) -> Result<[Complex64; 3]> {
    let mut acc = [Complex64::new(0.0, 0.0); 3];
    let step = (z1 - z0) / segs as f64;
    for s in 0..segs {
        let a = z0 + step * s as f64;
        // half-length Jacobian of the [-1,1] -> segment map
        let half = step * 0.5;
        let mid = a + half;
        for (node, w) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
            let z = mid + half * *node;
            let (f1, f2, f3) = phi(&ComplexParam::new(z)?);
            acc[0] += f1 * *w * half;
            acc[1] += f2 * *w * half;
            acc[2] += f3 * *w * half;
        }
    }
    Ok(acc)
}

/// Integrates the forms over a straight segment, doubling the segment count
/// until successive composites agree to the quadrature tolerance.
fn integrate_straight(z0: Complex64, z1: Complex64) -> Result<[Complex64; 3]> {
    if (z1 - z0).norm() == 0.0 {
        return Ok([Complex64::new(0.0, 0.0); 3]);
    }
    let mut segs = 1usize;
    let mut prev = composite_segment(z0, z1, segs)?;
    while segs < MAX_SEGMENTS {
        segs *= 2;
        let next = composite_segment(z0, z1, segs)?;
        let delta = prev
            .iter()
            .zip(next.iter())
            .map(|(p, n)| (p - n).norm())
            .fold(0.0, f64::max);
        prev = next;
        if delta < QUAD_TOL {
            break;
        }
    }
    Ok(prev)
}

/// Surface point for a parameter value: real part of the rotated integrals
/// of the three forms along the chosen path from the origin.
pub fn weierstrass_point(
    tau: Complex64,
    bonnet_angle: f64,
    path: IntegrationPath,
) -> Result<[f64; 3]> {
    let integral = match path {
        IntegrationPath::Straight => integrate_straight(Complex64::new(0.0, 0.0), tau)?,
        IntegrationPath::Axes => {
            let elbow = Complex64::new(tau.re, 0.0);
            let first = integrate_straight(Complex64::new(0.0, 0.0), elbow)?;
            let second = integrate_straight(elbow, tau)?;
            [first[0] + second[0], first[1] + second[1], first[2] + second[2]]
        }
    };
    let rot = Complex64::new(0.0, bonnet_angle).exp();
    Ok([(rot * integral[0]).re, (rot * integral[1]).re, (rot * integral[2]).re])
}

/// Samples the surface at an explicit grid of unit-square parameter sites
/// mapped through the domain. The first coordinate list is the major index.
pub fn sample_grid_at(
    domain: &Domain,
    bonnet_angle: f64,
    us: &[f64],
    vs: &[f64],
) -> Result<DataGrid> {
    domain_clear_of_branch_points(domain)?;
    if us.len() < 2 || vs.len() < 2 {
        return Err(Error::InvalidDimensions {
            what: format!("needs at least 2 sites per direction, got {}x{}", us.len(), vs.len()),
        });
    }
    for &t in us.iter().chain(vs.iter()) {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::ParamOutOfRange { what: format!("site {t} outside [0,1]") });
        }
    }
    let mut points = Vec::with_capacity(us.len() * vs.len());
    let mut params = Vec::with_capacity(us.len() * vs.len());
    for &u in us {
        for &v in vs {
            let tau = domain.at(u, v);
            let p = weierstrass_point(tau, bonnet_angle, IntegrationPath::Straight)?;
            points.push([p[0], p[1], p[2], 1.0]);
            params.push((u, v));
        }
    }
    DataGrid::new(us.len(), vs.len(), points, params)
}

/// Samples a uniform grid over the patch domain: cells+1 sites per
/// direction. Identical inputs produce bit-identical grids.
pub fn sample_patch(spec: &PatchSpec) -> Result<DataGrid> {
    spec.validate()?;
    let (m1, m2) = spec.samples;
    let us: Vec<f64> = (0..=m1).map(|i| i as f64 / m1 as f64).collect();
    let vs: Vec<f64> = (0..=m2).map(|j| j as f64 / m2 as f64).collect();
    sample_grid_at(&spec.domain, spec.bonnet_angle, &us, &vs)
}

/// Associate-rotation defaults per family, from the classical Weierstrass
/// data for this radicand: the two-patch family at angle 0, its conjugate at
/// a quarter turn, and the intermediate family near 0.66347. Overridable
/// wherever an angle is accepted.
pub fn default_bonnet(surface: SurfaceKind) -> f64 {
    match surface {
        SurfaceKind::Diamond => 0.0,
        SurfaceKind::SchwarzP => std::f64::consts::FRAC_PI_2,
        SurfaceKind::Gyroid => 0.66347,
    }
}

/// Second-patch data for the two-patch family: the image of the first
/// patch's grid under the family's first gluing transform.
pub fn diamond_second_patch(first: &DataGrid) -> Result<DataGrid> {
    let t = t_matrix(SurfaceKind::Diamond, 1)?;
    Ok(first.transformed(&t))
}

/// Writes a grid as CSV: header `i,j,x,y,z`, first index major, coordinates
/// with 17 significant digits so a load reproduces the exact values.
pub fn save_grid(grid: &DataGrid, path: &Path) -> Result<()> {
    let mut out = String::from("i,j,x,y,z\n");
    let (rows, cols) = grid.dims();
    for i in 0..rows {
        for j in 0..cols {
            let p = grid.point(i, j);
            writeln!(out, "{i},{j},{:.16e},{:.16e},{:.16e}", p[0], p[1], p[2])
                .expect("string write");
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a grid saved by [`save_grid`]. Every cell of the bounding index
/// rectangle must be present exactly once. Parameter sites are synthesized
/// uniformly since the format does not carry them.
pub fn load_grid(path: &Path) -> Result<DataGrid> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "i,j,x,y,z" => {}
        Some((_, h)) => {
            return Err(Error::ParseError { line: 1, what: format!("bad header {h:?}") })
        }
        None => return Err(Error::ParseError { line: 1, what: "empty file".into() }),
    }
    let mut cells: Vec<(usize, usize, [f64; 3])> = Vec::new();
    let mut max_i = 0usize;
    let mut max_j = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::ParseError {
                line: lineno,
                what: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let i: usize = fields[0].trim().parse().map_err(|_| Error::ParseError {
            line: lineno,
            what: format!("bad index {:?}", fields[0]),
        })?;
        let j: usize = fields[1].trim().parse().map_err(|_| Error::ParseError {
            line: lineno,
            what: format!("bad index {:?}", fields[1]),
        })?;
        let mut xyz = [0.0f64; 3];
        for (k, f) in fields[2..].iter().enumerate() {
            xyz[k] = f.trim().parse().map_err(|_| Error::ParseError {
                line: lineno,
                what: format!("bad coordinate {f:?}"),
            })?;
        }
        max_i = max_i.max(i);
        max_j = max_j.max(j);
        cells.push((i, j, xyz));
    }
    if cells.is_empty() {
        return Err(Error::ParseError { line: 2, what: "no samples".into() });
    }
    let (rows, cols) = (max_i + 1, max_j + 1);
    let mut points = vec![None; rows * cols];
    for (i, j, xyz) in cells {
        points[i * cols + j] = Some([xyz[0], xyz[1], xyz[2], 1.0]);
    }
    let mut dense = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            match points[i * cols + j] {
                Some(p) => dense.push(p),
                None => return Err(Error::MissingSample { i, j }),
            }
        }
    }
    let params = (0..rows)
        .flat_map(|i| {
            (0..cols).map(move |j| {
                (
                    if rows > 1 { i as f64 / (rows - 1) as f64 } else { 0.0 },
                    if cols > 1 { j as f64 / (cols - 1) as f64 } else { 0.0 },
                )
            })
        })
        .collect();
    DataGrid::new(rows, cols, dense, params)
}

/// Writes a tensor grid of homogeneous rows as a triangulated OBJ: `v`
/// records in row-major order, then two `f` triangles per cell with 1-based
/// indices.
pub fn export_mesh(points: &DMatrix<f64>, dims: (usize, usize), path: &Path) -> Result<()> {
    let (rows, cols) = dims;
    if rows < 2 || cols < 2 || points.nrows() != rows * cols || points.ncols() != 4 {
        return Err(Error::InvalidDimensions {
            what: format!(
                "mesh needs a {}x{} grid of homogeneous rows, got {}x{}",
                rows,
                cols,
                points.nrows(),
                points.ncols()
            ),
        });
    }
    let mut out = String::new();
    for r in 0..rows * cols {
        writeln!(
            out,
            "v {:.16e} {:.16e} {:.16e}",
            points[(r, 0)],
            points[(r, 1)],
            points[(r, 2)]
        )
        .expect("string write");
    }
    for i in 0..rows - 1 {
        for j in 0..cols - 1 {
            let a = i * cols + j;
            let b = a + 1;
            let d = (i + 1) * cols + j;
            let e = d + 1;
            writeln!(out, "f {} {} {}", a + 1, d + 1, b + 1).expect("string write");
            writeln!(out, "f {} {} {}", b + 1, d + 1, e + 1).expect("string write");
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// [`export_mesh`] for a sampled grid.
pub fn export_grid_mesh(grid: &DataGrid, path: &Path) -> Result<()> {
    export_mesh(&grid.to_matrix(), grid.dims(), path)
}

/// [`export_mesh`] for a control net laid out as a grid.
pub fn export_net_mesh(net: &ControlNet, dims: (usize, usize), path: &Path) -> Result<()> {
    export_mesh(net.matrix(), dims, path)
}
