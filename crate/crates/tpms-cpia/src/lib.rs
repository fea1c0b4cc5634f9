//! B-spline surface fitting for triply periodic minimal surfaces by
//! constrained progressive iterative approximation.
//!
//! The crate has three layers:
//!
//! * [`weierstrass`] evaluates the complex representation functions of the
//!   surface family, their first and second derivatives, and the second
//!   derivatives of the unit normal components used in offset analysis.
//! * [`constraints`] builds the sparse index stencils, homogeneous symmetry
//!   transforms, and block selectors that encode boundary relations between
//!   control points.
//! * [`bspline`], [`cpia`], and [`sampler_io`] fit tensor-product B-spline
//!   patches to sampled surface grids: collocation, the iterative update with
//!   additive constraint corrections, and grid/mesh input and output.
//!
//! [`verify`] bundles the cross-module invariant checks behind one seeded,
//! reproducible report.

pub mod bspline;
pub mod constraints;
pub mod cpia;
pub mod error;
pub mod sampler_io;
pub mod verify;
pub mod weierstrass;

pub use error::{Error, Result};
