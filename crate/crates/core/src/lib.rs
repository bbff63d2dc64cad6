//! Numerical laboratory for the variational inequality satisfied by
//! k-dimensional quasiplanes under quasiconformal maps of R^n.
//!
//! The crate computes every quantity in the inequality chain
//! `exp{(1/K_O) int_r^R lambda(tau) dtau} <= V(a,R)/V(a,r) <= D_*^{2n} (R/r)^{n beta}`
//! for a library of explicit maps: dilatations ([`maps`]), the first
//! n-Rayleigh quotient on sphere complements ([`eta`]), radial distortion,
//! volume growth and capacity bounds ([`distortion`]), and the pointwise
//! matrix estimates behind them ([`inequalities`]). [`report`] ties the
//! pieces into reproducible runs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod distortion;
pub mod error;
pub mod eta;
pub mod geometry;
pub mod inequalities;
pub mod maps;
pub mod quadrature;
pub mod report;
pub mod sparse;

pub use error::{DistortionError, GeometryError, InequalityError, MapError, ReportError, SolverError};
pub use geometry::{build_sphere_mesh, MarkOptions, ScalarField, Sphere, SurfaceMesh, Vec3};
pub use maps::{estimate_dilatations, Ball, DilatationEstimate, Point, QcMap};
