//! Moving-frame geometry of curves and surfaces in the 3-dimensional
//! Heisenberg group.
//!
//! The crate computes the complete differential invariants of horizontally
//! regular curves (p-curvature and T-variation) and of normal parametrized
//! surfaces (the coefficient fields `a, b, c, l, m`, the p-variation
//! `alpha = b/c`, the p-mean curvature `l`, the induced metric, and its
//! Gaussian curvature), reconstructs curves and surfaces from prescribed
//! invariants by integrating the corresponding frame equations, and decides
//! congruence under the group of Heisenberg rigid motions.
//!
//! Modules:
//! - [`heisenberg`]: the group, its contact structure, rigid motions,
//!   oriented frames, and the moving-frame formula.
//! - [`curves`]: curve invariants, arclength normalization, reconstruction,
//!   congruence, geodesics.
//! - [`surfaces`]: surface coefficients and invariants, integrability
//!   checks, reconstruction, curvature formulas.
//! - [`numerics`]: fixed-step integrators, quadrature, finite differences.
//! - [`io`]: JSON/CSV file formats shared with the command-line front end.

pub mod curves;
pub mod heisenberg;
pub mod io;
pub mod numerics;
pub mod surfaces;

pub use curves::{CurveError, CurveSignature, GeodesicParams, HamiltonianState, ParamCurve};
pub use heisenberg::{
    H1Error, H1Point, HeisenbergMotion, MaurerCartanValue, OrientedFrame, TangentVector,
};
pub use numerics::{GridField, NumericsError};
pub use surfaces::{
    MetricPatch, SurfaceCoefficients, SurfaceError, SurfaceInvariants, SurfacePatch,
};
