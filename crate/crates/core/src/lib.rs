//! Multiscale flatness coefficients (α, β_p, bilateral β₁) on weighted point
//! clouds, Christ–David style dyadic lattices, layered singular integrals and
//! a catalog of numerical checks relating them.

// NaN-rejecting `!(x > 0.0)` tests and index loops over coupled arrays are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod coefficients;
pub mod error;
pub mod flat_metric;
pub mod kernels;
pub mod lattice;
pub mod measures;
pub mod search;
pub mod spatial;
pub mod verify;

pub use error::*;
pub use measures::{DiscreteMeasure, GraphFamily, MeasureSpec, Region};
pub use lattice::{build_lattice, BallConvention, DyadicCube, Lattice};
pub use spatial::Ball;
pub use flat_metric::{alpha, alpha_all, bl_distance, AlphaOptions, AlphaRecord, Plane, WeightedPoints};
pub use coefficients::{beta, betas_all, carleson_sum, BetaExponent, BetaRecord, CarlesonReport, CoefficientKind};
pub use kernels::{
    layer_field, maximal_field, riesz_energy, truncated_field, BumpKind, Field, FieldDescriptor, KernelKind, KernelSpec,
    Layering,
};
pub use verify::{fit_constant, run_check, CheckId, CheckReport, Fit, Pair, VerifyOptions, Workbench};
