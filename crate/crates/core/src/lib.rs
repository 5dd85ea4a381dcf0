//! Anisotropic geometric-measure diagnostics on weighted point clouds.
//!
//! A [`measure::DiscreteMeasure`] stands in for a Radon measure; a
//! [`metric_field::MetricField`] attaches an SPD matrix to every point and
//! defines the ellipses `B_Λ(X, r)`. On top of these the crate computes
//! density ratios and doubling defects, β-type flatness coefficients,
//! second-order moments, blow-up rescalings with the `F_r` metric, and a
//! plane / light-cone / singular-point classifier.

// `!(x > 0.0)` is used on purpose so that NaN is rejected with the rest;
// index loops mirror the matrix formulas they implement.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod blowup;
pub mod classify;
pub mod density;
pub mod error;
pub mod flatness;
pub mod kdtree;
pub mod linalg;
pub mod measure;
pub mod metric_field;
pub mod moments;
pub mod optim;
pub mod synth;
pub mod transport;
pub mod verify;

pub use error::{GmtError, Result};
