// Indexed loops and NaN-rejecting `!(x > 0.0)` guards are deliberate in
// numerical code.
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Enriched functional tree-based classifiers.
//!
//! Converts discretely sampled curves into a six-block B-spline coefficient
//! feature matrix (original function, first/second derivatives, curvature,
//! radius of curvature, elasticity) and trains tree, forest, boosting, and
//! K-NN classifiers on it, with simulation generators, dataset IO, a
//! benchmark sweep driver, and model-explanation tools.

pub mod basis;
pub mod bench;
pub mod dataio;
pub mod enrich;
pub mod explain;
pub mod linalg;
pub mod models;
pub mod simgen;

pub use basis::{eval_curve, fit_curve, make_basis, BasisError, BasisSystem, CoefficientVector};
pub use enrich::{
    build_enriched, BlockLayout, BlockTag, CurveSet, EnrichConfig, EnrichError, EnrichedMatrix,
    Enricher,
};
