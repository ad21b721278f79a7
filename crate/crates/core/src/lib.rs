//! Low-altitude coverage prediction from base-station operational parameters.
//!
//! The pipeline compresses BS/sample geometry into panel-relative angles and
//! a slant distance ([`geo`]), learns per-beam RSRP with additively fused
//! subnetworks ([`model`], [`nnet`]), and rasterizes predictions into fused
//! multi-BS coverage maps ([`covmap`]). [`synth`] provides a known separable
//! propagation model for generating verifiable datasets, and [`eval`] runs
//! seeded experiment sweeps against ablations and classical baselines.

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod covmap;
pub mod data;
pub mod error;
pub mod eval;
pub mod geo;
pub mod model;
pub mod nnet;
pub mod synth;

pub use error::{Error, Result};
