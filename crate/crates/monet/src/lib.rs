//! Monetary quantity-of-prices model with an econometric verification toolkit.
//!
//! The crate bundles the closed-form model itself, dataset handling for the
//! quarterly country series, empirical mode decomposition, parametric
//! distribution fitting, a no-U-turn HMC sampler, Bayesian regression with
//! LOO-based evaluation, a small machine learning suite, and the pipeline
//! that wires the stages into reproducible reports.

pub mod dataset;
pub mod distfit;
pub mod emd;
pub mod evalkit;
pub mod mlsuite;
pub mod numeric;
pub mod pipeline;
pub mod quantity;
pub mod regress;
pub mod sampler;
