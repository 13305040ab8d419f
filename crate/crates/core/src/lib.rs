//! Evaluation of randomized experiments in which a human decision maker is
//! (or is not) shown an algorithmic recommendation.
//!
//! The crate estimates principal-stratum causal effects of recommendation
//! provision on ordinal decisions, principal-fairness gaps across protected
//! groups, and cost-optimal decision and provision rules. Two estimation
//! engines are provided: a frequentist one (probit principal scores, Hajek
//! weighting, stratified bootstrap) and a Bayesian one (Gibbs-sampled
//! bivariate ordinal probit with a fixed latent correlation `rho`).
//! A synthetic data generator with exported ground truth backs every
//! estimator with an oracle.

pub mod bayes;
pub mod data;
pub mod error;
pub mod fairness;
pub mod models;
pub mod nonparam;
pub mod numeric;
pub mod policy;
pub mod report;
pub mod rng;
pub mod runner;
pub mod spillover;
pub mod synth;
pub mod weights;

pub use error::{Error, Result};
