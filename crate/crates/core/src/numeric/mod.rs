//! Shared numeric kernels: univariate and bivariate normal probabilities,
//! the logistic link, and small dense linear-algebra helpers.

pub mod bvn;
pub mod linalg;
pub mod normal;
pub mod stats;

pub use bvn::{bvn_cdf, bvn_rectangle};
pub use normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf};
