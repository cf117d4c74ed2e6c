//! Multivariate Gaussian kernel density estimation for correcting noisy
//! measurements.
//!
//! A joint KDE over inputs and an output is conditioned on observed inputs;
//! the conditional expectation is the corrected value and equal-tail
//! quantiles give a credible interval. Four bandwidth regimes are supported
//! (fixed, adaptive, selective, selective-adaptive), with bandwidths chosen
//! by plug-in rules or by minimizing least-squares cross-validation (LSCV)
//! or the mean conditional squared error (MCSE).
//!
//! ```
//! use std::sync::Arc;
//! use kdecorrect::{
//!     conditional::{condition, conditional_expectation},
//!     experiments::{gen_example1, Example1Config},
//!     BandwidthSpec, FittedModel,
//! };
//!
//! let data = Arc::new(gen_example1(&Example1Config::default()).unwrap());
//! let model = FittedModel::fit(data, BandwidthSpec::selective(vec![0.4, 0.12]).unwrap()).unwrap();
//! let mix = condition(&model, &[1.0]).unwrap();
//! let corrected = conditional_expectation(&mix);
//! assert!((corrected - (0.25 + 1f64.sin())).abs() < 0.5);
//! ```

pub mod bandwidth;
pub mod conditional;
pub mod dataset;
pub mod density;
pub mod error;
pub mod experiments;
mod kernel;
pub mod optimize;
pub mod selection;

pub use bandwidth::{BandwidthFactor, BandwidthMatrix, BandwidthSpec, LocalFactors, Method, PluginRule};
pub use conditional::{ConditionalMixture, ConditionalResult};
pub use dataset::{CovarianceDecomposition, Dataset};
pub use density::{FittedModel, Kde};
pub use error::{ErrorClass, KdeError, Result};
pub use kernel::log_sum_exp;
pub use selection::{Criterion, CriterionReport, OptimizerConfig, Selection};
