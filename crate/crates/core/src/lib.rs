//! Semiparametric inference on the number of stochastic trends in a
//! multivariate time series, based on canonical correlations between the
//! observed levels and a discretized Karhunen-Loève basis of `L²[0,1]`.
//!
//! The pipeline mirrors a typical analysis:
//!
//! 1. [`panel`]: read a CSV panel, take logs, normalise, select or aggregate series.
//! 2. [`basis`]: build the `T x K` design `d_t = φ_K(t/T)`.
//! 3. [`cca`]: squared canonical correlations of `(x_t, d_t)`.
//! 4. [`trend_count`]: max-gap and argmax estimators, sequential pivotal tests,
//!    identification decision rule and misspecification diagnostics.
//! 5. [`limit_law`]: simulated critical values of the pivotal limit law.
//! 6. [`loadings`]: one-step and iterated estimators of the loading and
//!    cointegrating matrices, long-run variance and Wald tests.
//! 7. [`mc`]: Monte Carlo harness for the error-correction DGP.

pub mod basis;
pub mod cca;
pub mod error;
pub mod limit_law;
pub mod linalg;
pub mod loadings;
pub mod mc;
pub mod panel;
pub mod rng;
pub mod trend_count;

pub use error::{Error, Result};
