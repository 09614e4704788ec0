//! Maximum-likelihood estimation and sequential imputation for longitudinal
//! count panels with a zero-inflated Poisson (ZIP) response.
//!
//! The crate provides:
//! - the ZIP distribution, its log-likelihood, analytic score and Fisher
//!   information, and a damped Fisher-scoring fitter ([`fit`]);
//! - a weighted EM fitter that expands each missing response into a
//!   candidate-value support with probability weights ([`em`]);
//! - closed-form ANCOVA estimation of missing-cell effects and the
//!   threshold rule that turns them into imputed counts ([`impute`]);
//! - a sequential driver that walks the panel through time, feeding
//!   completed responses of earlier times into later models, raw at the
//!   second time and compressed to a leading principal component after
//!   that ([`pipeline`]);
//! - a seeded Monte-Carlo harness comparing the EM imputation against
//!   complete-data, complete-case and per-unit-mode baselines ([`sim`]);
//! - CSV/JSON panel and report formats plus the embedded corn study data
//!   ([`io`], [`corn`]).

pub mod corn;
pub mod dist;
pub mod em;
mod error;
pub mod fit;
pub mod impute;
pub mod io;
pub mod model;
pub mod panel;
pub mod pca;
pub mod pipeline;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
