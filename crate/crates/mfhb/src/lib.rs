//! Multivariate frequency-domain hybrid bootstrap for integrated-periodogram
//! statistics and smooth functions of them (sample cross-correlations in
//! particular), together with a moving-block-bootstrap baseline, VARMA/BEKK
//! simulation models, analytic reference values and a config-driven
//! experiment harness.
//!
//! The bootstrap draws independent complex-Gaussian pseudo periodograms to
//! carry the second-order structure of the process, convolved subsampling
//! draws to carry the fourth-order structure, and merges the two replicate
//! families through their exact bootstrap second moments in the stacked
//! (Re, Im) representation.
//!
//! Entry points:
//! - [`engine::run_integrated`] / [`engine::run_smooth`] for a single
//!   bootstrap run on a (centered) series,
//! - [`engine::builtin_cross_correlation`] for the cross-correlation
//!   statistic,
//! - [`harness::run_experiment`] / [`harness::monte_carlo_exact`] for the
//!   simulation study,
//! - [`mbb`] for the moving-block baseline.
//!
//! All randomness is keyed by [`rng::RngSeed`] substreams; runs are
//! bit-identical across thread counts, and the `parallel` feature (on by
//! default) switches the replicate and repetition loops to rayon.

pub mod complex_normal;
pub mod engine;
pub mod error;
pub mod harness;
pub mod hermitian;
pub mod mbb;
pub mod models;
pub mod oracle;
mod parallel;
pub mod rng;
pub mod spectral;

pub use error::{MfhbError, Result};
pub use parallel::with_threads;
