//! Measure pre-conditioning for learning problems at desk scale.
//!
//! This crate replaces raw empirical measures of a training sample with
//! better-behaved surrogates (smoothed densities, histograms, barycenters,
//! relaxed transport plans), measures how the surrogates converge to the
//! underlying model, verifies empirically that the learning problem recovers
//! its ideal minimizer along the way, and transfers learnt agents across
//! domains with optimal transport.
//!
//! Everything is sized for the desk: discrete supports up to a few hundred
//! atoms, grids up to a few hundred cells per axis, exhaustive or brute-force
//! oracles within reach of the test suite. Start with the runnable examples:
//!
//! ```bash
//! cargo run --release --example empirical_tv
//! cargo run --release --example kde_convergence
//! cargo run --release --example recovery_verdict
//! ```
//!
//! The `premeasure` binary wraps the same flows behind subcommands
//! (`precondition`, `metrics`, `recovery`, `adapt`, `experiment`, `plot`).

pub mod adaptation;
pub mod error;
pub mod learning;
pub mod linprog;
pub mod measure;
pub mod metrics;
pub mod num;
pub mod plot;
pub mod precondition;
pub mod recovery;
pub mod rng;
pub mod scenario;
pub mod transport;

pub use error::{Error, Result};
pub use measure::{
    gaussian_convolve, make_discrete, DiscreteMeasure, GridDensity, GridSpec, Integrand, Measure,
    Point, Sample,
};
pub use rng::RandomSeed;
