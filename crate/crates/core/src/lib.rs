//! Delayed coincidence counting and independence testing for parallel spike trains.
//!
//! The crate is organised bottom-up:
//!
//! - [`spike_data`]: windows, spike trains, trials, pattern subsets and file I/O.
//! - [`coincidence`]: the delayed coincidence count (fast sweep and brute force),
//!   generic symmetric coincidence functions, and binned constellation counts.
//! - [`closed_form`]: the `I(L,k)` integrals, Poisson-null moments of the count,
//!   and independent numerical oracles for the integrals.
//! - [`independence`]: the Gaussian-approximation test, the binned Unitary Events
//!   test, and Benjamini–Hochberg over all sub-patterns.
//! - [`simulate`]: Poisson, injection and piecewise-constant Hawkes generators.
//! - [`harness`]: Monte-Carlo evaluation (KS distances, rejection curves, scans).
//!
//! Monte-Carlo loops run on rayon when the `parallel` feature is on (the
//! default); [`exec::Execution`] selects the strategy at run time.

pub mod closed_form;
pub mod coincidence;
pub mod error;
pub mod exec;
pub mod harness;
pub mod independence;
pub mod rng;
pub mod simulate;
pub mod spike_data;
pub mod stats;

pub use error::{Error, Result};
