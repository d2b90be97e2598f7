//! Batch-level data curation by spectral scoring.
//!
//! Every training batch is turned into a cosine-similarity graph over
//! reference features. The Fiedler vector of that graph's Laplacian ranks the
//! batch; a scheduled filter ratio decides how many points survive, half of
//! them taken deterministically from the top of the ranking and the rest drawn
//! by weighted sampling without replacement.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the experiment
//! harness and the command-line tool live in the `gstds` crate.
//!
//! | module | contents |
//! |--------|----------|
//! | [`data`] | feature corpus, stratified splits, disjoint batching |
//! | [`schedule`] | filter-ratio policies, sigmoid calibration, AIMD controller |
//! | [`spectral`] | cosine similarity, Laplacian, Jacobi eigensolver, Fiedler ranking |
//! | [`selection`] | selection counts, weights, exploit/explore subset choice |
//! | [`learner`] | softmax / one-hidden-layer classifier and the reference probe |
//! | [`flops`] | FLOPs accounting convention |
//! | [`train`] | the schedule-driven training loop |
//! | [`pca`] | two-component projection for plotting |

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
mod error;
pub mod flops;
pub mod learner;
pub mod pca;
pub mod rng;
pub mod schedule;
pub mod selection;
pub mod spectral;
pub mod train;

pub use error::{Error, Result};
