//! From-scratch 1-D CNN denoiser for EMG-contaminated EEG epochs.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`signal`]: RMS, SNR mixing, sigma-normalization, PSD, and the three
//!   evaluation metrics (time/spectral relative RMSE, correlation).
//! - [`engine`]: forward and backward passes for the five layer kinds
//!   (conv1d k=3 "same", ReLU, average pool 2, flatten, dense), with the
//!   activation tape that makes backprop possible.
//! - [`model`]: declarative graph construction (the ascending-width CNN and
//!   a generic dense baseline), seeded initialization, and the EDNC
//!   checkpoint format.
//! - [`optim`]: MSE loss, RMSprop, the deterministic mini-batch training
//!   loop, and the sigma-restore denoising path.
//! - [`data`]: EDNB/CSV matrix ingestion, pairing, the 8/1/1 split,
//!   SNR-controlled remixing, and a synthetic corpus generator for
//!   desk-scale runs.
//! - [`gradcheck`]: finite-difference verification of every gradient.
//! - [`report`]: per-SNR-level metric reports against the noisy baseline.
//!
//! Everything is deterministic given explicit seeds; two runs with the same
//! configuration produce byte-identical checkpoints, curves, and reports.

pub mod data;
pub mod engine;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod optim;
pub mod report;
pub mod signal;

pub use error::{Error, Result};

/// FNV-1a over a canonical string; used to stamp configurations into
/// checkpoints and report metadata. Stable across platforms.
pub fn fnv1a64(text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}
