//! Online test-time adaptation on small dense classifiers.
//!
//! The crate covers the whole loop: synthetic shifted data, source training,
//! single-pass stream adaptation under entropy minimization (EM), hard
//! pseudo-labels (PL), cosine max (CoM) and cosine max-min (CoMM) objectives,
//! and diagnostics over the probability simplex.

pub mod adaptation;
pub mod benchmark;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod format;
pub mod losses;
pub mod model;
pub mod numerics;

pub use error::{Error, Result};
