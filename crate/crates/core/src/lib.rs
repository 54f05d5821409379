//! Core algorithms of the ocufuse toolkit.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std` (only `alloc` is required). File formats, logging
//! and the command-line interface live in the companion `ocufuse` crate.
//!
//! Module map:
//!
//! * [`embedding`] – embedding records, indexed sets and seeded subject splits.
//! * [`gazeprep`] – Savitzky-Golay velocities, clamping, windowing, standardization.
//! * [`metriclearn`] – multi-similarity loss and its gradient, Adam, the one-cycle
//!   schedule, minibatch sampling, the linear fusion (EF1) trainer and a toy encoder.
//! * [`fusion`] – centroid aggregation and the SF1 / SF2 / EF1 / EF2 fusion rules.
//! * [`evalkit`] – trial scoring, ROC, EER, FRR at fixed FAR, FIDO conformance.
//! * [`reliability`] – Kendall's W, normality screening, intercorrelation, EER-vs-KCC fit.
//! * [`synthgen`] – seeded generators with controllable ground truth.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}

pub mod embedding;
pub mod error;
pub mod evalkit;
pub mod fusion;
pub mod gazeprep;
pub mod math;
pub mod metriclearn;
pub mod reliability;
pub mod synthgen;

pub use embedding::{split_subjects, EmbeddingRecord, EmbeddingSet, Modality, SubjectSplit};
pub use error::{Error, Result};
