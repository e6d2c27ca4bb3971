//! Top-n recommendation from implicit feedback with weighted matrix
//! factorization (WMF) and co-occurrence embedded matrix factorization
//! (CEMF), which additionally factorizes an item×item shifted positive
//! PMI matrix with the same item vectors.
//!
//! The pipeline is `ingest` → `sppmi` → `solver` → `eval`, with
//! `experiment` tying them together for grid runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod experiment;
pub mod ingest;
pub mod matrix;
pub mod model;
pub mod solver;
pub mod sppmi;

pub use error::{Error, Result, Side};
pub use matrix::InteractionMatrix;
pub use model::{confidence, FactorModel, Hyperparams, ModelExtra};
pub use solver::{fit, FitResult, ItemSweep, LossBreakdown, Mode, TrainConfig, Trainer};
pub use sppmi::{build_sppmi, count_cooccurrences, CooccurrenceStats, SppmiMatrix};
