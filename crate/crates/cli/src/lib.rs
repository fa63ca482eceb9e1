//! Spec-file driven experiments on top of the `muwsa` library.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod run;
pub mod spec;

pub use run::{geometry_table, run, Overrides, RunOutcome};
pub use spec::{ExperimentKind, ExperimentSpec};
