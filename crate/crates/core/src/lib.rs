//! Proximal stochastic gradient solvers for sparsity-regularized learning,
//! with two feature-screening schemes layered on top:
//!
//! * a gap-safe rule for finite-sum problems, rebuilt from a full pass over
//!   the data every few epochs ([`runner::run_full_screening`]);
//! * an online rule that maintains running estimates of the duality gap and
//!   of the dual certificate from the sampled points alone
//!   ([`runner::run_online_screening`]).
//!
//! Screened feature groups are removed permanently, so the per-iteration
//! cost shrinks with the active set.

// Guards like `!(x > 0.0)` deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod error;
pub mod losses;
pub mod oracle;
pub mod regularizers;
pub mod runner;
pub mod screening;
pub mod solvers;
pub mod synthetic;

pub use dataio::{Dataset, SampleStream, SparseRow};
pub use error::{Error, Result};
pub use losses::{LossKind, LossModel};
pub use regularizers::{GroupRegularizer, GroupStructure, RegKind};
pub use runner::{Algo, MetricsLog, MetricsRecord, RunConfig};
pub use screening::{SafeRegion, ScreenState, WeightRule};
pub use solvers::{ActiveModel, StepSchedule};
