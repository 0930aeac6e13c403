//! Streaming shortcuts for the online closed procedure.
//!
//! Each guard consumes one e-value per step together with the caller's
//! decision whether the index joins the query set, and maintains a lower
//! bound `d_t` on the number of false hypotheses inside the query set that
//! holds simultaneously over all `t` with probability at least `1 - alpha`.
//!
//! | guard                 | evidence assumption              | intersection statistic       |
//! |-----------------------|----------------------------------|------------------------------|
//! | [`ShortcutGuard`] (product) | sequential e-values        | running product (Ville)       |
//! | [`ShortcutGuard`] (average) | exchangeable null e-values | running average (Ville)       |
//! | [`ArbEGuard`]         | arbitrary dependence             | rank-weighted sum (Markov)    |
//! | [`MixtureGuard`]      | sequential, several parameters   | weighted mean of products     |

mod arbe;
mod mixture;
mod shortcut;
mod trace;

pub use arbe::ArbEGuard;
pub use mixture::MixtureGuard;
pub use shortcut::{GuardKind, ShortcutGuard};
pub use trace::{BoundTrace, TraceRow};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::LogValue;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuardError {
    #[error("expected {expected} component e-values, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("invalid alpha {0}: must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error("component e-values of a non-queried index straddle one; cannot decide whether it lowers the statistic")]
    MixedSignExclusion,
    #[error("invalid mixture weights: {0}")]
    InvalidWeights(&'static str),
    #[error(transparent)]
    Evalue(#[from] crate::evalue::EvalueError),
}

/// Result of a single guard step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: usize,
    pub d: usize,
    pub included: bool,
    pub bound_incremented: bool,
    /// Index moved out of the active set when the bound was incremented.
    pub removed_index: Option<usize>,
    /// Statistic compared against `1/alpha` (log domain). For a non-queried
    /// step this is the statistic after the index was filed away.
    pub statistic: LogValue,
    pub query_size: usize,
}

impl StepOutcome {
    /// `d_t / |S_t|`, zero for an empty query set.
    pub fn tdp_bound(&self) -> f64 {
        if self.query_size == 0 {
            0.0
        } else {
            self.d as f64 / self.query_size as f64
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<(), GuardError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(GuardError::InvalidAlpha(alpha))
    }
}
