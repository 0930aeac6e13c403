//! Online true discovery guarantees from e-values.
//!
//! The building blocks are streaming guards that turn a sequence of
//! e-values and query decisions into simultaneous lower bounds on the
//! number of false hypotheses among the queried ones, a brute-force
//! closed-testing oracle to check them against, e-value constructions for
//! p-values and likelihood ratios, and a seeded simulation harness.

pub mod evalue;
pub mod guard;
pub mod numerics;
pub mod oracle;
pub mod procedure;
pub mod pvalue;
pub mod sim;

pub use guard::{ArbEGuard, BoundTrace, GuardError, GuardKind, MixtureGuard, ShortcutGuard, StepOutcome, TraceRow};
pub use numerics::LogValue;
