//! Live guard sessions: evidence in, decision in, bound out. Every session
//! is an append-only event log on disk and its state is whatever replaying
//! that log produces.

pub mod event;
mod http;
mod service;
pub mod session;
pub mod store;

use thiserror::Error;

pub use event::{EventKind, SessionEvent};
pub use http::router;
pub use service::{Created, PendingView, SessionService, SessionSummary, TracePage, TraceRowView, WhatIfView, TRACE_PAGE};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    Invalid(String),
    #[error("unknown session {0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("oracle cap: what-if needs t <= {cap}, session is at t = {t}")]
    OracleCap { t: usize, cap: usize },
    #[error("corrupt log: {0}")]
    Corrupt(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
