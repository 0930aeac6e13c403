use serde::{Deserialize, Serialize};
use tdguard_core::procedure::{EvidencePayload, Prepared, ProcedureSpec};
use tdguard_core::LogValue;

/// One entry of a session's append-only log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    /// RFC 3339, UTC.
    pub at: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Created {
        spec: ProcedureSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        request_token: Option<String>,
    },
    /// Evidence for index `index`, as submitted and as transformed.
    Evidence { index: usize, payload: EvidencePayload, prepared: Prepared },
    Decision { index: usize, include: bool, d: usize, query_size: usize, statistic: LogValue },
    BoundChange { index: usize, d: usize, removed_index: Option<usize> },
    Whatif { subset: Vec<usize>, bound: usize, witness: Vec<usize> },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::Created { .. } => "created",
            EventKind::Evidence { .. } => "evidence",
            EventKind::Decision { .. } => "decision",
            EventKind::BoundChange { .. } => "bound_change",
            EventKind::Whatif { .. } => "whatif",
        }
    }
}
