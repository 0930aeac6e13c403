use serde::Serialize;
use sha2::{Digest, Sha256};
use tdguard_core::oracle::OracleError;
use tdguard_core::procedure::{Engine, EngineError, EvidencePayload, Prepared, ProcedureSpec};
use tdguard_core::{BoundTrace, StepOutcome};

use crate::event::{EventKind, SessionEvent};
use crate::ServiceError;

/// Evidence submitted but not yet decided.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pending {
    pub index: usize,
    pub payload: EvidencePayload,
    pub prepared: Prepared,
}

/// In-memory state of one session; a pure function of its event list.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub spec: ProcedureSpec,
    pub engine: Engine,
    pub pending: Option<Pending>,
    pub events: Vec<SessionEvent>,
    pub created_at: String,
    pub updated_at: String,
}

#[derive(Serialize)]
struct HashedState<'a> {
    engine: &'a Engine,
    pending: &'a Option<Pending>,
}

impl Session {
    /// Rebuilds a session by replaying its log from genesis.
    pub fn replay(id: &str, events: Vec<SessionEvent>) -> Result<Self, ServiceError> {
        let corrupt = |m: String| ServiceError::Corrupt(format!("session {id}: {m}"));
        let first = events.first().ok_or_else(|| corrupt("empty log".into()))?;
        let EventKind::Created { spec, .. } = &first.kind else {
            return Err(corrupt("log does not start with `created`".into()));
        };
        let engine = Engine::new(spec.clone()).map_err(|e| corrupt(e.to_string()))?;
        let mut s = Session {
            id: id.to_string(),
            spec: spec.clone(),
            engine,
            pending: None,
            events: Vec::with_capacity(events.len()),
            created_at: first.at.clone(),
            updated_at: first.at.clone(),
        };
        s.events.push(first.clone());
        for ev in events.into_iter().skip(1) {
            if ev.seq != s.head() + 1 {
                return Err(corrupt(format!("sequence gap before {}", ev.seq)));
            }
            s.apply(&ev).map_err(|m| corrupt(format!("event {}: {m}", ev.seq)))?;
            s.updated_at = ev.at.clone();
            s.events.push(ev);
        }
        Ok(s)
    }

    fn apply(&mut self, ev: &SessionEvent) -> Result<(), String> {
        match &ev.kind {
            EventKind::Created { .. } => Err("duplicate `created`".into()),
            EventKind::Evidence { index, payload, prepared } => {
                if self.pending.is_some() || *index != self.engine.t() + 1 {
                    return Err("evidence out of turn".into());
                }
                let again = self.engine.prepare(payload).map_err(|e| e.to_string())?;
                if &again != prepared {
                    return Err("stored evidence does not match its payload".into());
                }
                self.pending = Some(Pending { index: *index, payload: payload.clone(), prepared: again });
                Ok(())
            }
            EventKind::Decision { index, include, d, .. } => {
                let p = self.pending.take().ok_or("decision without evidence")?;
                if p.index != *index {
                    return Err("decision for the wrong index".into());
                }
                let out = self.engine.commit(&p.prepared, *include).map_err(|e| e.to_string())?;
                if out.d != *d {
                    return Err(format!("replayed d={} but log says {d}", out.d));
                }
                Ok(())
            }
            EventKind::BoundChange { d, .. } => {
                if *d != self.engine.bound() {
                    return Err("bound_change disagrees with replayed bound".into());
                }
                Ok(())
            }
            EventKind::Whatif { .. } => Ok(()),
        }
    }

    pub fn new(id: String, spec: ProcedureSpec, request_token: Option<String>, now: String) -> Result<Self, ServiceError> {
        spec.validate().map_err(invalid)?;
        let created = SessionEvent { seq: 1, at: now, kind: EventKind::Created { spec, request_token } };
        Session::replay(&id, vec![created])
    }

    pub fn head(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    fn event(&self, at: &str, kind: EventKind) -> SessionEvent {
        SessionEvent { seq: self.head() + 1, at: at.to_string(), kind }
    }

    /// Events that `submit_evidence` would append; state is not touched.
    pub fn plan_evidence(&self, payload: &EvidencePayload, at: &str) -> Result<Vec<SessionEvent>, ServiceError> {
        if let Some(p) = &self.pending {
            return Err(ServiceError::Conflict(format!("evidence for index {} is awaiting a decision", p.index)));
        }
        let prepared = self.engine.prepare(payload).map_err(invalid)?;
        let index = self.engine.t() + 1;
        Ok(vec![self.event(at, EventKind::Evidence { index, payload: payload.clone(), prepared })])
    }

    /// Events that `decide` would append, with the outcome.
    pub fn plan_decision(&self, include: bool, at: &str) -> Result<(Vec<SessionEvent>, StepOutcome), ServiceError> {
        let p = self.pending.as_ref().ok_or_else(|| ServiceError::Conflict("no evidence is pending".into()))?;
        let mut probe = self.engine.clone();
        let out = probe.commit(&p.prepared, include).map_err(invalid)?;
        let mut evs = vec![self.event(
            at,
            EventKind::Decision { index: p.index, include, d: out.d, query_size: out.query_size, statistic: out.statistic },
        )];
        if out.bound_incremented {
            let seq = evs[0].seq + 1;
            evs.push(SessionEvent {
                seq,
                at: at.to_string(),
                kind: EventKind::BoundChange { index: p.index, d: out.d, removed_index: out.removed_index },
            });
        }
        Ok((evs, out))
    }

    pub fn plan_whatif(&self, subset: &[usize], at: &str) -> Result<SessionEvent, ServiceError> {
        let mut subset = subset.to_vec();
        subset.sort_unstable();
        subset.dedup();
        let r = self.engine.what_if(&subset).map_err(|e| match e {
            EngineError::Oracle(OracleError::CapExceeded { t, cap }) => ServiceError::OracleCap { t, cap },
            other => invalid(other),
        })?;
        Ok(self.event(at, EventKind::Whatif { subset, bound: r.bound, witness: r.witness }))
    }

    /// Applies events produced by one of the `plan_*` methods.
    pub fn accept(&mut self, evs: &[SessionEvent]) -> Result<(), ServiceError> {
        for ev in evs {
            self.apply(ev).map_err(ServiceError::Internal)?;
            self.updated_at = ev.at.clone();
            self.events.push(ev.clone());
        }
        Ok(())
    }

    pub fn trace(&self) -> &BoundTrace {
        self.engine.trace()
    }

    /// SHA-256 over the guard state and the pending evidence.
    pub fn state_hash(&self) -> String {
        let bytes = serde_json::to_vec(&HashedState { engine: &self.engine, pending: &self.pending }).expect("state serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn events_since(&self, since: u64, limit: usize) -> &[SessionEvent] {
        let start = (since as usize).min(self.events.len());
        let end = (start + limit).min(self.events.len());
        &self.events[start..end]
    }
}

fn invalid(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Invalid(e.to_string())
}
