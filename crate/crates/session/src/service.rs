use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use tdguard_core::procedure::{EvidencePayload, ProcedureSpec};
use tdguard_core::{LogValue, StepOutcome};

use crate::event::SessionEvent;
use crate::session::{Pending, Session};
use crate::store::{read_meta, EventLog, SessionMeta};
use crate::ServiceError;

/// Largest page returned by [`SessionService::trace`].
pub const TRACE_PAGE: usize = 1000;

struct Entry {
    session: Session,
    log: EventLog,
}

/// All sessions under one data directory.
pub struct SessionService {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    tokens: Mutex<HashMap<String, String>>,
    recovered_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub spec: ProcedureSpec,
    pub t: usize,
    pub d: usize,
    pub query_size: usize,
    pub tdp_bound: f64,
    pub pending: bool,
    pub head: u64,
    pub state_hash: String,
    pub created_at: String,
    pub updated_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Created {
    pub id: String,
    /// False when an earlier request carried the same token.
    pub created: bool,
}

/// Pending evidence with its preview.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingView {
    pub index: usize,
    pub log_e: LogValue,
    pub unboosted_log_e: LogValue,
    pub transforms: Vec<String>,
    /// Truncation level `m_t` when boosting is enabled.
    pub boost_cutoff: Option<LogValue>,
    pub boost_factor: Option<f64>,
}

impl From<&Pending> for PendingView {
    fn from(p: &Pending) -> Self {
        Self {
            index: p.index,
            log_e: p.prepared.log_e,
            unboosted_log_e: p.prepared.unboosted_log_e,
            transforms: p.prepared.transforms.clone(),
            boost_cutoff: p.prepared.boost.map(|b| b.cutoff),
            boost_factor: p.prepared.boost.map(|b| b.factor),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfView {
    pub subset: Vec<usize>,
    pub bound: usize,
    pub witness: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRowView {
    pub t: usize,
    pub included: bool,
    pub d: usize,
    pub query_size: usize,
    pub tdp_bound: f64,
    pub log_statistic: LogValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePage {
    pub events: Vec<SessionEvent>,
    /// Cursor for the next poll.
    pub next_since: u64,
    pub head: u64,
    pub trace: Vec<TraceRowView>,
    pub pending: Option<PendingView>,
    pub state_hash: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn summary(s: &Session) -> SessionSummary {
    let (d, query_size) = (s.engine.bound(), s.engine.query_size());
    SessionSummary {
        id: s.id.clone(),
        spec: s.spec.clone(),
        t: s.engine.t(),
        d,
        query_size,
        tdp_bound: if query_size == 0 { 0.0 } else { d as f64 / query_size as f64 },
        pending: s.pending.is_some(),
        head: s.head(),
        state_hash: s.state_hash(),
        created_at: s.created_at.clone(),
        updated_at: s.updated_at.clone(),
    }
}

impl SessionService {
    /// Opens a data directory, replaying every session log in it.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        let mut tokens = HashMap::new();
        let mut recovered_bytes = 0;
        let mut metas: Vec<PathBuf> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_str().is_some_and(|s| s.ends_with(".meta.json")))
            .collect();
        metas.sort();
        for meta_path in metas {
            let meta = read_meta(&meta_path)?;
            let log_path = dir.join(format!("{}.jsonl", meta.id));
            if !log_path.exists() {
                continue;
            }
            let (log, rec) = EventLog::open(&log_path)?;
            recovered_bytes += rec.dropped_bytes;
            if rec.events.is_empty() {
                // Crashed between writing the metadata and the first event.
                continue;
            }
            let session = Session::replay(&meta.id, rec.events)?;
            if let Some(tok) = meta.request_token {
                tokens.insert(tok, meta.id.clone());
            }
            sessions.insert(meta.id, Arc::new(Mutex::new(Entry { session, log })));
        }
        Ok(Self { dir, sessions: RwLock::new(sessions), tokens: Mutex::new(tokens), recovered_bytes })
    }

    pub fn data_dir(&self) -> &Path {
        &self.dir
    }

    /// Bytes of torn log tails discarded while opening.
    pub fn recovered_bytes(&self) -> usize {
        self.recovered_bytes
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ServiceError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut Entry) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let e = self.entry(id)?;
        let mut guard = e.lock().unwrap();
        f(&mut guard)
    }

    pub fn create(&self, spec: ProcedureSpec, request_token: Option<String>) -> Result<Created, ServiceError> {
        let mut tokens = self.tokens.lock().unwrap();
        if let Some(id) = request_token.as_ref().and_then(|t| tokens.get(t)) {
            return Ok(Created { id: id.clone(), created: false });
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        let at = now();
        let session = Session::new(id.clone(), spec, request_token.clone(), at.clone())?;
        let meta = SessionMeta { id: id.clone(), created_at: at, request_token: request_token.clone() };
        let mut log = EventLog::create(&self.dir, &meta)?;
        log.append(&session.events[0])?;
        if let Some(tok) = request_token {
            tokens.insert(tok, id.clone());
        }
        self.sessions.write().unwrap().insert(id.clone(), Arc::new(Mutex::new(Entry { session, log })));
        Ok(Created { id, created: true })
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        let entries: Vec<_> = self.sessions.read().unwrap().values().cloned().collect();
        let mut out: Vec<_> = entries.iter().map(|e| summary(&e.lock().unwrap().session)).collect();
        out.sort_by(|a, b| (&a.created_at, &a.id).cmp(&(&b.created_at, &b.id)));
        out
    }

    pub fn get(&self, id: &str) -> Result<SessionSummary, ServiceError> {
        self.with(id, |e| Ok(summary(&e.session)))
    }

    pub fn state_hash(&self, id: &str) -> Result<String, ServiceError> {
        self.with(id, |e| Ok(e.session.state_hash()))
    }

    fn commit(e: &mut Entry, evs: &[SessionEvent]) -> Result<(), ServiceError> {
        for ev in evs {
            e.log.append(ev)?;
        }
        e.session.accept(evs)
    }

    pub fn submit_evidence(&self, id: &str, payload: &EvidencePayload) -> Result<PendingView, ServiceError> {
        self.with(id, |e| {
            let evs = e.session.plan_evidence(payload, &now())?;
            Self::commit(e, &evs)?;
            Ok(PendingView::from(e.session.pending.as_ref().expect("evidence is pending")))
        })
    }

    pub fn decide(&self, id: &str, include: bool) -> Result<StepOutcome, ServiceError> {
        self.with(id, |e| {
            let (evs, out) = e.session.plan_decision(include, &now())?;
            Self::commit(e, &evs)?;
            Ok(out)
        })
    }

    pub fn what_if(&self, id: &str, subset: &[usize]) -> Result<WhatIfView, ServiceError> {
        self.with(id, |e| {
            let ev = e.session.plan_whatif(subset, &now())?;
            Self::commit(e, std::slice::from_ref(&ev))?;
            match ev.kind {
                crate::event::EventKind::Whatif { subset, bound, witness } => Ok(WhatIfView { subset, bound, witness }),
                _ => unreachable!(),
            }
        })
    }

    pub fn trace(&self, id: &str, since: u64) -> Result<TracePage, ServiceError> {
        self.with(id, |e| {
            let s = &e.session;
            let events = s.events_since(since, TRACE_PAGE).to_vec();
            let next_since = events.last().map_or(since.min(s.head()), |ev| ev.seq);
            Ok(TracePage {
                events,
                next_since,
                head: s.head(),
                trace: s
                    .trace()
                    .rows
                    .iter()
                    .map(|r| TraceRowView {
                        t: r.t,
                        included: r.included,
                        d: r.d,
                        query_size: r.query_size,
                        tdp_bound: r.tdp_bound,
                        log_statistic: r.log_statistic,
                    })
                    .collect(),
                pending: s.pending.as_ref().map(PendingView::from),
                state_hash: s.state_hash(),
            })
        })
    }

    pub fn export_csv(&self, id: &str) -> Result<String, ServiceError> {
        self.with(id, |e| Ok(e.session.trace().to_csv_string(None)))
    }

    /// Full event list, for replay checks.
    pub fn events(&self, id: &str) -> Result<Vec<SessionEvent>, ServiceError> {
        self.with(id, |e| Ok(e.session.events.clone()))
    }

    pub fn log_path(&self, id: &str) -> Result<PathBuf, ServiceError> {
        self.with(id, |e| Ok(e.log.path().to_path_buf()))
    }
}
