//! WebAssembly entry points for the static demo page. Every function takes
//! and returns JSON text so the page needs no generated bindings beyond
//! strings.

use serde::{Deserialize, Serialize};
use tdguard_core::evalue::{boost_factor_hedged_lognormal, boost_factor_lognormal, GammaWeights};
use tdguard_core::oracle::{closure_bound, IntersectionFamily};
use tdguard_core::procedure::{Engine, EvidencePayload, MethodSpec, ProcedureSpec};
use tdguard_core::{LogValue, TraceRow};
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Method {
    SeqEGuard,
    ExeGuard,
    ArbeGuard,
}

#[derive(Deserialize)]
struct TraceRequest {
    method: Method,
    alpha: f64,
    evalues: Vec<f64>,
    /// Defaults to including every index.
    #[serde(default)]
    included: Option<Vec<bool>>,
}

#[derive(Serialize)]
struct TraceResponse {
    rows: Vec<TraceRow>,
    removed: Vec<Option<usize>>,
}

fn spec(method: &Method, alpha: f64) -> ProcedureSpec {
    let m = match method {
        Method::SeqEGuard => MethodSpec::SeqEGuard,
        Method::ExeGuard => MethodSpec::ExeGuard,
        Method::ArbeGuard => MethodSpec::ArbeGuard { gamma: GammaWeights::InverseSquare },
    };
    ProcedureSpec::new(m, alpha)
}

/// Runs a guard over a stream of e-values.
pub fn guard_trace_json(request: &str) -> Result<String, String> {
    let req: TraceRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let included = req.included.unwrap_or_else(|| vec![true; req.evalues.len()]);
    if included.len() != req.evalues.len() {
        return Err("`included` and `evalues` differ in length".into());
    }
    let mut eng = Engine::new(spec(&req.method, req.alpha)).map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    let mut removed = Vec::new();
    for (&value, &inc) in req.evalues.iter().zip(&included) {
        let out = eng.step(&EvidencePayload::E { value }, inc).map_err(|e| e.to_string())?;
        rows.push(TraceRow::from(&out));
        removed.push(out.removed_index);
    }
    Ok(serde_json::to_string(&TraceResponse { rows, removed }).expect("response serializes"))
}

#[derive(Deserialize)]
struct BoostRequest {
    delta: f64,
    /// Hedging fraction; absent or 1 means the plain likelihood ratio.
    #[serde(default)]
    lambda: Option<f64>,
    m_min: f64,
    m_max: f64,
    points: usize,
}

#[derive(Serialize)]
struct BoostPoint {
    m: f64,
    factor: f64,
}

/// Boosting factor over a log-spaced grid of truncation levels.
pub fn boost_curve_json(request: &str) -> Result<String, String> {
    let req: BoostRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    if !(req.m_min > 1.0 && req.m_max >= req.m_min && req.points >= 2 && req.points <= 10_000) {
        return Err("need 1 < m_min <= m_max and 2 <= points <= 10000".into());
    }
    let (lo, hi) = (req.m_min.ln(), req.m_max.ln());
    let pts: Vec<BoostPoint> = (0..req.points)
        .map(|k| {
            let m = (lo + (hi - lo) * k as f64 / (req.points - 1) as f64).exp();
            let factor = match req.lambda {
                Some(l) if l < 1.0 => boost_factor_hedged_lognormal(req.delta, l, m),
                _ => boost_factor_lognormal(req.delta, m),
            };
            BoostPoint { m, factor }
        })
        .collect();
    Ok(serde_json::to_string(&pts).expect("points serialize"))
}

#[derive(Deserialize)]
struct WhatIfRequest {
    method: Method,
    alpha: f64,
    evalues: Vec<f64>,
    subset: Vec<usize>,
}

/// Closed-testing bound for an arbitrary subset (at most 20 e-values).
pub fn what_if_json(request: &str) -> Result<String, String> {
    let req: WhatIfRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let alpha = req.alpha;
    let family = match req.method {
        Method::SeqEGuard => IntersectionFamily::Product { alpha },
        Method::ExeGuard => IntersectionFamily::Average { alpha },
        Method::ArbeGuard => IntersectionFamily::Weighted { alpha, gamma: GammaWeights::InverseSquare },
    };
    if let Some(v) = req.evalues.iter().find(|v| !(**v >= 0.0)) {
        return Err(format!("e-value {v} is not nonnegative"));
    }
    let logs: Vec<LogValue> = req.evalues.iter().map(|&v| LogValue::from_value(v)).collect();
    let r = closure_bound(&family, &logs, &req.subset).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&r).expect("result serializes"))
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn guard_trace(request: &str) -> Result<String, JsError> {
    js(guard_trace_json(request))
}

#[wasm_bindgen]
pub fn boost_curve(request: &str) -> Result<String, JsError> {
    js(boost_curve_json(request))
}

#[wasm_bindgen]
pub fn what_if(request: &str) -> Result<String, JsError> {
    js(what_if_json(request))
}
