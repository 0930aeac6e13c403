//! Batch form of the session flow. Each JSONL line carries one index:
//!
//! ```text
//! {"index": 1, "e": 5.0, "include": true}
//! {"p": 0.03, "rule": "p<=alpha"}
//! {"p": 0.2, "transform": {"name": "calibrator", "x": 0.1}, "include": false}
//! {"evidence": {"kind": "gaussian", "x": 2.1, "mu0": 0, "mu1": 3}, "rule": "always"}
//! ```
//!
//! Exactly one of `e`, `log_e`, `p`, `evidence`; exactly one of `include`, `rule`.
//! Rules: `always`, `never`, `p<=alpha`, `p<=X`, `e>=X`.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};

use serde::Deserialize;
use tdguard_core::evalue::GammaWeights;
use tdguard_core::guard::TraceRow;
use tdguard_core::procedure::{Engine, EvidencePayload, MethodSpec, PTransform, ProcedureSpec};
use tdguard_core::LogValue;

use crate::{exit, Failure, GuardMethod, ReplayArgs};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    #[serde(default)]
    index: Option<usize>,
    #[serde(default)]
    e: Option<f64>,
    #[serde(default)]
    log_e: Option<LogValue>,
    #[serde(default)]
    p: Option<f64>,
    #[serde(default)]
    transform: Option<PTransform>,
    #[serde(default)]
    evidence: Option<EvidencePayload>,
    #[serde(default)]
    include: Option<bool>,
    #[serde(default)]
    rule: Option<String>,
}

pub fn spec_for(method: GuardMethod, alpha: f64, boosting: bool) -> ProcedureSpec {
    let m = match method {
        GuardMethod::SeqEGuard => MethodSpec::SeqEGuard,
        GuardMethod::ExeGuard => MethodSpec::ExeGuard,
        GuardMethod::ArbeGuard => MethodSpec::ArbeGuard { gamma: GammaWeights::default() },
        GuardMethod::MOnlineSimple => MethodSpec::MOnlineSimple { a_max: tdguard_core::pvalue::DEFAULT_A_MAX },
        GuardMethod::MOnlineFreedman => MethodSpec::MOnlineFreedman { j_max: tdguard_core::pvalue::DEFAULT_J_MAX },
    };
    ProcedureSpec { boosting, ..ProcedureSpec::new(m, alpha) }
}

fn is_mixture(spec: &ProcedureSpec) -> bool {
    matches!(spec.method, MethodSpec::MOnlineSimple { .. } | MethodSpec::MOnlineFreedman { .. })
}

/// Evidence payload and inclusion decision of one line.
fn interpret(line: &Line, spec: &ProcedureSpec, expected: usize) -> Result<(EvidencePayload, bool), String> {
    if let Some(i) = line.index {
        if i != expected {
            return Err(format!("index {i} out of order (expected {expected})"));
        }
    }
    let given = [line.e.is_some(), line.log_e.is_some(), line.p.is_some(), line.evidence.is_some()];
    if given.iter().filter(|&&g| g).count() != 1 {
        return Err("need exactly one of `e`, `log_e`, `p`, `evidence`".into());
    }
    if line.transform.is_some() && line.p.is_none() {
        return Err("`transform` applies to `p` only".into());
    }
    let payload = if let Some(value) = line.e {
        EvidencePayload::E { value }
    } else if let Some(log_e) = line.log_e {
        EvidencePayload::LogE { log_e }
    } else if let Some(p) = line.p {
        let transform = line.transform.clone().unwrap_or(if is_mixture(spec) {
            PTransform::Level { alpha_i: spec.alpha }
        } else {
            PTransform::AdmissibleOnlineSimple { alpha_i: spec.alpha, a: 1.0 }
        });
        EvidencePayload::P { p, transform }
    } else {
        line.evidence.clone().expect("one evidence field is set")
    };
    let include = match (line.include, &line.rule) {
        (Some(b), None) => b,
        (None, Some(rule)) => apply_rule(rule, &payload, spec.alpha)?,
        _ => return Err("need exactly one of `include`, `rule`".into()),
    };
    Ok((payload, include))
}

fn apply_rule(rule: &str, payload: &EvidencePayload, alpha: f64) -> Result<bool, String> {
    let rule = rule.replace(' ', "");
    match rule.as_str() {
        "always" => return Ok(true),
        "never" => return Ok(false),
        _ => {}
    }
    let num = |s: &str| -> Result<f64, String> {
        if s == "alpha" {
            Ok(alpha)
        } else {
            s.parse().map_err(|_| format!("bad rule threshold `{s}`"))
        }
    };
    if let Some(x) = rule.strip_prefix("p<=") {
        return match payload {
            EvidencePayload::P { p, .. } => Ok(*p <= num(x)?),
            _ => Err("rule `p<=...` needs a p-value".into()),
        };
    }
    if let Some(x) = rule.strip_prefix("e>=") {
        return match payload {
            EvidencePayload::E { value } => Ok(*value >= num(x)?),
            EvidencePayload::LogE { log_e } => Ok(log_e.value() >= num(x)?),
            _ => Err("rule `e>=...` needs an e-value".into()),
        };
    }
    Err(format!("unknown rule `{rule}`"))
}

pub fn run(args: ReplayArgs) -> Result<(), Failure> {
    let spec = spec_for(args.method, args.alpha, args.boosting);
    let mut engine = Engine::new(spec.clone()).map_err(|e| Failure::new(exit::CONFIG, e.to_string()))?;
    let input: Box<dyn BufRead> = if args.file.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin()))
    } else {
        let f = File::open(&args.file).map_err(|e| Failure::new(exit::FAILURE, format!("{}: {e}", args.file.display())))?;
        Box::new(BufReader::new(f))
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let label = args.label.as_deref();
    match label {
        Some(_) => writeln!(out, "method,{}", TraceRow::CSV_HEADER)?,
        None => writeln!(out, "{}", TraceRow::CSV_HEADER)?,
    }
    out.flush()?;
    for (k, line) in input.lines().enumerate() {
        let lineno = k + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |m: String| Failure::new(exit::MALFORMED, format!("line {lineno}: {m}"));
        let parsed: Line = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let (payload, include) = interpret(&parsed, &spec, engine.t() + 1).map_err(malformed)?;
        let outcome = engine.step(&payload, include).map_err(|e| malformed(e.to_string()))?;
        let row = TraceRow::from(&outcome);
        match label {
            Some(m) => writeln!(out, "{m},{}", row.to_csv())?,
            None => writeln!(out, "{}", row.to_csv())?,
        }
        out.flush()?;
    }
    Ok(())
}
