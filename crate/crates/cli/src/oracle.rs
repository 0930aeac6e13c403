use std::fs;
use std::io::{self, Read};

use serde_json::Value;
use tdguard_core::evalue::GammaWeights;
use tdguard_core::oracle::{closure_bound, IntersectionFamily, OracleError, MAX_ORACLE_T};
use tdguard_core::LogValue;

use crate::{exit, Failure, Family, OracleArgs};

/// A line is a bare number, or an object with `e` or `log_e`.
fn parse_line(line: &str) -> Result<LogValue, String> {
    if let Ok(v) = line.parse::<f64>() {
        return e_value(v);
    }
    let v: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
    if let Some(e) = v.get("e").and_then(Value::as_f64) {
        return e_value(e);
    }
    if let Some(l) = v.get("log_e") {
        return match l {
            Value::String(s) => s.parse().map_err(|e: tdguard_core::numerics::NumericsError| e.to_string()),
            Value::Number(n) => n.as_f64().map(LogValue::from_log).ok_or_else(|| "bad `log_e`".to_string()),
            _ => Err("`log_e` must be a number or a decimal string".into()),
        };
    }
    Err("expected a number or an object with `e` or `log_e`".into())
}

fn e_value(v: f64) -> Result<LogValue, String> {
    if v >= 0.0 {
        Ok(LogValue::from_value(v))
    } else {
        Err(format!("e-value {v} is negative"))
    }
}

pub fn run(args: OracleArgs) -> Result<(), Failure> {
    let text = if args.file.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin().read_to_string(&mut s)?;
        s
    } else {
        fs::read_to_string(&args.file).map_err(|e| Failure::new(exit::FAILURE, format!("{}: {e}", args.file.display())))?
    };
    let mut evalues = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        evalues.push(parse_line(line).map_err(|m| Failure::new(exit::MALFORMED, format!("line {}: {m}", k + 1)))?);
    }
    if evalues.len() > MAX_ORACLE_T {
        return Err(Failure::new(
            exit::ORACLE_CAP,
            format!("oracle cap: {} e-values given, at most {MAX_ORACLE_T} supported", evalues.len()),
        ));
    }
    let alpha = args.alpha;
    let family = match args.family {
        Family::Product => IntersectionFamily::Product { alpha },
        Family::Average => IntersectionFamily::Average { alpha },
        Family::Weighted => IntersectionFamily::Weighted { alpha, gamma: GammaWeights::default() },
    };
    let subset = match &args.subset {
        None => (1..=evalues.len()).collect(),
        Some(s) => parse_subset(s)?,
    };
    let r = closure_bound(&family, &evalues, &subset).map_err(|e| match e {
        OracleError::CapExceeded { .. } => Failure::new(exit::ORACLE_CAP, e.to_string()),
        other => Failure::new(exit::CONFIG, other.to_string()),
    })?;
    println!("{}", r.bound);
    if args.verbose {
        let w: Vec<String> = r.witness.iter().map(ToString::to_string).collect();
        println!("minimizing I: {{{}}}", w.join(","));
    }
    Ok(())
}

fn parse_subset(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse().map_err(|_| Failure::new(exit::CONFIG, format!("bad subset index `{x}`"))))
        .collect()
}
