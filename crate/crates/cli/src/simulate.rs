use std::fs;
use std::path::Path;

use serde_json::Value;
use sha2::{Digest, Sha256};
use tdguard_core::sim::{self, SimConfig, SimMethod};

use crate::{exit, Failure, SimulateArgs};

const CSV_NAME: &str = "simulation.csv";
const MANIFEST_NAME: &str = "manifest.json";

fn config_error(m: impl std::fmt::Display) -> Failure {
    Failure::new(exit::CONFIG, format!("config error: {m}"))
}

/// Defaults, then the config file, then flags.
pub fn resolve(args: &SimulateArgs) -> Result<SimConfig, Failure> {
    let mut cfg = SimConfig::default();
    if args.full {
        cfg.n = 1000;
        cfg.trials = 1000;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
        let mut v: Value = serde_json::from_str(&text).map_err(config_error)?;
        // A run manifest carries its config under `config`.
        if let Some(inner) = v.get("config").cloned() {
            v = inner;
        }
        let mut base = serde_json::to_value(&cfg).expect("config serializes");
        let (Value::Object(base_map), Value::Object(over)) = (&mut base, v) else {
            return Err(config_error("config file must hold a JSON object"));
        };
        base_map.extend(over);
        cfg = serde_json::from_value(base).map_err(config_error)?;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(m) = &args.mu_a {
        cfg.mu_a = m.clone();
    }
    if let Some(p) = &args.pi_a {
        cfg.pi_a = p.clone();
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(ms) = &args.methods {
        cfg.methods = ms.iter().map(|m| m.parse::<SimMethod>()).collect::<Result<_, _>>().map_err(config_error)?;
    }
    cfg.validate().map_err(config_error)?;
    Ok(cfg)
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::new(exit::FAILURE, format!("{}: {e}", path.display())))
}

pub fn run(args: SimulateArgs) -> Result<(), Failure> {
    let cfg = resolve(&args)?;
    if args.jobs == Some(0) {
        return Err(config_error("--jobs must be at least 1"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = args.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Failure::new(exit::FAILURE, e.to_string()))?;
    let summary = pool.install(|| sim::run_grid(&cfg)).map_err(|e| Failure::new(exit::FAILURE, e.to_string()))?;

    fs::create_dir_all(&args.out).map_err(|e| Failure::new(exit::FAILURE, format!("{}: {e}", args.out.display())))?;
    let csv = summary.to_csv_string();
    write(&args.out.join(CSV_NAME), csv.as_bytes())?;
    let mut manifest = sim::manifest(&cfg, &tool_version());
    manifest["outputs"] = serde_json::json!({ CSV_NAME: { "sha256": digest(csv.as_bytes()) } });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write(&args.out.join(MANIFEST_NAME), text.as_bytes())?;
    for cell in &summary.cells {
        for c in &cell.curves {
            eprintln!(
                "mu_A={} pi_A={} {:<14} final TDP bound {:.4}  coverage {:.4}",
                cell.mu_a,
                cell.pi_a,
                c.method,
                c.final_tdp_bound(),
                c.coverage
            );
        }
    }
    Ok(())
}

fn tool_version() -> String {
    match option_env!("TDGUARD_GIT_DESCRIBE") {
        Some(g) => format!("{} ({g})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}
