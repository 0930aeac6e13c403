//! Gaussian simulation harness.
//!
//! Each trial draws `X_i ~ N(mu_A * 1{alternative}, 1)` with alternatives
//! occurring independently with probability `pi_A`, computes `p_i = Phi(-X_i)`
//! and queries `S_t = {i <= t : p_i <= alpha}`. Every method sees the same
//! data within a trial. Trials are seeded independently and reduced in trial
//! order, so results do not depend on the number of threads.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalue::gro_gaussian_evalue;
use crate::numerics::{std_normal_cdf, LogValue};
use crate::procedure::{Engine, EvidencePayload, HedgeChoice, MethodSpec, PTransform, ProcedureSpec};
use crate::pvalue::{self, DEFAULT_A_MAX, DEFAULT_J_MAX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown method `{0}`")]
    UnknownMethod(String),
    #[error("method {method} failed: {message}")]
    Method { method: SimMethod, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMethod {
    /// Original online-simple bound.
    OnlineSimple,
    ClosedOs,
    AdmissibleOs,
    Gro,
    HedgedGro,
    BoostedGro,
    Calibrated,
    MOs,
    UOs,
    MFreedman,
    UFreedman,
}

impl SimMethod {
    pub const ALL: [SimMethod; 11] = [
        SimMethod::OnlineSimple,
        SimMethod::ClosedOs,
        SimMethod::AdmissibleOs,
        SimMethod::Gro,
        SimMethod::HedgedGro,
        SimMethod::BoostedGro,
        SimMethod::Calibrated,
        SimMethod::MOs,
        SimMethod::UOs,
        SimMethod::MFreedman,
        SimMethod::UFreedman,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimMethod::OnlineSimple => "online-simple",
            SimMethod::ClosedOs => "closed-os",
            SimMethod::AdmissibleOs => "admissible-os",
            SimMethod::Gro => "gro",
            SimMethod::HedgedGro => "hedged-gro",
            SimMethod::BoostedGro => "boosted-gro",
            SimMethod::Calibrated => "calibrated",
            SimMethod::MOs => "m-os",
            SimMethod::UOs => "u-os",
            SimMethod::MFreedman => "m-freedman",
            SimMethod::UFreedman => "u-freedman",
        }
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SimMethod {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SimMethod::ALL
            .iter()
            .copied()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| SimError::UnknownMethod(s.to_string()))
    }
}

fn default_a() -> f64 {
    3.0
}

fn default_x() -> f64 {
    0.1
}

fn default_a_max() -> usize {
    DEFAULT_A_MAX
}

fn default_j_max() -> usize {
    DEFAULT_J_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub mu_a: Vec<f64>,
    pub pi_a: Vec<f64>,
    pub alpha: f64,
    pub trials: usize,
    pub seed: u64,
    pub methods: Vec<SimMethod>,
    /// Online-simple parameter `a` (constant level `alpha_i = alpha`).
    #[serde(default = "default_a")]
    pub a: f64,
    /// Calibrator parameter `x`.
    #[serde(default = "default_x")]
    pub calibrator_x: f64,
    #[serde(default = "default_a_max")]
    pub a_max: usize,
    #[serde(default = "default_j_max")]
    pub j_max: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 200,
            mu_a: vec![2.0, 3.0, 4.0],
            pi_a: vec![0.1, 0.3, 0.5],
            alpha: 0.1,
            trials: 500,
            seed: 1,
            methods: vec![SimMethod::AdmissibleOs, SimMethod::BoostedGro, SimMethod::Calibrated],
            a: default_a(),
            calibrator_x: default_x(),
            a_max: default_a_max(),
            j_max: default_j_max(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        if self.n == 0 {
            return err("n must be at least 1".into());
        }
        if self.trials == 0 {
            return err("trials must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err(format!("alpha {} must lie in (0, 1)", self.alpha));
        }
        if self.mu_a.is_empty() || self.pi_a.is_empty() || self.methods.is_empty() {
            return err("mu_A, pi_A and methods must be nonempty".into());
        }
        if let Some(p) = self.pi_a.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return err(format!("pi_A {p} must lie in (0, 1)"));
        }
        if let Some(m) = self.mu_a.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return err(format!("mu_A {m} must be positive"));
        }
        if !(self.a > 0.0) || !(self.calibrator_x > 0.0) || self.a_max == 0 {
            return err("a, calibrator_x and a_max must be positive".into());
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the generator for one trial.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed ^ splitmix64(trial))
}

/// One simulated data stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
    pub alternative: Vec<bool>,
}

pub fn draw_stream(n: usize, mu_a: f64, pi_a: f64, seed: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Stream { x: Vec::with_capacity(n), p: Vec::with_capacity(n), alternative: Vec::with_capacity(n) };
    for _ in 0..n {
        let alt = rng.random_bool(pi_a);
        let z: f64 = rng.sample(StandardNormal);
        let x = z + if alt { mu_a } else { 0.0 };
        out.x.push(x);
        out.p.push(std_normal_cdf(-x));
        out.alternative.push(alt);
    }
    out
}

fn engine_path(spec: ProcedureSpec, stream: &Stream, alpha: f64, payload: impl Fn(usize) -> EvidencePayload) -> Result<Vec<usize>, String> {
    let mut eng = Engine::new(spec).map_err(|e| e.to_string())?;
    (0..stream.p.len())
        .map(|i| eng.step(&payload(i), stream.p[i] <= alpha).map(|o| o.d).map_err(|e| e.to_string()))
        .collect()
}

/// Bound path `d_1..d_n` of one method on one stream.
pub fn method_path(method: SimMethod, stream: &Stream, cfg: &SimConfig, mu_a: f64) -> Result<Vec<usize>, SimError> {
    let alpha = cfg.alpha;
    let levels = vec![alpha; stream.p.len()];
    let ps = &stream.p;
    let wrap = |e: String| SimError::Method { method, message: e };
    let pv = |r: Result<Vec<usize>, pvalue::PvalueError>| r.map_err(|e| wrap(e.to_string()));
    let seq = ProcedureSpec::new(MethodSpec::SeqEGuard, alpha);
    let gaussian = |hedge| move |i: usize| EvidencePayload::Gaussian { x: stream.x[i], mu0: 0.0, mu1: mu_a, hedge };
    match method {
        SimMethod::OnlineSimple => pv(pvalue::baseline_online_simple(ps, &levels, alpha, cfg.a)),
        SimMethod::ClosedOs => pv(pvalue::closed_online_simple(ps, &levels, alpha, cfg.a).map(|t| t.bounds())),
        SimMethod::AdmissibleOs => pv(pvalue::admissible_online_simple(ps, &levels, alpha, cfg.a).map(|t| t.bounds())),
        SimMethod::MOs => pv(pvalue::m_online_simple(ps, &levels, alpha, cfg.a_max).map(|t| t.bounds())),
        SimMethod::UOs => pv(pvalue::u_online_simple(ps, &levels, alpha, cfg.a_max)),
        SimMethod::MFreedman => pv(pvalue::m_online_freedman(ps, &levels, alpha, cfg.j_max).map(|t| t.bounds())),
        SimMethod::UFreedman => pv(pvalue::u_online_freedman(ps, &levels, alpha, cfg.j_max)),
        SimMethod::Gro => engine_path(seq, stream, alpha, gaussian(None)).map_err(wrap),
        SimMethod::HedgedGro => engine_path(seq, stream, alpha, gaussian(Some(HedgeChoice::Adaptive))).map_err(wrap),
        SimMethod::BoostedGro => {
            engine_path(seq.with_boosting(), stream, alpha, gaussian(Some(HedgeChoice::Adaptive))).map_err(wrap)
        }
        SimMethod::Calibrated => {
            let x = cfg.calibrator_x;
            engine_path(seq.with_boosting(), stream, alpha, |i| EvidencePayload::P {
                p: stream.p[i],
                transform: PTransform::Calibrator { x },
            })
            .map_err(wrap)
        }
    }
}

/// Per-trial result for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub d: Vec<usize>,
    pub query_size: Vec<usize>,
    pub true_count: Vec<usize>,
    pub violation: bool,
}

impl TrialResult {
    pub fn new(d: Vec<usize>, stream: &Stream, alpha: f64) -> Self {
        let mut query_size = Vec::with_capacity(d.len());
        let mut true_count = Vec::with_capacity(d.len());
        let (mut s, mut f) = (0, 0);
        for i in 0..d.len() {
            if stream.p[i] <= alpha {
                s += 1;
                f += usize::from(stream.alternative[i]);
            }
            query_size.push(s);
            true_count.push(f);
        }
        let violation = d.iter().zip(&true_count).any(|(d, f)| d > f);
        Self { d, query_size, true_count, violation }
    }

    pub fn tdp_bound(&self, t: usize) -> f64 {
        ratio(self.d[t], self.query_size[t])
    }

    pub fn true_tdp(&self, t: usize) -> f64 {
        ratio(self.true_count[t], self.query_size[t])
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Aggregated curves of one method in one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: SimMethod,
    pub mean_tdp_bound: Vec<f64>,
    pub coverage: f64,
}

impl MethodCurve {
    pub fn final_tdp_bound(&self) -> f64 {
        self.mean_tdp_bound.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mu_a: f64,
    pub pi_a: f64,
    pub true_tdp: Vec<f64>,
    pub curves: Vec<MethodCurve>,
}

impl CellSummary {
    pub fn curve(&self, method: SimMethod) -> Option<&MethodCurve> {
        self.curves.iter().find(|c| c.method == method)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub cells: Vec<CellSummary>,
}

impl SimSummary {
    pub fn cell(&self, mu_a: f64, pi_a: f64) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.mu_a == mu_a && c.pi_a == pi_a)
    }

    pub const CSV_HEADER: &'static str = "method,mu_A,pi_A,t,mean_tdp_bound,true_tdp,coverage";

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for cell in &self.cells {
            for curve in &cell.curves {
                for (t, m) in curve.mean_tdp_bound.iter().enumerate() {
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{}",
                        curve.method,
                        cell.mu_a,
                        cell.pi_a,
                        t + 1,
                        m,
                        cell.true_tdp[t],
                        curve.coverage
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

#[cfg(feature = "parallel")]
fn map_trials<T: Send>(trials: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    (0..trials).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_trials<T>(trials: usize, f: impl Fn(usize) -> T) -> Vec<T> {
    (0..trials).map(f).collect()
}

/// Runs one grid cell.
pub fn run_cell(cfg: &SimConfig, mu_a: f64, pi_a: f64) -> Result<CellSummary, SimError> {
    let n = cfg.n;
    let per_trial: Vec<Result<Vec<TrialResult>, SimError>> = map_trials(cfg.trials, |trial| {
        let stream = draw_stream(n, mu_a, pi_a, trial_seed(cfg.seed, trial as u64));
        cfg.methods
            .iter()
            .map(|&m| method_path(m, &stream, cfg, mu_a).map(|d| TrialResult::new(d, &stream, cfg.alpha)))
            .collect()
    });
    let mut sums = vec![vec![0.0f64; n]; cfg.methods.len()];
    let mut covered = vec![0usize; cfg.methods.len()];
    let mut true_sum = vec![0.0f64; n];
    for results in per_trial {
        let results = results?;
        for t in 0..n {
            true_sum[t] += results[0].true_tdp(t);
        }
        for (k, r) in results.iter().enumerate() {
            for t in 0..n {
                sums[k][t] += r.tdp_bound(t);
            }
            covered[k] += usize::from(!r.violation);
        }
    }
    let trials = cfg.trials as f64;
    Ok(CellSummary {
        mu_a,
        pi_a,
        true_tdp: true_sum.into_iter().map(|s| s / trials).collect(),
        curves: cfg
            .methods
            .iter()
            .enumerate()
            .map(|(k, &method)| MethodCurve {
                method,
                mean_tdp_bound: sums[k].iter().map(|s| s / trials).collect(),
                coverage: covered[k] as f64 / trials,
            })
            .collect(),
    })
}

/// Runs every `(mu_A, pi_A)` cell of the grid.
pub fn run_grid(cfg: &SimConfig) -> Result<SimSummary, SimError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &mu in &cfg.mu_a {
        for &pi in &cfg.pi_a {
            cells.push(run_cell(cfg, mu, pi)?);
        }
    }
    Ok(SimSummary { cells })
}

/// Mean over trials of the hedging estimate `tau_hat_i`, `i = 1..n`.
pub fn tau_hat_trace(n: usize, mu_a: f64, pi_a: f64, trials: usize, seed: u64) -> Vec<f64> {
    let per_trial = map_trials(trials, |trial| {
        let stream = draw_stream(n, mu_a, pi_a, trial_seed(seed, trial as u64));
        let mut above = 0usize;
        let mut out = Vec::with_capacity(n);
        for (i, &x) in stream.x.iter().enumerate() {
            out.push((0.5 + above as f64) / (i + 1) as f64);
            above += usize::from(gro_gaussian_evalue(x, 0.0, mu_a) > LogValue::ONE);
        }
        out
    });
    let mut mean = vec![0.0; n];
    for row in per_trial {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter().map(|m| m / trials as f64).collect()
}

/// Run manifest: the resolved config, seed and tool version.
pub fn manifest(cfg: &SimConfig, tool_version: &str) -> serde_json::Value {
    serde_json::json!({
        "config": cfg,
        "seed": cfg.seed,
        "tool_version": tool_version,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        SimConfig {
            n: 60,
            mu_a: vec![3.0],
            pi_a: vec![0.3],
            trials: 12,
            methods: SimMethod::ALL.to_vec(),
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_csv() {
        let a = run_grid(&small()).unwrap().to_csv_string();
        let b = run_grid(&small()).unwrap().to_csv_string();
        assert_eq!(a, b);
        assert!(a.starts_with("method,mu_A,pi_A,t,mean_tdp_bound,true_tdp,coverage\n"));
        assert_eq!(a.lines().count(), 1 + 60 * SimMethod::ALL.len());
    }

    #[test]
    fn method_names_roundtrip() {
        for m in SimMethod::ALL {
            assert_eq!(m.name().parse::<SimMethod>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("nope".parse::<SimMethod>().is_err());
    }

    #[test]
    fn bounds_stay_in_unit_interval() {
        let s = run_grid(&small()).unwrap();
        for c in &s.cells[0].curves {
            assert!(c.mean_tdp_bound.iter().all(|v| (0.0..=1.0).contains(v)), "{}", c.method);
        }
    }

    #[test]
    fn tau_hat_starts_at_half() {
        let tr = tau_hat_trace(10, 4.0, 0.8, 5, 3);
        assert_eq!(tr[0], 0.5);
    }

    #[test]
    fn config_validation() {
        let mut cfg = small();
        cfg.pi_a = vec![1.0];
        assert!(run_grid(&cfg).is_err());
        let mut cfg = small();
        cfg.trials = 0;
        assert!(cfg.validate().is_err());
    }
}
