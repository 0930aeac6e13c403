//! A configured procedure driven one index at a time: evidence is turned
//! into an e-value (`prepare`), then the inclusion decision advances the
//! guard (`commit`). The engine is plain data, so replaying the same
//! payloads and decisions reproduces it exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalue::{
    self, admissible_online_simple_evalue, boost_factor_hedged_lognormal, boost_factor_lognormal, calibrate_lift,
    gro_gaussian_evalue, hedge, online_adaptive_evalue, online_adaptive_slack, online_simple_evalue, EvalueError,
    GammaWeights, HedgeSchedule, OnlineAdaptiveParams, OnlineSimpleParams,
};
use crate::guard::{ArbEGuard, BoundTrace, GuardError, GuardKind, MixtureGuard, ShortcutGuard, StepOutcome};
use crate::numerics::LogValue;
use crate::oracle::{self, ClosureResult, IntersectionFamily, OracleError};
use crate::pvalue::{m_online_freedman_grid, m_online_simple_grid, PvalueError, DEFAULT_A_MAX, DEFAULT_J_MAX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid spec field `{field}`: {message}")]
    InvalidSpec { field: &'static str, message: String },
    #[error("invalid evidence: {0}")]
    InvalidEvidence(String),
    #[error("what-if subset contains index {index}, but only 1..={t} are decided")]
    SubsetOutOfRange { index: usize, t: usize },
    #[error("what-if queries are not available for mixture methods")]
    WhatIfUnsupported,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Guard(#[from] GuardError),
    #[error(transparent)]
    Evalue(#[from] EvalueError),
}

impl From<PvalueError> for EngineError {
    fn from(e: PvalueError) -> Self {
        EngineError::InvalidSpec { field: "alpha", message: e.to_string() }
    }
}

/// Which guard the procedure runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum MethodSpec {
    SeqEGuard,
    ExeGuard,
    ArbeGuard {
        #[serde(default)]
        gamma: GammaWeights,
    },
    MOnlineSimple {
        #[serde(default = "default_a_max")]
        a_max: usize,
    },
    MOnlineFreedman {
        #[serde(default = "default_j_max")]
        j_max: usize,
    },
}

fn default_a_max() -> usize {
    DEFAULT_A_MAX
}

fn default_j_max() -> usize {
    DEFAULT_J_MAX
}

/// Full description of a procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSpec {
    #[serde(flatten)]
    pub method: MethodSpec,
    pub alpha: f64,
    /// Boost log-normal evidence (Gaussian likelihood ratios and calibrated
    /// p-values) at the predictable cutoff. SeqE-Guard only, unless
    /// `experimental_exe_boost` is set.
    #[serde(default)]
    pub boosting: bool,
    /// Boosting for ExE-Guard, truncating the e-value of index `t` at `t / alpha`.
    #[serde(default)]
    pub experimental_exe_boost: bool,
}

impl ProcedureSpec {
    pub fn new(method: MethodSpec, alpha: f64) -> Self {
        Self { method, alpha, boosting: false, experimental_exe_boost: false }
    }

    pub fn with_boosting(mut self) -> Self {
        self.boosting = true;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EngineError::InvalidSpec { field: "alpha", message: format!("{} must lie in (0, 1)", self.alpha) });
        }
        match &self.method {
            MethodSpec::ArbeGuard { gamma } => {
                gamma.validate().map_err(|e| EngineError::InvalidSpec { field: "gamma", message: e.to_string() })?
            }
            MethodSpec::MOnlineSimple { a_max } if *a_max == 0 => {
                return Err(EngineError::InvalidSpec { field: "a_max", message: "must be at least 1".into() })
            }
            _ => {}
        }
        if self.boosting {
            let ok = match self.method {
                MethodSpec::SeqEGuard => true,
                MethodSpec::ExeGuard => self.experimental_exe_boost,
                _ => false,
            };
            if !ok {
                return Err(EngineError::InvalidSpec {
                    field: "boosting",
                    message: "boosting is defined for seq-e-guard (exe-guard only with experimental_exe_boost)".into(),
                });
            }
        }
        Ok(())
    }

    fn is_mixture(&self) -> bool {
        matches!(self.method, MethodSpec::MOnlineSimple { .. } | MethodSpec::MOnlineFreedman { .. })
    }
}

/// Map from a p-value to an e-value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum PTransform {
    OnlineSimple { alpha_i: f64, a: f64 },
    AdmissibleOnlineSimple { alpha_i: f64, a: f64 },
    OnlineAdaptive {
        alpha_i: f64,
        lambda_i: f64,
        a: f64,
        b: f64,
        #[serde(default)]
        slack_corrected: bool,
    },
    Calibrator { x: f64 },
    /// Level only; the mixture methods build their component e-values from it.
    Level { alpha_i: f64 },
}

/// Betting fraction for a Gaussian likelihood ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HedgeChoice {
    Fixed { lambda: f64 },
    /// Running estimate of the alternative proportion kept by the engine.
    Adaptive,
}

/// Evidence for the next index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvidencePayload {
    /// A ready e-value in the linear domain.
    E { value: f64 },
    /// A ready e-value as a log (`"inf"` and `"-inf"` allowed).
    LogE { log_e: LogValue },
    P { p: f64, transform: PTransform },
    /// Observation `x ~ N(mu, 1)` tested as `mu0` against `mu1`.
    Gaussian {
        x: f64,
        mu0: f64,
        mu1: f64,
        #[serde(default)]
        hedge: Option<HedgeChoice>,
    },
}

/// Boosting applied to a prepared e-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoostPreview {
    pub cutoff: LogValue,
    pub factor: f64,
}

/// Evidence turned into what the guard consumes, before the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prepared {
    /// E-value fed to the guard (after hedging and boosting).
    pub log_e: LogValue,
    /// E-value before boosting.
    pub unboosted_log_e: LogValue,
    pub transforms: Vec<String>,
    pub boost: Option<BoostPreview>,
    /// Component e-values for mixture methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<LogValue>>,
    /// Removal order key for mixture methods (the level).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removal_key: Option<f64>,
    /// Raw likelihood ratio fed to the adaptive hedging estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_gro: Option<LogValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "guard", rename_all = "snake_case")]
enum GuardVariant {
    Shortcut(ShortcutGuard),
    Arbe(ArbEGuard),
    Mixture(MixtureGuard),
}

/// Mixture grids, rebuilt from the spec rather than stored.
#[derive(Debug, Clone, PartialEq)]
enum Grid {
    None,
    Simple(Vec<OnlineSimpleParams>),
    Freedman(Vec<evalue::FreedmanParams>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Engine {
    spec: ProcedureSpec,
    guard: GuardVariant,
    hedge: HedgeSchedule,
    evalues: Vec<LogValue>,
    included: Vec<bool>,
    trace: BoundTrace,
    #[serde(skip)]
    grid: Grid,
}

fn bad(msg: impl Into<String>) -> EngineError {
    EngineError::InvalidEvidence(msg.into())
}

impl Engine {
    pub fn new(spec: ProcedureSpec) -> Result<Self, EngineError> {
        spec.validate()?;
        let alpha = spec.alpha;
        let (guard, grid) = match &spec.method {
            MethodSpec::SeqEGuard => (GuardVariant::Shortcut(ShortcutGuard::new(GuardKind::Product, alpha)?), Grid::None),
            MethodSpec::ExeGuard => (GuardVariant::Shortcut(ShortcutGuard::new(GuardKind::Average, alpha)?), Grid::None),
            MethodSpec::ArbeGuard { gamma } => (GuardVariant::Arbe(ArbEGuard::new(alpha, gamma.clone())?), Grid::None),
            MethodSpec::MOnlineSimple { a_max } => {
                let grid = m_online_simple_grid(alpha, *a_max)?;
                let w: Vec<f64> = grid.iter().map(|g| g.0).collect();
                (GuardVariant::Mixture(MixtureGuard::new(alpha, &w)?), Grid::Simple(grid.into_iter().map(|g| g.1).collect()))
            }
            MethodSpec::MOnlineFreedman { j_max } => {
                let grid = m_online_freedman_grid(alpha, *j_max)?;
                let w: Vec<f64> = grid.iter().map(|g| g.0).collect();
                (GuardVariant::Mixture(MixtureGuard::new(alpha, &w)?), Grid::Freedman(grid.into_iter().map(|g| g.1).collect()))
            }
        };
        Ok(Self {
            spec,
            guard,
            hedge: HedgeSchedule::adaptive(),
            evalues: Vec::new(),
            included: Vec::new(),
            trace: BoundTrace::default(),
            grid,
        })
    }

    pub fn spec(&self) -> &ProcedureSpec {
        &self.spec
    }

    pub fn t(&self) -> usize {
        self.evalues.len()
    }

    pub fn bound(&self) -> usize {
        self.trace.final_bound()
    }

    pub fn query_size(&self) -> usize {
        self.included.iter().filter(|&&b| b).count()
    }

    pub fn trace(&self) -> &BoundTrace {
        &self.trace
    }

    /// Committed e-values (after all transforms), index `t` at position `t-1`.
    pub fn evalues(&self) -> &[LogValue] {
        &self.evalues
    }

    pub fn included(&self) -> &[bool] {
        &self.included
    }

    /// Current adaptive hedging fraction.
    pub fn tau_hat(&self) -> f64 {
        self.hedge.lambda()
    }

    /// Cutoff `m_t` the next e-value would be truncated at, when boosting is on.
    pub fn boosting_cutoff(&self) -> Option<LogValue> {
        if !self.spec.boosting {
            return None;
        }
        match &self.guard {
            GuardVariant::Shortcut(g) if g.kind() == GuardKind::Product => Some(g.boosting_cutoff()),
            GuardVariant::Shortcut(_) => {
                let t_next = (self.t() + 1) as f64;
                Some(LogValue::from_value(t_next / self.spec.alpha))
            }
            _ => None,
        }
    }

    /// Applies the boosting factor for a log-normal e-value with scale `delta`
    /// (and hedging fraction `lambda` when hedged).
    fn boost(&self, e: LogValue, delta: f64, lambda: Option<f64>, transforms: &mut Vec<String>) -> (LogValue, Option<BoostPreview>) {
        let Some(cutoff) = self.boosting_cutoff() else {
            return (e, None);
        };
        let m = cutoff.value();
        let factor = match lambda {
            Some(l) => boost_factor_hedged_lognormal(delta, l, m),
            None => boost_factor_lognormal(delta, m),
        };
        transforms.push(format!("boost(b={factor})"));
        (LogValue::from_log(e.ln() + factor.ln()), Some(BoostPreview { cutoff, factor }))
    }

    /// Computes the e-value for `payload` without changing the engine.
    pub fn prepare(&self, payload: &EvidencePayload) -> Result<Prepared, EngineError> {
        if self.spec.is_mixture() {
            return self.prepare_mixture(payload);
        }
        let mut transforms = Vec::new();
        let mut raw_gro = None;
        // Each arm yields the unboosted e-value and, for log-normal evidence,
        // its scale and hedging fraction.
        let (unboosted, lognormal): (LogValue, Option<(f64, Option<f64>)>) = match payload {
            EvidencePayload::E { value } => {
                if !(*value >= 0.0) {
                    return Err(bad(format!("e-value {value} must be nonnegative")));
                }
                transforms.push("e".into());
                (LogValue::from_value(*value), None)
            }
            EvidencePayload::LogE { log_e } => {
                transforms.push("log_e".into());
                (*log_e, None)
            }
            EvidencePayload::P { p, transform } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(bad(format!("p-value {p} outside [0, 1]")));
                }
                match transform {
                    PTransform::OnlineSimple { alpha_i, a } => {
                        let prm = OnlineSimpleParams::new(self.spec.alpha, *a)?;
                        transforms.push(format!("online_simple(alpha_i={alpha_i}, a={a})"));
                        (online_simple_evalue(*p, check_level(*alpha_i)?, &prm), None)
                    }
                    PTransform::AdmissibleOnlineSimple { alpha_i, a } => {
                        let prm = OnlineSimpleParams::new(self.spec.alpha, *a)?;
                        transforms.push(format!("admissible_online_simple(alpha_i={alpha_i}, a={a})"));
                        (admissible_online_simple_evalue(*p, check_level(*alpha_i)?, &prm), None)
                    }
                    PTransform::OnlineAdaptive { alpha_i, lambda_i, a, b, slack_corrected } => {
                        let prm = OnlineAdaptiveParams::new(self.spec.alpha, *a, *b)?;
                        let mut e = online_adaptive_evalue(*p, *alpha_i, *lambda_i, &prm)?;
                        transforms.push(format!("online_adaptive(alpha_i={alpha_i}, lambda_i={lambda_i}, a={a}, B={b})"));
                        if *slack_corrected {
                            let u = online_adaptive_slack(*alpha_i, *lambda_i, &prm)?;
                            e = LogValue::from_log(e.ln() - u.ln());
                            transforms.push(format!("divide_by_slack(u={u})"));
                        }
                        (e, None)
                    }
                    PTransform::Calibrator { x } => {
                        let e = calibrate_lift(*p, *x)?;
                        transforms.push(format!("calibrator(x={x})"));
                        (e, Some((*x, None)))
                    }
                    PTransform::Level { .. } => {
                        return Err(bad("a bare level is only meaningful for mixture methods"));
                    }
                }
            }
            EvidencePayload::Gaussian { x, mu0, mu1, hedge: h } => {
                if !(x.is_finite() && mu0.is_finite() && mu1.is_finite() && mu1 != mu0) {
                    return Err(bad("gaussian evidence needs finite x and distinct finite means"));
                }
                let raw = gro_gaussian_evalue(*x, *mu0, *mu1);
                raw_gro = Some(raw);
                transforms.push(format!("gro(mu0={mu0}, mu1={mu1})"));
                let delta = (mu1 - mu0).abs();
                match h {
                    None => (raw, Some((delta, None))),
                    Some(choice) => {
                        let lambda = match choice {
                            HedgeChoice::Fixed { lambda } => {
                                if !(0.0..=1.0).contains(lambda) {
                                    return Err(bad(format!("lambda {lambda} outside [0, 1]")));
                                }
                                *lambda
                            }
                            HedgeChoice::Adaptive => self.hedge.lambda(),
                        };
                        transforms.push(format!("hedge(lambda={lambda})"));
                        (hedge(raw, lambda), Some((delta, Some(lambda))))
                    }
                }
            }
        };
        let (log_e, boost) = match lognormal {
            Some((delta, lambda)) => self.boost(unboosted, delta, lambda, &mut transforms),
            None => (unboosted, None),
        };
        Ok(Prepared { log_e, unboosted_log_e: unboosted, transforms, boost, components: None, removal_key: None, raw_gro })
    }

    fn prepare_mixture(&self, payload: &EvidencePayload) -> Result<Prepared, EngineError> {
        let EvidencePayload::P { p, transform } = payload else {
            return Err(bad("mixture methods take p-values with a level"));
        };
        if !(0.0..=1.0).contains(p) {
            return Err(bad(format!("p-value {p} outside [0, 1]")));
        }
        let level = match transform {
            PTransform::Level { alpha_i } | PTransform::OnlineSimple { alpha_i, .. } => check_level(*alpha_i)?,
            _ => return Err(bad("mixture methods take a `level` transform")),
        };
        let (components, name): (Vec<LogValue>, &str) = match &self.grid {
            Grid::Simple(g) => (g.iter().map(|prm| online_simple_evalue(*p, level, prm)).collect(), "m_online_simple"),
            Grid::Freedman(g) => (g.iter().map(|prm| evalue::freedman_evalue(*p, level, prm)).collect(), "m_online_freedman"),
            Grid::None => unreachable!("mixture spec always carries a grid"),
        };
        // Reported single value: the weighted mean of the components.
        let weights: Vec<f64> = match &self.spec.method {
            MethodSpec::MOnlineSimple { a_max } => m_online_simple_grid(self.spec.alpha, *a_max)?.iter().map(|g| g.0).collect(),
            MethodSpec::MOnlineFreedman { j_max } => m_online_freedman_grid(self.spec.alpha, *j_max)?.iter().map(|g| g.0).collect(),
            _ => unreachable!(),
        };
        let terms: Vec<(f64, f64)> = weights.iter().zip(&components).map(|(w, e)| (w.ln(), e.ln())).collect();
        let mean = crate::numerics::log_sum_prod(&terms);
        Ok(Prepared {
            log_e: mean,
            unboosted_log_e: mean,
            transforms: vec![format!("{name}(alpha_i={level})")],
            boost: None,
            components: Some(components),
            removal_key: Some(level),
            raw_gro: None,
        })
    }

    /// Advances the guard with a prepared e-value and the inclusion decision.
    pub fn commit(&mut self, prepared: &Prepared, include: bool) -> Result<StepOutcome, EngineError> {
        let outcome = match &mut self.guard {
            GuardVariant::Shortcut(g) => g.step(prepared.log_e, include),
            GuardVariant::Arbe(g) => g.step(prepared.log_e, include),
            GuardVariant::Mixture(g) => {
                let comps = prepared.components.as_ref().ok_or_else(|| bad("mixture step needs component e-values"))?;
                g.step(comps, include, prepared.removal_key.unwrap_or(0.0))?
            }
        };
        if let Some(raw) = prepared.raw_gro {
            self.hedge = self.hedge.observe(raw);
        }
        self.evalues.push(prepared.log_e);
        self.included.push(include);
        self.trace.push(&outcome);
        Ok(outcome)
    }

    /// `prepare` followed by `commit`.
    pub fn step(&mut self, payload: &EvidencePayload, include: bool) -> Result<StepOutcome, EngineError> {
        let prepared = self.prepare(payload)?;
        self.commit(&prepared, include)
    }

    fn family(&self) -> Result<IntersectionFamily, EngineError> {
        let alpha = self.spec.alpha;
        match &self.spec.method {
            MethodSpec::SeqEGuard => Ok(IntersectionFamily::Product { alpha }),
            MethodSpec::ExeGuard => Ok(IntersectionFamily::Average { alpha }),
            MethodSpec::ArbeGuard { gamma } => Ok(IntersectionFamily::Weighted { alpha, gamma: gamma.clone() }),
            _ => Err(EngineError::WhatIfUnsupported),
        }
    }

    /// Closure bound for an arbitrary subset of decided indices.
    pub fn what_if(&self, subset: &[usize]) -> Result<ClosureResult, EngineError> {
        let family = self.family()?;
        let t = self.t();
        if let Some(&index) = subset.iter().find(|&&i| i == 0 || i > t) {
            return Err(EngineError::SubsetOutOfRange { index, t });
        }
        Ok(oracle::closure_bound(&family, &self.evalues, subset)?)
    }
}

fn check_level(alpha_i: f64) -> Result<f64, EngineError> {
    if (0.0..=1.0).contains(&alpha_i) {
        Ok(alpha_i)
    } else {
        Err(bad(format!("level {alpha_i} outside [0, 1]")))
    }
}
