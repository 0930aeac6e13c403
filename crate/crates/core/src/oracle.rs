//! Exhaustive online closed procedure.
//!
//! `d(S) = min { |S \ I| : I ⊆ {1..t}, phi_I = 0 }` evaluated by brute force
//! over all `2^t` subsets. The three intersection-test families are
//! increasing, so restricting `I` to observed indices loses nothing.
//!
//! Subset statistics are built bottom-up over bitmasks: every mask extends
//! the mask without its highest element, and the prefix suprema of the
//! product and average families carry over the same way.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalue::{EvalueError, GammaWeights};
use crate::numerics::{crosses_linear, crosses_log, LogValue};

/// Largest `t` the enumerator accepts.
pub const MAX_ORACLE_T: usize = 20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("closure enumeration is capped at t = {cap}, got t = {t}")]
    CapExceeded { t: usize, cap: usize },
    #[error("index {index} is outside 1..={t}")]
    IndexOutOfRange { index: usize, t: usize },
    #[error("invalid alpha {0}: must lie in (0, 1)")]
    InvalidAlpha(f64),
    #[error(transparent)]
    Evalue(#[from] EvalueError),
}

/// Intersection-test family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum IntersectionFamily {
    /// Some prefix product over `I` reaches `1/alpha`.
    Product { alpha: f64 },
    /// Some prefix average over `I` reaches `1/alpha`.
    Average { alpha: f64 },
    /// `sum_{i in I} E_i gamma_{rank of i in I}` reaches `1/alpha`.
    Weighted { alpha: f64, gamma: GammaWeights },
}

impl IntersectionFamily {
    pub fn alpha(&self) -> f64 {
        match self {
            IntersectionFamily::Product { alpha }
            | IntersectionFamily::Average { alpha }
            | IntersectionFamily::Weighted { alpha, .. } => *alpha,
        }
    }

    fn validate(&self) -> Result<(), OracleError> {
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(OracleError::InvalidAlpha(alpha));
        }
        if let IntersectionFamily::Weighted { gamma, .. } = self {
            gamma.validate()?;
        }
        Ok(())
    }
}

fn weighted_term(e: LogValue, gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        e.value() * gamma
    }
}

/// `phi_I` for a single subset, computed directly from its definition.
/// `subset` holds 1-based indices into `evalues` in any order.
pub fn phi(family: &IntersectionFamily, evalues: &[LogValue], subset: &[usize]) -> Result<bool, OracleError> {
    family.validate()?;
    let mut idx: Vec<usize> = subset.to_vec();
    idx.sort_unstable();
    idx.dedup();
    if let Some(&bad) = idx.iter().find(|&&i| i == 0 || i > evalues.len()) {
        return Err(OracleError::IndexOutOfRange { index: bad, t: evalues.len() });
    }
    let alpha = family.alpha();
    let log_thr = -alpha.ln();
    Ok(match family {
        IntersectionFamily::Product { .. } => {
            let mut prod = LogValue::ONE;
            idx.iter().any(|&i| {
                prod = prod * evalues[i - 1];
                crosses_log(prod, log_thr)
            })
        }
        IntersectionFamily::Average { .. } => {
            let mut sum = 0.0;
            idx.iter().enumerate().any(|(k, &i)| {
                sum += evalues[i - 1].value();
                crosses_linear(sum, (k + 1) as f64 / alpha)
            })
        }
        IntersectionFamily::Weighted { gamma, .. } => {
            let total: f64 = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| weighted_term(evalues[i - 1], gamma.gamma(k + 1)))
                .sum();
            crosses_linear(total, 1.0 / alpha)
        }
    })
}

/// `phi` for every subset of the observed indices, as a bit per mask.
#[derive(Debug, Clone)]
pub struct ClosureTable {
    t: usize,
    rejected: Vec<bool>,
}

impl ClosureTable {
    pub fn new(family: &IntersectionFamily, evalues: &[LogValue]) -> Result<Self, OracleError> {
        family.validate()?;
        let t = evalues.len();
        if t > MAX_ORACLE_T {
            return Err(OracleError::CapExceeded { t, cap: MAX_ORACLE_T });
        }
        let alpha = family.alpha();
        let log_thr = -alpha.ln();
        let size = 1usize << t;
        let mut rejected = vec![false; size];
        match family {
            IntersectionFamily::Product { .. } => {
                let mut prod = vec![LogValue::ONE; size];
                for mask in 1..size {
                    let h = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
                    let rest = mask ^ (1 << h);
                    prod[mask] = prod[rest] * evalues[h];
                    rejected[mask] = rejected[rest] || crosses_log(prod[mask], log_thr);
                }
            }
            IntersectionFamily::Average { .. } => {
                let mut sum = vec![0.0f64; size];
                for mask in 1..size {
                    let h = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
                    let rest = mask ^ (1 << h);
                    sum[mask] = sum[rest] + evalues[h].value();
                    let count = mask.count_ones() as f64;
                    rejected[mask] = rejected[rest] || crosses_linear(sum[mask], count / alpha);
                }
            }
            IntersectionFamily::Weighted { gamma, .. } => {
                let gammas: Vec<f64> = (0..=t).map(|k| gamma.gamma(k)).collect();
                let mut sum = vec![0.0f64; size];
                for mask in 1..size {
                    let h = usize::BITS as usize - 1 - mask.leading_zeros() as usize;
                    let rest = mask ^ (1 << h);
                    sum[mask] = sum[rest] + weighted_term(evalues[h], gammas[mask.count_ones() as usize]);
                    rejected[mask] = crosses_linear(sum[mask], 1.0 / alpha);
                }
            }
        }
        Ok(Self { t, rejected })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_rejected(&self, mask: usize) -> bool {
        self.rejected[mask]
    }

    /// Bound for `query_mask` using only subsets of the first `t` indices,
    /// with the minimising subset (smallest mask on ties).
    pub fn bound_at(&self, t: usize, query_mask: usize) -> (usize, usize) {
        debug_assert!(t <= self.t);
        let mut best = (query_mask.count_ones() as usize, 0usize);
        for mask in 0..(1usize << t) {
            if !self.rejected[mask] {
                let miss = (query_mask & !mask).count_ones() as usize;
                if miss < best.0 {
                    best = (miss, mask);
                    if miss == 0 {
                        break;
                    }
                }
            }
        }
        best
    }
}

fn to_mask(subset: &[usize], t: usize) -> Result<usize, OracleError> {
    subset.iter().try_fold(0usize, |m, &i| {
        if i == 0 || i > t {
            Err(OracleError::IndexOutOfRange { index: i, t })
        } else {
            Ok(m | (1 << (i - 1)))
        }
    })
}

fn from_mask(mask: usize, t: usize) -> Vec<usize> {
    (1..=t).filter(|i| mask & (1 << (i - 1)) != 0).collect()
}

/// Closure bound together with a subset `I` that attains it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClosureResult {
    pub bound: usize,
    pub witness: Vec<usize>,
}

/// `d(S)` over all `evalues` observed so far. `subset` is 1-based.
pub fn closure_bound(family: &IntersectionFamily, evalues: &[LogValue], subset: &[usize]) -> Result<ClosureResult, OracleError> {
    let t = evalues.len();
    if t > MAX_ORACLE_T {
        return Err(OracleError::CapExceeded { t, cap: MAX_ORACLE_T });
    }
    let query = to_mask(subset, t)?;
    let table = ClosureTable::new(family, evalues)?;
    let (bound, witness) = table.bound_at(t, query);
    Ok(ClosureResult { bound, witness: from_mask(witness, t) })
}

/// Closure bounds `d(S_t)` along a query path; `included[t-1]` says whether
/// index `t` joined the query set.
pub fn closure_trace(family: &IntersectionFamily, evalues: &[LogValue], included: &[bool]) -> Result<Vec<usize>, OracleError> {
    let t_max = evalues.len();
    if t_max > MAX_ORACLE_T {
        return Err(OracleError::CapExceeded { t: t_max, cap: MAX_ORACLE_T });
    }
    let table = ClosureTable::new(family, evalues)?;
    let mut query = 0usize;
    let mut out = Vec::with_capacity(t_max);
    for t in 1..=t_max {
        if included.get(t - 1).copied().unwrap_or(false) {
            query |= 1 << (t - 1);
        }
        out.push(table.bound_at(t, query).0);
    }
    Ok(out)
}
