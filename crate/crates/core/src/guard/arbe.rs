use serde::{Deserialize, Serialize};

use super::{check_alpha, GuardError, StepOutcome};
use crate::evalue::GammaWeights;
use crate::numerics::{crosses_linear, LogValue, NeumaierSum};

/// ArbE-Guard: shortcut for arbitrarily dependent e-values.
///
/// The intersection statistic for the retained set `{1..t} \ A^c` is
/// `sum_{i in S \ A^c} E_i * gamma_{rank(i)}`, ranks taken among all
/// retained indices, queried or not. On a crossing the queried index whose
/// removal leaves the smallest statistic joins `A^c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbEGuard {
    alpha: f64,
    gamma: GammaWeights,
    t: usize,
    d: usize,
    evalues: Vec<LogValue>,
    included: Vec<bool>,
    removed: Vec<bool>,
    excluded: Vec<usize>,
    query_size: usize,
}

fn term(e: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        e * gamma
    }
}

impl ArbEGuard {
    pub fn new(alpha: f64, gamma: GammaWeights) -> Result<Self, GuardError> {
        check_alpha(alpha)?;
        gamma.validate()?;
        Ok(Self {
            alpha,
            gamma,
            t: 0,
            d: 0,
            evalues: Vec::new(),
            included: Vec::new(),
            removed: Vec::new(),
            excluded: Vec::new(),
            query_size: 0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> &GammaWeights {
        &self.gamma
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn bound(&self) -> usize {
        self.d
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    /// Retained indices (1-based) in increasing order.
    fn retained(&self) -> Vec<usize> {
        (1..=self.t).filter(|&i| !self.removed[i - 1]).collect()
    }

    /// Current weighted statistic in the linear domain.
    pub fn statistic_value(&self) -> f64 {
        let mut acc = NeumaierSum::default();
        for (k, &i) in self.retained().iter().enumerate() {
            if self.included[i - 1] {
                acc.add(term(self.evalues[i - 1].value(), self.gamma.gamma(k + 1)));
            }
        }
        acc.value()
    }

    /// Queried retained index whose removal minimises the statistic.
    fn argmin_residual(&self) -> Option<usize> {
        let ret = self.retained();
        let n = ret.len();
        let contrib = |k: usize, rank: usize| -> f64 {
            let i = ret[k];
            if self.included[i - 1] {
                term(self.evalues[i - 1].value(), self.gamma.gamma(rank))
            } else {
                0.0
            }
        };
        // prefix[k]: terms before position k at their own rank.
        let mut prefix = vec![0.0; n + 1];
        for k in 0..n {
            prefix[k + 1] = prefix[k] + contrib(k, k + 1);
        }
        // shifted[k]: terms after position k, each moved down one rank.
        let mut shifted = vec![0.0; n + 1];
        for k in (0..n).rev() {
            shifted[k] = shifted[k + 1] + if k + 1 < n { contrib(k + 1, k + 1) } else { 0.0 };
        }
        let mut best: Option<(f64, usize)> = None;
        for k in 0..n {
            let i = ret[k];
            if !self.included[i - 1] {
                continue;
            }
            let residual = prefix[k] + shifted[k];
            if best.is_none_or(|(b, _)| residual < b) {
                best = Some((residual, i));
            }
        }
        best.map(|(_, i)| i)
    }

    pub fn step(&mut self, e: LogValue, include: bool) -> StepOutcome {
        self.t += 1;
        let t = self.t;
        self.evalues.push(e);
        self.included.push(include);
        self.removed.push(false);
        let mut removed = None;
        if include {
            self.query_size += 1;
        }
        let stat = self.statistic_value();
        if include && crosses_linear(stat, 1.0 / self.alpha) {
            self.d += 1;
            let idx = self.argmin_residual().expect("index t is queried and retained");
            self.removed[idx - 1] = true;
            self.excluded.push(idx);
            removed = Some(idx);
        }
        StepOutcome {
            t,
            d: self.d,
            included: include,
            bound_incremented: removed.is_some(),
            removed_index: removed,
            statistic: LogValue::from_value(stat),
            query_size: self.query_size,
        }
    }
}
