use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_alpha, GuardError, StepOutcome};
use crate::numerics::{crosses_log, log_sum_prod, LogProduct, LogValue};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ActiveEntry {
    key: f64,
    logs: Vec<LogValue>,
}

/// Shortcut over a weighted mixture of product martingales.
///
/// The statistic is `sum_a w_a prod_{i retained} E_i^(a)`. Non-queried
/// indices are retained when every component is below one and dropped when
/// every component is at least one. On a crossing the active index with the
/// smallest removal key joins `A^c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureGuard {
    alpha: f64,
    log_weights: Vec<f64>,
    t: usize,
    d: usize,
    query_size: usize,
    active: BTreeMap<usize, ActiveEntry>,
    discards: BTreeMap<usize, Vec<LogValue>>,
    excluded: Vec<usize>,
    products: Vec<LogProduct>,
}

impl MixtureGuard {
    pub fn new(alpha: f64, weights: &[f64]) -> Result<Self, GuardError> {
        check_alpha(alpha)?;
        if weights.is_empty() {
            return Err(GuardError::InvalidWeights("empty grid"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(GuardError::InvalidWeights("weights must be finite and nonnegative"));
        }
        if weights.iter().sum::<f64>() > 1.0 + 1e-12 {
            return Err(GuardError::InvalidWeights("weights must sum to at most one"));
        }
        Ok(Self {
            alpha,
            log_weights: weights.iter().map(|w| w.ln()).collect(),
            t: 0,
            d: 0,
            query_size: 0,
            active: BTreeMap::new(),
            discards: BTreeMap::new(),
            excluded: Vec::new(),
            products: vec![LogProduct::default(); weights.len()],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid_len(&self) -> usize {
        self.log_weights.len()
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

    pub fn statistic(&self) -> LogValue {
        let terms: Vec<(f64, f64)> = self
            .log_weights
            .iter()
            .zip(&self.products)
            .map(|(&w, p)| (w, p.value().ln()))
            .collect();
        log_sum_prod(&terms)
    }

    fn retain(&mut self, logs: &[LogValue]) {
        for (p, &e) in self.products.iter_mut().zip(logs) {
            p.insert(e);
        }
    }

    fn release(&mut self, logs: &[LogValue]) {
        for (p, &e) in self.products.iter_mut().zip(logs) {
            p.remove(e);
        }
    }

    /// Feeds the component e-values of the next index. `removal_key` orders
    /// active indices for removal (smallest first, ties to smallest index).
    pub fn step(&mut self, components: &[LogValue], include: bool, removal_key: f64) -> Result<StepOutcome, GuardError> {
        if components.len() != self.grid_len() {
            return Err(GuardError::GridMismatch { expected: self.grid_len(), got: components.len() });
        }
        if !include {
            let below = components.iter().filter(|e| **e < LogValue::ONE).count();
            if below != 0 && below != components.len() {
                return Err(GuardError::MixedSignExclusion);
            }
        }
        self.t += 1;
        let t = self.t;
        let mut removed = None;
        if include {
            self.query_size += 1;
            self.retain(components);
            self.active.insert(t, ActiveEntry { key: removal_key, logs: components.to_vec() });
        } else if components.iter().all(|e| *e < LogValue::ONE) {
            self.retain(components);
            self.discards.insert(t, components.to_vec());
        }
        // Checked at every step; with consistently ordered components a
        // crossing can only follow an inclusion.
        let statistic = self.statistic();
        if !self.active.is_empty() && crosses_log(statistic, -self.alpha.ln()) {
            self.d += 1;
            let (&idx, _) = self
                .active
                .iter()
                .min_by(|(i, a), (j, b)| a.key.total_cmp(&b.key).then(i.cmp(j)))
                .expect("active set is nonempty");
            let entry = self.active.remove(&idx).expect("present");
            self.release(&entry.logs);
            self.excluded.push(idx);
            removed = Some(idx);
        }
        Ok(StepOutcome {
            t,
            d: self.d,
            included: include,
            bound_incremented: removed.is_some(),
            removed_index: removed,
            statistic,
            query_size: self.query_size,
        })
    }
}
