use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{check_alpha, GuardError, StepOutcome};
use crate::evalue::boosting_cutoff;
use crate::numerics::{crosses_linear, crosses_log, LinearSum, LogProduct, LogValue};

/// How the retained e-values are combined into the intersection statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuardKind {
    /// Product of sequential e-values (SeqE-Guard).
    Product,
    /// Average of exchangeable e-values (ExE-Guard).
    Average,
}

/// State of the SeqE-Guard / ExE-Guard shortcut.
///
/// `A` (`active`) holds queried indices still in play, `U` (`discards`) the
/// non-queried indices whose e-values pull the statistic down: below one for
/// the product, below `1/alpha` for the average. Every increment of `d`
/// removes the largest active e-value (smallest index on ties), so
/// `d = |S| - |A|` at all times.
#[derive(Debug, Clone, Serialize)]
pub struct ShortcutGuard {
    kind: GuardKind,
    alpha: f64,
    t: usize,
    d: usize,
    query: Vec<usize>,
    active: BTreeMap<usize, LogValue>,
    discards: BTreeMap<usize, LogValue>,
    excluded: Vec<usize>,
    product: LogProduct,
    sum: LinearSum,
    #[serde(skip)]
    by_size: BTreeSet<(LogValue, Reverse<usize>)>,
}

impl PartialEq for ShortcutGuard {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.alpha.to_bits() == other.alpha.to_bits()
            && self.t == other.t
            && self.d == other.d
            && self.query == other.query
            && self.active == other.active
            && self.discards == other.discards
            && self.excluded == other.excluded
            && self.product == other.product
            && self.sum == other.sum
    }
}

impl ShortcutGuard {
    pub fn new(kind: GuardKind, alpha: f64) -> Result<Self, GuardError> {
        check_alpha(alpha)?;
        Ok(Self {
            kind,
            alpha,
            t: 0,
            d: 0,
            query: Vec::new(),
            active: BTreeMap::new(),
            discards: BTreeMap::new(),
            excluded: Vec::new(),
            product: LogProduct::default(),
            sum: LinearSum::default(),
            by_size: BTreeSet::new(),
        })
    }

    /// SeqE-Guard for sequential e-values.
    pub fn sequential(alpha: f64) -> Result<Self, GuardError> {
        Self::new(GuardKind::Product, alpha)
    }

    /// ExE-Guard for e-values that are exchangeable under the null.
    pub fn exchangeable(alpha: f64) -> Result<Self, GuardError> {
        Self::new(GuardKind::Average, alpha)
    }

    pub fn kind(&self) -> GuardKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn bound(&self) -> usize {
        self.d
    }

    pub fn query(&self) -> &[usize] {
        &self.query
    }

    pub fn active(&self) -> &BTreeMap<usize, LogValue> {
        &self.active
    }

    pub fn discards(&self) -> &BTreeMap<usize, LogValue> {
        &self.discards
    }

    /// Indices removed from the active set, in removal order.
    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    fn log_threshold(&self) -> f64 {
        -self.alpha.ln()
    }

    /// Current statistic over `A u U` in the log domain.
    pub fn statistic(&self) -> LogValue {
        match self.kind {
            GuardKind::Product => self.product.value(),
            GuardKind::Average => {
                if self.sum.count() == 0 {
                    LogValue::ZERO
                } else {
                    LogValue::from_value(self.sum.sum() / self.sum.count() as f64)
                }
            }
        }
    }

    fn crossed(&self) -> bool {
        match self.kind {
            GuardKind::Product => crosses_log(self.product.value(), self.log_threshold()),
            GuardKind::Average => {
                self.sum.count() > 0 && crosses_linear(self.sum.sum(), self.sum.count() as f64 / self.alpha)
            }
        }
    }

    fn keeps_as_discard(&self, e: LogValue) -> bool {
        match self.kind {
            GuardKind::Product => e < LogValue::ONE,
            GuardKind::Average => e.ln() < self.log_threshold(),
        }
    }

    fn insert_retained(&mut self, e: LogValue) {
        self.product.insert(e);
        self.sum.insert(e.value());
    }

    fn remove_retained(&mut self, e: LogValue) {
        self.product.remove(e);
        self.sum.remove(e.value());
    }

    /// Largest active e-value; ties go to the smallest index.
    pub fn max_active(&self) -> Option<(usize, LogValue)> {
        self.by_size.last().map(|&(e, Reverse(i))| (i, e))
    }

    /// Predictable boosting cutoff `m_t` for the next step (product kind).
    pub fn boosting_cutoff(&self) -> LogValue {
        boosting_cutoff(self.max_active().map(|(_, e)| e), self.product.value(), self.alpha)
    }

    /// Feeds the next e-value together with the inclusion decision for its index.
    pub fn step(&mut self, e: LogValue, include: bool) -> StepOutcome {
        self.t += 1;
        let t = self.t;
        let mut removed = None;
        let statistic;
        if include {
            self.query.push(t);
            self.active.insert(t, e);
            self.by_size.insert((e, Reverse(t)));
            self.insert_retained(e);
            statistic = self.statistic();
            if self.crossed() {
                self.d += 1;
                let (idx, largest) = self.max_active().expect("active set holds index t");
                self.by_size.remove(&(largest, Reverse(idx)));
                self.active.remove(&idx);
                self.remove_retained(largest);
                self.excluded.push(idx);
                removed = Some(idx);
            }
        } else {
            if self.keeps_as_discard(e) {
                self.discards.insert(t, e);
                self.insert_retained(e);
            }
            statistic = self.statistic();
        }
        StepOutcome {
            t,
            d: self.d,
            included: include,
            bound_incremented: removed.is_some(),
            removed_index: removed,
            statistic,
            query_size: self.query.len(),
        }
    }
}
