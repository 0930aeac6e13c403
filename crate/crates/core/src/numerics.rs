//! Special functions, log-domain arithmetic and a bracketing root finder.
//!
//! Every e-value in the crate is carried as a [`LogValue`]: the natural log of a
//! nonnegative number, with `-inf` encoding zero and `+inf` encoding an
//! infinite e-value. Products over thousands of steps stay finite this way.

use std::cmp::Ordering;
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::ops::{Div, Mul};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("probability {0} is outside the open unit interval")]
    ProbabilityOutOfRange(f64),
    #[error("root is not bracketed: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    BracketFailure { f_lo: f64, f_hi: f64 },
    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
    #[error("cannot parse log value from {0:?}")]
    Parse(String),
}

/// Relative slack used when comparing a statistic against `1/alpha`.
///
/// Products that are exactly at the threshold in real arithmetic (`5 * 4 = 20`)
/// land an ulp or two either side of it in floating point. The slack is
/// applied identically by the guards and the closure oracle.
pub const THRESHOLD_SLACK: f64 = 1e-12;

/// Natural logarithm of a nonnegative extended real.
#[derive(Clone, Copy, Default)]
pub struct LogValue(f64);

impl LogValue {
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    pub const ONE: LogValue = LogValue(0.0);
    pub const INFINITY: LogValue = LogValue(f64::INFINITY);

    /// Wraps a log. NaN is mapped to zero so that ordering stays total.
    pub fn from_log(log_v: f64) -> Self {
        if log_v.is_nan() {
            LogValue::ZERO
        } else if log_v == 0.0 {
            LogValue::ONE
        } else {
            LogValue(log_v)
        }
    }

    /// Log of a linear-domain value. Negative or NaN inputs map to zero.
    pub fn from_value(v: f64) -> Self {
        if v.is_nan() || v <= 0.0 {
            LogValue::ZERO
        } else {
            LogValue::from_log(v.ln())
        }
    }

    #[inline]
    pub fn ln(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    /// Zero or infinite: the evidence saturated and downstream consumers may
    /// want to flag it.
    pub fn is_saturated(self) -> bool {
        self.0.is_infinite()
    }

    pub fn recip(self) -> Self {
        LogValue::from_log(-self.0)
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Mul for LogValue {
    type Output = LogValue;

    /// Product with the convention `0 * inf = 0`.
    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            LogValue::ZERO
        } else {
            LogValue::from_log(self.0 + rhs.0)
        }
    }
}

impl Div for LogValue {
    type Output = LogValue;

    /// Quotient with the conventions `0 / x = 0` and `x / 0 = inf` for `x > 0`.
    fn div(self, rhs: LogValue) -> LogValue {
        if self.is_zero() {
            LogValue::ZERO
        } else if rhs.is_zero() {
            LogValue::INFINITY
        } else if self.is_infinite() && rhs.is_infinite() {
            // inf / inf has no meaningful value for e-values; treat it as neutral.
            LogValue::ONE
        } else {
            LogValue::from_log(self.0 - rhs.0)
        }
    }
}

impl PartialEq for LogValue {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for LogValue {}

impl PartialOrd for LogValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LogValue {
    fn cmp(&self, other: &Self) -> Ordering {
        // -0.0 and 0.0 both mean e-value one.
        let a = if self.0 == 0.0 { 0.0 } else { self.0 };
        let b = if other.0 == 0.0 { 0.0 } else { other.0 };
        a.total_cmp(&b)
    }
}

impl std::hash::Hash for LogValue {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        let v = if self.0 == 0.0 { 0.0f64 } else { self.0 };
        v.to_bits().hash(state);
    }
}

impl fmt::Debug for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogValue({self})")
    }
}

/// Shortest round-trip decimal representation of the log, `inf` and `-inf`
/// for the saturated values.
impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else if self.0 == f64::NEG_INFINITY {
            f.write_str("-inf")
        } else {
            write!(f, "{:?}", self.0)
        }
    }
}

impl FromStr for LogValue {
    type Err = NumericsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "inf" | "+inf" | "Infinity" => Ok(LogValue::INFINITY),
            "-inf" | "-Infinity" => Ok(LogValue::ZERO),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan())
                .map(LogValue)
                .ok_or_else(|| NumericsError::Parse(s.to_string())),
        }
    }
}

// Log-domain values travel as decimal strings so that `-inf`/`inf` survive
// JSON and no precision is lost to a lossy number parser on the other side.
impl Serialize for LogValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LogValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// `log_stat >= log_threshold`, up to [`THRESHOLD_SLACK`].
pub fn crosses_log(log_stat: LogValue, log_threshold: f64) -> bool {
    let slack = THRESHOLD_SLACK * log_threshold.abs().max(1.0);
    log_stat.ln() >= log_threshold - slack
}

/// `value >= threshold` for nonnegative linear-domain quantities, up to
/// [`THRESHOLD_SLACK`] relative.
pub fn crosses_linear(value: f64, threshold: f64) -> bool {
    value >= threshold * (1.0 - THRESHOLD_SLACK)
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Inverse of [`std_normal_cdf`].
///
/// A rational seed (absolute error below 5e-4) refined by Newton steps on
/// `log Phi(x) - log q`, which stays well conditioned deep in the tail.
pub fn std_normal_quantile(p: f64) -> Result<f64, NumericsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(NumericsError::ProbabilityOutOfRange(p));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    let (q, sign) = if p < 0.5 { (p, -1.0) } else { (1.0 - p, 1.0) };
    // Lower-tail quantile of q, returned as a nonnegative magnitude.
    let t = (-2.0 * q.ln()).sqrt();
    let mut x = -(t - (2.515517 + 0.802853 * t + 0.010328 * t * t)
        / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t));
    let log_q = q.ln();
    for _ in 0..50 {
        let cdf = std_normal_cdf(x);
        if cdf <= 0.0 {
            break;
        }
        let g = cdf.ln() - log_q;
        let slope = std_normal_pdf(x) / cdf;
        if slope <= 0.0 || !slope.is_finite() {
            break;
        }
        let step = g / slope;
        x -= step;
        if step.abs() <= 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    Ok(sign * -x)
}

/// `log(sum_k exp(log_weight_k + log_product_k))`, evaluated stably.
///
/// A zero weight silences its term even when the product is infinite.
pub fn log_sum_prod(terms: &[(f64, f64)]) -> LogValue {
    let logs: Vec<f64> = terms
        .iter()
        .map(|&(w, p)| (LogValue::from_log(w) * LogValue::from_log(p)).ln())
        .collect();
    log_sum_exp(&logs)
}

/// `log(sum exp(x_k))` with the max-shift trick.
pub fn log_sum_exp(logs: &[f64]) -> LogValue {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return LogValue::ZERO;
    }
    if max == f64::INFINITY {
        return LogValue::INFINITY;
    }
    let mut acc = NeumaierSum::default();
    for &l in logs {
        acc.add((l - max).exp());
    }
    LogValue::from_log(max + acc.value().ln())
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if hi == f64::INFINITY {
        return f64::INFINITY;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// Bisection for the root of a nondecreasing function on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol` (or after 200 halvings) and
/// returns its midpoint.
pub fn solve_increasing_root<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<f64, NumericsError>
where
    F: FnMut(f64) -> f64,
{
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(NumericsError::InvalidTolerance(tol));
    }
    let (mut lo, mut hi) = (lo, hi);
    let f_lo = f(lo);
    let f_hi = f(hi);
    if !(f_lo <= 0.0 && f_hi >= 0.0) {
        return Err(NumericsError::BracketFailure { f_lo, f_hi });
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Compensated (Neumaier) running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Running product of [`LogValue`]s that supports removal.
///
/// Finite logs are summed with compensation; zeros and infinities are
/// counted so that a removed infinity does not leave a NaN behind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LogProduct {
    finite: NeumaierSum,
    zeros: u32,
    infinities: u32,
}

impl LogProduct {
    pub fn insert(&mut self, v: LogValue) {
        if v.is_zero() {
            self.zeros += 1;
        } else if v.is_infinite() {
            self.infinities += 1;
        } else {
            self.finite.add(v.ln());
        }
    }

    pub fn remove(&mut self, v: LogValue) {
        if v.is_zero() {
            self.zeros -= 1;
        } else if v.is_infinite() {
            self.infinities -= 1;
        } else {
            self.finite.add(-v.ln());
        }
    }

    pub fn value(&self) -> LogValue {
        if self.zeros > 0 {
            LogValue::ZERO
        } else if self.infinities > 0 {
            LogValue::INFINITY
        } else {
            LogValue::from_log(self.finite.value())
        }
    }
}

/// Running sum of nonnegative linear-domain values that supports removal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearSum {
    finite: NeumaierSum,
    infinities: u32,
    count: u32,
}

impl LinearSum {
    pub fn insert(&mut self, v: f64) {
        self.count += 1;
        if v.is_infinite() {
            self.infinities += 1;
        } else {
            self.finite.add(v);
        }
    }

    pub fn remove(&mut self, v: f64) {
        self.count -= 1;
        if v.is_infinite() {
            self.infinities -= 1;
        } else {
            self.finite.add(-v);
        }
    }

    pub fn sum(&self) -> f64 {
        if self.infinities > 0 {
            f64::INFINITY
        } else {
            self.finite.value().max(0.0)
        }
    }

    pub fn count(&self) -> u32 {
        self.count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Error-free transformation `a + b = s + e`.
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    /// Double-double accumulation: roughly 106 bits of mantissa.
    fn dd_sum(xs: &[f64]) -> f64 {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for &x in xs {
            let (s, e) = two_sum(hi, x);
            let (s2, e2) = two_sum(s, lo + e);
            hi = s2;
            lo = e2;
        }
        hi + lo
    }

    #[test]
    fn cdf_symmetry_and_reference() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        for &x in &[0.1, 0.7, 1.3, 2.5, 4.0, 6.5] {
            assert!((std_normal_cdf(x) + std_normal_cdf(-x) - 1.0).abs() <= 1e-12);
        }
        assert!((std_normal_cdf(1.959963985) - 0.975).abs() <= 1e-9);
        assert_eq!(std_normal_cdf(-50.0), 0.0);
        assert_eq!(std_normal_cdf(50.0), 1.0);
    }

    #[test]
    fn quantile_reference_points() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        // Oracle: invert the CDF by plain bisection.
        let bisect = |p: f64| {
            let (mut lo, mut hi) = (-40.0f64, 40.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if std_normal_cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let q = std_normal_quantile(0.975).unwrap();
        assert!((q - bisect(0.975)).abs() <= 1e-8);
        assert!((q - 1.959963985).abs() <= 1e-8);
        let tail = std_normal_quantile(1e-300).unwrap();
        assert!(tail.is_finite() && tail < -30.0);
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            // Log-uniform over the tail as well as uniform in the bulk.
            let p: f64 = if rng.random_bool(0.5) {
                rng.random_range(1e-12..1.0 - 1e-12)
            } else {
                10f64.powf(rng.random_range(-12.0..-0.3))
            };
            let x = std_normal_quantile(p).unwrap();
            assert!((std_normal_cdf(x) - p).abs() <= 1e-9, "p={p} x={x}");
        }
    }

    #[test]
    fn log_sum_prod_examples() {
        assert_eq!(log_sum_prod(&[(0.0, 0.0)]).ln(), 0.0);
        let l = log_sum_prod(&[(0.5f64.ln(), 2f64.ln()), (0.5f64.ln(), 2f64.ln())]);
        assert!((l.ln() - 2f64.ln()).abs() <= 1e-12);
        assert!(log_sum_prod(&[]).is_zero());
        // zero weight on an infinite product contributes nothing
        assert_eq!(log_sum_prod(&[(f64::NEG_INFINITY, f64::INFINITY), (0.0, 0.0)]).ln(), 0.0);
    }

    #[test]
    fn log_sum_prod_matches_extended_precision() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let terms: Vec<(f64, f64)> = (0..50)
                .map(|_| (rng.random_range(-20.0..0.0), rng.random_range(-30.0..30.0)))
                .collect();
            let linear: Vec<f64> = terms.iter().map(|&(w, p)| (w + p).exp()).collect();
            let oracle = dd_sum(&linear).ln();
            let got = log_sum_prod(&terms).ln();
            assert!((got - oracle).abs() <= 1e-10 * oracle.abs().max(1.0));
        }
    }

    #[test]
    fn bisection_examples() {
        let r = solve_increasing_root(|x| x - 1.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r - 1.0).abs() < 1e-11);
        let r = solve_increasing_root(|x| x * x - 2.0, 0.0, 2.0, 1e-10).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-9);
        assert!(matches!(
            solve_increasing_root(|x| x + 5.0, 0.0, 2.0, 1e-10),
            Err(NumericsError::BracketFailure { .. })
        ));
        assert!(solve_increasing_root(|x| x, -1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn log_value_conventions() {
        assert!((LogValue::ZERO * LogValue::INFINITY).is_zero());
        assert!((LogValue::from_value(4.0) / LogValue::ZERO).is_infinite());
        assert_eq!(LogValue::from_value(-1.0), LogValue::ZERO);
        assert_eq!(LogValue::from_log(-0.0), LogValue::ONE);
        for s in ["inf", "-inf", "0.5", "-3.25"] {
            let v: LogValue = s.parse().unwrap();
            assert_eq!(v.to_string().parse::<LogValue>().unwrap(), v);
        }
        assert!("nan".parse::<LogValue>().is_err());
        let json = serde_json::to_string(&LogValue::ZERO).unwrap();
        assert_eq!(json, "\"-inf\"");
    }

    #[test]
    fn threshold_slack_absorbs_rounding() {
        let prod = LogValue::from_value(5.0) * LogValue::from_value(4.0);
        assert!(crosses_log(prod, (1.0f64 / 0.05).ln()));
        assert!(!crosses_log(LogValue::from_value(19.999), (1.0f64 / 0.05).ln()));
    }

    #[test]
    fn accumulators_remove_cleanly() {
        let mut p = LogProduct::default();
        p.insert(LogValue::INFINITY);
        p.insert(LogValue::from_value(3.0));
        assert!(p.value().is_infinite());
        p.remove(LogValue::INFINITY);
        assert!((p.value().value() - 3.0).abs() < 1e-12);
        p.insert(LogValue::ZERO);
        assert!(p.value().is_zero());

        let mut s = LinearSum::default();
        s.insert(f64::INFINITY);
        s.insert(2.0);
        assert_eq!(s.sum(), f64::INFINITY);
        s.remove(f64::INFINITY);
        assert_eq!(s.sum(), 2.0);
        assert_eq!(s.count(), 1);
    }

    proptest! {
        #[test]
        fn log_products_agree_with_linear(a in 1e-3f64..1e3, b in 1e-3f64..1e3, thr in 1.5f64..200.0) {
            let la = LogValue::from_value(a);
            let lb = LogValue::from_value(b);
            prop_assert_eq!(la * lb, lb * la);
            let linear = a * b;
            let rel = ((la * lb).value() - linear).abs() / linear;
            prop_assert!(rel <= 1e-12);
            if (linear / thr - 1.0).abs() > 1e-10 {
                prop_assert_eq!(crosses_log(la * lb, thr.ln()), linear >= thr);
            }
        }

        #[test]
        fn ordering_matches_values(a in 0.0f64..1e6, b in 0.0f64..1e6) {
            prop_assert_eq!(LogValue::from_value(a) <= LogValue::from_value(b), a <= b);
        }
    }
}
