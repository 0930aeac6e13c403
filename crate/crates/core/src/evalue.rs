//! E-value families and the transforms applied to them before they reach a
//! guard: admissible rescaling, hedging and boosting.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, std_normal_cdf, std_normal_quantile, LogValue};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalueError {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("at least one calibration score is required")]
    EmptyCalibration,
}

fn invalid(name: &'static str, value: f64, reason: &'static str) -> EvalueError {
    EvalueError::InvalidParameter { name, value, reason }
}

pub(crate) fn check_level(alpha: f64) -> Result<(), EvalueError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid("alpha", alpha, "must lie in (0, 1)"))
    }
}

fn indicator(p: f64, level: f64) -> f64 {
    if p <= level {
        1.0
    } else {
        0.0
    }
}

/// Constants of the binary online-simple e-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineSimpleParams {
    pub alpha: f64,
    pub a: f64,
    pub c: f64,
    pub theta_c: f64,
}

impl OnlineSimpleParams {
    pub fn new(alpha: f64, a: f64) -> Result<Self, EvalueError> {
        check_level(alpha)?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", a, "must be positive and finite"));
        }
        let log_inv = (1.0 / alpha).ln();
        let c = log_inv / (a * (log_inv / a).ln_1p());
        let theta_c = log_inv / (c * a);
        Ok(Self { alpha, a, c, theta_c })
    }
}

/// `theta_c * (1{p <= alpha_i} - c * alpha_i)`.
pub fn online_simple_evalue(p: f64, alpha_i: f64, params: &OnlineSimpleParams) -> LogValue {
    LogValue::from_log(params.theta_c * (indicator(p, alpha_i) - params.c * alpha_i))
}

/// Null expectation bound `u_i` of the online-simple e-value at level `alpha_i`.
/// Dividing by it makes the e-value admissible (exact unit mean under a uniform p).
pub fn online_simple_slack(alpha_i: f64, params: &OnlineSimpleParams) -> f64 {
    let theta = params.theta_c;
    let c = params.c;
    alpha_i * (theta * (1.0 - c * alpha_i)).exp() + (1.0 - alpha_i) * (-theta * c * alpha_i).exp()
}

/// The online-simple e-value divided by its slack.
pub fn admissible_online_simple_evalue(p: f64, alpha_i: f64, params: &OnlineSimpleParams) -> LogValue {
    let raw = online_simple_evalue(p, alpha_i, params);
    LogValue::from_log(raw.ln() - online_simple_slack(alpha_i, params).ln())
}

/// Constants of the three-valued online-adaptive e-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineAdaptiveParams {
    pub alpha: f64,
    pub a: f64,
    /// Supremum of `alpha_i / (1 - lambda_i)` over the stream.
    pub b_sup: f64,
    pub c: f64,
    pub theta_c: f64,
}

impl OnlineAdaptiveParams {
    pub fn new(alpha: f64, a: f64, b_sup: f64) -> Result<Self, EvalueError> {
        check_level(alpha)?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", a, "must be positive and finite"));
        }
        if !(b_sup > 0.0 && b_sup.is_finite()) {
            return Err(invalid("B", b_sup, "must be positive and finite"));
        }
        let log_inv = (1.0 / alpha).ln();
        let c = log_inv / (a * ((1.0 - alpha.powf(b_sup / a)) / b_sup).ln_1p());
        let theta_c = log_inv / (c * a);
        Ok(Self { alpha, a, b_sup, c, theta_c })
    }

    fn check_step(&self, alpha_i: f64, lambda_i: f64) -> Result<f64, EvalueError> {
        if !(0.0..=1.0).contains(&alpha_i) {
            return Err(invalid("alpha_i", alpha_i, "must lie in [0, 1]"));
        }
        if !(lambda_i >= alpha_i && lambda_i < 1.0) {
            return Err(invalid("lambda_i", lambda_i, "must lie in [alpha_i, 1)"));
        }
        let ratio = alpha_i / (1.0 - lambda_i);
        if ratio > self.b_sup * (1.0 + 1e-12) {
            return Err(invalid("alpha_i/(1-lambda_i)", ratio, "exceeds B"));
        }
        Ok(ratio)
    }
}

/// Three-valued e-value: `exp(theta_c)` below `alpha_i`, one on
/// `(alpha_i, lambda_i]`, `exp(-theta_c c alpha_i / (1 - lambda_i))` above.
pub fn online_adaptive_evalue(
    p: f64,
    alpha_i: f64,
    lambda_i: f64,
    params: &OnlineAdaptiveParams,
) -> Result<LogValue, EvalueError> {
    let ratio = params.check_step(alpha_i, lambda_i)?;
    let above = if p > lambda_i { 1.0 } else { 0.0 };
    Ok(LogValue::from_log(
        params.theta_c * (indicator(p, alpha_i) - params.c * ratio * above),
    ))
}

/// Tight null expectation bound of [`online_adaptive_evalue`].
pub fn online_adaptive_slack(
    alpha_i: f64,
    lambda_i: f64,
    params: &OnlineAdaptiveParams,
) -> Result<f64, EvalueError> {
    let ratio = params.check_step(alpha_i, lambda_i)?;
    let low = (-params.theta_c * params.c * ratio).exp();
    Ok(params.theta_c.exp_m1() * alpha_i + lambda_i * (1.0 - low) + low)
}

/// Standard normal calibrator `h_x(p) = exp(x Phi^{-1}(1 - p) - x^2 / 2)`.
///
/// `p = 0` gives an infinite and `p = 1` a zero e-value; callers that care
/// can detect both with [`LogValue::is_saturated`].
pub fn calibrate_lift(p: f64, x: f64) -> Result<LogValue, EvalueError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid("x", x, "must be positive and finite"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid("p", p, "must lie in [0, 1]"));
    }
    if p == 0.0 {
        return Ok(LogValue::INFINITY);
    }
    if p == 1.0 {
        return Ok(LogValue::ZERO);
    }
    // Phi^{-1}(1 - p) = -Phi^{-1}(p) keeps precision for tiny p.
    let z = -std_normal_quantile(p).expect("p is inside (0, 1)");
    Ok(LogValue::from_log(x * z - 0.5 * x * x))
}

/// Likelihood ratio of `N(mu1, 1)` against `N(mu0, 1)` at `x_obs`.
pub fn gro_gaussian_evalue(x_obs: f64, mu0: f64, mu1: f64) -> LogValue {
    let delta = mu1 - mu0;
    LogValue::from_log(delta * (x_obs - mu0) - 0.5 * delta * delta)
}

/// `log(1 - lambda + lambda * e)`.
pub fn hedge(e: LogValue, lambda: f64) -> LogValue {
    if lambda <= 0.0 {
        return LogValue::ONE;
    }
    if lambda >= 1.0 {
        return e;
    }
    LogValue::from_log(numerics::log_add_exp((1.0 - lambda).ln(), lambda.ln() + e.ln()))
}

/// Betting fraction for hedging, either fixed or the running estimate
/// `tau_hat_i = (1/2 + #{j < i : E_j > 1}) / i` of the alternative proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HedgeSchedule {
    Fixed { lambda: f64 },
    Adaptive { observed: u64, above_one: u64 },
}

impl Default for HedgeSchedule {
    fn default() -> Self {
        HedgeSchedule::adaptive()
    }
}

impl HedgeSchedule {
    pub fn adaptive() -> Self {
        HedgeSchedule::Adaptive { observed: 0, above_one: 0 }
    }

    pub fn fixed(lambda: f64) -> Result<Self, EvalueError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(invalid("lambda", lambda, "must lie in [0, 1]"));
        }
        Ok(HedgeSchedule::Fixed { lambda })
    }

    /// Fraction to use for the next e-value. Depends only on e-values already
    /// passed to [`HedgeSchedule::observe`].
    pub fn lambda(&self) -> f64 {
        match *self {
            HedgeSchedule::Fixed { lambda } => lambda,
            HedgeSchedule::Adaptive { observed, above_one } => {
                (0.5 + above_one as f64) / (observed as f64 + 1.0)
            }
        }
    }

    /// Records a raw (unhedged, unboosted) GRO e-value.
    #[must_use]
    pub fn observe(&self, raw: LogValue) -> Self {
        match *self {
            fixed @ HedgeSchedule::Fixed { .. } => fixed,
            HedgeSchedule::Adaptive { observed, above_one } => HedgeSchedule::Adaptive {
                observed: observed + 1,
                above_one: above_one + u64::from(raw > LogValue::ONE),
            },
        }
    }
}

/// Nonnegative weights `gamma_1, gamma_2, ...` for the weighted-average
/// intersection test.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GammaWeights {
    /// `6 / (pi^2 i^2)`, summing to one.
    #[default]
    InverseSquare,
    /// `(1 - r) r^(i-1)`, summing to one.
    Geometric { ratio: f64 },
    /// Explicit finite prefix; zero beyond it.
    Explicit { weights: Vec<f64> },
}

impl GammaWeights {
    /// Weight for rank `i >= 1`. Rank zero has weight zero.
    pub fn gamma(&self, i: usize) -> f64 {
        if i == 0 {
            return 0.0;
        }
        match self {
            GammaWeights::InverseSquare => 6.0 / (PI * PI * (i as f64).powi(2)),
            GammaWeights::Geometric { ratio } => (1.0 - ratio) * ratio.powi(i as i32 - 1),
            GammaWeights::Explicit { weights } => weights.get(i - 1).copied().unwrap_or(0.0),
        }
    }

    /// Nonincreasing with total mass at most one.
    pub fn validate(&self) -> Result<(), EvalueError> {
        match self {
            GammaWeights::InverseSquare => Ok(()),
            GammaWeights::Geometric { ratio } => {
                if *ratio > 0.0 && *ratio < 1.0 {
                    Ok(())
                } else {
                    Err(invalid("ratio", *ratio, "must lie in (0, 1)"))
                }
            }
            GammaWeights::Explicit { weights } => {
                if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
                    return Err(invalid("gamma", w, "weights must be nonnegative"));
                }
                if weights.windows(2).any(|w| w[1] > w[0]) {
                    return Err(invalid("gamma", f64::NAN, "weights must be nonincreasing"));
                }
                let total: f64 = weights.iter().sum();
                if total > 1.0 + 1e-12 {
                    return Err(invalid("gamma", total, "weights must sum to at most one"));
                }
                Ok(())
            }
        }
    }
}

/// Predictable truncation level
/// `m_t = max(max_{i in A} E_i, 1 / (alpha * prod_{A u U} E_i))`.
///
/// `max_active` is `None` for an empty active set.
pub fn boosting_cutoff(max_active: Option<LogValue>, product_active_and_discards: LogValue, alpha: f64) -> LogValue {
    let from_product = LogValue::from_log(-alpha.ln()) / product_active_and_discards;
    match max_active {
        Some(m) => m.max(from_product),
        None => from_product,
    }
}

const BOOST_TOL: f64 = 1e-8;

/// Largest `b >= 1` with `E[T_m(b E)] <= 1` for a null log-normal
/// `E = exp(delta Z - delta^2 / 2)` truncated at `m`.
pub fn boost_factor_lognormal(delta: f64, m: f64) -> f64 {
    if !(delta > 0.0) || !(m > 1.0) || !m.is_finite() {
        return 1.0;
    }
    let log_m = m.ln();
    let excess = |b: f64| {
        let l = log_m - b.ln();
        b * (1.0 - std_normal_cdf(delta / 2.0 - l / delta))
            + m * (1.0 - std_normal_cdf((l + delta * delta / 2.0) / delta))
            - 1.0
    };
    if excess(1.0) >= 0.0 {
        return 1.0;
    }
    // E[T(bE)] tends to m > 1 as b grows, so doubling finds a bracket.
    let mut hi = 2.0;
    while excess(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e300 {
            return 1.0;
        }
    }
    numerics::solve_increasing_root(excess, 1.0, hi, BOOST_TOL).unwrap_or(1.0)
}

/// Boosting factor for the hedged e-value `1 - lambda + lambda E`; lies in
/// `[1, 1/(1 - lambda))`.
pub fn boost_factor_hedged_lognormal(delta: f64, lambda: f64, m: f64) -> f64 {
    if lambda >= 1.0 {
        return boost_factor_lognormal(delta, m);
    }
    if !(delta > 0.0) || !(lambda > 0.0) || !(m > 1.0) || !m.is_finite() {
        return 1.0;
    }
    let excess = |b: f64| {
        let s = (lambda - 1.0 + m / b) / lambda;
        let log_s = s.ln();
        m + std_normal_cdf((log_s + delta * delta / 2.0) / delta) * (b * (1.0 - lambda) - m)
            + b * lambda * (1.0 - std_normal_cdf(delta / 2.0 - log_s / delta))
            - 1.0
    };
    if excess(1.0) >= 0.0 {
        return 1.0;
    }
    let hi = 1.0 / (1.0 - lambda);
    numerics::solve_increasing_root(excess, 1.0, hi, BOOST_TOL).unwrap_or(1.0)
}

/// Constants of the Freedman-type e-value for variance budget `a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreedmanParams {
    pub alpha: f64,
    pub a: f64,
    /// Share `alpha(a)` of the level spent on this budget.
    pub level_a: f64,
    pub kappa_a: f64,
    pub lambda_a: f64,
    pub psi_lambda: f64,
}

impl FreedmanParams {
    pub fn new(alpha: f64, a: f64) -> Result<Self, EvalueError> {
        check_level(alpha)?;
        if !(a > 0.0 && a.is_finite()) {
            return Err(invalid("a", a, "must be positive and finite"));
        }
        let spread = (2.0 * a.log2()).max(1.0);
        let level_a = alpha * 6.0 / (spread * spread * (PI * PI + 6.0));
        let log_inv = (1.0 / level_a).ln();
        let kappa_a = (2.0 * a * log_inv).sqrt() + log_inv / 2.0;
        let lambda_a = (kappa_a / a).ln_1p();
        let psi_lambda = lambda_a.exp_m1() - lambda_a;
        Ok(Self { alpha, a, level_a, kappa_a, lambda_a, psi_lambda })
    }
}

/// `lambda_a (1{p <= alpha_i} - alpha_i) - psi(lambda_a) alpha_i (1 - alpha_i)`.
pub fn freedman_evalue(p: f64, alpha_i: f64, params: &FreedmanParams) -> LogValue {
    LogValue::from_log(
        params.lambda_a * (indicator(p, alpha_i) - alpha_i)
            - params.psi_lambda * alpha_i * (1.0 - alpha_i),
    )
}

/// Soft-rank conformal e-value `(n + 1) s / (s + sum of calibration scores)`,
/// with `0 / 0 = 0`.
pub fn soft_rank_evalue(score: f64, calib_scores: &[f64]) -> Result<LogValue, EvalueError> {
    if calib_scores.is_empty() {
        return Err(EvalueError::EmptyCalibration);
    }
    if let Some(&bad) = std::iter::once(&score)
        .chain(calib_scores)
        .find(|s| !(**s >= 0.0 && s.is_finite()))
    {
        return Err(invalid("score", bad, "scores must be nonnegative and finite"));
    }
    let total = score + calib_scores.iter().sum::<f64>();
    if total == 0.0 {
        return Ok(LogValue::ZERO);
    }
    let n = calib_scores.len() as f64;
    Ok(LogValue::from_value((n + 1.0) * score / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// Adaptive Simpson on `[lo, hi]`.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, lo: f64, hi: f64, tol: f64, depth: u32) -> f64 {
        fn rec<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
        let fa = f(lo);
        let fb = f(hi);
        let fm = f(0.5 * (lo + hi));
        let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, lo, hi, fa, fm, fb, whole, tol, depth)
    }

    /// Integral of `h_x` over the unit interval, after substituting
    /// `p = Phi(-z)` so the tails become Gaussian-weighted and finite.
    fn calibrator_integral(x: f64) -> f64 {
        let integrand = |z: f64| {
            let p = std_normal_cdf(-z);
            if p <= 0.0 || p >= 1.0 {
                return 0.0;
            }
            calibrate_lift(p, x).unwrap().value() * numerics::std_normal_pdf(z)
        };
        simpson(integrand, -40.0, 40.0, 1e-12, 50)
    }

    #[test]
    fn online_simple_reference_values() {
        let params = OnlineSimpleParams::new(0.1, 1.0).unwrap();
        let e = online_simple_evalue(0.05, 0.1, &params).value();
        assert!((e - 2.6234).abs() <= 1e-3, "{e}");
        assert_eq!(online_simple_evalue(0.3, 0.0, &params), LogValue::ONE);
        assert!((online_simple_slack(0.1, &params) - 0.977).abs() <= 5e-4);
        let params3 = OnlineSimpleParams::new(0.1, 3.0).unwrap();
        assert!((online_simple_slack(0.1, &params3) - 0.997).abs() <= 5e-4);
        assert_eq!(online_simple_slack(0.0, &params), 1.0);
    }

    #[test]
    fn online_simple_product_crossing_matches_sum_form() {
        let params = OnlineSimpleParams::new(0.1, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let k = rng.random_range(1..30);
            let pairs: Vec<(f64, f64)> = (0..k)
                .map(|_| (rng.random::<f64>(), rng.random_range(0.0..0.2)))
                .collect();
            let log_prod: f64 = pairs.iter().map(|&(p, a)| online_simple_evalue(p, a, &params).ln()).sum();
            let sum: f64 = pairs.iter().map(|&(p, a)| indicator(p, a) - params.c * a).sum();
            let lhs = log_prod >= (1.0f64 / 0.1).ln();
            let rhs = sum >= params.c * params.a;
            if (sum - params.c * params.a).abs() > 1e-9 {
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn theta_identity_on_grid() {
        for &alpha in &[0.001, 0.01, 0.05, 0.1, 0.2, 0.5, 0.9] {
            for &a in &[0.1, 0.5, 1.0, 2.0, 3.0, 10.0, 100.0] {
                let p = OnlineSimpleParams::new(alpha, a).unwrap();
                let expected = ((1.0f64 / alpha).ln() / a).ln_1p();
                assert!((p.theta_c - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn admissible_online_simple_has_exact_unit_mean() {
        for &a in &[0.5, 1.0, 3.0] {
            let params = OnlineSimpleParams::new(0.1, a).unwrap();
            for &alpha_i in &[0.01, 0.05, 0.1, 0.3] {
                let hi = admissible_online_simple_evalue(0.0, alpha_i, &params).value();
                let lo = admissible_online_simple_evalue(1.0, alpha_i, &params).value();
                let mean = alpha_i * hi + (1.0 - alpha_i) * lo;
                assert!((mean - 1.0).abs() <= 1e-14, "{mean}");
            }
        }
    }

    #[test]
    fn online_adaptive_reference_values() {
        let params = OnlineAdaptiveParams::new(0.1, 1.0, 0.4).unwrap();
        let u = online_adaptive_slack(0.1, 0.5, &params).unwrap();
        assert!((u - 0.966).abs() <= 5e-4, "{u}");
        let tight = OnlineAdaptiveParams::new(0.1, 1.0, 0.2).unwrap();
        assert!((online_adaptive_slack(0.1, 0.5, &tight).unwrap() - 1.0).abs() <= 1e-12);
        assert_eq!(online_adaptive_evalue(0.3, 0.1, 0.5, &params).unwrap(), LogValue::ONE);
        assert!(online_adaptive_evalue(0.3, 0.1, 0.05, &params).is_err());
        assert!(online_adaptive_evalue(0.3, 0.1, 1.0, &params).is_err());
        assert!(online_adaptive_evalue(0.3, 0.3, 0.5, &params).is_err());
    }

    #[test]
    fn online_adaptive_two_point_mean_equals_slack() {
        let params = OnlineAdaptiveParams::new(0.1, 2.0, 0.5).unwrap();
        for &(ai, li) in &[(0.1, 0.5), (0.05, 0.9), (0.2, 0.6), (0.1, 0.1)] {
            let e = |p: f64| online_adaptive_evalue(p, ai, li, &params).unwrap().value();
            let mean = ai * e(0.0) + (li - ai) * e(0.5 * (ai + li)) + (1.0 - li) * e(1.0);
            let u = online_adaptive_slack(ai, li, &params).unwrap();
            assert!((mean - u).abs() <= 1e-12);
            assert!(u <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn calibrator_examples() {
        for &x in &[0.1, 0.5, 2.0] {
            let e = calibrate_lift(0.5, x).unwrap();
            assert!((e.ln() + x * x / 2.0).abs() <= 1e-12);
        }
        let e = calibrate_lift(0.025, 0.1).unwrap();
        let z = -std_normal_quantile(0.025).unwrap();
        assert!((e.ln() - (0.1 * z - 0.005)).abs() <= 1e-12);
        assert!((e.ln() - (0.1 * 1.95996 - 0.005)).abs() <= 1e-6);
        assert!(calibrate_lift(0.0, 0.1).unwrap().is_infinite());
        assert!(calibrate_lift(1.0, 0.1).unwrap().is_zero());
        assert!(calibrate_lift(0.5, 0.0).is_err());
    }

    #[test]
    fn calibrator_integrates_to_one() {
        for &x in &[0.05, 0.1, 0.5, 1.0] {
            let integral = calibrator_integral(x);
            assert!((integral - 1.0).abs() <= 1e-6, "x={x} integral={integral}");
        }
    }

    #[test]
    fn gro_examples_and_null_mean() {
        assert_eq!(gro_gaussian_evalue(1.5, 0.0, 3.0), LogValue::ONE);
        assert!((gro_gaussian_evalue(0.0, 0.0, 3.0).ln() + 4.5).abs() <= 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 1_000_000;
        let delta = 1.0;
        let draws: Vec<f64> = (0..n)
            .map(|_| gro_gaussian_evalue(rng.sample::<f64, _>(StandardNormal), 0.0, delta).value())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean={mean} se={se}");
    }

    #[test]
    fn hedge_examples() {
        let e = LogValue::from_value(3.0);
        assert_eq!(hedge(e, 0.0), LogValue::ONE);
        assert_eq!(hedge(e, 1.0), e);
        assert!((hedge(e, 0.5).value() - 2.0).abs() <= 1e-12);
        assert!((hedge(LogValue::ZERO, 0.3).value() - 0.7).abs() <= 1e-12);
        assert!(hedge(LogValue::INFINITY, 0.3).is_infinite());
    }

    #[test]
    fn hedged_binary_evalue_keeps_unit_mean() {
        let params = OnlineSimpleParams::new(0.1, 1.0).unwrap();
        for &lambda in &[0.0, 0.2, 0.7, 1.0] {
            let hi = hedge(admissible_online_simple_evalue(0.0, 0.1, &params), lambda).value();
            let lo = hedge(admissible_online_simple_evalue(1.0, 0.1, &params), lambda).value();
            assert!((0.1 * hi + 0.9 * lo - 1.0).abs() <= 1e-14);
            assert!(lo >= 1.0 - lambda - 1e-15);
        }
    }

    #[test]
    fn tau_hat_examples() {
        let s = HedgeSchedule::adaptive();
        assert_eq!(s.lambda(), 0.5);
        let s = [2.0, 0.5, 3.0]
            .iter()
            .fold(s, |s, &e| s.observe(LogValue::from_value(e)));
        assert!((s.lambda() - 0.625).abs() <= 1e-15);
        let s = (0..9).fold(HedgeSchedule::adaptive(), |s, _| s.observe(LogValue::from_value(0.9)));
        assert!((s.lambda() - 0.05).abs() <= 1e-15);
        let fixed = HedgeSchedule::fixed(0.3).unwrap().observe(LogValue::from_value(5.0));
        assert_eq!(fixed.lambda(), 0.3);
    }

    #[test]
    fn boosting_cutoff_examples() {
        let m = boosting_cutoff(Some(LogValue::from_value(4.0)), LogValue::from_value(4.0), 0.05);
        assert!((m.value() - 5.0).abs() <= 1e-12);
        let m = boosting_cutoff(None, LogValue::ONE, 0.05);
        assert!((m.value() - 20.0).abs() <= 1e-12);
        let m = boosting_cutoff(Some(LogValue::from_value(7.0)), LogValue::from_value(1e6), 0.05);
        assert!((m.value() - 7.0).abs() <= 1e-12);
    }

    #[test]
    fn boost_factor_reference_values() {
        assert!((boost_factor_lognormal(3.0, 20.0) - 3.494).abs() <= 1e-3);
        assert!((boost_factor_lognormal(3.0, 5.0) - 11.826).abs() <= 1e-3);
        assert!((boost_factor_lognormal(3.0, 100.0) - 1.774).abs() <= 1e-3);
        assert!((boost_factor_hedged_lognormal(3.0, 0.5, 20.0) - 1.354).abs() <= 1e-3);
        assert_eq!(boost_factor_lognormal(3.0, f64::INFINITY), 1.0);
        assert_eq!(boost_factor_hedged_lognormal(3.0, 0.0, 20.0), 1.0);
        let b = boost_factor_hedged_lognormal(1.0, 0.3, 20.0);
        assert!((1.0..1.0 / 0.7).contains(&b));
    }

    #[test]
    fn boost_factor_decreasing_in_cutoff() {
        for &delta in &[0.1, 1.0, 2.0, 3.0, 4.0] {
            let grid: Vec<f64> = (0..40).map(|k| 1.5 * 1.25f64.powi(k)).collect();
            let bs: Vec<f64> = grid.iter().map(|&m| boost_factor_lognormal(delta, m)).collect();
            for w in bs.windows(2) {
                assert!(w[1] <= w[0] + 1e-7, "delta={delta} {bs:?}");
            }
        }
    }

    #[test]
    fn boosted_truncated_mean_is_one() {
        // Quadrature over Z of E[min(b E, m)] at the solved factor.
        for &(delta, m) in &[(3.0, 20.0), (1.0, 10.0), (0.1, 20.0)] {
            let b = boost_factor_lognormal(delta, m);
            let f = |z: f64| {
                let e = (delta * z - delta * delta / 2.0).exp();
                (b * e).min(m) * numerics::std_normal_pdf(z)
            };
            let mean = simpson(f, -40.0, 40.0, 1e-12, 50);
            assert!((mean - 1.0).abs() <= 1e-6, "delta={delta} m={m} mean={mean}");
        }
    }

    #[test]
    fn freedman_constants_and_null_mean() {
        let params = FreedmanParams::new(0.1, 1.0).unwrap();
        let level = 0.1 * 6.0 / (PI * PI + 6.0);
        assert!((params.level_a - level).abs() <= 1e-15);
        let log_inv = (1.0 / level).ln();
        let kappa = (2.0 * log_inv).sqrt() + log_inv / 2.0;
        assert!((params.kappa_a - kappa).abs() <= 1e-12);
        assert!((params.lambda_a - (1.0 + kappa).ln()).abs() <= 1e-12);
        assert_eq!(freedman_evalue(0.5, 0.0, &params), LogValue::ONE);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| freedman_evalue(rng.random::<f64>(), 0.1, &params).value())
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        assert!(mean <= 1.0 + 3.0 * (var / n as f64).sqrt());
        // Exact two-point mean is strictly below one.
        let exact = 0.1 * freedman_evalue(0.0, 0.1, &params).value() + 0.9 * freedman_evalue(1.0, 0.1, &params).value();
        assert!(exact <= 1.0);
    }

    #[test]
    fn soft_rank_examples() {
        assert!((soft_rank_evalue(2.0, &[2.0, 2.0, 2.0]).unwrap().value() - 1.0).abs() <= 1e-12);
        assert!(soft_rank_evalue(0.0, &[1.0, 2.0]).unwrap().is_zero());
        assert!((soft_rank_evalue(2.0, &[1.0, 1.0, 1.0]).unwrap().value() - 1.6).abs() <= 1e-12);
        assert!(soft_rank_evalue(0.0, &[0.0, 0.0]).unwrap().is_zero());
        assert_eq!(soft_rank_evalue(1.0, &[]), Err(EvalueError::EmptyCalibration));
    }

    #[test]
    fn soft_rank_null_mean_under_exchangeability() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let reps = 100_000;
        let draws: Vec<f64> = (0..reps)
            .map(|_| {
                let calib: Vec<f64> = (0..20).map(|_| rng.random::<f64>().powi(2)).collect();
                let s = rng.random::<f64>().powi(2);
                soft_rank_evalue(s, &calib).unwrap().value()
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        assert!(mean <= 1.0 + 3.0 * (var / reps as f64).sqrt(), "{mean}");
    }

    #[test]
    fn gamma_weights_validate() {
        assert!(GammaWeights::InverseSquare.validate().is_ok());
        assert!(GammaWeights::Explicit { weights: vec![0.5, 0.3, 0.2] }.validate().is_ok());
        assert!(GammaWeights::Explicit { weights: vec![0.3, 0.5] }.validate().is_err());
        assert!(GammaWeights::Explicit { weights: vec![0.6, 0.5] }.validate().is_err());
        assert!(GammaWeights::Geometric { ratio: 1.0 }.validate().is_err());
        let total: f64 = (1..100_000).map(|i| GammaWeights::InverseSquare.gamma(i)).sum();
        assert!(total < 1.0 && total > 0.9999);
    }
}
