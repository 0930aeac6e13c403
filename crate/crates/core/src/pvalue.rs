//! Ready-made procedures for streams of p-values with individual levels
//! `alpha_i`, together with the published bounds they improve.
//!
//! Every procedure queries `S_t = {i <= t : p_i <= alpha_i}`. The improved
//! methods run a guard; the baselines evaluate their closed-form bounds
//! directly so that comparisons are against the original formulas.

use std::f64::consts::PI;

use thiserror::Error;

use crate::evalue::{
    admissible_online_simple_evalue, freedman_evalue, online_adaptive_evalue, online_adaptive_slack,
    online_simple_evalue, EvalueError, FreedmanParams, OnlineAdaptiveParams, OnlineSimpleParams,
};
use crate::guard::{BoundTrace, GuardError, MixtureGuard, ShortcutGuard};
use crate::numerics::LogValue;

/// Default upper end of the integer grid for m-online-simple.
pub const DEFAULT_A_MAX: usize = 100;
/// Default number of half-power steps for m-online-Freedman.
pub const DEFAULT_J_MAX: usize = 40;

/// Guards the integer rounding in the closed-form baselines against
/// accumulated summation error.
const ROUNDING_GUARD: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PvalueError {
    #[error("{what} has length {got}, expected {expected}")]
    LengthMismatch { what: &'static str, expected: usize, got: usize },
    #[error("p-value {0} outside [0, 1]")]
    InvalidP(f64),
    #[error("level {0} outside [0, 1]")]
    InvalidLevel(f64),
    #[error(transparent)]
    Evalue(#[from] EvalueError),
    #[error(transparent)]
    Guard(#[from] GuardError),
}

fn check_stream(ps: &[f64], levels: &[f64]) -> Result<(), PvalueError> {
    if levels.len() != ps.len() {
        return Err(PvalueError::LengthMismatch { what: "levels", expected: ps.len(), got: levels.len() });
    }
    if let Some(&p) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(PvalueError::InvalidP(p));
    }
    if let Some(&l) = levels.iter().find(|l| !(0.0..=1.0).contains(*l)) {
        return Err(PvalueError::InvalidLevel(l));
    }
    Ok(())
}

fn hit(p: f64, level: f64) -> bool {
    p <= level
}

fn ceil_bound(y: f64) -> usize {
    (y - ROUNDING_GUARD).ceil().max(0.0) as usize
}

fn run_sequential(ps: &[f64], levels: &[f64], alpha: f64, mut evalue: impl FnMut(usize) -> Result<LogValue, PvalueError>) -> Result<BoundTrace, PvalueError> {
    let mut guard = ShortcutGuard::sequential(alpha)?;
    let mut trace = BoundTrace::default();
    for i in 0..ps.len() {
        let e = evalue(i)?;
        trace.push(&guard.step(e, hit(ps[i], levels[i])));
    }
    Ok(trace)
}

/// Closed online-simple: SeqE-Guard on online-simple e-values.
pub fn closed_online_simple(ps: &[f64], levels: &[f64], alpha: f64, a: f64) -> Result<BoundTrace, PvalueError> {
    check_stream(ps, levels)?;
    let params = OnlineSimpleParams::new(alpha, a)?;
    run_sequential(ps, levels, alpha, |i| Ok(online_simple_evalue(ps[i], levels[i], &params)))
}

/// Closed online-simple in its additive form: the running sum of
/// `1{p_i <= alpha_i} - c alpha_i` over non-removed indices is compared with
/// `c a`, and a crossing removes the queried index with the smallest level.
pub fn closed_online_simple_sum_form(ps: &[f64], levels: &[f64], alpha: f64, a: f64) -> Result<Vec<usize>, PvalueError> {
    check_stream(ps, levels)?;
    let params = OnlineSimpleParams::new(alpha, a)?;
    let threshold = params.c * a;
    let slack = crate::numerics::THRESHOLD_SLACK * threshold.abs().max(1.0);
    let mut sum = crate::numerics::NeumaierSum::default();
    let mut active: Vec<(f64, usize)> = Vec::new();
    let mut d = 0;
    let mut out = Vec::with_capacity(ps.len());
    for i in 0..ps.len() {
        let included = hit(ps[i], levels[i]);
        let term = f64::from(u8::from(included)) - params.c * levels[i];
        sum.add(term);
        if included {
            active.push((levels[i], i));
            if sum.value() >= threshold - slack {
                d += 1;
                let pos = (0..active.len())
                    .min_by(|&x, &y| active[x].0.total_cmp(&active[y].0).then(active[x].1.cmp(&active[y].1)))
                    .expect("index i is active");
                let (level, _) = active.swap_remove(pos);
                sum.add(-(1.0 - params.c * level));
            }
        }
        out.push(d);
    }
    Ok(out)
}

/// Original online-simple bound `ceil(-c a + sum (1{p_i <= alpha_i} - c alpha_i))`.
pub fn baseline_online_simple(ps: &[f64], levels: &[f64], alpha: f64, a: f64) -> Result<Vec<usize>, PvalueError> {
    check_stream(ps, levels)?;
    let params = OnlineSimpleParams::new(alpha, a)?;
    Ok(os_bound_path(ps, levels, params.c, a))
}

fn os_bound_path(ps: &[f64], levels: &[f64], c: f64, a: f64) -> Vec<usize> {
    let mut sum = crate::numerics::NeumaierSum::default();
    sum.add(-c * a);
    ps.iter()
        .zip(levels)
        .map(|(&p, &l)| {
            sum.add(f64::from(u8::from(hit(p, l))) - c * l);
            ceil_bound(sum.value())
        })
        .collect()
}

/// SeqE-Guard on online-simple e-values divided by their slack `u_i`.
pub fn admissible_online_simple(ps: &[f64], levels: &[f64], alpha: f64, a: f64) -> Result<BoundTrace, PvalueError> {
    check_stream(ps, levels)?;
    let params = OnlineSimpleParams::new(alpha, a)?;
    run_sequential(ps, levels, alpha, |i| Ok(admissible_online_simple_evalue(ps[i], levels[i], &params)))
}

/// SeqE-Guard on online-adaptive e-values, optionally divided by their slack.
pub fn online_adaptive_improved(
    ps: &[f64],
    levels: &[f64],
    lambdas: &[f64],
    alpha: f64,
    a: f64,
    b_sup: f64,
    slack_corrected: bool,
) -> Result<BoundTrace, PvalueError> {
    check_stream(ps, levels)?;
    if lambdas.len() != ps.len() {
        return Err(PvalueError::LengthMismatch { what: "lambdas", expected: ps.len(), got: lambdas.len() });
    }
    let params = OnlineAdaptiveParams::new(alpha, a, b_sup)?;
    run_sequential(ps, levels, alpha, |i| {
        let e = online_adaptive_evalue(ps[i], levels[i], lambdas[i], &params)?;
        if slack_corrected {
            let u = online_adaptive_slack(levels[i], lambdas[i], &params)?;
            Ok(LogValue::from_log(e.ln() - u.ln()))
        } else {
            Ok(e)
        }
    })
}

/// Original online-adaptive bound
/// `ceil(-c a + sum (1{p_i <= alpha_i} - c alpha_i / (1 - lambda_i) 1{p_i > lambda_i}))`.
pub fn baseline_online_adaptive(ps: &[f64], levels: &[f64], lambdas: &[f64], alpha: f64, a: f64, b_sup: f64) -> Result<Vec<usize>, PvalueError> {
    check_stream(ps, levels)?;
    if lambdas.len() != ps.len() {
        return Err(PvalueError::LengthMismatch { what: "lambdas", expected: ps.len(), got: lambdas.len() });
    }
    let params = OnlineAdaptiveParams::new(alpha, a, b_sup)?;
    let mut sum = crate::numerics::NeumaierSum::default();
    sum.add(-params.c * a);
    let mut out = Vec::with_capacity(ps.len());
    for i in 0..ps.len() {
        // Validates the lambda constraints.
        online_adaptive_evalue(ps[i], levels[i], lambdas[i], &params)?;
        let above = if ps[i] > lambdas[i] { 1.0 } else { 0.0 };
        sum.add(f64::from(u8::from(hit(ps[i], levels[i]))) - params.c * levels[i] / (1.0 - lambdas[i]) * above);
        out.push(ceil_bound(sum.value()));
    }
    Ok(out)
}

/// Components of the m-online-simple mixture: weight `6/(a^2 pi^2)` and
/// online-simple constants at level `alpha(a) = 6 alpha / (a^2 pi^2)`.
pub fn m_online_simple_grid(alpha: f64, a_max: usize) -> Result<Vec<(f64, OnlineSimpleParams)>, PvalueError> {
    (1..=a_max.max(1))
        .map(|a| {
            let w = 6.0 / (PI * PI * (a * a) as f64);
            Ok((w, OnlineSimpleParams::new(alpha * w, a as f64)?))
        })
        .collect()
}

/// Components of the m-online-Freedman mixture over `a = 2^{j/2}`.
pub fn m_online_freedman_grid(alpha: f64, j_max: usize) -> Result<Vec<(f64, FreedmanParams)>, PvalueError> {
    (0..=j_max)
        .map(|j| {
            let spread = (j.max(1) as f64).powi(2);
            let w = 6.0 / (spread * (PI * PI + 6.0));
            Ok((w, FreedmanParams::new(alpha, 2f64.powf(j as f64 / 2.0))?))
        })
        .collect()
}

fn run_mixture(ps: &[f64], levels: &[f64], alpha: f64, weights: &[f64], mut components: impl FnMut(usize) -> Vec<LogValue>) -> Result<BoundTrace, PvalueError> {
    let mut guard = MixtureGuard::new(alpha, weights)?;
    let mut trace = BoundTrace::default();
    for i in 0..ps.len() {
        let out = guard.step(&components(i), hit(ps[i], levels[i]), levels[i])?;
        trace.push(&out);
    }
    Ok(trace)
}

/// m-online-simple: mixture shortcut over the online-simple grid `a = 1..a_max`.
pub fn m_online_simple(ps: &[f64], levels: &[f64], alpha: f64, a_max: usize) -> Result<BoundTrace, PvalueError> {
    check_stream(ps, levels)?;
    let grid = m_online_simple_grid(alpha, a_max)?;
    let weights: Vec<f64> = grid.iter().map(|g| g.0).collect();
    run_mixture(ps, levels, alpha, &weights, |i| {
        grid.iter().map(|(_, prm)| online_simple_evalue(ps[i], levels[i], prm)).collect()
    })
}

/// u-online-simple: maximum of the online-simple bounds at levels `alpha(a)`.
pub fn u_online_simple(ps: &[f64], levels: &[f64], alpha: f64, a_max: usize) -> Result<Vec<usize>, PvalueError> {
    check_stream(ps, levels)?;
    let grid = m_online_simple_grid(alpha, a_max)?;
    let mut best = vec![0; ps.len()];
    for (_, prm) in &grid {
        for (b, d) in best.iter_mut().zip(os_bound_path(ps, levels, prm.c, prm.a)) {
            *b = (*b).max(d);
        }
    }
    Ok(best)
}

/// m-online-Freedman: mixture shortcut over Freedman e-values.
pub fn m_online_freedman(ps: &[f64], levels: &[f64], alpha: f64, j_max: usize) -> Result<BoundTrace, PvalueError> {
    check_stream(ps, levels)?;
    let grid = m_online_freedman_grid(alpha, j_max)?;
    let weights: Vec<f64> = grid.iter().map(|g| g.0).collect();
    run_mixture(ps, levels, alpha, &weights, |i| {
        grid.iter().map(|(_, prm)| freedman_evalue(ps[i], levels[i], prm)).collect()
    })
}

/// SeqE-Guard on the Freedman e-values of a single budget `a`.
pub fn closed_online_freedman(ps: &[f64], levels: &[f64], alpha: f64, a: f64) -> Result<BoundTrace, PvalueError> {
    check_stream(ps, levels)?;
    let params = FreedmanParams::new(alpha, a)?;
    // The per-budget guard spends only alpha(a).
    run_sequential(ps, levels, params.level_a, |i| Ok(freedman_evalue(ps[i], levels[i], &params)))
}

/// Freedman bound `1 + floor(-kappa_a + sum (1{p_i <= alpha_i} - alpha_i))`
/// for one budget, `None` where `B_t = sum alpha_i (1 - alpha_i)` exceeds `a`.
pub fn baseline_freedman(ps: &[f64], levels: &[f64], params: &FreedmanParams) -> Vec<Option<usize>> {
    let mut sum = crate::numerics::NeumaierSum::default();
    sum.add(-params.kappa_a);
    let mut budget = crate::numerics::NeumaierSum::default();
    ps.iter()
        .zip(levels)
        .map(|(&p, &l)| {
            sum.add(f64::from(u8::from(hit(p, l))) - l);
            budget.add(l * (1.0 - l));
            if budget.value() <= params.a {
                Some((1.0 + (sum.value() - ROUNDING_GUARD).floor()).max(0.0) as usize)
            } else {
                None
            }
        })
        .collect()
}

/// u-online-Freedman: maximum over the gated grid of [`baseline_freedman`].
pub fn u_online_freedman(ps: &[f64], levels: &[f64], alpha: f64, j_max: usize) -> Result<Vec<usize>, PvalueError> {
    check_stream(ps, levels)?;
    let grid = m_online_freedman_grid(alpha, j_max)?;
    let mut best = vec![0; ps.len()];
    for (_, prm) in &grid {
        for (b, d) in best.iter_mut().zip(baseline_freedman(ps, levels, prm)) {
            *b = (*b).max(d.unwrap_or(0));
        }
    }
    Ok(best)
}
