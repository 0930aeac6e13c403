#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdguard_core::LogValue;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Family of intersection tests, evaluated from scratch per subset.
#[derive(Clone, Copy)]
pub enum Fam<'a> {
    Product,
    Average,
    Weighted(&'a dyn Fn(usize) -> f64),
}

const SLACK: f64 = 1e-12;

/// `phi_I` for the subset given as increasing 0-based positions.
fn phi_naive(fam: Fam<'_>, e: &[f64], idx: &[usize], alpha: f64) -> bool {
    let thr = 1.0 / alpha;
    match fam {
        Fam::Product => {
            // Work in logs; a zero factor pins every later prefix at zero.
            let mut log_prod = 0.0f64;
            let mut zero = false;
            for &i in idx {
                if e[i] == 0.0 {
                    zero = true;
                }
                if zero {
                    continue;
                }
                log_prod += e[i].ln();
                if log_prod >= thr.ln() - SLACK * thr.ln().abs().max(1.0) {
                    return true;
                }
            }
            false
        }
        Fam::Average => {
            let mut sum = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                sum += e[i];
                if sum >= (k + 1) as f64 * thr * (1.0 - SLACK) {
                    return true;
                }
            }
            false
        }
        Fam::Weighted(gamma) => {
            let mut sum = 0.0;
            for (k, &i) in idx.iter().enumerate() {
                let g = gamma(k + 1);
                if g > 0.0 {
                    sum += e[i] * g;
                }
            }
            sum >= thr * (1.0 - SLACK)
        }
    }
}

/// Closure bounds along a query path: subsets are visited from the full set
/// downwards and each test is recomputed from its definition.
pub fn closure_path(fam: Fam<'_>, e: &[f64], included: &[bool], alpha: f64) -> Vec<usize> {
    let t_max = e.len();
    let size = 1usize << t_max;
    let mut accepted = Vec::new();
    for mask in (0..size).rev() {
        let idx: Vec<usize> = (0..t_max).filter(|i| mask >> i & 1 == 1).collect();
        if !phi_naive(fam, e, &idx, alpha) {
            accepted.push(mask);
        }
    }
    let mut out = Vec::with_capacity(t_max);
    let mut query = 0usize;
    for t in 1..=t_max {
        if included[t - 1] {
            query |= 1 << (t - 1);
        }
        let limit = 1usize << t;
        let best = accepted
            .iter()
            .filter(|&&m| m < limit)
            .map(|&m| (query & !m).count_ones() as usize)
            .min()
            .expect("the empty set is never rejected");
        out.push(best);
    }
    out
}

/// Single-subset closure bound.
pub fn closure_subset(fam: Fam<'_>, e: &[f64], subset: &[usize], alpha: f64) -> usize {
    let mut included = vec![false; e.len()];
    for &i in subset {
        included[i - 1] = true;
    }
    *closure_path(fam, e, &included, alpha).last().unwrap_or(&0)
}

/// E-values log-uniform on `[e^-3, e^3]`.
pub fn log_uniform_stream(rng: &mut ChaCha8Rng, t: usize) -> Vec<f64> {
    (0..t).map(|_| rng.random_range(-3.0f64..3.0).exp()).collect()
}

pub fn to_log(e: &[f64]) -> Vec<LogValue> {
    e.iter().map(|&v| LogValue::from_value(v)).collect()
}

pub fn inverse_square(i: usize) -> f64 {
    6.0 / (std::f64::consts::PI.powi(2) * (i * i) as f64)
}

/// Gaussian p-values with random signal and alternative share.
pub fn gaussian_pvalues(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mu = rng.random_range(1.0..4.5);
    let pi = rng.random_range(0.05..0.8);
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            let x = if rng.random_bool(pi) { z + mu } else { z };
            tdguard_core::numerics::std_normal_cdf(-x)
        })
        .collect()
}
