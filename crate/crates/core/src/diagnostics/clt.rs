//! Goodness-of-fit tests for the quenched CLT and FCLT, and the mixture
//! identity between annealed and quenched laws.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::path_rng;
use crate::simulator::EnsembleSummary;
use crate::stats;

/// Allowance added to the KS critical value for finite-`n` bias.
pub const BIAS_ALLOWANCE: f64 = 0.005;
/// Below this, `σ²` is treated as zero.
pub const DEGENERATE_SIGMA_SQ: f64 = 1e-12;
/// Accepted deviation of the empirical sup-functional probability.
pub const SUP_TOLERANCE: f64 = 0.01;
/// Correlation bound coefficient: `|ρ| ≤ 3/√count`.
pub const CORRELATION_COEFFICIENT: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltTest {
    /// KS distance to `N(0, σ²)`; in the degenerate case, the fraction of
    /// endpoints outside the concentration band.
    pub ks_distance: f64,
    /// `c(α)/√count`; `α` itself in the degenerate case.
    pub critical: f64,
    pub bias_allowance: f64,
    pub pass: bool,
    pub degenerate: bool,
}

/// One-sample KS test of `S_n/√n` samples against `N(0, σ²)`.
///
/// Passes when the distance is at most `c(α)/√count + 0.005`. When `σ² ≈ 0`
/// the test becomes a concentration check: at most a fraction `α` of the
/// samples may exceed `n^{−1/4}` in absolute value.
pub fn clt_test(endpoints: &[f64], sigma_sq: f64, alpha: f64, n: usize) -> Result<CltTest> {
    if endpoints.is_empty() {
        return Err(Error::Empty);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} outside (0, 1)")));
    }
    if sigma_sq <= DEGENERATE_SIGMA_SQ {
        let band = (n.max(1) as f64).powf(-0.25);
        let outside = endpoints.iter().filter(|v| v.abs() > band).count() as f64 / endpoints.len() as f64;
        return Ok(CltTest { ks_distance: outside, critical: alpha, bias_allowance: 0.0, pass: outside <= alpha, degenerate: true });
    }
    let ks_distance = stats::ks_distance(endpoints, |x| stats::centered_normal_cdf(x, sigma_sq));
    let critical = stats::ks_critical(endpoints.len(), alpha);
    Ok(CltTest { ks_distance, critical, bias_allowance: BIAS_ALLOWANCE, pass: ks_distance <= critical + BIAS_ALLOWANCE, degenerate: false })
}

/// `P(sup_{[0,1]} W ≤ a) = 2Φ(a) − 1` (reflection principle).
pub fn brownian_sup_probability(a: f64) -> f64 {
    if a <= 0.0 {
        0.0
    } else {
        2.0 * stats::std_normal_cdf(a) - 1.0
    }
}

/// Monte Carlo estimate of `P(sup_{[0,1]} W ≤ a)` from `count` Gaussian
/// random walks with `steps` increments, with the Brownian-bridge crossing
/// correction between grid points (so the estimate has no discretization
/// bias). Returns `(estimate, std_error)`.
pub fn brownian_sup_monte_carlo(a: f64, count: usize, steps: usize, master_seed: u64) -> (f64, f64) {
    let dt = 1.0 / steps as f64;
    let sd = dt.sqrt();
    let samples: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master_seed, i as u64);
            let mut w = 0.0;
            let mut stay = 1.0;
            for _ in 0..steps {
                let z: f64 = rng.sample(StandardNormal);
                let next = w + sd * z;
                if next >= a {
                    return 0.0;
                }
                stay *= 1.0 - (-2.0 * (a - w) * (a - next) / dt).exp();
                w = next;
            }
            stay
        })
        .collect();
    (stats::mean(&samples), stats::std_error(&samples))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridTest {
    pub t: f64,
    pub ks_distance: f64,
    pub critical: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FcltReport {
    /// KS tests of `S_{[nt]}/√n` against `N(0, tσ²)` per grid time.
    pub per_t: Vec<GridTest>,
    /// Correlation of `S_{[n/2]}` and `S_n − S_{[n/2]}`, when the grid has
    /// both 1/2 and 1.
    pub increment_correlation: Option<f64>,
    pub correlation_bound: f64,
    /// Empirical `P(max_k S_k/(σ√n) ≤ 1)`.
    pub sup_probability: Option<f64>,
    pub sup_oracle: f64,
    pub sup_pass: Option<bool>,
    pub pass: bool,
}

/// FCLT checks on an ensemble: per-`t` KS, increment decorrelation and the
/// sup functional against the reflection principle.
pub fn fclt_test(ensemble: &EnsembleSummary, sigma_sq: f64, alpha: f64) -> Result<FcltReport> {
    let mut per_t = Vec::new();
    for (i, &t) in ensemble.grid.iter().enumerate() {
        if t == 0.0 {
            continue;
        }
        let col = ensemble.grid_column(i);
        let c = clt_test(&col, t * sigma_sq, alpha, ((ensemble.n as f64) * t) as usize)?;
        per_t.push(GridTest { t, ks_distance: c.ks_distance, critical: c.critical + c.bias_allowance, pass: c.pass });
    }
    let count = ensemble.count.max(1) as f64;
    let correlation_bound = CORRELATION_COEFFICIENT / count.sqrt();
    let half = ensemble.grid.iter().position(|&t| t == 0.5);
    let one = ensemble.grid.iter().position(|&t| t == 1.0);
    let increment_correlation = match (half, one) {
        (Some(h), Some(o)) => {
            let first = ensemble.grid_column(h);
            let second: Vec<f64> = ensemble.grid_column(o).iter().zip(&first).map(|(b, a)| b - a).collect();
            Some(stats::correlation(&first, &second))
        }
        _ => None,
    };
    let sup_oracle = brownian_sup_probability(1.0);
    let (sup_probability, sup_pass) = if sigma_sq > DEGENERATE_SIGMA_SQ {
        let sigma = sigma_sq.sqrt();
        let p = ensemble.max_signed.iter().filter(|&&m| m / sigma <= 1.0).count() as f64 / count;
        (Some(p), Some((p - sup_oracle).abs() <= SUP_TOLERANCE))
    } else {
        (None, None)
    };
    let pass = per_t.iter().all(|g| g.pass)
        && increment_correlation.map_or(true, |c| c.abs() <= correlation_bound)
        && sup_pass.unwrap_or(true);
    Ok(FcltReport { per_t, increment_correlation, correlation_bound, sup_probability, sup_oracle, sup_pass, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureCheck {
    pub ks_distance: f64,
    pub critical: f64,
    pub pass: bool,
}

/// Two-sample KS between annealed endpoints and pooled quenched endpoints.
pub fn mixture_check(annealed: &[f64], pooled_quenched: &[f64], alpha: f64) -> Result<MixtureCheck> {
    if annealed.is_empty() || pooled_quenched.is_empty() {
        return Err(Error::Empty);
    }
    let ks_distance = stats::ks_two_sample_distance(annealed, pooled_quenched);
    let critical = stats::ks_two_sample_critical(annealed.len(), pooled_quenched.len(), alpha);
    Ok(MixtureCheck { ks_distance, critical, pass: ks_distance <= critical })
}

/// Splits `count` into per-state counts proportional to `π` (largest
/// remainders get the leftover paths, ties to the lower state).
pub fn proportional_counts(pi: &[f64], count: usize) -> Vec<usize> {
    let raw: Vec<f64> = pi.iter().map(|p| p * count as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = count - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..pi.len()).collect();
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}
