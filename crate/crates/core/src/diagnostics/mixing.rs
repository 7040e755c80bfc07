//! Strong-mixing side: `ᾱ_k`, the quantile function of `|f|` and the
//! covariance inequality `E|f·Q^k f| ≤ 3 ∫_0^{ᾱ_k} q²`.

use serde::Serialize;

use crate::diagnostics::{ConditionId, ConditionReport, SequencePoint, Verdict};
use crate::error::{Error, Result};
use crate::kernel::MarkovKernel;
use crate::operator::Observable;
use crate::series::walk_powers;

/// Slack allowed in the exact inequality comparisons.
pub const INEQUALITY_SLACK: f64 = 1e-12;
/// Certified precision of the mixing-condition sum.
pub const MIXING_TOLERANCE: f64 = 1e-12;

/// Right-continuous nonincreasing step function on `[0, 1)`: value
/// `values[i]` on `[breaks[i], breaks[i + 1])`, with `breaks[0] = 0` and an
/// implicit final break at 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileFn {
    pub breaks: Vec<f64>,
    pub values: Vec<f64>,
}

impl QuantileFn {
    pub fn eval(&self, u: f64) -> f64 {
        let i = self.breaks.partition_point(|&b| b <= u);
        if i == 0 {
            self.values.first().copied().unwrap_or(0.0)
        } else {
            self.values[i - 1]
        }
    }
}

/// `q(u) = inf{t ≥ 0 : P_π(|f| > t) ≤ u}`, exactly, from the finite law of
/// `|f|` under `π`.
pub fn quantile_fn(kernel: &MarkovKernel, f: &Observable) -> QuantileFn {
    let mut atoms: Vec<(f64, f64)> = f
        .values()
        .iter()
        .zip(kernel.stationary())
        .map(|(v, &p)| (v.abs(), p))
        .collect();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut breaks = vec![0.0];
    let mut values = Vec::new();
    let mut mass = 0.0;
    let mut i = 0;
    while i < atoms.len() {
        let v = atoms[i].0;
        let mut p = 0.0;
        while i < atoms.len() && atoms[i].0 == v {
            p += atoms[i].1;
            i += 1;
        }
        if v == 0.0 {
            break;
        }
        values.push(v);
        mass += p;
        breaks.push(mass.min(1.0));
    }
    if mass < 1.0 - 1e-15 {
        values.push(0.0);
    } else {
        breaks.pop();
    }
    QuantileFn { breaks, values }
}

/// `∫_0^u q(v)² dv`, piecewise exactly.
pub fn quantile_integral(q: &QuantileFn, u: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidArgument(format!("u = {u} outside [0, 1]")));
    }
    let mut total = 0.0;
    for (i, &v) in q.values.iter().enumerate() {
        let lo = q.breaks[i];
        let hi = q.breaks.get(i + 1).copied().unwrap_or(1.0);
        if lo >= u {
            break;
        }
        total += v * v * (hi.min(u) - lo);
    }
    Ok(total)
}

/// Distinct thresholds that matter for `ᾱ`: every value of `f` except the
/// largest (where both CDFs are 1).
fn thresholds(f: &Observable) -> Vec<f64> {
    let mut t = f.values().to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.pop();
    t
}

/// Centered indicators `1{f ≤ t} − P_π(f ≤ t)` for each threshold.
fn centered_indicators(kernel: &MarkovKernel, f: &Observable) -> Vec<Vec<f64>> {
    thresholds(f)
        .into_iter()
        .map(|t| {
            let ind: Vec<f64> = f.values().iter().map(|&v| if v <= t { 1.0 } else { 0.0 }).collect();
            let c = kernel.expectation(&ind);
            ind.into_iter().map(|v| v - c).collect()
        })
        .collect()
}

fn abs_mean(kernel: &MarkovKernel, v: &[f64]) -> f64 {
    kernel.expectation(&v.iter().map(|x| x.abs()).collect::<Vec<_>>())
}

/// `ᾱ_k = max_t Σ_x π(x) |P(f(ξ_k) ≤ t | ξ_0 = x) − P_π(f ≤ t)|`, the
/// supremum over `t` being attained on the value set of `f`.
pub fn alpha_bar(kernel: &MarkovKernel, f: &Observable, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut best: f64 = 0.0;
    for g in centered_indicators(kernel, f) {
        let mut u = g;
        for _ in 0..k {
            u = kernel.apply(&u);
        }
        best = best.max(abs_mean(kernel, &u));
    }
    Ok(best.min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub k: usize,
    pub lhs: f64,
    pub alpha_bar: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `E_π|f·Q^k f|` against `3 ∫_0^{ᾱ_k} q²`.
pub fn covariance_bound_check(kernel: &MarkovKernel, f: &Observable, k: usize) -> Result<CovarianceCheck> {
    let alpha = alpha_bar(kernel, f, k)?;
    let mut u = f.values().to_vec();
    for _ in 0..k {
        u = kernel.apply(&u);
    }
    let prod: Vec<f64> = f.values().iter().zip(&u).map(|(a, b)| a * b).collect();
    let lhs = abs_mean(kernel, &prod);
    let rhs = 3.0 * quantile_integral(&quantile_fn(kernel, f), alpha)?;
    Ok(CovarianceCheck { k, lhs, alpha_bar: alpha, rhs, holds: lhs <= rhs + INEQUALITY_SLACK })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixingProfile {
    /// `ᾱ_k` for `k = 1..=k_max`.
    pub alpha_bar: Vec<f64>,
    pub quantile: QuantileFn,
    /// `∫_0^{ᾱ_k} q²` for `k = 1..=k_max`.
    pub integrals: Vec<f64>,
    /// Bound on `Σ_{k>k_max} ∫_0^{ᾱ_k} q²`.
    pub tail_bound: f64,
}

/// `ᾱ_k` and the quantile integrals for `k ≤ k_max`, plus a certified bound
/// on the rest of `Σ_k ∫_0^{ᾱ_k} q²`.
///
/// Since `ᾱ_k ≤ max_t ‖Q^k g_t‖∞` for the centered indicators `g_t`, and
/// `∫_0^a q² ≤ q(0)² a`, the tail is at most
/// `q(0)² Σ_t Σ_{k>k_max} ‖Q^k g_t‖∞`, each inner sum carrying a geometric
/// certificate.
pub fn mixing_profile(kernel: &MarkovKernel, f: &Observable, k_max: usize) -> Result<MixingProfile> {
    if k_max == 0 {
        return Err(Error::InvalidArgument("k_max must be at least 1".into()));
    }
    let quantile = quantile_fn(kernel, f);
    let q0 = quantile.eval(0.0);
    let indicators = centered_indicators(kernel, f);
    let per = if indicators.is_empty() || q0 == 0.0 {
        1.0
    } else {
        MIXING_TOLERANCE / (indicators.len() as f64 * q0 * q0)
    };
    let mut alpha = vec![0.0f64; k_max];
    let mut tail = 0.0;
    for g in &indicators {
        let cert = walk_powers(kernel, g, per, k_max, |j, u| {
            if (1..=k_max).contains(&j) {
                alpha[j - 1] = alpha[j - 1].max(abs_mean(kernel, u));
            }
        })?;
        tail += cert.tail_after(k_max);
    }
    let alpha: Vec<f64> = alpha.into_iter().map(|a| a.min(1.0)).collect();
    let integrals = alpha.iter().map(|&a| quantile_integral(&quantile, a)).collect::<Result<Vec<_>>>()?;
    Ok(MixingProfile { alpha_bar: alpha, quantile, integrals, tail_bound: q0 * q0 * tail })
}

/// Partial sums of `Σ_j ∫_0^{ᾱ_j} q²` (`MIXING_RIO`); satisfied when the
/// tail is certified, which makes the series finite.
pub fn mixing_clt_condition(kernel: &MarkovKernel, f: &Observable, k_max: usize) -> Result<ConditionReport> {
    let profile = mixing_profile(kernel, f, k_max)?;
    let mut partial = 0.0;
    let seq: Vec<SequencePoint> = profile
        .integrals
        .iter()
        .enumerate()
        .map(|(i, v)| {
            partial += v;
            SequencePoint::new(i + 1, partial)
        })
        .collect();
    let verdict = if profile.tail_bound.is_finite() { Verdict::Satisfied } else { Verdict::Inconclusive };
    let alpha_sum: f64 = profile.alpha_bar.iter().sum();
    let mut r = ConditionReport::new(ConditionId::MixingRio, seq, verdict)
        .tolerance("tail_bound", profile.tail_bound)
        .metric("value", partial)
        .metric("upper_bound", partial + profile.tail_bound)
        .metric("alpha_bar_sum", alpha_sum)
        .note("for bounded f the condition is equivalent to the summability of the alpha-bar coefficients");
    r.series.insert(
        "alpha_bar".into(),
        profile.alpha_bar.iter().enumerate().map(|(i, &a)| SequencePoint::new(i + 1, a)).collect(),
    );
    Ok(r)
}
