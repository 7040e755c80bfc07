//! The Rio maximal inequality, the `24 E_π|f g_f|` maximal bound and
//! Hopf-type averages.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::MarkovKernel;
use crate::operator::{g_f, Observable};
use crate::simulator::{annealed_ensemble, quenched_ensemble, EnsembleSpec};
use crate::stats;

/// Largest horizon enumerated exactly.
pub const RIO_EXACT_MAX_N: usize = 12;
/// Largest number of enumerated paths.
pub const RIO_EXACT_MAX_PATHS: f64 = (1u64 << 24) as f64;
/// Standard errors of margin required by the Monte Carlo verdicts.
pub const MC_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RioReport {
    pub n: usize,
    /// `E(max_{k≤n} S_k²)` under stationarity.
    pub lhs: f64,
    /// `8 Σ_k E X_k² + 16 Σ_k E|X_k E(S_n − S_k | F_k)|`.
    pub rhs: f64,
    pub holds: bool,
    pub exact: bool,
    /// Standard error of `lhs` (0 when exact).
    pub lhs_std_error: f64,
}

/// Right side of the Rio inequality, exactly: by the Markov property
/// `E(S_n − S_k | F_k) = Σ_{j=1}^{n−k} (Q^j f)(ξ_k)`.
fn rio_rhs(kernel: &MarkovKernel, f: &Observable, n: usize) -> f64 {
    let fv = f.values();
    let second = kernel.expectation(&fv.iter().map(|v| v * v).collect::<Vec<_>>());
    // partial[r] = Σ_{j=1}^{r} Q^j f
    let mut cross = 0.0;
    let mut u = fv.to_vec();
    let mut partial = vec![0.0; fv.len()];
    for r in 0..n {
        if r > 0 {
            u = kernel.apply(&u);
            for (p, v) in partial.iter_mut().zip(&u) {
                *p += v;
            }
        }
        // the term with n − k = r
        let prod: Vec<f64> = fv.iter().zip(&partial).map(|(a, b)| (a * b).abs()).collect();
        cross += kernel.expectation(&prod);
    }
    8.0 * n as f64 * second + 16.0 * cross
}

/// Exact check of the Rio inequality by enumerating every path
/// `ξ_1, …, ξ_n` with `ξ_1 ~ π`.
pub fn rio_bound_check(kernel: &MarkovKernel, f: &Observable, n: usize) -> Result<RioReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let paths = (kernel.len() as f64).powi(n as i32);
    if n > RIO_EXACT_MAX_N || paths > RIO_EXACT_MAX_PATHS {
        return Err(Error::TooLargeForExact { paths });
    }
    let fv = f.values();
    let pi = kernel.stationary();
    let mut lhs = 0.0;
    // depth-first over (state, weight, S, max S²)
    let mut stack: Vec<(usize, usize, f64, f64, f64)> = Vec::new();
    for (x, &p) in pi.iter().enumerate() {
        let s = fv[x];
        stack.push((1, x, p, s, s * s));
    }
    while let Some((depth, x, w, s, best)) = stack.pop() {
        if depth == n {
            lhs += w * best;
            continue;
        }
        for (y, &q) in kernel.row(x).iter().enumerate() {
            if q > 0.0 {
                let s2 = s + fv[y];
                stack.push((depth + 1, y, w * q, s2, best.max(s2 * s2)));
            }
        }
    }
    let rhs = rio_rhs(kernel, f, n);
    Ok(RioReport { n, lhs, rhs, holds: lhs <= rhs + 1e-12, exact: true, lhs_std_error: 0.0 })
}

/// Monte Carlo version for horizons beyond exact enumeration: `lhs` is
/// estimated from `count` stationary paths; holds when
/// `lhs − 3·se ≤ rhs`.
pub fn rio_bound_monte_carlo(
    kernel: &MarkovKernel,
    f: &Observable,
    n: usize,
    count: usize,
    master_seed: u64,
) -> Result<RioReport> {
    let ens = annealed_ensemble(kernel, f, &EnsembleSpec::new(n, count, master_seed).with_grid(Vec::new()))?;
    let samples: Vec<f64> = ens.max_stats.iter().map(|m| m * m * n as f64).collect();
    let lhs = stats::mean(&samples);
    let se = stats::std_error(&samples);
    let rhs = rio_rhs(kernel, f, n);
    Ok(RioReport { n, lhs, rhs, holds: lhs - MC_SIGMAS * se <= rhs, exact: false, lhs_std_error: se })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalPoint {
    pub n: usize,
    /// Estimate of `E^x(max_{k≤n} S_k²)/n`.
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaximalBoundReport {
    pub start_state: usize,
    /// `24·E_π|f g_f|`.
    pub bound: f64,
    pub points: Vec<MaximalPoint>,
    /// The estimate at the largest `n` is at least 3 standard errors below
    /// the bound.
    pub holds: bool,
}

/// Monte Carlo estimates of `E^x(max_{k≤n} S_k²)/n` over the `n` grid
/// against the exact bound `24·E_π|f g_f|`.
pub fn maximal_bound_check(
    kernel: &MarkovKernel,
    f: &Observable,
    x: usize,
    n_grid: &[usize],
    count: usize,
    master_seed: u64,
) -> Result<MaximalBoundReport> {
    if n_grid.is_empty() {
        return Err(Error::InvalidArgument("n grid must be nonempty".into()));
    }
    let g = g_f(kernel, f)?;
    let fg: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| (a * b).abs()).collect();
    let bound = 24.0 * kernel.expectation(&fg);
    let mut points = Vec::new();
    for &n in n_grid {
        let ens = quenched_ensemble(kernel, f, x, &EnsembleSpec::new(n, count, master_seed).with_grid(Vec::new()))?;
        let sq: Vec<f64> = ens.max_stats.iter().map(|m| m * m).collect();
        points.push(MaximalPoint { n, mean: stats::mean(&sq), std_error: stats::std_error(&sq) });
    }
    let last = points.last().expect("nonempty grid");
    let holds = last.mean + MC_SIGMAS * last.std_error <= bound;
    Ok(MaximalBoundReport { start_state: x, bound, points, holds })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HopfReport {
    /// `(1/n) Σ_{k=1}^n (Q^k h)(x)`.
    pub average: f64,
    /// `E_π h`.
    pub limit: f64,
    pub gap: f64,
}

pub fn hopf_average_check(kernel: &MarkovKernel, h: &Observable, x: usize, n: usize) -> Result<HopfReport> {
    if x >= kernel.len() {
        return Err(Error::InvalidArgument(format!("state {x} out of range")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let mut u = h.values().to_vec();
    let mut acc = 0.0;
    for _ in 0..n {
        u = kernel.apply(&u);
        acc += u[x];
    }
    let average = acc / n as f64;
    let limit = h.mean_under_pi();
    Ok(HopfReport { average, limit, gap: (average - limit).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::build_kernel;
    use crate::operator::center;
    use approx::assert_abs_diff_eq;

    fn two_state() -> (MarkovKernel, Observable) {
        let k = build_kernel(vec![vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
        let f = Observable::new(vec![3.0, -1.0], &k).unwrap();
        (k, f)
    }

    /// Brute-force oracle: enumerate paths and compute the conditional
    /// expectations by enumerating futures.
    fn rio_oracle(k: &MarkovKernel, f: &[f64], n: usize) -> (f64, f64) {
        let s = k.len();
        let total = s.pow(n as u32);
        let mut lhs = 0.0;
        let mut second = 0.0;
        let mut cross = 0.0;
        for code in 0..total {
            let path: Vec<usize> = (0..n).map(|i| (code / s.pow(i as u32)) % s).collect();
            let mut w = k.stationary()[path[0]];
            for i in 1..n {
                w *= k.transition(path[i - 1], path[i]);
            }
            let mut sum = 0.0;
            let mut best: f64 = 0.0;
            for &x in &path {
                sum += f[x];
                best = best.max(sum * sum);
                second += w * f[x] * f[x];
            }
            lhs += w * best;
            for kk in 0..n {
                // E(S_n − S_k | ξ_k) by enumerating ξ_{k+1..n}
                let rest = n - kk - 1;
                let mut ce = 0.0;
                for fut in 0..s.pow(rest as u32) {
                    let mut prev = path[kk];
                    let mut wf = 1.0;
                    let mut sf = 0.0;
                    for i in 0..rest {
                        let y = (fut / s.pow(i as u32)) % s;
                        wf *= k.transition(prev, y);
                        sf += f[y];
                        prev = y;
                    }
                    ce += wf * sf;
                }
                cross += w * (f[path[kk]] * ce).abs();
            }
        }
        (lhs, 8.0 * second + 16.0 * cross)
    }

    #[test]
    fn rio_matches_oracle() {
        let (k, f) = two_state();
        for n in 1..=6 {
            let r = rio_bound_check(&k, &f, n).unwrap();
            let (lhs, rhs) = rio_oracle(&k, f.values(), n);
            assert_abs_diff_eq!(r.lhs, lhs, epsilon = 1e-9);
            assert_abs_diff_eq!(r.rhs, rhs, epsilon = 1e-9);
            assert!(r.holds);
        }
        let r = rio_bound_check(&k, &f, 1).unwrap();
        assert_abs_diff_eq!(r.lhs, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.rhs, 24.0, epsilon = 1e-12);
    }

    #[test]
    fn rio_iid_martingale_differences() {
        let k = build_kernel(vec![vec![0.2, 0.3, 0.5]; 3]).unwrap();
        let f = center(&Observable::new(vec![1.0, -2.0, 4.0], &k).unwrap(), &k);
        let second = k.expectation(&f.values().iter().map(|v| v * v).collect::<Vec<_>>());
        let r = rio_bound_check(&k, &f, 4).unwrap();
        assert_abs_diff_eq!(r.rhs, 8.0 * 4.0 * second, epsilon = 1e-10);
        assert!(r.lhs <= 8.0 * 4.0 * second);
    }

    #[test]
    fn rio_too_large() {
        let (k, f) = two_state();
        assert!(matches!(rio_bound_check(&k, &f, 13), Err(Error::TooLargeForExact { .. })));
        let mc = rio_bound_monte_carlo(&k, &f, 50, 2000, 3).unwrap();
        assert!(mc.holds && !mc.exact && mc.lhs_std_error > 0.0);
    }

    #[test]
    fn maximal_bound() {
        let (k, f) = two_state();
        let r = maximal_bound_check(&k, &f, 0, &[100, 1000], 500, 9).unwrap();
        assert_abs_diff_eq!(r.bound, 180.0, epsilon = 1e-9);
        assert!(r.holds);
        let z = Observable::zero(&k);
        let r = maximal_bound_check(&k, &z, 1, &[10], 10, 9).unwrap();
        assert_eq!(r.bound, 0.0);
        assert_eq!(r.points[0].mean, 0.0);
        assert!(r.holds);
    }

    #[test]
    fn hopf_averages() {
        let (k, f) = two_state();
        let c = Observable::new(vec![2.0, 2.0], &k).unwrap();
        assert!(hopf_average_check(&k, &c, 0, 7).unwrap().gap <= 1e-15);
        let h = center(&Observable::new(f.values().iter().map(|v| v * v).collect(), &k).unwrap(), &k);
        for x in 0..2 {
            let r = hopf_average_check(&k, &h, x, 1000).unwrap();
            assert!(r.gap <= 0.01);
            assert_eq!(r.limit, h.mean_under_pi());
        }
    }
}
