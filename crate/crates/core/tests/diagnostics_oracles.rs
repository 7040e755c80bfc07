mod common;

use approx::assert_abs_diff_eq;
use common::{corpus, expect, g_f_oracle, powers, rio_oracle, two_state};
use qclt_core::diagnostics::clt::{brownian_sup_probability, clt_test};
use qclt_core::diagnostics::conditions::{
    coboundary_check, conjecture_series, projective_series, strong_condition_series, ui_probe,
};
use qclt_core::diagnostics::inequalities::rio_bound_check;
use qclt_core::diagnostics::mixing::{alpha_bar, covariance_bound_check, quantile_fn, quantile_integral};
use qclt_core::diagnostics::{trend_verdict, Verdict};
use qclt_core::kernel::MarkovKernel;

/// `∫_0^a q²` as the second moment of `|f|` over the top `a` of `π`-mass.
fn quantile_integral_oracle(kernel: &MarkovKernel, f: &[f64], a: f64) -> f64 {
    let mut atoms: Vec<(f64, f64)> = f.iter().map(|v| v.abs()).zip(kernel.stationary().iter().copied()).collect();
    atoms.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut left = a;
    let mut total = 0.0;
    for (v, p) in atoms {
        let take = p.min(left);
        total += v * v * take;
        left -= take;
        if left <= 0.0 {
            break;
        }
    }
    total
}

fn alpha_bar_oracle(kernel: &MarkovKernel, f: &[f64], k: usize) -> f64 {
    let n = kernel.len();
    let pi = kernel.stationary();
    // rows of Q^k
    let mut qk: Vec<Vec<f64>> = (0..n).map(|x| (0..n).map(|y| f64::from(u8::from(x == y))).collect()).collect();
    for _ in 0..k {
        qk = qk
            .iter()
            .map(|row| (0..n).map(|y| (0..n).map(|z| row[z] * kernel.transition(z, y)).sum()).collect())
            .collect();
    }
    let mut best: f64 = 0.0;
    for &t in f {
        let marginal: f64 = (0..n).filter(|&y| f[y] <= t).map(|y| pi[y]).sum();
        let dev: f64 = (0..n)
            .map(|x| {
                let cond: f64 = (0..n).filter(|&y| f[y] <= t).map(|y| qk[x][y]).sum();
                pi[x] * (cond - marginal).abs()
            })
            .sum();
        best = best.max(dev);
    }
    best
}

#[test]
fn rio_exact_matches_enumeration_oracle() {
    for c in corpus() {
        for n in 1..=4 {
            let report = rio_bound_check(&c.kernel, &c.f, n).unwrap();
            let (lhs, rhs) = rio_oracle(&c.kernel, c.f.values(), n);
            assert_abs_diff_eq!(report.lhs, lhs, epsilon = 1e-10 * lhs.max(1.0));
            assert_abs_diff_eq!(report.rhs, rhs, epsilon = 1e-10 * rhs.max(1.0));
            assert!(report.holds, "{} n={n}", c.name);
        }
    }
}

#[test]
fn rio_holds_at_larger_horizons() {
    for c in corpus() {
        let n = if c.kernel.len() <= 2 { 12 } else if c.kernel.len() == 3 { 10 } else { 8 };
        let report = rio_bound_check(&c.kernel, &c.f, n).unwrap();
        assert!(report.holds && report.exact, "{}", c.name);
    }
}

#[test]
fn covariance_inequality_on_corpus() {
    for c in corpus() {
        let p = powers(&c.kernel, c.f.values(), 20);
        for k in 1..=20 {
            let check = covariance_bound_check(&c.kernel, &c.f, k).unwrap();
            let a = alpha_bar_oracle(&c.kernel, c.f.values(), k);
            assert_abs_diff_eq!(check.alpha_bar, a.min(1.0), epsilon = 1e-12);
            let prod: Vec<f64> = c.f.values().iter().zip(&p[k]).map(|(x, y)| (x * y).abs()).collect();
            assert_abs_diff_eq!(check.lhs, expect(c.kernel.stationary(), &prod), epsilon = 1e-12);
            let rhs = 3.0 * quantile_integral_oracle(&c.kernel, c.f.values(), a);
            assert_abs_diff_eq!(check.rhs, rhs, epsilon = 1e-10 * rhs.max(1.0));
            assert!(check.holds, "{} k={k}: {} > {}", c.name, check.lhs, check.rhs);
        }
    }
}

#[test]
fn canonical_mixing_values() {
    let (k, f) = two_state();
    assert_abs_diff_eq!(alpha_bar(&k, &f, 1).unwrap(), 0.225, epsilon = 1e-12);
    let q = quantile_fn(&k, &f);
    assert_abs_diff_eq!(quantile_integral(&q, 0.225).unwrap(), 2.025, epsilon = 1e-12);
    let check = covariance_bound_check(&k, &f, 1).unwrap();
    assert_abs_diff_eq!(check.lhs, 1.8, epsilon = 1e-12);
    assert_abs_diff_eq!(check.rhs, 6.075, epsilon = 1e-12);
}

#[test]
fn quantile_integral_matches_oracle_everywhere() {
    for c in corpus() {
        let q = quantile_fn(&c.kernel, &c.f);
        for i in 0..=40 {
            let a = i as f64 / 40.0;
            let want = quantile_integral_oracle(&c.kernel, c.f.values(), a);
            assert_abs_diff_eq!(quantile_integral(&q, a).unwrap(), want, epsilon = 1e-12 * want.max(1.0));
        }
    }
}

#[test]
fn ui_probe_values_match_powers() {
    for c in corpus() {
        let grid = [1usize, 2, 4, 8, 16];
        let report = ui_probe(&c.kernel, &c.f, &grid, &[1.0]).unwrap();
        let g = g_f_oracle(&c.kernel, c.f.values(), 5000);
        let p = powers(&c.kernel, c.f.values(), 16);
        for (point, &m) in report.sequence.iter().zip(&grid) {
            let prod: Vec<f64> = (0..c.f.len())
                .map(|x| (p[1..=m].iter().map(|u| u[x]).sum::<f64>() / m as f64 * g[x]).abs())
                .collect();
            assert_abs_diff_eq!(point.value, expect(c.kernel.stationary(), &prod), epsilon = 1e-9);
        }
    }
}

#[test]
fn ui_probe_two_state_first_value() {
    let (k, f) = two_state();
    let report = ui_probe(&k, &f, &[1, 10, 100, 1000, 10000], &[1.0, 10.0]).unwrap();
    assert_abs_diff_eq!(report.sequence[0].value, 4.5, epsilon = 1e-9);
    assert_abs_diff_eq!(report.sequence[1].value, 7.5 * 0.6 * (1.0 - 0.6f64.powi(10)) / (10.0 * 0.4), epsilon = 1e-9);
    assert_eq!(report.verdict, Verdict::Satisfied);
}

#[test]
fn strong_condition_two_state_closed_form() {
    let (k, f) = two_state();
    let grid = [1usize, 2, 5, 10, 50];
    let report = strong_condition_series(&k, &f, &grid, 50).unwrap();
    for (point, &m) in report.sequence.iter().zip(&grid) {
        assert_abs_diff_eq!(point.value, 4.5 * 0.6f64.powi(m as i32), epsilon = 1e-9);
    }
    assert_eq!(report.verdict, Verdict::Satisfied);
}

#[test]
fn projective_and_conjecture_series_on_corpus() {
    for c in corpus() {
        let p = powers(&c.kernel, c.f.values(), 30);
        let pi = c.kernel.stationary();
        let proj = projective_series(&c.kernel, &c.f, 30).unwrap();
        let mut partial = 0.0;
        for (j, point) in proj.sequence.iter().take(31).enumerate() {
            let prod: Vec<f64> = c.f.values().iter().zip(&p[j]).map(|(a, b)| (a * b).abs()).collect();
            partial += expect(pi, &prod);
            assert_abs_diff_eq!(point.value, partial, epsilon = 1e-9);
        }
        let (dr, kv) = conjecture_series(&c.kernel, &c.f, 30).unwrap();
        let mut acc = vec![0.0; c.f.len()];
        for j in 0..=30 {
            for (a, v) in acc.iter_mut().zip(&p[j]) {
                *a += v;
            }
            let prod: Vec<f64> = c.f.values().iter().zip(&acc).map(|(a, b)| a * b).collect();
            let abs: Vec<f64> = prod.iter().map(|v| v.abs()).collect();
            assert_abs_diff_eq!(dr.sequence[j].value, expect(pi, &abs), epsilon = 1e-9);
            assert_abs_diff_eq!(kv.sequence[j].value, expect(pi, &prod), epsilon = 1e-9);
        }
    }
}

#[test]
fn coboundary_holder_product_dominates_ui_values() {
    for c in corpus() {
        let grid = [1usize, 3, 9, 27];
        let (cob, lq) = coboundary_check(&c.kernel, &c.f, 2.0, 2.0, &grid).unwrap();
        let ui = ui_probe(&c.kernel, &c.f, &grid, &[]).unwrap();
        for (a, b) in cob.sequence.iter().zip(&ui.sequence) {
            assert!(a.value + 1e-12 >= b.value, "{}", c.name);
        }
        assert_eq!(lq.verdict, Verdict::Satisfied);
    }
}

#[test]
fn trend_rule_cases() {
    assert_eq!(trend_verdict(&[1.0, 0.5, 1e-4], 1e-3), Verdict::Satisfied);
    assert_eq!(trend_verdict(&[1.0, 2.0, 3.0], 1e-3), Verdict::Violated);
    assert_eq!(trend_verdict(&[1.0, 0.5, 0.7], 1e-3), Verdict::Inconclusive);
    assert_eq!(trend_verdict(&[], 1e-3), Verdict::Inconclusive);
}

#[test]
fn brownian_sup_reflection_values() {
    for a in [0.5, 1.0, 1.5, 2.0, 3.0] {
        // P(sup W ≤ a) = P(|W_1| ≤ a) = erf(a/√2)
        let want = 1.0 - erfc(a / std::f64::consts::SQRT_2);
        assert_abs_diff_eq!(brownian_sup_probability(a), want, epsilon = 1e-9);
    }
    assert_eq!(brownian_sup_probability(-1.0), 0.0);
}

fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 3.0 {
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x * x / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() < 1e-17 {
                break;
            }
        }
        1.0 - 2.0 / std::f64::consts::PI.sqrt() * sum
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..12 {
            term *= -((2 * k - 1) as f64) / (2.0 * x * x);
            sum += term;
        }
        (-x * x).exp() / (x * std::f64::consts::PI.sqrt()) * sum
    }
}

#[test]
fn clt_test_accepts_exact_normal_quantiles() {
    let count = 4000;
    let sigma_sq: f64 = 12.0;
    // midpoint quantiles of N(0, σ²)
    let sample: Vec<f64> = (0..count).map(|i| sigma_sq.sqrt() * probit((i as f64 + 0.5) / count as f64)).collect();
    let t = clt_test(&sample, sigma_sq, 0.05, 100).unwrap();
    assert!(t.pass);
    assert_abs_diff_eq!(t.ks_distance, 0.5 / count as f64, epsilon = 1e-6);
    let wrong = clt_test(&sample, 6.0, 0.05, 100).unwrap();
    assert!(!wrong.pass);
}

fn probit(u: f64) -> f64 {
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if 0.5 * erfc(-mid / std::f64::consts::SQRT_2) < u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
