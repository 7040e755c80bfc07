mod common;

use common::{centered, poisson_oracle};
use proptest::prelude::*;
use qclt_core::counterexample::{build_truncated_example, divergent_series_estimate, ExampleParams};
use qclt_core::diagnostics::{is_nondecreasing, is_nonincreasing, trend_verdict, Verdict};
use qclt_core::kernel::{build_kernel, stationary_residual, MarkovKernel};
use qclt_core::operator::{long_run_variance, martingale_scheme, poisson_solve};
use qclt_core::simulator::{quenched_ensemble, sample_path, EnsembleSpec, SeedRecord};
use qclt_core::stats::{ks_distance, ks_two_sample_distance};

/// Row-stochastic matrices with a positive diagonal and some zero entries,
/// kept irreducible by a positive cycle `x → x + 1`.
fn kernel_strategy() -> impl Strategy<Value = MarkovKernel> {
    (2usize..=5).prop_flat_map(|n| {
        prop::collection::vec(prop::collection::vec(prop_oneof![Just(0.0), 0.05f64..1.0], n), n).prop_map(move |raw| {
            let rows: Vec<Vec<f64>> = raw
                .into_iter()
                .enumerate()
                .map(|(x, mut row)| {
                    row[x] += 0.1;
                    row[(x + 1) % n] += 0.1;
                    let s: f64 = row.iter().sum();
                    row.into_iter().map(|v| v / s).collect()
                })
                .collect();
            build_kernel(rows).unwrap()
        })
    })
}

fn chain_and_values() -> impl Strategy<Value = (MarkovKernel, Vec<f64>)> {
    kernel_strategy().prop_flat_map(|k| {
        let n = k.len();
        (Just(k), prop::collection::vec(-5.0f64..5.0, n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn stationary_law_is_invariant(k in kernel_strategy()) {
        let pi = k.stationary();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pi.iter().all(|&p| p >= 0.0));
        prop_assert!(stationary_residual(k.table(), pi) < 1e-12);
    }

    #[test]
    fn poisson_solution_solves_the_equation((k, raw) in chain_and_values()) {
        let f = centered(&k, &raw);
        let h = poisson_solve(&k, &f).unwrap();
        let qh = k.apply(h.values());
        for x in 0..k.len() {
            prop_assert!((h.values()[x] - qh[x] - f.values()[x]).abs() < 1e-8);
        }
        let oracle = poisson_oracle(&k, f.values());
        for (a, b) in h.values().iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-7 * b.abs().max(1.0));
        }
        prop_assert!(k.expectation(h.values()).abs() < 1e-9);
    }

    #[test]
    fn variance_is_nonnegative_and_matches_poisson((k, raw) in chain_and_values()) {
        let f = centered(&k, &raw);
        let v = long_run_variance(&k, &f).unwrap().sigma_sq;
        let h = poisson_oracle(&k, f.values());
        let fh: Vec<f64> = f.values().iter().zip(&h).map(|(a, b)| a * b).collect();
        let ff: Vec<f64> = f.values().iter().map(|a| a * a).collect();
        let want = 2.0 * k.expectation(&fh) - k.expectation(&ff);
        prop_assert!(v >= 0.0);
        prop_assert!((v - want).abs() < 1e-6 * want.abs().max(1.0));
    }

    #[test]
    fn scheme_invariants_hold((k, raw) in chain_and_values(), m in 1usize..60) {
        let f = centered(&k, &raw);
        let s = martingale_scheme(&k, &f, m).unwrap();
        let (mds, second, table) = s.invariant_residuals(&k);
        let scale = f.sup_norm().max(1.0);
        prop_assert!(mds < 1e-9 * scale);
        prop_assert!(second < 1e-9 * scale * scale);
        prop_assert!(table < 1e-12 * scale);
        prop_assert!(s.sigma_m_sq >= 0.0);
    }

    #[test]
    fn pathwise_decomposition((k, raw) in chain_and_values(), m in 1usize..20, seed in any::<u64>()) {
        let f = centered(&k, &raw);
        let s = martingale_scheme(&k, &f, m).unwrap();
        let path = sample_path(&k, &s, 0, 300, SeedRecord { master_seed: seed, path_index: 0 }).unwrap();
        prop_assert!(path.decomposition_residual(&s) < 1e-9);
        prop_assert!(path.increment_residual(&s) < 1e-9);
    }

    #[test]
    fn ensembles_are_reproducible((k, raw) in chain_and_values(), seed in any::<u64>()) {
        let f = centered(&k, &raw);
        let spec = EnsembleSpec::new(40, 16, seed);
        let a = quenched_ensemble(&k, &f, 0, &spec).unwrap();
        let b = quenched_ensemble(&k, &f, 0, &spec).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.all_finite());
    }

    #[test]
    fn ks_distances_lie_in_unit_interval(
        a in prop::collection::vec(-10.0f64..10.0, 1..60),
        b in prop::collection::vec(-10.0f64..10.0, 1..60),
    ) {
        let d = ks_distance(&a, |x| 1.0 / (1.0 + (-x).exp()));
        prop_assert!((0.0..=1.0).contains(&d));
        let d2 = ks_two_sample_distance(&a, &b);
        prop_assert!((0.0..=1.0).contains(&d2));
        prop_assert_eq!(ks_two_sample_distance(&a, &a), 0.0);
        prop_assert!((d2 - ks_two_sample_distance(&b, &a)).abs() < 1e-15);
    }

    #[test]
    fn trend_rule_is_consistent(mut v in prop::collection::vec(0.0f64..10.0, 1..20), t in 0.0f64..5.0) {
        let verdict = trend_verdict(&v, t);
        let last = *v.last().unwrap();
        match verdict {
            Verdict::Satisfied => prop_assert!(is_nonincreasing(&v) && last <= t + 1e-12 * t.max(1.0)),
            Verdict::Violated => prop_assert!(is_nondecreasing(&v) && last > t),
            Verdict::Inconclusive => {}
        }
        v.sort_by(|a, b| b.total_cmp(a));
        let sorted_last = *v.last().unwrap();
        if sorted_last <= t {
            prop_assert_eq!(trend_verdict(&v, t), Verdict::Satisfied);
        }
    }

    #[test]
    fn counterexample_invariants(levels in 1usize..=4, seed in any::<u64>()) {
        let mut params = ExampleParams::defaults(levels);
        params.rademacher_seed = seed;
        let ex = build_truncated_example(params).unwrap();
        let report = ex.check_invariants();
        prop_assert!(report.holds());
        prop_assert!(report.total_length < 1.0);
        let series = divergent_series_estimate(&ex, ex.horizon()).unwrap();
        prop_assert!(series.value + 1e-12 >= series.lower_bound);
    }
}
