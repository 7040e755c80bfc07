//! Fixtures shared by the benchmarks in `benches/`.

use qclt_core::kernel::build_kernel;
use qclt_core::operator::{center, Observable};
use qclt_core::rng::splitmix64;
use qclt_core::MarkovKernel;

/// `Q = [[0.7, 0.3], [0.1, 0.9]]`, `f = (3, −1)`.
pub fn two_state() -> (MarkovKernel, Observable) {
    let k = build_kernel(vec![vec![0.7, 0.3], vec![0.1, 0.9]]).expect("valid kernel");
    let f = Observable::new(vec![3.0, -1.0], &k).expect("centered");
    (k, f)
}

fn uniform(state: &mut u64) -> f64 {
    *state = splitmix64(*state);
    (*state >> 11) as f64 / (1u64 << 53) as f64
}

/// Dense random kernel on `n` states with a centered random observable.
pub fn dense_chain(n: usize, seed: u64) -> (MarkovKernel, Observable) {
    let mut s = seed;
    let rows = (0..n)
        .map(|_| {
            let row: Vec<f64> = (0..n).map(|_| 0.01 + uniform(&mut s)).collect();
            let total: f64 = row.iter().sum();
            row.into_iter().map(|v| v / total).collect()
        })
        .collect();
    let k = build_kernel(rows).expect("positive kernel");
    let raw: Vec<f64> = (0..n).map(|_| uniform(&mut s) - 0.5).collect();
    let f = center(&Observable::new(raw, &k).expect("matching length"), &k);
    (k, f)
}
