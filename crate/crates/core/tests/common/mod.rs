//! Test corpus and brute-force oracles shared by the integration tests.
//! The oracles use plain `Vec` arithmetic and never call the operator or
//! diagnostics modules.

#![allow(dead_code)]

use qclt_core::kernel::{build_kernel, lazy_random_walk_kernel, metropolis_kernel, MarkovKernel};
use qclt_core::operator::Observable;

pub struct Case {
    pub name: &'static str,
    pub kernel: MarkovKernel,
    pub f: Observable,
}

pub fn two_state() -> (MarkovKernel, Observable) {
    let k = build_kernel(vec![vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap();
    let f = Observable::new(vec![3.0, -1.0], &k).unwrap();
    (k, f)
}

/// Subtracts the `π`-mean without going through the operator module.
pub fn centered(kernel: &MarkovKernel, raw: &[f64]) -> Observable {
    let mean: f64 = raw.iter().zip(kernel.stationary()).map(|(v, p)| v * p).sum();
    Observable::new(raw.iter().map(|v| v - mean).collect(), kernel).unwrap()
}

fn case(name: &'static str, kernel: MarkovKernel, raw: &[f64]) -> Case {
    let f = centered(&kernel, raw);
    Case { name, kernel, f }
}

/// Chains with at most four states.
pub fn corpus() -> Vec<Case> {
    let star = vec![
        vec![0.0, 1.0, 1.0, 1.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![1.0, 0.0, 0.0, 0.0],
    ];
    vec![
        case("two_state", build_kernel(vec![vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap(), &[3.0, -1.0]),
        case(
            "biased_cycle",
            build_kernel(vec![vec![0.0, 0.9, 0.1], vec![0.1, 0.0, 0.9], vec![0.9, 0.1, 0.0]]).unwrap(),
            &[1.0, 0.0, -1.0],
        ),
        case("lazy_star", lazy_random_walk_kernel(star, 0.5).unwrap(), &[0.0, 1.0, 2.0, 3.0]),
        case(
            "metropolis",
            metropolis_kernel(&[1.0, 2.0, 3.0], vec![vec![1.0 / 3.0; 3]; 3]).unwrap(),
            &[1.0, -1.0, 0.5],
        ),
        case(
            "doubly_stochastic",
            build_kernel(vec![
                vec![0.1, 0.2, 0.3, 0.4],
                vec![0.4, 0.1, 0.2, 0.3],
                vec![0.3, 0.4, 0.1, 0.2],
                vec![0.2, 0.3, 0.4, 0.1],
            ])
            .unwrap(),
            &[2.0, -1.0, 0.0, 1.0],
        ),
        case("iid", build_kernel(vec![vec![0.2, 0.5, 0.3]; 3]).unwrap(), &[4.0, -1.0, 0.0]),
        case(
            "sticky",
            build_kernel(vec![vec![0.95, 0.05, 0.0], vec![0.0, 0.9, 0.1], vec![0.2, 0.0, 0.8]]).unwrap(),
            &[1.0, -2.0, 0.5],
        ),
    ]
}

pub fn expect(pi: &[f64], v: &[f64]) -> f64 {
    pi.iter().zip(v).map(|(p, x)| p * x).sum()
}

pub fn matvec(kernel: &MarkovKernel, v: &[f64]) -> Vec<f64> {
    (0..kernel.len()).map(|x| (0..kernel.len()).map(|y| kernel.transition(x, y) * v[y]).sum()).collect()
}

/// `Q^j v` for `j = 0..=count`.
pub fn powers(kernel: &MarkovKernel, v: &[f64], count: usize) -> Vec<Vec<f64>> {
    let mut out = vec![v.to_vec()];
    for _ in 0..count {
        let next = matvec(kernel, out.last().unwrap());
        out.push(next);
    }
    out
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Poisson solution with `E_π h = 0` from the dense system
/// `(I − Q + 1πᵀ) h = f`.
pub fn poisson_oracle(kernel: &MarkovKernel, f: &[f64]) -> Vec<f64> {
    let n = kernel.len();
    let pi = kernel.stationary();
    let a = (0..n)
        .map(|x| (0..n).map(|y| f64::from(u8::from(x == y)) - kernel.transition(x, y) + pi[y]).collect())
        .collect();
    solve(a, f.to_vec())
}

/// `σ² = E f² + 2 Σ_{j≥1} E(f Q^j f)`, summed to `terms`.
pub fn variance_oracle(kernel: &MarkovKernel, f: &[f64], terms: usize) -> f64 {
    let pi = kernel.stationary();
    let p = powers(kernel, f, terms);
    let sq: Vec<f64> = f.iter().map(|v| v * v).collect();
    let mut s = expect(pi, &sq);
    for u in &p[1..] {
        let prod: Vec<f64> = f.iter().zip(u).map(|(a, b)| a * b).collect();
        s += 2.0 * expect(pi, &prod);
    }
    s
}

/// `g_f = sup_n |Σ_{j≤n} Q^j f|` over `n < terms`.
pub fn g_f_oracle(kernel: &MarkovKernel, f: &[f64], terms: usize) -> Vec<f64> {
    let mut partial = vec![0.0; f.len()];
    let mut best = vec![0.0f64; f.len()];
    for u in powers(kernel, f, terms) {
        for ((p, b), v) in partial.iter_mut().zip(best.iter_mut()).zip(&u) {
            *p += v;
            *b = b.max(p.abs());
        }
    }
    best
}

/// Calls `visit(path, probability)` for every path `ξ_1..ξ_n` with
/// `ξ_1 ~ π`.
pub fn for_each_stationary_path(kernel: &MarkovKernel, n: usize, mut visit: impl FnMut(&[usize], f64)) {
    let s = kernel.len();
    let pi = kernel.stationary();
    let mut path = vec![0usize; n];
    for code in 0..s.pow(n as u32) {
        let mut c = code;
        for slot in path.iter_mut() {
            *slot = c % s;
            c /= s;
        }
        let mut p = pi[path[0]];
        for w in path.windows(2) {
            p *= kernel.transition(w[0], w[1]);
        }
        if p > 0.0 {
            visit(&path, p);
        }
    }
}

/// Both sides of `E max_{k≤n} S_k² ≤ 8 Σ E X_k² + 16 Σ_k E|X_k E(S_n − S_k | F_k)|`
/// by enumeration; conditional expectations sum the future paths.
pub fn rio_oracle(kernel: &MarkovKernel, f: &[f64], n: usize) -> (f64, f64) {
    let mut lhs = 0.0;
    let mut cross = 0.0;
    let mut second = 0.0;
    for_each_stationary_path(kernel, n, |path, p| {
        let mut s: f64 = 0.0;
        let mut best: f64 = 0.0;
        for &x in path {
            s += f[x];
            best = best.max(s * s);
        }
        lhs += p * best;
        for (k, &x) in path.iter().enumerate() {
            second += p * f[x] * f[x];
            let future = future_sum(kernel, f, x, n - 1 - k);
            cross += p * (f[x] * future).abs();
        }
    });
    (lhs, 8.0 * second + 16.0 * cross)
}

/// `E(f(ξ_1) + … + f(ξ_r) | ξ_0 = x)` by recursion over paths.
fn future_sum(kernel: &MarkovKernel, f: &[f64], x: usize, r: usize) -> f64 {
    if r == 0 {
        return 0.0;
    }
    (0..kernel.len())
        .map(|y| {
            let q = kernel.transition(x, y);
            if q == 0.0 {
                0.0
            } else {
                q * (f[y] + future_sum(kernel, f, y, r - 1))
            }
        })
        .sum()
}
