//! Exact Markov-operator calculus on finite state spaces.
//!
//! Everything here is a pure function of an immutable kernel and observable:
//! `Qf`, the resolvent partial sums `v_k = (I + Q + … + Q^{k−1}) f`, the
//! Cesàro tails `f_m = (Q + … + Q^m) f / m`, the supremum function
//! `g_f = sup_n |Σ_{j≤n} Q^j f|`, Poisson solutions of `(I − Q)h = f`, the
//! martingale scheme for a fixed `m`, and the long-run variance.

use nalgebra::{DMatrix, DVector};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernel::MarkovKernel;
use crate::series::walk_powers;

/// Centering tolerance, relative to `max(1, ‖f‖∞)`.
pub const CENTERING_TOLERANCE: f64 = 1e-12;
/// Precision of `g_f` and of the geometric truncations it relies on.
pub const SUP_TOLERANCE: f64 = 1e-12;
/// Certified truncation error of the long-run variance.
pub const VARIANCE_TOLERANCE: f64 = 1e-10;
/// Residual accepted for `(I − Q)h = f`.
pub const POISSON_TOLERANCE: f64 = 1e-10;
/// Negative variances above `−VARIANCE_CLAMP` are rounding and clamp to 0.
pub const VARIANCE_CLAMP: f64 = 1e-9;
/// Largest state count solved directly by LU.
pub const POISSON_DENSE_LIMIT: usize = 512;

/// A real function on the state space, aligned with the kernel's state order.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    values: Vec<f64>,
    mean_under_pi: f64,
}

impl Observable {
    pub fn new(values: Vec<f64>, kernel: &MarkovKernel) -> Result<Self> {
        if values.len() != kernel.len() {
            return Err(Error::LengthMismatch { expected: kernel.len(), got: values.len() });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("observable value {v} is not finite")));
        }
        let mean_under_pi = kernel.expectation(&values);
        Ok(Self { values, mean_under_pi })
    }

    pub fn zero(kernel: &MarkovKernel) -> Self {
        Self { values: vec![0.0; kernel.len()], mean_under_pi: 0.0 }
    }

    /// Parses a JSON array of numbers.
    pub fn from_json(json: &str, kernel: &MarkovKernel) -> Result<Self> {
        let values: Vec<f64> = serde_json::from_str(json)
            .map_err(|e| Error::InvalidArgument(format!("observable JSON: {e}")))?;
        Self::new(values, kernel)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean_under_pi(&self) -> f64 {
        self.mean_under_pi
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_centered(&self) -> bool {
        self.mean_under_pi.abs() <= CENTERING_TOLERANCE * self.sup_norm().max(1.0)
    }

    fn require_centered(&self) -> Result<()> {
        if self.is_centered() {
            Ok(())
        } else {
            Err(Error::NotCentered { mean: self.mean_under_pi })
        }
    }

    fn from_parts(values: Vec<f64>, kernel: &MarkovKernel) -> Self {
        let mean_under_pi = kernel.expectation(&values);
        Self { values, mean_under_pi }
    }
}

impl Serialize for Observable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

fn check_len(kernel: &MarkovKernel, f: &Observable) -> Result<()> {
    if f.len() == kernel.len() {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected: kernel.len(), got: f.len() })
    }
}

/// `raw − E_π raw`.
pub fn center(raw: &Observable, kernel: &MarkovKernel) -> Observable {
    let mean = kernel.expectation(raw.values());
    Observable::from_parts(raw.values.iter().map(|v| v - mean).collect(), kernel)
}

/// `(Qf)(x) = Σ_y Q(x,y) f(y)`.
pub fn apply_q(kernel: &MarkovKernel, f: &Observable) -> Result<Observable> {
    check_len(kernel, f)?;
    Ok(Observable::from_parts(kernel.apply(f.values()), kernel))
}

fn recentered_step(kernel: &MarkovKernel, u: &[f64], out: &mut [f64]) {
    kernel.table().apply_into(u, out);
    let mean = kernel.expectation(out);
    for v in out.iter_mut() {
        *v -= mean;
    }
}

/// `v_k = Σ_{j=0}^{k−1} Q^j f`, by iterated application of `Q`.
pub fn v_k(kernel: &MarkovKernel, f: &Observable, k: usize) -> Result<Observable> {
    check_len(kernel, f)?;
    f.require_centered()?;
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut u = f.values.clone();
    let mut next = vec![0.0; u.len()];
    let mut acc = u.clone();
    for _ in 1..k {
        recentered_step(kernel, &u, &mut next);
        std::mem::swap(&mut u, &mut next);
        for (a, v) in acc.iter_mut().zip(&u) {
            *a += v;
        }
    }
    Ok(Observable::from_parts(acc, kernel))
}

/// `f_m = (1/m) Σ_{j=1}^m Q^j f`.
pub fn f_m(kernel: &MarkovKernel, f: &Observable, m: usize) -> Result<Observable> {
    check_len(kernel, f)?;
    f.require_centered()?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let mut u = f.values.clone();
    let mut next = vec![0.0; u.len()];
    let mut acc = vec![0.0; u.len()];
    for _ in 0..m {
        recentered_step(kernel, &u, &mut next);
        std::mem::swap(&mut u, &mut next);
        for (a, v) in acc.iter_mut().zip(&u) {
            *a += v;
        }
    }
    let inv = 1.0 / m as f64;
    Ok(Observable::from_parts(acc.into_iter().map(|a| a * inv).collect(), kernel))
}

/// `g_f = sup_{n≥0} |Σ_{j=0}^n Q^j f|`, pointwise.
///
/// The running supremum is taken up to the first index whose certified tail
/// `Σ_{j>J} ‖Q^j f‖∞` is below [`SUP_TOLERANCE`]; later partial sums cannot
/// move by more than that.
pub fn g_f(kernel: &MarkovKernel, f: &Observable) -> Result<Observable> {
    check_len(kernel, f)?;
    f.require_centered()?;
    let n = kernel.len();
    let mut partial = vec![0.0; n];
    let mut sup = vec![0.0f64; n];
    walk_powers(kernel, f.values(), SUP_TOLERANCE, 0, |_, u| {
        for ((p, s), v) in partial.iter_mut().zip(sup.iter_mut()).zip(u) {
            *p += v;
            *s = s.max(p.abs());
        }
    })?;
    Ok(Observable::from_parts(sup, kernel))
}

/// The centered solution `h` of `(I − Q)h = f`, i.e. `Σ_{j≥0} Q^j f`.
///
/// Up to [`POISSON_DENSE_LIMIT`] states this solves `(I − Q + 1π)h = f`
/// directly (for centered `f` its solution is centered and solves the
/// Poisson equation); beyond that the series is summed with a certified
/// tail. The residual `‖(I − Q)h − f‖∞` is always checked.
pub fn poisson_solve(kernel: &MarkovKernel, f: &Observable) -> Result<Observable> {
    check_len(kernel, f)?;
    f.require_centered()?;
    let n = kernel.len();
    let mut h = if n <= POISSON_DENSE_LIMIT {
        let pi = kernel.stationary();
        let a = DMatrix::from_fn(n, n, |x, y| {
            let id = if x == y { 1.0 } else { 0.0 };
            id - kernel.transition(x, y) + pi[y]
        });
        let rhs = DVector::from_column_slice(f.values());
        let lu = a.clone().lu();
        let mut sol = lu.solve(&rhs).ok_or(Error::SolveFailed { residual: f64::INFINITY })?;
        let r = &rhs - &a * &sol;
        if let Some(delta) = lu.solve(&r) {
            sol += delta;
        }
        sol.iter().copied().collect::<Vec<f64>>()
    } else {
        let mut acc = vec![0.0; n];
        walk_powers(kernel, f.values(), POISSON_TOLERANCE * 0.1, 0, |_, u| {
            for (a, v) in acc.iter_mut().zip(u) {
                *a += v;
            }
        })?;
        acc
    };
    let mean = kernel.expectation(&h);
    for v in h.iter_mut() {
        *v -= mean;
    }
    let qh = kernel.apply(&h);
    let residual = h
        .iter()
        .zip(&qh)
        .zip(f.values())
        .map(|((a, b), c)| (a - b - c).abs())
        .fold(0.0, f64::max);
    if !(residual <= POISSON_TOLERANCE * f.sup_norm().max(1.0)) {
        return Err(Error::SolveFailed { residual });
    }
    Ok(Observable::from_parts(h, kernel))
}

/// `E_π sup_n |Q^n h|^q / E_π |h|^q`, the maximal-function ratio that enters
/// the coboundary route to the `L_q` condition on `g_f`. Reported only; on
/// a finite space it is always finite.
pub fn maximal_ratio(kernel: &MarkovKernel, h: &Observable, q: f64) -> Result<f64> {
    check_len(kernel, h)?;
    h.require_centered()?;
    let mut sup = vec![0.0f64; kernel.len()];
    walk_powers(kernel, h.values(), SUP_TOLERANCE, 0, |_, u| {
        for (s, v) in sup.iter_mut().zip(u) {
            *s = s.max(v.abs());
        }
    })?;
    let num = kernel.expectation(&sup.iter().map(|s| s.powf(q)).collect::<Vec<_>>());
    let den = kernel.expectation(&h.values().iter().map(|v| v.abs().powf(q)).collect::<Vec<_>>());
    Ok(if den == 0.0 { 1.0 } else { num / den })
}

/// Martingale approximation for a fixed `m`.
///
/// With `θ = (1/m) Σ_{k=1}^m v_k`, increments are
/// `D(x, y) = θ(y) − (Qθ)(x)` and `σ_m² = Σ_{x,y} π(x) Q(x,y) D(x,y)²`.
/// Along a path, `f(ξ_k) = D(ξ_k, ξ_{k+1}) + θ(ξ_k) − θ(ξ_{k+1}) + f_m(ξ_k)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleScheme {
    pub m: usize,
    pub theta: Observable,
    pub q_theta: Observable,
    pub f: Observable,
    pub f_m: Observable,
    /// `D(x, y)` row-major, `n × n`.
    pub d_table: Vec<f64>,
    pub sigma_m_sq: f64,
}

impl MartingaleScheme {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    #[inline]
    pub fn d(&self, x: usize, y: usize) -> f64 {
        self.d_table[x * self.len() + y]
    }

    /// Largest violations of the scheme invariants:
    /// `(max_x |Σ_y Q(x,y)D(x,y)|, |σ_m² − Σ π Q D²|, max |D − (θ(y) − Qθ(x))|)`.
    pub fn invariant_residuals(&self, kernel: &MarkovKernel) -> (f64, f64, f64) {
        let n = self.len();
        let pi = kernel.stationary();
        let mut mds: f64 = 0.0;
        let mut second = 0.0;
        let mut table_err: f64 = 0.0;
        let qtheta = kernel.apply(self.theta.values());
        for x in 0..n {
            let mut cond = 0.0;
            for y in 0..n {
                let q = kernel.transition(x, y);
                let d = self.d(x, y);
                cond += q * d;
                second += pi[x] * q * d * d;
                table_err = table_err.max((d - (self.theta.values()[y] - qtheta[x])).abs());
            }
            mds = mds.max(cond.abs());
        }
        (mds, (self.sigma_m_sq - second).abs(), table_err)
    }
}

/// Builds θ^m, `D^m` and `σ_m²` exactly.
pub fn martingale_scheme(kernel: &MarkovKernel, f: &Observable, m: usize) -> Result<MartingaleScheme> {
    check_len(kernel, f)?;
    f.require_centered()?;
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    let n = kernel.len();
    // θ = Σ_{j=0}^{m−1} (m − j)/m · Q^j f and f_m = (1/m) Σ_{j=1}^m Q^j f
    let inv = 1.0 / m as f64;
    let mut u = f.values().to_vec();
    let mut next = vec![0.0; n];
    let mut theta = vec![0.0; n];
    let mut fm = vec![0.0; n];
    for j in 0..m {
        let w = (m - j) as f64 * inv;
        for (t, v) in theta.iter_mut().zip(&u) {
            *t += w * v;
        }
        recentered_step(kernel, &u, &mut next);
        std::mem::swap(&mut u, &mut next);
        for (a, v) in fm.iter_mut().zip(&u) {
            *a += v * inv;
        }
    }
    let q_theta = kernel.apply(&theta);
    let pi = kernel.stationary();
    let mut d_table = vec![0.0; n * n];
    let mut sigma_m_sq = 0.0;
    for x in 0..n {
        for y in 0..n {
            let d = theta[y] - q_theta[x];
            d_table[x * n + y] = d;
            sigma_m_sq += pi[x] * kernel.transition(x, y) * d * d;
        }
    }
    Ok(MartingaleScheme {
        m,
        theta: Observable::from_parts(theta, kernel),
        q_theta: Observable::from_parts(q_theta, kernel),
        f: f.clone(),
        f_m: Observable::from_parts(fm, kernel),
        d_table,
        sigma_m_sq,
    })
}

/// `σ² = E_π f² + 2 Σ_{j≥1} E_π(f·Q^j f)` with its certified truncation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub sigma_sq: f64,
    pub second_moment: f64,
    /// `E_π(f·Q^j f)` for `j = 1..=truncation_j`.
    pub series_terms: Vec<f64>,
    pub truncation_j: usize,
    /// Bound on `|2 Σ_{j>J} E_π(f·Q^j f)|`; the declared tail is zero.
    pub tail_bound: f64,
}

pub fn long_run_variance(kernel: &MarkovKernel, f: &Observable) -> Result<VarianceReport> {
    check_len(kernel, f)?;
    f.require_centered()?;
    let fv = f.values();
    let abs_mean = kernel.expectation(&fv.iter().map(|v| v.abs()).collect::<Vec<_>>());
    let second_moment = kernel.expectation(&fv.iter().map(|v| v * v).collect::<Vec<_>>());
    let tol = if abs_mean > 0.0 { VARIANCE_TOLERANCE / (2.0 * abs_mean) } else { 1.0 };
    let mut series_terms = Vec::new();
    let cert = walk_powers(kernel, fv, tol, 0, |j, u| {
        if j >= 1 {
            let prod: Vec<f64> = fv.iter().zip(u).map(|(a, b)| a * b).collect();
            series_terms.push(kernel.expectation(&prod));
        }
    })?;
    let mut sigma_sq = second_moment + 2.0 * series_terms.iter().sum::<f64>();
    if sigma_sq < 0.0 {
        if sigma_sq >= -VARIANCE_CLAMP {
            sigma_sq = 0.0;
        } else {
            return Err(Error::NegativeVariance { value: sigma_sq });
        }
    }
    Ok(VarianceReport {
        sigma_sq,
        second_moment,
        series_terms,
        truncation_j: cert.last_index,
        tail_bound: 2.0 * abs_mean * cert.tail_bound,
    })
}

/// Limit of `σ_m²` as `m → ∞`, by Richardson extrapolation over `m, 2m, 4m`.
///
/// `θ^m = h − w/m + O(ρ^m/m)` with `h` the Poisson solution, so `σ_m²` is a
/// quadratic in `1/m` up to geometrically small terms; two Richardson steps
/// remove both the `1/m` and `1/m²` parts.
pub fn sigma_sq_extrapolated(kernel: &MarkovKernel, f: &Observable, m: usize) -> Result<f64> {
    let s1 = martingale_scheme(kernel, f, m)?.sigma_m_sq;
    let s2 = martingale_scheme(kernel, f, 2 * m)?.sigma_m_sq;
    let s4 = martingale_scheme(kernel, f, 4 * m)?.sigma_m_sq;
    Ok((8.0 * s4 - 6.0 * s2 + s1) / 3.0)
}
