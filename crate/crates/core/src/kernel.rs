//! Finite-state Markov kernels.
//!
//! A [`TransitionTable`] is a validated row-stochastic matrix with no further
//! assumptions; it is what builders (lazy versions, random walks, cycles)
//! produce. A [`MarkovKernel`] additionally carries its stationary law and is
//! only constructed for ergodic (irreducible and aperiodic) tables whose
//! stationary law charges every state. Kernels are immutable once built.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Soft cap on the number of states for the dense representation.
pub const MAX_STATES: usize = 10_000;

/// Admissible deviation of a raw row sum from 1 before renormalization.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Accepted residual for `πQ = π`, `Σπ = 1` and detailed balance.
pub const STATIONARY_TOLERANCE: f64 = 1e-12;

/// Largest state count for which dense eigen/LU routines are used.
pub const DENSE_LIMIT: usize = 64;

const POWER_ITERATION_CAP: usize = 200_000;
const DOBRUSHIN_LIMIT: usize = 1024;

/// A validated row-stochastic matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    n: usize,
    data: Vec<f64>,
}

impl TransitionTable {
    /// Validates a square table of nonnegative rows summing to one within
    /// [`ROW_SUM_TOLERANCE`]; rows are renormalized so they sum to one to
    /// machine precision.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        if n > MAX_STATES {
            return Err(Error::TooManyStates { count: n, cap: MAX_STATES });
        }
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::NotSquare { row: i, len: row.len(), expected: n });
            }
            let sum: f64 = row.iter().sum();
            let min = row.iter().copied().fold(f64::INFINITY, f64::min);
            if !sum.is_finite() || min < 0.0 || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::NonStochasticRow { row: i, sum, min });
            }
            data.extend(row.iter().map(|p| p / sum));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { n, data }
    }

    /// Deterministic rotation `x -> x + 1 mod n`.
    pub fn cycle(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + (i + 1) % n] = 1.0;
        }
        Self { n, data }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[x * self.n + y]
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[f64] {
        &self.data[x * self.n..(x + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// `hold·I + (1 − hold)·Q`.
    pub fn lazy(&self, hold: f64) -> Result<Self> {
        if !(hold > 0.0 && hold < 1.0) {
            return Err(Error::InvalidArgument(format!("hold must lie in (0,1), got {hold}")));
        }
        let n = self.n;
        let mut data: Vec<f64> = self.data.iter().map(|p| (1.0 - hold) * p).collect();
        for i in 0..n {
            data[i * n + i] += hold;
        }
        Ok(Self { n, data })
    }

    /// `(Qf)(x) = Σ_y Q(x,y) f(y)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(f, &mut out);
        out
    }

    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.n);
        for (x, o) in out.iter_mut().enumerate() {
            *o = self.row(x).iter().zip(f).map(|(q, v)| q * v).sum();
        }
    }

    /// Row vector times matrix: `(μQ)(y) = Σ_x μ(x) Q(x,y)`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (x, &m) in mu.iter().enumerate() {
            if m == 0.0 {
                continue;
            }
            for (o, q) in out.iter_mut().zip(self.row(x)) {
                *o += m * q;
            }
        }
        out
    }

    /// The `k`-step table `Q^k`.
    pub fn power(&self, k: usize) -> Self {
        let n = self.n;
        let mut acc = Self::identity(n);
        for _ in 0..k {
            let mut next = vec![0.0; n * n];
            for x in 0..n {
                for z in 0..n {
                    let a = acc.get(x, z);
                    if a == 0.0 {
                        continue;
                    }
                    let row = self.row(z);
                    for y in 0..n {
                        next[x * n + y] += a * row[y];
                    }
                }
            }
            acc = Self { n, data: next };
        }
        acc
    }

    fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.n, &self.data)
    }

    fn successors(&self) -> Vec<Vec<usize>> {
        (0..self.n)
            .map(|x| (0..self.n).filter(|&y| self.get(x, y) > 0.0).collect())
            .collect()
    }
}

/// Irreducibility, period and a spectral-gap estimate for a table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityReport {
    pub irreducible: bool,
    pub aperiodic: bool,
    pub period: usize,
    pub spectral_gap_estimate: f64,
}

impl ErgodicityReport {
    pub fn is_ergodic(&self) -> bool {
        self.irreducible && self.aperiodic
    }
}

fn reachable(adj: &[Vec<usize>], start: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    level[start] = Some(0);
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        let next = level[u].map(|l| l + 1);
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = next;
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Irreducibility by directed reachability on the positive-entry graph, the
/// period of the communicating class of state 0 (gcd of `level(u) + 1 −
/// level(v)` over its internal edges; 1 when the class has no cycle), and a
/// spectral-gap estimate: `1 − |λ₂|` from a dense eigen-decomposition for at
/// most [`DENSE_LIMIT`] states, otherwise a contraction-coefficient bound.
pub fn check_ergodic(table: &TransitionTable) -> ErgodicityReport {
    let n = table.len();
    let adj = table.successors();
    let mut rev = vec![Vec::new(); n];
    for (u, succ) in adj.iter().enumerate() {
        for &v in succ {
            rev[v].push(u);
        }
    }
    let forward = reachable(&adj, 0);
    let backward = reachable(&rev, 0);
    let irreducible = forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some);

    let mut period = 0;
    for (u, succ) in adj.iter().enumerate() {
        let (Some(lu), Some(_)) = (forward[u], backward[u]) else { continue };
        for &v in succ {
            if let (Some(lv), Some(_)) = (forward[v], backward[v]) {
                period = gcd(period, (lu + 1).abs_diff(lv));
            }
        }
    }
    if period == 0 {
        period = 1;
    }

    ErgodicityReport {
        irreducible,
        aperiodic: period == 1,
        period,
        spectral_gap_estimate: spectral_gap_estimate(table).clamp(0.0, 1.0),
    }
}

fn spectral_gap_estimate(table: &TransitionTable) -> f64 {
    let n = table.len();
    if n == 1 {
        return 1.0;
    }
    if n <= DENSE_LIMIT {
        let mut moduli: Vec<f64> =
            table.to_dmatrix().complex_eigenvalues().iter().map(|z| z.norm()).collect();
        moduli.sort_by(|a, b| b.total_cmp(a));
        return 1.0 - moduli[1];
    }
    if n <= DOBRUSHIN_LIMIT {
        let mut delta: f64 = 0.0;
        for x in 0..n {
            for y in (x + 1)..n {
                let tv: f64 =
                    table.row(x).iter().zip(table.row(y)).map(|(a, b)| (a - b).abs()).sum();
                delta = delta.max(0.5 * tv);
            }
        }
        return 1.0 - delta;
    }
    // Doeblin minorization: 1 − δ(Q) ≥ Σ_y min_x Q(x,y).
    (0..n)
        .map(|y| (0..n).map(|x| table.get(x, y)).fold(f64::INFINITY, f64::min))
        .sum()
}

/// Unique stationary law of an ergodic table.
///
/// Up to [`DENSE_LIMIT`] states this is a dense LU solve of `π(Q − I) = 0,
/// Σπ = 1` with iterative refinement; larger tables use power iteration on
/// the averaged operator `(I + Q)/2`, which shares `π` and is aperiodic.
pub fn stationary_distribution(table: &TransitionTable) -> Result<Vec<f64>> {
    let report = check_ergodic(table);
    if !report.is_ergodic() {
        return Err(Error::NotErgodic { irreducible: report.irreducible, period: report.period });
    }
    let pi = if table.len() <= DENSE_LIMIT { dense_stationary(table)? } else { power_stationary(table)? };
    let residual = stationary_residual(table, &pi);
    if residual > STATIONARY_TOLERANCE {
        return Err(Error::NoConvergence { iterations: 0, residual });
    }
    Ok(pi)
}

fn dense_stationary(table: &TransitionTable) -> Result<Vec<f64>> {
    let n = table.len();
    let mut a = table.to_dmatrix().transpose() - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let lu = a.clone().lu();
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mut pi = lu
        .solve(&rhs)
        .ok_or(Error::NoConvergence { iterations: 0, residual: f64::INFINITY })?;
    for _ in 0..3 {
        let r = &rhs - &a * &pi;
        if r.amax() <= 1e-16 {
            break;
        }
        if let Some(delta) = lu.solve(&r) {
            pi += delta;
        }
    }
    Ok(normalize(pi.iter().copied().collect()))
}

fn power_stationary(table: &TransitionTable) -> Result<Vec<f64>> {
    let n = table.len();
    let mut mu = vec![1.0 / n as f64; n];
    let mut residual = f64::INFINITY;
    for it in 0..POWER_ITERATION_CAP {
        let moved = table.left_apply(&mu);
        residual = moved.iter().zip(&mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if residual <= 1e-14 {
            return Ok(normalize(moved));
        }
        mu = normalize(mu.iter().zip(&moved).map(|(a, b)| 0.5 * (a + b)).collect());
        if residual.is_nan() {
            return Err(Error::NoConvergence { iterations: it, residual });
        }
    }
    Err(Error::NoConvergence { iterations: POWER_ITERATION_CAP, residual })
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// `‖πQ − π‖_∞`.
pub fn stationary_residual(table: &TransitionTable, pi: &[f64]) -> f64 {
    table
        .left_apply(pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// Outcome of a detailed-balance check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReversibilityCheck {
    pub reversible: bool,
    pub max_violation: f64,
}

/// A validated ergodic kernel together with its stationary law.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovKernel {
    states: Vec<String>,
    table: TransitionTable,
    stationary: Vec<f64>,
}

impl MarkovKernel {
    /// Builds a kernel labelled `0..n`.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_table(TransitionTable::new(rows)?)
    }

    pub fn with_labels(states: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let table = TransitionTable::new(rows)?;
        if states.len() != table.len() {
            return Err(Error::LengthMismatch { expected: table.len(), got: states.len() });
        }
        let stationary = stationary_distribution(&table)?;
        Self::assemble(states, table, stationary)
    }

    pub fn from_table(table: TransitionTable) -> Result<Self> {
        let states = (0..table.len()).map(|i| i.to_string()).collect();
        let stationary = stationary_distribution(&table)?;
        Self::assemble(states, table, stationary)
    }

    /// Uses a known stationary law instead of solving for it; the law is
    /// still checked against `πQ = π`.
    fn from_table_with_stationary(table: TransitionTable, stationary: Vec<f64>) -> Result<Self> {
        let report = check_ergodic(&table);
        if !report.is_ergodic() {
            return Err(Error::NotErgodic { irreducible: report.irreducible, period: report.period });
        }
        let residual = stationary_residual(&table, &stationary);
        if residual > STATIONARY_TOLERANCE {
            return Err(Error::NoConvergence { iterations: 0, residual });
        }
        let states = (0..table.len()).map(|i| i.to_string()).collect();
        Self::assemble(states, table, stationary)
    }

    fn assemble(states: Vec<String>, table: TransitionTable, stationary: Vec<f64>) -> Result<Self> {
        if let Some(state) = stationary.iter().position(|&p| p <= 0.0) {
            return Err(Error::ZeroStationaryMass { state });
        }
        Ok(Self { states, table, stationary })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn table(&self) -> &TransitionTable {
        &self.table
    }

    #[inline]
    pub fn transition(&self, x: usize, y: usize) -> f64 {
        self.table.get(x, y)
    }

    pub fn row(&self, x: usize) -> &[f64] {
        self.table.row(x)
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.table.apply(f)
    }

    /// `E_π f`.
    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.stationary.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    pub fn check_ergodic(&self) -> ErgodicityReport {
        check_ergodic(&self.table)
    }

    /// Maximum of `|π(x)Q(x,y) − π(y)Q(y,x)|`; reversible when it is at most
    /// [`STATIONARY_TOLERANCE`].
    pub fn check_reversible(&self) -> ReversibilityCheck {
        let n = self.len();
        let pi = &self.stationary;
        let mut max_violation: f64 = 0.0;
        for x in 0..n {
            for y in (x + 1)..n {
                let v = (pi[x] * self.transition(x, y) - pi[y] * self.transition(y, x)).abs();
                max_violation = max_violation.max(v);
            }
        }
        ReversibilityCheck { reversible: max_violation <= STATIONARY_TOLERANCE, max_violation }
    }

    /// `hold·I + (1 − hold)·Q`, keeping the labels. The stationary law is
    /// recomputed, not copied.
    pub fn lazy(&self, hold: f64) -> Result<Self> {
        let table = self.table.lazy(hold)?;
        let stationary = stationary_distribution(&table)?;
        Self::assemble(self.states.clone(), table, stationary)
    }

    pub fn to_file(&self) -> KernelFile {
        KernelFile {
            states: self.states.iter().cloned().map(serde_json::Value::String).collect(),
            rows: self.table.rows(),
        }
    }

    pub fn from_file(file: KernelFile) -> Result<Self> {
        let labels = file
            .states
            .iter()
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect();
        Self::with_labels(labels, file.rows)
    }
}

/// On-disk kernel description: `{"states": [...], "rows": [[...], ...]}`
/// with row order matching state order. Labels may be strings or numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub states: Vec<serde_json::Value>,
    pub rows: Vec<Vec<f64>>,
}

/// Validates `rows` and builds the ergodic kernel with its stationary law.
pub fn build_kernel(rows: Vec<Vec<f64>>) -> Result<MarkovKernel> {
    MarkovKernel::new(rows)
}

/// Metropolis–Hastings kernel for `target` driven by `proposal`.
///
/// Off-diagonal moves are accepted with probability
/// `min(1, π(y)P(y,x) / (π(x)P(x,y)))`; rejected mass stays on the diagonal.
/// The result satisfies detailed balance with respect to the normalized
/// target, which becomes its stationary law.
pub fn metropolis_kernel(target: &[f64], proposal: Vec<Vec<f64>>) -> Result<MarkovKernel> {
    let proposal = TransitionTable::new(proposal)?;
    let n = proposal.len();
    if target.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: target.len() });
    }
    if let Some(state) = target.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::ZeroTargetWeight { state });
    }
    let pi = normalize(target.to_vec());
    let mut data = vec![0.0; n * n];
    for x in 0..n {
        let mut off = 0.0;
        for y in 0..n {
            if x == y {
                continue;
            }
            let forward = proposal.get(x, y);
            if forward == 0.0 {
                continue;
            }
            let backward = proposal.get(y, x);
            let ratio = (pi[y] * backward) / (pi[x] * forward);
            let q = forward * ratio.min(1.0);
            data[x * n + y] = q;
            off += q;
        }
        data[x * n + x] = (1.0 - off).max(0.0);
    }
    MarkovKernel::from_table_with_stationary(TransitionTable { n, data }, pi)
}

/// Random walk on a symmetric weighted graph: `Q(x,y) = w(x,y)/Σ_z w(x,z)`.
/// Bipartite graphs give periodic tables; see [`random_walk_kernel`].
pub fn random_walk_table(weights: Vec<Vec<f64>>) -> Result<(TransitionTable, Vec<f64>)> {
    let n = weights.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    for (i, row) in weights.iter().enumerate() {
        if row.len() != n {
            return Err(Error::NotSquare { row: i, len: row.len(), expected: n });
        }
    }
    let scale = weights.iter().flatten().fold(0.0f64, |m, w| m.max(w.abs())).max(1.0);
    for x in 0..n {
        for y in 0..n {
            let w = weights[x][y];
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidArgument(format!("weight ({x},{y}) is {w}")));
            }
            if (w - weights[y][x]).abs() > STATIONARY_TOLERANCE * scale {
                return Err(Error::Asymmetric { row: x, col: y });
            }
        }
    }
    let adj: Vec<Vec<usize>> =
        (0..n).map(|x| (0..n).filter(|&y| weights[x][y] > 0.0).collect()).collect();
    if reachable(&adj, 0).iter().any(Option::is_none) {
        return Err(Error::Disconnected);
    }
    let degree: Vec<f64> = weights.iter().map(|row| row.iter().sum()).collect();
    if degree.iter().any(|&d| d <= 0.0) {
        return Err(Error::Disconnected);
    }
    let data = weights
        .iter()
        .zip(&degree)
        .flat_map(|(row, d)| row.iter().map(move |w| w / d))
        .collect();
    Ok((TransitionTable { n, data }, normalize(degree)))
}

/// Random-walk kernel with `π ∝ degree`. Fails with `NotErgodic` on
/// bipartite graphs; make the table lazy first in that case.
pub fn random_walk_kernel(weights: Vec<Vec<f64>>) -> Result<MarkovKernel> {
    let (table, pi) = random_walk_table(weights)?;
    MarkovKernel::from_table_with_stationary(table, pi)
}

/// Lazy random walk `hold·I + (1 − hold)·Q` on a weighted graph.
pub fn lazy_random_walk_kernel(weights: Vec<Vec<f64>>, hold: f64) -> Result<MarkovKernel> {
    let (table, pi) = random_walk_table(weights)?;
    MarkovKernel::from_table_with_stationary(table.lazy(hold)?, pi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_state() -> MarkovKernel {
        build_kernel(vec![vec![0.7, 0.3], vec![0.1, 0.9]]).unwrap()
    }

    #[test]
    fn single_state_kernel() {
        let k = build_kernel(vec![vec![1.0]]).unwrap();
        assert_eq!(k.stationary(), &[1.0]);
        assert!(k.check_reversible().reversible);
    }

    #[test]
    fn two_state_stationary_matches_closed_form() {
        // π = (q/(p+q), p/(p+q)) with p = 0.3, q = 0.1.
        let k = two_state();
        assert_abs_diff_eq!(k.stationary()[0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(k.stationary()[1], 0.75, epsilon = 1e-14);
        assert!(stationary_residual(k.table(), k.stationary()) <= 1e-14);
    }

    #[test]
    fn two_cycle_is_not_ergodic() {
        let err = build_kernel(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap_err();
        assert_eq!(err, Error::NotErgodic { irreducible: true, period: 2 });
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(matches!(
            build_kernel(vec![vec![0.5, 0.6], vec![0.5, 0.5]]),
            Err(Error::NonStochasticRow { row: 0, .. })
        ));
        assert!(matches!(
            build_kernel(vec![vec![1.1, -0.1], vec![0.5, 0.5]]),
            Err(Error::NonStochasticRow { row: 0, .. })
        ));
        assert!(matches!(
            build_kernel(vec![vec![1.0, 0.0]]),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn rows_within_loose_tolerance_are_renormalized() {
        let k = build_kernel(vec![vec![0.7 + 5e-10, 0.3], vec![0.1, 0.9]]).unwrap();
        for x in 0..2 {
            assert_abs_diff_eq!(k.row(x).iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn metropolis_uniform_target_returns_proposal() {
        let third = 1.0 / 3.0;
        let proposal = vec![vec![third; 3]; 3];
        let k = metropolis_kernel(&[1.0, 1.0, 1.0], proposal.clone()).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                assert_abs_diff_eq!(k.transition(x, y), proposal[x][y], epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn metropolis_two_state_acceptance() {
        let k = metropolis_kernel(&[0.25, 0.75], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(k.transition(0, 1), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k.transition(1, 0), 1.0 / 6.0, epsilon = 1e-15);
        // detailed balance, checked directly
        let pi = k.stationary();
        assert!((pi[0] * k.transition(0, 1) - pi[1] * k.transition(1, 0)).abs() <= 1e-12);
        assert!(k.check_reversible().reversible);
    }

    #[test]
    fn metropolis_rejects_zero_weight() {
        let err = metropolis_kernel(&[0.5, 0.0], vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap_err();
        assert_eq!(err, Error::ZeroTargetWeight { state: 1 });
    }

    #[test]
    fn random_walk_on_path_is_periodic() {
        let err = random_walk_kernel(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap_err();
        assert_eq!(err, Error::NotErgodic { irreducible: true, period: 2 });
    }

    #[test]
    fn random_walk_on_triangle() {
        let w = vec![vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]];
        let k = random_walk_kernel(w).unwrap();
        for x in 0..3 {
            assert_abs_diff_eq!(k.stationary()[x], 1.0 / 3.0, epsilon = 1e-15);
            for y in 0..3 {
                let expected = if x == y { 0.0 } else { 0.5 };
                assert_abs_diff_eq!(k.transition(x, y), expected, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn lazy_star_has_degree_stationary_law() {
        // Star graphs are bipartite, so the plain walk is periodic.
        let mut w = vec![vec![0.0; 4]; 4];
        for leaf in 1..4 {
            w[0][leaf] = 1.0;
            w[leaf][0] = 1.0;
        }
        assert!(matches!(random_walk_kernel(w.clone()), Err(Error::NotErgodic { .. })));
        let k = lazy_random_walk_kernel(w, 0.5).unwrap();
        let expected = [0.5, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        for (p, e) in k.stationary().iter().zip(expected) {
            assert_abs_diff_eq!(*p, e, epsilon = 1e-15);
        }
        assert!(stationary_residual(k.table(), k.stationary()) <= 1e-12);
        assert!(k.check_reversible().reversible);
    }

    #[test]
    fn random_walk_errors() {
        let disconnected = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(random_walk_kernel(disconnected).unwrap_err(), Error::Disconnected);
        let asym = vec![vec![1.0, 2.0], vec![1.0, 1.0]];
        assert!(matches!(random_walk_kernel(asym), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn lazy_two_cycle() {
        let t = TransitionTable::cycle(2).lazy(0.5).unwrap();
        assert_eq!(t.rows(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        let k = MarkovKernel::from_table(t).unwrap();
        assert_eq!(k.stationary(), &[0.5, 0.5]);
    }

    #[test]
    fn lazy_does_not_compose_additively() {
        let k = two_state();
        let twice = k.lazy(0.25).unwrap().lazy(0.25).unwrap();
        let once = k.lazy(0.5).unwrap();
        // two quarter-holds give hold 1 − 0.75² = 0.4375
        let expected = k.lazy(0.4375).unwrap();
        assert!((twice.transition(0, 1) - once.transition(0, 1)).abs() > 1e-3);
        assert_abs_diff_eq!(twice.transition(0, 1), expected.transition(0, 1), epsilon = 1e-15);
    }

    #[test]
    fn lazy_rejects_bad_hold() {
        assert!(two_state().lazy(1.0).is_err());
        assert!(two_state().lazy(0.0).is_err());
    }

    #[test]
    fn doubly_stochastic_has_uniform_law() {
        let t = vec![vec![0.2, 0.5, 0.3], vec![0.5, 0.3, 0.2], vec![0.3, 0.2, 0.5]];
        let pi = stationary_distribution(&TransitionTable::new(t).unwrap()).unwrap();
        for p in pi {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn iid_kernel_law_is_the_row() {
        let r = vec![0.1, 0.2, 0.3, 0.4];
        let pi = stationary_distribution(&TransitionTable::new(vec![r.clone(); 4]).unwrap()).unwrap();
        for (p, e) in pi.iter().zip(&r) {
            assert_abs_diff_eq!(*p, *e, epsilon = 1e-14);
        }
    }

    #[test]
    fn power_iteration_path_for_large_tables() {
        // A lazy cycle on 80 states goes through the power-iteration branch.
        let t = TransitionTable::cycle(80).lazy(0.5).unwrap();
        let pi = stationary_distribution(&t).unwrap();
        for p in &pi {
            assert_abs_diff_eq!(*p, 1.0 / 80.0, epsilon = 1e-13);
        }
        let report = check_ergodic(&t);
        assert!(report.is_ergodic());
        assert!((0.0..=1.0).contains(&report.spectral_gap_estimate));
    }

    #[test]
    fn ergodicity_report_two_state() {
        let r = two_state().check_ergodic();
        assert!(r.irreducible && r.aperiodic);
        assert_eq!(r.period, 1);
        assert_abs_diff_eq!(r.spectral_gap_estimate, 0.4, epsilon = 1e-12);
    }

    #[test]
    fn cycle_periods() {
        for n in [2usize, 3, 5] {
            let r = check_ergodic(&TransitionTable::cycle(n));
            assert!(r.irreducible);
            assert_eq!(r.period, n);
            assert!(!r.aperiodic);
        }
    }

    #[test]
    fn block_diagonal_is_reducible() {
        let t = TransitionTable::new(vec![
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.5, 0.5],
        ])
        .unwrap();
        let r = check_ergodic(&t);
        assert!(!r.irreducible);
        assert_abs_diff_eq!(r.spectral_gap_estimate, 0.0, epsilon = 1e-12);
        assert!(matches!(stationary_distribution(&t), Err(Error::NotErgodic { .. })));
    }

    #[test]
    fn biased_three_cycle_is_not_reversible() {
        let k = build_kernel(vec![
            vec![0.0, 0.9, 0.1],
            vec![0.1, 0.0, 0.9],
            vec![0.9, 0.1, 0.0],
        ])
        .unwrap();
        // π is uniform, so the violation is |0.9 − 0.1|/3.
        let check = k.check_reversible();
        assert!(!check.reversible);
        assert_abs_diff_eq!(check.max_violation, 0.8 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn kernel_file_round_trip() {
        let json = r#"{"states": ["a", 2], "rows": [[0.7, 0.3], [0.1, 0.9]]}"#;
        let file: KernelFile = serde_json::from_str(json).unwrap();
        let k = MarkovKernel::from_file(file).unwrap();
        assert_eq!(k.states(), &["a".to_string(), "2".to_string()]);
        let back = MarkovKernel::from_file(k.to_file()).unwrap();
        assert_eq!(back, k);
    }

    #[test]
    fn matrix_power_matches_repeated_application() {
        let k = two_state();
        let q3 = k.table().power(3);
        let f = [3.0, -1.0];
        let direct = k.apply(&k.apply(&k.apply(&f)));
        let via_power = q3.apply(&f);
        for (a, b) in direct.iter().zip(&via_power) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }
}
