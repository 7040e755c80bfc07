//! A bounded process whose conditional-expectation sums have an integrable
//! supremum while `Σ_i E|f·E(X_i|F_0)|` diverges, truncated to `K` levels.
//!
//! The system is the circle rotation `c ↦ c + α (mod 1)` times the shift on
//! i.i.d. Rademacher signs `(e_j)`. Level `k` has an arc `A_k` of length
//! `ρ_k = a^k`, a horizon `N_k` and a tolerance `ε_k`, and
//! `f = Σ_k e_{−N_k} 1_{A_k}`. With `X_i = f∘T^i`,
//!
//! `E(X_i | F_0) = Σ_k e_{i−N_k} 1{i ≤ N_k} 1{c + iα ∈ A_k}`.
//!
//! Arcs are disjoint, so `|f·E(X_i|F_0)|` is an indicator and the divergent
//! series is a sum of exact interval measures. For the default parameters
//! every endpoint and shift is dyadic, so the `f64` interval arithmetic
//! below is exact. The rotation is rational, so the truncated system is not
//! ergodic; only the finite sums and expectations are claimed.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::path_rng;
use crate::stats;

/// Largest `N_K` accepted by the constructor.
pub const MAX_HORIZON: usize = 1 << 20;
/// Largest `N_K` for the exact (sign-enumerating) supremum.
pub const EXACT_SUP_MAX_HORIZON: usize = 16;
/// Largest `N` for the exact Rademacher maximal expectation.
pub const MAX_TERM_HORIZON: usize = 256;

/// A half-open arc `[start, start + length)` on the unit circle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleArc {
    pub start: f64,
    pub length: f64,
}

impl CircleArc {
    pub fn contains(&self, c: f64) -> bool {
        let d = (c - self.start).rem_euclid(1.0);
        d < self.length
    }

    fn pieces(&self) -> Vec<(f64, f64)> {
        let s = self.start.rem_euclid(1.0);
        let e = s + self.length;
        if e <= 1.0 {
            vec![(s, e)]
        } else {
            vec![(s, 1.0), (0.0, e - 1.0)]
        }
    }
}

/// Finite union of disjoint half-open intervals of `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSet {
    pieces: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn from_arcs<'a>(arcs: impl IntoIterator<Item = &'a CircleArc>) -> Self {
        let mut pieces: Vec<(f64, f64)> = arcs.into_iter().flat_map(|a| a.pieces()).collect();
        pieces.retain(|(a, b)| b > a);
        pieces.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pieces.len());
        for (a, b) in pieces {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self { pieces: merged }
    }

    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(|(a, b)| b - a).sum()
    }

    /// The preimage `{c : c + s ∈ self}`, i.e. the set shifted by `−s`.
    pub fn shifted_back(&self, s: f64) -> Self {
        let arcs: Vec<CircleArc> =
            self.pieces.iter().map(|&(a, b)| CircleArc { start: (a - s).rem_euclid(1.0), length: b - a }).collect();
        Self::from_arcs(&arcs)
    }

    pub fn intersection_measure(&self, other: &Self) -> f64 {
        let (mut i, mut j) = (0, 0);
        let mut total = 0.0;
        while i < self.pieces.len() && j < other.pieces.len() {
            let (a0, a1) = self.pieces[i];
            let (b0, b1) = other.pieces[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if hi > lo {
                total += hi - lo;
            }
            if a1 <= b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        total
    }

    pub fn symmetric_difference_measure(&self, other: &Self) -> f64 {
        self.measure() + other.measure() - 2.0 * self.intersection_measure(other)
    }
}

/// Parameters: `ρ_k = a^k`, `N_k = n_base^k`, `ε_k = eps_base^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExampleParams {
    pub levels: usize,
    pub a: f64,
    pub n_base: usize,
    pub eps_base: f64,
    pub rademacher_seed: u64,
}

impl ExampleParams {
    /// `ρ_k = 4^{−k}`, `N_k = 4^k`, `ε_k = 8^{−k}`.
    pub fn defaults(levels: usize) -> Self {
        Self { levels, a: 0.25, n_base: 4, eps_base: 0.125, rademacher_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruncatedExample {
    pub levels: usize,
    pub a: f64,
    pub rho: Vec<f64>,
    pub n: Vec<usize>,
    pub eps: Vec<f64>,
    pub arcs: Vec<CircleArc>,
    /// Gap left after every arc, `α·N_K`.
    pub gap: f64,
    /// Rotation angle `min_k ε_k/(2N_k)`.
    pub alpha: f64,
    pub rademacher_seed: u64,
}

/// Places `K` left-packed arcs of length `ρ_k`, each followed by a gap
/// `α N_K`, with `α = min_k ε_k/(2 N_k)`.
pub fn build_truncated_example(params: ExampleParams) -> Result<TruncatedExample> {
    let k = params.levels;
    if k == 0 {
        return Err(Error::InvalidArgument("at least one level is required".into()));
    }
    if !(params.a > 0.0 && params.a < 1.0) || !(params.eps_base > 0.0 && params.eps_base < 1.0) || params.n_base < 2
    {
        return Err(Error::InvalidArgument("need 0 < a < 1, 0 < eps_base < 1, n_base ≥ 2".into()));
    }
    let rho: Vec<f64> = (1..=k).map(|i| params.a.powi(i as i32)).collect();
    let eps: Vec<f64> = (1..=k).map(|i| params.eps_base.powi(i as i32)).collect();
    let mut n = Vec::with_capacity(k);
    for i in 1..=k {
        let v = (params.n_base as u64).checked_pow(i as u32).filter(|&v| v as usize <= MAX_HORIZON);
        n.push(v.ok_or_else(|| Error::InvalidArgument(format!("N_{i} exceeds {MAX_HORIZON}")))? as usize);
    }
    let alpha = eps.iter().zip(&n).map(|(e, &nk)| e / (2.0 * nk as f64)).fold(f64::INFINITY, f64::min);
    let gap = alpha * n[k - 1] as f64;
    let total: f64 = rho.iter().sum::<f64>() + k as f64 * gap;
    if total >= 1.0 {
        return Err(Error::ArcsDontFit { total });
    }
    let mut arcs = Vec::with_capacity(k);
    let mut pos = 0.0;
    for &r in &rho {
        arcs.push(CircleArc { start: pos, length: r });
        pos += r + gap;
    }
    Ok(TruncatedExample { levels: k, a: params.a, rho, n, eps, arcs, gap, alpha, rademacher_seed: params.rademacher_seed })
}

/// Signs `e_j` for `j = −(len − 1), …, 0`, stored with `e_0` first.
#[derive(Debug, Clone, PartialEq)]
pub struct RademacherHistory {
    signs: Vec<i8>,
}

impl RademacherHistory {
    pub fn new(signs: Vec<i8>) -> Self {
        Self { signs }
    }

    pub fn draw<R: Rng>(rng: &mut R, len: usize) -> Self {
        let mut signs = Vec::with_capacity(len);
        while signs.len() < len {
            let bits: u64 = rng.random();
            for b in 0..64.min(len - signs.len()) {
                signs.push(if (bits >> b) & 1 == 1 { 1 } else { -1 });
            }
        }
        Self { signs }
    }

    /// `e_j` for `j ≤ 0`.
    pub fn get(&self, j: i64) -> f64 {
        assert!(j <= 0, "only F_0-measurable signs are stored");
        f64::from(self.signs[(-j) as usize])
    }

    pub fn len(&self) -> usize {
        self.signs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvariantReport {
    /// `(2/3)ρ_k ≤ |A_k| ≤ ρ_k` for every level.
    pub lengths_ok: bool,
    pub disjoint: bool,
    pub total_length: f64,
    /// `max_k max_{0≤i,j≤N_k} |T^{−i}A_k Δ T^{−j}A_k| / ε_k`; at most 1.
    pub max_symmetric_difference_ratio: f64,
    /// Measure of `(A_k − iα) ∩ A_u`, `u ≠ k`, summed over `i ≤ N_k`.
    pub cross_level_overlap: f64,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.lengths_ok
            && self.disjoint
            && self.total_length < 1.0
            && self.max_symmetric_difference_ratio <= 1.0
            && self.cross_level_overlap == 0.0
    }
}

impl TruncatedExample {
    pub fn horizon(&self) -> usize {
        self.n[self.levels - 1]
    }

    fn arc_set(&self, k: usize) -> IntervalSet {
        IntervalSet::from_arcs([&self.arcs[k]])
    }

    /// `f(c, e) = Σ_k e_{−N_k} 1_{A_k}(c)`.
    pub fn f_value(&self, c: f64, history: &RademacherHistory) -> f64 {
        self.arcs
            .iter()
            .zip(&self.n)
            .filter(|(arc, _)| arc.contains(c))
            .map(|(_, &nk)| history.get(-(nk as i64)))
            .sum()
    }

    /// Level `k` such that `c + iα ∈ A_k` and `i ≤ N_k`, if any.
    fn active_level(&self, i: usize, c: f64) -> Option<usize> {
        let x = c + i as f64 * self.alpha;
        (0..self.levels).find(|&k| i <= self.n[k] && self.arcs[k].contains(x))
    }

    /// Exact interval checks of the construction.
    pub fn check_invariants(&self) -> InvariantReport {
        let lengths_ok = self
            .arcs
            .iter()
            .zip(&self.rho)
            .all(|(a, &r)| a.length <= r && a.length >= 2.0 / 3.0 * r);
        let all = IntervalSet::from_arcs(&self.arcs);
        let total_length: f64 = self.arcs.iter().map(|a| a.length).sum();
        let disjoint = (all.measure() - total_length).abs() <= 1e-15;
        let mut ratio: f64 = 0.0;
        let mut overlap = 0.0;
        for k in 0..self.levels {
            let base = self.arc_set(k);
            // |T^{-i}A Δ T^{-j}A| depends only on |i − j|
            for s in 0..=self.n[k] {
                let shifted = base.shifted_back(s as f64 * self.alpha);
                ratio = ratio.max(base.symmetric_difference_measure(&shifted) / self.eps[k]);
                if s >= 1 {
                    for u in (0..self.levels).filter(|&u| u != k) {
                        overlap += shifted.intersection_measure(&self.arc_set(u));
                    }
                }
            }
        }
        InvariantReport {
            lengths_ok,
            disjoint,
            total_length,
            max_symmetric_difference_ratio: ratio,
            cross_level_overlap: overlap,
        }
    }
}

/// `E(X_i | F_0)` at circle point `c` with past signs `history`; uses
/// `e_{i−N_k}` only for `i ≤ N_k`, where the index is `≤ 0`.
pub fn conditional_expectation(example: &TruncatedExample, i: usize, c: f64, history: &RademacherHistory) -> f64 {
    match example.active_level(i, c) {
        Some(k) => history.get(i as i64 - example.n[k] as i64),
        None => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergentSeries {
    pub i_max: usize,
    /// `Σ_{i≤i_max} E|f·E(X_i|F_0)|`, exactly.
    pub value: f64,
    /// `Σ_k N_k |A_k| − Σ_k N_k ε_k`.
    pub lower_bound: f64,
    /// `Σ_k N_k ε_k`.
    pub error_budget: f64,
    /// Contribution of level `k`: `Σ_{i≤N_k} |A_k ∩ T^{−i}A_k|`.
    pub per_level: Vec<f64>,
}

/// Exact value of `Σ_{i=1}^{i_max} E|f·E(X_i|F_0)|`.
///
/// For each `c` at most one arc holds `c` and at most one holds `c + iα`,
/// so `|f·E(X_i|F_0)|` is the indicator of
/// `(∪_u A_u) ∩ (∪_{k: N_k ≥ i} A_k − iα)`, whatever the signs.
pub fn divergent_series_estimate(example: &TruncatedExample, i_max: usize) -> Result<DivergentSeries> {
    if i_max < example.horizon() {
        return Err(Error::InvalidArgument(format!("i_max = {i_max} is below N_K = {}", example.horizon())));
    }
    let all = IntervalSet::from_arcs(&example.arcs);
    let mut value = 0.0;
    for i in 1..=example.horizon() {
        let live: Vec<CircleArc> =
            (0..example.levels).filter(|&k| example.n[k] >= i).map(|k| example.arcs[k]).collect();
        let shifted = IntervalSet::from_arcs(&live).shifted_back(i as f64 * example.alpha);
        value += all.intersection_measure(&shifted);
    }
    let per_level = (0..example.levels)
        .map(|k| {
            let a = example.arc_set(k);
            (1..=example.n[k]).map(|i| a.intersection_measure(&a.shifted_back(i as f64 * example.alpha))).sum()
        })
        .collect();
    let main: f64 = example.arcs.iter().zip(&example.n).map(|(a, &nk)| nk as f64 * a.length).sum();
    let error_budget: f64 = example.eps.iter().zip(&example.n).map(|(e, &nk)| nk as f64 * e).sum();
    Ok(DivergentSeries { i_max, value, lower_bound: main - error_budget, error_budget, per_level })
}

/// `E max_{1≤j≤n} |e_1 + … + e_j|` for i.i.d. signs, by dynamic programming
/// over (position, running maximum).
pub fn rademacher_max_expectation(n: usize) -> Result<f64> {
    if n > MAX_TERM_HORIZON {
        return Err(Error::TooLargeForExact { paths: 2f64.powi(n as i32) });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let width = 2 * n + 1;
    // prob[pos + n][max]
    let mut prob = vec![vec![0.0f64; n + 1]; width];
    prob[n + 1][1] = 0.5;
    prob[n - 1][1] = 0.5;
    for _ in 1..n {
        let mut next = vec![vec![0.0f64; n + 1]; width];
        for (p, row) in prob.iter().enumerate() {
            for (m, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for q in [p + 1, p.wrapping_sub(1)] {
                    if q < width {
                        let mm = m.max(q.abs_diff(n));
                        next[q][mm] += 0.5 * w;
                    }
                }
            }
        }
        prob = next;
    }
    Ok(prob.iter().flat_map(|row| row.iter().enumerate().map(|(m, &w)| m as f64 * w)).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupEstimate {
    pub count: usize,
    /// Monte Carlo mean of `sup_{n≤N_K} |Σ_{i≤n} E(X_i|F_0)|`.
    pub mc_estimate: f64,
    pub std_error: f64,
    /// `Σ_k √N_k ρ_k + Σ_k N_k ε_k`.
    pub upper_bound: f64,
    /// `Σ_k E max_{j≤N_k} |Σ_{i≤j} e_i| · |A_k|` when `N_K` allows the
    /// exact maximal expectation.
    pub main_term: Option<f64>,
    /// Exact `E sup_n |Σ_{i≤n} E(X_i|F_0)|` when `N_K` allows enumerating
    /// all sign histories.
    pub exact: Option<f64>,
}

fn sup_partial(example: &TruncatedExample, c: f64, history: &RademacherHistory) -> f64 {
    let mut s: f64 = 0.0;
    let mut best: f64 = 0.0;
    for i in 1..=example.horizon() {
        s += conditional_expectation(example, i, c, history);
        best = best.max(s.abs());
    }
    best
}

/// Monte Carlo estimate over uniform `c` and Rademacher histories, with the
/// bound from the maximal inequality and, for small horizons, exact values.
pub fn bounded_sup_estimate(example: &TruncatedExample, count: usize, master_seed: u64) -> Result<SupEstimate> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be positive".into()));
    }
    let horizon = example.horizon();
    let samples: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master_seed, i as u64);
            let c: f64 = rng.random();
            let history = RademacherHistory::draw(&mut rng, horizon + 1);
            sup_partial(example, c, &history)
        })
        .collect();
    let upper_bound = example
        .n
        .iter()
        .zip(&example.rho)
        .zip(&example.eps)
        .map(|((&nk, r), e)| (nk as f64).sqrt() * r + nk as f64 * e)
        .sum();
    let main_term = if horizon <= MAX_TERM_HORIZON {
        let mut total = 0.0;
        for (arc, &nk) in example.arcs.iter().zip(&example.n) {
            total += rademacher_max_expectation(nk)? * arc.length;
        }
        Some(total)
    } else {
        None
    };
    let exact = if horizon <= EXACT_SUP_MAX_HORIZON { Some(exact_sup_expectation(example)?) } else { None };
    Ok(SupEstimate {
        count,
        mc_estimate: stats::mean(&samples),
        std_error: stats::std_error(&samples),
        upper_bound,
        main_term,
        exact,
    })
}

/// Exact `E sup_{n≤N_K} |Σ_{i≤n} E(X_i|F_0)|`: the circle is cut where any
/// `c + iα` crosses an arc endpoint, and on each cell all `2^{N_K}` sign
/// histories are enumerated.
pub fn exact_sup_expectation(example: &TruncatedExample) -> Result<f64> {
    let horizon = example.horizon();
    if horizon > EXACT_SUP_MAX_HORIZON {
        return Err(Error::TooLargeForExact { paths: 2f64.powi(horizon as i32) });
    }
    let mut cuts = vec![0.0, 1.0];
    for arc in &example.arcs {
        for i in 1..=horizon {
            let s = i as f64 * example.alpha;
            cuts.push((arc.start - s).rem_euclid(1.0));
            cuts.push((arc.start + arc.length - s).rem_euclid(1.0));
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let patterns = 1usize << horizon;
    let mut total = 0.0;
    for w in cuts.windows(2) {
        let width = w[1] - w[0];
        if width <= 0.0 {
            continue;
        }
        let mid = 0.5 * (w[0] + w[1]);
        let mut acc = 0.0;
        for bits in 0..patterns {
            // sign e_{−j} is bit j of the pattern, j = 0..N_K − 1
            let signs: Vec<i8> = (0..=horizon).map(|j| if j < horizon && (bits >> j) & 1 == 1 { 1 } else { -1 }).collect();
            acc += sup_partial(example, mid, &RademacherHistory::new(signs));
        }
        total += width * acc / patterns as f64;
    }
    Ok(total)
}
