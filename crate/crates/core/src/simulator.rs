//! Reproducible trajectories under `P^x` (quenched) and `P^π` (annealed).
//!
//! A path started at `x` has `ξ_0 = x` and partial sums
//! `S_k = f(ξ_1) + … + f(ξ_k)`. Every path draws from its own stream,
//! [`crate::rng::path_rng`]`(master_seed, path_index)`, so ensembles are
//! identical under any thread count. Rows are sampled by inverse CDF: the
//! next state is the smallest `y` with `u ≤ F_x(y)` among positive entries.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernel::{MarkovKernel, TransitionTable};
use crate::operator::{MartingaleScheme, Observable};
use crate::rng::path_rng;

/// Longest path whose full trajectory is recorded by [`sample_path`].
pub const MAX_RECORDED_STEPS: usize = 1 << 22;
/// Relative tolerance of the pathwise decomposition identities.
pub const DECOMPOSITION_TOLERANCE: f64 = 1e-9;
/// Default FCLT grid.
pub const DEFAULT_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedRecord {
    pub master_seed: u64,
    pub path_index: u64,
}

impl SeedRecord {
    pub fn rng(&self) -> ChaCha8Rng {
        path_rng(self.master_seed, self.path_index)
    }
}

/// Cumulative rows for inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct RowSampler {
    n: usize,
    cdf: Vec<f64>,
    positive: Vec<bool>,
}

impl RowSampler {
    pub fn new(kernel: &MarkovKernel) -> Self {
        Self::from_table(kernel.table())
    }

    pub fn from_table(table: &TransitionTable) -> Self {
        let n = table.len();
        let mut cdf = vec![0.0; n * n];
        let mut positive = vec![false; n * n];
        for x in 0..n {
            let row = table.row(x);
            let mut acc = 0.0;
            let mut last = 0;
            for (y, &p) in row.iter().enumerate() {
                acc += p;
                cdf[x * n + y] = acc;
                positive[x * n + y] = p > 0.0;
                if p > 0.0 {
                    last = y;
                }
            }
            for y in last..n {
                cdf[x * n + y] = 1.0;
            }
        }
        Self { n, cdf, positive }
    }

    /// Stationary-law sampler packed as a one-row table.
    fn from_weights(weights: &[f64]) -> Self {
        let n = weights.len();
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cdf.push(acc);
        }
        if let Some(last) = weights.iter().rposition(|&w| w > 0.0) {
            for c in &mut cdf[last..] {
                *c = 1.0;
            }
        }
        Self { n, cdf, positive: weights.iter().map(|&w| w > 0.0).collect() }
    }

    /// Smallest `y` with `u ≤ F_x(y)` and `Q(x, y) > 0`.
    #[inline]
    pub fn sample(&self, x: usize, u: f64) -> usize {
        let cdf = &self.cdf[x * self.n..(x + 1) * self.n];
        let mut y = if self.n <= 16 {
            cdf.iter().map(|&c| usize::from(c < u)).sum::<usize>().min(self.n - 1)
        } else {
            cdf.partition_point(|&c| c < u).min(self.n - 1)
        };
        while !self.positive[x * self.n + y] && y + 1 < self.n {
            y += 1;
        }
        y
    }

    /// Draws `u` in `(0, 1]`, where the smallest `y` with `u ≤ F_x(y)`
    /// always has `Q(x, y) > 0`.
    #[inline]
    fn step<R: Rng>(&self, x: usize, rng: &mut R) -> usize {
        let u = 1.0 - rng.random::<f64>();
        let cdf = &self.cdf[x * self.n..(x + 1) * self.n];
        if self.n <= 16 {
            cdf.iter().map(|&c| usize::from(c < u)).sum::<usize>().min(self.n - 1)
        } else {
            cdf.partition_point(|&c| c < u).min(self.n - 1)
        }
    }
}

/// One recorded trajectory with its martingale decomposition.
///
/// Index `k − 1` of each series holds the value at time `k`, `k = 1..=n`;
/// `states[k − 1] = ξ_k` for `k = 1..=n+1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub start_state: usize,
    pub m: usize,
    pub seed_record: SeedRecord,
    pub states: Vec<u32>,
    /// `S_k`.
    pub partial_sums: Vec<f64>,
    /// `M_k^m = Σ_{i≤k} D^m(ξ_i, ξ_{i+1})`.
    pub martingale: Vec<f64>,
    /// `R_k^m = θ^m(ξ_1) − θ^m(ξ_{k+1}) + R̄_k^m`.
    pub remainder: Vec<f64>,
    /// `R̄_k^m = Σ_{i≤k} f_m(ξ_i)`.
    pub cesaro_remainder: Vec<f64>,
}

impl PathSample {
    pub fn n(&self) -> usize {
        self.partial_sums.len()
    }

    /// `S_k` with `S_0 = 0`.
    pub fn s(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.partial_sums[k - 1]
        }
    }

    /// Largest relative violation of `S_k = M_k + R_k` and of
    /// `S_k = M_k + θ(ξ_1) − θ(ξ_{k+1}) + R̄_k` over all `k`.
    pub fn decomposition_residual(&self, scheme: &MartingaleScheme) -> f64 {
        let theta = scheme.theta.values();
        let t1 = theta[self.states[0] as usize];
        let mut worst: f64 = 0.0;
        for k in 0..self.n() {
            let s = self.partial_sums[k];
            let mk = self.martingale[k];
            let rbar = self.cesaro_remainder[k];
            let tk = theta[self.states[k + 1] as usize];
            let scale = 1f64.max(s.abs()).max(mk.abs()).max(rbar.abs()).max(t1.abs()).max(tk.abs());
            let a = (s - (mk + self.remainder[k])).abs();
            let b = (s - (mk + t1 - tk + rbar)).abs();
            worst = worst.max(a.max(b) / scale);
        }
        worst
    }

    /// Largest deviation of `M_k − M_{k−1}` from the tabulated `D(ξ_k, ξ_{k+1})`.
    pub fn increment_residual(&self, scheme: &MartingaleScheme) -> f64 {
        let mut prev = 0.0;
        let mut worst: f64 = 0.0;
        for k in 0..self.n() {
            let d = scheme.d(self.states[k] as usize, self.states[k + 1] as usize);
            let got = self.martingale[k] - prev;
            worst = worst.max((got - d).abs() / 1f64.max(self.martingale[k].abs()));
            prev = self.martingale[k];
        }
        worst
    }
}

fn check_start(kernel: &MarkovKernel, start: usize) -> Result<()> {
    if start < kernel.len() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("start state {start} out of range for {} states", kernel.len())))
    }
}

/// Simulates `ξ_1, …, ξ_{n+1}` from `ξ_0 = start` and records `S`, `M^m`,
/// `R^m`, `R̄^m`.
pub fn sample_path(
    kernel: &MarkovKernel,
    scheme: &MartingaleScheme,
    start: usize,
    n: usize,
    seed: SeedRecord,
) -> Result<PathSample> {
    check_start(kernel, start)?;
    if scheme.len() != kernel.len() {
        return Err(Error::LengthMismatch { expected: kernel.len(), got: scheme.len() });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    if n > MAX_RECORDED_STEPS {
        return Err(Error::PathTooLong { n, cap: MAX_RECORDED_STEPS });
    }
    let sampler = RowSampler::new(kernel);
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(n + 1);
    let mut x = start;
    for _ in 0..=n {
        x = sampler.step(x, &mut rng);
        states.push(x as u32);
    }
    let f = scheme.f.values();
    let fm = scheme.f_m.values();
    let theta = scheme.theta.values();
    let t1 = theta[states[0] as usize];
    let mut partial_sums = Vec::with_capacity(n);
    let mut martingale = Vec::with_capacity(n);
    let mut remainder = Vec::with_capacity(n);
    let mut cesaro_remainder = Vec::with_capacity(n);
    let (mut s, mut mk, mut rbar) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (a, b) = (states[k] as usize, states[k + 1] as usize);
        s += f[a];
        mk += scheme.d(a, b);
        rbar += fm[a];
        partial_sums.push(s);
        martingale.push(mk);
        cesaro_remainder.push(rbar);
        remainder.push(t1 - theta[b] + rbar);
    }
    Ok(PathSample {
        start_state: start,
        m: scheme.m,
        seed_record: seed,
        states,
        partial_sums,
        martingale,
        remainder,
        cesaro_remainder,
    })
}

/// `S_{[nt]}/√n` at each grid time, `[·]` the integer part.
pub fn scaled_path(sample: &PathSample, grid: &[f64]) -> Vec<f64> {
    let n = sample.n();
    let root = (n as f64).sqrt();
    grid.iter().map(|&t| sample.s(grid_index(n, t)) / root).collect()
}

/// `[n·t]`, robust to `n·t` landing a rounding error below an integer.
pub fn grid_index(n: usize, t: f64) -> usize {
    ((n as f64 * t + 1e-9).floor() as usize).min(n)
}

/// `max_k |S_k|/√n`.
pub fn max_abs_partial_sum(sample: &PathSample) -> f64 {
    max_abs_scaled(&sample.partial_sums)
}

/// `max_k |M_k^m|/√n`.
pub fn max_abs_martingale(sample: &PathSample) -> f64 {
    max_abs_scaled(&sample.martingale)
}

/// `max_k |R̄_k^m|/√n`.
pub fn max_abs_cesaro_remainder(sample: &PathSample) -> f64 {
    max_abs_scaled(&sample.cesaro_remainder)
}

fn max_abs_scaled(x: &[f64]) -> f64 {
    let root = (x.len() as f64).sqrt();
    x.iter().fold(0.0f64, |m, v| m.max(v.abs())) / root
}

/// Summary statistics of one path, computed without storing it.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamedPath {
    pub start: usize,
    /// `S_n/√n`.
    pub endpoint: f64,
    /// `S_{[nt]}/√n` per grid time.
    pub grid_values: Vec<f64>,
    /// `max_k |S_k|/√n`.
    pub max_abs: f64,
    /// `max_k S_k/√n` (0 included through `S_0`).
    pub max_signed: f64,
}

/// Streams one path of `Σ values(ξ_i)` with `ξ_0 = start`.
pub fn stream_path(
    sampler: &RowSampler,
    values: &[f64],
    start: usize,
    n: usize,
    grid_steps: &[usize],
    rng: &mut ChaCha8Rng,
) -> StreamedPath {
    let root = (n as f64).sqrt();
    let mut grid_values = vec![0.0; grid_steps.len()];
    let mut next_grid = 0;
    while next_grid < grid_steps.len() && grid_steps[next_grid] == 0 {
        next_grid += 1;
    }
    let (mut s, mut max_abs, mut max_signed) = (0.0f64, 0.0f64, 0.0f64);
    let mut x = start;
    for k in 1..=n {
        x = sampler.step(x, rng);
        s += values[x];
        max_abs = max_abs.max(s.abs());
        max_signed = max_signed.max(s);
        while next_grid < grid_steps.len() && grid_steps[next_grid] == k {
            grid_values[next_grid] = s / root;
            next_grid += 1;
        }
    }
    StreamedPath { start, endpoint: s / root, grid_values, max_abs: max_abs / root, max_signed: max_signed / root }
}

/// Per-path statistics of an ensemble, in path-index order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub n: usize,
    pub count: usize,
    /// Fixed start for quenched ensembles, `None` for annealed ones.
    pub start: Option<usize>,
    pub master_seed: u64,
    pub start_states: Vec<u32>,
    pub grid: Vec<f64>,
    /// `S_n/√n`.
    pub normalized_endpoints: Vec<f64>,
    /// `S_{[nt]}/√n`, one row per path, one column per grid time.
    pub scaled_paths: Vec<Vec<f64>>,
    /// `max_k |S_k|/√n`.
    pub max_stats: Vec<f64>,
    /// `max_k S_k/√n`.
    pub max_signed: Vec<f64>,
}

impl EnsembleSummary {
    /// Column of `scaled_paths` at grid position `i`.
    pub fn grid_column(&self, i: usize) -> Vec<f64> {
        self.scaled_paths.iter().map(|row| row[i]).collect()
    }

    pub fn all_finite(&self) -> bool {
        self.normalized_endpoints.iter().all(|v| v.is_finite())
            && self.max_stats.iter().all(|v| v.is_finite())
            && self.max_signed.iter().all(|v| v.is_finite())
            && self.scaled_paths.iter().flatten().all(|v| v.is_finite())
    }
}

/// Shape of an ensemble run.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub count: usize,
    pub master_seed: u64,
    pub grid: Vec<f64>,
}

impl EnsembleSpec {
    pub fn new(n: usize, count: usize, master_seed: u64) -> Self {
        Self { n, count, master_seed, grid: DEFAULT_GRID.to_vec() }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    fn validate(&self) -> Result<Vec<usize>> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        if self.count == 0 {
            return Err(Error::InvalidArgument("count must be at least 1".into()));
        }
        if self.grid.iter().any(|t| !(0.0..=1.0).contains(t)) || self.grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("grid must be sorted within [0, 1]".into()));
        }
        Ok(self.grid.iter().map(|&t| grid_index(self.n, t)).collect())
    }
}

fn collect(spec: &EnsembleSpec, start: Option<usize>, paths: Vec<StreamedPath>) -> EnsembleSummary {
    let mut s = EnsembleSummary {
        n: spec.n,
        count: spec.count,
        start,
        master_seed: spec.master_seed,
        start_states: Vec::with_capacity(paths.len()),
        grid: spec.grid.clone(),
        normalized_endpoints: Vec::with_capacity(paths.len()),
        scaled_paths: Vec::with_capacity(paths.len()),
        max_stats: Vec::with_capacity(paths.len()),
        max_signed: Vec::with_capacity(paths.len()),
    };
    for p in paths {
        s.start_states.push(p.start as u32);
        s.normalized_endpoints.push(p.endpoint);
        s.scaled_paths.push(p.grid_values);
        s.max_stats.push(p.max_abs);
        s.max_signed.push(p.max_signed);
    }
    s
}

/// `count` independent paths of `Σ f(ξ_i)` under `P^x`.
///
/// The summary depends only on `f`; the martingale index plays no role in
/// the partial sums, so it is not an input here.
pub fn quenched_ensemble(kernel: &MarkovKernel, f: &Observable, x: usize, spec: &EnsembleSpec) -> Result<EnsembleSummary> {
    check_start(kernel, x)?;
    if f.len() != kernel.len() {
        return Err(Error::LengthMismatch { expected: kernel.len(), got: f.len() });
    }
    let steps = spec.validate()?;
    let sampler = RowSampler::new(kernel);
    let values = f.values();
    let paths = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(spec.master_seed, i as u64);
            stream_path(&sampler, values, x, spec.n, &steps, &mut rng)
        })
        .collect();
    Ok(collect(spec, Some(x), paths))
}

/// `count` independent paths under `P^π`: each path draws `ξ_0 ~ π` from
/// its own stream, then proceeds as a quenched path.
pub fn annealed_ensemble(kernel: &MarkovKernel, f: &Observable, spec: &EnsembleSpec) -> Result<EnsembleSummary> {
    if f.len() != kernel.len() {
        return Err(Error::LengthMismatch { expected: kernel.len(), got: f.len() });
    }
    let steps = spec.validate()?;
    let sampler = RowSampler::new(kernel);
    let initial = RowSampler::from_weights(kernel.stationary());
    let values = f.values();
    let paths = (0..spec.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(spec.master_seed, i as u64);
            let x = initial.step(0, &mut rng);
            stream_path(&sampler, values, x, spec.n, &steps, &mut rng)
        })
        .collect();
    Ok(collect(spec, None, paths))
}

/// Runs `op` on a dedicated pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, op: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(op))
}

/// Transition counts `C(x, y)` along one streamed path of `n` steps.
pub fn transition_counts(kernel: &MarkovKernel, start: usize, n: usize, seed: SeedRecord) -> Result<Vec<Vec<u64>>> {
    check_start(kernel, start)?;
    let sampler = RowSampler::new(kernel);
    let mut rng = seed.rng();
    let k = kernel.len();
    let mut counts = vec![vec![0u64; k]; k];
    let mut x = start;
    for _ in 0..n {
        let y = sampler.step(x, &mut rng);
        counts[x][y] += 1;
        x = y;
    }
    Ok(counts)
}

/// `(1/n) Σ_{k≤n} D^m(ξ_k, ξ_{k+1})²` along one streamed path.
pub fn d_sq_average(
    kernel: &MarkovKernel,
    scheme: &MartingaleScheme,
    start: usize,
    n: usize,
    seed: SeedRecord,
) -> Result<f64> {
    check_start(kernel, start)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let sampler = RowSampler::new(kernel);
    let mut rng = seed.rng();
    let mut a = sampler.step(start, &mut rng);
    let mut acc = 0.0;
    for _ in 0..n {
        let b = sampler.step(a, &mut rng);
        let d = scheme.d(a, b);
        acc += d * d;
        a = b;
    }
    Ok(acc / n as f64)
}

/// Per-path `max_{j≤n} |Σ_{i≤j} values(ξ_i)|/√n` for `count` paths under
/// `P^x`, seeded like [`quenched_ensemble`].
pub fn max_abs_ensemble(
    kernel: &MarkovKernel,
    values: &[f64],
    x: usize,
    n: usize,
    count: usize,
    master_seed: u64,
) -> Result<Vec<f64>> {
    check_start(kernel, x)?;
    if values.len() != kernel.len() {
        return Err(Error::LengthMismatch { expected: kernel.len(), got: values.len() });
    }
    let sampler = RowSampler::new(kernel);
    Ok((0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(master_seed, i as u64);
            stream_path(&sampler, values, x, n, &[], &mut rng).max_abs
        })
        .collect())
}
