//! Iterates `Q^j f` with a geometric tail certificate.
//!
//! The certificate follows a ratio-stabilization rule: once the block ratios
//! `(‖Q^j f‖∞ / ‖Q^{j−W} f‖∞)^{1/W}` over a window `W` have stayed below one,
//! within a narrow band, for [`STABLE_STEPS`] consecutive indices, their
//! maximum `ρ` is taken as the decay rate and the remaining mass is bounded by
//! `Σ_{j>J} ‖Q^j f‖∞ ≤ (Σ_{J−W<i≤J} ‖Q^i f‖∞) · ρ^W / (1 − ρ^W)`.
//! Iteration continues until that bound drops below the requested tolerance.
//!
//! When the ratios keep oscillating (complex subdominant eigenvalues), small
//! chains fall back to a contraction certificate: with
//! `c_r = max_x Σ_y |Q^r(x,y) − π(y)|`, every centered `g` satisfies
//! `‖Q^r g‖∞ ≤ c_r ‖g‖∞`, so a window `W` with `c_W < 1` gives
//! `Σ_{j>J} ‖Q^j f‖∞ ≤ ‖Q^J f‖∞ · (c_1 + … + c_W) / (1 − c_W)`.

use crate::error::{Error, Result};
use crate::kernel::MarkovKernel;

/// Hard cap on the number of powers.
pub const MAX_POWERS: usize = 1_000_000;
/// Block length of the ratio estimate.
pub const WINDOW: usize = 10;
/// Consecutive stable ratios required before a certificate is issued.
pub const STABLE_STEPS: usize = 10;
const RATIO_BAND: f64 = 0.05;
/// Powers visited before the contraction certificate is tried.
pub const CONTRACTION_AFTER: usize = 4 * WINDOW + STABLE_STEPS;
/// Largest chain for which the contraction certificate is computed.
pub const CONTRACTION_MAX_STATES: usize = 128;
/// Longest window searched for `c_W < 1`.
pub const CONTRACTION_MAX_WINDOW: usize = 256;
const CONTRACTION_TARGET: f64 = 0.5;

/// Result of a certified power walk.
#[derive(Debug, Clone, PartialEq)]
pub struct TailCertificate {
    /// Index `J` of the last visited power.
    pub last_index: usize,
    /// Upper bound on `Σ_{j>J} ‖Q^j f‖∞`.
    pub tail_bound: f64,
    /// Certified decay rate `ρ` (0 when the iterates vanished exactly).
    pub rate: f64,
    /// `‖Q^j f‖∞` for `j = 0..=J`.
    pub norms: Vec<f64>,
}

impl TailCertificate {
    /// Bound on `Σ_{j>n} ‖Q^j f‖∞` for any `n ≤ J`.
    pub fn tail_after(&self, n: usize) -> f64 {
        let n = n.min(self.last_index);
        self.norms[n + 1..].iter().sum::<f64>() + self.tail_bound
    }

    /// Bound on `Σ_{j≥0} ‖Q^j f‖∞`.
    pub fn total(&self) -> f64 {
        self.norms.iter().sum::<f64>() + self.tail_bound
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Contraction data `(c_W, c_1 + … + c_W, W)`, with `W` the first window
/// where `c_W ≤ 1/2`, else the one with the smallest `c_W < 1`.
fn contraction(kernel: &MarkovKernel) -> Option<(f64, f64, usize)> {
    let n = kernel.len();
    if n > CONTRACTION_MAX_STATES {
        return None;
    }
    let pi = kernel.stationary();
    let table = kernel.table();
    let mut rows: Vec<Vec<f64>> = (0..n).map(|x| table.row(x).to_vec()).collect();
    let mut next = vec![0.0; n];
    let mut sum = 0.0;
    let mut best: Option<(f64, f64, usize)> = None;
    for r in 1..=CONTRACTION_MAX_WINDOW {
        if r > 1 {
            for row in rows.iter_mut() {
                next.iter_mut().for_each(|v| *v = 0.0);
                for (z, &a) in row.iter().enumerate() {
                    if a != 0.0 {
                        for (v, &q) in next.iter_mut().zip(table.row(z)) {
                            *v += a * q;
                        }
                    }
                }
                row.copy_from_slice(&next);
            }
        }
        let c = rows
            .iter()
            .map(|row| row.iter().zip(pi).map(|(a, p)| (a - p).abs()).sum::<f64>())
            .fold(0.0, f64::max);
        sum += c;
        if c < 1.0 && best.map_or(true, |(b, _, _)| c < b) {
            best = Some((c, sum, r));
        }
        if c <= CONTRACTION_TARGET {
            break;
        }
    }
    best
}

/// Visits `Q^j f` for `j = 0, 1, ..., J` and stops once the tail beyond `J`
/// is certified below `tol`, and in any case not before `min_terms` powers.
///
/// Iterates are re-centered under `π` after every step; for a centered `f`
/// this only removes rounding drift along the constants, which `Q` would
/// otherwise preserve forever.
pub fn walk_powers<V>(
    kernel: &MarkovKernel,
    f: &[f64],
    tol: f64,
    min_terms: usize,
    mut visit: V,
) -> Result<TailCertificate>
where
    V: FnMut(usize, &[f64]),
{
    let table = kernel.table();
    let mut u = f.to_vec();
    let mut next = vec![0.0; u.len()];
    let mut norms = vec![sup_norm(&u)];
    // ratios[j] is the block ratio ending at power j (NaN while j < WINDOW)
    let mut ratios = vec![f64::NAN];
    let mut fallback: Option<Option<(f64, f64, usize)>> = None;
    visit(0, &u);

    let mut j = 0;
    loop {
        let norm = norms[j];
        if norm == 0.0 && j >= min_terms {
            return Ok(TailCertificate { last_index: j, tail_bound: 0.0, rate: 0.0, norms });
        }
        if j + 1 >= STABLE_STEPS && j >= min_terms {
            let recent = &ratios[j + 1 - STABLE_STEPS..=j];
            if recent.iter().all(|r| r.is_finite()) {
                let hi = recent.iter().copied().fold(0.0, f64::max);
                let lo = recent.iter().copied().fold(f64::INFINITY, f64::min);
                if hi < 1.0 && hi - lo <= RATIO_BAND {
                    let block: f64 = norms[j + 1 - WINDOW..=j].iter().sum();
                    let rw = hi.powi(WINDOW as i32);
                    let tail = block * rw / (1.0 - rw);
                    if tail <= tol {
                        return Ok(TailCertificate { last_index: j, tail_bound: tail, rate: hi, norms });
                    }
                }
            }
        }
        if j >= CONTRACTION_AFTER && j >= min_terms {
            if let Some((c, sum, w)) = *fallback.get_or_insert_with(|| contraction(kernel)) {
                let tail = norm * sum / (1.0 - c);
                if tail <= tol {
                    return Ok(TailCertificate { last_index: j, tail_bound: tail, rate: c.powf(1.0 / w as f64), norms });
                }
            }
        }
        if j >= MAX_POWERS {
            return Err(Error::NoGeometricCertificate { iterations: j });
        }

        table.apply_into(&u, &mut next);
        let mean = kernel.expectation(&next);
        for v in next.iter_mut() {
            *v -= mean;
        }
        std::mem::swap(&mut u, &mut next);
        j += 1;
        let norm = sup_norm(&u);
        norms.push(norm);
        visit(j, &u);
        let ratio = if j < WINDOW {
            f64::NAN
        } else if norms[j - WINDOW] > 0.0 {
            (norm / norms[j - WINDOW]).powf(1.0 / WINDOW as f64)
        } else {
            f64::INFINITY
        };
        ratios.push(ratio);
    }
}
