//! Exact analysis of the contention dynamics.
//!
//! In a phase with `n'` uncounted nodes sharing parameter `k`, each node
//! beeps independently with probability `1/k`. Since all uncounted nodes
//! share `k`, the pair `(n', k)` is a Markov chain and the number of phases
//! of a run is its absorption time at `n' = 0`.

use crate::error::{Error, Result};

/// Outcome probabilities of the first slot of a phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseProbabilities {
    /// Nobody beeps.
    pub p_none: f64,
    /// Exactly one node beeps and is counted.
    pub p_single: f64,
    /// Two or more nodes beep.
    pub p_collision: f64,
}

/// State of the contention chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ChainState {
    pub n_remaining: u32,
    pub k: u32,
}

impl ChainState {
    pub fn is_absorbing(self) -> bool {
        self.n_remaining == 0
    }
}

pub fn phase_probs(k: u32, n_prime: u32) -> Result<PhaseProbabilities> {
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "k must be at least 2, got {k}"
        )));
    }
    let q = 1.0 - 1.0 / f64::from(k);
    let p_none = q.powi(n_prime as i32);
    let p_single = if n_prime == 0 {
        0.0
    } else {
        f64::from(n_prime) / f64::from(k) * q.powi(n_prime as i32 - 1)
    };
    Ok(PhaseProbabilities {
        p_none,
        p_single,
        p_collision: (1.0 - p_none - p_single).max(0.0),
    })
}

/// Upper bound on the probability of a bad phase.
pub const BAD_PHASE_BOUND: f64 = 0.4;

/// Checks that a phase starting with `k` outside `[n', 3n']` drifts further
/// away with probability at most 0.4.
///
/// For `k <= n'` the drift is a silent slot (`k` decreases or sticks at 2).
/// For `k >= 3n'` the drift is a collision, bounded here by the probability
/// that at least one node beeps.
pub fn bad_phase_bound_check(k: u32, n_prime: u32) -> Result<bool> {
    if n_prime == 0 {
        return Err(Error::InvalidInput("n' must be at least 1".into()));
    }
    let p = phase_probs(k, n_prime)?;
    let drift = if k <= n_prime {
        p.p_none
    } else if u64::from(k) >= 3 * u64::from(n_prime) {
        1.0 - p.p_none
    } else {
        return Err(Error::InvalidInput(format!(
            "k = {k} lies strictly inside ({n_prime}, {})",
            3 * u64::from(n_prime)
        )));
    };
    Ok(drift <= BAD_PHASE_BOUND)
}

/// Tail bound `2 e^{-n/66}` on the number of bad phases among `55n`.
pub fn chernoff_tail(n: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    Ok(2.0 * (-(n as f64) / 66.0).exp())
}

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
const MAX_CAP_DOUBLINGS: u32 = 8;

/// Suggested truncation of `k` for [`expected_phases_exact`].
pub fn default_k_cap(n: u32) -> u32 {
    64 * n.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedPhases {
    /// Expected number of phases from `(n, 2)`.
    pub value: f64,
    /// Truncation level the value was computed with.
    pub k_cap: u32,
    /// Change in the value when the truncation level was last doubled.
    pub truncation_residual: f64,
    /// Largest equation residual of the linear solve.
    pub solve_residual: f64,
}

/// Expected number of phases of the `B_cd L` protocol on `n` nodes.
///
/// Values of `k` above `k_cap` are folded back onto `k_cap`. The cap is
/// doubled until the result moves by at most `tolerance`.
pub fn expected_phases_exact(n: u32, k_cap: u32, tolerance: f64) -> Result<ExpectedPhases> {
    if n == 0 {
        return Err(Error::InvalidInput("n must be at least 1".into()));
    }
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let min_cap = (3 * n).max(3);
    if k_cap < min_cap {
        return Err(Error::InvalidInput(format!(
            "k_cap must be at least {min_cap}, got {k_cap}"
        )));
    }

    let mut cap = k_cap;
    let (mut value, _) = absorption_time(n, cap)?;
    for _ in 0..MAX_CAP_DOUBLINGS {
        let wider = cap
            .checked_mul(2)
            .ok_or_else(|| Error::Numerical(format!("k_cap overflow while refining from {cap}")))?;
        let (next, solve_residual) = absorption_time(n, wider)?;
        let change = (next - value).abs();
        cap = wider;
        value = next;
        if change <= tolerance {
            if solve_residual > tolerance * value.max(1.0) {
                return Err(Error::Numerical(format!(
                    "linear solve residual {solve_residual:e} exceeds tolerance {tolerance:e}"
                )));
            }
            return Ok(ExpectedPhases {
                value,
                k_cap: cap,
                truncation_residual: change,
                solve_residual,
            });
        }
    }
    Err(Error::Numerical(format!(
        "expected phases for n = {n} did not settle within {tolerance:e} up to k_cap = {cap}"
    )))
}

/// Expected absorption time from `(n, 2)` with `k` truncated at `cap`, and
/// the worst equation residual.
///
/// For each level `n'` the unknowns `E(n', k)` form a tridiagonal system,
/// since `k` moves by at most one per phase; the level below enters only
/// through the right-hand side.
fn absorption_time(n: u32, cap: u32) -> Result<(f64, f64)> {
    let m = (cap - 1) as usize;
    let idx = |k: u32| (k - 2) as usize;
    let mut below = vec![0.0; m];
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut rhs = vec![0.0; m];
    let mut worst = 0.0f64;

    for level in 1..=n {
        for k in 2..=cap {
            let j = idx(k);
            let p = phase_probs(k, level)?;
            diag[j] = 1.0;
            lower[j] = 0.0;
            upper[j] = 0.0;
            if k == 2 {
                diag[j] -= p.p_none;
            } else {
                lower[j] = -p.p_none;
            }
            if k == cap {
                diag[j] -= p.p_collision;
            } else {
                upper[j] = -p.p_collision;
            }
            rhs[j] = 1.0 + p.p_single * below[j];
        }
        let solution = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
        for j in 0..m {
            let mut lhs = diag[j] * solution[j];
            if j > 0 {
                lhs += lower[j] * solution[j - 1];
            }
            if j + 1 < m {
                lhs += upper[j] * solution[j + 1];
            }
            worst = worst.max((lhs - rhs[j]).abs());
        }
        below = solution;
    }
    Ok((below[idx(2)], worst))
}

/// Thomas algorithm; `lower[0]` and `upper[m-1]` are ignored.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let m = diag.len();
    let mut c = vec![0.0; m];
    let mut d = vec![0.0; m];
    for j in 0..m {
        let (prev_c, prev_d) = if j == 0 {
            (0.0, 0.0)
        } else {
            (c[j - 1], d[j - 1])
        };
        let l = if j == 0 { 0.0 } else { lower[j] };
        let pivot = diag[j] - l * prev_c;
        if pivot.abs() < f64::EPSILON {
            return Err(Error::Numerical(format!("vanishing pivot at row {j}")));
        }
        c[j] = if j + 1 < m { upper[j] / pivot } else { 0.0 };
        d[j] = (rhs[j] - l * prev_d) / pivot;
    }
    let mut x = vec![0.0; m];
    for j in (0..m).rev() {
        x[j] = d[j] - if j + 1 < m { c[j] * x[j + 1] } else { 0.0 };
    }
    Ok(x)
}
