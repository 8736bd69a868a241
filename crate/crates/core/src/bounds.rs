//! Worst-case model-error bounds from Hoeffding's inequality.
//!
//! Every bound assumes shots and moves are spread evenly over the `M`
//! states, so each state sees `N̄_g = p_g·N/M` shots and
//! `N̄_T = (1 − p_g)·N/M` moves. Real visit counts are skewed; the
//! per-state counts are worth checking before trusting a bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{diff_inf_norm, SparseMatrix};
use crate::solver::truncation_bound;

pub const DEFAULT_ALPHA: f64 = 0.10;
pub const DEFAULT_SHOT_SHARE: f64 = 0.02;

/// A bound together with the per-state sample size it rests on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundValue {
    pub value: f64,
    pub samples_per_state: f64,
    /// False when fewer than one sample per state backs the bound.
    pub meaningful: bool,
}

fn check_common(m: usize, n: f64, alpha: f64) -> Result<()> {
    if m == 0 {
        return Err(Error::domain("M must be >= 1"));
    }
    if !(n > 0.0) {
        return Err(Error::domain(format!("N must be positive, got {n}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// `‖g − ĝ‖∞ < sqrt(log(2M/α) / (2 N̄_g))` with probability `1 − α`.
pub fn bound_g(m: usize, n: f64, p_g: f64, alpha: f64) -> Result<BoundValue> {
    check_common(m, n, alpha)?;
    if !(p_g > 0.0 && p_g <= 1.0) {
        return Err(Error::domain(format!("shot share must lie in (0, 1], got {p_g}")));
    }
    let mf = m as f64;
    let per_state = p_g * n / mf;
    Ok(BoundValue {
        value: ((2.0 * mf / alpha).ln() / (2.0 * per_state)).sqrt(),
        samples_per_state: per_state,
        meaningful: per_state >= 1.0,
    })
}

/// `‖T − T̂‖∞ < M·sqrt(log(2M²/α) / (2 N̄_T))` with probability `1 − α`.
pub fn bound_t(m: usize, n: f64, p_g: f64, alpha: f64) -> Result<BoundValue> {
    check_common(m, n, alpha)?;
    if !(0.0..1.0).contains(&p_g) {
        return Err(Error::domain(format!("shot share must lie in [0, 1), got {p_g}")));
    }
    let mf = m as f64;
    let per_state = (1.0 - p_g) * n / mf;
    Ok(BoundValue {
        value: mf * ((2.0 * mf * mf / alpha).ln() / (2.0 * per_state)).sqrt(),
        samples_per_state: per_state,
        meaningful: per_state >= 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub m: usize,
    pub n: f64,
    pub alpha: f64,
    pub p_g: f64,
    /// `‖T‖∞` of the true chain.
    pub t_inf_true: f64,
    /// `‖ĝ‖∞` of the estimate.
    pub g_inf_hat: f64,
    /// `‖T̂‖∞` of the estimate.
    pub t_inf_hat: f64,
    /// Value-iteration steps.
    pub k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub stat_g: f64,
    pub stat_t: f64,
    pub statistical: f64,
    pub numerical: f64,
    pub total: f64,
}

/// Combined bound on `‖xT − x̂T⁽ᵏ⁾‖∞`, holding with probability `1 − α`.
pub fn theorem_bound(inp: &BoundInputs) -> Result<BoundBreakdown> {
    if !(0.0..1.0).contains(&inp.t_inf_true) {
        return Err(Error::domain(format!("||T||_inf of the true chain must be < 1, got {}", inp.t_inf_true)));
    }
    let stat_g = bound_g(inp.m, inp.n, inp.p_g, inp.alpha)?.value;
    let stat_t = bound_t(inp.m, inp.n, inp.p_g, inp.alpha)?.value;
    let statistical = (stat_g + stat_t) / (1.0 - inp.t_inf_true);
    let numerical = truncation_bound(inp.g_inf_hat, inp.t_inf_hat, inp.k.max(1))?;
    Ok(BoundBreakdown { stat_g, stat_t, statistical, numerical, total: statistical + numerical })
}

/// Leading-order form `(p_g^{-1/2} + 1)/(1 − ‖T‖∞) · M^{3/2} sqrt(log(2M²/α)/(2N))`.
pub fn approx_bound(m: usize, n: f64, p_g: f64, alpha: f64, t_inf: f64) -> Result<f64> {
    check_common(m, n, alpha)?;
    if !(0.0..1.0).contains(&t_inf) {
        return Err(Error::domain(format!("||T||_inf must be < 1, got {t_inf}")));
    }
    if !(p_g > 0.0 && p_g < 1.0) {
        return Err(Error::domain(format!("shot share must lie in (0, 1), got {p_g}")));
    }
    let mf = m as f64;
    Ok((p_g.powf(-0.5) + 1.0) / (1.0 - t_inf) * mf.powf(1.5) * ((2.0 * mf * mf / alpha).ln() / (2.0 * n)).sqrt())
}

fn stat_g_cont(m: f64, p_g: f64, alpha: f64) -> f64 {
    (m / p_g).sqrt() * (2.0 * m / alpha).ln().sqrt()
}

fn stat_t_cont(m: f64, p_g: f64, alpha: f64) -> f64 {
    m.powf(1.5) / (1.0 - p_g).sqrt() * (2.0 * m * m / alpha).ln().sqrt()
}

/// The real `M` where the goal-vector and transition terms of
/// [`theorem_bound`] are equal. Below it the goal term dominates. The
/// common factor `1/sqrt(2N)` cancels, so the crossover is independent
/// of `N`.
pub fn crossover_m(p_g: f64, alpha: f64) -> Result<f64> {
    if !(p_g > 0.0 && p_g < 1.0) || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::domain("crossover needs p_g in (0,1) and alpha in (0,1]"));
    }
    let f = |m: f64| stat_g_cont(m, p_g, alpha) - stat_t_cont(m, p_g, alpha);
    let (mut lo, mut hi) = (1.0, 2.0);
    if f(lo) <= 0.0 {
        return Ok(1.0);
    }
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Terms of the statistical split
/// `‖xT − x̂T‖∞ ≤ (‖g − ĝ‖∞ + ‖(T − T̂)x̂T‖∞) / (1 − ‖T‖∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitTerms {
    pub err_g: f64,
    /// `‖(T − T̂)·x̂T‖∞`, computed exactly.
    pub err_t_weighted: f64,
    /// `‖T − T̂‖∞`, the looser relaxation.
    pub err_t: f64,
    /// Right-hand side using the exact weighted term.
    pub rhs: f64,
}

pub fn split_terms(
    g: &[f64],
    g_hat: &[f64],
    t: &SparseMatrix,
    t_hat: &SparseMatrix,
    xt_hat: &[f64],
) -> Result<SplitTerms> {
    let t_inf = t.inf_norm();
    if t_inf >= 1.0 {
        return Err(Error::domain(format!("||T||_inf of the true chain must be < 1, got {t_inf}")));
    }
    let err_g = diff_inf_norm(g, g_hat);
    let err_t_weighted = t.diff_weighted_inf_norm(t_hat, xt_hat);
    let err_t = t.diff_inf_norm(t_hat);
    Ok(SplitTerms { err_g, err_t_weighted, err_t, rhs: (err_g + err_t_weighted) / (1.0 - t_inf) })
}
