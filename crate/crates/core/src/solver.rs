//! xT values as the fixed point of `xT = g + T·xT`.
//!
//! [`value_iterate`] runs the vectorized iteration `xT⁽ᵏ⁺¹⁾ = g + T·xT⁽ᵏ⁾`
//! from `xT⁽¹⁾ = g`, so `xT⁽ᵏ⁾` is the probability of scoring within `k`
//! actions. For `‖T‖∞ < 1` the truncation error after `k` steps is at most
//! `‖g‖∞ ‖T‖∞ᵏ / (1 − ‖T‖∞)`. [`direct_solve`] solves `(I − T)·xT = g`
//! densely and serves as an independent check.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{CondensedModel, DroppedStates, SolveMeta, FEASIBILITY_TOL};
use crate::grid::{PitchGrid, StateId};
use crate::sparse::inf_norm;

pub const DEFAULT_EPS_STOP: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
/// Largest model [`direct_solve`] accepts.
pub const DIRECT_SOLVE_MAX_STATES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XtModel {
    pub grid: PitchGrid,
    pub xt: Vec<f64>,
    pub iterations: usize,
    pub threshold: f64,
    pub certified_bound: f64,
    pub g_inf: f64,
    pub t_inf: f64,
}

impl XtModel {
    pub fn value(&self, s: StateId) -> f64 {
        self.xt[s.0]
    }

    /// Wraps externally computed values; no solve metadata.
    pub fn from_values(grid: PitchGrid, xt: Vec<f64>) -> Self {
        Self { grid, xt, iterations: 0, threshold: 0.0, certified_bound: 0.0, g_inf: 0.0, t_inf: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    pub final_delta: f64,
    pub iterations: usize,
}

/// `‖g‖∞ ‖T‖∞ᵏ / (1 − ‖T‖∞)`.
pub fn truncation_bound(g_inf: f64, t_inf: f64, k: usize) -> Result<f64> {
    if !(0.0..1.0).contains(&t_inf) {
        return Err(Error::domain(format!("truncation bound needs 0 <= ||T||_inf < 1, got {t_inf}")));
    }
    if k == 0 {
        return Err(Error::domain("truncation bound needs k >= 1"));
    }
    if g_inf == 0.0 || t_inf == 0.0 {
        return Ok(0.0);
    }
    Ok(g_inf * t_inf.powi(k.min(i32::MAX as usize) as i32) / (1.0 - t_inf))
}

fn check_feasible(model: &CondensedModel) -> Result<()> {
    if model.t_inf >= 1.0 - FEASIBILITY_TOL {
        return Err(Error::Infeasible { t_inf: model.t_inf, states: model.infeasible_states() });
    }
    Ok(())
}

/// Runs value iteration until `‖xT⁽ᵏ⁾ − xT⁽ᵏ⁻¹⁾‖∞ ≤ eps_stop` or `max_iter`
/// iterates have been formed. `observer` sees every iterate `(k, xT⁽ᵏ⁾)`.
pub fn value_iterate_with(
    model: &CondensedModel,
    eps_stop: f64,
    max_iter: usize,
    observer: impl FnMut(usize, &[f64]),
) -> Result<(XtModel, SolveReport)> {
    iterate(model, eps_stop, 1, max_iter, observer)
}

fn iterate(
    model: &CondensedModel,
    eps_stop: f64,
    min_iter: usize,
    max_iter: usize,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<(XtModel, SolveReport)> {
    check_feasible(model)?;
    if !(eps_stop > 0.0) {
        return Err(Error::domain(format!("eps_stop must be positive, got {eps_stop}")));
    }
    let max_iter = max_iter.max(1);
    let m = model.n_states();
    let mut cur = model.g.clone();
    let mut next = vec![0.0; m];
    let mut k = 1;
    observer(k, &cur);
    let mut delta = f64::INFINITY;
    while k < max_iter {
        model.transitions.mul_vec_into(&cur, &mut next);
        delta = 0.0;
        for s in 0..m {
            next[s] += model.g[s];
            delta = f64::max(delta, (next[s] - cur[s]).abs());
        }
        std::mem::swap(&mut cur, &mut next);
        k += 1;
        observer(k, &cur);
        if delta <= eps_stop && k >= min_iter {
            break;
        }
    }
    for v in &mut cur {
        *v = v.clamp(0.0, 1.0);
    }
    let g_inf = inf_norm(&model.g);
    let xt = XtModel {
        grid: model.grid,
        xt: cur,
        iterations: k,
        threshold: eps_stop,
        certified_bound: truncation_bound(g_inf, model.t_inf, k)?,
        g_inf,
        t_inf: model.t_inf,
    };
    let report = SolveReport { converged: delta <= eps_stop, final_delta: delta, iterations: k };
    Ok((xt, report))
}

pub fn value_iterate(model: &CondensedModel, eps_stop: f64, max_iter: usize) -> Result<(XtModel, SolveReport)> {
    value_iterate_with(model, eps_stop, max_iter, |_, _| {})
}

/// Like [`value_iterate`], but keeps iterating past the stopping rule
/// until the certified truncation bound is at most `bound_target`.
pub fn value_iterate_certified(
    model: &CondensedModel,
    eps_stop: f64,
    bound_target: f64,
    max_iter: usize,
) -> Result<(XtModel, SolveReport)> {
    check_feasible(model)?;
    let g_inf = inf_norm(&model.g);
    let min_iter = if g_inf == 0.0 || model.t_inf == 0.0 || bound_target <= 0.0 {
        1
    } else {
        let k = ((bound_target * (1.0 - model.t_inf) / g_inf).ln() / model.t_inf.ln()).ceil();
        if k.is_finite() { (k.max(1.0) as usize).min(max_iter) } else { 1 }
    };
    iterate(model, eps_stop, min_iter, max_iter, |_, _| {})
}

/// Result of solving an estimated model that may contain stochastic rows.
#[derive(Debug, Clone)]
pub struct EstimatedSolve {
    pub model: XtModel,
    pub report: SolveReport,
    pub dropped: DroppedStates,
}

impl EstimatedSolve {
    pub fn meta(&self) -> SolveMeta {
        SolveMeta {
            iterations: self.report.iterations,
            threshold: self.model.threshold,
            final_delta: self.report.final_delta,
            converged: self.report.converged,
            certified_bound: self.model.certified_bound,
            g_inf: self.model.g_inf,
            t_inf: self.model.t_inf,
            dropped_states: self.dropped.states(),
        }
    }
}

/// Drops infeasible states, iterates on the reduced chain and restores the
/// dropped states' values. `certified_bound` and `t_inf` refer to the
/// reduced chain.
pub fn solve_estimated(model: &CondensedModel, eps_stop: f64, max_iter: usize) -> Result<EstimatedSolve> {
    solve_estimated_certified(model, eps_stop, 0.0, max_iter)
}

/// [`solve_estimated`] with a certified-bound target, see
/// [`value_iterate_certified`]. A target of 0 disables it.
pub fn solve_estimated_certified(
    model: &CondensedModel,
    eps_stop: f64,
    bound_target: f64,
    max_iter: usize,
) -> Result<EstimatedSolve> {
    let (reduced, dropped) = model.drop_infeasible();
    let (mut xt, report) = value_iterate_certified(&reduced, eps_stop, bound_target, max_iter)?;
    dropped.restore(&mut xt.xt);
    for v in &mut xt.xt {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(EstimatedSolve { model: xt, report, dropped })
}

/// Solves `(I − T)·xT = g` by Gaussian elimination with partial pivoting.
pub fn direct_solve(model: &CondensedModel) -> Result<Vec<f64>> {
    let m = model.n_states();
    if m > DIRECT_SOLVE_MAX_STATES {
        return Err(Error::domain(format!("direct solve limited to {DIRECT_SOLVE_MAX_STATES} states, got {m}")));
    }
    check_feasible(model)?;
    let mut a = vec![0.0; m * m];
    for i in 0..m {
        a[i * m + i] = 1.0;
        for (j, v) in model.transitions.row_entries(i) {
            a[i * m + j] -= v;
        }
    }
    let mut b = model.g.clone();
    for col in 0..m {
        let piv = (col..m)
            .max_by(|&p, &q| a[p * m + col].abs().total_cmp(&a[q * m + col].abs()))
            .expect("non-empty pivot range");
        if a[piv * m + col].abs() < 1e-300 {
            return Err(Error::Singular(col));
        }
        if piv != col {
            for j in 0..m {
                a.swap(col * m + j, piv * m + j);
            }
            b.swap(col, piv);
        }
        let d = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..m {
                a[r * m + j] -= f * a[col * m + j];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|j| a[i * m + j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i * m + i];
    }
    Ok(x)
}

/// `‖(I − T)·x − g‖∞`.
pub fn residual(model: &CondensedModel, x: &[f64]) -> f64 {
    let tx = model.transitions.mul_vec(x);
    (0..model.n_states()).fold(0.0, |m, s| f64::max(m, (x[s] - tx[s] - model.g[s]).abs()))
}
