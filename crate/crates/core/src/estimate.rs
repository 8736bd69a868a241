//! Empirical-mean estimation of the possession Markov chain.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{ActionKind, PossessionChain};
use crate::grid::PitchGrid;
use crate::sparse::{JsonRow, SparseMatrix};

/// Row sums at or above `1 - FEASIBILITY_TOL` are treated as stochastic.
pub const FEASIBILITY_TOL: f64 = 1e-12;

/// Per-state event counts.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCounts {
    pub grid: PitchGrid,
    pub visits: Vec<u64>,
    pub shots: Vec<u64>,
    pub goals: Vec<u64>,
    pub turnovers: Vec<u64>,
    pub chain_starts: Vec<u64>,
    /// `moves[s][s']` for observed transitions only.
    pub moves: Vec<BTreeMap<usize, u64>>,
}

impl StateCounts {
    pub fn new(grid: PitchGrid) -> Self {
        let m = grid.n_states();
        Self {
            grid,
            visits: vec![0; m],
            shots: vec![0; m],
            goals: vec![0; m],
            turnovers: vec![0; m],
            chain_starts: vec![0; m],
            moves: vec![BTreeMap::new(); m],
        }
    }

    pub fn record_shot(&mut self, s: usize, goal: bool) {
        self.visits[s] += 1;
        self.shots[s] += 1;
        self.goals[s] += goal as u64;
    }

    pub fn record_move(&mut self, s: usize, to: usize) {
        self.visits[s] += 1;
        *self.moves[s].entry(to).or_insert(0) += 1;
    }

    pub fn record_turnover(&mut self, s: usize) {
        self.visits[s] += 1;
        self.turnovers[s] += 1;
    }

    /// Total actions `N`.
    pub fn n_events(&self) -> u64 {
        self.visits.iter().sum()
    }

    /// Total shots `N_g`.
    pub fn n_shots(&self) -> u64 {
        self.shots.iter().sum()
    }

    /// Total ball moves `N_T`.
    pub fn n_moves(&self) -> u64 {
        self.moves.iter().flat_map(|r| r.values()).sum()
    }

    /// Adds another shard's counts. Addition commutes, so shard order is
    /// irrelevant.
    pub fn merge(&mut self, other: &StateCounts) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::Dimension(format!("cannot merge {} counts into {}", other.grid, self.grid)));
        }
        let add = |a: &mut Vec<u64>, b: &Vec<u64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.visits, &other.visits);
        add(&mut self.shots, &other.shots);
        add(&mut self.goals, &other.goals);
        add(&mut self.turnovers, &other.turnovers);
        add(&mut self.chain_starts, &other.chain_starts);
        for (a, b) in self.moves.iter_mut().zip(&other.moves) {
            for (k, v) in b {
                *a.entry(*k).or_insert(0) += v;
            }
        }
        Ok(())
    }
}

/// Counts actions per start state. Each event increments exactly one of
/// shots, moves or turnovers; failed moves of any kind are turnovers.
pub fn count(chains: &[PossessionChain], grid: PitchGrid) -> Result<StateCounts> {
    let mut c = StateCounts::new(grid);
    for chain in chains {
        for (i, e) in chain.events.iter().enumerate() {
            let s = grid.state_of(e.start)?.0;
            if i == 0 {
                c.chain_starts[s] += 1;
            }
            match e.action_kind {
                ActionKind::Shot => c.record_shot(s, e.is_goal),
                _ if !e.success => c.record_turnover(s),
                _ => c.record_move(s, grid.state_of(e.end)?.0),
            }
        }
    }
    Ok(c)
}

/// The simulatable Markov chain: per state, shoot / move / lose the ball.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeModel {
    pub grid: PitchGrid,
    pub p_shot: Vec<f64>,
    /// Goal probability given a shot.
    pub xg: Vec<f64>,
    pub transitions: SparseMatrix,
    pub p_turn: Vec<f64>,
    /// Distribution of chain start states.
    pub pi0: Vec<f64>,
}

impl GenerativeModel {
    pub fn n_states(&self) -> usize {
        self.grid.n_states()
    }

    /// Checks ranges and per-state closure `p_shot + ΣT + p_turn = 1`.
    pub fn validate(&self) -> Result<()> {
        let m = self.grid.n_states();
        for (name, v) in [("p_shot", &self.p_shot), ("xg", &self.xg), ("p_turn", &self.p_turn), ("pi0", &self.pi0)] {
            if v.len() != m {
                return Err(Error::Dimension(format!("{name} has {} entries for M={m}", v.len())));
            }
            if let Some(i) = v.iter().position(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::domain(format!("{name}[{i}] = {} outside [0,1]", v[i])));
            }
        }
        if self.transitions.dim() != m {
            return Err(Error::Dimension(format!("T is {0}x{0} for M={m}", self.transitions.dim())));
        }
        for s in 0..m {
            let (_, vals) = self.transitions.row(s);
            if vals.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::domain(format!("T row {s} has entries outside [0,1]")));
            }
            let total = self.p_shot[s] + vals.iter().sum::<f64>() + self.p_turn[s];
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::domain(format!("state {s}: outcome probabilities sum to {total}")));
            }
        }
        let pi_sum: f64 = self.pi0.iter().sum();
        if (pi_sum - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!("pi0 sums to {pi_sum}")));
        }
        Ok(())
    }
}

/// Empirical means from counts. Unvisited states lose the ball with
/// certainty; states without shots get `xg = 0`.
pub fn estimate(counts: &StateCounts) -> GenerativeModel {
    let m = counts.grid.n_states();
    let mut p_shot = vec![0.0; m];
    let mut xg = vec![0.0; m];
    let mut p_turn = vec![1.0; m];
    let mut rows = Vec::with_capacity(m);
    for s in 0..m {
        let v = counts.visits[s];
        if v == 0 {
            rows.push(Vec::new());
            continue;
        }
        let vf = v as f64;
        p_shot[s] = counts.shots[s] as f64 / vf;
        if counts.shots[s] > 0 {
            xg[s] = counts.goals[s] as f64 / counts.shots[s] as f64;
        }
        p_turn[s] = counts.turnovers[s] as f64 / vf;
        rows.push(counts.moves[s].iter().map(|(&j, &c)| (j, c as f64 / vf)).collect());
    }
    let starts: u64 = counts.chain_starts.iter().sum();
    let pi0 = if starts == 0 {
        vec![1.0 / m as f64; m]
    } else {
        counts.chain_starts.iter().map(|&c| c as f64 / starts as f64).collect()
    };
    GenerativeModel {
        grid: counts.grid,
        p_shot,
        xg,
        transitions: SparseMatrix::from_rows(m, rows).expect("count columns are valid states"),
        p_turn,
        pi0,
    }
}

/// How the direct scoring probability `g` is estimated from counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GoalEstimator {
    /// `shots/visits · goals/shots`.
    #[default]
    Product,
    /// `goals/visits`.
    Direct,
}

/// `g` and `T` of the chain, the inputs of the xT fixed point
/// `xT = g + T·xT`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedModel {
    pub grid: PitchGrid,
    pub g: Vec<f64>,
    pub transitions: SparseMatrix,
    pub t_inf: f64,
}

impl CondensedModel {
    pub fn new(grid: PitchGrid, g: Vec<f64>, transitions: SparseMatrix) -> Result<Self> {
        let m = grid.n_states();
        if g.len() != m || transitions.dim() != m {
            return Err(Error::Dimension(format!("g has {}, T has {} states, grid has {m}", g.len(), transitions.dim())));
        }
        let t_inf = transitions.inf_norm();
        Ok(Self { grid, g, transitions, t_inf })
    }

    pub fn n_states(&self) -> usize {
        self.grid.n_states()
    }

    /// States whose row leaves no probability for a shot or a turnover.
    pub fn infeasible_states(&self) -> Vec<usize> {
        (0..self.n_states())
            .filter(|&s| self.transitions.row_sum(s) >= 1.0 - FEASIBILITY_TOL)
            .collect()
    }

    /// Removes stochastic rows by censoring: each dropped state's incoming
    /// probability is passed on along its own outgoing row. Feasible rows
    /// keep their sums, so the reduced chain has `‖T‖∞ < 1`. Dropped
    /// states keep an empty row and `g = 0`; their values are recovered
    /// with [`DroppedStates::restore`].
    pub fn drop_infeasible(&self) -> (CondensedModel, DroppedStates) {
        let m = self.n_states();
        let mut pending = self.infeasible_states();
        if pending.is_empty() {
            return (self.clone(), DroppedStates::default());
        }
        let mut rows: Vec<BTreeMap<usize, f64>> =
            (0..m).map(|s| self.transitions.row_entries(s).collect()).collect();
        let mut g = self.g.clone();
        let mut incoming: Vec<std::collections::BTreeSet<usize>> = vec![Default::default(); m];
        for (s, row) in rows.iter().enumerate() {
            for &j in row.keys() {
                incoming[j].insert(s);
            }
        }
        let mut dropped = DroppedStates::default();
        let mut is_dropped = vec![false; m];
        while let Some(d) = pending.pop() {
            if is_dropped[d] {
                continue;
            }
            is_dropped[d] = true;
            let mut out_row = std::mem::take(&mut rows[d]);
            let self_loop = out_row.remove(&d).unwrap_or(0.0);
            incoming[d].remove(&d);
            let keep = 1.0 - self_loop;
            let absorbing = keep <= FEASIBILITY_TOL;
            let g_d = std::mem::replace(&mut g[d], 0.0);
            for &j in out_row.keys() {
                incoming[j].remove(&d);
            }
            let sources: Vec<usize> = std::mem::take(&mut incoming[d]).into_iter().collect();
            for s in sources {
                let w = rows[s].remove(&d).unwrap_or(0.0);
                if w == 0.0 || absorbing {
                    continue;
                }
                let scale = w / keep;
                g[s] += scale * g_d;
                for (&j, &v) in &out_row {
                    *rows[s].entry(j).or_insert(0.0) += scale * v;
                    incoming[j].insert(s);
                }
            }
            dropped.order.push(Elimination {
                state: d,
                g: g_d,
                keep: if absorbing { 0.0 } else { keep },
                row: out_row.into_iter().collect(),
            });
            // rounding can tip a redistributed row onto the boundary
            pending.extend(
                (0..m).filter(|&s| !is_dropped[s] && rows[s].values().sum::<f64>() >= 1.0 - FEASIBILITY_TOL),
            );
        }
        let t = SparseMatrix::from_rows(m, rows.into_iter().map(|r| r.into_iter().collect()).collect())
            .expect("columns stay in range");
        let reduced = CondensedModel::new(self.grid, g, t).expect("dimensions unchanged");
        (reduced, dropped)
    }
}

/// One censored state: `xT(d) = (g_d + Σ row·xT) / keep`, or 0 when the
/// state only loops onto itself (`keep = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct Elimination {
    pub state: usize,
    pub g: f64,
    pub keep: f64,
    pub row: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DroppedStates {
    pub order: Vec<Elimination>,
}

impl DroppedStates {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn states(&self) -> Vec<usize> {
        self.order.iter().map(|e| e.state).collect()
    }

    /// Fills in dropped states' values, last dropped first.
    pub fn restore(&self, xt: &mut [f64]) {
        for e in self.order.iter().rev() {
            xt[e.state] = if e.keep == 0.0 {
                0.0
            } else {
                (e.g + e.row.iter().map(|&(j, v)| v * xt[j]).sum::<f64>()) / e.keep
            };
        }
    }
}

/// `g = p_shot ⊙ xg`, `T` unchanged.
pub fn condense(gen: &GenerativeModel) -> CondensedModel {
    let g = gen.p_shot.iter().zip(&gen.xg).map(|(p, x)| p * x).collect();
    CondensedModel::new(gen.grid, g, gen.transitions.clone()).expect("generative model dimensions")
}

/// Condenses straight from counts with the chosen goal estimator.
pub fn condense_counts(counts: &StateCounts, estimator: GoalEstimator) -> CondensedModel {
    let gen = estimate(counts);
    match estimator {
        GoalEstimator::Product => condense(&gen),
        GoalEstimator::Direct => {
            let g = counts
                .goals
                .iter()
                .zip(&counts.visits)
                .map(|(&k, &v)| if v == 0 { 0.0 } else { k as f64 / v as f64 })
                .collect();
            CondensedModel::new(gen.grid, g, gen.transitions).expect("generative model dimensions")
        }
    }
}

pub const MODEL_SCHEMA: &str = "xtq.model/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionJson {
    pub rows: Vec<JsonRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub n_events: u64,
    pub source: String,
}

/// Solve metadata stored alongside `xt` once a model has been solved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveMeta {
    pub iterations: usize,
    pub threshold: f64,
    pub final_delta: f64,
    pub converged: bool,
    pub certified_bound: f64,
    pub g_inf: f64,
    pub t_inf: f64,
    #[serde(default)]
    pub dropped_states: Vec<usize>,
}

/// On-disk model: the generative chain, optionally with solved xT values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default = "model_schema")]
    pub schema: String,
    pub grid: PitchGrid,
    pub p_shot: Vec<f64>,
    pub xg: Vec<f64>,
    pub p_turn: Vec<f64>,
    pub pi0: Vec<f64>,
    #[serde(rename = "T")]
    pub transitions: TransitionJson,
    pub meta: ModelMeta,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xt: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveMeta>,
}

fn model_schema() -> String {
    MODEL_SCHEMA.to_owned()
}

impl ModelFile {
    pub fn from_model(gen: &GenerativeModel, meta: ModelMeta) -> Self {
        Self {
            schema: model_schema(),
            grid: gen.grid,
            p_shot: gen.p_shot.clone(),
            xg: gen.xg.clone(),
            p_turn: gen.p_turn.clone(),
            pi0: gen.pi0.clone(),
            transitions: TransitionJson { rows: gen.transitions.to_json_rows() },
            meta,
            xt: None,
            solve: None,
        }
    }

    pub fn to_model(&self) -> Result<GenerativeModel> {
        let m = self.grid.n_states();
        let gen = GenerativeModel {
            grid: self.grid,
            p_shot: self.p_shot.clone(),
            xg: self.xg.clone(),
            transitions: SparseMatrix::from_json_rows(m, &self.transitions.rows)?,
            p_turn: self.p_turn.clone(),
            pi0: self.pi0.clone(),
        };
        gen.validate()?;
        Ok(gen)
    }
}
