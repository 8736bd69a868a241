//! Player ratings: xT added by on-the-ball moves, per 90 minutes, and
//! rank-based quartiles within a cohort.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{ActionKind, EventRecord, MinutesLedger};
use crate::grid::{PitchGrid, StateId};
use crate::solver::XtModel;

/// `xt(after) − xt(before)`; a move that loses the ball ends at zero.
pub fn action_delta(model: &XtModel, before: StateId, after: StateId, terminal_turnover: bool) -> f64 {
    let after_value = if terminal_turnover { 0.0 } else { model.value(after) };
    after_value - model.value(before)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionDelta {
    pub player_id: String,
    pub delta: f64,
    pub kept: bool,
}

/// Deltas of every move in `events`. Shots carry no delta.
pub fn action_deltas(model: &XtModel, events: &[EventRecord]) -> Result<Vec<ActionDelta>> {
    let grid = model.grid;
    events
        .iter()
        .filter(|e| e.action_kind.is_move())
        .map(|e| {
            let delta = action_delta(model, grid.state_of(e.start)?, grid.state_of(e.end)?, !e.success);
            Ok(ActionDelta { player_id: e.player_id.clone(), delta, kept: delta > 0.0 })
        })
        .collect()
}

/// How per-action deltas are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Only positive deltas count.
    #[default]
    PositivePart,
    /// Every delta counts; for analysis only.
    Signed,
}

impl Aggregation {
    fn apply(self, delta: f64) -> f64 {
        match self {
            Aggregation::PositivePart => delta.max(0.0),
            Aggregation::Signed => delta,
        }
    }
}

/// A player's moves as grid states, fixed across models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerActions {
    pub player_id: String,
    pub position: String,
    pub minutes: f64,
    pub grid: PitchGrid,
    /// Completed moves `(before, after)`.
    pub moves: Vec<(usize, usize)>,
    /// Start states of moves that lost the ball.
    pub turnovers: Vec<usize>,
}

/// xT per 90 minutes for each player under the values `xt`.
pub fn rate_actions(xt: &[f64], players: &[PlayerActions], agg: Aggregation) -> Vec<f64> {
    players
        .iter()
        .map(|p| {
            let moves: f64 = p.moves.iter().map(|&(a, b)| agg.apply(xt[b] - xt[a])).sum();
            let lost: f64 = p.turnovers.iter().map(|&a| agg.apply(-xt[a])).sum();
            90.0 * (moves + lost) / p.minutes
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortFilter {
    /// Keep only this position label.
    pub position: Option<String>,
    pub min_minutes: f64,
    /// Keep only events whose match id starts with this prefix.
    pub competition: Option<String>,
}

impl Default for CohortFilter {
    fn default() -> Self {
        CohortFilter { position: None, min_minutes: 300.0, competition: None }
    }
}

impl CohortFilter {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_minutes > 0.0) {
            return Err(Error::domain(format!("minimum minutes must be positive, got {}", self.min_minutes)));
        }
        Ok(())
    }

    fn keeps_event(&self, e: &EventRecord) -> bool {
        self.competition.as_deref().is_none_or(|c| e.match_id.starts_with(c))
    }

    fn keeps_player(&self, position: &str, minutes: f64) -> bool {
        minutes >= self.min_minutes && self.position.as_deref().is_none_or(|p| p == position)
    }
}

/// Move actions of every player in the cohort, as grid states.
pub fn player_actions(
    events: &[EventRecord],
    grid: PitchGrid,
    ledger: &MinutesLedger,
    cohort: &CohortFilter,
) -> Result<Vec<PlayerActions>> {
    cohort.validate()?;
    // player -> (completed moves, turnover states)
    type Actions = (Vec<(usize, usize)>, Vec<usize>);
    let mut by_player: BTreeMap<&str, Actions> = BTreeMap::new();
    for e in events.iter().filter(|e| cohort.keeps_event(e)) {
        let entry = by_player.entry(&e.player_id).or_default();
        if !e.action_kind.is_move() {
            continue;
        }
        let a = grid.state_of(e.start)?.0;
        if e.success {
            entry.0.push((a, grid.state_of(e.end)?.0));
        } else {
            entry.1.push(a);
        }
    }
    let mut missing = 0;
    let mut out = Vec::new();
    for (id, (moves, turnovers)) in by_player {
        let (Some(&minutes), Some(position)) = (ledger.minutes.get(id), ledger.positions.get(id)) else {
            missing += 1;
            continue;
        };
        if cohort.keeps_player(position, minutes) {
            out.push(PlayerActions {
                player_id: id.to_string(),
                position: position.clone(),
                minutes,
                grid,
                moves,
                turnovers,
            });
        }
    }
    if missing > 0 {
        log::warn!("{missing} players have events but no minutes entry; left out");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerRating {
    pub player_id: String,
    pub position: String,
    pub minutes: f64,
    pub xt_per90: f64,
    /// 1 is the lowest rating; ties ordered by player id.
    pub cohort_rank: usize,
    pub quartile: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatingReport {
    pub ratings: Vec<PlayerRating>,
    /// Players with events but no minutes entry.
    pub missing_minutes: usize,
}

pub fn rate_players(
    model: &XtModel,
    events: &[EventRecord],
    ledger: &MinutesLedger,
    cohort: &CohortFilter,
    agg: Aggregation,
) -> Result<RatingReport> {
    let missing_minutes = events
        .iter()
        .filter(|e| cohort.keeps_event(e) && e.action_kind != ActionKind::Shot)
        .map(|e| e.player_id.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .filter(|id| !ledger.minutes.contains_key(*id) || !ledger.positions.contains_key(*id))
        .count();
    let players = player_actions(events, model.grid, ledger, cohort)?;
    let values = rate_actions(&model.xt, &players, agg);
    let ids: Vec<&str> = players.iter().map(|p| p.player_id.as_str()).collect();
    let q = quartiles(&values, &ids);
    let ranks = ranks(&values, &ids);
    let mut ratings: Vec<PlayerRating> = players
        .iter()
        .zip(values)
        .zip(q)
        .zip(ranks)
        .map(|(((p, v), q), r)| PlayerRating {
            player_id: p.player_id.clone(),
            position: p.position.clone(),
            minutes: p.minutes,
            xt_per90: v,
            cohort_rank: r,
            quartile: q,
        })
        .collect();
    ratings.sort_by_key(|r| r.cohort_rank);
    Ok(RatingReport { ratings, missing_minutes })
}

pub const RATINGS_SCHEMA: &str = "# schema: xtq.ratings/1";

pub fn write_ratings_csv<W: std::io::Write>(mut w: W, ratings: &[PlayerRating]) -> Result<()> {
    writeln!(w, "{RATINGS_SCHEMA}")?;
    writeln!(w, "player_id,position,minutes,xt_per90,rank,quartile")?;
    for r in ratings {
        writeln!(w, "{},{},{},{},{},{}", r.player_id, r.position, r.minutes, r.xt_per90, r.cohort_rank, r.quartile)?;
    }
    Ok(())
}

fn quartile_from_rank(rank: usize, n: usize) -> u8 {
    1 + (4 * (rank - 1) / n).min(3) as u8
}

/// Distinct ranks 1..=n by value, ties broken by id.
fn ranks(values: &[f64], ids: &[&str]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then_with(|| ids[a].cmp(ids[b])));
    let mut r = vec![0; values.len()];
    for (k, &i) in order.iter().enumerate() {
        r[i] = k + 1;
    }
    r
}

/// Quartile `1 + min(3, ⌊4(rank − 1)/n⌋)` of entry `idx`, where tied
/// values share the lowest rank of their tie group.
pub fn quartile_of(values: &[f64], idx: usize) -> Result<u8> {
    if idx >= values.len() {
        return Err(Error::domain(format!("index {idx} out of range for {} values", values.len())));
    }
    let v = values[idx];
    let rank = 1 + values.iter().filter(|&&u| u.total_cmp(&v).is_lt()).count();
    Ok(quartile_from_rank(rank, values.len()))
}

/// Quartiles of all entries, equivalent to calling [`quartile_of`] for
/// each. `ids` only fixes the processing order.
pub fn quartiles(values: &[f64], ids: &[&str]) -> Vec<u8> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then_with(|| ids[a].cmp(ids[b])));
    let mut q = vec![0; n];
    let mut k = 0;
    while k < n {
        let mut j = k;
        while j < n && values[order[j]].total_cmp(&values[order[k]]).is_eq() {
            j += 1;
        }
        let quart = quartile_from_rank(k + 1, n);
        for &i in &order[k..j] {
            q[i] = quart;
        }
        k = j;
    }
    q
}
