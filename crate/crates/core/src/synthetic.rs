//! Built-in synthetic ground truth and an event generator driven by it.
//!
//! Scoring rises toward the attacking goal line as `0.25·x⁶` at the cell
//! center, split into a shot probability `0.5·x⁴` and a conversion rate
//! `0.5·x²`. Moves go to the 8-neighborhood (or stay in the cell) with a
//! forward bias, and a state-independent loss rate is calibrated so that
//! about 2% of all events are shots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::GenerativeModel;
use crate::events::{ActionKind, EventRecord, MinutesLedger};
use crate::grid::{PitchGrid, PitchPoint, StateId};
use crate::sim::{ChainSampler, Step};
use crate::sparse::SparseMatrix;

/// Tunable constants of the built-in truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// `p_shot = shot_scale · x^shot_power`.
    pub shot_scale: f64,
    pub shot_power: f64,
    /// `xg = xg_scale · x^xg_power`.
    pub xg_scale: f64,
    pub xg_power: f64,
    /// Relative weight of a move one column forward versus sideways.
    pub forward_bias: f64,
    /// Weight of a move backward.
    pub backward_weight: f64,
    /// Weight of staying in the same cell.
    pub stay_weight: f64,
    /// Chain starts have density proportional to `(1 − x)^start_power`.
    pub start_power: f64,
    /// Target fraction of shots among all events.
    pub shot_share: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            shot_scale: 0.5,
            shot_power: 4.0,
            xg_scale: 0.5,
            xg_power: 2.0,
            forward_bias: 1.6,
            backward_weight: 0.6,
            stay_weight: 1.0,
            start_power: 2.0,
            shot_share: 0.02,
        }
    }
}

/// Move weights before scaling: 8 neighbors plus the cell itself.
fn move_weights(grid: PitchGrid, s: usize, cfg: &SynthConfig) -> Vec<(usize, f64)> {
    let (cx, cy) = grid.cell(StateId(s));
    let (mx, my) = (grid.m_x() as i64, grid.m_y() as i64);
    let mut out = Vec::with_capacity(9);
    for dy in -1i64..=1 {
        for dx in -1i64..=1 {
            let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
            if nx < 0 || ny < 0 || nx >= mx || ny >= my {
                continue;
            }
            let w = match (dx, dy) {
                (0, 0) => cfg.stay_weight,
                (1, _) => cfg.forward_bias,
                (-1, _) => cfg.backward_weight,
                _ => 1.0,
            };
            if w > 0.0 {
                out.push(((ny * mx + nx) as usize, w));
            }
        }
    }
    let total: f64 = out.iter().map(|e| e.1).sum();
    for e in &mut out {
        e.1 /= total;
    }
    out
}

fn build(grid: PitchGrid, cfg: &SynthConfig, p_loss: f64) -> GenerativeModel {
    let m = grid.n_states();
    let mut p_shot = Vec::with_capacity(m);
    let mut xg = Vec::with_capacity(m);
    let mut p_turn = Vec::with_capacity(m);
    let mut rows = Vec::with_capacity(m);
    let mut pi0 = Vec::with_capacity(m);
    for s in 0..m {
        let x = grid.cell_center(StateId(s)).x;
        let ps = (cfg.shot_scale * x.powf(cfg.shot_power)).clamp(0.0, 1.0);
        let pt = p_loss.min(1.0 - ps);
        let moving = 1.0 - ps - pt;
        p_shot.push(ps);
        xg.push((cfg.xg_scale * x.powf(cfg.xg_power)).clamp(0.0, 1.0));
        p_turn.push(pt);
        rows.push(move_weights(grid, s, cfg).into_iter().map(|(j, w)| (j, w * moving)).collect());
        pi0.push((1.0 - x).powf(cfg.start_power));
    }
    let z: f64 = pi0.iter().sum();
    for p in &mut pi0 {
        *p /= z;
    }
    // Absorb rounding so each state's outcomes sum to one.
    let mut model = GenerativeModel {
        grid,
        p_shot,
        xg,
        transitions: SparseMatrix::from_rows(m, rows).expect("neighbor indices are in range"),
        p_turn,
        pi0,
    };
    for s in 0..m {
        let t: f64 = model.transitions.row_sum(s);
        model.p_turn[s] = (1.0 - model.p_shot[s] - t).max(0.0);
    }
    model
}

/// Expected events per chain and expected shots per chain, from the
/// occupation measure `v = π₀ (I − T)⁻¹` by fixed-point iteration.
pub fn expected_occupation(gen: &GenerativeModel) -> Vec<f64> {
    let m = gen.n_states();
    let mut v = gen.pi0.clone();
    let mut next = vec![0.0; m];
    for _ in 0..100_000 {
        next.copy_from_slice(&gen.pi0);
        for s in 0..m {
            for (j, t) in gen.transitions.row_entries(s) {
                next[j] += v[s] * t;
            }
        }
        let delta = v.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut next);
        if delta < 1e-13 {
            break;
        }
    }
    v
}

/// Expected fraction of shots among all events.
pub fn expected_shot_share(gen: &GenerativeModel) -> f64 {
    let v = expected_occupation(gen);
    let events: f64 = v.iter().sum();
    v.iter().zip(&gen.p_shot).map(|(a, b)| a * b).sum::<f64>() / events
}

/// The built-in truth for `grid` with default constants.
pub fn builtin_truth(grid: PitchGrid) -> GenerativeModel {
    builtin_truth_with(grid, &SynthConfig::default()).expect("default constants are valid")
}

/// Builds the truth and bisects the loss rate onto `cfg.shot_share`.
pub fn builtin_truth_with(grid: PitchGrid, cfg: &SynthConfig) -> Result<GenerativeModel> {
    if !(cfg.shot_share > 0.0 && cfg.shot_share < 1.0) {
        return Err(Error::domain(format!("shot share {} outside (0, 1)", cfg.shot_share)));
    }
    // More loss means shorter chains that rarely reach the shooting area,
    // so the shot share falls as the loss rate grows.
    let (mut lo, mut hi) = (1e-6, 1.0);
    let range = (expected_shot_share(&build(grid, cfg, hi)), expected_shot_share(&build(grid, cfg, lo)));
    if !(range.0 <= cfg.shot_share && cfg.shot_share <= range.1) {
        return Err(Error::domain(format!(
            "shot share {} unreachable on {grid}; this truth gives {:.4}..{:.4}",
            cfg.shot_share, range.0, range.1
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected_shot_share(&build(grid, cfg, mid)) > cfg.shot_share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let model = build(grid, cfg, 0.5 * (lo + hi));
    model.validate()?;
    Ok(model)
}

/// Roster layout of the generated league.
const TEAMS: usize = 8;
const SQUAD: usize = 16;
const LINEUP: usize = 11;
const EVENTS_PER_MATCH: usize = 1600;

fn position_of(k: usize) -> &'static str {
    match k {
        0 => "GK",
        1..=5 => "DF",
        6..=11 => "MF",
        _ => "FW",
    }
}

/// Preferred x of a squad member, used to decide who is on the ball.
fn home_x(k: usize) -> f64 {
    match position_of(k) {
        "GK" => 0.05,
        "DF" => 0.25,
        "MF" => 0.5,
        _ => 0.8,
    }
}

fn player_id(team: usize, k: usize) -> String {
    format!("t{team:02}p{k:02}")
}

/// Events plus the minutes each player was on the pitch.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub events: Vec<EventRecord>,
    pub minutes: MinutesLedger,
}

struct MatchState {
    id: usize,
    teams: [usize; 2],
    lineups: [Vec<usize>; 2],
    events: usize,
}

fn start_match(id: usize, rng: &mut ChaCha8Rng, ledger: &mut MinutesLedger) -> MatchState {
    let home = id % TEAMS;
    let away = (home + 1 + (id / TEAMS) % (TEAMS - 1)) % TEAMS;
    let mut lineups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (side, team) in [home, away].into_iter().enumerate() {
        // keeper always plays; the other ten spots rotate over the squad
        let mut outfield: Vec<usize> = (1..SQUAD).collect();
        for i in (1..outfield.len()).rev() {
            outfield.swap(i, rng.gen_range(0..=i));
        }
        let mut lineup = vec![0];
        lineup.extend(outfield.into_iter().take(LINEUP - 1));
        lineup.sort_unstable();
        for &k in &lineup {
            ledger.insert(&player_id(team, k), position_of(k), 90.0);
        }
        lineups[side] = lineup;
    }
    MatchState { id, teams: [home, away], lineups, events: 0 }
}

fn pick_player(lineup: &[usize], x: f64, rng: &mut ChaCha8Rng) -> usize {
    let weights: Vec<f64> = lineup.iter().map(|&k| (-((x - home_x(k)) / 0.2).powi(2)).exp() + 0.02).collect();
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return lineup[i];
        }
        u -= w;
    }
    *lineup.last().unwrap()
}

fn point_in(grid: PitchGrid, s: usize, rng: &mut ChaCha8Rng) -> PitchPoint {
    let (cx, cy) = grid.cell(StateId(s));
    let x = (cx as f64 + rng.gen::<f64>()) / grid.m_x() as f64;
    let y = (cy as f64 + rng.gen::<f64>()) / grid.m_y() as f64;
    // stay strictly inside the cell so the state survives a round trip
    let eps = 1e-9;
    PitchPoint::clamped(
        x.clamp(cx as f64 / grid.m_x() as f64 + eps, (cx + 1) as f64 / grid.m_x() as f64 - eps),
        y.clamp(cy as f64 / grid.m_y() as f64 + eps, (cy + 1) as f64 / grid.m_y() as f64 - eps),
    )
}

/// Samples whole chains from the built-in truth until at least `n_events`
/// events exist, attributing them to a small synthetic league.
pub fn synth_dataset(grid: PitchGrid, n_events: usize, seed: u64) -> SynthDataset {
    synth_dataset_from(&builtin_truth(grid), n_events, seed)
}

/// [`synth_dataset`] for an arbitrary generating model.
pub fn synth_dataset_from(gen: &GenerativeModel, n_events: usize, seed: u64) -> SynthDataset {
    let grid = gen.grid;
    let sampler = ChainSampler::new(gen);
    let mut chain_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attr_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_A77B_0000_0001);
    let mut minutes = MinutesLedger::default();
    let mut events: Vec<EventRecord> = Vec::with_capacity(n_events + 500);
    let mut game: Option<MatchState> = None;
    let mut possession = 0usize;
    while events.len() < n_events {
        let g = match game.take() {
            Some(g) if g.events < EVENTS_PER_MATCH => g,
            Some(g) => start_match(g.id + 1, &mut attr_rng, &mut minutes),
            None => start_match(0, &mut attr_rng, &mut minutes),
        };
        let mut g = g;
        let side = attr_rng.gen_range(0..2);
        possession += 1;
        let mut steps = Vec::new();
        sampler.walk(&mut chain_rng, |step| steps.push(step));
        for step in steps {
            let (s, kind, end, success, is_goal) = match step {
                Step::Shot { s, goal } => (s, ActionKind::Shot, s, goal, goal),
                Step::Move { s, to, .. } => (s, ActionKind::Pass, to, true, false),
                Step::Turnover { s } => (s, ActionKind::Pass, s, false, false),
            };
            let start = point_in(grid, s, &mut attr_rng);
            let end_pt = if kind == ActionKind::Shot { start } else { point_in(grid, end, &mut attr_rng) };
            let k = pick_player(&g.lineups[side], start.x, &mut attr_rng);
            events.push(EventRecord {
                match_id: format!("m{:05}", g.id),
                possession_id: format!("{possession}"),
                team_id: format!("t{:02}", g.teams[side]),
                player_id: player_id(g.teams[side], k),
                minute_offset: 90.0 * g.events as f64 / EVENTS_PER_MATCH as f64,
                action_kind: kind,
                start,
                end: end_pt,
                success,
                is_goal,
            });
            g.events += 1;
        }
        game = Some(g);
    }
    SynthDataset { events, minutes }
}

/// Event list only, see [`synth_dataset`].
pub fn synth_events(grid: PitchGrid, n_events: usize, seed: u64) -> Vec<EventRecord> {
    synth_dataset(grid, n_events, seed).events
}
