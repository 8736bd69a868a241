//! Bootstrap simulation: sample datasets from a ground-truth chain,
//! re-estimate, and measure how far the estimate lands from the truth.
//!
//! Every replicate draws from its own generator seeded by
//! [`replicate_seed`], so results do not depend on scheduling or on the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{condense, CondensedModel, GenerativeModel, GoalEstimator, SolveMeta};
use crate::events::{ActionKind, ChainTerminal, EventRecord, PossessionChain};
use crate::fit::passes_filter;
use crate::grid::{PitchGrid, StateId};
use crate::ratings::{quartiles, rate_actions, Aggregation, PlayerActions};
use crate::solver::{solve_estimated, XtModel, DEFAULT_EPS_STOP, DEFAULT_MAX_ITER};
use crate::sparse::{diff_inf_norm, SparseMatrix};

/// Chains longer than this are cut and marked truncated.
pub const MAX_CHAIN_EVENTS: usize = 500;

/// One sampled action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Shot { s: usize, goal: bool },
    /// `entry` is the position of the `(s, to)` entry in the truth's CSR
    /// storage.
    Move { s: usize, to: usize, entry: usize },
    Turnover { s: usize },
}

/// Precomputed cumulative outcome tables for fast sampling.
pub struct ChainSampler<'a> {
    gen: &'a GenerativeModel,
    /// Per state: `[p_shot, p_shot + T(s,c₀), …]`, aligned with the CSR row.
    cum: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    pi0_cum: Vec<f64>,
}

impl<'a> ChainSampler<'a> {
    pub fn new(gen: &'a GenerativeModel) -> Self {
        let m = gen.n_states();
        let mut cum = Vec::with_capacity(gen.transitions.nnz() + m);
        let mut row_ptr = Vec::with_capacity(m + 1);
        let mut cols = Vec::with_capacity(gen.transitions.nnz());
        row_ptr.push(0);
        for s in 0..m {
            let mut acc = gen.p_shot[s];
            cum.push(acc);
            for (j, t) in gen.transitions.row_entries(s) {
                acc += t;
                cum.push(acc);
                cols.push(j);
            }
            row_ptr.push(cols.len());
        }
        let mut acc = 0.0;
        let pi0_cum = gen
            .pi0
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        ChainSampler { gen, cum, row_ptr, cols, pi0_cum }
    }

    pub fn model(&self) -> &GenerativeModel {
        self.gen
    }

    fn start_state<R: Rng>(&self, rng: &mut R) -> usize {
        let total = *self.pi0_cum.last().unwrap_or(&1.0);
        let u = rng.gen::<f64>() * total;
        self.pi0_cum.partition_point(|&c| c <= u).min(self.pi0_cum.len() - 1)
    }

    /// Runs one chain, feeding every action to `visit`. Returns the
    /// terminal and the number of events.
    pub fn walk<R: Rng>(&self, rng: &mut R, mut visit: impl FnMut(Step)) -> (ChainTerminal, usize) {
        let mut s = self.start_state(rng);
        for n in 1..=MAX_CHAIN_EVENTS {
            let u: f64 = rng.gen();
            let base = self.row_ptr[s];
            let cum = &self.cum[base + s..self.row_ptr[s + 1] + s + 1];
            if u < cum[0] {
                let goal = rng.gen::<f64>() < self.gen.xg[s];
                visit(Step::Shot { s, goal });
                return (if goal { ChainTerminal::Goal } else { ChainTerminal::ShotMissed }, n);
            }
            match cum[1..].iter().position(|&c| u < c) {
                Some(k) => {
                    let to = self.cols[base + k];
                    visit(Step::Move { s, to, entry: base + k });
                    s = to;
                }
                None => {
                    visit(Step::Turnover { s });
                    return (ChainTerminal::Turnover, n);
                }
            }
        }
        (ChainTerminal::Truncated, MAX_CHAIN_EVENTS)
    }
}

/// One chain as event records placed at cell centers.
pub fn sample_chain<R: Rng>(gen: &GenerativeModel, rng: &mut R) -> PossessionChain {
    sample_chain_with(&ChainSampler::new(gen), rng, "sim", "0")
}

fn sample_chain_with<R: Rng>(sampler: &ChainSampler, rng: &mut R, match_id: &str, possession: &str) -> PossessionChain {
    let grid = sampler.gen.grid;
    let center = |s: usize| grid.cell_center(StateId(s));
    let mut events = Vec::new();
    let (terminal, _) = sampler.walk(rng, |step| {
        let (s, kind, to, success, is_goal) = match step {
            Step::Shot { s, goal } => (s, ActionKind::Shot, s, goal, goal),
            Step::Move { s, to, .. } => (s, ActionKind::Pass, to, true, false),
            Step::Turnover { s } => (s, ActionKind::Pass, s, false, false),
        };
        events.push(EventRecord {
            match_id: match_id.to_string(),
            possession_id: possession.to_string(),
            team_id: "sim".into(),
            player_id: "sim".into(),
            minute_offset: events.len() as f64,
            action_kind: kind,
            start: center(s),
            end: center(to),
            success,
            is_goal,
        });
    });
    PossessionChain { events, terminal }
}

/// Whole chains until at least `n_events` events have been drawn.
pub fn sample_dataset(gen: &GenerativeModel, n_events: usize, seed: u64) -> Vec<PossessionChain> {
    let sampler = ChainSampler::new(gen);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chains = Vec::new();
    let mut total = 0;
    while total < n_events {
        let c = sample_chain_with(&sampler, &mut rng, "sim", &chains.len().to_string());
        total += c.events.len();
        chains.push(c);
    }
    chains
}

/// Counts kept in the truth's sparsity pattern. A sampled move can only
/// follow a nonzero truth entry, so per-entry counters suffice.
#[derive(Debug, Clone)]
struct PatternCounts {
    visits: Vec<u64>,
    shots: Vec<u64>,
    goals: Vec<u64>,
    moves: Vec<u64>,
    events: u64,
}

impl PatternCounts {
    fn sample<R: Rng>(sampler: &ChainSampler, n_events: usize, rng: &mut R) -> Self {
        let m = sampler.gen.n_states();
        let mut c = PatternCounts {
            visits: vec![0; m],
            shots: vec![0; m],
            goals: vec![0; m],
            moves: vec![0; sampler.cols.len()],
            events: 0,
        };
        while (c.events as usize) < n_events {
            let (_, n) = sampler.walk(rng, |step| match step {
                Step::Shot { s, goal } => {
                    c.visits[s] += 1;
                    c.shots[s] += 1;
                    c.goals[s] += goal as u64;
                }
                Step::Move { s, entry, .. } => {
                    c.visits[s] += 1;
                    c.moves[entry] += 1;
                }
                Step::Turnover { s } => c.visits[s] += 1,
            });
            c.events += n as u64;
        }
        c
    }

    /// Empirical `ĝ` and `T̂`, matching [`crate::estimate::condense_counts`].
    fn condensed(&self, sampler: &ChainSampler, estimator: GoalEstimator) -> CondensedModel {
        let gen = sampler.gen;
        let m = gen.n_states();
        let mut g = vec![0.0; m];
        let mut rows = Vec::with_capacity(m);
        for s in 0..m {
            let v = self.visits[s];
            if v == 0 {
                rows.push(Vec::new());
                continue;
            }
            let vf = v as f64;
            g[s] = match estimator {
                GoalEstimator::Product if self.shots[s] > 0 => {
                    (self.shots[s] as f64 / vf) * (self.goals[s] as f64 / self.shots[s] as f64)
                }
                GoalEstimator::Product => 0.0,
                GoalEstimator::Direct => self.goals[s] as f64 / vf,
            };
            let (lo, hi) = (sampler.row_ptr[s], sampler.row_ptr[s + 1]);
            rows.push(
                (lo..hi)
                    .filter(|&e| self.moves[e] > 0)
                    .map(|e| (sampler.cols[e], self.moves[e] as f64 / vf))
                    .collect(),
            );
        }
        let t = SparseMatrix::from_rows(m, rows).expect("columns come from the truth");
        CondensedModel::new(gen.grid, g, t).expect("dimensions match the truth")
    }
}

/// A ground-truth chain together with its condensation and solved xT.
#[derive(Debug, Clone)]
pub struct Truth {
    pub gen: GenerativeModel,
    pub condensed: CondensedModel,
    pub xt: XtModel,
}

impl Truth {
    pub fn new(gen: GenerativeModel) -> Result<Self> {
        gen.validate()?;
        let condensed = condense(&gen);
        let xt = solve_estimated(&condensed, DEFAULT_EPS_STOP, DEFAULT_MAX_ITER)?.model;
        Ok(Truth { gen, condensed, xt })
    }

    pub fn grid(&self) -> PitchGrid {
        self.gen.grid
    }
}

/// One bootstrap replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    #[serde(rename = "M")]
    pub m: usize,
    /// Events actually sampled.
    #[serde(rename = "N")]
    pub n: u64,
    pub replicate_id: u32,
    pub model_error: f64,
    pub err_g: f64,
    #[serde(rename = "err_T")]
    pub err_t: f64,
    #[serde(rename = "err_T_weighted")]
    pub err_t_weighted: f64,
    pub passes_filter: bool,
}

/// Estimate and errors of one replicate, before reduction to a record.
#[derive(Debug, Clone)]
pub struct ReplicateOutcome {
    pub record: ReplicateRecord,
    pub estimate: CondensedModel,
    pub xt_hat: Vec<f64>,
    /// Solver metadata, including states whose estimated rows were
    /// stochastic and got eliminated.
    pub solve: SolveMeta,
}

fn replicate_outcome(truth: &Truth, sampler: &ChainSampler, n_events: usize, seed: u64, id: u32) -> Result<ReplicateOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = PatternCounts::sample(sampler, n_events, &mut rng);
    let estimate = counts.condensed(sampler, GoalEstimator::Product);
    let solved = solve_estimated(&estimate, DEFAULT_EPS_STOP, DEFAULT_MAX_ITER)?;
    let solve = solved.meta();
    let xt_hat = solved.model.xt;
    let m = truth.grid().n_states();
    let record = ReplicateRecord {
        m,
        n: counts.events,
        replicate_id: id,
        model_error: diff_inf_norm(&truth.xt.xt, &xt_hat),
        err_g: diff_inf_norm(&truth.condensed.g, &estimate.g),
        err_t: truth.condensed.transitions.diff_inf_norm(&estimate.transitions),
        err_t_weighted: truth.condensed.transitions.diff_weighted_inf_norm(&estimate.transitions, &xt_hat),
        passes_filter: passes_filter(m, counts.events as f64),
    };
    Ok(ReplicateOutcome { record, estimate, xt_hat, solve })
}

/// Samples `n_events` events, re-estimates and compares with the truth.
pub fn run_replicate(truth: &Truth, n_events: usize, seed: u64) -> Result<ReplicateRecord> {
    Ok(replicate_outcome(truth, &ChainSampler::new(&truth.gen), n_events, seed, 0)?.record)
}

/// Like [`run_replicate`] but keeps the estimate and its xT.
pub fn run_replicate_detailed(truth: &Truth, n_events: usize, seed: u64) -> Result<ReplicateOutcome> {
    replicate_outcome(truth, &ChainSampler::new(&truth.gen), n_events, seed, 0)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep` in cell `(grid_idx, n_idx)`.
pub fn replicate_seed(master: u64, grid_idx: u64, n_idx: u64, rep: u64) -> u64 {
    [grid_idx, n_idx, rep].into_iter().fold(splitmix64(master), |h, v| splitmix64(h ^ splitmix64(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub grids: Vec<PitchGrid>,
    pub n_values: Vec<u64>,
    pub replicates: u32,
    pub master_seed: u64,
}

impl StudyPlan {
    /// 13 grids × 8 dataset sizes × 1000 replicates.
    pub fn full_scale(master_seed: u64) -> Self {
        StudyPlan {
            grids: PitchGrid::study_grids(),
            n_values: vec![100_000, 370_000, 620_000, 1_300_000, 2_500_000, 3_700_000, 5_000_000, 7_400_000],
            replicates: 1000,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::domain("replicates must be >= 1"));
        }
        if self.grids.is_empty() || self.n_values.is_empty() {
            return Err(Error::domain("plan needs at least one grid and one dataset size"));
        }
        Ok(())
    }

    pub fn n_jobs(&self) -> usize {
        self.grids.len() * self.n_values.len() * self.replicates as usize
    }
}

/// Maps `f` over `0..n` on `jobs` workers, keeping index order.
pub(crate) fn par_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        if jobs > 1 {
            use rayon::prelude::*;
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
                return pool.install(|| (0..n).into_par_iter().map(&f).collect());
            }
        }
    }
    let _ = jobs;
    (0..n).map(f).collect()
}

/// Runs every `(grid, N, replicate)` cell of `plan`. `truths[i]` must
/// belong to `plan.grids[i]`. Output is sorted by grid, N, replicate.
pub fn run_study(plan: &StudyPlan, truths: &[Truth], jobs: usize) -> Result<Vec<ReplicateRecord>> {
    plan.validate()?;
    if truths.len() != plan.grids.len() {
        return Err(Error::Dimension(format!("{} truths for {} grids", truths.len(), plan.grids.len())));
    }
    for (g, t) in plan.grids.iter().zip(truths) {
        if t.grid() != *g {
            return Err(Error::Dimension(format!("truth on {} given for grid {g}", t.grid())));
        }
    }
    let samplers: Vec<ChainSampler> = truths.iter().map(|t| ChainSampler::new(&t.gen)).collect();
    let reps = plan.replicates as usize;
    let per_grid = plan.n_values.len() * reps;
    let out = par_map(plan.n_jobs(), jobs, |job| {
        let (gi, rest) = (job / per_grid, job % per_grid);
        let (ni, rep) = (rest / reps, rest % reps);
        let seed = replicate_seed(plan.master_seed, gi as u64, ni as u64, rep as u64);
        replicate_outcome(&truths[gi], &samplers[gi], plan.n_values[ni] as usize, seed, rep as u32).map(|o| o.record)
    });
    out.into_iter().collect()
}

pub const RESULTS_SCHEMA: &str = "# schema: xtq.results/1";
pub const QUARTILE_SCHEMA: &str = "# schema: xtq.quartiles/1";

fn write_records<W: std::io::Write, T: Serialize>(mut w: W, header: &str, rows: &[T]) -> Result<()> {
    writeln!(w, "{header}")?;
    let mut cw = csv::Writer::from_writer(w);
    for r in rows {
        cw.serialize(r).map_err(csv_err)?;
    }
    cw.flush()?;
    Ok(())
}

fn read_records<R: std::io::Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    rdr.deserialize().enumerate().map(|(i, row)| row.map_err(|e| Error::Parse { line: i + 2, msg: e.to_string() })).collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_results_csv<W: std::io::Write>(w: W, records: &[ReplicateRecord]) -> Result<()> {
    write_records(w, RESULTS_SCHEMA, records)
}

pub fn read_results_csv<R: std::io::Read>(r: R) -> Result<Vec<ReplicateRecord>> {
    read_records(r)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileReplicate {
    #[serde(rename = "N")]
    pub n: u64,
    pub replicate_id: u32,
    pub model_error: f64,
    pub n_players: usize,
    pub n_wrong_quartile: usize,
    pub max_quartile_change: u8,
}

pub fn write_quartile_csv<W: std::io::Write>(w: W, records: &[QuartileReplicate]) -> Result<()> {
    write_records(w, QUARTILE_SCHEMA, records)
}

pub fn read_quartile_csv<R: std::io::Read>(r: R) -> Result<Vec<QuartileReplicate>> {
    read_records(r)
}

/// Smallest cohort for which quartiles carry information.
pub const MIN_COHORT: usize = 8;

/// Compares player quartiles under the truth and under resampled models.
/// Player action sets stay fixed; only the model changes.
pub fn run_quartile_study(
    truth: &Truth,
    players: &[PlayerActions],
    n_values: &[u64],
    replicates: u32,
    seed: u64,
    jobs: usize,
) -> Result<Vec<QuartileReplicate>> {
    if players.len() < MIN_COHORT {
        return Err(Error::InsufficientData(format!(
            "cohort of {} players; quartiles need at least {MIN_COHORT}",
            players.len()
        )));
    }
    let m = truth.grid().n_states();
    for p in players {
        if let Some(&s) = p.moves.iter().flat_map(|(a, b)| [a, b]).chain(&p.turnovers).find(|&&s| s >= m) {
            return Err(Error::Dimension(format!("player {} has state {s} outside M={m}", p.player_id)));
        }
    }
    let ids: Vec<&str> = players.iter().map(|p| p.player_id.as_str()).collect();
    let truth_q = quartiles(&rate_actions(&truth.xt.xt, players, Aggregation::PositivePart), &ids);
    let sampler = ChainSampler::new(&truth.gen);
    let reps = replicates.max(1) as usize;
    let out = par_map(n_values.len() * reps, jobs, |job| {
        let (ni, rep) = (job / reps, job % reps);
        let s = replicate_seed(seed, 0, ni as u64, rep as u64);
        let o = replicate_outcome(truth, &sampler, n_values[ni] as usize, s, rep as u32)?;
        let q = quartiles(&rate_actions(&o.xt_hat, players, Aggregation::PositivePart), &ids);
        let changes: Vec<u8> = q.iter().zip(&truth_q).map(|(a, b)| a.abs_diff(*b)).collect();
        Ok(QuartileReplicate {
            n: o.record.n,
            replicate_id: rep as u32,
            model_error: o.record.model_error,
            n_players: players.len(),
            n_wrong_quartile: changes.iter().filter(|&&c| c > 0).count(),
            max_quartile_change: changes.into_iter().max().unwrap_or(0),
        })
    });
    out.into_iter().collect()
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Settings of [`find_me_max`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeMaxRule {
    pub n_bins: usize,
    /// Largest tolerated fraction of players in a wrong quartile.
    pub wrong_frac: f64,
    /// Probability with which both conditions must hold.
    pub prob: f64,
}

impl Default for MeMaxRule {
    fn default() -> Self {
        MeMaxRule { n_bins: 75, wrong_frac: 0.10, prob: 0.90 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub lo: f64,
    pub hi: f64,
    pub median_error: f64,
    pub wrong_frac_quantile: f64,
    pub max_change_quantile: f64,
    pub acceptable: bool,
}

/// Equal-count bins over sorted model errors with the quartile-change
/// statistics of each bin.
pub fn bin_summaries(records: &[QuartileReplicate], rule: &MeMaxRule) -> Result<Vec<BinSummary>> {
    if rule.n_bins == 0 || records.len() < rule.n_bins {
        return Err(Error::InsufficientData(format!("{} records for {} bins", records.len(), rule.n_bins)));
    }
    let mut sorted: Vec<&QuartileReplicate> = records.iter().collect();
    sorted.sort_by(|a, b| a.model_error.total_cmp(&b.model_error));
    let n = sorted.len();
    let pct = rule.prob * 100.0;
    Ok((0..rule.n_bins)
        .map(|b| {
            let bin = &sorted[b * n / rule.n_bins..(b + 1) * n / rule.n_bins];
            let mut errs: Vec<f64> = bin.iter().map(|r| r.model_error).collect();
            let mut wrong: Vec<f64> =
                bin.iter().map(|r| r.n_wrong_quartile as f64 / r.n_players.max(1) as f64).collect();
            let mut change: Vec<f64> = bin.iter().map(|r| r.max_quartile_change as f64).collect();
            errs.sort_by(f64::total_cmp);
            wrong.sort_by(f64::total_cmp);
            change.sort_by(f64::total_cmp);
            let wq = percentile(&wrong, pct);
            let cq = percentile(&change, pct);
            BinSummary {
                lo: errs[0],
                hi: *errs.last().unwrap(),
                median_error: percentile(&errs, 50.0),
                wrong_frac_quantile: wq,
                max_change_quantile: cq,
                acceptable: wq < rule.wrong_frac && cq <= 1.0,
            }
        })
        .collect())
}

/// Largest acceptable model error: the median error of the last bin,
/// scanning upward from the smallest errors, before the first bin that
/// breaks the quartile conditions.
pub fn find_me_max(records: &[QuartileReplicate], rule: &MeMaxRule) -> Result<f64> {
    let bins = bin_summaries(records, rule)?;
    let passing = bins.iter().take_while(|b| b.acceptable).count();
    if passing == 0 {
        return Err(Error::NoAcceptableLevel(format!(
            "the lowest-error bin (errors {:.4}..{:.4}) already fails",
            bins[0].lo, bins[0].hi
        )));
    }
    Ok(bins[passing - 1].median_error)
}
