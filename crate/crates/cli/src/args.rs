use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xtq::grid::PitchGrid;

#[derive(Debug, Parser)]
#[command(name = "xtq", version, about = "Expected Threat models, their estimation error, and data planning")]
pub struct Cli {
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize an event file into neutral JSONL.
    Ingest(IngestArgs),
    /// Estimate a Markov model from events.
    Train(TrainArgs),
    /// Solve a model for xT by value iteration.
    Solve(SolveArgs),
    /// Evaluate the concentration bounds.
    Bounds(BoundsArgs),
    /// Write the built-in synthetic truth model for a grid.
    Truth(TruthArgs),
    /// Generate a synthetic league season from a truth model.
    Synth(SynthArgs),
    /// Run the bootstrap study of model error against grid and data size.
    Simulate(SimulateArgs),
    /// Measure how model error moves players between rating quartiles.
    QuartileStudy(QuartileStudyArgs),
    /// Turn events and minutes into per-player action sets.
    ExtractPlayers(ExtractPlayersArgs),
    /// Fit the lognormal error law to simulation records.
    Fit(FitArgs),
    /// Query an error law for grid and dataset decisions.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Rate players by xT added per 90 minutes.
    Rate(RateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Neutral,
    Statsbomb,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Input files; StatsBomb files use their file stem as the match id.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "neutral")]
    pub format: InputFormat,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Neutral JSONL events.
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub grid: PitchGrid,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Where to write the model with its xT values; defaults to updating
    /// the input file in place.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop when successive iterates differ by at most this much.
    #[arg(long, default_value_t = xtq::solver::DEFAULT_EPS_STOP)]
    pub eps_stop: f64,
    /// Keep iterating until the truncation bound is below this value
    /// (0 turns it off).
    #[arg(long, default_value_t = 1e-9)]
    pub certify: f64,
    #[arg(long, default_value_t = xtq::solver::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    /// Heatmap of the solved values; a CSV with the same stem is written next to it.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub n: f64,
    #[arg(long, default_value_t = xtq::bounds::DEFAULT_ALPHA)]
    pub alpha: f64,
    /// Share of shots among events.
    #[arg(long, default_value_t = xtq::bounds::DEFAULT_SHOT_SHARE)]
    pub pg: f64,
    /// Row-sum norm of the true transition matrix.
    #[arg(long)]
    pub tinf: f64,
    /// Value-iteration steps, for the truncation term.
    #[arg(long, requires_all = ["ghat", "that"])]
    pub k: Option<usize>,
    #[arg(long, requires = "k")]
    pub ghat: Option<f64>,
    #[arg(long, requires = "k")]
    pub that: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TruthArgs {
    #[arg(long)]
    pub grid: PitchGrid,
    /// Target share of shots among events.
    #[arg(long, default_value_t = 0.02)]
    pub shot_share: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Master seed for every random draw.
    #[arg(long, env = "XTQ_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Grid of the built-in truth; ignored when --truth is given.
    #[arg(long, required_unless_present = "truth")]
    pub grid: Option<PitchGrid>,
    /// Truth model JSON to sample from instead of the built-in truth.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Number of events to generate.
    #[arg(long)]
    pub events: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Neutral JSONL output.
    #[arg(long)]
    pub out: PathBuf,
    /// Minutes ledger CSV for the generated players.
    #[arg(long)]
    pub minutes: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// 4 grids × 3 dataset sizes × 100 replicates.
    Desk,
    /// 13 grids × 8 dataset sizes × 1000 replicates.
    Full,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study plan JSON with grids, n_values, replicates and optionally master_seed.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    pub plan: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Directory holding one truth model per grid, named like `16x12.json`.
    /// Without it the built-in truth is used.
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct QuartileStudyArgs {
    /// Truth model JSON.
    #[arg(long, required_unless_present = "grid")]
    pub truth: Option<PathBuf>,
    /// Use the built-in truth on this grid.
    #[arg(long, conflicts_with = "truth")]
    pub grid: Option<PitchGrid>,
    /// Player action sets from `extract-players`.
    #[arg(long)]
    pub players: PathBuf,
    /// Dataset sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100000,370000,620000,1300000")]
    pub n: Vec<u64>,
    #[arg(long, default_value_t = 100)]
    pub replicates: u32,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: PathBuf,
    /// Also derive the acceptable error level and write it as JSON here.
    #[arg(long)]
    pub me_max_out: Option<PathBuf>,
    #[arg(long, default_value_t = 75)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct CohortArgs {
    /// Keep only players with this position label.
    #[arg(long)]
    pub position: Option<String>,
    #[arg(long, default_value_t = 300.0)]
    pub min_minutes: f64,
    /// Keep only matches whose id starts with this prefix.
    #[arg(long)]
    pub competition: Option<String>,
}

#[derive(Debug, Args)]
pub struct ExtractPlayersArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub minutes: PathBuf,
    #[arg(long)]
    pub grid: PitchGrid,
    #[command(flatten)]
    pub cohort: CohortArgs,
    /// JSONL output, one player per line.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Results CSV from `simulate`.
    #[arg(long)]
    pub records: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for residual, QQ and group tables plus their plots.
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
    /// Acceptable error level stored in the law file.
    #[arg(long, default_value_t = xtq::fit::DEFAULT_ME_MAX)]
    pub me_max: f64,
}

#[derive(Debug, Args)]
pub struct LawArgs {
    /// Law JSON; defaults to the bundled published law.
    #[arg(long)]
    pub law: Option<PathBuf>,
    #[arg(long, default_value_t = xtq::planner::DEFAULT_TARGET_PROB)]
    pub target_prob: f64,
    /// Quantile curve plot; a CSV with the same stem is written next to it.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// Probability that a grid and dataset size give an acceptable model.
    Check {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: f64,
    },
    /// Finest grid that reaches the target at a dataset size.
    Grid {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        n: f64,
        /// JSON list of candidate grids such as `["16x12", {"m_x": 8, "m_y": 6}]`.
        #[arg(long)]
        grids: Option<PathBuf>,
    },
    /// Smallest dataset size that reaches the target on a grid.
    Datasize {
        #[command(flatten)]
        law: LawArgs,
        #[arg(long)]
        m: usize,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AggregationArg {
    Positive,
    Signed,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    /// Model JSON; solved on the fly if it carries no xT values.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub minutes: PathBuf,
    #[command(flatten)]
    pub cohort: CohortArgs,
    #[arg(long, value_enum, default_value = "positive")]
    pub aggregation: AggregationArg,
    /// Ratings CSV; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Strip plot of ratings by position; a CSV with the same stem is written next to it.
    #[arg(long)]
    pub plot: Option<PathBuf>,
}
