//! Expected Threat (xT) possession-value models for football event data.
//!
//! The crate covers the whole pipeline: mapping event coordinates onto a
//! pitch grid ([`grid`]), parsing events and assembling possession chains
//! ([`events`]), estimating a Markov chain ([`estimate`]), solving for xT
//! ([`solver`]), bounding the estimation error ([`bounds`]), measuring it
//! by bootstrap simulation ([`sim`]), fitting a lognormal error law
//! ([`fit`]), planning grid and dataset sizes ([`planner`]) and rating
//! players ([`ratings`]).

// Range checks are written as `!(x > 0.0)` on purpose so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod estimate;
pub mod events;
pub mod fit;
pub mod grid;
pub mod planner;
pub mod ratings;
pub mod sim;
pub mod sparse;
pub mod svg;
pub mod synthetic;
pub mod solver;

pub use error::{Error, Result};
pub use estimate::{condense, count, estimate, CondensedModel, GenerativeModel, StateCounts};
pub use events::{EventRecord, PossessionChain};
pub use fit::{fit_error_law, law_quantile, ErrorLaw, FitDiagnostics};
pub use grid::{PitchGrid, PitchPoint, StateId};
pub use planner::{normal_cdf, normal_quantile, quality_check, required_n, select_grid, PlanVerdict};
pub use sim::{run_replicate, run_study, ReplicateRecord, StudyPlan, Truth};
pub use solver::{direct_solve, value_iterate, XtModel};
