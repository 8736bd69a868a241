//! Runs a reduced simulation study on the built-in truth and prints the
//! fitted error law.
//!
//! `cargo run --release --example desk_study -- [replicates] [seed]`

use std::time::Instant;

use xtq::fit::fit_error_law;
use xtq::grid::PitchGrid;
use xtq::sim::{run_study, StudyPlan, Truth};
use xtq::synthetic::builtin_truth;

fn main() -> xtq::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let reps = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2024);
    let grids = ["8x6", "12x9", "16x12", "24x18"].map(|g| g.parse::<PitchGrid>().unwrap()).to_vec();
    let truths = grids.iter().map(|g| Truth::new(builtin_truth(*g))).collect::<xtq::Result<Vec<_>>>()?;
    for t in &truths {
        println!("{}: t_inf={:.4} max xT={:.4}", t.grid(), t.condensed.t_inf, t.xt.xt.iter().cloned().fold(0.0, f64::max));
    }
    let plan = StudyPlan { grids, n_values: vec![100_000, 370_000, 1_300_000], replicates: reps, master_seed: seed };
    let t0 = Instant::now();
    let recs = run_study(&plan, &truths, std::thread::available_parallelism().map_or(1, |n| n.get()))?;
    println!("{} replicates in {:.1?}", recs.len(), t0.elapsed());
    for chunk in recs.chunks(reps as usize) {
        let mut e: Vec<f64> = chunk.iter().map(|r| r.model_error).collect();
        e.sort_by(f64::total_cmp);
        println!(
            "M={:4} N~{:8} pass={} median err={:.4} p10={:.4} p90={:.4} err_g med={:.4} errTw med={:.4}",
            chunk[0].m,
            chunk[0].n,
            chunk[0].passes_filter,
            e[e.len() / 2],
            e[e.len() / 10],
            e[e.len() * 9 / 10],
            chunk.iter().map(|r| r.err_g).sum::<f64>() / chunk.len() as f64,
            chunk.iter().map(|r| r.err_t_weighted).sum::<f64>() / chunk.len() as f64,
        );
    }
    let (law, d) = fit_error_law(&recs)?;
    println!(
        "c={:.4} alpha={:.4} beta={:.4} sigma2={:.4} R2={:.4} n={} r_g={:.4} r_T={:.4}",
        law.c, law.alpha_m, law.beta_n, law.sigma2, d.r2, d.n_obs, d.pearson_err_g, d.pearson_err_t_weighted
    );
    Ok(())
}
