use std::io::{BufRead, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use xtq::bounds::{approx_bound, bound_g, bound_t, crossover_m, theorem_bound, BoundInputs};
use xtq::estimate::{condense, count, estimate, GenerativeModel, ModelFile, ModelMeta};
use xtq::events::{assemble_chains, parse_events, sort_events, write_neutral, EventFormat};
use xtq::fit::{fit_error_law, residuals_by_group, LawFile, LawSource};
use xtq::grid::PitchGrid;
use xtq::planner::{grid_quantiles, quality_check, quantile_curve, required_n, select_grid, Sweep};
use xtq::ratings::{rate_players, write_ratings_csv, Aggregation, CohortFilter, PlayerActions};
use xtq::sim::{
    bin_summaries, find_me_max, read_results_csv, run_quartile_study, run_study, write_quartile_csv,
    write_results_csv, MeMaxRule, StudyPlan, Truth,
};
use xtq::solver::{solve_estimated_certified, XtModel};
use xtq::synthetic::{builtin_truth, builtin_truth_with, synth_dataset, synth_dataset_from, SynthConfig};
use xtq::{svg, ErrorLaw};

use crate::args::*;
use crate::invalid;
use crate::io::{create, open, print_json, read_events, read_ledger, read_model, read_text, write_json, write_plot, write_text};

const PLAYERS_SCHEMA: &str = "xtq.players/1";

fn require_seed(seed: &SeedArg) -> Result<u64> {
    match seed.seed {
        Some(s) => Ok(s),
        None => invalid!("no seed: pass --seed or set XTQ_SEED"),
    }
}

fn check_jobs(jobs: usize) -> Result<()> {
    if jobs == 0 {
        invalid!("--jobs must be at least 1");
    }
    Ok(())
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let format = match a.format {
        InputFormat::Neutral => EventFormat::NeutralJsonl,
        InputFormat::Statsbomb => EventFormat::StatsbombJson,
    };
    let mut events = Vec::new();
    let mut skipped = 0;
    for path in &a.inputs {
        let source = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let parsed = parse_events(open(path)?, format, &source).with_context(|| format!("reading {}", path.display()))?;
        skipped += parsed.skipped;
        events.extend(parsed.events);
    }
    sort_events(&mut events);
    let mut w = create(&a.out)?;
    write_neutral(&mut w, &events)?;
    w.flush()?;
    log::info!("wrote {} events to {} ({skipped} skipped)", events.len(), a.out.display());
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let events = read_events(&a.events)?;
    let chains = assemble_chains(&events);
    let counts = count(&chains.chains, a.grid)?;
    let gen = estimate(&counts);
    let source = a.events.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let file = ModelFile::from_model(&gen, ModelMeta { n_events: counts.n_events(), source });
    write_json(&a.out, &file)?;
    let unvisited = counts.visits.iter().filter(|&&v| v == 0).count();
    log::info!(
        "{} chains, {} events, {} of {} states never visited",
        chains.chains.len(),
        counts.n_events(),
        unvisited,
        a.grid.n_states()
    );
    Ok(())
}

pub fn solve(a: SolveArgs) -> Result<()> {
    if !(a.eps_stop > 0.0) || !(a.certify >= 0.0) {
        invalid!("--eps-stop must be positive and --certify non-negative");
    }
    let mut file = read_model(&a.model)?;
    let gen = file.to_model()?;
    let solved = solve_estimated_certified(&condense(&gen), a.eps_stop, a.certify, a.max_iter)?;
    let meta = solved.meta();
    if !meta.converged {
        log::warn!("stopped after {} iterations with delta {:e}", meta.iterations, meta.final_delta);
    }
    if !solved.dropped.is_empty() {
        log::warn!("{} states with no estimated exit were solved exactly and restored", solved.dropped.len());
    }
    if let Some(plot) = &a.plot {
        let mut csv = String::from("# schema: xtq.xt/1\nstate,column,row,xt\n");
        for s in gen.grid.states() {
            let (c, r) = gen.grid.cell(s);
            csv.push_str(&format!("{},{c},{r},{}\n", s.0, solved.model.xt[s.0]));
        }
        write_plot(plot, &svg::heatmap("Expected Threat", gen.grid, &solved.model.xt), &csv)?;
    }
    file.xt = Some(solved.model.xt);
    file.solve = Some(meta.clone());
    write_json(a.out.as_deref().unwrap_or(&a.model), &file)?;
    print_json(&json!({
        "schema": "xtq.solve/1",
        "iterations": meta.iterations,
        "final_delta": meta.final_delta,
        "certified_bound": meta.certified_bound,
        "converged": meta.converged,
        "t_inf": meta.t_inf,
        "dropped_states": meta.dropped_states,
    }))
}

pub fn bounds(a: BoundsArgs) -> Result<()> {
    let bg = bound_g(a.m, a.n, a.pg, a.alpha)?;
    // the remaining terms need 0 < p_g < 1 and ||T|| < 1; report null when out of range
    let opt = |r: xtq::Result<serde_json::Value>| match r {
        Ok(v) => v,
        Err(e) => {
            log::warn!("{e}");
            serde_json::Value::Null
        }
    };
    let bt = bound_t(a.m, a.n, a.pg, a.alpha);
    let (g_inf_hat, t_inf_hat, k) = match (a.ghat, a.that, a.k) {
        (Some(g), Some(t), Some(k)) => (g, t, k),
        // without solve details the numerical term is left out
        _ => (0.0, 0.0, 1),
    };
    let theorem = theorem_bound(&BoundInputs {
        m: a.m,
        n: a.n,
        alpha: a.alpha,
        p_g: a.pg,
        t_inf_true: a.tinf,
        g_inf_hat,
        t_inf_hat,
        k,
    });
    print_json(&json!({
        "schema": "xtq.bounds/1",
        "m": a.m,
        "n": a.n,
        "alpha": a.alpha,
        "p_g": a.pg,
        "t_inf": a.tinf,
        "bound_g": bg,
        "bound_t": opt(bt.map(|b| json!(b))),
        "approx": opt(approx_bound(a.m, a.n, a.pg, a.alpha, a.tinf).map(|v| json!(v))),
        "crossover_m": opt(crossover_m(a.pg, a.alpha).map(|v| json!(v))),
        "theorem": opt(theorem.map(|t| json!(t))),
        "numerical_included": a.k.is_some(),
    }))
}

fn truth_file(gen: &GenerativeModel) -> ModelFile {
    ModelFile::from_model(gen, ModelMeta { n_events: 0, source: "builtin-synthetic".into() })
}

pub fn truth(a: TruthArgs) -> Result<()> {
    let cfg = SynthConfig { shot_share: a.shot_share, ..SynthConfig::default() };
    let gen = builtin_truth_with(a.grid, &cfg)?;
    write_json(&a.out, &truth_file(&gen))
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let seed = require_seed(&a.seed)?;
    if a.events == 0 {
        invalid!("--events must be at least 1");
    }
    let data = match &a.truth {
        Some(path) => synth_dataset_from(&read_model(path)?.to_model()?, a.events, seed),
        None => synth_dataset(a.grid.expect("clap requires --grid without --truth"), a.events, seed),
    };
    let mut w = create(&a.out)?;
    write_neutral(&mut w, &data.events)?;
    w.flush()?;
    if let Some(path) = &a.minutes {
        let mut w = create(path)?;
        data.minutes.write_csv(&mut w)?;
        w.flush()?;
    }
    log::info!("wrote {} events for {} players", data.events.len(), data.minutes.minutes.len());
    Ok(())
}

/// Grid given either as `"16x12"` or `{"m_x": 16, "m_y": 12}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum GridSpec {
    Text(String),
    Object(PitchGrid),
}

impl GridSpec {
    fn grid(self) -> Result<PitchGrid> {
        match self {
            GridSpec::Text(s) => Ok(s.parse()?),
            GridSpec::Object(g) => Ok(g),
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanFile {
    #[serde(default)]
    schema: Option<String>,
    grids: Vec<GridSpec>,
    n_values: Vec<u64>,
    replicates: u32,
    #[serde(default)]
    master_seed: Option<u64>,
}

fn load_plan(a: &SimulateArgs) -> Result<StudyPlan> {
    let seed = a.seed.seed;
    let mut plan = match (&a.plan, a.preset) {
        (Some(path), _) => {
            let f: PlanFile = serde_json::from_str(&read_text(path)?)
                .with_context(|| format!("parsing plan {}", path.display()))?;
            if let Some(s) = f.schema.as_deref().filter(|s| *s != "xtq.plan/1") {
                invalid!("unsupported plan schema {s:?}");
            }
            let grids = f.grids.into_iter().map(GridSpec::grid).collect::<Result<Vec<_>>>()?;
            let master_seed = match seed.or(f.master_seed) {
                Some(s) => s,
                None => invalid!("no seed: pass --seed, set XTQ_SEED or put master_seed in the plan"),
            };
            StudyPlan { grids, n_values: f.n_values, replicates: f.replicates, master_seed }
        }
        (None, Some(Preset::Full)) => StudyPlan::full_scale(require_seed(&a.seed)?),
        (None, _) => StudyPlan {
            grids: ["8x6", "12x9", "16x12", "24x18"].iter().map(|g| g.parse()).collect::<Result<_, _>>()?,
            n_values: vec![100_000, 370_000, 1_300_000],
            replicates: 100,
            master_seed: require_seed(&a.seed)?,
        },
    };
    plan.validate()?;
    if let Some(s) = seed {
        plan.master_seed = s;
    }
    Ok(plan)
}

fn load_truths(grids: &[PitchGrid], dir: Option<&Path>) -> Result<Vec<Truth>> {
    grids
        .iter()
        .map(|&g| {
            let gen = match dir {
                Some(dir) => {
                    let path = dir.join(format!("{g}.json"));
                    let gen = read_model(&path)?.to_model()?;
                    if gen.grid != g {
                        invalid!("{} holds a {} model, expected {g}", path.display(), gen.grid);
                    }
                    gen
                }
                None => builtin_truth(g),
            };
            Ok(Truth::new(gen)?)
        })
        .collect()
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    check_jobs(a.jobs)?;
    let plan = load_plan(&a)?;
    let truths = load_truths(&plan.grids, a.truth_dir.as_deref())?;
    log::info!("running {} replicates on {} workers", plan.n_jobs(), a.jobs);
    let records = run_study(&plan, &truths, a.jobs)?;
    let mut w = create(&a.out)?;
    write_results_csv(&mut w, &records)?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct PlayerLine {
    schema: String,
    #[serde(flatten)]
    actions: PlayerActions,
}

fn read_players(path: &Path) -> Result<Vec<PlayerActions>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PlayerLine = serde_json::from_str(&line).map_err(|e| xtq::Error::Parse { line: i + 1, msg: e.to_string() })?;
        if p.schema != PLAYERS_SCHEMA {
            invalid!("{}:{}: unsupported schema {:?}", path.display(), i + 1, p.schema);
        }
        out.push(p.actions);
    }
    Ok(out)
}

pub fn quartile_study(a: QuartileStudyArgs) -> Result<()> {
    check_jobs(a.jobs)?;
    let seed = require_seed(&a.seed)?;
    if a.n.is_empty() || a.n.contains(&0) {
        invalid!("--n needs positive dataset sizes");
    }
    let gen = match (&a.truth, a.grid) {
        (Some(path), _) => read_model(path)?.to_model()?,
        (None, Some(g)) => builtin_truth(g),
        (None, None) => invalid!("pass --truth or --grid"),
    };
    let players = read_players(&a.players)?;
    if let Some(p) = players.iter().find(|p| p.grid != gen.grid) {
        invalid!("player {} was extracted on grid {}, the truth uses {}", p.player_id, p.grid, gen.grid);
    }
    let truth = Truth::new(gen)?;
    let records = run_quartile_study(&truth, &players, &a.n, a.replicates, seed, a.jobs)?;
    let mut w = create(&a.out)?;
    write_quartile_csv(&mut w, &records)?;
    w.flush()?;
    if let Some(path) = &a.me_max_out {
        let rule = MeMaxRule { n_bins: a.bins, ..MeMaxRule::default() };
        let bins = bin_summaries(&records, &rule)?;
        let me_max = find_me_max(&records, &rule);
        write_json(
            path,
            &json!({
                "schema": "xtq.me-max/1",
                "me_max": me_max.as_ref().ok(),
                "n_records": records.len(),
                "wrong_frac": rule.wrong_frac,
                "prob": rule.prob,
                "bins": bins,
            }),
        )?;
        // the bin table is still useful when no level qualifies
        let me_max = me_max?;
        log::info!("acceptable error level {me_max}");
    }
    Ok(())
}

fn cohort(c: &CohortArgs) -> CohortFilter {
    CohortFilter { position: c.position.clone(), min_minutes: c.min_minutes, competition: c.competition.clone() }
}

pub fn extract_players(a: ExtractPlayersArgs) -> Result<()> {
    let events = read_events(&a.events)?;
    let ledger = read_ledger(&a.minutes)?;
    let players = xtq::ratings::player_actions(&events, a.grid, &ledger, &cohort(&a.cohort))?;
    let mut w = create(&a.out)?;
    for p in players {
        serde_json::to_writer(&mut w, &PlayerLine { schema: PLAYERS_SCHEMA.into(), actions: p })?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn fit(a: FitArgs) -> Result<()> {
    if !(a.me_max > 0.0) {
        invalid!("--me-max must be positive");
    }
    let records = read_results_csv(open(&a.records)?).with_context(|| format!("reading {}", a.records.display()))?;
    let (mut law, diag) = fit_error_law(&records)?;
    law.me_max = a.me_max;
    write_json(&a.out, &LawFile::new(law, LawSource::Fitted))?;
    if let Some(dir) = &a.diagnostics {
        write_text(&dir.join("residuals.csv"), &diag.residuals_csv())?;
        write_text(&dir.join("qq.csv"), &diag.qq_csv())?;
        let groups = residuals_by_group(&diag, &records);
        write_text(&dir.join("groups.csv"), &groups.to_csv())?;
        write_text(
            &dir.join("qq.svg"),
            &svg::scatter("Normal QQ plot of residuals", "theoretical quantile", "standardized residual", &diag.qq_pairs, Some((0.0, 1.0))),
        )?;
        let resid: Vec<(f64, f64)> = diag.fitted.iter().copied().zip(diag.residuals.iter().copied()).collect();
        write_text(
            &dir.join("residuals.svg"),
            &svg::scatter("Residuals against fitted log error", "fitted log error", "residual", &resid, Some((0.0, 0.0))),
        )?;
        if groups.variance_ratio_m.is_some_and(|r| r > 2.0) || groups.variance_ratio_n.is_some_and(|r| r > 2.0) {
            log::warn!("residual variance differs by more than 2x across groups; see groups.csv");
        }
    }
    print_json(&json!({
        "schema": "xtq.fit/1",
        "c": law.c,
        "alpha_m": law.alpha_m,
        "beta_n": law.beta_n,
        "sigma2": law.sigma2,
        "stderr": { "c": diag.coef_stderr[0], "alpha_m": diag.coef_stderr[1], "beta_n": diag.coef_stderr[2] },
        "r2": diag.r2,
        "n_obs": diag.n_obs,
        "dropped_zero": diag.dropped_zero,
        "excluded_by_filter": diag.excluded_by_filter,
        "pearson_err_g": diag.pearson_err_g,
        "pearson_err_t_weighted": diag.pearson_err_t_weighted,
    }))
}

fn load_law(a: &LawArgs) -> Result<ErrorLaw> {
    if !(a.target_prob > 0.0 && a.target_prob < 1.0) {
        invalid!("--target-prob must lie in (0, 1)");
    }
    match &a.law {
        Some(path) => Ok(LawFile::parse(&read_text(path)?).with_context(|| format!("parsing law {}", path.display()))?.law),
        None => Ok(ErrorLaw::published()),
    }
}

/// `count` points spread evenly on a log scale over `[lo, hi]`.
fn log_points(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

fn plot_curve(a: &LawArgs, law: &ErrorLaw, sweep: Sweep, points: &[f64]) -> Result<()> {
    if let Some(path) = &a.plot {
        let levels = [0.5, a.target_prob];
        let curve = quantile_curve(law, sweep, points, &levels)?;
        write_plot(path, &curve.to_svg(), &curve.to_csv())?;
    }
    Ok(())
}

fn load_candidates(path: Option<&Path>) -> Result<Vec<PitchGrid>> {
    match path {
        Some(p) => {
            let specs: Vec<GridSpec> =
                serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing grids {}", p.display()))?;
            specs.into_iter().map(GridSpec::grid).collect()
        }
        None => Ok(PitchGrid::study_grids()),
    }
}

pub fn plan(cmd: PlanCommand) -> Result<()> {
    match cmd {
        PlanCommand::Check { law: la, m, n } => {
            let law = load_law(&la)?;
            let v = quality_check(&law, m, n)?;
            plot_curve(&la, &law, Sweep::Events { m }, &log_points(n / 10.0, n * 100.0, 60))?;
            print_json(&json!({
                "schema": "xtq.plan-check/1",
                "m": v.m,
                "n": v.n,
                "probability_acceptable": v.probability_acceptable,
                "q90_error": v.q90_error,
                "me_max": v.me_max,
                "target_prob": la.target_prob,
                "meets_target": v.probability_acceptable >= la.target_prob,
            }))
        }
        PlanCommand::Grid { law: la, n, grids } => {
            let law = load_law(&la)?;
            let candidates = load_candidates(grids.as_deref())?;
            let qs = grid_quantiles(&law, n, &candidates, la.target_prob)?;
            let ms: Vec<f64> = candidates.iter().map(|g| g.n_states() as f64).collect();
            plot_curve(&la, &law, Sweep::States { n }, &ms)?;
            let chosen = select_grid(&law, n, &candidates, la.target_prob)?;
            let table: Vec<_> = qs
                .iter()
                .map(|(g, q)| json!({ "grid": g.to_string(), "m": g.n_states(), "quantile_error": q, "acceptable": *q <= law.me_max }))
                .collect();
            print_json(&json!({
                "schema": "xtq.plan-grid/1",
                "n": n,
                "target_prob": la.target_prob,
                "me_max": law.me_max,
                "grid": chosen.to_string(),
                "m": chosen.n_states(),
                "candidates": table,
            }))
        }
        PlanCommand::Datasize { law: la, m } => {
            let law = load_law(&la)?;
            let n = required_n(&law, m, la.target_prob)?;
            let nf = n as f64;
            plot_curve(&la, &law, Sweep::Events { m }, &log_points(nf / 100.0, nf * 10.0, 60))?;
            print_json(&json!({
                "schema": "xtq.plan-datasize/1",
                "m": m,
                "target_prob": la.target_prob,
                "me_max": law.me_max,
                "required_n": n,
                "seasons": nf / xtq::planner::EVENTS_PER_SEASON,
            }))
        }
    }
}

pub fn rate(a: RateArgs) -> Result<()> {
    let file = read_model(&a.model)?;
    let xt = match &file.xt {
        Some(xt) => {
            if xt.len() != file.grid.n_states() {
                invalid!("model has {} xT values for {} states", xt.len(), file.grid.n_states());
            }
            XtModel::from_values(file.grid, xt.clone())
        }
        None => {
            log::info!("model has no xT values; solving");
            let gen = file.to_model()?;
            solve_estimated_certified(&condense(&gen), xtq::solver::DEFAULT_EPS_STOP, 1e-9, xtq::solver::DEFAULT_MAX_ITER)?.model
        }
    };
    let events = read_events(&a.events)?;
    let ledger = read_ledger(&a.minutes)?;
    let agg = match a.aggregation {
        AggregationArg::Positive => Aggregation::PositivePart,
        AggregationArg::Signed => Aggregation::Signed,
    };
    let report = rate_players(&xt, &events, &ledger, &cohort(&a.cohort), agg)?;
    if report.missing_minutes > 0 {
        log::warn!("{} players with events have no minutes entry", report.missing_minutes);
    }
    let mut csv = Vec::new();
    write_ratings_csv(&mut csv, &report.ratings)?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            w.write_all(&csv)?;
            w.flush()?;
        }
        None => std::io::stdout().write_all(&csv)?,
    }
    if let Some(path) = &a.plot {
        let mut groups: Vec<(String, Vec<(String, f64)>)> = Vec::new();
        for r in &report.ratings {
            match groups.iter_mut().find(|g| g.0 == r.position) {
                Some(g) => g.1.push((r.player_id.clone(), r.xt_per90)),
                None => groups.push((r.position.clone(), vec![(r.player_id.clone(), r.xt_per90)])),
            }
        }
        groups.sort_by(|a, b| a.0.cmp(&b.0));
        let svg = svg::strip_plot("xT added per 90 minutes", "xT per 90", &groups);
        write_plot(path, &svg, &String::from_utf8(csv).expect("CSV is UTF-8"))?;
    }
    Ok(())
}
