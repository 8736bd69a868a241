//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON or SVG string so the page needs no glue
//! beyond the generated `wasm-bindgen` module.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use xtq::estimate::{condense, count, estimate};
use xtq::events::assemble_chains;
use xtq::planner::{grid_quantiles, quality_check, quantile_curve, select_grid, Sweep};
use xtq::solver::{solve_estimated_certified, DEFAULT_EPS_STOP, DEFAULT_MAX_ITER};
use xtq::synthetic::synth_dataset;
use xtq::{svg, ErrorLaw, PitchGrid};

/// Largest synthetic season the demo will generate in the browser.
pub const MAX_DEMO_EVENTS: usize = 2_000_000;

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub m: usize,
    pub n: f64,
    pub probability_acceptable: f64,
    pub q90_error: f64,
    pub me_max: f64,
    pub curve_svg: String,
}

/// Probability that an `m`-state model trained on `n` events is acceptable
/// under the published law, with its quantile curve over dataset size.
pub fn check(m: usize, n: f64) -> xtq::Result<CheckResult> {
    let law = ErrorLaw::published();
    let v = quality_check(&law, m, n)?;
    let points: Vec<f64> = (0..=48).map(|i| (n / 10.0) * 1000f64.powf(i as f64 / 48.0)).collect();
    let curve = quantile_curve(&law, Sweep::Events { m }, &points, &[0.5, 0.9])?;
    Ok(CheckResult {
        m,
        n,
        probability_acceptable: v.probability_acceptable,
        q90_error: v.q90_error,
        me_max: v.me_max,
        curve_svg: curve.to_svg(),
    })
}

#[derive(Debug, Serialize)]
pub struct GridRow {
    pub grid: String,
    pub m: usize,
    pub quantile_error: f64,
    pub acceptable: bool,
}

#[derive(Debug, Serialize)]
pub struct GridChoice {
    pub chosen: Option<String>,
    pub rows: Vec<GridRow>,
}

/// Finest standard grid whose `target_prob` error quantile is within the
/// acceptable level at `n` events.
pub fn choose_grid(n: f64, target_prob: f64) -> xtq::Result<GridChoice> {
    let law = ErrorLaw::published();
    let grids = PitchGrid::study_grids();
    let rows = grid_quantiles(&law, n, &grids, target_prob)?
        .into_iter()
        .map(|(g, q)| GridRow { grid: g.to_string(), m: g.n_states(), quantile_error: q, acceptable: q <= law.me_max })
        .collect();
    let chosen = match select_grid(&law, n, &grids, target_prob) {
        Ok(g) => Some(g.to_string()),
        Err(xtq::Error::NoGrid(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(GridChoice { chosen, rows })
}

/// Generates a synthetic season, estimates a model on `m_x × m_y` cells
/// and renders its xT surface.
pub fn xt_heatmap(m_x: usize, m_y: usize, n_events: usize, seed: u64) -> xtq::Result<String> {
    let grid = PitchGrid::new(m_x, m_y)?;
    if n_events == 0 || n_events > MAX_DEMO_EVENTS {
        return Err(xtq::Error::Domain(format!("events must lie in 1..={MAX_DEMO_EVENTS}")));
    }
    let data = synth_dataset(grid, n_events, seed);
    let counts = count(&assemble_chains(&data.events).chains, grid)?;
    let model = condense(&estimate(&counts));
    let solved = solve_estimated_certified(&model, DEFAULT_EPS_STOP, 1e-9, DEFAULT_MAX_ITER)?;
    Ok(svg::heatmap(&format!("xT on {grid} cells from {n_events} events"), grid, &solved.model.xt))
}

fn to_js<T: Serialize>(r: xtq::Result<T>) -> Result<String, JsError> {
    let v = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = qualityCheck)]
pub fn quality_check_js(m: usize, n: f64) -> Result<String, JsError> {
    to_js(check(m, n))
}

#[wasm_bindgen(js_name = chooseGrid)]
pub fn choose_grid_js(n: f64, target_prob: f64) -> Result<String, JsError> {
    to_js(choose_grid(n, target_prob))
}

#[wasm_bindgen(js_name = xtHeatmap)]
pub fn xt_heatmap_js(m_x: usize, m_y: usize, n_events: usize, seed: u32) -> Result<String, JsError> {
    xt_heatmap(m_x, m_y, n_events, seed as u64).map_err(|e| JsError::new(&e.to_string()))
}
