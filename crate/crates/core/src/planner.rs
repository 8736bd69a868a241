//! Planning rules on top of a lognormal [`ErrorLaw`]: check an existing
//! model, pick the finest acceptable grid for a dataset, or size the
//! dataset for a grid.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::fit::ErrorLaw;
use crate::grid::PitchGrid;
use crate::svg::{LineChart, Series};

pub const DEFAULT_TARGET_PROB: f64 = 0.90;
/// Events in one league season, for human-readable dataset sizes.
pub const EVENTS_PER_SEASON: f64 = 620_000.0;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Inverse of [`normal_cdf`] on `(0, 1)`.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("normal quantile needs p in (0, 1), got {p}")));
    }
    Ok(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanVerdict {
    pub m: usize,
    pub n: f64,
    /// `P(model error ≤ me_max)`.
    pub probability_acceptable: f64,
    /// 90% quantile of the model error.
    pub q90_error: f64,
    pub acceptable: bool,
    pub me_max: f64,
}

pub fn quality_check(law: &ErrorLaw, m: usize, n: f64) -> Result<PlanVerdict> {
    if m == 0 || !(n >= 1.0) {
        return Err(Error::domain(format!("quality check needs M >= 1 and N >= 1, got M={m}, N={n}")));
    }
    let mu = law.log_median(m, n);
    let sigma = law.sigma();
    let gap = law.me_max.ln() - mu;
    let probability_acceptable = if sigma > 0.0 {
        normal_cdf(gap / sigma)
    } else if gap >= 0.0 {
        1.0
    } else {
        0.0
    };
    let q90_error = (mu + normal_quantile(0.9)? * sigma).exp();
    Ok(PlanVerdict { m, n, probability_acceptable, q90_error, acceptable: q90_error <= law.me_max, me_max: law.me_max })
}

/// Quantile of the model error at level `q` for each candidate grid.
pub fn grid_quantiles(law: &ErrorLaw, n: f64, candidates: &[PitchGrid], q: f64) -> Result<Vec<(PitchGrid, f64)>> {
    candidates.iter().map(|g| Ok((*g, law.quantile(g.n_states(), n, q)?))).collect()
}

/// The candidate with the most states whose `target_prob` error quantile
/// stays within `me_max`.
pub fn select_grid(law: &ErrorLaw, n: f64, candidates: &[PitchGrid], target_prob: f64) -> Result<PitchGrid> {
    if candidates.is_empty() {
        return Err(Error::domain("no candidate grids"));
    }
    let qs = grid_quantiles(law, n, candidates, target_prob)?;
    qs.iter()
        .filter(|(_, q)| *q <= law.me_max)
        .max_by_key(|(g, _)| (g.n_states(), *g))
        .map(|(g, _)| *g)
        .ok_or_else(|| {
            Error::NoGrid(
                qs.iter().map(|(g, q)| format!("{g} ({}): {q:.4}", g.n_states())).collect::<Vec<_>>().join(", "),
            )
        })
}

/// Smallest dataset size whose `target_prob` error quantile is within
/// `me_max` for `M` states, from the closed form
/// `ln N ≥ (c + α ln M + z σ − ln me_max) / (β/2)`.
pub fn required_n(law: &ErrorLaw, m: usize, target_prob: f64) -> Result<u64> {
    if m == 0 {
        return Err(Error::domain("M must be >= 1"));
    }
    if !(law.beta_n > 0.0) {
        return Err(Error::domain(format!("beta_n = {} <= 0: more data cannot reduce the error", law.beta_n)));
    }
    let z = normal_quantile(target_prob)?;
    let ln_n = (law.c + law.alpha_m * (m as f64).ln() + z * law.sigma() - law.me_max.ln()) / (law.beta_n / 2.0);
    let n = ln_n.exp().ceil();
    Ok(if n < 1.0 { 1 } else { n as u64 })
}

/// Which input a quantile curve sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    /// Vary `M` at fixed `N`.
    States { n: f64 },
    /// Vary `N` at fixed `M`.
    Events { m: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub m: usize,
    pub n: f64,
    /// One value per requested quantile level.
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCurve {
    pub sweep: Sweep,
    pub q_levels: Vec<f64>,
    pub me_max: f64,
    pub rows: Vec<CurveRow>,
}

pub fn quantile_curve(law: &ErrorLaw, sweep: Sweep, points: &[f64], q_levels: &[f64]) -> Result<QuantileCurve> {
    if points.is_empty() {
        return Err(Error::domain("empty sweep"));
    }
    let rows = points
        .iter()
        .map(|&p| {
            let (m, n) = match sweep {
                Sweep::States { n } => (p.round() as usize, n),
                Sweep::Events { m } => (m, p),
            };
            let quantiles = q_levels.iter().map(|&q| law.quantile(m, n, q)).collect::<Result<Vec<_>>>()?;
            Ok(CurveRow { m, n, quantiles })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(QuantileCurve { sweep, q_levels: q_levels.to_vec(), me_max: law.me_max, rows })
}

impl QuantileCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# schema: xtq.curve/1\nM,N");
        for q in &self.q_levels {
            s.push_str(&format!(",q{q}"));
        }
        s.push_str(",me_max\n");
        for r in &self.rows {
            s.push_str(&format!("{},{}", r.m, r.n));
            for v in &r.quantiles {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(&format!(",{}\n", self.me_max));
        }
        s
    }

    pub fn to_svg(&self) -> String {
        let xs: Vec<f64> = self
            .rows
            .iter()
            .map(|r| match self.sweep {
                Sweep::States { .. } => r.m as f64,
                Sweep::Events { .. } => r.n,
            })
            .collect();
        let mut chart = LineChart::new(match self.sweep {
            Sweep::States { n } => format!("Model error quantiles, N = {n}"),
            Sweep::Events { m } => format!("Model error quantiles, M = {m}"),
        });
        chart.x_label = match self.sweep {
            Sweep::States { .. } => "number of states M".into(),
            Sweep::Events { .. } => "number of events N".into(),
        };
        chart.y_label = "model error".into();
        for (i, q) in self.q_levels.iter().enumerate() {
            chart.series.push(Series {
                label: format!("q = {q}"),
                points: xs.iter().zip(&self.rows).map(|(x, r)| (*x, r.quantiles[i])).collect(),
                dashed: false,
            });
        }
        if let (Some(lo), Some(hi)) = (xs.first(), xs.last()) {
            chart.series.push(Series {
                label: format!("ME_max = {}", self.me_max),
                points: vec![(*lo, self.me_max), (*hi, self.me_max)],
                dashed: true,
            });
        }
        chart.render()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> ErrorLaw {
        ErrorLaw::published()
    }

    #[test]
    fn cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.2816) - 0.90).abs() < 1e-4);
        // tabulated Φ(1.96) = 0.9750021048517795
        assert!((normal_cdf(1.96) - 0.975_002_104_851_779_5).abs() < 1e-7);
        assert!((normal_cdf(-1.0) - 0.158_655_253_931_457_05).abs() < 1e-7);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let mut z = -5.0;
        while z <= 5.0 {
            assert!((normal_quantile(normal_cdf(z)).unwrap() - z).abs() < 1e-6, "z={z}");
            z += 0.01;
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!((normal_quantile(0.9).unwrap() - 1.281_551_565_544_600_4).abs() < 1e-9);
    }

    #[test]
    fn check_singh_model() {
        let v = quality_check(&law(), 192, 620_000.0).unwrap();
        assert!((v.probability_acceptable - 0.2209).abs() < 0.002, "{}", v.probability_acceptable);
        assert!((v.probability_acceptable - 0.221_017_690_208).abs() < 1e-9);
        assert!(!v.acceptable);
        let loose = ErrorLaw { me_max: 1e6, ..law() };
        assert!(quality_check(&loose, 192, 620_000.0).unwrap().probability_acceptable > 0.999_999);
        let sharp = ErrorLaw { sigma2: 0.0, me_max: 0.05, ..law() };
        assert_eq!(quality_check(&sharp, 192, 620_000.0).unwrap().probability_acceptable, 1.0);
    }

    #[test]
    fn datasize_for_default_grid() {
        assert_eq!(required_n(&law(), 192, 0.9).unwrap(), 3_346_700);
        let n = required_n(&law(), 192, 0.9).unwrap() as f64;
        assert!((n / 3_348_000.0 - 1.0).abs() < 0.01, "{n}");
        let doubled = ErrorLaw { me_max: 2.0 * law().me_max, ..law() };
        assert!((required_n(&doubled, 192, 0.9).unwrap() as f64) < n);
        assert!(required_n(&ErrorLaw { beta_n: 0.0, ..law() }, 192, 0.9).is_err());
    }

    #[test]
    fn datasize_inverts_quantile() {
        let l = law();
        let n0 = 1_234_567.0;
        let z = normal_quantile(0.9).unwrap();
        let matched = ErrorLaw { me_max: (l.log_median(192, n0) + z * l.sigma()).exp(), ..l };
        let n = required_n(&matched, 192, 0.9).unwrap();
        assert!((n as f64 - n0).abs() <= 1.0, "{n}");
    }

    #[test]
    fn grid_selection() {
        let grids = PitchGrid::study_grids();
        let g = select_grid(&law(), 2_480_000.0, &grids, 0.9).unwrap();
        assert_eq!(g.n_states(), 154);
        let g = select_grid(&law(), 2_400_000.0, &grids, 0.9).unwrap();
        assert_eq!(g.n_states(), 154);
        let g = select_grid(&law(), 1e15, &grids, 0.9).unwrap();
        assert_eq!(g.n_states(), 3072);
        assert!(matches!(select_grid(&law(), 1.0, &grids, 0.9), Err(Error::NoGrid(_))));
    }

    #[test]
    fn curves() {
        let l = law();
        let one = quantile_curve(&l, Sweep::Events { m: 192 }, &[620_000.0], &[0.9]).unwrap();
        let v = quality_check(&l, 192, 620_000.0).unwrap();
        assert!((one.rows[0].quantiles[0] - v.q90_error).abs() < 1e-15);

        let ns: Vec<f64> = (1..=40).map(|i| i as f64 * 1e5).collect();
        let c = quantile_curve(&l, Sweep::Events { m: 192 }, &ns, &[0.1, 0.5, 0.9]).unwrap();
        for w in c.rows.windows(2) {
            assert!(w[1].quantiles[2] < w[0].quantiles[2]);
        }
        let ms: Vec<f64> = PitchGrid::study_grids().iter().map(|g| g.n_states() as f64).collect();
        let c = quantile_curve(&l, Sweep::States { n: 2_480_000.0 }, &ms, &[0.9]).unwrap();
        for w in c.rows.windows(2) {
            assert!(w[1].quantiles[0] > w[0].quantiles[0]);
        }
        assert!(c.to_csv().lines().count() == ms.len() + 2);
        assert!(c.to_svg().starts_with("<svg"));
    }

    #[test]
    fn crossing_near_three_point_three_million() {
        // bisection on the closed form
        let l = law();
        let f = |n: f64| l.quantile(192, n, 0.9).unwrap() - l.me_max;
        let (mut lo, mut hi) = (1e5f64, 1e8f64);
        for _ in 0..200 {
            let mid = f64::sqrt(lo * hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(hi > 3.3e6 && hi < 3.4e6, "{hi}");
    }

    #[test]
    fn probability_monotone() {
        let l = law();
        for m in [48usize, 80, 108, 154, 192, 300] {
            for n in [1e5, 5e5, 1e6, 4e6] {
                let p = quality_check(&l, m, n).unwrap().probability_acceptable;
                assert!(quality_check(&l, m + 1, n).unwrap().probability_acceptable < p);
                assert!(quality_check(&l, m, n * 1.05).unwrap().probability_acceptable > p);
            }
        }
    }
}
