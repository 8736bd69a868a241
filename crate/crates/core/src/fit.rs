//! Lognormal model-error law `log err = c + α ln M − β ln √N + ε` and its
//! least-squares fit to simulation records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::normal_quantile;
use crate::sim::ReplicateRecord;

pub const DEFAULT_ME_MAX: f64 = 0.0192;
pub const LAW_SCHEMA: &str = "xtq.law/1";
/// Records with `M^{3/2} ln M / √N` at or above this are left out of fits.
pub const FILTER_THRESHOLD: f64 = 445.0;

/// The published law, shipped as a file so it can be edited or replaced.
pub const PUBLISHED_LAW_JSON: &str = include_str!("../data/published_law.json");

pub fn passes_filter(m: usize, n: f64) -> bool {
    let mf = m as f64;
    mf.powf(1.5) * mf.ln() / n.sqrt() < FILTER_THRESHOLD
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LawSource {
    #[serde(rename = "paper-table-4")]
    Published,
    #[serde(rename = "fitted")]
    Fitted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorLaw {
    pub c: f64,
    pub alpha_m: f64,
    pub beta_n: f64,
    pub sigma2: f64,
    pub me_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawFile {
    #[serde(default = "law_schema")]
    pub schema: String,
    #[serde(flatten)]
    pub law: ErrorLaw,
    pub source: LawSource,
}

fn law_schema() -> String {
    LAW_SCHEMA.to_string()
}

impl LawFile {
    pub fn new(law: ErrorLaw, source: LawSource) -> Self {
        LawFile { schema: law_schema(), law, source }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let f: LawFile = serde_json::from_str(text)?;
        f.law.validate()?;
        Ok(f)
    }
}

impl ErrorLaw {
    pub fn published() -> Self {
        LawFile::parse(PUBLISHED_LAW_JSON).expect("bundled law file is valid").law
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 >= 0.0) {
            return Err(Error::domain(format!("sigma2 = {} must be >= 0", self.sigma2)));
        }
        if !(self.me_max > 0.0) {
            return Err(Error::domain(format!("me_max = {} must be > 0", self.me_max)));
        }
        if ![self.c, self.alpha_m, self.beta_n].iter().all(|v| v.is_finite()) {
            return Err(Error::domain("law coefficients must be finite"));
        }
        Ok(())
    }

    /// `μ = c + α ln M − β ln √N`, the log of the median error.
    pub fn log_median(&self, m: usize, n: f64) -> f64 {
        self.c + self.alpha_m * (m as f64).ln() - self.beta_n * n.sqrt().ln()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Error level exceeded with probability `1 − q`.
    pub fn quantile(&self, m: usize, n: f64, q: f64) -> Result<f64> {
        if m == 0 || !(n >= 1.0) {
            return Err(Error::domain(format!("law quantile needs M, N >= 1, got M={m}, N={n}")));
        }
        Ok((self.log_median(m, n) + normal_quantile(q)? * self.sigma()).exp())
    }
}

pub fn law_quantile(law: &ErrorLaw, m: usize, n: f64, q: f64) -> Result<f64> {
    law.quantile(m, n, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub r2: f64,
    pub n_obs: usize,
    /// Standard errors of `(c, alpha_m, beta_n)`.
    pub coef_stderr: [f64; 3],
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    /// Index into the input records for each residual.
    pub used: Vec<usize>,
    /// `(theoretical, empirical)` quantiles of the standardized residuals.
    pub qq_pairs: Vec<(f64, f64)>,
    pub pearson_err_g: f64,
    pub pearson_err_t_weighted: f64,
    pub dropped_zero: usize,
    pub excluded_by_filter: usize,
}

/// Least squares via Householder QR. Returns coefficients and the upper
/// triangular factor (row-major, `p × p`).
fn householder_ols(x: &[Vec<f64>], y: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = y.len();
    let p = x.first().map_or(0, |r| r.len());
    // column-major copy
    let mut a: Vec<Vec<f64>> = (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect();
    let mut b = y.to_vec();
    let scale: Vec<f64> = a.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale[k].max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient(format!("column {k} is a combination of the others")));
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for col in a.iter_mut().skip(k) {
                let d = 2.0 * v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
                for (c, vi) in col[k..].iter_mut().zip(&v) {
                    *c -= d * vi;
                }
            }
            let d = 2.0 * v.iter().zip(&b[k..]).map(|(a, b)| a * b).sum::<f64>() / vnorm2;
            for (c, vi) in b[k..].iter_mut().zip(&v) {
                *c -= d * vi;
            }
        }
    }
    let r: Vec<Vec<f64>> = (0..p).map(|i| (0..p).map(|j| if j >= i { a[j][i] } else { 0.0 }).collect()).collect();
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = (i + 1..p).map(|j| r[i][j] * beta[j]).sum();
        beta[i] = (b[i] - s) / r[i][i];
    }
    debug_assert!(n >= p);
    Ok((beta, r))
}

/// Diagonal of `(RᵀR)⁻¹` from the inverse of upper-triangular `R`.
fn inv_gram_diag(r: &[Vec<f64>]) -> Vec<f64> {
    let p = r.len();
    let mut inv = vec![vec![0.0; p]; p];
    for j in 0..p {
        inv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let s: f64 = (i + 1..=j).map(|k| r[i][k] * inv[k][j]).sum();
            inv[i][j] = -s / r[i][i];
        }
    }
    (0..p).map(|i| inv[i].iter().map(|v| v * v).sum()).collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return f64::NAN;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Fits the law to the records that pass the 445-filter and have a
/// positive error. `me_max` is carried over unchanged from the default.
pub fn fit_error_law(records: &[ReplicateRecord]) -> Result<(ErrorLaw, FitDiagnostics)> {
    let mut used = Vec::new();
    let mut dropped_zero = 0;
    let mut excluded_by_filter = 0;
    for (i, r) in records.iter().enumerate() {
        if !r.passes_filter {
            excluded_by_filter += 1;
        } else if !(r.model_error > 0.0) {
            dropped_zero += 1;
        } else {
            used.push(i);
        }
    }
    if dropped_zero > 0 {
        log::warn!("dropped {dropped_zero} records with zero model error before the log fit");
    }
    if used.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} usable records after filtering, need at least 10",
            used.len()
        )));
    }
    let first = &records[used[0]];
    if used.iter().all(|&i| records[i].m == first.m) {
        return Err(Error::RankDeficient(format!("every record has M = {}; vary the grid", first.m)));
    }
    if used.iter().all(|&i| records[i].n == first.n) {
        return Err(Error::RankDeficient(format!("every record has N = {}; vary the dataset size", first.n)));
    }

    let x: Vec<Vec<f64>> = used
        .iter()
        .map(|&i| vec![1.0, (records[i].m as f64).ln(), -(records[i].n as f64).sqrt().ln()])
        .collect();
    let y: Vec<f64> = used.iter().map(|&i| records[i].model_error.ln()).collect();
    let (beta, r) = householder_ols(&x, &y)?;
    let fitted: Vec<f64> = x.iter().map(|row| row.iter().zip(&beta).map(|(a, b)| a * b).sum()).collect();
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let n = used.len();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let ybar = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - ybar).powi(2)).sum();
    let r2 = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };
    let sigma2 = if n > 3 { rss / (n - 3) as f64 } else { 0.0 };
    let gram = inv_gram_diag(&r);
    let coef_stderr = [(sigma2 * gram[0]).sqrt(), (sigma2 * gram[1]).sqrt(), (sigma2 * gram[2]).sqrt()];

    let sd = sigma2.sqrt();
    let mut std_res: Vec<f64> = residuals.iter().map(|e| if sd > 0.0 { e / sd } else { 0.0 }).collect();
    std_res.sort_by(f64::total_cmp);
    let qq_pairs = std_res
        .iter()
        .enumerate()
        .map(|(i, &e)| Ok((normal_quantile((i as f64 + 0.5) / n as f64)?, e)))
        .collect::<Result<Vec<_>>>()?;

    let me: Vec<f64> = used.iter().map(|&i| records[i].model_error).collect();
    let eg: Vec<f64> = used.iter().map(|&i| records[i].err_g).collect();
    let et: Vec<f64> = used.iter().map(|&i| records[i].err_t_weighted).collect();

    let law = ErrorLaw { c: beta[0], alpha_m: beta[1], beta_n: beta[2], sigma2, me_max: DEFAULT_ME_MAX };
    let diag = FitDiagnostics {
        r2,
        n_obs: n,
        coef_stderr,
        residuals,
        fitted,
        used,
        qq_pairs,
        pearson_err_g: pearson(&me, &eg),
        pearson_err_t_weighted: pearson(&me, &et),
        dropped_zero,
        excluded_by_filter,
    };
    Ok((law, diag))
}

/// Groups with fewer records than this are flagged and left out of the
/// variance ratio.
pub const MIN_GROUP_SIZE: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    /// `M` for grid groups; smallest `N` in the group for size groups.
    pub key: u64,
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualGroups {
    pub by_m: Vec<GroupStats>,
    pub by_n: Vec<GroupStats>,
    /// Largest over smallest group variance among unflagged groups.
    pub variance_ratio_m: Option<f64>,
    pub variance_ratio_n: Option<f64>,
}

fn group_stats(mut keyed: Vec<(u64, f64)>, same_group: impl Fn(u64, u64) -> bool) -> Vec<GroupStats> {
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    let mut i = 0;
    while i < keyed.len() {
        let key = keyed[i].0;
        let mut j = i;
        while j < keyed.len() && same_group(key, keyed[j].0) {
            j += 1;
        }
        let vals: Vec<f64> = keyed[i..j].iter().map(|p| p.1).collect();
        let count = vals.len();
        let mean = vals.iter().sum::<f64>() / count as f64;
        let variance =
            if count > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64 } else { 0.0 };
        out.push(GroupStats { key, count, mean, variance, flagged: count < MIN_GROUP_SIZE });
        i = j;
    }
    out
}

fn variance_ratio(groups: &[GroupStats]) -> Option<f64> {
    let vs: Vec<f64> = groups.iter().filter(|g| !g.flagged).map(|g| g.variance).collect();
    if vs.len() < 2 {
        return None;
    }
    let hi = vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = vs.iter().cloned().fold(f64::INFINITY, f64::min);
    Some(if hi == 0.0 { 1.0 } else { hi / lo })
}

/// Residual mean and variance per grid size and per dataset size. Sampled
/// event counts overshoot their target slightly, so sizes within 1% of a
/// group's smallest value share that group.
pub fn residuals_by_group(diag: &FitDiagnostics, records: &[ReplicateRecord]) -> ResidualGroups {
    let by_m = group_stats(diag.used.iter().zip(&diag.residuals).map(|(&i, &e)| (records[i].m as u64, e)).collect(), |a, b| {
        a == b
    });
    let by_n = group_stats(diag.used.iter().zip(&diag.residuals).map(|(&i, &e)| (records[i].n, e)).collect(), |a, b| {
        (b as f64) <= a as f64 * 1.01
    });
    ResidualGroups { variance_ratio_m: variance_ratio(&by_m), variance_ratio_n: variance_ratio(&by_n), by_m, by_n }
}

impl ResidualGroups {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("# schema: xtq.residual-groups/1\nvariable,key,count,mean,variance,flagged\n");
        for (name, gs) in [("M", &self.by_m), ("N", &self.by_n)] {
            for g in gs {
                s.push_str(&format!("{name},{},{},{},{},{}\n", g.key, g.count, g.mean, g.variance, g.flagged));
            }
        }
        s
    }
}

impl FitDiagnostics {
    pub fn residuals_csv(&self) -> String {
        let mut s = String::from("# schema: xtq.residuals/1\nrecord,fitted,residual\n");
        for ((i, f), e) in self.used.iter().zip(&self.fitted).zip(&self.residuals) {
            s.push_str(&format!("{i},{f},{e}\n"));
        }
        s
    }

    pub fn qq_csv(&self) -> String {
        let mut s = String::from("# schema: xtq.qq/1\ntheoretical,empirical\n");
        for (t, e) in &self.qq_pairs {
            s.push_str(&format!("{t},{e}\n"));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Box-Muller draw from the standard normal.
    fn normal<R: Rng>(rng: &mut R) -> f64 {
        let u1: f64 = 1.0 - rng.gen::<f64>();
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    fn record(m: usize, n: u64, err: f64) -> ReplicateRecord {
        ReplicateRecord {
            m,
            n,
            replicate_id: 0,
            model_error: err,
            err_g: err,
            err_t: 0.0,
            err_t_weighted: 0.0,
            passes_filter: passes_filter(m, n as f64),
        }
    }

    fn synthetic(law: &ErrorLaw, per_cell: usize, seed: u64) -> Vec<ReplicateRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for m in [48usize, 80, 108, 154, 192] {
            for n in [400_000u64, 1_000_000, 2_000_000, 4_000_000] {
                for _ in 0..per_cell {
                    let e = (law.log_median(m, n as f64) + law.sigma() * normal(&mut rng)).exp();
                    out.push(record(m, n, e));
                }
            }
        }
        out
    }

    #[test]
    fn bundled_law_is_verbatim() {
        let f = LawFile::parse(PUBLISHED_LAW_JSON).unwrap();
        assert_eq!(f.source, LawSource::Published);
        assert_eq!(f.law, ErrorLaw { c: -2.0916, alpha_m: 1.0100, beta_n: 1.0267, sigma2: 0.1782, me_max: 0.0192 });
        let back = LawFile::parse(&serde_json::to_string(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn median_at_default_grid() {
        let law = ErrorLaw::published();
        let q = law_quantile(&law, 192, 620_000.0, 0.5).unwrap();
        assert!((q.ln() + 3.6284).abs() < 1e-3, "{}", q.ln());
        assert!((q - 0.0265).abs() < 1e-4);
        let mut prev = 0.0;
        for i in 1..100 {
            let v = law_quantile(&law, 192, 620_000.0, i as f64 / 100.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
        assert!(law_quantile(&law, 193, 620_000.0, 0.9).unwrap() > law_quantile(&law, 192, 620_000.0, 0.9).unwrap());
        assert!(law_quantile(&law, 192, 620_001.0, 0.9).unwrap() < law_quantile(&law, 192, 620_000.0, 0.9).unwrap());
    }

    #[test]
    fn filter_boundary() {
        assert!(passes_filter(192, 620_000.0));
        assert!(!passes_filter(3072, 100_000.0));
        // M = 432: 432^1.5 ln 432 ≈ 54_489, passes once N > 14_993
        assert!(passes_filter(432, 15_000.0));
        assert!(!passes_filter(432, 14_990.0));
    }

    #[test]
    fn recovers_known_law() {
        let truth = ErrorLaw::published();
        let recs = synthetic(&truth, 100, 11);
        let (law, d) = fit_error_law(&recs).unwrap();
        let est = [law.c, law.alpha_m, law.beta_n];
        let want = [truth.c, truth.alpha_m, truth.beta_n];
        for k in 0..3 {
            assert!((est[k] - want[k]).abs() < 3.0 * d.coef_stderr[k], "coef {k}: {} vs {}", est[k], want[k]);
        }
        assert!((law.sigma2 / truth.sigma2 - 1.0).abs() < 0.1);
        let mean = d.residuals.iter().sum::<f64>() / d.n_obs as f64;
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn zero_noise_is_exact() {
        let truth = ErrorLaw { sigma2: 0.0, ..ErrorLaw::published() };
        let recs = synthetic(&truth, 3, 1);
        let (law, d) = fit_error_law(&recs).unwrap();
        assert!((d.r2 - 1.0).abs() < 1e-12);
        assert!(d.residuals.iter().all(|e| e.abs() < 1e-10));
        assert!((law.alpha_m - truth.alpha_m).abs() < 1e-9);
        let g = residuals_by_group(&d, &recs);
        assert!(g.by_m.iter().chain(&g.by_n).all(|s| s.variance < 1e-20));
    }

    #[test]
    fn residuals_orthogonal_and_r2_consistent() {
        let recs = synthetic(&ErrorLaw::published(), 20, 5);
        let (_, d) = fit_error_law(&recs).unwrap();
        let mut dots = [0.0; 3];
        let mut ys = Vec::new();
        for (&i, e) in d.used.iter().zip(&d.residuals) {
            let r = &recs[i];
            let xs = [1.0, (r.m as f64).ln(), -(r.n as f64).sqrt().ln()];
            for k in 0..3 {
                dots[k] += xs[k] * e;
            }
            ys.push(r.model_error.ln());
        }
        assert!(dots.iter().all(|v| v.abs() < 1e-8), "{dots:?}");
        let ybar = ys.iter().sum::<f64>() / ys.len() as f64;
        let tss: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
        let rss: f64 = d.residuals.iter().map(|e| e * e).sum();
        assert!((d.r2 - (1.0 - rss / tss)).abs() < 1e-12);
    }

    #[test]
    fn homoscedastic_groups() {
        let recs = synthetic(&ErrorLaw::published(), 60, 9);
        let (_, d) = fit_error_law(&recs).unwrap();
        let g = residuals_by_group(&d, &recs);
        assert_eq!(g.by_m.len(), 5);
        assert_eq!(g.by_n.len(), 4);
        assert!(g.by_m.iter().all(|s| s.count >= 200));
        assert!(g.variance_ratio_m.unwrap() < 2.0);
        assert!(g.variance_ratio_n.unwrap() < 2.0);
    }

    #[test]
    fn small_groups_are_flagged() {
        let mut recs = synthetic(&ErrorLaw::published(), 10, 2);
        recs.push(record(300, 4_000_000, 0.03));
        let (_, d) = fit_error_law(&recs).unwrap();
        let g = residuals_by_group(&d, &recs);
        let small = g.by_m.iter().find(|s| s.key == 300).unwrap();
        assert!(small.flagged);
    }

    #[test]
    fn degenerate_inputs() {
        let one_m: Vec<_> = (0..20).map(|i| record(192, 1_000_000 + i * 100_000, 0.02)).collect();
        assert!(matches!(fit_error_law(&one_m), Err(Error::RankDeficient(m)) if m.contains("M")));
        let one_n: Vec<_> = (0..20).map(|i| record(48 + i, 1_000_000, 0.02)).collect();
        assert!(matches!(fit_error_law(&one_n), Err(Error::RankDeficient(m)) if m.contains("N")));
        let few: Vec<_> = (0..5).map(|i| record(48 + i, 1_000_000 + i as u64, 0.02)).collect();
        assert!(matches!(fit_error_law(&few), Err(Error::InsufficientData(_))));
        let mut zeros = synthetic(&ErrorLaw::published(), 2, 3);
        zeros[0].model_error = 0.0;
        let (_, d) = fit_error_law(&zeros).unwrap();
        assert_eq!(d.dropped_zero, 1);
    }
}
