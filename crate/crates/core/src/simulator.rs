//! Monte Carlo studies of the normal approximation to `T2` and of the test's
//! size and power.
//!
//! Replicate `r` of a study with seed `s` draws from its own ChaCha stream
//! `(s, r)` and results are collected in replicate order, so output does not
//! depend on the number of worker threads.
//!
//! The standardized statistic is `sqrt(n) (T2 - H_K) / (2 sigma1)` with
//! `sigma1^2` the variance of the first projection of the per-site-averaged
//! kernel. It equals `sqrt(nK) (T2 - H_K) / (2 sigma1')` when `sigma1'^2` is
//! taken on the per-site scale, `K sigma1^2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{pair_diff_count, Alignment};
use crate::error::{Error, Result};
use crate::estimators::{tajima_from_counts, ThetaSquaredPlugin};
use crate::inference::{
    jackknife_from_mismatches, replicate_rng, tn_from_parts, tn_pvalue, PairwiseMismatches,
    Sidedness,
};
use crate::model::{Model, ModelSpec, SiteModel};
use crate::numeric::{ks_distance_normal, pairs, summary_moments};
use crate::ustat::{
    berry_esseen_bound, berry_esseen_rate, expected_hk, sigma1_sq, RateDescriptor,
    DEGENERACY_TOLERANCE,
};

/// Default bound on `n * K * replicates` per study.
pub const DEFAULT_CELL_CAP: u128 = 1_000_000_000;

pub fn check_cells(n: usize, k: usize, replicates: usize, cap: u128) -> Result<()> {
    let cells = n as u128 * k as u128 * replicates as u128;
    if cells > cap {
        return Err(Error::ResourceCap { cells, cap });
    }
    Ok(())
}

/// `n` sequences drawn independently from `model`.
pub fn sample_rows<M: SiteModel + ?Sized>(model: &M, n: usize, rng: &mut dyn rand::RngCore) -> Vec<Vec<u8>> {
    (0..n)
        .map(|_| {
            let mut row = vec![0u8; model.sites()];
            model.sample_into(rng, &mut row);
            row
        })
        .collect()
}

pub fn sample_alignment<M: SiteModel + ?Sized>(model: &M, n: usize, seed: u64) -> Result<Alignment> {
    if n < 2 {
        return Err(Error::TooFewSequences { required: 2, found: n });
    }
    let mut rng = replicate_rng(seed, 0);
    Alignment::from_unlabeled(sample_rows(model, n, &mut rng), model.categories())
}

/// Summed pairwise differences and segregating count straight from rows.
fn column_summary(rows: &[Vec<u8>], categories: usize) -> (u64, usize) {
    let k = rows.first().map_or(0, Vec::len);
    let mut counts = vec![0u32; categories];
    let (mut total, mut seg) = (0u64, 0usize);
    for site in 0..k {
        counts.iter_mut().for_each(|c| *c = 0);
        for r in rows {
            counts[r[site] as usize] += 1;
        }
        let d = pair_diff_count(&counts);
        total += d;
        seg += (d > 0) as usize;
    }
    (total, seg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// `sqrt(n) (T2 - H_K) / (2 sigma1)`.
    #[default]
    StandardizedT2,
    /// The test statistic with `theta0 = H_K` and jackknife variance.
    TN,
    TajimaD,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub model: ModelSpec,
    pub n: usize,
    /// Overrides the model's `K` when given.
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub statistic: Statistic,
}

impl SimConfig {
    pub fn build_model(&self) -> Result<Model> {
        match self.sites {
            Some(k) if k != self.model.sites() => self.model.with_sites(k)?.build(),
            _ => self.model.build(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimStudyResult {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub statistic: Statistic,
    pub replicates: usize,
    /// Replicates where the statistic was undefined and skipped.
    pub undefined_replicates: usize,
    pub ks_distance: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub berry_esseen_bound: Option<f64>,
    pub rate: Option<RateDescriptor>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

impl SimStudyResult {
    pub fn without_values(mut self) -> Self {
        self.values.clear();
        self
    }
}

/// Per-replicate values of `statistic` under `model`.
fn replicate_values(
    model: &Model,
    n: usize,
    replicates: usize,
    seed: u64,
    statistic: Statistic,
) -> Result<Vec<Option<f64>>> {
    let hk = expected_hk(model);
    let s1 = sigma1_sq(model);
    if statistic == Statistic::StandardizedT2 && s1 <= DEGENERACY_TOLERANCE {
        return Err(Error::DegenerateKernel);
    }
    if statistic == Statistic::TN && n < 5 {
        return Err(Error::TooFewSequences { required: 5, found: n });
    }
    let c = model.categories();
    let k = model.sites();
    let sigma1 = s1.sqrt();
    Ok((0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_rng(seed, r);
            let rows = sample_rows(model, n, &mut rng);
            match statistic {
                Statistic::StandardizedT2 => {
                    let (total, _) = column_summary(&rows, c);
                    let t2 = total as f64 / (k as f64 * pairs(n));
                    Some((n as f64).sqrt() * (t2 - hk) / (2.0 * sigma1))
                }
                Statistic::TajimaD => {
                    let (total, seg) = column_summary(&rows, c);
                    tajima_from_counts(total, seg, n, ThetaSquaredPlugin::Unbiased)
                        .ok()
                        .map(|t| t.d)
                }
                Statistic::TN => {
                    let pm = PairwiseMismatches::from_rows(&rows);
                    let var = jackknife_from_mismatches(&pm).ok()?.value;
                    tn_from_parts(pm.t2(), hk, var, n, k).ok().map(|t| t.t_n)
                }
            }
        })
        .collect())
}

pub fn clt_study(config: &SimConfig) -> Result<SimStudyResult> {
    clt_study_capped(config, DEFAULT_CELL_CAP)
}

pub fn clt_study_capped(config: &SimConfig, cap: u128) -> Result<SimStudyResult> {
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    if config.n < 2 {
        return Err(Error::TooFewSequences { required: 2, found: config.n });
    }
    let model = config.build_model()?;
    let (n, k) = (config.n, model.sites());
    check_cells(n, k, config.replicates, cap)?;
    let raw = replicate_values(&model, n, config.replicates, config.seed, config.statistic)?;
    let values: Vec<f64> = raw.iter().flatten().copied().collect();
    if values.is_empty() {
        return Err(Error::InvalidArgument("statistic undefined in every replicate".into()));
    }
    let (mean, variance, skewness) = summary_moments(&values);
    let bound = match config.statistic {
        Statistic::StandardizedT2 => berry_esseen_bound(&model, n, 1.0).ok(),
        _ => None,
    };
    Ok(SimStudyResult {
        n,
        k,
        statistic: config.statistic,
        replicates: config.replicates,
        undefined_replicates: raw.len() - values.len(),
        ks_distance: ks_distance_normal(&values).expect("finite values"),
        mean,
        variance,
        skewness,
        berry_esseen_bound: bound,
        rate: berry_esseen_rate(k, model.mixing()).ok(),
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub model: ModelSpec,
    /// Grid over `n` (with the model's `K`) or over `K` (with fixed `n`).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n_grid: Vec<usize>,
    #[serde(rename = "K_grid", default, skip_serializing_if = "Vec::is_empty")]
    pub k_grid: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub ks_distance: f64,
    pub berry_esseen_bound: Option<f64>,
    pub rate: Option<RateDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateStudyResult {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `ln KS` against `ln n` (or `ln K`).
    pub log_log_slope: Option<f64>,
    pub axis: &'static str,
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn rate_study(config: &RateConfig) -> Result<RateStudyResult> {
    let (grid, axis): (Vec<(usize, Option<usize>)>, &'static str) =
        match (config.n_grid.is_empty(), config.k_grid.is_empty()) {
            (false, true) => (config.n_grid.iter().map(|&n| (n, None)).collect(), "n"),
            (true, false) => {
                let n = config.n.ok_or_else(|| {
                    Error::InvalidArgument("a K grid needs a fixed n".into())
                })?;
                (config.k_grid.iter().map(|&k| (n, Some(k))).collect(), "K")
            }
            _ => {
                return Err(Error::InvalidArgument(
                    "give exactly one of n_grid and K_grid".into(),
                ))
            }
        };
    let mut rows = Vec::with_capacity(grid.len());
    for (n, k) in grid {
        let r = clt_study(&SimConfig {
            model: config.model.clone(),
            n,
            sites: k,
            replicates: config.replicates,
            seed: config.seed,
            statistic: Statistic::StandardizedT2,
        })?;
        rows.push(RateRow {
            n: r.n,
            k: r.k,
            ks_distance: r.ks_distance,
            berry_esseen_bound: r.berry_esseen_bound,
            rate: r.rate,
        });
    }
    let points: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| {
            let x = if axis == "n" { r.n } else { r.k };
            (x as f64, r.ks_distance)
        })
        .collect();
    Ok(RateStudyResult {
        log_log_slope: log_log_slope(&points),
        rows,
        axis,
    })
}

/// Moves `dist` toward the uniform distribution until its Gini-Simpson index
/// equals `target`, by bisection on the mixing weight.
pub fn shift_toward_uniform(dist: &[f64], target: f64) -> Result<Vec<f64>> {
    let c = dist.len();
    let gs = |w: f64| {
        1.0 - dist
            .iter()
            .map(|p| ((1.0 - w) * p + w / c as f64).powi(2))
            .sum::<f64>()
    };
    let (lo_h, hi_h) = (gs(0.0), gs(1.0));
    if !(target >= lo_h - 1e-15 && target <= hi_h + 1e-15) {
        return Err(Error::InvalidArgument(format!(
            "target diversity {target} outside [{lo_h}, {hi_h}]"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gs(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w = 0.5 * (lo + hi);
    Ok(dist.iter().map(|p| (1.0 - w) * p + w / c as f64).collect())
}

/// How fast a Pitman alternative approaches the null.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftRate {
    /// `H_K - theta0 = c / (nK)`: shrinks faster than the test's resolution,
    /// so power falls back to `alpha`.
    #[serde(rename = "inverse_nk")]
    InverseNK,
    /// `H_K - theta0 = c / sqrt(nK)`: power settles strictly between `alpha` and 1.
    #[serde(rename = "inverse_root_nk")]
    InverseRootNK,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum Alternative {
    Fixed { model: ModelSpec },
    /// The null's broadcast marginal moved toward uniform until
    /// `H_K - theta0 = effect`.
    Shifted { effect: f64 },
    /// As `Shifted`, with an effect that shrinks with `n` at the given rate.
    Drift { c: f64, rate: DriftRate },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerConfig {
    pub null: ModelSpec,
    pub alternative: Alternative,
    pub n_grid: Vec<usize>,
    pub alpha: f64,
    #[serde(default)]
    pub sided: Sidedness,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// `H_K` of the alternative minus `theta0`.
    pub effect: f64,
    pub rejection_rate: f64,
    pub mean_t_n: f64,
    pub replicates: usize,
    pub undefined_replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerStudyResult {
    pub theta0: f64,
    pub alpha: f64,
    pub sided: Sidedness,
    pub rows: Vec<PowerRow>,
}

fn shifted_model(null: &ModelSpec, effect: f64, theta0: f64) -> Result<ModelSpec> {
    let ModelSpec::Independent {
        categories,
        sites,
        marginals,
    } = null
    else {
        return Err(Error::InvalidModel("shifted alternatives need an independent null".into()));
    };
    if marginals.len() != 1 {
        return Err(Error::InvalidModel(
            "shifted alternatives need a single broadcast marginal".into(),
        ));
    }
    Ok(ModelSpec::Independent {
        categories: *categories,
        sites: *sites,
        marginals: vec![shift_toward_uniform(&marginals[0], theta0 + effect)?],
    })
}

/// Rejection rates of the `T_n` test with `theta0 = H_K(null)` and jackknife
/// variance, for data drawn from the alternative.
pub fn power_study(config: &PowerConfig) -> Result<PowerStudyResult> {
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {} outside (0, 1)", config.alpha)));
    }
    if config.replicates == 0 {
        return Err(Error::InvalidArgument("replicates must be at least 1".into()));
    }
    let null = config.null.build()?;
    let theta0 = expected_hk(&null);
    let mut rows = Vec::with_capacity(config.n_grid.len());
    for (g, &n) in config.n_grid.iter().enumerate() {
        let alt_spec = match &config.alternative {
            Alternative::Fixed { model } => model.clone(),
            Alternative::Shifted { effect } => shifted_model(&config.null, *effect, theta0)?,
            Alternative::Drift { c, rate } => {
                let nk = n as f64 * config.null.sites() as f64;
                let effect = match rate {
                    DriftRate::InverseNK => c / nk,
                    DriftRate::InverseRootNK => c / nk.sqrt(),
                };
                shifted_model(&config.null, effect, theta0)?
            }
        };
        let alt = alt_spec.build()?;
        if alt.sites() != null.sites() || alt.categories() != null.categories() {
            return Err(Error::InvalidModel("null and alternative must share C and K".into()));
        }
        let k = alt.sites();
        check_cells(n, k, config.replicates, DEFAULT_CELL_CAP)?;
        if n < 5 {
            return Err(Error::TooFewSequences { required: 5, found: n });
        }
        // a separate key per grid point keeps points independent
        let seed = config.seed.wrapping_add(g as u64);
        let stats: Vec<Option<f64>> = (0..config.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let mut rng = replicate_rng(seed, r);
                let rows = sample_rows(&alt, n, &mut rng);
                let pm = PairwiseMismatches::from_rows(&rows);
                let var = jackknife_from_mismatches(&pm).ok()?.value;
                tn_from_parts(pm.t2(), theta0, var, n, k).ok().map(|t| t.t_n)
            })
            .collect();
        let defined: Vec<f64> = stats.iter().flatten().copied().collect();
        let rejections = defined
            .iter()
            .filter(|&&t| tn_pvalue(t, config.sided) < config.alpha)
            .count();
        rows.push(PowerRow {
            n,
            k,
            effect: expected_hk(&alt) - theta0,
            rejection_rate: rejections as f64 / config.replicates as f64,
            mean_t_n: if defined.is_empty() {
                f64::NAN
            } else {
                defined.iter().sum::<f64>() / defined.len() as f64
            },
            replicates: config.replicates,
            undefined_replicates: config.replicates - defined.len(),
        });
    }
    Ok(PowerStudyResult {
        theta0,
        alpha: config.alpha,
        sided: config.sided,
        rows,
    })
}

/// A study description as stored in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "lowercase")]
pub enum StudySpec {
    Clt(SimConfig),
    Rate(RateConfig),
    Power(PowerConfig),
}

impl StudySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            StudySpec::Clt(c) => c.seed = seed,
            StudySpec::Rate(c) => c.seed = seed,
            StudySpec::Power(c) => c.seed = seed,
        }
        self
    }

    pub fn run(&self) -> Result<StudyOutput> {
        Ok(match self {
            StudySpec::Clt(c) => StudyOutput::Clt(clt_study(c)?.without_values()),
            StudySpec::Rate(c) => StudyOutput::Rate(rate_study(c)?),
            StudySpec::Power(c) => StudyOutput::Power(power_study(c)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "study", rename_all = "lowercase")]
pub enum StudyOutput {
    Clt(SimStudyResult),
    Rate(RateStudyResult),
    Power(PowerStudyResult),
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

fn rate_label(r: &Option<RateDescriptor>) -> String {
    match r {
        Some(RateDescriptor::SlowerThanInverseSqrt) => "slower_than_K^-1/2".into(),
        Some(d) => opt(d.value()),
        None => "NA".into(),
    }
}

impl StudyOutput {
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        match self {
            StudyOutput::Clt(r) => {
                out.push_str("n\tK\tstatistic\treplicates\tundefined\tks_distance\tmean\tvariance\tskewness\tberry_esseen_bound\trate\n");
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                    r.n,
                    r.k,
                    serde_json::to_value(r.statistic).unwrap().as_str().unwrap_or(""),
                    r.replicates,
                    r.undefined_replicates,
                    r.ks_distance,
                    r.mean,
                    r.variance,
                    r.skewness,
                    opt(r.berry_esseen_bound),
                    rate_label(&r.rate)
                ));
            }
            StudyOutput::Rate(r) => {
                out.push_str("n\tK\tks_distance\tberry_esseen_bound\trate\n");
                for row in &r.rows {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        row.n,
                        row.k,
                        row.ks_distance,
                        opt(row.berry_esseen_bound),
                        rate_label(&row.rate)
                    ));
                }
                out.push_str(&format!("# log_log_slope_{}\t{}\n", r.axis, opt(r.log_log_slope)));
            }
            StudyOutput::Power(r) => {
                out.push_str("n\tK\teffect\trejection_rate\tmean_t_n\treplicates\tundefined\n");
                for row in &r.rows {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                        row.n,
                        row.k,
                        row.effect,
                        row.rejection_rate,
                        row.mean_t_n,
                        row.replicates,
                        row.undefined_replicates
                    ));
                }
            }
        }
        out
    }
}
