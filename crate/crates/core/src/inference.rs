//! The neutrality test built on the mean pairwise difference `T2`.
//!
//! Under the null every site shares the category distribution observed at
//! non-segregating sites, so `T2` should estimate `theta0 = 1 - Pi'Pi` for the
//! pooled non-segregating frequencies `Pi`. The test statistic is
//!
//! ```text
//! T_n = sqrt(nK) (T2 - theta0) / sqrt(nK Var T2) = (T2 - theta0) / sqrt(Var T2)
//! ```
//!
//! where `Var T2` is the variance of `T2` itself. The `sqrt(nK)` prefactor only
//! standardizes correctly when the variance in the denominator is taken on the
//! same `nK` scale, so reports carry both this statistic and the unscaled
//! `sqrt(nK)(T2 - theta0)/sqrt(Var T2)` under `t_n_unscaled_variance`.
//!
//! `Var T2` comes from the closed-form jackknife for a degree-2 U-statistic,
//! evaluated from per-pair mismatch counts, or from a site model.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alignment::{classify_sites, pair_diff_count, pooled_frequencies, Alignment};
use crate::error::{Error, Result};
use crate::estimators::{
    mismatches, summarize, t2, tajima_from_counts, EstimatorSummary, T2Normalization,
    ThetaSquaredPlugin,
};
use crate::model::ModelSpec;
use crate::numeric::{normal_cdf, normal_sf, pairs};
use crate::ustat::{exact_var_t2, moment_set, MomentSet};

pub const SCHEMA_VERSION: u32 = 1;

/// Serialized as its command-line spelling: `pooled`, `sitewise` or `value=<x>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Theta0Mode {
    /// `1 - sum_c Pi_c^2` over frequencies pooled across non-segregating sites.
    PooledNonSegregating,
    /// Per-site plug-ins at non-segregating sites; always 0.
    SitewiseNonSegregating,
    UserSupplied(f64),
}

impl FromStr for Theta0Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled" => Ok(Theta0Mode::PooledNonSegregating),
            "sitewise" => Ok(Theta0Mode::SitewiseNonSegregating),
            _ => {
                let v = s
                    .strip_prefix("value=")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "theta0 mode '{s}' is not pooled, sitewise or value=<x>"
                        ))
                    })?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidArgument(format!("theta0 = {v} outside [0, 1]")));
                }
                Ok(Theta0Mode::UserSupplied(v))
            }
        }
    }
}

impl Serialize for Theta0Mode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl fmt::Display for Theta0Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Theta0Mode::PooledNonSegregating => f.write_str("pooled"),
            Theta0Mode::SitewiseNonSegregating => f.write_str("sitewise"),
            Theta0Mode::UserSupplied(v) => write!(f, "value={v}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullSpec {
    pub theta0: f64,
    pub mode: Theta0Mode,
    /// Number of non-segregating sites the value was computed from.
    pub source_sites: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pooled_frequencies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub fn theta0(a: &Alignment, mode: Theta0Mode) -> Result<NullSpec> {
    if let Theta0Mode::UserSupplied(v) = mode {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidArgument(format!("theta0 = {v} outside [0, 1]")));
        }
        return Ok(NullSpec {
            theta0: v,
            mode,
            source_sites: 0,
            pooled_frequencies: None,
            warning: None,
        });
    }
    let ns = classify_sites(a).non_segregating_sites();
    if ns.is_empty() {
        return Err(Error::NoNonSegregatingSites);
    }
    match mode {
        Theta0Mode::PooledNonSegregating => {
            let pooled = pooled_frequencies(a, &ns)?;
            Ok(NullSpec {
                theta0: pooled.gini_simpson(),
                mode,
                source_sites: ns.len(),
                pooled_frequencies: Some(pooled.0),
                warning: None,
            })
        }
        _ => {
            // every plug-in column is degenerate, so 1 - sum Pi^2 vanishes site by site
            Ok(NullSpec {
                theta0: 0.0,
                mode,
                source_sites: ns.len(),
                pooled_frequencies: None,
                warning: Some(
                    "sitewise plug-in frequencies at non-segregating sites are degenerate; theta0 is 0"
                        .into(),
                ),
            })
        }
    }
}

/// Symmetric `n x n` matrix of mismatch counts between sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMismatches {
    n: usize,
    sites: usize,
    counts: Vec<u32>,
}

impl PairwiseMismatches {
    pub fn from_alignment(a: &Alignment) -> Self {
        let n = a.n();
        let rows = a.rows();
        let counts: Vec<u32> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (0..n).map(move |j| mismatches(&rows[i], &rows[j])))
            .collect();
        Self {
            n,
            sites: a.sites(),
            counts,
        }
    }

    /// Single-threaded construction from raw rows, for use inside parallel
    /// replicate loops.
    pub fn from_rows(rows: &[Vec<u8>]) -> Self {
        let n = rows.len();
        let mut counts = vec![0u32; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = mismatches(&rows[i], &rows[j]);
                counts[i * n + j] = d;
                counts[j * n + i] = d;
            }
        }
        Self {
            n,
            sites: rows.first().map_or(0, Vec::len),
            counts,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts
            .chunks(self.n)
            .map(|r| r.iter().map(|&d| d as u64).sum())
            .collect()
    }

    /// Sum over unordered pairs.
    pub fn total(&self) -> u64 {
        self.row_sums().iter().sum::<u64>() / 2
    }

    /// `T2` per site per pair.
    pub fn t2(&self) -> f64 {
        self.total() as f64 / (self.sites as f64 * pairs(self.n))
    }

    /// Products of mismatch counts over ordered pairs of unordered sequence
    /// pairs, grouped by the number `c` of shared indices. Index `c` holds
    /// `S_c` in mismatch units (divide by `K^2` for kernel units).
    pub fn overlap_sums(&self) -> [u128; 3] {
        let n = self.n;
        let mut s1 = 0u128;
        let mut s2 = 0u128;
        let mut total = 0u128;
        for i in 0..n {
            let row = &self.counts[i * n..(i + 1) * n];
            let r: u128 = row.iter().map(|&d| d as u128).sum();
            let q: u128 = row.iter().map(|&d| (d as u128) * (d as u128)).sum();
            s1 += r * r - q;
            s2 += q;
            total += r;
        }
        let (s2, total) = (s2 / 2, total / 2);
        [total * total - s1 - s2, s1, s2]
    }
}

/// Jackknife variance of `T2` (kernel degree `m = 2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JackknifeEstimate {
    /// `(n-1)/n^2 C(n-1,2)^-2 sum_c (c n - m^2) S_c`, the variance of `T2`.
    pub value: f64,
    /// The same sum with prefactor `n^2 (n-1)`: `n^4` times `value`.
    pub value_n4_scale: f64,
    /// Variance of the mean of delete-one pseudo-values.
    pub oracle_value: f64,
    pub relative_deviation: f64,
    pub m: u32,
    /// `[S_0, S_1, S_2]` in kernel units.
    pub s_c: [f64; 3],
}

pub fn jackknife_var_t2(a: &Alignment) -> Result<JackknifeEstimate> {
    jackknife_from_mismatches(&PairwiseMismatches::from_alignment(a))
}

pub fn jackknife_from_mismatches(pm: &PairwiseMismatches) -> Result<JackknifeEstimate> {
    let n = pm.n();
    if n < 5 {
        return Err(Error::TooFewSequences { required: 5, found: n });
    }
    let k2 = (pm.sites() as f64).powi(2);
    let s = pm.overlap_sums();
    let ni = n as i128;
    let weighted: i128 = (0..3).map(|c| (c as i128 * ni - 4) * s[c] as i128).sum();
    let p1 = pairs(n - 1);
    let nf = n as f64;
    let sum = weighted as f64 / k2;
    let value = (nf - 1.0) / (nf * nf) * sum / (p1 * p1);

    let rows = pm.row_sums();
    let total = pm.total() as f64;
    let scale = pm.sites() as f64;
    let t = total / (scale * pairs(n));
    let pseudo: Vec<f64> = rows
        .iter()
        .map(|&r| {
            let t_minus = (total - r as f64) / (scale * p1);
            nf * t - (nf - 1.0) * t_minus
        })
        .collect();
    let mean = pseudo.iter().sum::<f64>() / nf;
    let oracle_value = pseudo.iter().map(|j| (j - mean).powi(2)).sum::<f64>() / (nf * (nf - 1.0));
    let relative_deviation = if oracle_value > 0.0 {
        (value - oracle_value).abs() / oracle_value
    } else {
        (value - oracle_value).abs()
    };
    Ok(JackknifeEstimate {
        value,
        value_n4_scale: value * nf.powi(4),
        oracle_value,
        relative_deviation,
        m: 2,
        s_c: [s[0] as f64 / k2, s[1] as f64 / k2, s[2] as f64 / k2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sidedness {
    Left,
    Right,
    #[default]
    Two,
}

impl FromStr for Sidedness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left" => Ok(Sidedness::Left),
            "right" => Ok(Sidedness::Right),
            "two" => Ok(Sidedness::Two),
            _ => Err(Error::InvalidArgument(format!("sidedness '{s}' is not left, right or two"))),
        }
    }
}

impl fmt::Display for Sidedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sidedness::Left => "left",
            Sidedness::Right => "right",
            Sidedness::Two => "two",
        })
    }
}

/// Standard normal tail probability of `t`. Two-sided values are
/// `2 min(left, right)` capped at 1.
pub fn tn_pvalue(t: f64, sided: Sidedness) -> f64 {
    match sided {
        Sidedness::Left => normal_cdf(t),
        Sidedness::Right => normal_sf(t),
        Sidedness::Two => (2.0 * normal_cdf(t).min(normal_sf(t))).min(1.0),
    }
}

/// Which sites enter `T2` and the `K` of the test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KMode {
    #[default]
    All,
    Segregating,
}

impl FromStr for KMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(KMode::All),
            "segregating" => Ok(KMode::Segregating),
            _ => Err(Error::InvalidArgument(format!("K mode '{s}' is not all or segregating"))),
        }
    }
}

impl fmt::Display for KMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KMode::All => "all",
            KMode::Segregating => "segregating",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum VarianceSource {
    Jackknife,
    /// Exact `Var T2` under a site model, resized to the `K` in use.
    Model { spec: ModelSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TnStatistic {
    pub t_n: f64,
    pub t_n_unscaled_variance: f64,
    pub t2: f64,
    pub theta0: f64,
    pub var_t2: f64,
    pub n: usize,
    pub k: usize,
}

/// `T_n` from its ingredients; `var_t2` is the variance of `T2` itself.
pub fn tn_from_parts(t2: f64, theta0: f64, var_t2: f64, n: usize, k: usize) -> Result<TnStatistic> {
    if !var_t2.is_finite() || var_t2 <= 0.0 {
        return Err(Error::NonPositiveVariance(var_t2));
    }
    let nk = n as f64 * k as f64;
    let t_n = nk.sqrt() * (t2 - theta0) / (nk * var_t2).sqrt();
    Ok(TnStatistic {
        t_n,
        t_n_unscaled_variance: nk.sqrt() * (t2 - theta0) / var_t2.sqrt(),
        t2,
        theta0,
        var_t2,
        n,
        k,
    })
}

fn sites_for(a: &Alignment, k_mode: KMode) -> Result<Alignment> {
    match k_mode {
        KMode::All => Ok(a.clone()),
        KMode::Segregating => {
            let seg = classify_sites(a).segregating_sites();
            if seg.is_empty() {
                return Err(Error::NoPolymorphism);
            }
            a.select_sites(&seg)
        }
    }
}

pub fn tn_statistic(
    a: &Alignment,
    null: &NullSpec,
    variance: &VarianceSource,
    k_mode: KMode,
) -> Result<TnStatistic> {
    let used = sites_for(a, k_mode)?;
    let pm = PairwiseMismatches::from_alignment(&used);
    let var = match variance {
        VarianceSource::Jackknife => jackknife_from_mismatches(&pm)?.value,
        VarianceSource::Model { spec } => model_variance(spec, used.sites(), used.n())?.0,
    };
    tn_from_parts(pm.t2(), null.theta0, var, used.n(), used.sites())
}

fn model_variance(spec: &ModelSpec, k: usize, n: usize) -> Result<(f64, MomentSet)> {
    let spec = if spec.sites() == k { spec.clone() } else { spec.with_sites(k)? };
    let model = spec.build()?;
    Ok((exact_var_t2(&model, n)?, moment_set(&model)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionDirection {
    Negative,
    Positive,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyShift {
    pub value: f64,
    pub direction: SelectionDirection,
    pub pooled_segregating: Vec<f64>,
    pub pooled_non_segregating: Vec<f64>,
}

/// Gini-Simpson index of segregating minus non-segregating pooled frequencies.
pub fn frequency_shift_from_vectors(segregating: &[f64], non_segregating: &[f64]) -> Result<FrequencyShift> {
    if segregating.len() != non_segregating.len() {
        return Err(Error::LengthMismatch(segregating.len(), non_segregating.len()));
    }
    let gs = |p: &[f64]| 1.0 - p.iter().map(|x| x * x).sum::<f64>();
    let value = gs(segregating) - gs(non_segregating);
    let direction = if value < 0.0 {
        SelectionDirection::Negative
    } else if value > 0.0 {
        SelectionDirection::Positive
    } else {
        SelectionDirection::None
    };
    Ok(FrequencyShift {
        value,
        direction,
        pooled_segregating: segregating.to_vec(),
        pooled_non_segregating: non_segregating.to_vec(),
    })
}

pub fn frequency_shift(a: &Alignment) -> Result<FrequencyShift> {
    let cls = classify_sites(a);
    let (seg, ns) = (cls.segregating_sites(), cls.non_segregating_sites());
    if seg.is_empty() {
        return Err(Error::NoPolymorphism);
    }
    if ns.is_empty() {
        return Err(Error::NoNonSegregatingSites);
    }
    frequency_shift_from_vectors(
        pooled_frequencies(a, &seg)?.as_slice(),
        pooled_frequencies(a, &ns)?.as_slice(),
    )
}

/// RNG for replicate `index` of a resampling or simulation run: the seed
/// selects the key and the index selects an independent stream, so results
/// do not depend on how replicates are scheduled.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub const MIN_BOOTSTRAP_REPLICATES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapResult {
    pub p_value: f64,
    pub observed_d: f64,
    pub center: f64,
    pub replicates: usize,
    /// Replicates where `D` was undefined (no segregating site drawn).
    pub undefined_replicates: usize,
    pub degenerate: bool,
    pub seed: u64,
    pub scheme: &'static str,
    pub centering: &'static str,
}

/// Two-sided bootstrap p-value for Tajima's D.
///
/// Site columns are resampled with replacement; each replicate recomputes `D`
/// from its summed pair differences and segregating count. The null
/// distribution is the bootstrap distribution shifted to mean zero, so
/// `p = #{ |D_b - mean(D_b)| >= |D_obs| } / B_defined`.
pub fn bootstrap_d(
    a: &Alignment,
    replicates: usize,
    seed: u64,
    plugin: ThetaSquaredPlugin,
) -> Result<BootstrapResult> {
    if replicates < MIN_BOOTSTRAP_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_BOOTSTRAP_REPLICATES} replicates, got {replicates}"
        )));
    }
    let n = a.n();
    let columns: Vec<(u64, bool)> = a
        .all_column_counts()
        .iter()
        .map(|c| {
            let d = pair_diff_count(c);
            (d, d > 0)
        })
        .collect();
    let total: u64 = columns.iter().map(|c| c.0).sum();
    let seg = columns.iter().filter(|c| c.1).count();
    let observed = tajima_from_counts(total, seg, n, plugin)?.d;

    let k = columns.len();
    let draws: Vec<Option<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = replicate_rng(seed, b);
            let (mut tot, mut s) = (0u64, 0usize);
            for _ in 0..k {
                let (d, is_seg) = columns[rng.random_range(0..k)];
                tot += d;
                s += is_seg as usize;
            }
            tajima_from_counts(tot, s, n, plugin).ok().map(|r| r.d)
        })
        .collect();
    let defined: Vec<f64> = draws.iter().flatten().copied().collect();
    let undefined_replicates = replicates - defined.len();
    let center = if defined.is_empty() {
        f64::NAN
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    };
    let degenerate = defined.windows(2).all(|w| w[0] == w[1]);
    let p_value = if degenerate {
        1.0
    } else {
        let hits = defined
            .iter()
            .filter(|&&d| (d - center).abs() >= observed.abs())
            .count();
        hits as f64 / defined.len() as f64
    };
    Ok(BootstrapResult {
        p_value,
        observed_d: observed,
        center,
        replicates,
        undefined_replicates,
        degenerate,
        seed,
        scheme: "site_columns_with_replacement",
        centering: "bootstrap_mean",
    })
}

/// Everything `analyze` needs besides the alignment. Echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisConfig {
    pub t2_mode: T2Normalization,
    pub theta0_mode: Theta0Mode,
    pub variance: VarianceSource,
    pub k_mode: KMode,
    pub sided: Sidedness,
    pub alpha: f64,
    /// 0 disables the bootstrap.
    pub bootstrap_replicates: usize,
    pub seed: u64,
    pub theta_squared: ThetaSquaredPlugin,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            t2_mode: T2Normalization::PerSitePerPair,
            theta0_mode: Theta0Mode::PooledNonSegregating,
            variance: VarianceSource::Jackknife,
            k_mode: KMode::All,
            sided: Sidedness::Two,
            alpha: 0.05,
            bootstrap_replicates: 0,
            seed: 0,
            theta_squared: ThetaSquaredPlugin::Unbiased,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!("alpha = {} outside (0, 1)", self.alpha)));
        }
        if self.bootstrap_replicates != 0 && self.bootstrap_replicates < MIN_BOOTSTRAP_REPLICATES {
            return Err(Error::InvalidArgument(format!(
                "bootstrap needs at least {MIN_BOOTSTRAP_REPLICATES} replicates, got {}",
                self.bootstrap_replicates
            )));
        }
        if let Theta0Mode::UserSupplied(v) = self.theta0_mode {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("theta0 = {v} outside [0, 1]")));
            }
        }
        if let VarianceSource::Model { spec } = &self.variance {
            spec.build()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputSummary {
    pub n: usize,
    pub total_columns: usize,
    pub masked_columns: usize,
    pub sites: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceBlock {
    pub source: &'static str,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jackknife: Option<JackknifeEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentSet>,
    pub note: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestBlock {
    #[serde(flatten)]
    pub statistic: TnStatistic,
    pub k_mode: KMode,
    pub sided: Sidedness,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TajimaBlock {
    pub d1: f64,
    pub var_d1: f64,
    pub d: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapResult>,
}

/// A block that is either computed or undefined with a reason.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Outcome<T> {
    Defined(T),
    Undefined { undefined: String },
}

impl<T> Outcome<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Outcome::Defined(v),
            Err(e) => Outcome::Undefined {
                undefined: e.to_string(),
            },
        }
    }

    pub fn defined(&self) -> Option<&T> {
        match self {
            Outcome::Defined(v) => Some(v),
            Outcome::Undefined { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NeutralityReport {
    pub schema_version: u32,
    pub library_version: &'static str,
    pub input: InputSummary,
    pub estimators: EstimatorSummary,
    #[serde(rename = "T2")]
    pub t2: Outcome<crate::estimators::T2Value>,
    pub null: Outcome<NullSpec>,
    pub variance: Outcome<VarianceBlock>,
    pub test: Outcome<TestBlock>,
    pub tajima: Outcome<TajimaBlock>,
    pub frequency_shift: Outcome<FrequencyShift>,
    pub warnings: Vec<String>,
    pub config: AnalysisConfig,
}

impl NeutralityReport {
    pub fn test_defined(&self) -> bool {
        self.test.defined().is_some()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub const TSV_HEADER: &'static str =
        "n\tK\tS\tS_star\tT2\ttheta0\tvar_T2\tT_n\tp_value\tD\tfrequency_shift";

    /// One tab-separated line matching [`TSV_HEADER`](Self::TSV_HEADER);
    /// undefined values are `NA`.
    pub fn tsv_line(&self) -> String {
        let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let test = self.test.defined();
        [
            self.input.n.to_string(),
            test.map_or(self.input.sites, |t| t.statistic.k).to_string(),
            self.estimators.s.to_string(),
            self.estimators.s_star.to_string(),
            na(test.map(|t| t.statistic.t2).or(Some(self.estimators.t2_per_site_pair))),
            na(self.null.defined().map(|v| v.theta0)),
            na(self.variance.defined().map(|v| v.value)),
            na(test.map(|t| t.statistic.t_n)),
            na(test.map(|t| t.p_value)),
            na(self.tajima.defined().map(|t| t.d)),
            na(self.frequency_shift.defined().map(|f| f.value)),
        ]
        .join("\t")
    }
}

const JACKKNIFE_NOTE: &str =
    "the jackknife variance is positively biased, so p-values lean conservative";

pub fn analyze(a: &Alignment, config: &AnalysisConfig) -> Result<NeutralityReport> {
    config.validate()?;
    let mut warnings = Vec::new();
    let estimators = summarize(a, config.theta_squared)?;
    if a.masked_columns() > 0 {
        warnings.push(format!(
            "{} column(s) with non-ACGT characters were excluded",
            a.masked_columns()
        ));
    }

    let null = theta0(a, config.theta0_mode);
    if let Ok(NullSpec {
        warning: Some(w), ..
    }) = &null
    {
        warnings.push(w.clone());
    }

    let used = sites_for(a, config.k_mode);
    let variance = used.as_ref().map_err(Clone::clone).and_then(|u| {
        let pm = PairwiseMismatches::from_alignment(u);
        let block = match &config.variance {
            VarianceSource::Jackknife => {
                let jk = jackknife_from_mismatches(&pm)?;
                VarianceBlock {
                    source: "jackknife",
                    value: jk.value,
                    jackknife: Some(jk),
                    moments: None,
                    note: JACKKNIFE_NOTE,
                }
            }
            VarianceSource::Model { spec } => {
                let (value, moments) = model_variance(spec, u.sites(), u.n())?;
                VarianceBlock {
                    source: "model",
                    value,
                    jackknife: None,
                    moments: Some(moments),
                    note: "exact variance of T2 under the supplied site model",
                }
            }
        };
        Ok((pm.t2(), block))
    });

    let test = match (&null, &variance, &used) {
        (Ok(nl), Ok((t2v, block)), Ok(u)) => {
            if estimators.s == 0 {
                Err(Error::NoPolymorphism)
            } else {
                tn_from_parts(*t2v, nl.theta0, block.value, u.n(), u.sites()).map(|st| {
                    let p_value = tn_pvalue(st.t_n, config.sided);
                    TestBlock {
                        statistic: st,
                        k_mode: config.k_mode,
                        sided: config.sided,
                        p_value,
                        alpha: config.alpha,
                        reject: p_value < config.alpha,
                    }
                })
            }
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => Err(e.clone()),
    };

    let tajima = crate::estimators::tajima_d(a, config.theta_squared).and_then(|r| {
        let bootstrap = if config.bootstrap_replicates > 0 {
            Some(bootstrap_d(a, config.bootstrap_replicates, config.seed, config.theta_squared)?)
        } else {
            None
        };
        Ok(TajimaBlock {
            d1: r.d1,
            var_d1: r.var_d1,
            d: r.d,
            bootstrap,
        })
    });

    Ok(NeutralityReport {
        schema_version: SCHEMA_VERSION,
        library_version: env!("CARGO_PKG_VERSION"),
        input: InputSummary {
            n: a.n(),
            total_columns: a.total_columns(),
            masked_columns: a.masked_columns(),
            sites: a.sites(),
        },
        estimators,
        t2: Outcome::from_result(t2(a, config.t2_mode)),
        null: Outcome::from_result(null),
        variance: Outcome::from_result(variance.map(|(_, b)| b)),
        test: Outcome::from_result(test),
        tajima: Outcome::from_result(tajima),
        frequency_shift: Outcome::from_result(frequency_shift(a)),
        warnings,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{self, worked_example, turtle_like_alignment};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_alignment(n: usize, k: usize, seed: u64) -> Alignment {
        let mut rng = replicate_rng(seed, 0);
        let rows = (0..n)
            .map(|_| (0..k).map(|_| rand::Rng::random_range(&mut rng, 0..4u8)).collect())
            .collect();
        Alignment::from_unlabeled(rows, 4).unwrap()
    }

    #[test]
    fn theta0_modes() {
        let t = turtle_like_alignment();
        let pooled = theta0(&t, Theta0Mode::PooledNonSegregating).unwrap();
        assert_relative_eq!(pooled.theta0, 0.706_493_74, epsilon = 1e-12);
        assert_eq!(pooled.source_sites, 10_000);
        let sw = theta0(&t, Theta0Mode::SitewiseNonSegregating).unwrap();
        assert_eq!(sw.theta0, 0.0);
        assert!(sw.warning.is_some());
        assert_eq!(theta0(&t, Theta0Mode::UserSupplied(0.3)).unwrap().theta0, 0.3);
        assert!(theta0(&t, Theta0Mode::UserSupplied(1.5)).is_err());

        let uniform = Alignment::from_unlabeled(vec![vec![0, 1, 2, 3]; 3], 4).unwrap();
        assert_eq!(theta0(&uniform, Theta0Mode::PooledNonSegregating).unwrap().theta0, 0.75);
        assert_eq!(
            theta0(&worked_example(), Theta0Mode::PooledNonSegregating),
            Err(Error::NoNonSegregatingSites)
        );
    }

    #[test]
    fn theta0_mode_parsing() {
        assert_eq!("pooled".parse::<Theta0Mode>().unwrap(), Theta0Mode::PooledNonSegregating);
        assert_eq!("value=0.25".parse::<Theta0Mode>().unwrap(), Theta0Mode::UserSupplied(0.25));
        assert!("value=2".parse::<Theta0Mode>().is_err());
        assert!("mean".parse::<Theta0Mode>().is_err());
        for m in [Theta0Mode::SitewiseNonSegregating, Theta0Mode::UserSupplied(0.5)] {
            assert_eq!(m.to_string().parse::<Theta0Mode>().unwrap(), m);
        }
    }

    fn brute_force_overlaps(pm: &PairwiseMismatches) -> [u128; 3] {
        let n = pm.n();
        let pairs: Vec<(usize, usize)> =
            (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let mut s = [0u128; 3];
        for &(a, b) in &pairs {
            for &(c, d) in &pairs {
                let shared = [c, d].iter().filter(|x| **x == a || **x == b).count();
                s[shared] += pm.get(a, b) as u128 * pm.get(c, d) as u128;
            }
        }
        s
    }

    #[test]
    fn overlap_sums_match_enumeration() {
        for (n, seed) in [(5, 1), (6, 2), (7, 3), (8, 4)] {
            let pm = PairwiseMismatches::from_alignment(&random_alignment(n, 9, seed));
            assert_eq!(pm.overlap_sums(), brute_force_overlaps(&pm));
        }
    }

    #[test]
    fn jackknife_identical_sequences() {
        let a = Alignment::from_unlabeled(vec![vec![0, 1, 2]; 6], 4).unwrap();
        let jk = jackknife_var_t2(&a).unwrap();
        assert_eq!(jk.value, 0.0);
        assert_eq!(jk.oracle_value, 0.0);
        assert!(matches!(
            jackknife_var_t2(&random_alignment(4, 5, 1)),
            Err(Error::TooFewSequences { required: 5, .. })
        ));
    }

    #[test]
    fn jackknife_closed_form_matches_pseudo_values() {
        for seed in 0..20 {
            let jk = jackknife_var_t2(&random_alignment(5 + seed as usize, 30, seed)).unwrap();
            assert!(jk.oracle_value >= 0.0);
            assert_relative_eq!(jk.value, jk.oracle_value, max_relative = 1e-10);
            assert_relative_eq!(jk.value_n4_scale, jk.value * ((5 + seed) as f64).powi(4));
        }
    }

    #[test]
    fn pvalue_examples() {
        assert_eq!(tn_pvalue(0.0, Sidedness::Two), 1.0);
        assert!((tn_pvalue(1.959964, Sidedness::Two) - 0.05).abs() < 1e-6);
        let p = tn_pvalue(-9.14, Sidedness::Left);
        assert!((2e-20..=5e-20).contains(&p), "{p}");
        for t in [-3.0, -0.4, 0.0, 1.1, 7.5] {
            assert_eq!(tn_pvalue(-t, Sidedness::Left), tn_pvalue(t, Sidedness::Right));
        }
    }

    proptest! {
        #[test]
        fn pvalue_relations(t in -12.0f64..12.0) {
            let left = tn_pvalue(t, Sidedness::Left);
            let right = tn_pvalue(t, Sidedness::Right);
            prop_assert_eq!(tn_pvalue(-t, Sidedness::Left), right);
            prop_assert_eq!(tn_pvalue(t, Sidedness::Two), (2.0 * left.min(right)).min(1.0));
            prop_assert!((0.0..=1.0).contains(&tn_pvalue(t, Sidedness::Two)));
        }

        #[test]
        fn pvalue_monotone(a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(tn_pvalue(lo, Sidedness::Left) <= tn_pvalue(hi, Sidedness::Left));
            prop_assert!(tn_pvalue(lo, Sidedness::Right) >= tn_pvalue(hi, Sidedness::Right));
            prop_assert!(tn_pvalue(hi.abs(), Sidedness::Two) <= tn_pvalue(lo.abs().min(hi.abs()), Sidedness::Two));
        }

        #[test]
        fn tn_sign_follows_difference(t2 in 0.0f64..1.0, th in 0.0f64..1.0, v in 1e-8f64..1.0) {
            let s = tn_from_parts(t2, th, v, 10, 20).unwrap();
            prop_assert_eq!(s.t_n.signum() * (t2 - th).signum() >= 0.0, true);
        }

        #[test]
        fn jackknife_oracle_nonnegative(rows in proptest::collection::vec(proptest::collection::vec(0u8..4, 6), 5..9)) {
            let a = Alignment::from_unlabeled(rows, 4).unwrap();
            let jk = jackknife_var_t2(&a).unwrap();
            prop_assert!(jk.oracle_value >= 0.0);
            prop_assert!(jk.value >= 0.0);
        }
    }

    #[test]
    fn tn_basics() {
        assert_eq!(tn_from_parts(0.4, 0.4, 0.01, 10, 10).unwrap().t_n, 0.0);
        assert!(tn_from_parts(0.4, 0.3, 0.0, 10, 10).is_err());
        let s = tn_from_parts(0.5, 0.3, 0.01, 4, 25).unwrap();
        assert_relative_eq!(s.t_n, 2.0, epsilon = 1e-12);
        assert_relative_eq!(s.t_n_unscaled_variance, 20.0, epsilon = 1e-12);
    }

    #[test]
    fn frequency_shift_examples() {
        let t = frequency_shift_from_vectors(&fixtures::TURTLE_SEGREGATING, &fixtures::TURTLE_NON_SEGREGATING)
            .unwrap();
        assert!((t.value + 0.4615).abs() < 1e-4, "{}", t.value);
        assert_eq!(t.direction, SelectionDirection::Negative);
        let h = frequency_shift_from_vectors(&fixtures::HIV_SEGREGATING, &fixtures::HIV_NON_SEGREGATING)
            .unwrap();
        assert!((h.value + 0.0804).abs() < 1e-4, "{}", h.value);
        let same = frequency_shift_from_vectors(&[0.5, 0.5], &[0.5, 0.5]).unwrap();
        assert_eq!(same.value, 0.0);
        assert!(frequency_shift(&worked_example()).is_err());
        let turtle = frequency_shift(&turtle_like_alignment()).unwrap();
        assert_relative_eq!(turtle.pooled_segregating[0], 0.5);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let a = random_alignment(8, 40, 11);
        let b1 = bootstrap_d(&a, 200, 42, ThetaSquaredPlugin::Unbiased).unwrap();
        let b2 = bootstrap_d(&a, 200, 42, ThetaSquaredPlugin::Unbiased).unwrap();
        assert_eq!(b1, b2);
        assert!((0.0..=1.0).contains(&b1.p_value));
        assert!(bootstrap_d(&a, 50, 42, ThetaSquaredPlugin::Unbiased).is_err());
        let mono = Alignment::from_unlabeled(vec![vec![0, 1]; 5], 4).unwrap();
        assert_eq!(
            bootstrap_d(&mono, 100, 1, ThetaSquaredPlugin::Unbiased),
            Err(Error::NoPolymorphism)
        );
    }

    #[test]
    fn analyze_worked_example_and_monomorphic() {
        let r = analyze(&worked_example(), &AnalysisConfig::default()).unwrap();
        assert_eq!(r.estimators.s, 16);
        assert_eq!(r.estimators.t2_per_segregating, Some(4.9375));
        assert!((r.estimators.d1 - 0.22).abs() < 5e-3);
        // every worked-example column is segregating, so the pooled null is undefined
        assert!(!r.test_defined());

        let mono = Alignment::from_unlabeled(vec![vec![0, 1, 2, 3]; 6], 4).unwrap();
        let r = analyze(&mono, &AnalysisConfig::default()).unwrap();
        assert_eq!(r.estimators.s, 0);
        assert!(r.tajima.defined().is_none());
        assert!(!r.test_defined());
        assert!(r.to_json().contains("\"undefined\""));
    }

    #[test]
    fn analyze_is_reproducible() {
        let a = random_alignment(12, 60, 5);
        let mut rows = a.rows().to_vec();
        for r in rows.iter_mut() {
            r.extend([0u8, 1, 2, 3, 0, 0]);
        }
        let a = Alignment::from_unlabeled(rows, 4).unwrap();
        let config = AnalysisConfig {
            bootstrap_replicates: 200,
            seed: 9,
            ..Default::default()
        };
        let r1 = analyze(&a, &config).unwrap().to_json();
        let r2 = analyze(&a, &config).unwrap().to_json();
        assert_eq!(r1, r2);
        let r = analyze(&a, &config).unwrap();
        assert!(r.test_defined());
        assert_eq!(r.tsv_line().split('\t').count(), NeutralityReport::TSV_HEADER.split('\t').count());
    }

    #[test]
    fn segregating_k_mode_uses_segregating_sites() {
        let t = turtle_like_alignment();
        let mut rows = t.rows().to_vec();
        // add three more sequences so the jackknife is defined
        rows.push(rows[0].clone());
        rows.push(rows[1].clone());
        rows.push(rows[0].clone());
        let a = Alignment::from_unlabeled(rows, 4).unwrap();
        let null = theta0(&a, Theta0Mode::PooledNonSegregating).unwrap();
        let all = tn_statistic(&a, &null, &VarianceSource::Jackknife, KMode::All).unwrap();
        let seg = tn_statistic(&a, &null, &VarianceSource::Jackknife, KMode::Segregating).unwrap();
        assert_eq!(all.k, 10_007);
        assert_eq!(seg.k, 7);
        assert!(seg.t2 > all.t2);
    }
}
