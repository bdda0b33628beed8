//! Classical estimators of the mutation parameter (Watterson's S/a_n, mean
//! pairwise differences, singleton-based) and Tajima's D.
//!
//! Mean pairwise differences come in three normalizations. `PerSitePerPair`
//! is the U-statistic used by the neutrality test; `PerPair` is the
//! per-sequence scale used in Tajima's D; `PerSegregatingSite` divides the
//! summed per-site pair differences by the number of segregating sites, the
//! convention of the classic five-gene worked example (79 / 16).

use serde::Serialize;

use crate::alignment::{classify_sites, pair_diff_count, Alignment};
use crate::error::{Error, Result};
use crate::numeric::pairs;

/// Fraction of sites at which sequences `i` and `j` differ.
pub fn hamming_fraction(a: &Alignment, i: usize, j: usize) -> Result<f64> {
    let n = a.n();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::SequenceOutOfRange { index: idx, n });
        }
    }
    if i == j {
        return Err(Error::SameSequence(i));
    }
    Ok(mismatches(a.row(i), a.row(j)) as f64 / a.sites() as f64)
}

#[inline]
pub(crate) fn mismatches(x: &[u8], y: &[u8]) -> u32 {
    x.iter().zip(y).map(|(a, b)| (a != b) as u32).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum T2Normalization {
    #[serde(rename = "per_site_pair")]
    PerSitePerPair,
    #[serde(rename = "per_segregating")]
    PerSegregatingSite,
    #[serde(rename = "per_pair")]
    PerPair,
}

impl T2Normalization {
    pub fn as_str(self) -> &'static str {
        match self {
            T2Normalization::PerSitePerPair => "per_site_pair",
            T2Normalization::PerSegregatingSite => "per_segregating",
            T2Normalization::PerPair => "per_pair",
        }
    }
}

impl std::str::FromStr for T2Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_site_pair" | "per-site-pair" => Ok(T2Normalization::PerSitePerPair),
            "per_pair" | "per-pair" => Ok(T2Normalization::PerPair),
            "per_segregating" | "per-segregating" => Ok(T2Normalization::PerSegregatingSite),
            _ => Err(Error::InvalidArgument(format!(
                "T2 mode '{s}' is not per-site-pair, per-pair or per-segregating"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct T2Value {
    pub value: f64,
    pub normalization: T2Normalization,
}

/// Sum over sites of the number of differing sequence pairs.
pub fn total_pair_differences(a: &Alignment) -> u64 {
    (0..a.sites())
        .map(|k| pair_diff_count(&a.column_counts(k)))
        .sum()
}

pub fn t2(a: &Alignment, mode: T2Normalization) -> Result<T2Value> {
    let total = total_pair_differences(a) as f64;
    let value = match mode {
        T2Normalization::PerSitePerPair => total / (a.sites() as f64 * pairs(a.n())),
        T2Normalization::PerPair => total / pairs(a.n()),
        T2Normalization::PerSegregatingSite => {
            let s = classify_sites(a).segregating;
            if s == 0 {
                return Err(Error::NoPolymorphism);
            }
            total / s as f64
        }
    };
    Ok(T2Value {
        value,
        normalization: mode,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarmonicCoefficients {
    pub a_n: f64,
    pub b_n: f64,
}

/// `a_n = sum_{j<n} 1/j` and `b_n = sum_{j<n} 1/j^2`.
pub fn harmonic_coefficients(n: usize) -> Result<HarmonicCoefficients> {
    if n < 2 {
        return Err(Error::TooFewSequences { required: 2, found: n });
    }
    let (a_n, b_n) = (1..n).fold((0.0, 0.0), |(a, b), j| {
        let j = j as f64;
        (a + 1.0 / j, b + 1.0 / (j * j))
    });
    Ok(HarmonicCoefficients { a_n, b_n })
}

/// Watterson's estimator `S / a_n`.
pub fn t1_watterson(segregating: usize, n: usize) -> Result<f64> {
    Ok(segregating as f64 / harmonic_coefficients(n)?.a_n)
}

/// Singleton-based estimator, using the convention `(n - 1) / n * S*`.
/// Reported descriptively only.
pub fn t3_singleton(singletons: usize, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewSequences { required: 2, found: n });
    }
    Ok((n as f64 - 1.0) / n as f64 * singletons as f64)
}

pub const T3_CONVENTION: &str = "(n-1)/n * S*";

/// How theta^2 is estimated in the variance of D1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaSquaredPlugin {
    /// `S(S-1) / (a_n^2 + b_n)`.
    #[default]
    Unbiased,
    /// `(S / a_n)^2`.
    Squared,
}

/// Approximate variance of `D1 = T2 - T1`:
/// `(n+1)/(3(n-1)) theta + [2(n^2+n+3)/(9n(n-1)) - (n+2)/(a_n n) + b_n/a_n^2] theta^2`.
///
/// The caller decides what a non-positive result means; see [`tajima_d`].
pub fn tajima_var_d1(theta: f64, theta_sq: f64, n: usize) -> Result<f64> {
    if !(theta >= 0.0 && theta_sq >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta plug-ins must be nonnegative (theta = {theta}, theta^2 = {theta_sq})"
        )));
    }
    let HarmonicCoefficients { a_n, b_n } = harmonic_coefficients(n)?;
    let nf = n as f64;
    let c1 = (nf + 1.0) / (3.0 * (nf - 1.0));
    let c2 = 2.0 * (nf * nf + nf + 3.0) / (9.0 * nf * (nf - 1.0)) - (nf + 2.0) / (a_n * nf)
        + b_n / (a_n * a_n);
    Ok(c1 * theta + c2 * theta_sq)
}

/// Plug-in `(theta, theta^2)` from a segregating-site count.
pub fn theta_plugins(segregating: usize, n: usize, plugin: ThetaSquaredPlugin) -> Result<(f64, f64)> {
    let HarmonicCoefficients { a_n, b_n } = harmonic_coefficients(n)?;
    let s = segregating as f64;
    let theta = s / a_n;
    let theta_sq = match plugin {
        ThetaSquaredPlugin::Unbiased => s * (s - 1.0).max(0.0) / (a_n * a_n + b_n),
        ThetaSquaredPlugin::Squared => theta * theta,
    };
    Ok((theta, theta_sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TajimaResult {
    pub d1: f64,
    pub var_d1: f64,
    pub d: f64,
}

/// Tajima's D from sufficient statistics: total pair differences, `S` and `n`.
pub fn tajima_from_counts(
    total_pair_diffs: u64,
    segregating: usize,
    n: usize,
    plugin: ThetaSquaredPlugin,
) -> Result<TajimaResult> {
    if segregating == 0 {
        return Err(Error::NoPolymorphism);
    }
    let t2_per_pair = total_pair_diffs as f64 / pairs(n);
    let (theta, theta_sq) = theta_plugins(segregating, n, plugin)?;
    let d1 = t2_per_pair - theta;
    let var_d1 = tajima_var_d1(theta, theta_sq, n)?;
    if var_d1.is_nan() || var_d1 <= 0.0 {
        return Err(Error::NonPositiveVariance(var_d1));
    }
    Ok(TajimaResult {
        d1,
        var_d1,
        d: d1 / var_d1.sqrt(),
    })
}

pub fn tajima_d(a: &Alignment, plugin: ThetaSquaredPlugin) -> Result<TajimaResult> {
    let s = classify_sites(a).segregating;
    tajima_from_counts(total_pair_differences(a), s, a.n(), plugin)
}

/// The estimator block of an analysis report. Undefined quantities are `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "S_star")]
    pub s_star: usize,
    pub a_n: f64,
    pub b_n: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2_per_pair")]
    pub t2_per_pair: f64,
    #[serde(rename = "T2_per_site_pair")]
    pub t2_per_site_pair: f64,
    #[serde(rename = "T2_per_segregating")]
    pub t2_per_segregating: Option<f64>,
    #[serde(rename = "T3")]
    pub t3: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "var_D1")]
    pub var_d1: f64,
    #[serde(rename = "D")]
    pub d: Option<f64>,
}

pub fn summarize(a: &Alignment, plugin: ThetaSquaredPlugin) -> Result<EstimatorSummary> {
    let n = a.n();
    let cls = classify_sites(a);
    let total = total_pair_differences(a);
    let HarmonicCoefficients { a_n, b_n } = harmonic_coefficients(n)?;
    let t1 = t1_watterson(cls.segregating, n)?;
    let t2_per_pair = total as f64 / pairs(n);
    let (theta, theta_sq) = theta_plugins(cls.segregating, n, plugin)?;
    let var_d1 = tajima_var_d1(theta, theta_sq, n)?;
    let d = tajima_from_counts(total, cls.segregating, n, plugin).ok().map(|r| r.d);
    Ok(EstimatorSummary {
        s: cls.segregating,
        s_star: cls.singletons,
        a_n,
        b_n,
        t1,
        t2_per_pair,
        t2_per_site_pair: t2_per_pair / a.sites() as f64,
        t2_per_segregating: (cls.segregating > 0).then(|| total as f64 / cls.segregating as f64),
        t3: t3_singleton(cls.singletons, n)?,
        d1: t2_per_pair - t1,
        var_d1,
        d,
    })
}
