//! Neutrality testing for aligned DNA samples based on the mean pairwise
//! difference U-statistic.
//!
//! The crate covers alignment ingestion and site classification, the classical
//! estimators and Tajima's D, exact moments of the U-statistic under
//! independent or Markov site models, the jackknife-based test with its
//! p-values, and Monte Carlo studies of the normal approximation.

#![allow(clippy::needless_range_loop)]

pub mod alignment;
pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod inference;
pub mod model;
pub mod numeric;
pub mod oracle;
pub mod simulator;
pub mod ustat;

pub use alignment::{
    classify_sites, parse_fasta, pooled_frequencies, sitewise_frequencies, Alignment, Nucleotide,
    PooledFrequencies, SiteClass, SiteClassification, SiteFrequencyTable,
};
pub use error::{Error, Result};
pub use estimators::{
    summarize, t2, tajima_d, EstimatorSummary, T2Normalization, T2Value, TajimaResult,
    ThetaSquaredPlugin,
};
pub use model::{IndependentSitesModel, MarkovSitesModel, Mixing, Model, ModelSpec, SiteModel};
pub use ustat::{MomentSet, RateDescriptor};
pub use inference::{
    analyze, bootstrap_d, frequency_shift, jackknife_var_t2, theta0, tn_pvalue, tn_statistic,
    AnalysisConfig, JackknifeEstimate, KMode, NeutralityReport, NullSpec, Sidedness, Theta0Mode,
    VarianceSource,
};
pub use simulator::{
    clt_study, power_study, rate_study, sample_alignment, SimConfig, SimStudyResult, Statistic,
    StudyOutput, StudySpec,
};
