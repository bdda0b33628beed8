use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input: no FASTA records found")]
    EmptyInput,

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("sequence '{label}' has length {found}, expected {expected}")]
    RaggedRows {
        label: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate sequence label '{0}'")]
    DuplicateLabel(String),

    #[error("need at least {required} sequences, found {found}")]
    TooFewSequences { required: usize, found: usize },

    #[error("no sites left after masking non-ACGT columns")]
    NoSites,

    #[error("site set is empty")]
    EmptySiteSet,

    #[error("site index {index} out of range (K = {sites})")]
    SiteOutOfRange { index: usize, sites: usize },

    #[error("sequence index {index} out of range (n = {n})")]
    SequenceOutOfRange { index: usize, n: usize },

    #[error("kernel is defined on distinct sequences only (i = j = {0})")]
    SameSequence(usize),

    #[error("sequence lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("no segregating sites: statistic undefined")]
    NoPolymorphism,

    #[error("no non-segregating sites available for the null frequencies")]
    NoNonSegregatingSites,

    #[error("variance plug-in is not positive ({0})")]
    NonPositiveVariance(f64),

    #[error("degenerate kernel: sigma1 = 0, the U-statistic has no first-order projection")]
    DegenerateKernel,

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("general fourth-moment path supports at most {cap} sites (K = {sites})")]
    TooManySites { sites: usize, cap: usize },

    #[error("resource cap exceeded: {cells} cells > {cap}")]
    ResourceCap { cells: u128, cap: u128 },
}
