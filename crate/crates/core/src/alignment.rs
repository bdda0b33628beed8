//! Aligned DNA sequences, site classification and frequency tables.
//!
//! Rows are stored as category indices (`A=0, C=1, G=2, T=3` for nucleotide
//! data). Any column holding a character outside `ACGT` is masked at parse
//! time; the original 1-based column positions of the retained sites are kept
//! for reporting.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use serde::Serialize;

use crate::error::{Error, Result};

pub const NUCLEOTIDES: [u8; 4] = *b"ACGT";

/// One of the four canonical nucleotide codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Nucleotide {
    A,
    C,
    G,
    T,
}

impl Nucleotide {
    pub const ALL: [Nucleotide; 4] = [Nucleotide::A, Nucleotide::C, Nucleotide::G, Nucleotide::T];

    /// Case-insensitive decoding; `None` for gaps, `N` and IUPAC ambiguity codes.
    pub fn from_byte(b: u8) -> Option<Self> {
        match b.to_ascii_uppercase() {
            b'A' => Some(Nucleotide::A),
            b'C' => Some(Nucleotide::C),
            b'G' => Some(Nucleotide::G),
            b'T' => Some(Nucleotide::T),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        NUCLEOTIDES[self.index()] as char
    }
}

/// An `n x K` matrix of category codes with row labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    labels: Vec<String>,
    rows: Vec<Vec<u8>>,
    categories: usize,
    original_columns: Vec<usize>,
    total_columns: usize,
}

impl Alignment {
    /// Builds an alignment from already-encoded rows (codes `< categories`).
    pub fn from_codes(labels: Vec<String>, rows: Vec<Vec<u8>>, categories: usize) -> Result<Self> {
        if categories < 2 || categories > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "category count must be in 2..=255, got {categories}"
            )));
        }
        if labels.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} rows",
                labels.len(),
                rows.len()
            )));
        }
        if rows.is_empty() {
            return Err(Error::EmptyInput);
        }
        if rows.len() < 2 {
            return Err(Error::TooFewSequences {
                required: 2,
                found: rows.len(),
            });
        }
        let k = rows[0].len();
        for (label, row) in labels.iter().zip(&rows) {
            if row.len() != k {
                return Err(Error::RaggedRows {
                    label: label.clone(),
                    expected: k,
                    found: row.len(),
                });
            }
            if let Some(&bad) = row.iter().find(|&&c| c as usize >= categories) {
                return Err(Error::InvalidArgument(format!(
                    "code {bad} in sequence '{label}' exceeds category count {categories}"
                )));
            }
        }
        check_unique(&labels)?;
        if k == 0 {
            return Err(Error::NoSites);
        }
        Ok(Alignment {
            labels,
            rows,
            categories,
            original_columns: (1..=k).collect(),
            total_columns: k,
        })
    }

    /// Unlabelled rows; labels default to `seq1`, `seq2`, ...
    pub fn from_unlabeled(rows: Vec<Vec<u8>>, categories: usize) -> Result<Self> {
        let labels = (1..=rows.len()).map(|i| format!("seq{i}")).collect();
        Self::from_codes(labels, rows, categories)
    }

    pub fn from_fasta_str(text: &str) -> Result<Self> {
        parse_fasta(text.as_bytes())
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of retained (unmasked) sites.
    pub fn sites(&self) -> usize {
        self.original_columns.len()
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.rows[i]
    }

    pub fn code(&self, i: usize, k: usize) -> u8 {
        self.rows[i][k]
    }

    /// 1-based positions (before masking) of the retained sites.
    pub fn original_columns(&self) -> &[usize] {
        &self.original_columns
    }

    /// Columns present in the input, including masked ones.
    pub fn total_columns(&self) -> usize {
        self.total_columns
    }

    pub fn masked_columns(&self) -> usize {
        self.total_columns - self.sites()
    }

    pub fn column(&self, k: usize) -> impl Iterator<Item = u8> + '_ {
        self.rows.iter().map(move |r| r[k])
    }

    /// Category counts `n_c` at site `k`.
    pub fn column_counts(&self, k: usize) -> Vec<u32> {
        let mut counts = vec![0u32; self.categories];
        for code in self.column(k) {
            counts[code as usize] += 1;
        }
        counts
    }

    pub fn all_column_counts(&self) -> Vec<Vec<u32>> {
        (0..self.sites()).map(|k| self.column_counts(k)).collect()
    }

    /// A new alignment restricted to the given sites, in the given order.
    /// Repeated indices are allowed (bootstrap resamples).
    pub fn select_sites(&self, sites: &[usize]) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::EmptySiteSet);
        }
        check_sites(sites, self.sites())?;
        let rows = self
            .rows
            .iter()
            .map(|r| sites.iter().map(|&k| r[k]).collect())
            .collect();
        Ok(Alignment {
            labels: self.labels.clone(),
            rows,
            categories: self.categories,
            original_columns: sites.iter().map(|&k| self.original_columns[k]).collect(),
            total_columns: self.total_columns,
        })
    }

    /// Rows permuted by `order` (a permutation of `0..n`).
    pub fn permute_rows(&self, order: &[usize]) -> Result<Self> {
        let n = self.n();
        let mut seen = vec![false; n];
        if order.len() != n {
            return Err(Error::InvalidArgument("row permutation has wrong length".into()));
        }
        for &i in order {
            if i >= n || seen[i] {
                return Err(Error::InvalidArgument("not a permutation".into()));
            }
            seen[i] = true;
        }
        Ok(Alignment {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            rows: order.iter().map(|&i| self.rows[i].clone()).collect(),
            ..self.clone()
        })
    }

    fn category_name(&self, c: usize) -> String {
        if self.categories == 4 {
            (NUCLEOTIDES[c] as char).to_string()
        } else {
            format!("c{c}")
        }
    }
}

impl fmt::Display for Alignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.labels.iter().map(|l| l.len()).max().unwrap_or(0);
        for (label, row) in self.labels.iter().zip(&self.rows) {
            write!(f, "{label:<width$}  ")?;
            for &c in row {
                if self.categories == 4 {
                    write!(f, "{}", NUCLEOTIDES[c as usize] as char)?;
                } else {
                    write!(f, "{c}")?;
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

fn check_unique(labels: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(labels.len());
    for l in labels {
        if !seen.insert(l.as_str()) {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(())
}

fn check_sites(sites: &[usize], k: usize) -> Result<()> {
    match sites.iter().find(|&&s| s >= k) {
        Some(&index) => Err(Error::SiteOutOfRange { index, sites: k }),
        None => Ok(()),
    }
}

/// Parses a FASTA alignment. Sequence lines may be wrapped freely; blank lines
/// and `;` comment lines are skipped. Columns containing anything other than
/// `ACGT` (case-insensitive) are masked out.
pub fn parse_fasta<R: BufRead>(reader: R) -> Result<Alignment> {
    let mut labels: Vec<String> = Vec::new();
    let mut raw: Vec<Vec<u8>> = Vec::new();
    for (lineno, line) in reader.split(b'\n').enumerate() {
        let line = line.map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let line = line.strip_suffix(b"\r").unwrap_or(&line);
        let trimmed = line.trim_ascii();
        if trimmed.is_empty() || trimmed[0] == b';' {
            continue;
        }
        if trimmed[0] == b'>' {
            let header = String::from_utf8_lossy(&trimmed[1..]);
            let label = header.split_whitespace().next().unwrap_or("").to_string();
            if label.is_empty() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "empty sequence label".into(),
                });
            }
            labels.push(label);
            raw.push(Vec::new());
        } else {
            let Some(seq) = raw.last_mut() else {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: "sequence data before the first '>' header".into(),
                });
            };
            seq.extend(
                trimmed
                    .iter()
                    .filter(|b| !b.is_ascii_whitespace())
                    .map(|b| b.to_ascii_uppercase()),
            );
        }
    }

    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    if raw.len() < 2 {
        return Err(Error::TooFewSequences {
            required: 2,
            found: raw.len(),
        });
    }
    let total = raw[0].len();
    for (label, seq) in labels.iter().zip(&raw) {
        if seq.len() != total {
            return Err(Error::RaggedRows {
                label: label.clone(),
                expected: total,
                found: seq.len(),
            });
        }
    }
    check_unique(&labels)?;

    let kept: Vec<usize> = (0..total)
        .filter(|&k| raw.iter().all(|s| Nucleotide::from_byte(s[k]).is_some()))
        .collect();
    if kept.is_empty() {
        return Err(Error::NoSites);
    }
    let rows = raw
        .iter()
        .map(|s| {
            kept.iter()
                .map(|&k| Nucleotide::from_byte(s[k]).expect("masked").index() as u8)
                .collect()
        })
        .collect();

    Ok(Alignment {
        labels,
        rows,
        categories: 4,
        original_columns: kept.iter().map(|k| k + 1).collect(),
        total_columns: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum SiteClass {
    NonSegregating,
    SingletonSegregating,
    OtherSegregating,
}

impl SiteClass {
    pub fn from_counts(counts: &[u32]) -> Self {
        let n: u32 = counts.iter().sum();
        let present: Vec<u32> = counts.iter().copied().filter(|&c| c > 0).collect();
        if present.len() <= 1 || present.contains(&n) {
            SiteClass::NonSegregating
        } else if present.len() == 2 && present.iter().min() == Some(&1) {
            SiteClass::SingletonSegregating
        } else {
            SiteClass::OtherSegregating
        }
    }

    pub fn is_segregating(self) -> bool {
        self != SiteClass::NonSegregating
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SiteClass::NonSegregating => "non_segregating",
            SiteClass::SingletonSegregating => "singleton",
            SiteClass::OtherSegregating => "segregating",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiteClassification {
    pub classes: Vec<SiteClass>,
    /// S, the number of segregating sites.
    pub segregating: usize,
    /// S*, the number of singleton sites.
    pub singletons: usize,
}

impl SiteClassification {
    pub fn segregating_sites(&self) -> Vec<usize> {
        self.indices(|c| c.is_segregating())
    }

    pub fn non_segregating_sites(&self) -> Vec<usize> {
        self.indices(|c| !c.is_segregating())
    }

    pub fn singleton_sites(&self) -> Vec<usize> {
        self.indices(|c| c == SiteClass::SingletonSegregating)
    }

    fn indices(&self, keep: impl Fn(SiteClass) -> bool) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, &c)| keep(c))
            .map(|(k, _)| k)
            .collect()
    }
}

pub fn classify_sites(a: &Alignment) -> SiteClassification {
    let classes: Vec<SiteClass> = (0..a.sites())
        .map(|k| SiteClass::from_counts(&a.column_counts(k)))
        .collect();
    let segregating = classes.iter().filter(|c| c.is_segregating()).count();
    let singletons = classes
        .iter()
        .filter(|&&c| c == SiteClass::SingletonSegregating)
        .count();
    SiteClassification {
        classes,
        segregating,
        singletons,
    }
}

/// Number of unordered sequence pairs that differ at a site, from its
/// category counts: `(n^2 - sum n_c^2) / 2`.
pub fn pair_diff_count(counts: &[u32]) -> u64 {
    let n: u64 = counts.iter().map(|&c| c as u64).sum();
    let same: u64 = counts.iter().map(|&c| (c as u64) * (c as u64)).sum();
    (n * n - same) / 2
}

/// Plug-in per-site category probabilities for a set of sites.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SiteFrequencyTable {
    pub sites: Vec<usize>,
    /// `probs[j][c]` is the frequency of category `c` at `sites[j]`.
    pub probs: Vec<Vec<f64>>,
}

/// Category probabilities pooled over every cell of a site set.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct PooledFrequencies(pub Vec<f64>);

impl PooledFrequencies {
    /// Gini-Simpson index `1 - sum p_c^2`.
    pub fn gini_simpson(&self) -> f64 {
        gini_simpson(&self.0)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn gini_simpson(p: &[f64]) -> f64 {
    1.0 - p.iter().map(|x| x * x).sum::<f64>()
}

pub fn sitewise_frequencies(a: &Alignment, sites: &[usize]) -> Result<SiteFrequencyTable> {
    if sites.is_empty() {
        return Err(Error::EmptySiteSet);
    }
    check_sites(sites, a.sites())?;
    let n = a.n() as f64;
    let probs = sites
        .iter()
        .map(|&k| a.column_counts(k).iter().map(|&c| c as f64 / n).collect())
        .collect();
    Ok(SiteFrequencyTable {
        sites: sites.to_vec(),
        probs,
    })
}

pub fn pooled_frequencies(a: &Alignment, sites: &[usize]) -> Result<PooledFrequencies> {
    if sites.is_empty() {
        return Err(Error::EmptySiteSet);
    }
    check_sites(sites, a.sites())?;
    let mut counts = vec![0u64; a.categories()];
    for &k in sites {
        for (acc, c) in counts.iter_mut().zip(a.column_counts(k)) {
            *acc += c as u64;
        }
    }
    let total = (a.n() * sites.len()) as f64;
    Ok(PooledFrequencies(
        counts.iter().map(|&c| c as f64 / total).collect(),
    ))
}

/// Writes one TSV row per retained site: original index, class, category
/// counts and pairwise difference count.
pub fn write_site_table<W: Write>(a: &Alignment, mut out: W) -> std::io::Result<()> {
    write!(out, "site_index\tclass")?;
    for c in 0..a.categories() {
        write!(out, "\t{}", a.category_name(c))?;
    }
    writeln!(out, "\tpair_diff_count")?;
    for k in 0..a.sites() {
        let counts = a.column_counts(k);
        write!(
            out,
            "{}\t{}",
            a.original_columns()[k],
            SiteClass::from_counts(&counts).as_str()
        )?;
        for c in &counts {
            write!(out, "\t{c}")?;
        }
        writeln!(out, "\t{}", pair_diff_count(&counts))?;
    }
    Ok(())
}
