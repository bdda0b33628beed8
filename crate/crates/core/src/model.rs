//! Probability models over a sequence of `K` categorical sites.
//!
//! A [`SiteModel`] exposes per-site marginals and joint probabilities of any
//! order over distinct sites. Two implementations ship: sites drawn
//! independently ([`IndependentSitesModel`]) and a first-order Markov chain
//! along the sequence ([`MarkovSitesModel`]), the standard example of a
//! mixing dependence structure.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

pub trait SiteModel: Send + Sync {
    fn categories(&self) -> usize;

    fn sites(&self) -> usize;

    /// Distribution of site `k` (length `C`).
    fn marginals(&self, site: usize) -> &[f64];

    fn marginal(&self, site: usize, cat: usize) -> f64 {
        self.marginals(site)[cat]
    }

    /// Probability that every `(site, category)` cell holds jointly.
    /// Repeated sites are allowed; conflicting categories give 0.
    fn joint(&self, cells: &[(usize, usize)]) -> f64;

    fn joint2(&self, k: usize, c: usize, l: usize, d: usize) -> f64 {
        self.joint(&[(k, c), (l, d)])
    }

    fn joint3(&self, k: usize, c: usize, l: usize, d: usize, m: usize, f: usize) -> f64 {
        self.joint(&[(k, c), (l, d), (m, f)])
    }

    #[allow(clippy::too_many_arguments)]
    fn joint4(
        &self,
        k: usize,
        c: usize,
        l: usize,
        d: usize,
        m: usize,
        f: usize,
        p: usize,
        g: usize,
    ) -> f64 {
        self.joint(&[(k, c), (l, d), (m, f), (p, g)])
    }

    /// True when joints factorize into marginals for distinct sites.
    fn is_independent(&self) -> bool {
        false
    }

    /// `E[prod_i f_i(X_{site_i})]` over distinct sites, where `f_i` is given
    /// as a table indexed by category. The default enumerates all category
    /// tuples through [`SiteModel::joint`].
    fn expect_product(&self, factors: &[(usize, &[f64])]) -> f64 {
        let c = self.categories();
        let len = factors.len();
        let mut cats = vec![0usize; len];
        let mut cells = vec![(0usize, 0usize); len];
        let mut total = 0.0;
        loop {
            let mut weight = 1.0;
            for (i, &(site, f)) in factors.iter().enumerate() {
                cells[i] = (site, cats[i]);
                weight *= f[cats[i]];
            }
            if weight != 0.0 {
                total += weight * self.joint(&cells);
            }
            let mut pos = 0;
            loop {
                if pos == len {
                    return total;
                }
                cats[pos] += 1;
                if cats[pos] < c {
                    break;
                }
                cats[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Draws one sequence of length `K` into `out`.
    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [u8]);
}

fn validate_distribution(p: &[f64], c: usize, what: &str) -> Result<()> {
    if p.len() != c {
        return Err(Error::InvalidModel(format!(
            "{what} has {} entries, expected C = {c}",
            p.len()
        )));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0 || *x > 1.0) {
        return Err(Error::InvalidModel(format!("{what} has entries outside [0, 1]")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidModel(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

fn draw(rng: &mut dyn RngCore, p: &[f64]) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &pc) in p.iter().enumerate() {
        acc += pc;
        if u < acc {
            return c as u8;
        }
    }
    // rounding left u above the final partial sum
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0) as u8
}

/// Merges repeated sites; returns `None` when two cells contradict.
fn canonical_cells(cells: &[(usize, usize)]) -> Option<Vec<(usize, usize)>> {
    let mut sorted = cells.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
        return None;
    }
    Some(sorted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndependentSitesModel {
    categories: usize,
    marginals: Vec<Vec<f64>>,
}

impl IndependentSitesModel {
    pub fn new(marginals: Vec<Vec<f64>>) -> Result<Self> {
        let c = marginals.first().map(Vec::len).unwrap_or(0);
        if c < 2 {
            return Err(Error::InvalidModel("need K >= 1 sites and C >= 2 categories".into()));
        }
        for (k, row) in marginals.iter().enumerate() {
            validate_distribution(row, c, &format!("marginal of site {}", k + 1))?;
        }
        Ok(IndependentSitesModel {
            categories: c,
            marginals,
        })
    }

    /// Every site has the same distribution.
    pub fn identical(dist: &[f64], sites: usize) -> Result<Self> {
        if sites == 0 {
            return Err(Error::InvalidModel("K must be at least 1".into()));
        }
        Self::new(vec![dist.to_vec(); sites])
    }

    pub fn uniform(categories: usize, sites: usize) -> Result<Self> {
        Self::identical(&vec![1.0 / categories as f64; categories], sites)
    }

    pub fn marginal_matrix(&self) -> &[Vec<f64>] {
        &self.marginals
    }
}

impl SiteModel for IndependentSitesModel {
    fn categories(&self) -> usize {
        self.categories
    }

    fn sites(&self) -> usize {
        self.marginals.len()
    }

    fn marginals(&self, site: usize) -> &[f64] {
        &self.marginals[site]
    }

    fn joint(&self, cells: &[(usize, usize)]) -> f64 {
        match canonical_cells(cells) {
            Some(cells) => cells.iter().map(|&(k, c)| self.marginals[k][c]).product(),
            None => 0.0,
        }
    }

    fn joint2(&self, k: usize, c: usize, l: usize, d: usize) -> f64 {
        if k == l {
            return if c == d { self.marginals[k][c] } else { 0.0 };
        }
        self.marginals[k][c] * self.marginals[l][d]
    }

    fn is_independent(&self) -> bool {
        true
    }

    fn expect_product(&self, factors: &[(usize, &[f64])]) -> f64 {
        factors
            .iter()
            .map(|&(k, f)| self.marginals[k].iter().zip(f).map(|(p, v)| p * v).sum::<f64>())
            .product()
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [u8]) {
        for (slot, dist) in out.iter_mut().zip(&self.marginals) {
            *slot = draw(rng, dist);
        }
    }
}

/// First-order Markov chain over sites: `X_1 ~ pi0`, `X_{k+1} | X_k ~ P[X_k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovSitesModel {
    categories: usize,
    initial: Vec<f64>,
    transition: Vec<Vec<f64>>,
    /// `powers[j]` is `P^j` flattened row-major, for `j < K`.
    powers: Vec<Vec<f64>>,
    marginals: Vec<Vec<f64>>,
}

impl MarkovSitesModel {
    pub fn new(initial: Vec<f64>, transition: Vec<Vec<f64>>, sites: usize) -> Result<Self> {
        let c = initial.len();
        if c < 2 {
            return Err(Error::InvalidModel("need C >= 2 categories".into()));
        }
        if sites == 0 {
            return Err(Error::InvalidModel("K must be at least 1".into()));
        }
        validate_distribution(&initial, c, "initial distribution")?;
        if transition.len() != c {
            return Err(Error::InvalidModel(format!(
                "transition matrix has {} rows, expected {c}",
                transition.len()
            )));
        }
        for (i, row) in transition.iter().enumerate() {
            validate_distribution(row, c, &format!("transition row {}", i + 1))?;
        }

        let flat: Vec<f64> = transition.iter().flatten().copied().collect();
        let mut powers = Vec::with_capacity(sites);
        let mut current: Vec<f64> = (0..c * c)
            .map(|i| if i / c == i % c { 1.0 } else { 0.0 })
            .collect();
        for _ in 0..sites {
            let next = matmul(&current, &flat, c);
            powers.push(std::mem::replace(&mut current, next));
        }
        let marginals = powers
            .iter()
            .map(|pk| {
                (0..c)
                    .map(|d| (0..c).map(|a| initial[a] * pk[a * c + d]).sum())
                    .collect()
            })
            .collect();

        Ok(MarkovSitesModel {
            categories: c,
            initial,
            transition,
            powers,
            marginals,
        })
    }

    /// Stationary chain `P = rho I + (1 - rho) 1 pi'` started from `pi`.
    /// Its second eigenvalue is `rho`, so dependence between sites `d` apart
    /// decays like `rho^d`.
    pub fn with_persistence(pi: &[f64], rho: f64, sites: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidModel(format!("persistence {rho} outside [0, 1]")));
        }
        let c = pi.len();
        let transition = (0..c)
            .map(|i| {
                (0..c)
                    .map(|j| (1.0 - rho) * pi[j] + if i == j { rho } else { 0.0 })
                    .collect()
            })
            .collect();
        Self::new(pi.to_vec(), transition, sites)
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    fn step(&self, gap: usize, from: usize, to: usize) -> f64 {
        self.powers[gap][from * self.categories + to]
    }
}

fn matmul(a: &[f64], b: &[f64], c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        for k in 0..c {
            let aik = a[i * c + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..c {
                out[i * c + j] += aik * b[k * c + j];
            }
        }
    }
    out
}

impl SiteModel for MarkovSitesModel {
    fn categories(&self) -> usize {
        self.categories
    }

    fn sites(&self) -> usize {
        self.marginals.len()
    }

    fn marginals(&self, site: usize) -> &[f64] {
        &self.marginals[site]
    }

    fn joint(&self, cells: &[(usize, usize)]) -> f64 {
        let Some(cells) = canonical_cells(cells) else {
            return 0.0;
        };
        let Some(&(k0, c0)) = cells.first() else {
            return 1.0;
        };
        let mut p = self.marginals[k0][c0];
        for w in cells.windows(2) {
            let ((k, c), (l, d)) = (w[0], w[1]);
            p *= self.step(l - k, c, d);
        }
        p
    }

    fn joint2(&self, k: usize, c: usize, l: usize, d: usize) -> f64 {
        match k.cmp(&l) {
            std::cmp::Ordering::Less => self.marginals[k][c] * self.step(l - k, c, d),
            std::cmp::Ordering::Greater => self.marginals[l][d] * self.step(k - l, d, c),
            std::cmp::Ordering::Equal => {
                if c == d {
                    self.marginals[k][c]
                } else {
                    0.0
                }
            }
        }
    }

    fn expect_product(&self, factors: &[(usize, &[f64])]) -> f64 {
        let c = self.categories;
        let mut sorted = factors.to_vec();
        sorted.sort_by_key(|&(k, _)| k);
        let Some(&(k0, f0)) = sorted.first() else {
            return 1.0;
        };
        let mut v: Vec<f64> = (0..c).map(|a| self.marginals[k0][a] * f0[a]).collect();
        let mut w = vec![0.0; c];
        for pair in sorted.windows(2) {
            let (k, _) = pair[0];
            let (l, f) = pair[1];
            let gap = &self.powers[l - k];
            for (d, slot) in w.iter_mut().enumerate() {
                *slot = (0..c).map(|a| v[a] * gap[a * c + d]).sum::<f64>() * f[d];
            }
            std::mem::swap(&mut v, &mut w);
        }
        v.iter().sum()
    }

    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [u8]) {
        let mut state = None;
        for slot in out.iter_mut() {
            let next = match state {
                None => draw(rng, &self.initial),
                Some(prev) => draw(rng, &self.transition[prev as usize]),
            };
            *slot = next;
            state = Some(next);
        }
    }
}

/// On-disk model description.
///
/// ```json
/// {"type": "independent", "C": 4, "K": 50, "marginals": [[0.7, 0.1, 0.1, 0.1]]}
/// {"type": "markov", "C": 2, "K": 200, "pi0": [0.9, 0.1], "P": [[0.95, 0.05], [0.45, 0.55]]}
/// ```
///
/// A single marginal row is broadcast to all `K` sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    Independent {
        #[serde(rename = "C")]
        categories: usize,
        #[serde(rename = "K")]
        sites: usize,
        marginals: Vec<Vec<f64>>,
    },
    Markov {
        #[serde(rename = "C")]
        categories: usize,
        #[serde(rename = "K")]
        sites: usize,
        pi0: Vec<f64>,
        #[serde(rename = "P")]
        transition: Vec<Vec<f64>>,
    },
}

impl ModelSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))
    }

    pub fn sites(&self) -> usize {
        match self {
            ModelSpec::Independent { sites, .. } | ModelSpec::Markov { sites, .. } => *sites,
        }
    }

    /// Same model description with a different site count. Broadcast
    /// independent models and Markov models resize freely.
    pub fn with_sites(&self, k: usize) -> Result<Self> {
        let mut out = self.clone();
        match &mut out {
            ModelSpec::Independent {
                sites, marginals, ..
            } => {
                if marginals.len() != 1 && marginals.len() != k {
                    return Err(Error::InvalidModel(
                        "cannot resize a model with per-site marginals".into(),
                    ));
                }
                *sites = k;
            }
            ModelSpec::Markov { sites, .. } => *sites = k,
        }
        Ok(out)
    }

    pub fn build(&self) -> Result<Model> {
        match self {
            ModelSpec::Independent {
                categories,
                sites,
                marginals,
            } => {
                let rows = match marginals.len() {
                    1 => vec![marginals[0].clone(); *sites],
                    len if len == *sites => marginals.clone(),
                    len => {
                        return Err(Error::InvalidModel(format!(
                            "{len} marginal rows for K = {sites}"
                        )))
                    }
                };
                if *sites == 0 {
                    return Err(Error::InvalidModel("K must be at least 1".into()));
                }
                let m = IndependentSitesModel::new(rows)?;
                if m.categories() != *categories {
                    return Err(Error::InvalidModel(format!(
                        "marginals have {} categories, C = {categories}",
                        m.categories()
                    )));
                }
                Ok(Model::Independent(m))
            }
            ModelSpec::Markov {
                categories,
                sites,
                pi0,
                transition,
            } => {
                if pi0.len() != *categories {
                    return Err(Error::InvalidModel(format!(
                        "pi0 has {} entries, C = {categories}",
                        pi0.len()
                    )));
                }
                Ok(Model::Markov(MarkovSitesModel::new(
                    pi0.clone(),
                    transition.clone(),
                    *sites,
                )?))
            }
        }
    }
}

/// A built model of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Independent(IndependentSitesModel),
    Markov(MarkovSitesModel),
}

impl Model {
    fn inner(&self) -> &dyn SiteModel {
        match self {
            Model::Independent(m) => m,
            Model::Markov(m) => m,
        }
    }

    pub fn mixing(&self) -> Mixing {
        match self {
            Model::Independent(_) => Mixing::Independent,
            Model::Markov(_) => Mixing::Exponential,
        }
    }
}

/// Dependence class of a site model, used to select the convergence rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mixing {
    Independent,
    Exponential,
    Polynomial,
}

impl SiteModel for Model {
    fn categories(&self) -> usize {
        self.inner().categories()
    }
    fn sites(&self) -> usize {
        self.inner().sites()
    }
    fn marginals(&self, site: usize) -> &[f64] {
        match self {
            Model::Independent(m) => m.marginals(site),
            Model::Markov(m) => m.marginals(site),
        }
    }
    fn joint(&self, cells: &[(usize, usize)]) -> f64 {
        self.inner().joint(cells)
    }
    fn joint2(&self, k: usize, c: usize, l: usize, d: usize) -> f64 {
        self.inner().joint2(k, c, l, d)
    }
    fn is_independent(&self) -> bool {
        self.inner().is_independent()
    }
    fn expect_product(&self, factors: &[(usize, &[f64])]) -> f64 {
        self.inner().expect_product(factors)
    }
    fn sample_into(&self, rng: &mut dyn RngCore, out: &mut [u8]) {
        self.inner().sample_into(rng, out)
    }
}
