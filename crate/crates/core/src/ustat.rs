//! Hoeffding decomposition of the mean-pairwise-difference U-statistic under a
//! site model, with exact moments and Berry-Esseen bounds.
//!
//! The kernel is the Hamming fraction `phi(x, y) = (1/K) sum_k 1(x_k != y_k)`.
//! Its first projection is `psi1(x) = E[phi(x, Y)] = 1 - (1/K) sum_k Pi_{x_k k}`
//! and the decomposition used here is
//!
//! ```text
//! phi(x, y) = H_K + h1(x) + h1(y) + h2(x, y),   h1 = psi1 - H_K
//! ```
//!
//! Note the sign: `h1(x) = -(1/K) sum_k [Pi_{x_k k} - sum_c Pi_ck^2]`, the
//! negative of the bracketed per-site form often written for this kernel.
//! Only even moments of `h1` enter the variance and Berry-Esseen formulas, so
//! they are unaffected.
//!
//! Moment formulas use closed forms for independent sites. Any other model
//! goes through the joint-probability interface of [`SiteModel`]: `O(K^2 C^2)`
//! for `sigma1^2` and `E h2^2`, and a sum over site 4-tuples for `E h1^4`,
//! capped at [`GENERAL_FOURTH_MOMENT_MAX_SITES`] sites.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::mismatches;
use crate::model::{Mixing, SiteModel};
use crate::numeric::{pairs, CompensatedSum};

pub const GENERAL_FOURTH_MOMENT_MAX_SITES: usize = 64;

/// Below this `sigma1^2` the kernel is treated as degenerate.
pub const DEGENERACY_TOLERANCE: f64 = 1e-15;

fn check_sequence<M: SiteModel + ?Sized>(x: &[u8], model: &M) -> Result<()> {
    if x.len() != model.sites() {
        return Err(Error::LengthMismatch(x.len(), model.sites()));
    }
    if let Some(&c) = x.iter().find(|&&c| c as usize >= model.categories()) {
        return Err(Error::InvalidArgument(format!(
            "code {c} outside the model's {} categories",
            model.categories()
        )));
    }
    Ok(())
}

pub fn kernel_phi(x1: &[u8], x2: &[u8]) -> Result<f64> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch(x1.len(), x2.len()));
    }
    if x1.is_empty() {
        return Err(Error::NoSites);
    }
    Ok(mismatches(x1, x2) as f64 / x1.len() as f64)
}

pub fn psi1<M: SiteModel + ?Sized>(x: &[u8], model: &M) -> Result<f64> {
    check_sequence(x, model)?;
    let k = model.sites() as f64;
    let s: CompensatedSum = x
        .iter()
        .enumerate()
        .map(|(site, &c)| model.marginal(site, c as usize))
        .collect();
    Ok(1.0 - s.value() / k)
}

pub fn h1<M: SiteModel + ?Sized>(x: &[u8], model: &M) -> Result<f64> {
    Ok(psi1(x, model)? - expected_hk(model))
}

pub fn h2<M: SiteModel + ?Sized>(x1: &[u8], x2: &[u8], model: &M) -> Result<f64> {
    check_sequence(x2, model)?;
    let hk = expected_hk(model);
    let phi = kernel_phi(x1, x2)?;
    Ok(phi - hk - (psi1(x1, model)? - hk) - (psi1(x2, model)? - hk))
}

/// `sum_c Pi_ck^2` for every site.
fn site_homozygosity<M: SiteModel + ?Sized>(model: &M) -> Vec<f64> {
    (0..model.sites())
        .map(|k| model.marginals(k).iter().map(|p| p * p).sum())
        .collect()
}

/// `H_K = 1 - (1/K) sum_k sum_c Pi_ck^2`, the mean of the kernel.
pub fn expected_hk<M: SiteModel + ?Sized>(model: &M) -> f64 {
    let k = model.sites() as f64;
    1.0 - site_homozygosity(model).into_iter().collect::<CompensatedSum>().value() / k
}

/// Per-site centred values `g_k(c) = Pi_ck - sum_d Pi_dk^2`.
fn centred_tables<M: SiteModel + ?Sized>(model: &M) -> Vec<Vec<f64>> {
    site_homozygosity(model)
        .iter()
        .enumerate()
        .map(|(k, &s)| model.marginals(k).iter().map(|p| p - s).collect())
        .collect()
}

/// `sum_c Pi_ck g_k(c)^j`.
fn site_moment(pi: &[f64], g: &[f64], j: i32) -> f64 {
    pi.iter().zip(g).map(|(p, v)| p * v.powi(j)).sum()
}

/// Variance of the first projection, `E h1^2`.
pub fn sigma1_sq<M: SiteModel + ?Sized>(model: &M) -> f64 {
    let k = model.sites() as f64;
    if model.is_independent() {
        // sum_c Pi^3 - (sum_c Pi^2)^2 written as sum_c Pi (Pi - s)^2, which is
        // exactly zero for uniform and for degenerate sites
        let g = centred_tables(model);
        let total: CompensatedSum = (0..model.sites())
            .map(|site| site_moment(model.marginals(site), &g[site], 2))
            .collect();
        return total.value() / (k * k);
    }
    sigma1_sq_general(model)
}

/// The dependent-sites expression, evaluated through `joint2`:
/// `(1/K^2) { sum Pi^3 + sum_{k != l} sum_{c,d} (Pi_{ck,dl} - Pi_ck Pi_dl) Pi_ck Pi_dl - sum_k s_k^2 }`.
pub fn sigma1_sq_general<M: SiteModel + ?Sized>(model: &M) -> f64 {
    let kk = model.sites();
    let c = model.categories();
    let s = site_homozygosity(model);
    let mut acc = CompensatedSum::new();
    for site in 0..kk {
        let cubes: f64 = model.marginals(site).iter().map(|p| p * p * p).sum();
        acc.add(cubes - s[site] * s[site]);
    }
    for k in 0..kk {
        let pk = model.marginals(k);
        for l in k + 1..kk {
            let pl = model.marginals(l);
            let mut cross = 0.0;
            for a in 0..c {
                for d in 0..c {
                    let indep = pk[a] * pl[d];
                    cross += (model.joint2(k, a, l, d) - indep) * indep;
                }
            }
            acc.add(2.0 * cross);
        }
    }
    let k = kk as f64;
    acc.value() / (k * k)
}

/// Fourth moment `E h1^4`.
pub fn eh1_4<M: SiteModel + ?Sized>(model: &M) -> Result<f64> {
    if model.is_independent() {
        return Ok(eh1_4_independent(model));
    }
    Ok(fourth_moment_terms(model)?.combine())
}

/// Closed form for independent sites:
/// `(1/K^4) { sum_k m4_k + 3 [ (sum_k m2_k)^2 - sum_k m2_k^2 ] }`
/// with `m_j,k = sum_d Pi_dk g_k(d)^j`.
pub fn eh1_4_independent<M: SiteModel + ?Sized>(model: &M) -> f64 {
    let g = centred_tables(model);
    let mut m4 = CompensatedSum::new();
    let mut m2 = CompensatedSum::new();
    let mut m2_sq = CompensatedSum::new();
    for site in 0..model.sites() {
        let pi = model.marginals(site);
        let second = site_moment(pi, &g[site], 2);
        m4.add(site_moment(pi, &g[site], 4));
        m2.add(second);
        m2_sq.add(second * second);
    }
    let k = model.sites() as f64;
    let m2 = m2.value();
    (m4.value() + 3.0 * (m2 * m2 - m2_sq.value())) / k.powi(4)
}

/// The five groups of `E (sum_k g_k)^4` by index pattern, each summed over
/// ordered tuples of distinct sites:
/// `k=l=m=p`, `{k,k,l,l}`, `{k,k,k,l}`, `{k,k,l,m}` and all distinct.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourthMomentTerms {
    pub sites: usize,
    pub single: f64,
    pub pair_22: f64,
    pub pair_31: f64,
    pub triple_211: f64,
    pub quad: f64,
}

impl FourthMomentTerms {
    /// Multinomial multiplicities 1, 3, 4, 6, 1.
    pub fn combine(&self) -> f64 {
        let k = self.sites as f64;
        (self.single + 3.0 * self.pair_22 + 4.0 * self.pair_31 + 6.0 * self.triple_211 + self.quad)
            / k.powi(4)
    }

    /// The expansion with the coefficient pattern `1, 3, 4, 3, 6, 1` in which
    /// the `{k,k,k,l}` group appears once as a sum over distinct triples
    /// (each pair counted `K - 2` times) with weight 4 and once over pairs with
    /// weight 3. It agrees with [`combine`](Self::combine) only when
    /// `pair_31` vanishes, which is the case for independent sites.
    pub fn combine_as_printed(&self) -> f64 {
        let k = self.sites as f64;
        let w31 = 4.0 * (k - 2.0).max(0.0) + 3.0;
        (self.single + 3.0 * self.pair_22 + w31 * self.pair_31 + 6.0 * self.triple_211 + self.quad)
            / k.powi(4)
    }
}

pub fn fourth_moment_terms<M: SiteModel + ?Sized>(model: &M) -> Result<FourthMomentTerms> {
    let kk = model.sites();
    if kk > GENERAL_FOURTH_MOMENT_MAX_SITES {
        return Err(Error::TooManySites {
            sites: kk,
            cap: GENERAL_FOURTH_MOMENT_MAX_SITES,
        });
    }
    let g = centred_tables(model);
    let pow = |j: i32| -> Vec<Vec<f64>> {
        g.iter().map(|row| row.iter().map(|v| v.powi(j)).collect()).collect()
    };
    let (g1, g2, g3) = (g.clone(), pow(2), pow(3));

    let single: CompensatedSum = (0..kk)
        .map(|site| site_moment(model.marginals(site), &g[site], 4))
        .collect();

    let mut pair_22 = CompensatedSum::new();
    let mut pair_31 = CompensatedSum::new();
    for k in 0..kk {
        for l in k + 1..kk {
            pair_22.add(2.0 * model.expect_product(&[(k, &g2[k]), (l, &g2[l])]));
            pair_31.add(model.expect_product(&[(k, &g3[k]), (l, &g1[l])]));
            pair_31.add(model.expect_product(&[(k, &g1[k]), (l, &g3[l])]));
        }
    }

    let mut triple = CompensatedSum::new();
    for k in 0..kk {
        for l in k + 1..kk {
            for m in l + 1..kk {
                let t = model.expect_product(&[(k, &g2[k]), (l, &g1[l]), (m, &g1[m])])
                    + model.expect_product(&[(k, &g1[k]), (l, &g2[l]), (m, &g1[m])])
                    + model.expect_product(&[(k, &g1[k]), (l, &g1[l]), (m, &g2[m])]);
                triple.add(2.0 * t);
            }
        }
    }

    let mut quad = CompensatedSum::new();
    for k in 0..kk {
        for l in k + 1..kk {
            for m in l + 1..kk {
                for p in m + 1..kk {
                    let e = model.expect_product(&[
                        (k, &g1[k]),
                        (l, &g1[l]),
                        (m, &g1[m]),
                        (p, &g1[p]),
                    ]);
                    quad.add(24.0 * e);
                }
            }
        }
    }

    Ok(FourthMomentTerms {
        sites: kk,
        single: single.value(),
        pair_22: pair_22.value(),
        pair_31: pair_31.value(),
        triple_211: triple.value(),
        quad: quad.value(),
    })
}

/// `E h2^2`.
pub fn eh2_2<M: SiteModel + ?Sized>(model: &M) -> f64 {
    let kk = model.sites();
    let c = model.categories();
    let s = site_homozygosity(model);
    let mut acc = CompensatedSum::new();
    // K H_K - sum_k H_k^2 + 2 sum_k s_k^2 - 2 sum_k sum_c Pi^3, with H_k = 1 - s_k
    for site in 0..kk {
        let hk = 1.0 - s[site];
        let cubes: f64 = model.marginals(site).iter().map(|p| p * p * p).sum();
        acc.add(hk - hk * hk + 2.0 * s[site] * s[site] - 2.0 * cubes);
    }
    if !model.is_independent() {
        for k in 0..kk {
            let pk = model.marginals(k);
            for l in k + 1..kk {
                let pl = model.marginals(l);
                let mut cross = 0.0;
                for a in 0..c {
                    for d in 0..c {
                        let dev = model.joint2(k, a, l, d) - pk[a] * pl[d];
                        cross += dev * (1.0 - pk[a] - pl[d] + dev);
                    }
                }
                acc.add(2.0 * cross);
            }
        }
    }
    let k = kk as f64;
    acc.value() / (k * k)
}

/// `Var phi = 2 sigma1^2 + E h2^2`.
pub fn var_phi<M: SiteModel + ?Sized>(model: &M) -> f64 {
    2.0 * sigma1_sq(model) + eh2_2(model)
}

/// Exact variance of the U-statistic over `n` sequences:
/// `[2(n-2) sigma1^2 + Var phi] / C(n, 2)`.
pub fn exact_var_t2<M: SiteModel + ?Sized>(model: &M, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::TooFewSequences { required: 2, found: n });
    }
    let s1 = sigma1_sq(model);
    let v = 2.0 * (n as f64 - 2.0) * s1 + 2.0 * s1 + eh2_2(model);
    Ok(v / pairs(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentSet {
    #[serde(rename = "H_K")]
    pub h_k: f64,
    pub sigma1_sq: f64,
    /// `None` when the model is dependent and `K` exceeds the general-path cap.
    pub eh1_4: Option<f64>,
    pub eh2_2: f64,
}

pub fn moment_set<M: SiteModel + ?Sized>(model: &M) -> MomentSet {
    MomentSet {
        h_k: expected_hk(model),
        sigma1_sq: sigma1_sq(model),
        eh1_4: eh1_4(model).ok(),
        eh2_2: eh2_2(model),
    }
}

/// `C (sigma1^-3 E|h1|^3 + sigma1^-5/3 E|h2|^5/3) n^-1/2`, with the absolute
/// moments bounded by `(E h1^4)^3/4` and `(E h2^2)^5/6`.
pub fn berry_esseen_bound<M: SiteModel + ?Sized>(model: &M, n: usize, constant: f64) -> Result<f64> {
    let s1 = sigma1_sq(model);
    if s1 <= DEGENERACY_TOLERANCE {
        return Err(Error::DegenerateKernel);
    }
    berry_esseen_from_moments(s1, eh1_4(model)?, eh2_2(model), n, constant)
}

pub fn berry_esseen_from_moments(
    sigma1_sq: f64,
    eh1_4: f64,
    eh2_2: f64,
    n: usize,
    constant: f64,
) -> Result<f64> {
    if sigma1_sq <= DEGENERACY_TOLERANCE {
        return Err(Error::DegenerateKernel);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let first = sigma1_sq.powf(-1.5) * eh1_4.powf(0.75);
    let second = sigma1_sq.powf(-5.0 / 6.0) * eh2_2.powf(5.0 / 6.0);
    Ok(constant * (first + second) / (n as f64).sqrt())
}

/// Nominal convergence rate in the number of sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateDescriptor {
    /// `K^-1/2`.
    InverseSqrt { value: f64 },
    /// `K^-1/2 ln K` (natural logarithm).
    InverseSqrtLog { value: f64 },
    /// Slower than `K^-1/2`; no closed form.
    SlowerThanInverseSqrt,
}

impl RateDescriptor {
    pub fn value(&self) -> Option<f64> {
        match *self {
            RateDescriptor::InverseSqrt { value } | RateDescriptor::InverseSqrtLog { value } => {
                Some(value)
            }
            RateDescriptor::SlowerThanInverseSqrt => None,
        }
    }
}

pub fn berry_esseen_rate(sites: usize, mixing: Mixing) -> Result<RateDescriptor> {
    if sites < 2 {
        return Err(Error::InvalidArgument(format!("rate needs K >= 2, got {sites}")));
    }
    let k = sites as f64;
    Ok(match mixing {
        Mixing::Independent => RateDescriptor::InverseSqrt { value: 1.0 / k.sqrt() },
        Mixing::Exponential => RateDescriptor::InverseSqrtLog {
            value: k.ln() / k.sqrt(),
        },
        Mixing::Polynomial => RateDescriptor::SlowerThanInverseSqrt,
    })
}
