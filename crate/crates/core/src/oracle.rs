//! Brute-force moments by enumerating every sequence in `C^K`.
//!
//! Nothing here uses the closed-form moment expressions: probabilities come
//! from [`SiteModel::joint`] over all sites and every expectation is a plain
//! weighted sum of the kernel. Intended as a reference for small models.

use crate::error::{Error, Result};
use crate::estimators::mismatches;
use crate::model::SiteModel;

/// Largest `C^K` accepted.
pub const MAX_OUTCOMES: usize = 4096;

/// Every sequence with its probability, in lexicographic order.
pub fn enumerate_sequences<M: SiteModel + ?Sized>(model: &M) -> Result<Vec<(Vec<u8>, f64)>> {
    let (c, k) = (model.categories(), model.sites());
    let outcomes = (c as u128).checked_pow(k as u32).unwrap_or(u128::MAX);
    if outcomes > MAX_OUTCOMES as u128 {
        return Err(Error::InvalidArgument(format!(
            "{c}^{k} outcomes exceed the enumeration limit {MAX_OUTCOMES}"
        )));
    }
    let mut out = Vec::with_capacity(outcomes as usize);
    let mut seq = vec![0u8; k];
    let mut cells = vec![(0usize, 0usize); k];
    for _ in 0..outcomes {
        for (site, cell) in cells.iter_mut().enumerate() {
            *cell = (site, seq[site] as usize);
        }
        out.push((seq.clone(), model.joint(&cells)));
        for digit in seq.iter_mut().rev() {
            *digit += 1;
            if (*digit as usize) < c {
                break;
            }
            *digit = 0;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnumeratedMoments {
    pub h_k: f64,
    pub sigma1_sq: f64,
    pub eh1_4: f64,
    pub eh2_2: f64,
    /// `max_x |E[h2(x, Y)]|`, zero up to rounding.
    pub max_conditional_h2: f64,
    /// `|E h1|`, zero up to rounding.
    pub mean_h1: f64,
}

pub fn enumerated_moments<M: SiteModel + ?Sized>(model: &M) -> Result<EnumeratedMoments> {
    let seqs = enumerate_sequences(model)?;
    let k = model.sites() as f64;
    let m = seqs.len();
    let mut phi = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            phi[i * m + j] = mismatches(&seqs[i].0, &seqs[j].0) as f64 / k;
        }
    }
    let p: Vec<f64> = seqs.iter().map(|s| s.1).collect();
    let psi: Vec<f64> = (0..m)
        .map(|i| (0..m).map(|j| p[j] * phi[i * m + j]).sum())
        .collect();
    let h_k: f64 = (0..m).map(|i| p[i] * psi[i]).sum();
    let h1: Vec<f64> = psi.iter().map(|v| v - h_k).collect();
    let mean_h1 = (0..m).map(|i| p[i] * h1[i]).sum::<f64>().abs();
    let sigma1_sq = (0..m).map(|i| p[i] * h1[i].powi(2)).sum();
    let eh1_4 = (0..m).map(|i| p[i] * h1[i].powi(4)).sum();
    let mut eh2_2 = 0.0;
    let mut max_conditional_h2 = 0.0f64;
    for i in 0..m {
        let mut cond = 0.0;
        let mut sq = 0.0;
        for j in 0..m {
            let h2 = phi[i * m + j] - h_k - h1[i] - h1[j];
            cond += p[j] * h2;
            sq += p[j] * h2 * h2;
        }
        eh2_2 += p[i] * sq;
        max_conditional_h2 = max_conditional_h2.max(cond.abs());
    }
    Ok(EnumeratedMoments {
        h_k,
        sigma1_sq,
        eh1_4,
        eh2_2,
        max_conditional_h2,
        mean_h1,
    })
}
