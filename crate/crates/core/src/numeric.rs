//! Small numerical helpers: compensated summation and standard normal tails.

use statrs::function::erf::erfc;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<CompensatedSum>().value()
}

/// `n choose 2` as a float.
pub fn pairs(n: usize) -> f64 {
    (n as f64) * (n as f64 - 1.0) / 2.0
}

/// P(Z <= x) for a standard normal Z.
///
/// Computed as `erfc(-x / sqrt 2) / 2`, so lower tails keep full relative
/// precision down to the `f64` underflow point (about x = -37.5, beyond which
/// the result is 0).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// P(Z > x), the mirror of [`normal_cdf`]; `normal_sf(x) == normal_cdf(-x)` bit for bit.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `values` and the standard normal. Returns `None` for an empty sample or
/// any non-finite value.
pub fn ks_distance_normal(values: &[f64]) -> Option<f64> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            let above = (i as f64 + 1.0) / r - f;
            let below = f - i as f64 / r;
            above.max(below)
        })
        .fold(0.0f64, f64::max);
    Some(d.clamp(0.0, 1.0))
}

/// Mean, unbiased variance and sample skewness.
pub fn summary_moments(values: &[f64]) -> (f64, f64, f64) {
    let r = values.len() as f64;
    let mean = compensated_sum(values.iter().copied()) / r;
    let m2 = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / r;
    let m3 = compensated_sum(values.iter().map(|v| (v - mean).powi(3))) / r;
    let var = if values.len() > 1 { m2 * r / (r - 1.0) } else { 0.0 };
    let skew = if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 };
    (mean, var, skew)
}
