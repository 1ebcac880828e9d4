//! Multinomial component densities and the non-spatial mixture.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Lower bound applied to every category probability after an M-step.
pub const LAMBDA_FLOOR: f64 = 1e-10;

/// Region-by-category count table with cached row totals.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    n: usize,
    j: usize,
    counts: Vec<u64>,
    totals: Vec<u64>,
    log_coef: Vec<f64>,
}

impl CountMatrix {
    /// Builds a count matrix from rows. Every row must have the same length
    /// (at least two categories) and a positive total.
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("count matrix has no rows"));
        }
        let j = rows[0].len();
        if j < 2 {
            return Err(Error::invalid(format!("need at least 2 categories, got {j}")));
        }
        let mut counts = Vec::with_capacity(n * j);
        let mut totals = Vec::with_capacity(n);
        let mut log_coef = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != j {
                return Err(Error::dim(format!("row {i} has {} categories, expected {j}", row.len())));
            }
            let m: u64 = row.iter().sum();
            if m == 0 {
                return Err(Error::invalid(format!("row {i} has zero total")));
            }
            counts.extend_from_slice(row);
            totals.push(m);
            log_coef.push(log_multinomial_coefficient(row));
        }
        Ok(Self { n, j, counts, totals, log_coef })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_categories(&self) -> usize {
        self.j
    }

    pub fn row(&self, i: usize) -> &[u64] {
        &self.counts[i * self.j..(i + 1) * self.j]
    }

    pub fn total(&self, i: usize) -> u64 {
        self.totals[i]
    }

    pub fn totals(&self) -> &[u64] {
        &self.totals
    }

    /// `log m_i! - Σ_j log y_ij!`.
    pub fn log_coefficient(&self, i: usize) -> f64 {
        self.log_coef[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks_exact(self.j)
    }

    /// Pooled category proportions `Σ_i y_ij / Σ_i m_i`.
    pub fn pooled_proportions(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.j];
        for row in self.rows() {
            for (s, &y) in sums.iter_mut().zip(row) {
                *s += y as f64;
            }
        }
        let total: f64 = sums.iter().sum();
        sums.iter().map(|s| s / total).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.rows().map(<[u64]>::to_vec).collect()
    }
}

/// Per-component category probabilities, one simplex row per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    lambda: Vec<Vec<f64>>,
}

impl ComponentParams {
    /// Validates that every row is a probability vector of a common length.
    pub fn new(lambda: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = lambda.first() else {
            return Err(Error::invalid("no components"));
        };
        let j = first.len();
        for (k, row) in lambda.iter().enumerate() {
            if row.len() != j {
                return Err(Error::dim(format!("component {k} has {} categories, expected {j}", row.len())));
            }
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::invalid(format!("component {k} has a probability outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-8 {
                return Err(Error::invalid(format!("component {k} sums to {s}, not 1")));
            }
        }
        Ok(Self { lambda })
    }

    pub(crate) fn from_rows_unchecked(lambda: Vec<Vec<f64>>) -> Self {
        Self { lambda }
    }

    pub fn num_components(&self) -> usize {
        self.lambda.len()
    }

    pub fn num_categories(&self) -> usize {
        self.lambda[0].len()
    }

    pub fn component(&self, k: usize) -> &[f64] {
        &self.lambda[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.lambda
    }

    /// Clamps every entry to at least `eps` and renormalises, keeping floored
    /// entries at exactly `eps`.
    pub fn floor(&mut self, eps: f64) {
        for row in &mut self.lambda {
            floor_simplex(row, eps);
        }
    }

    /// Reorders components: new component `k` is old component `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self { lambda: perm.iter().map(|&k| self.lambda[k].clone()).collect() }
    }
}

pub(crate) fn floor_simplex(row: &mut [f64], eps: f64) {
    let j = row.len();
    let mut floored = vec![false; j];
    loop {
        let mut changed = false;
        for (p, f) in row.iter_mut().zip(floored.iter_mut()) {
            if !*f && (p.is_nan() || *p < eps) {
                *p = eps;
                *f = true;
                changed = true;
            }
        }
        let fixed = eps * floored.iter().filter(|&&f| f).count() as f64;
        let free: f64 = row.iter().zip(&floored).filter(|(_, &f)| !f).map(|(p, _)| p).sum();
        if free > 0.0 {
            let scale = (1.0 - fixed) / free;
            row.iter_mut().zip(&floored).filter(|(_, &f)| !f).for_each(|(p, _)| *p *= scale);
        }
        if !changed {
            break;
        }
    }
}

/// Mixing weights of the non-spatial mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|&x| x.is_nan() || x < 0.0) {
            return Err(Error::invalid("weights must be non-negative"));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!("weights sum to {s}, not 1")));
        }
        Ok(Self(p))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub(crate) fn log_multinomial_coefficient(y: &[u64]) -> f64 {
    let m: u64 = y.iter().sum();
    ln_gamma(m as f64 + 1.0) - y.iter().map(|&c| ln_gamma(c as f64 + 1.0)).sum::<f64>()
}

/// `Σ_j y_j log λ_j`, with `0·log 0 = 0`. May return `-inf`.
#[inline]
pub(crate) fn log_kernel(y: &[u64], lambda: &[f64]) -> f64 {
    y.iter()
        .zip(lambda)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &p)| c as f64 * p.ln())
        .sum()
}

/// Log multinomial probability of `y` under `lambda`, optionally including the
/// multinomial coefficient.
pub fn log_multinomial_pmf(y: &[u64], lambda: &[f64], include_coefficient: bool) -> Result<f64> {
    if y.len() != lambda.len() {
        return Err(Error::dim(format!("{} counts vs {} probabilities", y.len(), lambda.len())));
    }
    let kernel = log_kernel(y, lambda);
    if !kernel.is_finite() {
        return Err(Error::numeric("positive count in a zero-probability category"));
    }
    Ok(if include_coefficient { kernel + log_multinomial_coefficient(y) } else { kernel })
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Log-likelihood of the non-spatial mixture, multinomial coefficients included.
pub fn standard_mixture_loglik(data: &CountMatrix, params: &ComponentParams, weights: &WeightVector) -> Result<f64> {
    let k = params.num_components();
    if params.num_categories() != data.num_categories() {
        return Err(Error::dim("category count differs between data and parameters"));
    }
    if weights.as_slice().len() != k {
        return Err(Error::dim("weight vector length differs from component count"));
    }
    let log_p: Vec<f64> = weights.as_slice().iter().map(|p| p.ln()).collect();
    let mut terms = vec![0.0; k];
    let mut total = 0.0;
    for (i, y) in data.rows().enumerate() {
        for (c, t) in terms.iter_mut().enumerate() {
            *t = log_p[c] + log_kernel(y, params.component(c));
        }
        total += log_sum_exp(&terms) + data.log_coefficient(i);
    }
    Ok(total)
}

/// Outcome of the generic-identifiability check `m ≥ 2K − 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Identifiability {
    Pass,
    Warn { min_total: u64, required: u64 },
}

/// Warns when the smallest row total is below `2K − 1`.
pub fn check_identifiability(data: &CountMatrix, k: usize) -> Identifiability {
    let required = (2 * k as u64).saturating_sub(1);
    let min_total = data.totals().iter().copied().min().unwrap_or(0);
    if min_total < required {
        Identifiability::Warn { min_total, required }
    } else {
        Identifiability::Pass
    }
}
