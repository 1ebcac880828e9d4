//! Model selection: free-parameter counts, BIC, K sweeps and the likelihood
//! ratio test between the standard and spatial families.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::em::{fit, fit_with_warm_start, FitConfig, FitResult};
use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::mixture::CountMatrix;

/// Free parameters: `K(J−1)` multinomial probabilities plus `K−1` intercepts,
/// and `K−1` interaction strengths for the spatial family.
pub fn free_params(k: usize, j: usize, spatial: bool) -> usize {
    let gibbs = if spatial { 2 * (k - 1) } else { k - 1 };
    gibbs + k * (j - 1)
}

/// `2·loglik − d·log n`; larger is better.
pub fn bic(loglik: f64, d: usize, n: usize) -> f64 {
    2.0 * loglik - d as f64 * (n as f64).ln()
}

/// Index of the largest BIC among the finite entries, first one on ties.
pub fn argmax_bic(bics: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (idx, &b) in bics.iter().enumerate() {
        if b.is_finite() && best.is_none_or(|m| b > bics[m]) {
            best = Some(idx);
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub k: usize,
    pub loglik: Option<f64>,
    pub d: usize,
    pub bic: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub fit: Option<FitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub records: Vec<SweepRecord>,
    pub selected_k: Option<usize>,
}

/// Fits every `K` in `ks` and picks the BIC maximiser. With `warm_start`, each
/// `K ≥ 3` whose predecessor was fitted successfully starts from that solution
/// plus one random component.
pub fn sweep(
    data: &CountMatrix,
    graph: &AdjacencyGraph,
    ks: &[usize],
    cfg: &FitConfig,
    warm_start: bool,
) -> Result<SweepResult> {
    if ks.is_empty() {
        return Err(Error::invalid("empty K range"));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) || ks[0] == 0 {
        return Err(Error::invalid("K range must be positive and strictly ascending"));
    }
    let j = data.num_categories();
    let make_record = |k: usize, outcome: Result<FitResult>| -> SweepRecord {
        let d = free_params(k, j, cfg.spatial);
        match outcome {
            Ok(f) => SweepRecord { k, loglik: Some(f.best_loglik), d, bic: Some(f.bic), error: None, fit: Some(f) },
            Err(e) => SweepRecord { k, loglik: None, d, bic: None, error: Some(e.to_string()), fit: None },
        }
    };
    let records: Vec<SweepRecord> = if warm_start {
        let mut out: Vec<SweepRecord> = Vec::with_capacity(ks.len());
        for &k in ks {
            let kcfg = FitConfig { k, ..cfg.clone() };
            let previous = out.last().filter(|r| r.k + 1 == k && k >= 3).and_then(|r| r.fit.as_ref());
            let outcome = match previous {
                Some(prev) => fit_with_warm_start(data, graph, &kcfg, prev),
                None => fit(data, graph, &kcfg),
            };
            out.push(make_record(k, outcome));
        }
        out
    } else {
        ks.par_iter().map(|&k| make_record(k, fit(data, graph, &FitConfig { k, ..cfg.clone() }))).collect()
    };
    let bics: Vec<f64> = records.iter().map(|r| r.bic.unwrap_or(f64::NEG_INFINITY)).collect();
    let selected_k = argmax_bic(&bics).map(|idx| records[idx].k);
    Ok(SweepResult { records, selected_k })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub warning: Option<String>,
}

/// Slack below zero tolerated in the LRT statistic before warning.
pub const LRT_TOLERANCE: f64 = 1e-6;

/// Likelihood ratio test of the spatial model against the nested standard
/// model, with `K − 1` degrees of freedom (the β's). The chi-square reference
/// is asymptotic; it is only approximate when the fitted β's sit on the
/// optimisation box or the spatial fit is a stochastic best snapshot.
pub fn lrt(loglik_spatial: f64, loglik_standard: f64, k: usize) -> Result<LrtResult> {
    if k < 2 {
        return Err(Error::invalid("LRT needs K ≥ 2"));
    }
    let statistic = 2.0 * (loglik_spatial - loglik_standard);
    if !statistic.is_finite() {
        return Err(Error::numeric("non-finite LRT statistic"));
    }
    let warning = (statistic < -LRT_TOLERANCE)
        .then(|| format!("negative LRT statistic {statistic:.6}: the spatial fit is worse than the nested standard fit"));
    let df = k - 1;
    let p_value = chi_square_sf(statistic.max(0.0), df);
    Ok(LrtResult { statistic, df, p_value, warning })
}

/// Chi-square upper tail via the regularised upper incomplete gamma function.
pub fn chi_square_sf(x: f64, df: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0)
}
