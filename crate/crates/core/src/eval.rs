//! Clustering agreement and spatial autocorrelation diagnostics.

use std::collections::HashMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;

fn choose2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Adjusted Rand Index (Hubert–Arabie) between two labellings of the same items.
///
/// Returns 1 when both partitions are identical up to relabelling, including
/// the degenerate case where both are all-singletons or both a single cluster.
pub fn ari<A: Hash + Eq, B: Hash + Eq>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim(format!("partitions have {} and {} items", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::invalid("ARI needs at least two items"));
    }
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    let mut cells: HashMap<(&A, &B), usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
        *cells.entry((x, y)).or_default() += 1;
    }
    let index: f64 = cells.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(a.len());
    let max = 0.5 * (sum_a + sum_b);
    let denom = max - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}

/// Midpoints of `groups` consecutive five-year age bands starting at 0; the
/// last band is open-ended and gets the midpoint it would have if closed
/// (87.5 for 18 bands).
pub fn default_age_midpoints(groups: usize) -> Vec<f64> {
    (0..groups).map(|g| 2.5 + 5.0 * g as f64).collect()
}

/// Count-weighted mean of the category midpoints.
pub fn mean_age(counts: &[u64], midpoints: &[f64]) -> Result<f64> {
    if counts.len() != midpoints.len() {
        return Err(Error::dim(format!("{} counts vs {} midpoints", counts.len(), midpoints.len())));
    }
    if midpoints.windows(2).any(|w| w[0].is_nan() || w[1].is_nan() || w[0] >= w[1]) {
        return Err(Error::invalid("midpoints must be strictly ascending"));
    }
    let m: u64 = counts.iter().sum();
    if m == 0 {
        return Err(Error::invalid("mean age of an empty region"));
    }
    Ok(counts.iter().zip(midpoints).map(|(&c, &x)| c as f64 * x).sum::<f64>() / m as f64)
}

/// Spatial weight scheme for Moran's I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoranWeights {
    /// `w_ij = A_ij`.
    #[default]
    Binary,
    /// `w_ij = A_ij / |N_i|`.
    RowStandardized,
}

fn check_moran_inputs(x: &[f64], graph: &AdjacencyGraph) -> Result<()> {
    if x.len() != graph.n() {
        return Err(Error::dim(format!("{} values for {} nodes", x.len(), graph.n())));
    }
    if graph.edge_count() == 0 {
        return Err(Error::invalid("Moran's I needs a graph with at least one edge"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("values must be finite"));
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 1e-12 * hi.abs().max(lo.abs()) {
        return Err(Error::invalid("variable is constant; Moran's I is undefined"));
    }
    Ok(())
}

fn moran_unchecked(x: &[f64], graph: &AdjacencyGraph, weights: MoranWeights) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = z.iter().map(|v| v * v).sum();
    let mut num = 0.0;
    let mut s0 = 0.0;
    for i in 0..graph.n() {
        let nb = graph.neighbors(i);
        if nb.is_empty() {
            continue;
        }
        let row: f64 = nb.iter().map(|&j| z[j]).sum::<f64>() * z[i];
        match weights {
            MoranWeights::Binary => {
                num += row;
                s0 += nb.len() as f64;
            }
            MoranWeights::RowStandardized => {
                num += row / nb.len() as f64;
                s0 += 1.0;
            }
        }
    }
    n / s0 * num / denom
}

/// Moran's I of a node-indexed variable.
pub fn morans_i(x: &[f64], graph: &AdjacencyGraph, weights: MoranWeights) -> Result<f64> {
    check_moran_inputs(x, graph)?;
    Ok(moran_unchecked(x, graph, weights))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub i: f64,
    /// One-sided (greater) permutation p-value, `(1 + #{I_perm ≥ I}) / (1 + P)`.
    pub p_value: f64,
    pub n_permutations: usize,
}

/// Moran's I with a one-sided permutation test.
pub fn moran_permutation_test(
    x: &[f64],
    graph: &AdjacencyGraph,
    weights: MoranWeights,
    n_permutations: usize,
    seed: u64,
) -> Result<MoranResult> {
    check_moran_inputs(x, graph)?;
    if n_permutations < 99 {
        return Err(Error::invalid("at least 99 permutations are required"));
    }
    let observed = moran_unchecked(x, graph, weights);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = x.to_vec();
    let slack = 1e-12 * observed.abs().max(1.0);
    let mut extreme = 0usize;
    for _ in 0..n_permutations {
        perm.shuffle(&mut rng);
        if moran_unchecked(&perm, graph, weights) >= observed - slack {
            extreme += 1;
        }
    }
    Ok(MoranResult {
        i: observed,
        p_value: (1 + extreme) as f64 / (1 + n_permutations) as f64,
        n_permutations,
    })
}
