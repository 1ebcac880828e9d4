//! Synthetic lattice datasets and replicated recovery studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::em::{fit, FitConfig};
use crate::error::{Error, Result};
use crate::eval::ari;
use crate::gibbs::{gibbs_sweep, GibbsParams, LabelField};
use crate::graph::{AdjacencyGraph, LatticeScheme};
use crate::mixture::{ComponentParams, CountMatrix};

/// Two ten-category components: the first favours categories 1–5 (0.12 vs
/// 0.08), the second categories 6–10.
pub fn reference_lambda() -> Vec<Vec<f64>> {
    let mut first = vec![0.12; 5];
    first.extend([0.08; 5]);
    let mut second = vec![0.08; 5];
    second.extend([0.12; 5]);
    vec![first, second]
}

/// SplitMix64 finaliser, used to derive independent child seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Child seed `index` of `parent`.
pub fn derive_seed(parent: u64, index: u64) -> u64 {
    splitmix64(parent ^ splitmix64(index.wrapping_add(0x5EED)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub side: usize,
    pub scheme: LatticeScheme,
    /// Per-region multinomial total.
    pub m: u64,
    pub lambda: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Gibbs sweeps from a uniform field before the labels are taken.
    pub burn_in: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            side: 10,
            scheme: LatticeScheme::Rook,
            m: 100,
            lambda: reference_lambda(),
            alpha: vec![0.0, 0.0],
            beta: vec![0.0, 0.1],
            burn_in: 500,
            replicates: 100,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn k(&self) -> usize {
        self.lambda.len()
    }

    pub fn j(&self) -> usize {
        self.lambda.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        ComponentParams::new(self.lambda.clone())?;
        if self.j() < 2 {
            return Err(Error::invalid("need at least two categories"));
        }
        GibbsParams::new(self.alpha.clone(), self.beta.clone())?;
        if self.alpha.len() != self.k() {
            return Err(Error::dim("alpha/beta length must equal the number of components"));
        }
        if self.side < 2 {
            return Err(Error::LatticeTooSmall(self.side));
        }
        if self.m == 0 {
            return Err(Error::invalid("multinomial total must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub counts: CountMatrix,
    pub truth: LabelField,
    pub graph: AdjacencyGraph,
}

fn sample_multinomial<R: Rng + ?Sized>(m: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut left = m;
    let mut mass = 1.0;
    for (j, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j + 1 == probs.len() {
            out[j] = left;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(left, q).expect("binomial probability in [0, 1]").sample(rng);
        out[j] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

/// Gibbs-samples a label field on the lattice and draws multinomial counts
/// for each node from its component.
pub fn simulate_dataset(cfg: &SimConfig, seed: u64) -> Result<SimDataset> {
    cfg.validate()?;
    let graph = AdjacencyGraph::lattice(cfg.side, cfg.scheme)?;
    let params = GibbsParams::new(cfg.alpha.clone(), cfg.beta.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = LabelField::uniform(graph.n(), cfg.k(), &mut rng);
    for _ in 0..cfg.burn_in {
        gibbs_sweep(&mut truth, &graph, &params, &mut rng)?;
    }
    let rows = truth.iter().map(|&z| sample_multinomial(cfg.m, &cfg.lambda[z], &mut rng)).collect();
    Ok(SimDataset { counts: CountMatrix::new(rows)?, truth, graph })
}

/// Five-number summary with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self { min: v[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: v[v.len() - 1] })
    }

    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub side: usize,
    pub beta: Vec<f64>,
    pub replicates: usize,
    /// ARI per successful replicate, in replicate order.
    pub aris: Vec<f64>,
    pub failures: Vec<(usize, String)>,
    pub summary: Option<Summary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub cells: Vec<CellReport>,
}

/// Simulates `replicates` datasets per configuration, fits each with the
/// template (K set to the generator's K, seed derived per replicate) and
/// records the ARI against the true labels.
pub fn run_study(cfgs: &[SimConfig], fit_template: &FitConfig) -> Result<SimReport> {
    if cfgs.is_empty() {
        return Err(Error::invalid("no study configurations"));
    }
    for cfg in cfgs {
        cfg.validate()?;
    }
    let cells = cfgs
        .iter()
        .map(|cfg| {
            let outcomes: Vec<Result<f64>> = (0..cfg.replicates)
                .into_par_iter()
                .map(|rep| {
                    let rep_seed = derive_seed(cfg.seed, rep as u64);
                    let sim = simulate_dataset(cfg, rep_seed)?;
                    let fit_cfg = FitConfig { k: cfg.k(), seed: derive_seed(rep_seed, 1), ..fit_template.clone() };
                    let result = fit(&sim.counts, &sim.graph, &fit_cfg)?;
                    ari(&result.labels, &sim.truth)
                })
                .collect();
            let mut aris = Vec::with_capacity(outcomes.len());
            let mut failures = Vec::new();
            for (rep, outcome) in outcomes.into_iter().enumerate() {
                match outcome {
                    Ok(v) => aris.push(v),
                    Err(e) => failures.push((rep, e.to_string())),
                }
            }
            CellReport {
                side: cfg.side,
                beta: cfg.beta.clone(),
                replicates: cfg.replicates,
                summary: Summary::from_values(&aris),
                aris,
                failures,
            }
        })
        .collect();
    Ok(SimReport { cells })
}
