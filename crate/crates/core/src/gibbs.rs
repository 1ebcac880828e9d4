//! Gibbs-distributed label prior.
//!
//! The conditional prior of node `i` is a multinomial logit in the neighbour
//! agreement counts: `t_ik ∝ exp(α_k + β_k (n_ik − n_ik^c))`, with component 0
//! as the reference (`α_0 = β_0 = 0`).

use std::ops::{Deref, Index};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::em::Responsibilities;
use crate::error::{Error, Result};
use crate::graph::{neighbor_differences_at, AdjacencyGraph};
use crate::mixture::log_sum_exp;

/// Box applied to every Gibbs parameter during optimisation.
pub const PARAM_BOUND: f64 = 15.0;

/// Hard assignment of each node to a component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelField(Vec<usize>);

impl LabelField {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn uniform<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| rng.random_range(0..k)).collect())
    }

    pub fn validate(&self, n: usize, k: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::dim(format!("label field has {} entries, graph has {n} nodes", self.0.len())));
        }
        match self.0.iter().enumerate().find(|(_, &z)| z >= k) {
            Some((node, &label)) => Err(Error::LabelOutOfRange { node, label, k }),
            None => Ok(()),
        }
    }

    /// Number of nodes per component.
    pub fn occupancy(&self, k: usize) -> Vec<usize> {
        let mut counts = vec![0; k];
        for &z in &self.0 {
            counts[z] += 1;
        }
        counts
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [usize] {
        &mut self.0
    }
}

impl Deref for LabelField {
    type Target = [usize];

    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl Index<usize> for LabelField {
    type Output = usize;

    fn index(&self, i: usize) -> &usize {
        &self.0[i]
    }
}

/// Intercepts and interaction strengths of the Gibbs prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsParams {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl GibbsParams {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() || alpha.is_empty() {
            return Err(Error::dim("alpha and beta must have the same non-zero length"));
        }
        if alpha[0] != 0.0 || beta[0] != 0.0 {
            return Err(Error::invalid("reference component must have alpha = beta = 0"));
        }
        if alpha.iter().chain(&beta).any(|x| !x.is_finite()) {
            return Err(Error::invalid("Gibbs parameters must be finite"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn zeros(k: usize) -> Self {
        Self { alpha: vec![0.0; k], beta: vec![0.0; k] }
    }

    pub fn num_components(&self) -> usize {
        self.alpha.len()
    }

    /// Reorders components and re-references them so the new component 0 has
    /// zero parameters.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let a0 = self.alpha[perm[0]];
        let b0 = self.beta[perm[0]];
        Self {
            alpha: perm.iter().map(|&k| self.alpha[k] - a0).collect(),
            beta: perm.iter().map(|&k| self.beta[k] - b0).collect(),
        }
    }
}

/// Pairwise potential: −1 when both indicators are set, +1 otherwise.
pub fn potential(z_ik: u8, z_jk: u8) -> i32 {
    if z_ik == 1 && z_jk == 1 {
        -1
    } else {
        1
    }
}

/// Writes `log t_i·` for node `i` into `out`, using `diff` as scratch.
pub(crate) fn log_prior_at(
    graph: &AdjacencyGraph,
    labels: &[usize],
    params: &GibbsParams,
    i: usize,
    diff: &mut [f64],
    out: &mut [f64],
) {
    neighbor_differences_at(graph, labels, i, diff);
    for c in 0..out.len() {
        out[c] = params.alpha[c] + params.beta[c] * diff[c];
    }
    let lse = log_sum_exp(out);
    out.iter_mut().for_each(|x| *x -= lse);
}

/// Conditional prior probabilities `t_i·` of node `i` given the rest of the field.
pub fn conditional_prior(
    i: usize,
    labels: &LabelField,
    graph: &AdjacencyGraph,
    params: &GibbsParams,
) -> Result<Vec<f64>> {
    let k = params.num_components();
    labels.validate(graph.n(), k)?;
    if i >= graph.n() {
        return Err(Error::NodeOutOfRange { index: i, n: graph.n() });
    }
    let mut diff = vec![0.0; k];
    let mut out = vec![0.0; k];
    log_prior_at(graph, labels, params, i, &mut diff, &mut out);
    out.iter_mut().for_each(|x| *x = x.exp());
    Ok(out)
}

/// Draws an index from a vector of log-probabilities that already normalise.
pub(crate) fn sample_log_probs<R: Rng + ?Sized>(log_p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &lp) in log_p.iter().enumerate() {
        acc += lp.exp();
        if u < acc {
            return c;
        }
    }
    log_p.len() - 1
}

/// One single-site Gibbs sweep over the nodes in ascending order, each draw
/// conditioned on the partially updated field.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    labels: &mut LabelField,
    graph: &AdjacencyGraph,
    params: &GibbsParams,
    rng: &mut R,
) -> Result<()> {
    let k = params.num_components();
    labels.validate(graph.n(), k)?;
    let mut diff = vec![0.0; k];
    let mut log_t = vec![0.0; k];
    let z = labels.as_mut_slice();
    for i in 0..graph.n() {
        log_prior_at(graph, z, params, i, &mut diff, &mut log_t);
        z[i] = sample_log_probs(&log_t, rng);
    }
    Ok(())
}

/// Optimiser used for the Gibbs parameters in the M-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GibbsMethod {
    /// Damped Newton ascent with step halving.
    #[default]
    Newton,
    /// Simulated annealing followed by a Newton polish.
    Anneal,
}

impl std::str::FromStr for GibbsMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "newton" => Ok(GibbsMethod::Newton),
            "anneal" => Ok(GibbsMethod::Anneal),
            other => Err(Error::invalid(format!("unknown Gibbs method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub initial_temperature: f64,
    pub cooling: f64,
    pub epochs: usize,
    pub moves_per_epoch: usize,
    pub proposal_sd: f64,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        Self { initial_temperature: 1.0, cooling: 0.95, epochs: 200, moves_per_epoch: 10, proposal_sd: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GibbsFitOptions {
    pub method: GibbsMethod,
    /// Hold every β at zero and fit α only.
    pub pin_beta: bool,
    pub anneal: AnnealSchedule,
}

/// Precomputed neighbour differences `d_ik` for a fixed field.
struct Design<'a> {
    w: &'a Responsibilities,
    d: Vec<f64>,
    row_sums: Vec<f64>,
    k: usize,
}

impl<'a> Design<'a> {
    fn new(w: &'a Responsibilities, field: &LabelField, graph: &AdjacencyGraph) -> Result<Self> {
        let k = w.num_components();
        if w.n() != graph.n() {
            return Err(Error::dim("responsibilities and graph disagree on node count"));
        }
        field.validate(graph.n(), k)?;
        let mut d = vec![0.0; graph.n() * k];
        for i in 0..graph.n() {
            neighbor_differences_at(graph, field, i, &mut d[i * k..(i + 1) * k]);
        }
        let row_sums = (0..w.n()).map(|i| w.row(i).iter().sum()).collect();
        Ok(Self { w, d, row_sums, k })
    }

    fn n(&self) -> usize {
        self.row_sums.len()
    }

    /// Fills `t` (n×k) with the prior probabilities and returns the objective.
    fn eval(&self, alpha: &[f64], beta: &[f64], t: &mut [f64]) -> f64 {
        let k = self.k;
        let mut total = 0.0;
        for i in 0..self.n() {
            let eta = &mut t[i * k..(i + 1) * k];
            let d = &self.d[i * k..(i + 1) * k];
            for c in 0..k {
                eta[c] = alpha[c] + beta[c] * d[c];
            }
            let lse = log_sum_exp(eta);
            let w = self.w.row(i);
            for c in 0..k {
                let lt = eta[c] - lse;
                if w[c] > 0.0 {
                    total += w[c] * lt;
                }
                eta[c] = lt.exp();
            }
        }
        total
    }

    fn objective(&self, alpha: &[f64], beta: &[f64]) -> f64 {
        let mut t = vec![0.0; self.n() * self.k];
        self.eval(alpha, beta, &mut t)
    }

    /// Gradient in the (α_1, β_1, α_2, β_2, …) ordering.
    fn gradient(&self, t: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut g = vec![0.0; 2 * (k - 1)];
        for i in 0..self.n() {
            let w = self.w.row(i);
            for c in 1..k {
                let r = w[c] - self.row_sums[i] * t[i * k + c];
                g[2 * (c - 1)] += r;
                g[2 * (c - 1) + 1] += r * self.d[i * k + c];
            }
        }
        g
    }

    /// Negative Hessian (positive semi-definite) in the same ordering.
    fn neg_hessian(&self, t: &[f64]) -> DMatrix<f64> {
        let k = self.k;
        let p = 2 * (k - 1);
        let mut h = DMatrix::zeros(p, p);
        for i in 0..self.n() {
            let s = self.row_sums[i];
            if s == 0.0 {
                continue;
            }
            let ti = &t[i * k..(i + 1) * k];
            let di = &self.d[i * k..(i + 1) * k];
            for a in 1..k {
                for b in 1..k {
                    let cov = if a == b { ti[a] * (1.0 - ti[a]) } else { -ti[a] * ti[b] };
                    let v = s * cov;
                    let (ra, rb) = (2 * (a - 1), 2 * (b - 1));
                    h[(ra, rb)] += v;
                    h[(ra, rb + 1)] += v * di[b];
                    h[(ra + 1, rb)] += v * di[a];
                    h[(ra + 1, rb + 1)] += v * di[a] * di[b];
                }
            }
        }
        h
    }
}

fn unpack(theta: &[f64], k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut alpha = vec![0.0; k];
    let mut beta = vec![0.0; k];
    for c in 1..k {
        alpha[c] = theta[2 * (c - 1)];
        beta[c] = theta[2 * (c - 1) + 1];
    }
    (alpha, beta)
}

fn pack(params: &GibbsParams) -> Vec<f64> {
    let k = params.num_components();
    let mut theta = vec![0.0; 2 * (k - 1)];
    for c in 1..k {
        theta[2 * (c - 1)] = params.alpha[c].clamp(-PARAM_BOUND, PARAM_BOUND);
        theta[2 * (c - 1) + 1] = params.beta[c].clamp(-PARAM_BOUND, PARAM_BOUND);
    }
    theta
}

/// `G(α, β) = Σ_i Σ_k w_ik log t_ik` for the given field.
pub fn gibbs_objective(
    w: &Responsibilities,
    field: &LabelField,
    graph: &AdjacencyGraph,
    params: &GibbsParams,
) -> Result<f64> {
    let design = Design::new(w, field, graph)?;
    Ok(design.objective(&params.alpha, &params.beta))
}

/// Analytic gradient of [`gibbs_objective`] with respect to the free
/// parameters, ordered `(α_1, β_1, α_2, β_2, …)`.
pub fn gibbs_gradient(
    w: &Responsibilities,
    field: &LabelField,
    graph: &AdjacencyGraph,
    params: &GibbsParams,
) -> Result<Vec<f64>> {
    let design = Design::new(w, field, graph)?;
    let mut t = vec![0.0; design.n() * design.k];
    design.eval(&params.alpha, &params.beta, &mut t);
    Ok(design.gradient(&t))
}

/// Maximises `G(α, β)` starting from `init`. The returned parameters never
/// have a lower objective than `init` (unless `pin_beta` discards a non-zero
/// initial β).
pub fn fit_gibbs_params<R: Rng + ?Sized>(
    w: &Responsibilities,
    field: &LabelField,
    graph: &AdjacencyGraph,
    init: &GibbsParams,
    opts: &GibbsFitOptions,
    rng: &mut R,
) -> Result<GibbsParams> {
    let k = w.num_components();
    if init.num_components() != k {
        return Err(Error::dim("initial Gibbs parameters have the wrong component count"));
    }
    let design = Design::new(w, field, graph)?;
    let start = design.objective(&init.alpha, &init.beta);
    if !start.is_finite() {
        return Err(Error::numeric("Gibbs objective is not finite at the initial parameters"));
    }
    if k == 1 {
        return Ok(GibbsParams::zeros(1));
    }
    if opts.pin_beta {
        return Ok(intercepts_only(w));
    }
    let theta = match opts.method {
        GibbsMethod::Newton => newton(&design, pack(init)),
        GibbsMethod::Anneal => {
            let best = anneal(&design, pack(init), &opts.anneal, rng);
            newton(&design, best)
        }
    };
    let (alpha, beta) = unpack(&theta, k);
    if design.objective(&alpha, &beta) < start {
        return Ok(init.clone());
    }
    Ok(GibbsParams { alpha, beta })
}

/// With β ≡ 0 the prior is field-independent and `α_k = log(Σ_i w_ik / Σ_i w_i0)`.
pub(crate) fn intercepts_only(w: &Responsibilities) -> GibbsParams {
    let k = w.num_components();
    let sums = w.column_sums();
    let log_ref = sums[0].max(f64::MIN_POSITIVE).ln();
    let mut alpha = vec![0.0; k];
    for c in 1..k {
        alpha[c] = (sums[c].max(f64::MIN_POSITIVE).ln() - log_ref).clamp(-PARAM_BOUND, PARAM_BOUND);
    }
    GibbsParams { alpha, beta: vec![0.0; k] }
}

fn newton(design: &Design<'_>, mut theta: Vec<f64>) -> Vec<f64> {
    let k = design.k;
    let p = theta.len();
    let mut t = vec![0.0; design.n() * k];
    let (a, b) = unpack(&theta, k);
    let mut value = design.eval(&a, &b, &mut t);
    let mut trial_t = vec![0.0; t.len()];
    for _ in 0..200 {
        let grad = design.gradient(&t);
        // coordinates pinned at the box with an outward gradient stay fixed
        let free: Vec<usize> = (0..p)
            .filter(|&q| {
                !((theta[q] >= PARAM_BOUND && grad[q] > 0.0) || (theta[q] <= -PARAM_BOUND && grad[q] < 0.0))
            })
            .collect();
        let gmax = free.iter().map(|&q| grad[q].abs()).fold(0.0, f64::max);
        if free.is_empty() || gmax < 1e-10 * (1.0 + design.n() as f64) {
            break;
        }
        let full_h = design.neg_hessian(&t);
        let h = DMatrix::from_fn(free.len(), free.len(), |r, c| full_h[(free[r], free[c])]);
        let g = DVector::from_iterator(free.len(), free.iter().map(|&q| grad[q]));
        let scale = h.diagonal().iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let mut ridge = 1e-10 * scale;
        let step = loop {
            let damped = &h + DMatrix::identity(free.len(), free.len()) * ridge;
            if let Some(chol) = damped.cholesky() {
                break chol.solve(&g);
            }
            ridge *= 10.0;
        };
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let mut cand = theta.clone();
            for (r, &q) in free.iter().enumerate() {
                cand[q] = (theta[q] + s * step[r]).clamp(-PARAM_BOUND, PARAM_BOUND);
            }
            let (a, b) = unpack(&cand, k);
            let v = design.eval(&a, &b, &mut trial_t);
            if v >= value {
                let gain = v - value;
                theta = cand;
                value = v;
                std::mem::swap(&mut t, &mut trial_t);
                accepted = gain > 0.0 || s == 1.0;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    theta
}

fn anneal<R: Rng + ?Sized>(design: &Design<'_>, start: Vec<f64>, sched: &AnnealSchedule, rng: &mut R) -> Vec<f64> {
    let k = design.k;
    let proposal = Normal::new(0.0, sched.proposal_sd).expect("proposal sd must be positive and finite");
    let mut t = vec![0.0; design.n() * k];
    let mut current = start;
    let (a, b) = unpack(&current, k);
    let mut value = design.eval(&a, &b, &mut t);
    let mut best = current.clone();
    let mut best_value = value;
    let mut temperature = sched.initial_temperature;
    for _ in 0..sched.epochs {
        for _ in 0..sched.moves_per_epoch {
            let cand: Vec<f64> = current
                .iter()
                .map(|&x| (x + proposal.sample(rng)).clamp(-PARAM_BOUND, PARAM_BOUND))
                .collect();
            let (a, b) = unpack(&cand, k);
            let v = design.eval(&a, &b, &mut t);
            let u: f64 = rng.random();
            if v >= value || u < ((v - value) / temperature).exp() {
                current = cand;
                value = v;
                if value > best_value {
                    best_value = value;
                    best = current.clone();
                }
            }
        }
        temperature *= sched.cooling;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{neighbor_counts, LatticeScheme};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star() -> AdjacencyGraph {
        AdjacencyGraph::from_edges(6, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap()
    }

    #[test]
    fn potential_values() {
        assert_eq!(potential(1, 1), -1);
        assert_eq!(potential(1, 0), 1);
        assert_eq!(potential(0, 1), 1);
        assert_eq!(potential(0, 0), 1);
    }

    #[test]
    fn null_parameters_give_uniform_prior() {
        let g = star();
        let z = LabelField::new(vec![0, 1, 2, 1, 1, 0]);
        let t = conditional_prior(0, &z, &g, &GibbsParams::zeros(3)).unwrap();
        for p in t {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn strong_neighbourhood_example() {
        let g = star();
        let z = LabelField::new(vec![0, 1, 1, 1, 1, 0]);
        let params = GibbsParams::new(vec![0.0, 2.048], vec![0.0, 0.781]).unwrap();
        let t = conditional_prior(0, &z, &g, &params).unwrap();
        let logistic = 1.0 / (1.0 + (-(2.048 + 0.781 * 4.0f64)).exp());
        assert!((t[1] - logistic).abs() < 1e-14);
        assert!((t[1] - 0.994_358_792_716_315_2).abs() < 1e-12);
    }

    #[test]
    fn isolated_node_uses_intercepts_only() {
        let g = star();
        let params = GibbsParams::new(vec![0.0, 0.5, -1.0], vec![0.0, 3.0, 2.0]).unwrap();
        let z = LabelField::new(vec![1, 1, 1, 1, 1, 2]);
        let t = conditional_prior(5, &z, &g, &params).unwrap();
        let norm: f64 = params.alpha.iter().map(|a| a.exp()).sum();
        for c in 0..3 {
            assert!((t[c] - params.alpha[c].exp() / norm).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(GibbsParams::new(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(GibbsParams::new(vec![0.0, f64::NAN], vec![0.0, 0.0]).is_err());
        assert!(GibbsParams::new(vec![0.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn sweep_is_reproducible() {
        let g = AdjacencyGraph::lattice(6, LatticeScheme::Rook).unwrap();
        let params = GibbsParams::new(vec![0.0, 0.3, -0.2], vec![0.0, 0.5, 0.8]).unwrap();
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut z = LabelField::uniform(g.n(), 3, &mut rng);
            for _ in 0..5 {
                gibbs_sweep(&mut z, &g, &params, &mut rng).unwrap();
            }
            z
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn null_sweeps_are_uniform() {
        let g = AdjacencyGraph::lattice(10, LatticeScheme::Rook).unwrap();
        let params = GibbsParams::zeros(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut z = LabelField::uniform(g.n(), 3, &mut rng);
        let mut counts = [0usize; 3];
        for _ in 0..120 {
            gibbs_sweep(&mut z, &g, &params, &mut rng).unwrap();
            for &c in z.iter() {
                counts[c] += 1;
            }
        }
        let total = counts.iter().sum::<usize>() as f64;
        let se = (total * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - total / 3.0).abs() < 3.0 * se, "{counts:?}");
        }
    }

    #[test]
    fn single_node_draws_softmax_alpha() {
        let g = AdjacencyGraph::from_edges(1, &[]).unwrap();
        let params = GibbsParams::new(vec![0.0, 1.0], vec![0.0, 5.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z = LabelField::new(vec![0]);
        let draws = 20_000;
        let mut ones = 0;
        for _ in 0..draws {
            gibbs_sweep(&mut z, &g, &params, &mut rng).unwrap();
            ones += z[0];
        }
        let p = 1.0f64.exp() / (1.0 + 1.0f64.exp());
        let se = (draws as f64 * p * (1.0 - p)).sqrt();
        assert!((ones as f64 - draws as f64 * p).abs() < 3.0 * se);
    }

    fn toy_weights(n: usize, seed: u64) -> Responsibilities {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|_| {
                let a: f64 = rng.random_range(0.05..0.95);
                vec![1.0 - a, a]
            })
            .collect();
        Responsibilities::from_rows(rows).unwrap()
    }

    #[test]
    fn stationary_point_is_returned() {
        let g = AdjacencyGraph::lattice(3, LatticeScheme::Rook).unwrap();
        let z = LabelField::new(vec![0, 1, 1, 0, 1, 0, 0, 0, 1]);
        let params = GibbsParams::new(vec![0.0, 0.4], vec![0.0, 0.3]).unwrap();
        let rows = (0..g.n()).map(|i| conditional_prior(i, &z, &g, &params).unwrap()).collect();
        let w = Responsibilities::from_rows(rows).unwrap();
        let grad = gibbs_gradient(&w, &z, &g, &params).unwrap();
        assert!(grad.iter().all(|x| x.abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fit = fit_gibbs_params(&w, &z, &g, &params, &GibbsFitOptions::default(), &mut rng).unwrap();
        assert!((fit.alpha[1] - 0.4).abs() < 1e-8 && (fit.beta[1] - 0.3).abs() < 1e-8);
    }

    #[test]
    fn newton_ascends_and_matches_anneal() {
        let g = AdjacencyGraph::lattice(4, LatticeScheme::Queen).unwrap();
        let w = toy_weights(g.n(), 8);
        let z = LabelField::new((0..g.n()).map(|i| (i / 5) % 2).collect());
        let init = GibbsParams::new(vec![0.0, -1.0], vec![0.0, 1.0]).unwrap();
        let start = gibbs_objective(&w, &z, &g, &init).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let newton = fit_gibbs_params(&w, &z, &g, &init, &GibbsFitOptions::default(), &mut rng).unwrap();
        let opts = GibbsFitOptions { method: GibbsMethod::Anneal, ..Default::default() };
        let annealed = fit_gibbs_params(&w, &z, &g, &init, &opts, &mut rng).unwrap();
        let gn = gibbs_objective(&w, &z, &g, &newton).unwrap();
        let ga = gibbs_objective(&w, &z, &g, &annealed).unwrap();
        assert!(gn >= start);
        assert!((gn - ga).abs() < 1e-8);
        assert!(gibbs_gradient(&w, &z, &g, &newton).unwrap().iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn pinned_beta_gives_proportion_intercepts() {
        let g = AdjacencyGraph::lattice(3, LatticeScheme::Rook).unwrap();
        let w = toy_weights(g.n(), 2);
        let z = LabelField::new(vec![0; 9]);
        let opts = GibbsFitOptions { pin_beta: true, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fit = fit_gibbs_params(&w, &z, &g, &GibbsParams::zeros(2), &opts, &mut rng).unwrap();
        let sums = w.column_sums();
        assert!((fit.alpha[1] - (sums[1] / sums[0]).ln()).abs() < 1e-12);
        assert_eq!(fit.beta, vec![0.0, 0.0]);
    }

    #[test]
    fn saturating_weights_hit_the_box() {
        // component 1 never used: α_1 runs to the lower bound instead of diverging
        let g = AdjacencyGraph::lattice(3, LatticeScheme::Rook).unwrap();
        let w = Responsibilities::from_rows(vec![vec![1.0, 0.0]; 9]).unwrap();
        let z = LabelField::new(vec![0; 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let fit = fit_gibbs_params(&w, &z, &g, &GibbsParams::zeros(2), &GibbsFitOptions::default(), &mut rng).unwrap();
        assert!(fit.alpha[1].is_finite() && fit.beta[1].is_finite());
        assert!(fit.alpha[1] - fit.beta[1] * 2.0 < -10.0);
    }

    fn arb_field() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, Vec<f64>)> {
        (
            proptest::collection::vec(0usize..3, 16),
            proptest::collection::vec(-3.0f64..3.0, 2),
            proptest::collection::vec(-2.0f64..2.0, 2),
        )
    }

    proptest! {
        #[test]
        fn prior_properties((labels, a, b) in arb_field(), shift in -5.0f64..5.0) {
            let g = AdjacencyGraph::lattice(4, LatticeScheme::Queen).unwrap();
            let z = LabelField::new(labels);
            let params = GibbsParams::new(vec![0.0, a[0], a[1]], vec![0.0, b[0], b[1]]).unwrap();
            let shifted = GibbsParams { alpha: params.alpha.iter().map(|x| x + shift).collect(), beta: params.beta.clone() };
            let counts = neighbor_counts(&g, &z, 3).unwrap();
            for i in 0..g.n() {
                let t = conditional_prior(i, &z, &g, &params).unwrap();
                prop_assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(t.iter().all(|&p| p > 0.0 && p < 1.0));
                let ts = conditional_prior(i, &z, &g, &shifted).unwrap();
                for c in 0..3 {
                    prop_assert!((t[c] - ts[c]).abs() < 1e-12);
                }
                let inside: u32 = (0..3).map(|c| counts.inside(i, c)).sum();
                prop_assert_eq!(inside as usize, g.degree(i));
                // potential-sum form of the same logits
                let mut logits = [0.0; 3];
                for c in 0..3 {
                    // t_ik is evaluated at z_ik = 1
                    let energy: i32 = g.neighbors(i).iter().map(|&j| potential(1, u8::from(z[j] == c))).sum();
                    logits[c] = params.alpha[c] - params.beta[c] * energy as f64;
                }
                let norm: f64 = logits.iter().map(|x| x.exp()).sum();
                for c in 0..3 {
                    prop_assert!((t[c] - logits[c].exp() / norm).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn zero_beta_ignores_field(l1 in proptest::collection::vec(0usize..3, 9), l2 in proptest::collection::vec(0usize..3, 9), a in -3.0f64..3.0) {
            let g = AdjacencyGraph::lattice(3, LatticeScheme::Rook).unwrap();
            let params = GibbsParams::new(vec![0.0, a, -a], vec![0.0; 3]).unwrap();
            for i in 0..9 {
                let t1 = conditional_prior(i, &LabelField::new(l1.clone()), &g, &params).unwrap();
                let t2 = conditional_prior(i, &LabelField::new(l2.clone()), &g, &params).unwrap();
                prop_assert_eq!(t1, t2);
            }
        }

        #[test]
        fn gradient_matches_central_differences(seed in 0u64..1000, a in proptest::collection::vec(-2.0f64..2.0, 4)) {
            let g = AdjacencyGraph::lattice(4, LatticeScheme::Rook).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let z = LabelField::uniform(g.n(), 3, &mut rng);
            let rows = (0..g.n()).map(|_| {
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(0.01..1.0)).collect();
                let s: f64 = v.iter().sum();
                v.into_iter().map(|x| x / s).collect()
            }).collect();
            let w = Responsibilities::from_rows(rows).unwrap();
            let params = GibbsParams::new(vec![0.0, a[0], a[1]], vec![0.0, a[2], a[3]]).unwrap();
            let grad = gibbs_gradient(&w, &z, &g, &params).unwrap();
            let h = 1e-5;
            for q in 0..4 {
                let mut theta = pack(&params);
                theta[q] += h;
                let (ap, bp) = unpack(&theta, 3);
                theta[q] -= 2.0 * h;
                let (am, bm) = unpack(&theta, 3);
                let fp = gibbs_objective(&w, &z, &g, &GibbsParams { alpha: ap, beta: bp }).unwrap();
                let fm = gibbs_objective(&w, &z, &g, &GibbsParams { alpha: am, beta: bm }).unwrap();
                let fd = (fp - fm) / (2.0 * h);
                prop_assert!((fd - grad[q]).abs() <= 1e-6 * (1.0 + grad[q].abs()), "q={} fd={} an={}", q, fd, grad[q]);
            }
        }
    }
}
