//! Simulated-field classification EM.
//!
//! Each iteration draws a realisation of the hidden label field from the
//! Gibbs conditionals, computes posterior memberships under the prior that
//! field induces, hardens them, and re-estimates the multinomial and Gibbs
//! parameters. The approximated observed log-likelihood is tracked per
//! iteration and the best snapshot is returned once it has not improved for
//! `patience` iterations. With `spatial` off the field step is skipped, β is
//! held at zero and the loop is ordinary EM for a multinomial mixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{
    fit_gibbs_params, gibbs_sweep, intercepts_only, log_prior_at, AnnealSchedule, GibbsFitOptions, GibbsMethod,
    GibbsParams, LabelField,
};
use crate::graph::AdjacencyGraph;
use crate::mixture::{
    check_identifiability, floor_simplex, log_kernel, log_sum_exp, ComponentParams, CountMatrix, Identifiability,
    LAMBDA_FLOOR,
};
use crate::select::{bic, free_params};

/// Column total below which a component counts as empty in the M-step.
pub const EMPTY_COMPONENT_WEIGHT: f64 = 1e-8;

/// Posterior membership probabilities, one row per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    n: usize,
    k: usize,
    w: Vec<f64>,
}

impl Responsibilities {
    /// Validates that every row lies on the probability simplex.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n == 0 || k == 0 {
            return Err(Error::invalid("empty responsibilities"));
        }
        let mut w = Vec::with_capacity(n * k);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::dim(format!("responsibility row {i} has {} entries, expected {k}", row.len())));
            }
            if row.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::invalid(format!("responsibility row {i} has an entry outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-10 {
                return Err(Error::invalid(format!("responsibility row {i} sums to {s}")));
            }
            w.extend(row);
        }
        Ok(Self { n, k, w })
    }

    /// Indicator rows for a hard labelling.
    pub fn one_hot(labels: &LabelField, k: usize) -> Result<Self> {
        labels.validate(labels.len(), k)?;
        let mut w = vec![0.0; labels.len() * k];
        for (i, &z) in labels.iter().enumerate() {
            w[i * k + z] = 1.0;
        }
        Ok(Self { n: labels.len(), k, w })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_components(&self) -> usize {
        self.k
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.w[i * self.k..(i + 1) * self.k]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.w[i * self.k + k]
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.k];
        for row in self.w.chunks_exact(self.k) {
            for (s, &x) in sums.iter_mut().zip(row) {
                *s += x;
            }
        }
        sums
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.w.chunks_exact(self.k).map(<[f64]>::to_vec).collect()
    }
}

/// Settings for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop after this many successive iterations without a larger log-likelihood.
    pub patience: usize,
    pub n_starts: usize,
    pub short_run_iter: usize,
    pub seed: u64,
    /// Gibbs sweeps used to simulate the field each iteration.
    pub field_sweeps: usize,
    pub gibbs_method: GibbsMethod,
    pub anneal: AnnealSchedule,
    /// Off: standard multinomial mixture (β ≡ 0, no field).
    pub spatial: bool,
    /// Keep the field step but hold β at zero.
    pub pin_beta: bool,
    /// Fit the Gibbs parameters against the C-step labels instead of the
    /// soft responsibilities.
    pub hard_gibbs_weights: bool,
    /// Smallest log-likelihood gain that counts as an improvement.
    pub min_improvement: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 2,
            max_iter: 1000,
            patience: 50,
            n_starts: 20,
            short_run_iter: 10,
            seed: 0,
            field_sweeps: 1,
            gibbs_method: GibbsMethod::Newton,
            anneal: AnnealSchedule::default(),
            spatial: true,
            pin_beta: false,
            hard_gibbs_weights: false,
            min_improvement: 1e-6,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience must be at least 1"));
        }
        if self.max_iter < self.patience {
            return Err(Error::invalid("max_iter must be at least patience"));
        }
        if self.n_starts == 0 {
            return Err(Error::invalid("n_starts must be at least 1"));
        }
        if self.min_improvement.is_nan() || self.min_improvement < 0.0 {
            return Err(Error::invalid("min_improvement must be non-negative"));
        }
        Ok(())
    }

    fn gibbs_options(&self) -> GibbsFitOptions {
        GibbsFitOptions { method: self.gibbs_method, pin_beta: self.pin_beta || !self.spatial, anneal: self.anneal }
    }
}

/// Starting point of a single EM chain.
#[derive(Debug, Clone, PartialEq)]
pub struct FitInit {
    pub component: ComponentParams,
    pub gibbs: GibbsParams,
    /// Initial field; ignored when the fit is not spatial.
    pub field: Option<LabelField>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub k: usize,
    pub spatial: bool,
    pub component: ComponentParams,
    pub gibbs: GibbsParams,
    /// Row-argmax of `w`, ties to the lowest index.
    pub labels: LabelField,
    pub w: Responsibilities,
    /// Field the best snapshot was evaluated on (empty for non-spatial fits).
    pub field: LabelField,
    pub loglik_trace: Vec<f64>,
    pub best_loglik: f64,
    pub best_iteration: usize,
    pub d: usize,
    pub bic: f64,
    pub iterations: usize,
    pub seed: u64,
    pub converged: bool,
    pub identifiability: Identifiability,
    pub warnings: Vec<String>,
}

impl FitResult {
    /// Regions per component under the hard labels.
    pub fn occupancy(&self) -> Vec<usize> {
        self.labels.occupancy(self.k)
    }
}

fn check_shapes(data: &CountMatrix, graph: &AdjacencyGraph, component: &ComponentParams, gibbs: &GibbsParams) -> Result<()> {
    if data.n() != graph.n() {
        return Err(Error::dim(format!("data has {} regions, graph has {} nodes", data.n(), graph.n())));
    }
    if component.num_categories() != data.num_categories() {
        return Err(Error::dim("category count differs between data and parameters"));
    }
    if component.num_components() != gibbs.num_components() {
        return Err(Error::dim("multinomial and Gibbs parameters disagree on K"));
    }
    Ok(())
}

/// `log t_ik` for every region. Without a field the prior is `softmax(α)`.
fn log_priors(graph: &AdjacencyGraph, field: Option<&LabelField>, gibbs: &GibbsParams) -> Vec<f64> {
    let n = graph.n();
    let k = gibbs.num_components();
    let mut out = vec![0.0; n * k];
    match field {
        Some(field) => {
            let mut diff = vec![0.0; k];
            for i in 0..n {
                log_prior_at(graph, field, gibbs, i, &mut diff, &mut out[i * k..(i + 1) * k]);
            }
        }
        None => {
            let lse = log_sum_exp(&gibbs.alpha);
            let row: Vec<f64> = gibbs.alpha.iter().map(|a| a - lse).collect();
            for chunk in out.chunks_exact_mut(k) {
                chunk.copy_from_slice(&row);
            }
        }
    }
    out
}

/// Posterior memberships and the observed log-likelihood (coefficients
/// included) under the given per-region log priors.
fn posterior(data: &CountMatrix, log_prior: &[f64], component: &ComponentParams) -> Result<(Responsibilities, f64)> {
    let n = data.n();
    let k = component.num_components();
    let mut w = vec![0.0; n * k];
    let mut total = 0.0;
    for (i, y) in data.rows().enumerate() {
        let row = &mut w[i * k..(i + 1) * k];
        for c in 0..k {
            row[c] = log_prior[i * k + c] + log_kernel(y, component.component(c));
        }
        let lse = log_sum_exp(row);
        if !lse.is_finite() {
            return Err(Error::numeric(format!("region {i} has zero probability under every component")));
        }
        row.iter_mut().for_each(|x| *x = (*x - lse).exp());
        total += lse + data.log_coefficient(i);
    }
    Ok((Responsibilities { n, k, w }, total))
}

/// Posterior memberships from explicit per-region log priors (row-major n×K).
pub fn responsibilities_from_log_prior(
    data: &CountMatrix,
    log_prior: &[f64],
    component: &ComponentParams,
) -> Result<Responsibilities> {
    if log_prior.len() != data.n() * component.num_components() {
        return Err(Error::dim("log prior must have n × K entries"));
    }
    posterior(data, log_prior, component).map(|(w, _)| w)
}

/// E-step: `w_ik ∝ t_ik(field) f(y_i | λ_k)`.
pub fn e_step(
    data: &CountMatrix,
    field: &LabelField,
    graph: &AdjacencyGraph,
    component: &ComponentParams,
    gibbs: &GibbsParams,
) -> Result<Responsibilities> {
    check_shapes(data, graph, component, gibbs)?;
    field.validate(graph.n(), gibbs.num_components())?;
    posterior(data, &log_priors(graph, Some(field), gibbs), component).map(|(w, _)| w)
}

/// C-step: row-wise argmax, ties to the lowest component index.
pub fn c_step(w: &Responsibilities) -> LabelField {
    LabelField::new(
        (0..w.n())
            .map(|i| {
                let row = w.row(i);
                let mut best = 0;
                for c in 1..row.len() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect(),
    )
}

/// M-step for the multinomial parameters: `λ_kj = Σ_i w_ik y_ij / Σ_i w_ik m_i`,
/// floored and renormalised. Components with no weight are re-seeded near the
/// pooled proportions; their indices are returned alongside.
pub fn m_step_lambda<R: Rng + ?Sized>(
    data: &CountMatrix,
    w: &Responsibilities,
    rng: &mut R,
) -> Result<(ComponentParams, Vec<usize>)> {
    if w.n() != data.n() {
        return Err(Error::dim("responsibilities and data disagree on region count"));
    }
    let k = w.num_components();
    let j = data.num_categories();
    let mut num = vec![vec![0.0; j]; k];
    let mut den = vec![0.0; k];
    let mut mass = vec![0.0; k];
    for (i, y) in data.rows().enumerate() {
        let m = data.total(i) as f64;
        for c in 0..k {
            let wic = w.get(i, c);
            if wic == 0.0 {
                continue;
            }
            mass[c] += wic;
            den[c] += wic * m;
            for (acc, &count) in num[c].iter_mut().zip(y) {
                *acc += wic * count as f64;
            }
        }
    }
    let mut reseeded = Vec::new();
    let pooled = data.pooled_proportions();
    for c in 0..k {
        if mass[c] < EMPTY_COMPONENT_WEIGHT {
            reseeded.push(c);
            num[c] = pooled.iter().map(|&p| p * (1.0 + rng.random_range(-0.05..=0.05))).collect();
            let s: f64 = num[c].iter().sum();
            num[c].iter_mut().for_each(|x| *x /= s);
        } else {
            num[c].iter_mut().for_each(|x| *x /= den[c]);
        }
        floor_simplex(&mut num[c], LAMBDA_FLOOR);
    }
    Ok((ComponentParams::from_rows_unchecked(num), reseeded))
}

/// Expected complete-data log-likelihood without the multinomial coefficients.
pub fn q_value(
    data: &CountMatrix,
    w: &Responsibilities,
    field: &LabelField,
    graph: &AdjacencyGraph,
    component: &ComponentParams,
    gibbs: &GibbsParams,
) -> Result<f64> {
    check_shapes(data, graph, component, gibbs)?;
    field.validate(graph.n(), gibbs.num_components())?;
    if w.n() != data.n() || w.num_components() != component.num_components() {
        return Err(Error::dim("responsibilities have the wrong shape"));
    }
    let k = component.num_components();
    let log_t = log_priors(graph, Some(field), gibbs);
    let mut total = 0.0;
    for (i, y) in data.rows().enumerate() {
        for c in 0..k {
            let wic = w.get(i, c);
            if wic > 0.0 {
                total += wic * (log_t[i * k + c] + log_kernel(y, component.component(c)));
            }
        }
    }
    Ok(total)
}

/// Approximated observed log-likelihood `Σ_i log Σ_k t_ik(field) f(y_i | λ_k)`,
/// multinomial coefficients included.
pub fn observed_loglik_approx(
    data: &CountMatrix,
    field: &LabelField,
    graph: &AdjacencyGraph,
    component: &ComponentParams,
    gibbs: &GibbsParams,
) -> Result<f64> {
    check_shapes(data, graph, component, gibbs)?;
    field.validate(graph.n(), gibbs.num_components())?;
    posterior(data, &log_priors(graph, Some(field), gibbs), component).map(|(_, ll)| ll)
}

#[derive(Debug, Clone)]
struct Snapshot {
    component: ComponentParams,
    gibbs: GibbsParams,
    w: Responsibilities,
    field: Option<LabelField>,
    loglik: f64,
    iteration: usize,
}

/// One EM chain with its own random streams.
struct Chain<'a> {
    data: &'a CountMatrix,
    graph: &'a AdjacencyGraph,
    cfg: &'a FitConfig,
    component: ComponentParams,
    gibbs: GibbsParams,
    /// Configuration the next field simulation starts from.
    field_start: Option<LabelField>,
    rng_params: ChaCha8Rng,
    rng_field: ChaCha8Rng,
    trace: Vec<f64>,
    best: Snapshot,
    since_best: usize,
    iterations: usize,
    warnings: Vec<String>,
}

fn stream_rngs(seed: u64, start: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut params = ChaCha8Rng::seed_from_u64(seed);
    params.set_stream(2 * start as u64);
    let mut field = ChaCha8Rng::seed_from_u64(seed);
    field.set_stream(2 * start as u64 + 1);
    (params, field)
}

fn random_simplex<R: Rng + ?Sized>(j: usize, rng: &mut R) -> Vec<f64> {
    let mut row: Vec<f64> = (0..j).map(|_| rng.random::<f64>()).collect();
    let s: f64 = row.iter().sum();
    row.iter_mut().for_each(|x| *x /= s);
    floor_simplex(&mut row, LAMBDA_FLOOR);
    row
}

impl<'a> Chain<'a> {
    fn new(
        data: &'a CountMatrix,
        graph: &'a AdjacencyGraph,
        cfg: &'a FitConfig,
        init: FitInit,
        rng_params: ChaCha8Rng,
        rng_field: ChaCha8Rng,
    ) -> Result<Self> {
        check_shapes(data, graph, &init.component, &init.gibbs)?;
        let k = init.component.num_components();
        let mut gibbs = init.gibbs;
        if !cfg.spatial || cfg.pin_beta {
            gibbs.beta.iter_mut().for_each(|b| *b = 0.0);
        }
        let field = if cfg.spatial {
            let f = init.field.ok_or_else(|| Error::invalid("spatial fit needs an initial field"))?;
            f.validate(graph.n(), k)?;
            Some(f)
        } else {
            None
        };
        let (w, loglik) = posterior(data, &log_priors(graph, field.as_ref(), &gibbs), &init.component)?;
        let best = Snapshot {
            component: init.component.clone(),
            gibbs: gibbs.clone(),
            w,
            field: field.clone(),
            loglik,
            iteration: 0,
        };
        Ok(Self {
            data,
            graph,
            cfg,
            component: init.component,
            gibbs,
            field_start: field,
            rng_params,
            rng_field,
            trace: vec![loglik],
            best,
            since_best: 0,
            iterations: 0,
            warnings: Vec::new(),
        })
    }

    fn step(&mut self) -> Result<()> {
        let k = self.component.num_components();
        // 1. simulate the field
        let field = match self.field_start.take() {
            Some(mut f) => {
                for _ in 0..self.cfg.field_sweeps {
                    gibbs_sweep(&mut f, self.graph, &self.gibbs, &mut self.rng_field)?;
                }
                Some(f)
            }
            None => None,
        };
        // 2a. E-step under the simulated field
        let (w, _) = posterior(self.data, &log_priors(self.graph, field.as_ref(), &self.gibbs), &self.component)?;
        // 2b. C-step
        let labels = c_step(&w);
        // 2c. M-step
        let (component, reseeded) = m_step_lambda(self.data, &w, &mut self.rng_params)?;
        for c in reseeded {
            self.warnings.push(format!("iteration {}: component {c} emptied and was re-seeded", self.iterations + 1));
        }
        let gibbs = match &field {
            Some(f) => {
                let hard;
                let weights = if self.cfg.hard_gibbs_weights {
                    hard = Responsibilities::one_hot(&labels, k)?;
                    &hard
                } else {
                    &w
                };
                fit_gibbs_params(weights, f, self.graph, &self.gibbs, &self.cfg.gibbs_options(), &mut self.rng_field)?
            }
            None => intercepts_only(&w),
        };
        let (w_new, loglik) = posterior(self.data, &log_priors(self.graph, field.as_ref(), &gibbs), &component)?;
        self.iterations += 1;
        self.trace.push(loglik);
        if loglik > self.best.loglik + self.cfg.min_improvement {
            self.best = Snapshot {
                component: component.clone(),
                gibbs: gibbs.clone(),
                w: w_new,
                field: field.clone(),
                loglik,
                iteration: self.iterations,
            };
            self.since_best = 0;
        } else {
            if loglik > self.best.loglik {
                // sub-threshold gains still refresh the snapshot
                self.best = Snapshot {
                    component: component.clone(),
                    gibbs: gibbs.clone(),
                    w: w_new,
                    field: field.clone(),
                    loglik,
                    iteration: self.iterations,
                };
            }
            self.since_best += 1;
        }
        self.component = component;
        self.gibbs = gibbs;
        self.field_start = field.map(|_| labels);
        Ok(())
    }

    /// Runs until `patience` non-improving iterations or `max_iter` iterations.
    fn run(&mut self, max_iter: usize, patience: usize) -> Result<bool> {
        while self.iterations < max_iter {
            if self.since_best >= patience {
                return Ok(true);
            }
            self.step()?;
        }
        Ok(self.since_best >= patience)
    }

    /// Resets to the best snapshot with a fresh trace.
    fn restart_from_best(&mut self) {
        let best = self.best.clone();
        self.component = best.component;
        self.gibbs = best.gibbs;
        self.field_start = best.field.as_ref().map(|_| c_step(&best.w));
        self.trace = vec![self.best.loglik];
        self.best.iteration = 0;
        self.since_best = 0;
        self.iterations = 0;
    }

    fn finish(self, converged: bool) -> FitResult {
        let k = self.component.num_components();
        let d = free_params(k, self.data.num_categories(), self.cfg.spatial);
        let labels = c_step(&self.best.w);
        let identifiability = check_identifiability(self.data, k);
        let mut warnings = self.warnings;
        if let Identifiability::Warn { min_total, required } = identifiability {
            warnings.insert(
                0,
                format!("smallest region total {min_total} is below 2K - 1 = {required}; components may not be identifiable"),
            );
        }
        FitResult {
            k,
            spatial: self.cfg.spatial,
            component: self.best.component,
            gibbs: self.best.gibbs,
            labels,
            w: self.best.w,
            field: self.best.field.unwrap_or_else(|| LabelField::new(Vec::new())),
            best_loglik: self.best.loglik,
            best_iteration: self.best.iteration,
            loglik_trace: self.trace,
            d,
            bic: bic(self.best.loglik, d, self.data.n()),
            iterations: self.iterations,
            seed: self.cfg.seed,
            converged,
            identifiability,
            warnings,
        }
    }
}

fn random_init<R: Rng + ?Sized, S: Rng + ?Sized>(
    data: &CountMatrix,
    cfg: &FitConfig,
    rng_params: &mut R,
    rng_field: &mut S,
) -> FitInit {
    let j = data.num_categories();
    let lambda = (0..cfg.k).map(|_| random_simplex(j, rng_params)).collect();
    FitInit {
        component: ComponentParams::from_rows_unchecked(lambda),
        gibbs: GibbsParams::zeros(cfg.k),
        field: cfg.spatial.then(|| LabelField::uniform(data.n(), cfg.k, rng_field)),
    }
}

/// Short runs from `n_starts` initialisations, then a full run from the best.
fn multi_start<F>(data: &CountMatrix, graph: &AdjacencyGraph, cfg: &FitConfig, make_init: F) -> Result<FitResult>
where
    F: Fn(&mut ChaCha8Rng, &mut ChaCha8Rng) -> FitInit + Sync,
{
    cfg.validate()?;
    if data.n() != graph.n() {
        return Err(Error::dim(format!("data has {} regions, graph has {} nodes", data.n(), graph.n())));
    }
    let chains: Vec<Result<Chain<'_>>> = (0..cfg.n_starts)
        .into_par_iter()
        .map(|s| {
            let (mut rp, mut rf) = stream_rngs(cfg.seed, s);
            let init = make_init(&mut rp, &mut rf);
            let mut chain = Chain::new(data, graph, cfg, init, rp, rf)?;
            chain.run(cfg.short_run_iter, usize::MAX)?;
            Ok(chain)
        })
        .collect();
    let mut best: Option<Chain<'_>> = None;
    let mut first_err = None;
    for chain in chains {
        match chain {
            Ok(c) => {
                if best.as_ref().is_none_or(|b| c.best.loglik > b.best.loglik) {
                    best = Some(c);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let Some(mut chain) = best else {
        return Err(first_err.unwrap_or_else(|| Error::numeric("no start succeeded")));
    };
    chain.warnings.clear();
    chain.restart_from_best();
    let converged = chain.run(cfg.max_iter, cfg.patience)?;
    Ok(chain.finish(converged))
}

/// Fits the model from random initialisations.
pub fn fit(data: &CountMatrix, graph: &AdjacencyGraph, cfg: &FitConfig) -> Result<FitResult> {
    if data.num_categories() < 2 {
        return Err(Error::invalid("need at least two categories"));
    }
    multi_start(data, graph, cfg, |rp, rf| random_init(data, cfg, rp, rf))
}

/// Fits `K = previous.K + 1` components starting from a previous solution plus
/// one random component with zero Gibbs parameters.
pub fn fit_with_warm_start(
    data: &CountMatrix,
    graph: &AdjacencyGraph,
    cfg: &FitConfig,
    previous: &FitResult,
) -> Result<FitResult> {
    if cfg.k != previous.k + 1 {
        return Err(Error::invalid(format!(
            "warm start needs K = {} (previous K + 1), got {}",
            previous.k + 1,
            cfg.k
        )));
    }
    if previous.component.num_categories() != data.num_categories() {
        return Err(Error::dim("previous fit has a different category count"));
    }
    multi_start(data, graph, cfg, |rp, rf| warm_start_init(data, cfg, previous, rp, rf))
}

/// Previous components plus one random simplex row, Gibbs parameters extended
/// with zeros, and the previous labels as the initial field.
pub fn warm_start_init<R: Rng + ?Sized, S: Rng + ?Sized>(
    data: &CountMatrix,
    cfg: &FitConfig,
    previous: &FitResult,
    rng_params: &mut R,
    rng_field: &mut S,
) -> FitInit {
    let mut lambda = previous.component.rows().to_vec();
    lambda.push(random_simplex(data.num_categories(), rng_params));
    let mut alpha = previous.gibbs.alpha.clone();
    let mut beta = previous.gibbs.beta.clone();
    alpha.push(0.0);
    beta.push(0.0);
    let field = cfg.spatial.then(|| {
        if previous.labels.len() == data.n() {
            previous.labels.clone()
        } else {
            LabelField::uniform(data.n(), cfg.k, rng_field)
        }
    });
    FitInit { component: ComponentParams::from_rows_unchecked(lambda), gibbs: GibbsParams { alpha, beta }, field }
}

/// Runs the full loop from one explicit initialisation (no short runs).
pub fn fit_from(data: &CountMatrix, graph: &AdjacencyGraph, cfg: &FitConfig, init: FitInit) -> Result<FitResult> {
    cfg.validate()?;
    if init.component.num_components() != cfg.k {
        return Err(Error::dim("initialisation has the wrong component count"));
    }
    let (rp, rf) = stream_rngs(cfg.seed, 0);
    let mut chain = Chain::new(data, graph, cfg, init, rp, rf)?;
    let converged = chain.run(cfg.max_iter, cfg.patience)?;
    Ok(chain.finish(converged))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LatticeScheme;

    fn tiny() -> (CountMatrix, AdjacencyGraph) {
        let data = CountMatrix::new(vec![vec![3, 1], vec![0, 4], vec![2, 2], vec![4, 0]]).unwrap();
        let graph = AdjacencyGraph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        (data, graph)
    }

    #[test]
    fn identical_components_pass_prior_through() {
        let (data, graph) = tiny();
        let lambda = ComponentParams::new(vec![vec![0.4, 0.6], vec![0.4, 0.6]]).unwrap();
        let gibbs = GibbsParams::new(vec![0.0, 0.7], vec![0.0, 0.5]).unwrap();
        let field = LabelField::new(vec![1, 0, 1, 1]);
        let w = e_step(&data, &field, &graph, &lambda, &gibbs).unwrap();
        for i in 0..4 {
            let t = crate::gibbs::conditional_prior(i, &field, &graph, &gibbs).unwrap();
            for (c, tc) in t.iter().enumerate() {
                assert!((w.get(i, c) - tc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn degenerate_prior_forces_membership() {
        let (data, _) = tiny();
        let lambda = ComponentParams::new(vec![vec![0.1, 0.9], vec![0.9, 0.1]]).unwrap();
        let mut log_prior = vec![f64::NEG_INFINITY; 8];
        for i in 0..4 {
            log_prior[i * 2] = 0.0;
        }
        let w = responsibilities_from_log_prior(&data, &log_prior, &lambda).unwrap();
        for i in 0..4 {
            assert_eq!(w.row(i), &[1.0, 0.0]);
        }
    }

    #[test]
    fn e_step_matches_exact_bayes_rule() {
        // m = 4, J = 2, λ_0 = (1/4, 3/4), λ_1 = (1/2, 1/2), prior (1/3, 2/3):
        // row (3,1): f0 ∝ (1/4)^3 (3/4) = 3/256, f1 ∝ 1/16 = 16/256
        // w0 = (1/3·3)/(1/3·3 + 2/3·16) = 3/35
        let data = CountMatrix::new(vec![vec![3, 1]]).unwrap();
        let lambda = ComponentParams::new(vec![vec![0.25, 0.75], vec![0.5, 0.5]]).unwrap();
        let log_prior = vec![(1.0f64 / 3.0).ln(), (2.0f64 / 3.0).ln()];
        let w = responsibilities_from_log_prior(&data, &log_prior, &lambda).unwrap();
        assert!((w.get(0, 0) - 3.0 / 35.0).abs() < 1e-15);
        assert!((w.get(0, 1) - 32.0 / 35.0).abs() < 1e-15);
    }

    #[test]
    fn e_step_rejects_impossible_rows() {
        let data = CountMatrix::new(vec![vec![1, 1]]).unwrap();
        let lambda = ComponentParams::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let err = responsibilities_from_log_prior(&data, &[0.5f64.ln(); 2], &lambda);
        assert!(matches!(err, Err(Error::Numeric(_))));
    }

    #[test]
    fn c_step_argmax_and_ties() {
        let w = Responsibilities::from_rows(vec![vec![0.7, 0.3], vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        assert_eq!(&*c_step(&w), &[0, 0, 1]);
        let labels = LabelField::new(vec![2, 0, 1, 1]);
        assert_eq!(c_step(&Responsibilities::one_hot(&labels, 3).unwrap()), labels);
    }

    #[test]
    fn m_step_pooled_and_hard_cases() {
        let (data, _) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = Responsibilities::from_rows(vec![vec![1.0]; 4]).unwrap();
        let (p, reseeded) = m_step_lambda(&data, &one, &mut rng).unwrap();
        assert!(reseeded.is_empty());
        assert!((p.component(0)[0] - 9.0 / 16.0).abs() < 1e-15);

        let hard = Responsibilities::one_hot(&LabelField::new(vec![0, 1, 1, 0]), 2).unwrap();
        let (p, _) = m_step_lambda(&data, &hard, &mut rng).unwrap();
        assert!((p.component(0)[0] - 7.0 / 8.0).abs() < 1e-15);
        assert!((p.component(1)[0] - 2.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn empty_component_is_reseeded() {
        let (data, _) = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w = Responsibilities::one_hot(&LabelField::new(vec![0, 0, 0, 0]), 2).unwrap();
        let (p, reseeded) = m_step_lambda(&data, &w, &mut rng).unwrap();
        assert_eq!(reseeded, vec![1]);
        let pooled = data.pooled_proportions();
        for (x, q) in p.component(1).iter().zip(&pooled) {
            assert!((x / q - 1.0).abs() < 0.11);
        }
        assert!((p.component(1).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn q_value_one_hot_case() {
        let (data, graph) = tiny();
        let lambda = ComponentParams::new(vec![vec![0.3, 0.7], vec![0.8, 0.2]]).unwrap();
        let labels = LabelField::new(vec![1, 0, 0, 1]);
        let w = Responsibilities::one_hot(&labels, 2).unwrap();
        // null Gibbs parameters: each prior term is log(1/2)
        let gibbs = GibbsParams::zeros(2);
        let q = q_value(&data, &w, &labels, &graph, &lambda, &gibbs).unwrap();
        let lambda_term: f64 = data.rows().enumerate().map(|(i, y)| log_kernel(y, lambda.component(labels[i]))).sum();
        assert!((q - (lambda_term + 4.0 * 0.5f64.ln())).abs() < 1e-12);
    }

    #[test]
    fn observed_loglik_reduces_to_standard_mixture() {
        use crate::mixture::{standard_mixture_loglik, WeightVector};
        let (data, graph) = tiny();
        let lambda = ComponentParams::new(vec![vec![0.3, 0.7], vec![0.8, 0.2]]).unwrap();
        let field = LabelField::new(vec![1, 1, 0, 1]);
        let ll = observed_loglik_approx(&data, &field, &graph, &lambda, &GibbsParams::zeros(2)).unwrap();
        let std = standard_mixture_loglik(&data, &lambda, &WeightVector::uniform(2)).unwrap();
        assert!((ll - std).abs() < 1e-12);

        let one = ComponentParams::new(vec![vec![0.3, 0.7]]).unwrap();
        let ll1 = observed_loglik_approx(&data, &LabelField::new(vec![0; 4]), &graph, &one, &GibbsParams::zeros(1)).unwrap();
        let std1 = standard_mixture_loglik(&data, &one, &WeightVector::uniform(1)).unwrap();
        assert!((ll1 - std1).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig { patience: 0, ..Default::default() }.validate().is_err());
        assert!(FitConfig { max_iter: 10, patience: 20, ..Default::default() }.validate().is_err());
        assert!(FitConfig::default().validate().is_ok());
    }

    #[test]
    fn fit_rejects_size_mismatch() {
        let (data, _) = tiny();
        let graph = AdjacencyGraph::lattice(3, LatticeScheme::Rook).unwrap();
        assert!(matches!(fit(&data, &graph, &FitConfig::default()), Err(Error::Dimension(_))));
    }

    #[test]
    fn warm_start_rejects_wrong_k() {
        let (data, graph) = tiny();
        let cfg = FitConfig { k: 1, n_starts: 2, ..Default::default() };
        let prev = fit(&data, &graph, &cfg).unwrap();
        let bad = FitConfig { k: 3, ..cfg.clone() };
        assert!(fit_with_warm_start(&data, &graph, &bad, &prev).is_err());
    }
}
