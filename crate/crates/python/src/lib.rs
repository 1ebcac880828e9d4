//! Python bindings: graphs, fitting, model selection, simulation and
//! evaluation. Built as the `spatmix` extension module.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use spatmix as core;

fn to_py(e: core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Undirected graph over regions `0..n`.
#[pyclass(name = "Graph", module = "spatmix", frozen)]
pub struct PyGraph {
    inner: core::AdjacencyGraph,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self { inner: core::AdjacencyGraph::from_edges(n, &edges).map_err(to_py)? })
    }

    /// Square lattice, row-major, with `"rook"` or `"queen"` neighbourhoods.
    #[staticmethod]
    #[pyo3(signature = (side, scheme = "rook"))]
    fn lattice(side: usize, scheme: &str) -> PyResult<Self> {
        let scheme: core::LatticeScheme = scheme.parse().map_err(to_py)?;
        Ok(Self { inner: core::AdjacencyGraph::lattice(side, scheme).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges()
    }

    fn neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        if i >= self.inner.n() {
            return Err(to_py(core::Error::NodeOutOfRange { index: i, n: self.inner.n() }));
        }
        Ok(self.inner.neighbors(i).to_vec())
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

/// Outcome of one fit.
#[pyclass(name = "FitResult", module = "spatmix", frozen)]
pub struct PyFitResult {
    inner: core::FitResult,
}

#[pymethods]
impl PyFitResult {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }
    #[getter]
    fn spatial(&self) -> bool {
        self.inner.spatial
    }
    /// Component category probabilities, one row per component.
    #[getter]
    fn lambda_(&self) -> Vec<Vec<f64>> {
        self.inner.component.rows().to_vec()
    }
    #[getter]
    fn alpha(&self) -> Vec<f64> {
        self.inner.gibbs.alpha.clone()
    }
    #[getter]
    fn beta(&self) -> Vec<f64> {
        self.inner.gibbs.beta.clone()
    }
    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.to_vec()
    }
    #[getter]
    fn responsibilities(&self) -> Vec<Vec<f64>> {
        self.inner.w.to_rows()
    }
    #[getter]
    fn loglik_trace(&self) -> Vec<f64> {
        self.inner.loglik_trace.clone()
    }
    #[getter]
    fn best_loglik(&self) -> f64 {
        self.inner.best_loglik
    }
    #[getter]
    fn d(&self) -> usize {
        self.inner.d
    }
    #[getter]
    fn bic(&self) -> f64 {
        self.inner.bic
    }
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }
    #[getter]
    fn iterations(&self) -> usize {
        self.inner.iterations
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn occupancy(&self) -> Vec<usize> {
        self.inner.occupancy()
    }
    #[getter]
    fn warnings(&self) -> Vec<String> {
        self.inner.warnings.clone()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("fit result serialises")
    }

    fn __repr__(&self) -> String {
        format!("FitResult(k={}, loglik={:.4}, bic={:.4})", self.inner.k, self.inner.best_loglik, self.inner.bic)
    }
}

#[allow(clippy::too_many_arguments)]
fn fit_config(
    k: usize,
    seed: u64,
    spatial: bool,
    pin_beta: bool,
    n_starts: usize,
    max_iter: usize,
    patience: usize,
    gibbs_method: &str,
) -> PyResult<core::FitConfig> {
    Ok(core::FitConfig {
        k,
        seed,
        spatial,
        pin_beta,
        n_starts,
        max_iter,
        patience,
        gibbs_method: gibbs_method.parse().map_err(to_py)?,
        ..core::FitConfig::default()
    })
}

/// Fits a K-component model to a region-by-category count table.
#[pyfunction]
#[pyo3(signature = (counts, graph, k = 2, *, seed = 0, spatial = true, pin_beta = false, n_starts = 20,
                    max_iter = 1000, patience = 50, gibbs_method = "newton"))]
#[allow(clippy::too_many_arguments)]
pub fn fit(
    py: Python<'_>,
    counts: Vec<Vec<u64>>,
    graph: &PyGraph,
    k: usize,
    seed: u64,
    spatial: bool,
    pin_beta: bool,
    n_starts: usize,
    max_iter: usize,
    patience: usize,
    gibbs_method: &str,
) -> PyResult<PyFitResult> {
    let data = core::CountMatrix::new(counts).map_err(to_py)?;
    let cfg = fit_config(k, seed, spatial, pin_beta, n_starts, max_iter, patience, gibbs_method)?;
    let g = graph.inner.clone();
    let inner = py.detach(move || core::fit(&data, &g, &cfg)).map_err(to_py)?;
    Ok(PyFitResult { inner })
}

/// Fits every K in `ks`. Returns `(rows, selected_k)` with rows
/// `(k, loglik, d, bic, error)`.
#[pyfunction]
#[pyo3(signature = (counts, graph, ks, *, seed = 0, spatial = true, n_starts = 20, warm_start = true))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn sweep(
    py: Python<'_>,
    counts: Vec<Vec<u64>>,
    graph: &PyGraph,
    ks: Vec<usize>,
    seed: u64,
    spatial: bool,
    n_starts: usize,
    warm_start: bool,
) -> PyResult<(Vec<(usize, Option<f64>, usize, Option<f64>, Option<String>)>, Option<usize>)> {
    let data = core::CountMatrix::new(counts).map_err(to_py)?;
    let cfg = core::FitConfig { seed, spatial, n_starts, ..core::FitConfig::default() };
    let g = graph.inner.clone();
    let result = py.detach(move || core::sweep(&data, &g, &ks, &cfg, warm_start)).map_err(to_py)?;
    let rows = result.records.into_iter().map(|r| (r.k, r.loglik, r.d, r.bic, r.error)).collect();
    Ok((rows, result.selected_k))
}

/// Simulates a lattice dataset. Returns `(counts, true_labels, graph)`.
#[pyfunction]
#[pyo3(signature = (side = 10, beta = None, *, m = 100, alpha = None, lambda_ = None, burn_in = 500, seed = 0))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
pub fn simulate(
    side: usize,
    beta: Option<Vec<f64>>,
    m: u64,
    alpha: Option<Vec<f64>>,
    lambda_: Option<Vec<Vec<f64>>>,
    burn_in: usize,
    seed: u64,
) -> PyResult<(Vec<Vec<u64>>, Vec<usize>, PyGraph)> {
    let defaults = core::SimConfig::default();
    let cfg = core::SimConfig {
        side,
        m,
        beta: beta.unwrap_or(defaults.beta),
        alpha: alpha.unwrap_or(defaults.alpha),
        lambda: lambda_.unwrap_or(defaults.lambda),
        burn_in,
        ..core::SimConfig::default()
    };
    let sim = core::simulate_dataset(&cfg, seed).map_err(to_py)?;
    Ok((sim.counts.to_rows(), sim.truth.into_inner(), PyGraph { inner: sim.graph }))
}

/// Adjusted Rand index between two labelings.
#[pyfunction]
pub fn ari(a: Vec<i64>, b: Vec<i64>) -> PyResult<f64> {
    core::ari(&a, &b).map_err(to_py)
}

fn weights(name: &str) -> PyResult<core::MoranWeights> {
    match name {
        "binary" => Ok(core::MoranWeights::Binary),
        "row" => Ok(core::MoranWeights::RowStandardized),
        other => Err(PyValueError::new_err(format!("unknown weights {other:?}; use \"binary\" or \"row\""))),
    }
}

#[pyfunction]
#[pyo3(signature = (x, graph, weights = "binary"))]
pub fn morans_i(x: Vec<f64>, graph: &PyGraph, weights: &str) -> PyResult<f64> {
    core::morans_i(&x, &graph.inner, self::weights(weights)?).map_err(to_py)
}

/// Moran's I with a one-sided permutation p-value. Returns `(I, p)`.
#[pyfunction]
#[pyo3(signature = (x, graph, permutations = 999, seed = 0, weights = "binary"))]
pub fn moran_test(x: Vec<f64>, graph: &PyGraph, permutations: usize, seed: u64, weights: &str) -> PyResult<(f64, f64)> {
    let r = core::moran_permutation_test(&x, &graph.inner, self::weights(weights)?, permutations, seed).map_err(to_py)?;
    Ok((r.i, r.p_value))
}

/// Grouped mean of one region's counts; midpoints default to 2.5, 7.5, ...
#[pyfunction]
#[pyo3(signature = (counts, midpoints = None))]
pub fn mean_age(counts: Vec<u64>, midpoints: Option<Vec<f64>>) -> PyResult<f64> {
    let mids = midpoints.unwrap_or_else(|| core::default_age_midpoints(counts.len()));
    core::mean_age(&counts, &mids).map_err(to_py)
}

#[pyfunction]
pub fn bic(loglik: f64, d: usize, n: usize) -> f64 {
    core::bic(loglik, d, n)
}

#[pyfunction]
#[pyo3(signature = (k, j, spatial = true))]
pub fn free_params(k: usize, j: usize, spatial: bool) -> usize {
    core::free_params(k, j, spatial)
}

/// Likelihood-ratio test of the spatial model against the standard one.
/// Returns `(statistic, df, p_value)`.
#[pyfunction]
pub fn lrt(loglik_spatial: f64, loglik_standard: f64, k: usize) -> PyResult<(f64, usize, f64)> {
    let r = core::lrt(loglik_spatial, loglik_standard, k).map_err(to_py)?;
    Ok((r.statistic, r.df, r.p_value))
}

/// Adds the module's classes and functions to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyFitResult>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(sweep, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ari, m)?)?;
    m.add_function(wrap_pyfunction!(morans_i, m)?)?;
    m.add_function(wrap_pyfunction!(moran_test, m)?)?;
    m.add_function(wrap_pyfunction!(mean_age, m)?)?;
    m.add_function(wrap_pyfunction!(bic, m)?)?;
    m.add_function(wrap_pyfunction!(free_params, m)?)?;
    m.add_function(wrap_pyfunction!(lrt, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
#[pyo3(name = "spatmix")]
fn spatmix_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
