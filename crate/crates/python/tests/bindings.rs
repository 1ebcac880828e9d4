use pyo3::prelude::*;
use pyo3::types::{PyDict, PyModule};

fn with_module<F: for<'py> FnOnce(Python<'py>, &Bound<'py, PyModule>)>(f: F) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "spatmix").unwrap();
        spatmix_py::register(&m).unwrap();
        f(py, &m);
    });
}

#[test]
fn simulate_fit_and_evaluate() {
    with_module(|py, m| {
        let kwargs = PyDict::new(py);
        kwargs.set_item("burn_in", 50).unwrap();
        kwargs.set_item("seed", 3).unwrap();
        let sim = m.getattr("simulate").unwrap().call((8, vec![0.0, 0.1]), Some(&kwargs)).unwrap();
        let (counts, truth, graph): (Vec<Vec<u64>>, Vec<usize>, Bound<PyAny>) = sim.extract().unwrap();
        assert_eq!(counts.len(), 64);
        assert!(counts.iter().all(|r| r.iter().sum::<u64>() == 100));
        assert_eq!(graph.getattr("n").unwrap().extract::<usize>().unwrap(), 64);

        let kwargs = PyDict::new(py);
        kwargs.set_item("seed", 1).unwrap();
        kwargs.set_item("n_starts", 5).unwrap();
        let fit = m.getattr("fit").unwrap().call((counts.clone(), &graph, 2), Some(&kwargs)).unwrap();
        let labels: Vec<usize> = fit.getattr("labels").unwrap().extract().unwrap();
        let d: usize = fit.getattr("d").unwrap().extract().unwrap();
        assert_eq!(d, 20);
        let occ: Vec<usize> = fit.getattr("occupancy").unwrap().extract().unwrap();
        assert_eq!(occ.iter().sum::<usize>(), 64);

        // same computation through the Rust API
        let data = spatmix::CountMatrix::new(counts).unwrap();
        let g = spatmix::AdjacencyGraph::lattice(8, spatmix::LatticeScheme::Rook).unwrap();
        let direct = spatmix::fit(&data, &g, &spatmix::FitConfig { k: 2, seed: 1, n_starts: 5, ..Default::default() }).unwrap();
        assert_eq!(labels, direct.labels.to_vec());
        assert_eq!(fit.getattr("best_loglik").unwrap().extract::<f64>().unwrap(), direct.best_loglik);

        let a: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
        let b: Vec<i64> = truth.iter().map(|&l| l as i64).collect();
        let score: f64 = m.getattr("ari").unwrap().call1((a.clone(), b)).unwrap().extract().unwrap();
        assert!(score > 0.5);
        let same: f64 = m.getattr("ari").unwrap().call1((a.clone(), a)).unwrap().extract().unwrap();
        assert_eq!(same, 1.0);
    });
}

#[test]
fn helpers_and_errors() {
    with_module(|_py, m| {
        assert_eq!(m.getattr("free_params").unwrap().call1((8, 18)).unwrap().extract::<usize>().unwrap(), 150);
        let b: f64 = m.getattr("bic").unwrap().call1((-100.0, 10, 100)).unwrap().extract().unwrap();
        assert!((b - (-200.0 - 10.0 * 100f64.ln())).abs() < 1e-12);
        let (stat, df, p): (f64, usize, f64) = m.getattr("lrt").unwrap().call1((-90.0, -95.0, 3)).unwrap().extract().unwrap();
        assert_eq!((stat, df), (10.0, 2));
        assert!((p - (-5.0f64).exp()).abs() < 1e-12);

        let graph = m.getattr("Graph").unwrap().call_method1("lattice", (4,)).unwrap();
        let x: Vec<f64> = (0..16).map(|i| (i / 4) as f64).collect();
        let (i, p): (f64, f64) = m.getattr("moran_test").unwrap().call1((x.clone(), &graph, 999, 2)).unwrap().extract().unwrap();
        assert!(i > 0.5 && p < 0.01);

        let constant = vec![1.0; 16];
        let err = m.getattr("morans_i").unwrap().call1((constant, &graph)).unwrap_err();
        assert!(err.to_string().contains("constant"));
        assert!(m.getattr("Graph").unwrap().call1((3, vec![(0usize, 0usize)])).is_err());
        assert!(m.getattr("Graph").unwrap().call_method1("lattice", (1,)).is_err());

        let age: f64 = m.getattr("mean_age").unwrap().call1((vec![1u64, 1],)).unwrap().extract().unwrap();
        assert_eq!(age, 5.0);
    });
}
