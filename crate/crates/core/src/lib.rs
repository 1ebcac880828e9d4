//! Finite multinomial mixtures for graph-indexed count data with a Gibbs
//! (Markov random field) prior on the component labels.
//!
//! The model clusters regions whose observations are category counts (for
//! example residents per age group) while letting each region's prior
//! membership depend on its neighbours' labels. Estimation is a
//! simulated-field classification EM; the non-spatial mixture is the special
//! case with every interaction strength fixed at zero.
//!
//! ```
//! use spatmix::{fit, simulate_dataset, ari, FitConfig, SimConfig};
//!
//! let sim = simulate_dataset(&SimConfig { side: 8, burn_in: 50, ..Default::default() }, 3).unwrap();
//! let cfg = FitConfig { k: 2, n_starts: 5, seed: 1, ..Default::default() };
//! let result = fit(&sim.counts, &sim.graph, &cfg).unwrap();
//! assert!(ari(&result.labels, &sim.truth).unwrap() > 0.7);
//! ```

pub mod em;
pub mod error;
pub mod eval;
pub mod gibbs;
pub mod graph;
pub mod mixture;
pub mod select;
pub mod sim;

pub use em::{
    c_step, e_step, fit, fit_from, fit_with_warm_start, m_step_lambda, observed_loglik_approx, q_value, warm_start_init,
    responsibilities_from_log_prior, FitConfig, FitInit, FitResult, Responsibilities,
};
pub use error::{Error, Result};
pub use eval::{ari, default_age_midpoints, mean_age, moran_permutation_test, morans_i, MoranResult, MoranWeights};
pub use gibbs::{
    conditional_prior, fit_gibbs_params, gibbs_gradient, gibbs_objective, gibbs_sweep, potential, AnnealSchedule,
    GibbsFitOptions, GibbsMethod, GibbsParams, LabelField,
};
pub use graph::{neighbor_counts, AdjacencyGraph, LatticeScheme, NeighborCounts};
pub use mixture::{
    check_identifiability, log_multinomial_pmf, standard_mixture_loglik, ComponentParams, CountMatrix,
    Identifiability, WeightVector, LAMBDA_FLOOR,
};
pub use select::{argmax_bic, bic, chi_square_sf, free_params, lrt, sweep, LrtResult, SweepRecord, SweepResult};
pub use sim::{
    derive_seed, reference_lambda, run_study, simulate_dataset, CellReport, SimConfig, SimDataset, SimReport, Summary,
};
