//! Difference-in-differences for ordinal outcomes.
//!
//! Each group-period cell is modelled as an ordered probit with its own
//! latent location and scale. Parallel trends is imposed on the latent
//! quantile-shift functions, which identifies the treated group's
//! counterfactual distribution and hence category-level effects on the
//! treated. The crate also provides an equivalence test of the trends
//! assumption on pre-treatment data, bounds on the share of units that
//! benefit, a covariate-adjusted variant and a Monte Carlo harness.

pub mod bootstrap;
pub mod bounds;
pub mod covariates;
pub mod equivalence;
pub mod error;
pub mod golden;
pub mod identification;
pub mod normal;
pub mod optimize;
pub mod panel;
pub mod probit;
pub mod simulate;

pub use bootstrap::{block_bootstrap, BootstrapResult, BootstrapSpec, IntervalSet};
pub use bounds::{eta_bounds, tau_bounds, BenefitBounds, Estimand};
pub use covariates::{covariate_effects, fit_covariate_model, CovariateFit, GammaParams};
pub use equivalence::{
    default_delta, run_equivalence, t_gradient, t_value, true_t_max, EquivalenceResult, GridSpec,
    Theta,
};
pub use error::{Error, Result};
pub use golden::{run_golden_suite, GoldenReport};
pub use identification::{
    counterfactual_params, estimate_pipeline, estimate_with_bootstrap, CounterfactualParams,
    EffectEstimate,
};
pub use panel::{load_csv, CellCounts, ColumnSchema, PanelDataset};
pub use probit::{cell_probs, fit_cell, fit_joint, CellParams, Cutoffs, FitResult};
pub use simulate::{
    pt_gap, run_equivalence_mc, run_estimator_mc, simulate_panel, DgpSpec, McReport,
};
