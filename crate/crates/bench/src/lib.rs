//! Shared inputs for the benchmarks.

use ordinal_did::{simulate_panel, DgpSpec, PanelDataset};

/// Estimator-design panel with `n` units per group.
pub fn panel(j: usize, n: usize) -> (DgpSpec, PanelDataset) {
    let spec = DgpSpec::estimator_design(j, n, 42).expect("valid design");
    let data = simulate_panel(&spec).expect("simulation succeeds");
    (spec, data)
}
