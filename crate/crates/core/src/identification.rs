//! Counterfactual recovery and distributional effects on the treated.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{block_bootstrap, BootstrapResult, BootstrapSpec, IntervalSet};
use crate::error::{Error, Result};
use crate::panel::{CellCounts, PanelDataset};
use crate::probit::{cell_probs, fit_counts, fit_joint, CellParams, Cutoffs, FitResult};

/// Latent location and scale of the treated group's untreated post-period outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualParams {
    pub mu11: f64,
    pub sigma11: f64,
}

impl CounterfactualParams {
    pub fn as_cell(&self) -> CellParams {
        CellParams {
            mu: self.mu11,
            sigma: self.sigma11,
        }
    }
}

/// `μ₁₁ = μ₁₀ + (μ₀₁ - μ₀₀)·σ₁₀/σ₀₀`, `σ₁₁ = σ₁₀·σ₀₁/σ₀₀`.
pub fn counterfactual_params(
    t00: &CellParams,
    t01: &CellParams,
    t10: &CellParams,
) -> Result<CounterfactualParams> {
    t00.validate()?;
    t01.validate()?;
    t10.validate()?;
    let ratio = t10.sigma / t00.sigma;
    Ok(CounterfactualParams {
        mu11: t10.mu + (t01.mu - t00.mu) * ratio,
        sigma11: t01.sigma * ratio,
    })
}

/// Distributional (`ζ`) and cumulative (`Δ`) effects on the treated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    /// `ζ_j`, `j = 0..J`.
    pub zeta: Vec<f64>,
    /// `Δ_j`, `j = 1..J` (so `delta[0]` is `Δ_1`).
    pub delta: Vec<f64>,
    pub observed_treated: Vec<f64>,
    pub counterfactual: Vec<f64>,
    /// Intervals over the statistic vector `[ζ_0, …, ζ_{J-1}, Δ_1, …, Δ_{J-1}]`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci: Option<IntervalSet>,
    /// Successful bootstrap draws of the same statistic vector, one row each.
    #[serde(skip)]
    pub replicates: Option<Vec<Vec<f64>>>,
}

impl EffectEstimate {
    /// Effects from an observed and a counterfactual probability vector.
    pub fn from_probs(observed_treated: Vec<f64>, counterfactual: Vec<f64>) -> Result<Self> {
        if observed_treated.len() != counterfactual.len() || observed_treated.len() < 2 {
            return Err(Error::domain(format!(
                "probability vectors have lengths {} and {}",
                observed_treated.len(),
                counterfactual.len()
            )));
        }
        let zeta: Vec<f64> = observed_treated
            .iter()
            .zip(&counterfactual)
            .map(|(o, c)| o - c)
            .collect();
        let j = zeta.len();
        let mut delta = vec![0.0; j - 1];
        let mut acc = 0.0;
        for l in (1..j).rev() {
            acc += zeta[l];
            delta[l - 1] = acc;
        }
        Ok(Self {
            zeta,
            delta,
            observed_treated,
            counterfactual,
            ci: None,
            replicates: None,
        })
    }

    /// `[ζ…, Δ…]`, the vector the bootstrap resamples.
    pub fn statistic(&self) -> Vec<f64> {
        let mut v = self.zeta.clone();
        v.extend_from_slice(&self.delta);
        v
    }
}

/// Plug-in effects: raw treated post-period frequencies against the
/// model-implied counterfactual.
pub fn estimate_effects(fit: &FitResult, treated_post: &CellCounts) -> Result<EffectEstimate> {
    if treated_post.n == 0 {
        return Err(Error::EmptyCell(format!(
            "treated post-period cell {} is empty",
            treated_post.label()
        )));
    }
    if treated_post.counts.len() != fit.cutoffs.n_categories() {
        return Err(Error::domain(format!(
            "treated cell has {} categories, fit has {}",
            treated_post.counts.len(),
            fit.cutoffs.n_categories()
        )));
    }
    let counterfactual = cell_probs(&fit.theta11.as_cell(), &fit.cutoffs)?;
    EffectEstimate::from_probs(treated_post.frequencies(), counterfactual)
}

/// Fit plus effects on a two-period panel (period positions 0 = pre, 1 = post).
pub fn estimate_pipeline(
    data: &PanelDataset,
    anchor: &Cutoffs,
) -> Result<(FitResult, EffectEstimate)> {
    let fit = fit_joint(data, anchor)?;
    let treated_post = data.cell_counts(true, 1)?;
    let effects = estimate_effects(&fit, &treated_post)?;
    Ok((fit, effects))
}

/// Effects straight from the four cell count vectors
/// `[(0,0), (0,1), (1,0), (1,1)]`.
pub fn effects_from_table(table: &[[Vec<u64>; 2]], anchor: &Cutoffs) -> Result<EffectEstimate> {
    if table.len() != 2 {
        return Err(Error::domain("expected a two-period cell table"));
    }
    let cell = |d: bool, t: usize| {
        let c = CellCounts::new(d, t, table[t][usize::from(d)].clone());
        if c.n == 0 {
            Err(Error::EmptyCell(format!(
                "no records in cell {}",
                c.label()
            )))
        } else {
            Ok(c)
        }
    };
    let fit = fit_counts([cell(false, 0)?, cell(false, 1)?, cell(true, 0)?], anchor)?;
    estimate_effects(&fit, &cell(true, 1)?)
}

/// Largest `|ζ̂_j(κ_A) - ζ̂_j(κ_B)|` for a three-category panel.
pub fn effects_invariance_check(
    data: &PanelDataset,
    kappa_a: &Cutoffs,
    kappa_b: &Cutoffs,
) -> Result<f64> {
    if data.n_categories() != 3 {
        return Err(Error::domain(format!(
            "invariance check needs 3 categories, got {}",
            data.n_categories()
        )));
    }
    let (_, a) = estimate_pipeline(data, kappa_a)?;
    if kappa_a == kappa_b {
        return Ok(0.0);
    }
    let (_, b) = estimate_pipeline(data, kappa_b)?;
    Ok(a.zeta
        .iter()
        .zip(&b.zeta)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs())))
}

/// Point estimates with cluster-bootstrap intervals attached.
pub fn estimate_with_bootstrap(
    data: &PanelDataset,
    anchor: &Cutoffs,
    spec: &BootstrapSpec,
) -> Result<(FitResult, EffectEstimate, BootstrapResult)> {
    let (fit, mut effects) = estimate_pipeline(data, anchor)?;
    let boot = block_bootstrap(
        data,
        |d: &PanelDataset| effects_from_table(&d.cell_table(), anchor).map(|e| e.statistic()),
        spec,
    )?;
    effects.ci = Some(boot.intervals_around(&effects.statistic()));
    effects.replicates = Some(boot.replicates.clone());
    Ok((fit, effects, boot))
}
