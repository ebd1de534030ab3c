//! Bounds on the share of treated units that benefit from treatment.
//!
//! Only the two marginals are identified, so `P(Y(1) ≥ Y(0))` and
//! `P(Y(1) > Y(0))` are bounded over all couplings of them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identification::CounterfactualParams;
use crate::probit::{cell_probs, Cutoffs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    /// `η = P(Y(1) ≥ Y(0))`
    Weak,
    /// `τ = P(Y(1) > Y(0))`
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenefitBounds {
    pub lower: f64,
    pub upper: f64,
    pub estimand: Estimand,
    /// A raw bound fell outside `[0, 1]` and was clamped.
    pub clamped: bool,
}

fn finish(lower: f64, upper: f64, estimand: Estimand) -> Result<BenefitBounds> {
    let clamped = !(0.0..=1.0).contains(&lower) || !(0.0..=1.0).contains(&upper);
    let (lower, upper) = (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0));
    if lower > upper + 1e-12 {
        return Err(Error::domain(format!(
            "bounds cross ({lower} > {upper}); effects are inconsistent with the counterfactual"
        )));
    }
    Ok(BenefitBounds {
        lower,
        upper: upper.max(lower),
        estimand,
        clamped,
    })
}

fn check(counterfactual: &[f64], delta: &[f64]) -> Result<()> {
    if delta.len() != counterfactual.len() {
        return Err(Error::domain(format!(
            "{} cumulative effects given for {} categories (include Δ_0 = 0)",
            delta.len(),
            counterfactual.len()
        )));
    }
    if delta.first().is_some_and(|d| d.abs() > 1e-12) {
        return Err(Error::domain(format!("Δ_0 must be 0, got {}", delta[0])));
    }
    Ok(())
}

/// `[max_j {p_j + Δ_j}, 1 + min_j Δ_j]` with `p` the counterfactual
/// category probabilities and `delta = (Δ_0 = 0, Δ_1, …, Δ_{J-1})`.
pub fn eta_bounds_from_probs(counterfactual: &[f64], delta: &[f64]) -> Result<BenefitBounds> {
    check(counterfactual, delta)?;
    let lower = counterfactual
        .iter()
        .zip(delta)
        .map(|(p, d)| p + d)
        .fold(f64::NEG_INFINITY, f64::max);
    let upper = 1.0 + delta.iter().copied().fold(f64::INFINITY, f64::min);
    finish(lower, upper, Estimand::Weak)
}

/// `[max_j Δ_j, 1 - max_j {p_j - Δ_{j+1}}]` with `Δ_J = 0`.
pub fn tau_bounds_from_probs(counterfactual: &[f64], delta: &[f64]) -> Result<BenefitBounds> {
    check(counterfactual, delta)?;
    let j = delta.len();
    let lower = delta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = (0..j)
        .map(|k| counterfactual[k] - if k + 1 < j { delta[k + 1] } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max);
    finish(lower, 1.0 - worst, Estimand::Strict)
}

pub fn eta_bounds(
    cf: &CounterfactualParams,
    cutoffs: &Cutoffs,
    delta: &[f64],
) -> Result<BenefitBounds> {
    eta_bounds_from_probs(&cell_probs(&cf.as_cell(), cutoffs)?, delta)
}

pub fn tau_bounds(
    cf: &CounterfactualParams,
    cutoffs: &Cutoffs,
    delta: &[f64],
) -> Result<BenefitBounds> {
    tau_bounds_from_probs(&cell_probs(&cf.as_cell(), cutoffs)?, delta)
}

/// `(Δ_0 = 0, Δ_1, …)` from two marginals.
pub fn cumulative_effects(treated: &[f64], counterfactual: &[f64]) -> Vec<f64> {
    let j = treated.len();
    let mut delta = vec![0.0; j];
    let mut acc = 0.0;
    for k in (1..j).rev() {
        acc += treated[k] - counterfactual[k];
        delta[k] = acc;
    }
    delta
}

/// Both bounds from the treated and counterfactual marginals.
pub fn bounds_from_marginals(
    treated: &[f64],
    counterfactual: &[f64],
) -> Result<(BenefitBounds, BenefitBounds)> {
    if treated.len() != counterfactual.len() {
        return Err(Error::domain("marginals differ in length"));
    }
    let delta = cumulative_effects(treated, counterfactual);
    Ok((
        eta_bounds_from_probs(counterfactual, &delta)?,
        tau_bounds_from_probs(counterfactual, &delta)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_examples() {
        let p = [0.25, 0.5, 0.25];
        let b = eta_bounds_from_probs(&p, &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!((b.lower, b.upper), (0.5, 1.0));

        let b = eta_bounds_from_probs(&p, &[0.0, 0.05, -0.02]).unwrap();
        assert!((b.lower - 0.55).abs() < 1e-15);
        assert!((b.upper - 0.98).abs() < 1e-15);
        assert!(!b.clamped);

        assert!(eta_bounds_from_probs(&p, &[0.0, 0.05]).is_err());
    }

    #[test]
    fn monotone_in_effects() {
        let p = [0.2, 0.3, 0.1, 0.4];
        let base = [0.0, 0.02, -0.03, 0.01];
        let up = [0.0, 0.04, -0.01, 0.02];
        for f in [eta_bounds_from_probs, tau_bounds_from_probs] {
            let a = f(&p, &base).unwrap();
            let b = f(&p, &up).unwrap();
            assert!(b.lower >= a.lower && b.upper >= a.upper);
        }
    }

    #[test]
    fn identical_marginals() {
        let p = [0.2, 0.5, 0.3];
        let (eta, tau) = bounds_from_marginals(&p, &p).unwrap();
        assert!((eta.lower - 0.5).abs() < 1e-15 && eta.upper == 1.0);
        assert!(tau.lower == 0.0 && (tau.upper - 0.5).abs() < 1e-15);
    }

    #[test]
    fn clamping_is_flagged() {
        let b = eta_bounds_from_probs(&[0.25, 0.5, 0.25], &[0.0, 0.6, 0.1]).unwrap();
        assert_eq!(b.lower, 1.0);
        assert!(b.clamped);
    }
}
