//! Pre-trend diagnostic: equivalence test on the difference of quantile-shift
//! functions between groups over the two pre-treatment periods.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::bootstrap::{block_bootstrap, BootstrapResult, BootstrapSpec};
use crate::error::{Error, Result};
use crate::normal::{
    erf_inv, norm_cdf, norm_quantile, norm_quantile_clamped, norm_sf, QUANTILE_FLOOR,
};
use crate::panel::{CellCounts, PanelDataset};
use crate::probit::{fit_cells, CellParams, Cutoffs};

/// `q̃(v) = Φ((μ₁ + σ₁Φ⁻¹(v) - μ₀)/σ₀)` for one group's two pre periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileShift {
    pub t0: CellParams,
    pub t1: CellParams,
}

/// A probability together with whether its argument hit the clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluated {
    pub value: f64,
    pub saturated: bool,
}

impl QuantileShift {
    fn at_quantile(&self, z: f64) -> f64 {
        norm_cdf((self.t1.mu + self.t1.sigma * z - self.t0.mu) / self.t0.sigma)
    }
}

pub fn qtilde(shift: &QuantileShift, v: f64) -> Result<Evaluated> {
    shift.t0.validate()?;
    shift.t1.validate()?;
    let z = norm_quantile_clamped(v)?;
    Ok(Evaluated {
        value: shift.at_quantile(z.value),
        saturated: z.saturated,
    })
}

/// Pre-period parameters `(μ₀₀, σ₀₀, μ₀₁, σ₀₁, μ₁₀, σ₁₀, μ₁₁, σ₁₁)`, indexed
/// by (group, pre period).
pub type Theta = [f64; 8];

fn shifts(theta: &Theta) -> (QuantileShift, QuantileShift) {
    let cell = |k: usize| CellParams {
        mu: theta[2 * k],
        sigma: theta[2 * k + 1],
    };
    (
        QuantileShift {
            t0: cell(0),
            t1: cell(1),
        },
        QuantileShift {
            t0: cell(2),
            t1: cell(3),
        },
    )
}

fn validate_theta(theta: &Theta) -> Result<()> {
    for k in 0..4 {
        CellParams {
            mu: theta[2 * k],
            sigma: theta[2 * k + 1],
        }
        .validate()?;
    }
    Ok(())
}

/// `t(v) = q̃₁(v) - q̃₀(v)`.
pub fn t_value(theta: &Theta, v: f64) -> Result<Evaluated> {
    validate_theta(theta)?;
    let (g0, g1) = shifts(theta);
    let z = norm_quantile_clamped(v)?;
    Ok(Evaluated {
        value: g1.at_quantile(z.value) - g0.at_quantile(z.value),
        saturated: z.saturated,
    })
}

/// Closed-form gradient of `t(v)` with respect to [`Theta`].
///
/// Written in terms of `z_d = (μ_d1 - μ_d0)/(σ_d0√2) + erf⁻¹(2v-1)·σ_d1/σ_d0`,
/// so it does not share code with [`t_value`].
pub fn t_gradient(theta: &Theta, v: f64) -> Result<Theta> {
    validate_theta(theta)?;
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::domain(format!("v = {v} is outside (0, 1)")));
    }
    let v = v.clamp(QUANTILE_FLOOR, 1.0 - QUANTILE_FLOOR);
    let e = erf_inv(2.0 * v - 1.0);
    let mut g = [0.0; 8];
    for (d, sign) in [(0usize, -1.0), (1, 1.0)] {
        let (mu0, s0, mu1, s1) = (
            theta[4 * d],
            theta[4 * d + 1],
            theta[4 * d + 2],
            theta[4 * d + 3],
        );
        let z = (mu1 - mu0) / (s0 * std::f64::consts::SQRT_2) + e * s1 / s0;
        // d q̃ / d z_d
        let k = (-z * z).exp() / std::f64::consts::PI.sqrt();
        let r = 1.0 / (s0 * std::f64::consts::SQRT_2);
        g[4 * d] = sign * k * -r;
        g[4 * d + 1] = sign * k * -z / s0;
        g[4 * d + 2] = sign * k * r;
        g[4 * d + 3] = sign * k * e / s0;
    }
    Ok(g)
}

/// Evaluation points for `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            start: 0.001,
            stop: 0.999,
            step: 0.01,
        }
    }
}

impl GridSpec {
    pub fn points(&self) -> Result<Vec<f64>> {
        if !(self.start > 0.0 && self.stop < 1.0 && self.start <= self.stop && self.step > 0.0) {
            return Err(Error::domain(format!(
                "grid {}:{}:{} must satisfy 0 < start <= stop < 1 and step > 0",
                self.start, self.stop, self.step
            )));
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

/// The four pre-period cells fitted jointly, with the covariance of [`Theta`].
#[derive(Debug, Clone, PartialEq)]
pub struct PreTreatmentFit {
    pub theta: Theta,
    /// Inverse observed information for `theta`, free cutoffs profiled out.
    pub cov: DMatrix<f64>,
    pub cutoffs: Cutoffs,
    pub loglik: f64,
    pub counts: [CellCounts; 4],
    /// Total number of pre-period observations.
    pub n: u64,
}

impl PreTreatmentFit {
    pub fn n_group(&self, treated: bool) -> u64 {
        let k = if treated { 2 } else { 0 };
        self.counts[k].n.max(self.counts[k + 1].n)
    }
}

fn cells_of(data: &PanelDataset) -> Result<[CellCounts; 4]> {
    if data.periods().len() != 2 {
        return Err(Error::domain(format!(
            "expected exactly two pre-treatment periods, got {}",
            data.periods().len()
        )));
    }
    Ok([
        data.cell_counts(false, 0)?,
        data.cell_counts(false, 1)?,
        data.cell_counts(true, 0)?,
        data.cell_counts(true, 1)?,
    ])
}

/// Fits the four cells of a two-period pre-treatment panel.
pub fn fit_pretreatment(data: &PanelDataset, anchor: &Cutoffs) -> Result<PreTreatmentFit> {
    fit_pretreatment_counts(cells_of(data)?, anchor)
}

pub fn fit_pretreatment_counts(
    counts: [CellCounts; 4],
    anchor: &Cutoffs,
) -> Result<PreTreatmentFit> {
    let joint = fit_cells(&counts, anchor)?;
    let mut theta = [0.0; 8];
    for (k, p) in joint.cells.iter().enumerate() {
        theta[2 * k] = p.mu;
        theta[2 * k + 1] = p.sigma;
    }
    let cov = joint.covariance.view((0, 0), (8, 8)).into_owned();
    Ok(PreTreatmentFit {
        theta,
        cov,
        cutoffs: joint.cutoffs,
        loglik: joint.loglik,
        n: counts.iter().map(|c| c.n).sum(),
        counts,
    })
}

/// Asymptotic covariance `Ω` of `√n(θ̂ - θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCovariance {
    omega: DMatrix<f64>,
}

impl ThetaCovariance {
    pub fn new(omega: DMatrix<f64>) -> Result<Self> {
        if omega.shape() != (8, 8) {
            return Err(Error::Covariance(format!(
                "expected an 8x8 matrix, got {:?}",
                omega.shape()
            )));
        }
        if omega.iter().any(|x| !x.is_finite()) {
            return Err(Error::Covariance("matrix has non-finite entries".into()));
        }
        let scale = omega
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
            .max(f64::MIN_POSITIVE);
        if (&omega - omega.transpose())
            .iter()
            .any(|x| x.abs() > 1e-9 * scale)
        {
            return Err(Error::Covariance("matrix is not symmetric".into()));
        }
        let min_eig = SymmetricEigen::new(omega.clone()).eigenvalues.min();
        if min_eig < -1e-9 * scale {
            return Err(Error::Covariance(format!(
                "matrix is not positive semidefinite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self { omega })
    }

    pub fn zero() -> Self {
        Self {
            omega: DMatrix::zeros(8, 8),
        }
    }

    /// `n` times the inverse observed information.
    pub fn from_fit(fit: &PreTreatmentFit, n: f64) -> Result<Self> {
        Self::new(&fit.cov * n)
    }

    /// `n` times the sample covariance of bootstrap draws of [`Theta`].
    pub fn from_bootstrap(boot: &BootstrapResult, n: f64) -> Result<Self> {
        if boot.n_success() < 2 {
            return Err(Error::Covariance(
                "fewer than two successful bootstrap replicates".into(),
            ));
        }
        let cov = boot.covariance();
        if cov.len() != 64 {
            return Err(Error::Covariance(
                "bootstrap statistic is not an 8-vector".into(),
            ));
        }
        Self::new(DMatrix::from_row_slice(8, 8, &cov) * n)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.omega
    }

    fn quad(&self, g: &Theta) -> f64 {
        let mut acc = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                acc += g[i] * self.omega[(i, j)] * g[j];
            }
        }
        acc.max(0.0)
    }
}

/// Bootstrap draws of the pre-period parameter vector.
pub fn bootstrap_theta(
    data: &PanelDataset,
    anchor: &Cutoffs,
    spec: &BootstrapSpec,
) -> Result<BootstrapResult> {
    block_bootstrap(
        data,
        |d: &PanelDataset| {
            let table = d.cell_table();
            let cell = |t: usize, treated: bool| {
                let c = CellCounts::new(treated, t, table[t][usize::from(treated)].clone());
                if c.n == 0 {
                    Err(Error::EmptyCell(format!(
                        "no records in cell {}",
                        c.label()
                    )))
                } else {
                    Ok(c)
                }
            };
            let counts = [
                cell(0, false)?,
                cell(1, false)?,
                cell(0, true)?,
                cell(1, true)?,
            ];
            Ok(fit_pretreatment_counts(counts, anchor)?.theta.to_vec())
        },
        spec,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceResult {
    pub theta: Theta,
    pub grid: Vec<f64>,
    pub t_hat: Vec<f64>,
    pub se: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `max_v |t̂(v)|`.
    pub t_max: f64,
    pub u_max: f64,
    pub l_min: f64,
    pub alpha: Option<f64>,
    pub n: Option<f64>,
    pub delta: Option<f64>,
    pub reject: Option<bool>,
    pub p_value: Option<f64>,
    /// Some grid point was clamped before taking a normal quantile.
    pub saturated: bool,
}

/// `t̂(v)` on the grid; bands are left empty.
pub fn t_grid(fit: &PreTreatmentFit, grid: &GridSpec) -> Result<EquivalenceResult> {
    t_grid_theta(&fit.theta, grid)
}

pub fn t_grid_theta(theta: &Theta, grid: &GridSpec) -> Result<EquivalenceResult> {
    let points = grid.points()?;
    let mut t_hat = Vec::with_capacity(points.len());
    let mut saturated = false;
    for &v in &points {
        let t = t_value(theta, v)?;
        saturated |= t.saturated;
        t_hat.push(t.value);
    }
    let t_max = t_hat.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    Ok(EquivalenceResult {
        theta: *theta,
        grid: points,
        t_hat,
        se: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        t_max,
        u_max: f64::NAN,
        l_min: f64::NAN,
        alpha: None,
        n: None,
        delta: None,
        reject: None,
        p_value: None,
        saturated,
    })
}

/// `Û(v) = t̂(v) + Φ⁻¹(1-α)·√(gᵀΩg/n)` and the matching lower band.
pub fn pointwise_bands(
    result: &EquivalenceResult,
    omega: &ThetaCovariance,
    n: f64,
    alpha: f64,
) -> Result<EquivalenceResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha {alpha} is outside (0, 1)")));
    }
    if !(n > 0.0) {
        return Err(Error::domain(format!("n must be positive, got {n}")));
    }
    let c = norm_quantile(1.0 - alpha)?;
    let mut out = result.clone();
    out.se.clear();
    out.lower.clear();
    out.upper.clear();
    for (&v, &t) in result.grid.iter().zip(&result.t_hat) {
        let g = t_gradient(&result.theta, v)?;
        let se = (omega.quad(&g) / n).sqrt();
        out.se.push(se);
        out.lower.push(t - c * se);
        out.upper.push(t + c * se);
    }
    out.u_max = out.upper.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.l_min = out.lower.iter().copied().fold(f64::INFINITY, f64::min);
    out.alpha = Some(alpha);
    out.n = Some(n);
    Ok(out)
}

/// Upper-tail probability `1 - Φ(x/se)` with `se = 0` handled as a limit.
fn one_sided_p(x: f64, se: f64) -> f64 {
    if se > 0.0 {
        norm_sf(x / se)
    } else if x > 0.0 {
        0.0
    } else if x < 0.0 {
        1.0
    } else {
        0.5
    }
}

/// Applies the rejection rule `max Û < δ` and `min L̂ > -δ`, with the
/// p-value `max_v max{1-Φ((δ-t̂)/se), 1-Φ((δ+t̂)/se)}`.
pub fn equivalence_test(result: &EquivalenceResult, delta: f64) -> Result<EquivalenceResult> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::domain(format!(
            "delta must be positive, got {delta}"
        )));
    }
    if result.se.len() != result.grid.len() {
        return Err(Error::domain("bands have not been computed"));
    }
    let p = result
        .t_hat
        .iter()
        .zip(&result.se)
        .map(|(&t, &se)| one_sided_p(delta - t, se).max(one_sided_p(delta + t, se)))
        .fold(0.0f64, f64::max);
    let mut out = result.clone();
    out.delta = Some(delta);
    out.reject = Some(result.u_max < delta && result.l_min > -delta);
    out.p_value = Some(p);
    Ok(out)
}

/// Constant in front of `√((n₁+n₀)/(n₁n₀))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeltaConstant {
    /// `√(-ln(0.05)/2)`
    #[default]
    Exact,
    Rounded,
}

impl DeltaConstant {
    pub fn value(self) -> f64 {
        match self {
            DeltaConstant::Exact => (-(0.05f64).ln() / 2.0).sqrt(),
            DeltaConstant::Rounded => 1.2,
        }
    }
}

/// `min{c·√((n₁+n₀)/(n₁n₀)), 1}`.
pub fn default_delta_with(n1: u64, n0: u64, constant: DeltaConstant) -> Result<f64> {
    if n1 == 0 || n0 == 0 {
        return Err(Error::domain("group sizes must be positive"));
    }
    let (a, b) = (n1 as f64, n0 as f64);
    Ok((constant.value() * ((a + b) / (a * b)).sqrt()).min(1.0))
}

pub fn default_delta(n1: u64, n0: u64) -> Result<f64> {
    default_delta_with(n1, n0, DeltaConstant::Exact)
}

/// `sup_v |t(v)|` for known parameters: a dense grid on the normal-quantile
/// scale followed by golden-section refinement around the best point.
pub fn true_t_max(theta: &Theta) -> Result<f64> {
    validate_theta(theta)?;
    let (g0, g1) = shifts(theta);
    let f = |z: f64| (g1.at_quantile(z) - g0.at_quantile(z)).abs();
    let (lo, hi, n) = (-8.5, 8.5, 200_000);
    let h = (hi - lo) / n as f64;
    let mut best = (f(lo), 0usize);
    for i in 1..=n {
        let val = f(lo + i as f64 * h);
        if val > best.0 {
            best = (val, i);
        }
    }
    let (mut a, mut b) = (
        lo + best.1.saturating_sub(1) as f64 * h,
        lo + (best.1 + 1).min(n) as f64 * h,
    );
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..100 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) >= f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    Ok(best.0.max(f(0.5 * (a + b))))
}

/// Full diagnostic on a two-period pre-treatment panel with the information-based `Ω`.
pub fn run_equivalence(
    data: &PanelDataset,
    anchor: &Cutoffs,
    grid: &GridSpec,
    alpha: f64,
    delta: Option<f64>,
) -> Result<(PreTreatmentFit, EquivalenceResult)> {
    let fit = fit_pretreatment(data, anchor)?;
    let n = fit.n as f64;
    let omega = ThetaCovariance::from_fit(&fit, n)?;
    let base = t_grid(&fit, grid)?;
    let banded = pointwise_bands(&base, &omega, n, alpha)?;
    let delta = match delta {
        Some(d) => d,
        None => default_delta(fit.n_group(true), fit.n_group(false))?,
    };
    Ok((fit, equivalence_test(&banded, delta)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI1: f64 = 0.841_344_746_068_542_9;

    fn unit() -> CellParams {
        CellParams {
            mu: 0.0,
            sigma: 1.0,
        }
    }

    #[test]
    fn qtilde_examples() {
        let id = QuantileShift {
            t0: unit(),
            t1: unit(),
        };
        for v in [0.001, 0.3, 0.5, 0.77, 0.999] {
            assert!((qtilde(&id, v).unwrap().value - v).abs() < 1e-12);
        }
        let shifted = QuantileShift {
            t0: unit(),
            t1: CellParams {
                mu: 1.0,
                sigma: 1.0,
            },
        };
        assert!((qtilde(&shifted, 0.5).unwrap().value - PHI1).abs() < 1e-12);
        assert!(qtilde(&shifted, 0.0).unwrap().value < 1e-3);
        assert!(qtilde(&shifted, 0.0).unwrap().saturated);
        assert!(qtilde(&shifted, 1.0).unwrap().value > 1.0 - 1e-9);
    }

    #[test]
    fn t_grid_examples() {
        let same = [0.1, 1.2, 0.4, 0.9, 0.1, 1.2, 0.4, 0.9];
        let r = t_grid_theta(&same, &GridSpec::default()).unwrap();
        assert_eq!(r.grid.len(), 100);
        assert!(r.t_hat.iter().all(|&t| t == 0.0));

        let theta = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let t = t_value(&theta, 0.5).unwrap().value;
        assert!((t - (PHI1 - 0.5)).abs() < 1e-12);
        assert!((t - 0.341_345).abs() < 1e-6);
    }

    #[test]
    fn gradient_symmetry() {
        let theta = [0.2, 1.3, -0.4, 0.8, 0.2, 1.3, -0.4, 0.8];
        let g = t_gradient(&theta, 0.37).unwrap();
        for i in 0..4 {
            assert!((g[i] + g[i + 4]).abs() < 1e-15);
        }
        let flat = [0.3, 1.1, 0.3, 1.1, -0.2, 0.7, -0.2, 0.7];
        let g = t_gradient(&flat, 0.5).unwrap();
        for d in 0..2 {
            assert!(g[4 * d + 1].abs() < 1e-15 && g[4 * d + 3].abs() < 1e-15);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let theta = [-0.5, 1.5, 1.0, 1.0, -1.5, 2.0, 1.5, 1.5];
        for v in [0.01, 0.2, 0.5, 0.9, 0.99] {
            let g = t_gradient(&theta, v).unwrap();
            for i in 0..8 {
                let h = 1e-6;
                let mut p = theta;
                p[i] += h;
                let up = t_value(&p, v).unwrap().value;
                p[i] -= 2.0 * h;
                let down = t_value(&p, v).unwrap().value;
                let fd = (up - down) / (2.0 * h);
                assert!(
                    (fd - g[i]).abs() <= 1e-5 * fd.abs().max(1e-4),
                    "v={v} i={i}: {fd} vs {}",
                    g[i]
                );
            }
        }
    }

    #[test]
    fn band_scaling() {
        let theta = [-0.5, 1.5, 1.0, 1.0, -1.5, 2.0, 1.5, 1.5];
        let base = t_grid_theta(&theta, &GridSpec::default()).unwrap();
        let zero = pointwise_bands(&base, &ThetaCovariance::zero(), 100.0, 0.05).unwrap();
        assert_eq!(zero.upper, base.t_hat);
        assert_eq!(zero.lower, base.t_hat);

        let omega = ThetaCovariance::new(DMatrix::identity(8, 8) * 2.0).unwrap();
        let a = pointwise_bands(&base, &omega, 1000.0, 0.05).unwrap();
        let b = pointwise_bands(&base, &omega, 2000.0, 0.05).unwrap();
        let c = norm_quantile(0.95).unwrap();
        assert!((c - 1.644_853_626_951_472).abs() < 1e-12);
        for k in 0..a.grid.len() {
            let wa = a.upper[k] - a.t_hat[k];
            let wb = b.upper[k] - b.t_hat[k];
            assert!((wa / wb - 2f64.sqrt()).abs() < 1e-10);
            assert!((wa - c * a.se[k]).abs() < 1e-15);
            assert!(a.lower[k] <= a.t_hat[k] && a.t_hat[k] <= a.upper[k]);
        }
    }

    #[test]
    fn covariance_validation() {
        let mut m = DMatrix::identity(8, 8);
        m[(0, 0)] = -1.0;
        assert!(matches!(ThetaCovariance::new(m), Err(Error::Covariance(_))));
        let mut m = DMatrix::identity(8, 8);
        m[(0, 1)] = 0.5;
        assert!(ThetaCovariance::new(m).is_err());
        assert!(ThetaCovariance::new(DMatrix::identity(4, 4)).is_err());
    }

    fn with_bands(t: f64, se: f64) -> EquivalenceResult {
        let mut r = t_grid_theta(
            &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            &GridSpec::default(),
        )
        .unwrap();
        r.t_hat.iter_mut().for_each(|x| *x = t);
        r.se = vec![se; r.grid.len()];
        r.lower = vec![t - 1.644_853_626_951_472 * se; r.grid.len()];
        r.upper = vec![t + 1.644_853_626_951_472 * se; r.grid.len()];
        r.u_max = t + 1.644_853_626_951_472 * se;
        r.l_min = t - 1.644_853_626_951_472 * se;
        r
    }

    #[test]
    fn decision_examples() {
        let mut r = with_bands(0.0, 0.0);
        r.u_max = 0.022;
        r.l_min = -0.039;
        assert_eq!(equivalence_test(&r, 0.054).unwrap().reject, Some(true));
        r.u_max = 0.06;
        assert_eq!(equivalence_test(&r, 0.054).unwrap().reject, Some(false));

        let r = equivalence_test(&with_bands(0.0, 0.01), 0.054).unwrap();
        assert_eq!(r.reject, Some(true));
        // 1 - Φ(5.4)
        let p = r.p_value.unwrap();
        assert!((p - 3.332_044_848_542_548e-8).abs() < 1e-15, "{p}");

        assert!(equivalence_test(&r, 0.0).is_err());
    }

    #[test]
    fn delta_examples() {
        let d = default_delta(667, 2150).unwrap();
        assert!((d - 0.0542).abs() < 5e-4, "{d}");
        assert_eq!(default_delta(2, 2).unwrap(), 1.0);
        let d = default_delta_with(288, 288, DeltaConstant::Rounded).unwrap();
        assert!((d - 0.1).abs() < 1e-12);
        assert!((DeltaConstant::Exact.value() - 1.223_873_9).abs() < 1e-6);
    }

    #[test]
    fn t_max_oracle() {
        let prop1 = [-0.5, 1.5, 1.0, 1.0, -1.5, 2.0, 0.5, 4.0 / 3.0];
        assert!(true_t_max(&prop1).unwrap() < 1e-12);
        let violated = [-0.5, 1.5, 1.0, 1.0, -1.5, 2.0, 1.5, 1.5];
        let t = true_t_max(&violated).unwrap();
        // Independent check on a plain probability grid.
        let grid_max = (1..100_000)
            .map(|i| {
                t_value(&violated, i as f64 / 100_000.0)
                    .unwrap()
                    .value
                    .abs()
            })
            .fold(0.0f64, f64::max);
        assert!(
            t >= grid_max - 1e-12 && t - grid_max < 1e-6,
            "{t} vs {grid_max}"
        );
        assert!((t - 0.147_227).abs() < 1e-5);
    }

    #[test]
    fn grid_points() {
        let g = GridSpec::default().points().unwrap();
        assert_eq!(g.len(), 100);
        assert!((g[0] - 0.001).abs() < 1e-15 && (g[99] - 0.991).abs() < 1e-12);
        assert!(GridSpec {
            start: 0.0,
            stop: 0.5,
            step: 0.1
        }
        .points()
        .is_err());
    }
}
