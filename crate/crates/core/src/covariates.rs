//! Ordered probit with covariate-indexed location and log-scale.
//!
//! `μ_it = Z_itᵀγ₀`, `σ_it = exp(Z_itᵀγ₁)` with `Z_it = (1, D_i, t, D_i·t, X_itᵀ)`.
//! Effects compare predicted probabilities for treated post-period rows with
//! `D` switched off. This does not impose the quantile parallel-trends
//! restriction used by [`crate::identification`]; the two estimators agree
//! only when both groups share the same pre-period distribution.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal::{interval_prob, norm_pdf, norm_sf};
use crate::optimize::{minimize, MinimizeOptions, Objective};
use crate::panel::PanelDataset;
use crate::probit::{fit_cells, Cutoffs};

/// Names of the four fixed design columns.
pub const BASE_COLUMNS: [&str; 4] = ["intercept", "treated", "post", "treated_x_post"];

/// Design rows `Z_it`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateDesign {
    pub rows: Vec<f64>,
    pub outcomes: Vec<u16>,
    /// Number of covariates `p`; rows have `4 + p` entries.
    pub p: usize,
    pub names: Vec<String>,
}

impl CovariateDesign {
    pub fn width(&self) -> usize {
        4 + self.p
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let k = self.width();
        &self.rows[i * k..(i + 1) * k]
    }

    /// Builds `Z` from a two-period panel (period position 1 is `t = 1`).
    pub fn from_panel(data: &PanelDataset) -> Result<Self> {
        if data.periods().len() != 2 {
            return Err(Error::domain(format!(
                "the covariate model needs a two-period panel, got {} periods",
                data.periods().len()
            )));
        }
        let p = data.n_covariates();
        let mut rows = Vec::with_capacity(data.len() * (4 + p));
        let mut outcomes = Vec::with_capacity(data.len());
        for (i, r) in data.records().iter().enumerate() {
            let d = f64::from(u8::from(r.treated));
            let t = f64::from(r.period);
            rows.extend_from_slice(&[1.0, d, t, d * t]);
            rows.extend_from_slice(data.covariates_of(i));
            outcomes.push(r.outcome);
        }
        let mut names: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
        names.extend(data.covariate_names().iter().cloned());
        Ok(Self {
            rows,
            outcomes,
            p,
            names,
        })
    }
}

/// Mean and log-scale coefficients, both of length `4 + p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub gamma0: Vec<f64>,
    pub gamma1: Vec<f64>,
}

impl GammaParams {
    pub fn location_scale(&self, z: &[f64]) -> (f64, f64) {
        let mu = dot(&self.gamma0, z);
        let sigma = dot(&self.gamma1, z).exp();
        (mu, sigma)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateFit {
    pub gamma: GammaParams,
    pub names: Vec<String>,
    pub cutoffs: Cutoffs,
    pub loglik: f64,
    /// Inverse observed information over `(γ₀, γ₁, free cutoffs)`, original covariate scale.
    pub covariance: DMatrix<f64>,
    pub n: usize,
}

/// Category probabilities for one design row.
pub fn predict_probs(gamma: &GammaParams, z: &[f64], cutoffs: &Cutoffs) -> Vec<f64> {
    let (mu, sigma) = gamma.location_scale(z);
    cutoffs
        .boundaries()
        .windows(2)
        .map(|w| interval_prob((w[0] - mu) / sigma, (w[1] - mu) / sigma))
        .collect()
}

/// Likelihood over standardized design rows, in natural coordinates
/// `(γ₀, γ₁, κ_3, …)`.
struct CovLikelihood<'a> {
    design: &'a CovariateDesign,
    anchor: (f64, f64),
    n_free: usize,
}

impl CovLikelihood<'_> {
    fn dim(&self) -> usize {
        2 * self.design.width() + self.n_free
    }

    fn eval(&self, nat: &[f64], mut score: Option<&mut [f64]>) -> f64 {
        let k = self.design.width();
        if let Some(s) = score.as_deref_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut bounds = vec![f64::NEG_INFINITY, self.anchor.0, self.anchor.1];
        bounds.extend_from_slice(&nat[2 * k..]);
        bounds.push(f64::INFINITY);
        if bounds.windows(2).any(|w| !(w[0] < w[1])) {
            return f64::NEG_INFINITY;
        }
        let (g0, g1) = (&nat[..k], &nat[k..2 * k]);
        let mut ll = 0.0;
        for i in 0..self.design.len() {
            let z = self.design.row(i);
            let y = self.design.outcomes[i] as usize;
            let mu = dot(g0, z);
            let sigma = dot(g1, z).exp();
            if !mu.is_finite() || !(sigma > 0.0) || !sigma.is_finite() {
                return f64::NEG_INFINITY;
            }
            let (lo, hi) = ((bounds[y] - mu) / sigma, (bounds[y + 1] - mu) / sigma);
            let p = interval_prob(lo, hi);
            if !(p > 0.0) {
                return f64::NEG_INFINITY;
            }
            ll += p.ln();
            if let Some(s) = score.as_deref_mut() {
                let (f_lo, f_hi) = (norm_pdf(lo), norm_pdf(hi));
                let af = |a: f64, f: f64| if a.is_finite() { a * f } else { 0.0 };
                let d_mu = -(f_hi - f_lo) / (sigma * p);
                // derivative with respect to log σ
                let d_logsig = -(af(hi, f_hi) - af(lo, f_lo)) / p;
                for c in 0..k {
                    s[c] += d_mu * z[c];
                    s[k + c] += d_logsig * z[c];
                }
                if y + 1 >= 3 && y + 1 < bounds.len() - 1 {
                    s[2 * k + y + 1 - 3] += f_hi / (sigma * p);
                }
                if y >= 3 && y < bounds.len() - 1 {
                    s[2 * k + y - 3] -= f_lo / (sigma * p);
                }
            }
        }
        ll
    }

    fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        let k2 = 2 * self.design.width();
        let mut nat = u.to_vec();
        let mut prev = self.anchor.1;
        for i in 0..self.n_free {
            prev += u[k2 + i].exp();
            nat[k2 + i] = prev;
        }
        nat
    }

    fn to_unconstrained(&self, nat: &[f64]) -> Vec<f64> {
        let k2 = 2 * self.design.width();
        let mut u = nat.to_vec();
        let mut prev = self.anchor.1;
        for i in 0..self.n_free {
            u[k2 + i] = (nat[k2 + i] - prev).ln();
            prev = nat[k2 + i];
        }
        u
    }

    fn information(&self, nat: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        let (mut up, mut down) = (vec![0.0; d], vec![0.0; d]);
        let mut p = nat.to_vec();
        for j in 0..d {
            let step = 1e-5 * nat[j].abs().max(1.0);
            p[j] = nat[j] + step;
            self.eval(&p, Some(&mut up));
            p[j] = nat[j] - step;
            self.eval(&p, Some(&mut down));
            p[j] = nat[j];
            for i in 0..d {
                h[(i, j)] = -(up[i] - down[i]) / (2.0 * step);
            }
        }
        (&h + h.transpose()) * 0.5
    }
}

impl Objective for CovLikelihood<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let ll = self.eval(&self.to_natural(u), None);
        if ll.is_finite() {
            -ll / self.design.len() as f64
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, u: &[f64], grad: &mut [f64]) {
        let nat = self.to_natural(u);
        let mut s = vec![0.0; nat.len()];
        if !self.eval(&nat, Some(&mut s)).is_finite() {
            grad.iter_mut().for_each(|g| *g = f64::NAN);
            return;
        }
        let n = self.design.len() as f64;
        let k2 = 2 * self.design.width();
        for i in 0..k2 {
            grad[i] = -s[i] / n;
        }
        let mut tail = 0.0;
        for i in (0..self.n_free).rev() {
            tail += s[k2 + i];
            grad[k2 + i] = -u[k2 + i].exp() * tail / n;
        }
    }
}

/// Column means and standard deviations of the covariates.
fn standardize(design: &CovariateDesign) -> Result<(CovariateDesign, Vec<f64>, Vec<f64>)> {
    let (k, n) = (design.width(), design.len() as f64);
    let mut mean = vec![0.0; design.p];
    let mut sd = vec![0.0; design.p];
    for c in 0..design.p {
        mean[c] = (0..design.len()).map(|i| design.row(i)[4 + c]).sum::<f64>() / n;
        let var = (0..design.len())
            .map(|i| (design.row(i)[4 + c] - mean[c]).powi(2))
            .sum::<f64>()
            / n;
        sd[c] = var.sqrt();
        if !(sd[c] > 1e-12 * mean[c].abs().max(1.0)) {
            return Err(Error::Collinearity(format!(
                "covariate '{}' is constant and duplicates the intercept",
                design.names[4 + c]
            )));
        }
    }
    let mut out = design.clone();
    for i in 0..design.len() {
        for c in 0..design.p {
            let v = &mut out.rows[i * k + 4 + c];
            *v = (*v - mean[c]) / sd[c];
        }
    }
    Ok((out, mean, sd))
}

fn check_rank(design: &CovariateDesign) -> Result<()> {
    let k = design.width();
    let mut gram = DMatrix::<f64>::zeros(k, k);
    for i in 0..design.len() {
        let z = design.row(i);
        for a in 0..k {
            for b in 0..k {
                gram[(a, b)] += z[a] * z[b];
            }
        }
    }
    let ev = nalgebra::SymmetricEigen::new(gram / design.len() as f64).eigenvalues;
    let (min, max) = (ev.min(), ev.max());
    if !(min > 1e-10 * max) {
        return Err(Error::Collinearity(format!(
            "design matrix is rank deficient (eigenvalue ratio {:e})",
            min / max
        )));
    }
    Ok(())
}

/// Maximum-likelihood fit over all records of a two-period panel.
pub fn fit_covariate_model(data: &PanelDataset, anchor: &Cutoffs) -> Result<CovariateFit> {
    let j = data.n_categories();
    if anchor.len() != 2 && anchor.len() != j - 1 {
        return Err(Error::domain(format!(
            "expected 2 or {} cutoffs for {j} categories, got {}",
            j - 1,
            anchor.len()
        )));
    }
    let raw = CovariateDesign::from_panel(data)?;
    let (design, mean, sd) = standardize(&raw)?;
    check_rank(&design)?;
    let k = design.width();
    let n_free = j - 3;

    // Start from the covariate-free cell fits, which are the exact optimum when p = 0.
    let cells = [
        data.cell_counts(false, 0)?,
        data.cell_counts(true, 0)?,
        data.cell_counts(false, 1)?,
        data.cell_counts(true, 1)?,
    ];
    let base = fit_cells(&cells, anchor)?;
    let (m, s): (Vec<f64>, Vec<f64>) = base.cells.iter().map(|c| (c.mu, c.sigma.ln())).unzip();
    let mut init = vec![0.0; 2 * k + n_free];
    for (offset, v) in [(0, &m), (k, &s)] {
        init[offset] = v[0];
        init[offset + 1] = v[1] - v[0];
        init[offset + 2] = v[2] - v[0];
        init[offset + 3] = v[3] - v[2] - v[1] + v[0];
    }
    init[2 * k..].copy_from_slice(&base.cutoffs.as_slice()[2..]);

    let lik = CovLikelihood {
        design: &design,
        anchor: anchor.fixed_pair(),
        n_free,
    };
    let opts = MinimizeOptions {
        grad_tol: 1e-10,
        step_tol: 1e-13,
        max_iter: 3000,
    };
    let min = minimize(&lik, &lik.to_unconstrained(&init), &opts)?;
    let mut nat = lik.to_natural(&min.x);
    let mut ll = lik.eval(&nat, None);
    let d = lik.dim();
    let mut info = lik.information(&nat);
    let n = design.len() as f64;
    let mut score = vec![0.0; d];
    for _ in 0..8 {
        lik.eval(&nat, Some(&mut score));
        let gnorm = score.iter().fold(0.0f64, |a, b| a.max(b.abs())) / n;
        if gnorm < 1e-13 {
            break;
        }
        let Some(chol) = info.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&DMatrix::from_column_slice(d, 1, &score));
        let trial: Vec<f64> = nat.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let mut ts = vec![0.0; d];
        let tll = lik.eval(&trial, Some(&mut ts));
        let tnorm = ts.iter().fold(0.0f64, |a, b| a.max(b.abs())) / n;
        if !tll.is_finite() || tnorm >= gnorm || tll < ll - 1e-9 * ll.abs() {
            break;
        }
        nat = trial;
        ll = tll;
        info = lik.information(&nat);
    }
    if nat[..2 * k].iter().any(|g| g.abs() > 1e4) {
        return Err(Error::NonIdentified(
            "coefficients diverge; some category is perfectly predicted".into(),
        ));
    }
    let cov_std = info.cholesky().map(|c| c.inverse()).ok_or_else(|| {
        Error::NonIdentified("observed information is not positive definite".into())
    })?;

    // Back to the original covariate scale: γ_orig = A γ_std.
    let mut a = DMatrix::<f64>::identity(d, d);
    for block in [0, k] {
        for c in 0..design.p {
            a[(block + 4 + c, block + 4 + c)] = 1.0 / sd[c];
            a[(block, block + 4 + c)] = -mean[c] / sd[c];
        }
    }
    let orig = &a * DMatrix::from_column_slice(d, 1, &nat);
    let covariance = &a * cov_std * a.transpose();
    let mut kappa = anchor.as_slice()[..2].to_vec();
    kappa.extend_from_slice(&nat[2 * k..]);
    Ok(CovariateFit {
        gamma: GammaParams {
            gamma0: orig.as_slice()[..k].to_vec(),
            gamma1: orig.as_slice()[k..2 * k].to_vec(),
        },
        names: raw.names,
        cutoffs: Cutoffs::new(kappa)?,
        loglik: ll,
        covariance,
        n: design.len(),
    })
}

/// `P(Y ≥ j)` for `j = 1..J`.
fn upper_tails(gamma: &GammaParams, z: &[f64], cutoffs: &Cutoffs) -> Vec<f64> {
    let (mu, sigma) = gamma.location_scale(z);
    cutoffs
        .as_slice()
        .iter()
        .map(|k| norm_sf((k - mu) / sigma))
        .collect()
}

/// `Δ̂_j`, `j = 1..J`: treated post-period rows averaged, with `D = 1`
/// against `D = 0` (both the group and interaction terms switched off).
pub fn covariate_effects(
    gamma: &GammaParams,
    data: &PanelDataset,
    cutoffs: &Cutoffs,
) -> Result<Vec<f64>> {
    let design = CovariateDesign::from_panel(data)?;
    if gamma.gamma0.len() != design.width() || gamma.gamma1.len() != design.width() {
        return Err(Error::domain(format!(
            "coefficients have length {}, design has {} columns",
            gamma.gamma0.len(),
            design.width()
        )));
    }
    let mut acc = vec![0.0; cutoffs.len()];
    let mut n1 = 0usize;
    for (i, r) in data.records().iter().enumerate() {
        if !(r.treated && r.period == 1) {
            continue;
        }
        n1 += 1;
        let z = design.row(i);
        let mut off = z.to_vec();
        off[1] = 0.0;
        off[3] = 0.0;
        let on = upper_tails(gamma, z, cutoffs);
        let base = upper_tails(gamma, &off, cutoffs);
        for (a, (x, y)) in acc.iter_mut().zip(on.iter().zip(&base)) {
            *a += x - y;
        }
    }
    if n1 == 0 {
        return Err(Error::EmptyCell(
            "no treated records in the post period".into(),
        ));
    }
    Ok(acc.into_iter().map(|a| a / n1 as f64).collect())
}
