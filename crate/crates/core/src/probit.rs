//! Ordered-probit cells with two anchored cutoffs.
//!
//! Each group-time cell has its own latent location and scale. The first two
//! interior cutoffs are held fixed, which pins the latent scale; with more
//! than three categories the remaining cutoffs are estimated and shared by
//! all cells fitted together.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identification::{counterfactual_params, CounterfactualParams};
use crate::normal::{interval_prob, norm_pdf, norm_quantile};
use crate::optimize::{minimize, MinimizeOptions, Objective};
use crate::panel::{CellCounts, PanelDataset};

/// Location and scale of one cell's latent distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub mu: f64,
    pub sigma: f64,
}

impl CellParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || !self.sigma.is_finite() || self.sigma <= 0.0 {
            return Err(Error::domain(format!(
                "cell parameters need finite mu and positive sigma, got ({}, {})",
                self.mu, self.sigma
            )));
        }
        Ok(())
    }

    /// `P(Y* <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        crate::normal::norm_cdf((x - self.mu) / self.sigma)
    }
}

/// Strictly increasing interior cutoffs `κ_1 < … < κ_{J-1}`.
///
/// The first two are the anchored pair; `κ_0 = -∞` and `κ_J = +∞` are implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Cutoffs {
    kappa: Vec<f64>,
}

impl Cutoffs {
    pub fn new(kappa: Vec<f64>) -> Result<Self> {
        if kappa.len() < 2 {
            return Err(Error::domain("at least two cutoffs are required"));
        }
        if kappa.iter().any(|k| !k.is_finite()) {
            return Err(Error::domain("cutoffs must be finite"));
        }
        if kappa.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain(format!(
                "cutoffs must be strictly increasing, got {kappa:?}"
            )));
        }
        Ok(Self { kappa })
    }

    pub fn pair(k1: f64, k2: f64) -> Result<Self> {
        Self::new(vec![k1, k2])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.kappa
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of categories these cutoffs describe.
    pub fn n_categories(&self) -> usize {
        self.kappa.len() + 1
    }

    /// The anchored pair `(κ_1, κ_2)`.
    pub fn fixed_pair(&self) -> (f64, f64) {
        (self.kappa[0], self.kappa[1])
    }

    /// `[-∞, κ_1, …, κ_{J-1}, +∞]`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.kappa.len() + 2);
        b.push(f64::NEG_INFINITY);
        b.extend_from_slice(&self.kappa);
        b.push(f64::INFINITY);
        b
    }
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self {
            kappa: vec![0.0, 1.0],
        }
    }
}

impl TryFrom<Vec<f64>> for Cutoffs {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Cutoffs> for Vec<f64> {
    fn from(c: Cutoffs) -> Self {
        c.kappa
    }
}

fn probs_from_boundaries(mu: f64, sigma: f64, bounds: &[f64]) -> Vec<f64> {
    bounds
        .windows(2)
        .map(|w| interval_prob((w[0] - mu) / sigma, (w[1] - mu) / sigma))
        .collect()
}

/// Category probabilities `Φ((κ_{j+1}-μ)/σ) - Φ((κ_j-μ)/σ)`.
pub fn cell_probs(params: &CellParams, cutoffs: &Cutoffs) -> Result<Vec<f64>> {
    params.validate()?;
    Ok(probs_from_boundaries(
        params.mu,
        params.sigma,
        &cutoffs.boundaries(),
    ))
}

/// Closed-form `(μ, σ)` reproducing a three-category distribution.
pub fn invert_cell_j3(probs: &[f64], cutoffs: &Cutoffs) -> Result<CellParams> {
    if probs.len() != 3 {
        return Err(Error::domain(format!(
            "closed-form inversion needs 3 probabilities, got {}",
            probs.len()
        )));
    }
    if probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Boundary(format!(
            "every probability must lie strictly inside (0, 1), got {probs:?}"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("probabilities sum to {sum}, not 1")));
    }
    let (k1, k2) = cutoffs.fixed_pair();
    let z1 = norm_quantile(probs[0])?;
    let z2 = norm_quantile(1.0 - probs[2])?;
    let sigma = (k2 - k1) / (z2 - z1);
    let mu = k1 - sigma * z1;
    CellParams::new(mu, sigma)
}

/// Result of fitting one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFit {
    pub params: CellParams,
    pub loglik: f64,
    /// Covariance of `(μ̂, σ̂)`: inverse observed information.
    pub cov: [[f64; 2]; 2],
    pub converged: bool,
}

/// Several cells fitted under shared cutoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFit {
    pub cells: Vec<CellParams>,
    pub cutoffs: Cutoffs,
    pub loglik: f64,
    /// Inverse observed information over `(μ_1, σ_1, …, μ_K, σ_K, κ_3, …)`.
    pub covariance: DMatrix<f64>,
    pub converged: bool,
}

impl JointFit {
    /// The 2×2 covariance block of cell `k`.
    pub fn cell_cov(&self, k: usize) -> [[f64; 2]; 2] {
        let c = &self.covariance;
        let i = 2 * k;
        [
            [c[(i, i)], c[(i, i + 1)]],
            [c[(i + 1, i)], c[(i + 1, i + 1)]],
        ]
    }

    pub fn cell_fit(&self, k: usize, cell: &CellCounts) -> CellFit {
        let params = self.cells[k];
        let probs = probs_from_boundaries(params.mu, params.sigma, &self.cutoffs.boundaries());
        CellFit {
            params,
            loglik: multinomial_loglik(&cell.counts, &probs),
            cov: self.cell_cov(k),
            converged: self.converged,
        }
    }
}

fn multinomial_loglik(counts: &[u64], probs: &[f64]) -> f64 {
    counts
        .iter()
        .zip(probs)
        .filter(|(&c, _)| c > 0)
        .map(|(&c, &p)| c as f64 * p.ln())
        .sum()
}

/// Log-likelihood of cells sharing anchored cutoffs, in natural parameters
/// `(μ_1, σ_1, …, μ_K, σ_K, κ_3, …, κ_{J-1})`.
struct CellsLikelihood<'a> {
    cells: &'a [CellCounts],
    anchor: (f64, f64),
    n_free: usize,
    total: f64,
}

impl<'a> CellsLikelihood<'a> {
    fn dim(&self) -> usize {
        2 * self.cells.len() + self.n_free
    }

    fn boundaries(&self, nat: &[f64]) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.n_free + 4);
        b.push(f64::NEG_INFINITY);
        b.push(self.anchor.0);
        b.push(self.anchor.1);
        b.extend_from_slice(&nat[2 * self.cells.len()..]);
        b.push(f64::INFINITY);
        b
    }

    /// Log-likelihood; fills `score` with its gradient when given.
    /// Returns `-inf` outside the parameter space.
    fn eval(&self, nat: &[f64], mut score: Option<&mut [f64]>) -> f64 {
        if let Some(s) = score.as_deref_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        let bounds = self.boundaries(nat);
        if bounds.windows(2).any(|w| !(w[0] < w[1])) {
            return f64::NEG_INFINITY;
        }
        let k_cells = self.cells.len();
        let mut ll = 0.0;
        let mut a = vec![0.0; bounds.len()];
        let mut pdf = vec![0.0; bounds.len()];
        for (k, cell) in self.cells.iter().enumerate() {
            let (mu, sigma) = (nat[2 * k], nat[2 * k + 1]);
            if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
                return f64::NEG_INFINITY;
            }
            for (i, &b) in bounds.iter().enumerate() {
                a[i] = (b - mu) / sigma;
                pdf[i] = norm_pdf(a[i]);
            }
            for (j, &c) in cell.counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let p = interval_prob(a[j], a[j + 1]);
                if !(p > 0.0) {
                    return f64::NEG_INFINITY;
                }
                let c = c as f64;
                ll += c * p.ln();
                if let Some(s) = score.as_deref_mut() {
                    let w = c / p;
                    let apdf = |i: usize| if a[i].is_finite() { a[i] * pdf[i] } else { 0.0 };
                    s[2 * k] -= w * (pdf[j + 1] - pdf[j]) / sigma;
                    s[2 * k + 1] -= w * (apdf(j + 1) - apdf(j)) / sigma;
                    // Free cutoffs sit at boundary positions 3.. (κ_3 onward).
                    if j + 1 >= 3 && j + 1 < bounds.len() - 1 {
                        s[2 * k_cells + (j + 1 - 3)] += w * pdf[j + 1] / sigma;
                    }
                    if j >= 3 && j < bounds.len() - 1 {
                        s[2 * k_cells + (j - 3)] -= w * pdf[j] / sigma;
                    }
                }
            }
        }
        ll
    }

    /// Unconstrained coordinates: `(μ, log σ)` per cell and log increments
    /// of the free cutoffs above `κ_2`.
    fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        let k = self.cells.len();
        let mut nat = u.to_vec();
        for c in 0..k {
            nat[2 * c + 1] = u[2 * c + 1].exp();
        }
        let mut prev = self.anchor.1;
        for i in 0..self.n_free {
            prev += u[2 * k + i].exp();
            nat[2 * k + i] = prev;
        }
        nat
    }

    fn to_unconstrained(&self, nat: &[f64]) -> Vec<f64> {
        let k = self.cells.len();
        let mut u = nat.to_vec();
        for c in 0..k {
            u[2 * c + 1] = nat[2 * c + 1].ln();
        }
        let mut prev = self.anchor.1;
        for i in 0..self.n_free {
            u[2 * k + i] = (nat[2 * k + i] - prev).ln();
            prev = nat[2 * k + i];
        }
        u
    }

    /// Observed information `-∂²ℓ/∂θ∂θᵀ` by central differences of the score.
    fn information(&self, nat: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        let mut up = vec![0.0; d];
        let mut down = vec![0.0; d];
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

impl Objective for CellsLikelihood<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let ll = self.eval(&self.to_natural(u), None);
        if ll.is_finite() {
            -ll / self.total
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, u: &[f64], grad: &mut [f64]) {
        let nat = self.to_natural(u);
        let mut s = vec![0.0; nat.len()];
        let ll = self.eval(&nat, Some(&mut s));
        if !ll.is_finite() {
            grad.iter_mut().for_each(|g| *g = f64::NAN);
            return;
        }
        let k = self.cells.len();
        for c in 0..k {
            grad[2 * c] = -s[2 * c] / self.total;
            grad[2 * c + 1] = -s[2 * c + 1] * nat[2 * c + 1] / self.total;
        }
        // κ_m = κ_2 + Σ_{i<=m} e^{u_i}: ∂/∂u_i = e^{u_i} Σ_{m>=i} ∂/∂κ_m.
        let mut tail = 0.0;
        for i in (0..self.n_free).rev() {
            tail += s[2 * k + i];
            grad[2 * k + i] = -u[2 * k + i].exp() * tail / self.total;
        }
    }
}

fn check_identifiable(cells: &[CellCounts], j: usize) -> Result<()> {
    for cell in cells {
        if cell.counts.len() != j {
            return Err(Error::domain(format!(
                "cell {} has {} categories, expected {j}",
                cell.label(),
                cell.counts.len()
            )));
        }
        if cell.n == 0 {
            return Err(Error::EmptyCell(format!("cell {} is empty", cell.label())));
        }
        if cell.nonempty_categories() < 2 {
            return Err(Error::NonIdentified(format!(
                "all observations of cell {} fall in one category",
                cell.label()
            )));
        }
        if j == 3 {
            if let Some(empty) = cell.counts.iter().position(|&c| c == 0) {
                return Err(Error::NonIdentified(format!(
                    "cell {} has no observations in category {empty}",
                    cell.label()
                )));
            }
        }
    }
    if j > 3 {
        for cat in 0..j {
            if cells.iter().all(|c| c.counts[cat] == 0) {
                return Err(Error::NonIdentified(format!(
                    "no fitted cell has observations in category {cat}"
                )));
            }
        }
    }
    Ok(())
}

/// Starting values: closed-form inversion of (bottom, next, rest) masses,
/// and free cutoffs from pooled cumulative frequencies.
fn initial_natural(cells: &[CellCounts], anchor: &Cutoffs, n_free: usize) -> Result<Vec<f64>> {
    let pair = Cutoffs::pair(anchor.fixed_pair().0, anchor.fixed_pair().1)?;
    let mut nat = Vec::with_capacity(2 * cells.len() + n_free);
    for cell in cells {
        let c = &cell.counts;
        let rest: u64 = c[2..].iter().sum();
        let mut bins = [c[0] as f64, c[1] as f64, rest as f64];
        if bins.iter().any(|&b| b == 0.0) {
            bins.iter_mut().for_each(|b| *b += 0.5);
        }
        let total: f64 = bins.iter().sum();
        let probs: Vec<f64> = bins.iter().map(|b| b / total).collect();
        let p = invert_cell_j3(&probs, &pair)?;
        nat.push(p.mu);
        nat.push(p.sigma);
    }
    if n_free > 0 {
        if anchor.len() == n_free + 2 {
            nat.extend_from_slice(&anchor.as_slice()[2..]);
        } else {
            let mut prev = anchor.fixed_pair().1;
            for m in 2..2 + n_free {
                let mut acc = 0.0;
                let mut weight = 0.0;
                for (k, cell) in cells.iter().enumerate() {
                    let below: u64 = cell.counts[..=m].iter().sum();
                    let cum = (below as f64 + 0.5) / (cell.n as f64 + 1.0);
                    acc += cell.n as f64 * (nat[2 * k] + nat[2 * k + 1] * norm_quantile(cum)?);
                    weight += cell.n as f64;
                }
                let kappa = (acc / weight).max(prev + 1e-2);
                nat.push(kappa);
                prev = kappa;
            }
        }
    }
    Ok(nat)
}

/// Fits several cells jointly under `anchor`'s fixed pair.
///
/// With more than three categories the cutoffs above `κ_2` are estimated
/// and shared; if `anchor` lists all `J-1` cutoffs the extra ones are used
/// as starting values.
pub fn fit_cells(cells: &[CellCounts], anchor: &Cutoffs) -> Result<JointFit> {
    if cells.is_empty() {
        return Err(Error::domain("no cells to fit"));
    }
    let j = cells[0].counts.len();
    if j < 3 {
        return Err(Error::domain(format!(
            "need at least 3 categories, got {j}"
        )));
    }
    if anchor.len() != 2 && anchor.len() != j - 1 {
        return Err(Error::domain(format!(
            "expected 2 or {} cutoffs for {j} categories, got {}",
            j - 1,
            anchor.len()
        )));
    }
    check_identifiable(cells, j)?;
    let n_free = j - 3;
    let init = initial_natural(cells, anchor, n_free)?;
    fit_cells_from(cells, anchor, n_free, &init)
}

fn fit_cells_from(
    cells: &[CellCounts],
    anchor: &Cutoffs,
    n_free: usize,
    init: &[f64],
) -> Result<JointFit> {
    let lik = CellsLikelihood {
        cells,
        anchor: anchor.fixed_pair(),
        n_free,
        total: cells.iter().map(|c| c.n as f64).sum(),
    };
    let opts = MinimizeOptions {
        grad_tol: 1e-10,
        step_tol: 1e-13,
        max_iter: 2000,
    };
    let min = minimize(&lik, &lik.to_unconstrained(init), &opts)?;
    let mut nat = lik.to_natural(&min.x);
    let mut ll = lik.eval(&nat, None);

    // Newton polish in natural coordinates; BFGS stalls once objective
    // differences reach rounding level.
    let d = lik.dim();
    let mut score = vec![0.0; d];
    let mut info = lik.information(&nat);
    for _ in 0..8 {
        lik.eval(&nat, Some(&mut score));
        let gnorm = score.iter().fold(0.0f64, |m, s| m.max(s.abs())) / lik.total;
        if gnorm < 1e-13 {
            break;
        }
        let Some(chol) = info.clone().cholesky() else {
            break;
        };
        let step = chol.solve(&DMatrix::from_column_slice(d, 1, &score));
        let trial: Vec<f64> = nat.iter().zip(step.iter()).map(|(x, s)| x + s).collect();
        let trial_ll = lik.eval(&trial, None);
        let mut trial_score = vec![0.0; d];
        lik.eval(&trial, Some(&mut trial_score));
        let trial_norm = trial_score.iter().fold(0.0f64, |m, s| m.max(s.abs())) / lik.total;
        if !trial_ll.is_finite() || trial_norm >= gnorm || trial_ll < ll - 1e-9 * ll.abs() {
            break;
        }
        nat = trial;
        ll = trial_ll;
        info = lik.information(&nat);
    }

    let k = cells.len();
    for c in 0..k {
        let (mu, sigma) = (nat[2 * c], nat[2 * c + 1]);
        if mu.abs() > 1e6 || !(sigma.ln().abs() < 25.0) {
            return Err(Error::NonIdentified(format!(
                "estimates for cell {} diverge (mu {mu}, sigma {sigma})",
                cells[c].label()
            )));
        }
    }
    let covariance = info
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| {
            Error::NonIdentified("observed information is not positive definite".into())
        })?;

    let mut kappa = anchor.as_slice()[..2].to_vec();
    kappa.extend_from_slice(&nat[2 * k..]);
    let cutoffs = Cutoffs::new(kappa).map_err(|_| {
        Error::Convergence(crate::optimize::OptimError::NoConvergence {
            best: nat.clone(),
            value: -ll,
            grad_norm: f64::NAN,
            iterations: min.iterations,
        })
    })?;
    Ok(JointFit {
        cells: (0..k)
            .map(|c| CellParams {
                mu: nat[2 * c],
                sigma: nat[2 * c + 1],
            })
            .collect(),
        cutoffs,
        loglik: ll,
        covariance,
        converged: true,
    })
}

/// Maximum-likelihood fit of one cell with every cutoff held fixed.
pub fn fit_cell(counts: &CellCounts, cutoffs: &Cutoffs) -> Result<CellFit> {
    let j = counts.counts.len();
    if cutoffs.n_categories() != j {
        return Err(Error::domain(format!(
            "{} cutoffs given for {j} categories",
            cutoffs.len()
        )));
    }
    if j == 3 {
        check_identifiable(std::slice::from_ref(counts), 3)?;
    } else if counts.n == 0 {
        return Err(Error::EmptyCell(format!(
            "cell {} is empty",
            counts.label()
        )));
    } else if counts.nonempty_categories() < 2 {
        return Err(Error::NonIdentified(format!(
            "all observations of cell {} fall in one category",
            counts.label()
        )));
    }
    let init = initial_natural(std::slice::from_ref(counts), cutoffs, 0)?;
    fit_single_from(counts, cutoffs, &init)
}

/// Single-cell fit from an explicit starting point.
pub fn fit_cell_from(counts: &CellCounts, cutoffs: &Cutoffs, init: CellParams) -> Result<CellFit> {
    fit_single_from(counts, cutoffs, &[init.mu, init.sigma])
}

fn fit_single_from(counts: &CellCounts, cutoffs: &Cutoffs, init: &[f64]) -> Result<CellFit> {
    // All cutoffs fixed: treat κ_3.. as part of the anchor by fitting with a
    // likelihood over the full boundary set.
    let fixed = FixedCutoffLikelihood {
        counts,
        bounds: cutoffs.boundaries(),
        total: counts.n as f64,
    };
    let opts = MinimizeOptions {
        grad_tol: 1e-10,
        step_tol: 1e-13,
        max_iter: 2000,
    };
    let start = [init[0], init[1].ln()];
    let min = minimize(&fixed, &start, &opts)?;
    let mut nat = [min.x[0], min.x[1].exp()];
    let mut ll = fixed.eval(&nat, None);
    let mut info = fixed.information(&nat);
    for _ in 0..8 {
        let mut s = [0.0; 2];
        fixed.eval(&nat, Some(&mut s));
        let gnorm = s[0].abs().max(s[1].abs()) / fixed.total;
        if gnorm < 1e-13 {
            break;
        }
        let Some(inv) = info.try_inverse() else { break };
        let trial = [
            nat[0] + inv[(0, 0)] * s[0] + inv[(0, 1)] * s[1],
            nat[1] + inv[(1, 0)] * s[0] + inv[(1, 1)] * s[1],
        ];
        let mut ts = [0.0; 2];
        let tll = fixed.eval(&trial, Some(&mut ts));
        let tnorm = ts[0].abs().max(ts[1].abs()) / fixed.total;
        if !tll.is_finite() || tnorm >= gnorm || tll < ll - 1e-9 * ll.abs() {
            break;
        }
        nat = trial;
        ll = tll;
        info = fixed.information(&nat);
    }
    if nat[0].abs() > 1e6 || !(nat[1].ln().abs() < 25.0) {
        return Err(Error::NonIdentified(format!(
            "estimates for cell {} diverge",
            counts.label()
        )));
    }
    let cov = info
        .try_inverse()
        .ok_or_else(|| Error::NonIdentified("observed information is singular".into()))?;
    Ok(CellFit {
        params: CellParams {
            mu: nat[0],
            sigma: nat[1],
        },
        loglik: ll,
        cov: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
        converged: true,
    })
}

struct FixedCutoffLikelihood<'a> {
    counts: &'a CellCounts,
    bounds: Vec<f64>,
    total: f64,
}

impl FixedCutoffLikelihood<'_> {
    fn eval(&self, nat: &[f64; 2], score: Option<&mut [f64; 2]>) -> f64 {
        let (mu, sigma) = (nat[0], nat[1]);
        if !(sigma > 0.0) || !mu.is_finite() || !sigma.is_finite() {
            return f64::NEG_INFINITY;
        }
        let a: Vec<f64> = self.bounds.iter().map(|b| (b - mu) / sigma).collect();
        let pdf: Vec<f64> = a.iter().map(|&x| norm_pdf(x)).collect();
        let apdf = |i: usize| if a[i].is_finite() { a[i] * pdf[i] } else { 0.0 };
        let mut ll = 0.0;
        let mut s = [0.0; 2];
        for (j, &c) in self.counts.counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let p = interval_prob(a[j], a[j + 1]);
            if !(p > 0.0) {
                return f64::NEG_INFINITY;
            }
            let c = c as f64;
            ll += c * p.ln();
            let w = c / p;
            s[0] -= w * (pdf[j + 1] - pdf[j]) / sigma;
            s[1] -= w * (apdf(j + 1) - apdf(j)) / sigma;
        }
        if let Some(out) = score {
            *out = s;
        }
        ll
    }

    fn information(&self, nat: &[f64; 2]) -> nalgebra::Matrix2<f64> {
        let mut h = nalgebra::Matrix2::zeros();
        for j in 0..2 {
            let step = 1e-5 * nat[j].abs().max(1.0);
            let mut p = *nat;
            let (mut up, mut down) = ([0.0; 2], [0.0; 2]);
            p[j] = nat[j] + step;
            self.eval(&p, Some(&mut up));
            p[j] = nat[j] - step;
            self.eval(&p, Some(&mut down));
            for i in 0..2 {
                h[(i, j)] = -(up[i] - down[i]) / (2.0 * step);
            }
        }
        (h + h.transpose()) * 0.5
    }
}

impl Objective for FixedCutoffLikelihood<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let ll = self.eval(&[u[0], u[1].exp()], None);
        if ll.is_finite() {
            -ll / self.total
        } else {
            f64::INFINITY
        }
    }

    fn gradient(&self, u: &[f64], grad: &mut [f64]) {
        let sigma = u[1].exp();
        let mut s = [0.0; 2];
        let ll = self.eval(&[u[0], sigma], Some(&mut s));
        if !ll.is_finite() {
            grad[0] = f64::NAN;
            grad[1] = f64::NAN;
            return;
        }
        grad[0] = -s[0] / self.total;
        grad[1] = -s[1] * sigma / self.total;
    }
}

/// Fitted cells of a two-period design plus the implied counterfactual.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Control group, pre period.
    pub theta00: CellFit,
    /// Control group, post period.
    pub theta01: CellFit,
    /// Treated group, pre period.
    pub theta10: CellFit,
    /// Treated group's untreated post-period distribution.
    pub theta11: CounterfactualParams,
    pub cutoffs: Cutoffs,
    pub loglik: f64,
    /// Joint covariance over `(θ00, θ01, θ10, free cutoffs)`.
    pub covariance: DMatrix<f64>,
    pub counts: [CellCounts; 3],
}

/// Fits the three untreated cells of a two-period panel.
///
/// Period position 0 is the pre period and 1 the post period. The treated
/// post-period cell is never used here.
pub fn fit_joint(data: &PanelDataset, anchor: &Cutoffs) -> Result<FitResult> {
    if data.periods().len() != 2 {
        return Err(Error::domain(format!(
            "expected a two-period panel, got {} periods; select the pre and post periods first",
            data.periods().len()
        )));
    }
    let cells = [
        data.cell_counts(false, 0)?,
        data.cell_counts(false, 1)?,
        data.cell_counts(true, 0)?,
    ];
    fit_counts(cells, anchor)
}

/// [`fit_joint`] on precomputed counts `[(0,0), (0,1), (1,0)]`.
pub fn fit_counts(cells: [CellCounts; 3], anchor: &Cutoffs) -> Result<FitResult> {
    let joint = fit_cells(&cells, anchor)?;
    let theta11 = counterfactual_params(&joint.cells[0], &joint.cells[1], &joint.cells[2])?;
    Ok(FitResult {
        theta00: joint.cell_fit(0, &cells[0]),
        theta01: joint.cell_fit(1, &cells[1]),
        theta10: joint.cell_fit(2, &cells[2]),
        theta11,
        cutoffs: joint.cutoffs,
        loglik: joint.loglik,
        covariance: joint.covariance,
        counts: cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal::norm_cdf;

    fn kappa01() -> Cutoffs {
        Cutoffs::pair(0.0, 1.0).unwrap()
    }

    fn cell(counts: &[u64]) -> CellCounts {
        CellCounts::new(false, 0, counts.to_vec())
    }

    #[test]
    fn probs_examples() {
        let p = cell_probs(&CellParams::new(0.0, 1.0).unwrap(), &kappa01()).unwrap();
        let phi1 = norm_cdf(1.0);
        let expected = [0.5, phi1 - 0.5, 1.0 - phi1];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p[1] - 0.341345).abs() < 1e-6);

        let p = cell_probs(&CellParams::new(-0.5, 1.5).unwrap(), &kappa01()).unwrap();
        let expected = [
            norm_cdf(0.5 / 1.5),
            norm_cdf(1.0) - norm_cdf(0.5 / 1.5),
            1.0 - norm_cdf(1.0),
        ];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((p[0] - 0.630559).abs() < 1e-6);
        assert!((p[1] - 0.210786).abs() < 1e-6);

        let p = cell_probs(
            &CellParams {
                mu: 100.0,
                sigma: 1.0,
            },
            &kappa01(),
        )
        .unwrap();
        assert!(p[0] < 1e-300 && p[1] < 1e-300 && (p[2] - 1.0).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        assert!(cell_probs(
            &CellParams {
                mu: 0.0,
                sigma: 0.0
            },
            &kappa01()
        )
        .is_err());
    }

    #[test]
    fn inversion_examples() {
        for (mu, sigma) in [(0.0, 1.0), (-0.5, 1.5)] {
            let p = cell_probs(&CellParams { mu, sigma }, &kappa01()).unwrap();
            let back = invert_cell_j3(&p, &kappa01()).unwrap();
            assert!((back.mu - mu).abs() < 1e-10 && (back.sigma - sigma).abs() < 1e-10);
        }
        assert!(matches!(
            invert_cell_j3(&[0.0, 0.5, 0.5], &kappa01()),
            Err(Error::Boundary(_))
        ));
    }

    #[test]
    fn cutoffs_validate() {
        assert!(Cutoffs::new(vec![0.0]).is_err());
        assert!(Cutoffs::new(vec![1.0, 0.0]).is_err());
        assert!(Cutoffs::new(vec![0.0, f64::NAN]).is_err());
        assert_eq!(Cutoffs::default().fixed_pair(), (0.0, 1.0));
    }

    #[test]
    fn fit_matches_closed_form() {
        let c = cell(&[500, 341, 159]);
        let fit = fit_cell(&c, &kappa01()).unwrap();
        let oracle = invert_cell_j3(&c.frequencies(), &kappa01()).unwrap();
        assert!((fit.params.mu - oracle.mu).abs() < 1e-6);
        assert!((fit.params.sigma - oracle.sigma).abs() < 1e-6);
    }

    #[test]
    fn saturated_fit_from_a_distant_start() {
        let c = cell(&[10, 10, 10]);
        let fit = fit_cell_from(
            &c,
            &kappa01(),
            CellParams {
                mu: 3.0,
                sigma: 0.2,
            },
        )
        .unwrap();
        let p = cell_probs(&fit.params, &kappa01()).unwrap();
        for q in p {
            assert!((q - 1.0 / 3.0).abs() < 1e-8, "{q}");
        }
    }

    #[test]
    fn single_category_is_not_identified() {
        assert!(matches!(
            fit_cell(&cell(&[100, 0, 0]), &kappa01()),
            Err(Error::NonIdentified(_))
        ));
    }

    #[test]
    fn optimum_beats_perturbations() {
        let c = cell(&[120, 75, 205]);
        let fit = fit_cell(&c, &kappa01()).unwrap();
        for (dm, ds) in [
            (1e-3, 0.0),
            (-1e-3, 0.0),
            (0.0, 1e-3),
            (0.0, -1e-3),
            (1e-2, -1e-2),
        ] {
            let q = cell_probs(
                &CellParams {
                    mu: fit.params.mu + dm,
                    sigma: fit.params.sigma + ds,
                },
                &kappa01(),
            )
            .unwrap();
            assert!(multinomial_loglik(&c.counts, &q) <= fit.loglik);
        }
    }

    #[test]
    fn covariance_scales_inversely_with_n() {
        let small = fit_cell(&cell(&[300, 200, 500]), &kappa01()).unwrap();
        let large = fit_cell(&cell(&[600, 400, 1000]), &kappa01()).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let ratio = small.cov[i][j] / large.cov[i][j];
                assert!((ratio - 2.0).abs() < 0.4, "ratio {ratio}");
            }
        }
        let c = small.cov;
        assert!((c[0][1] - c[1][0]).abs() < 1e-12);
        assert!(c[0][0] > 0.0 && c[0][0] * c[1][1] - c[0][1] * c[1][0] > 0.0);
    }

    #[test]
    fn joint_fit_recovers_free_cutoffs_from_exact_probabilities() {
        // Counts proportional to exact model probabilities: the MLE is the truth.
        let kappa = Cutoffs::new(vec![-0.5, -0.2, 0.1, 0.4, 0.7, 1.0]).unwrap();
        let truths = [(-0.5, 1.5), (1.0, 1.0), (-1.5, 2.0)];
        let cells: Vec<CellCounts> = truths
            .iter()
            .map(|&(mu, sigma)| {
                let p = cell_probs(&CellParams { mu, sigma }, &kappa).unwrap();
                CellCounts::new(
                    false,
                    0,
                    p.iter().map(|q| (q * 1e9).round() as u64).collect(),
                )
            })
            .collect();
        let fit = fit_cells(&cells, &Cutoffs::pair(-0.5, -0.2).unwrap()).unwrap();
        for (got, want) in fit.cutoffs.as_slice().iter().zip(kappa.as_slice()) {
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
        for (p, &(mu, sigma)) in fit.cells.iter().zip(&truths) {
            assert!((p.mu - mu).abs() < 1e-5 && (p.sigma - sigma).abs() < 1e-5);
        }
    }

    #[test]
    fn identical_cells_give_identical_estimates() {
        let c = [120, 75, 205, 40, 60];
        let cells = [
            CellCounts::new(false, 0, c.to_vec()),
            CellCounts::new(false, 1, c.to_vec()),
            CellCounts::new(true, 0, c.to_vec()),
        ];
        let fit = fit_counts(cells, &Cutoffs::pair(0.0, 1.0).unwrap()).unwrap();
        for other in [&fit.theta01, &fit.theta10] {
            assert!((other.params.mu - fit.theta00.params.mu).abs() < 1e-6);
            assert!((other.params.sigma - fit.theta00.params.sigma).abs() < 1e-6);
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let cells = vec![
            CellCounts::new(false, 0, vec![30, 20, 25, 15, 10]),
            CellCounts::new(true, 0, vec![5, 25, 30, 20, 20]),
        ];
        let lik = CellsLikelihood {
            cells: &cells,
            anchor: (0.0, 1.0),
            n_free: 2,
            total: 200.0,
        };
        let nat = [0.3, 1.2, 0.8, 0.9, 1.6, 2.3];
        let mut s = vec![0.0; 6];
        lik.eval(&nat, Some(&mut s));
        for i in 0..6 {
            let h = 1e-6;
            let mut p = nat;
            p[i] += h;
            let up = lik.eval(&p, None);
            p[i] -= 2.0 * h;
            let down = lik.eval(&p, None);
            let fd = (up - down) / (2.0 * h);
            assert!(
                (fd - s[i]).abs() < 1e-5 * fd.abs().max(1.0),
                "{i}: {fd} vs {}",
                s[i]
            );
        }
    }
}
