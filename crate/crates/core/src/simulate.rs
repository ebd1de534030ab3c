//! Data-generating processes and Monte Carlo harnesses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{block_bootstrap, stream_rng, BootstrapSpec};
use crate::equivalence::{
    fit_pretreatment, pointwise_bands, t_grid, true_t_max, GridSpec, Theta, ThetaCovariance,
};
use crate::error::{Error, Result};
use crate::identification::{counterfactual_params, effects_from_table};
use crate::normal::norm_sf;
use crate::panel::{PanelDataset, PanelParts, Record};
use crate::probit::{CellParams, Cutoffs};

/// Interior cutoffs used for `J` categories unless a spec overrides them.
pub fn default_cutoffs(j: usize) -> Result<Cutoffs> {
    match j {
        3 => Cutoffs::new(vec![0.0, 1.0]),
        5 => Cutoffs::new(vec![-0.5, 0.0, 0.5, 1.0]),
        7 => Cutoffs::new(vec![-0.5, -0.2, 0.1, 0.4, 0.7, 1.0]),
        _ => Err(Error::Config(format!(
            "no default cutoffs for J = {j}; give them explicitly"
        ))),
    }
}

/// Two-period, two-group latent normal design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub theta00: CellParams,
    pub theta01: CellParams,
    pub theta10: CellParams,
    /// Treated group's untreated period-1 distribution. `None` derives it
    /// from the other three cells so parallel trends hold exactly.
    #[serde(default)]
    pub theta11: Option<CellParams>,
    /// Treated group's observed period-1 distribution. `None` means no
    /// treatment effect (draws come from `theta11`).
    #[serde(default)]
    pub treated_post: Option<CellParams>,
    pub cutoffs: Cutoffs,
    /// Units per group; every unit is observed in both periods.
    pub n_per_group: usize,
    #[serde(default)]
    pub seed: u64,
    /// Correlation of a unit's latent draws across the two periods.
    #[serde(default)]
    pub latent_correlation: f64,
}

impl DgpSpec {
    /// Control cells of the estimator study with treated outcome `N(1.5, 1.5²)`.
    pub fn estimator_design(j: usize, n_per_group: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            theta00: CellParams {
                mu: -0.5,
                sigma: 1.5,
            },
            theta01: CellParams {
                mu: 1.0,
                sigma: 1.0,
            },
            theta10: CellParams {
                mu: -1.5,
                sigma: 2.0,
            },
            theta11: None,
            treated_post: Some(CellParams {
                mu: 1.5,
                sigma: 1.5,
            }),
            cutoffs: default_cutoffs(j)?,
            n_per_group,
            seed,
            latent_correlation: 0.0,
        })
    }

    /// Pre-period design violating parallel trends, for the equivalence study.
    pub fn violation_design(j: usize, n_per_group: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            theta11: Some(CellParams {
                mu: 1.5,
                sigma: 1.5,
            }),
            treated_post: None,
            ..Self::estimator_design(j, n_per_group, seed)?
        })
    }

    pub fn validate(&self) -> Result<()> {
        let cells = [
            Some(self.theta00),
            Some(self.theta01),
            Some(self.theta10),
            self.theta11,
            self.treated_post,
        ];
        for c in cells.into_iter().flatten() {
            c.validate()?;
        }
        if self.n_per_group == 0 {
            return Err(Error::Config("n_per_group must be positive".into()));
        }
        if !(self.latent_correlation > -1.0 && self.latent_correlation < 1.0) {
            return Err(Error::Config(format!(
                "latent_correlation {} must lie in (-1, 1)",
                self.latent_correlation
            )));
        }
        Ok(())
    }

    pub fn n_categories(&self) -> usize {
        self.cutoffs.n_categories()
    }

    /// The fixed pair used when fitting data from this design.
    pub fn anchor(&self) -> Cutoffs {
        let (a, b) = self.cutoffs.fixed_pair();
        Cutoffs::pair(a, b).expect("cutoffs are increasing")
    }

    pub fn theta11(&self) -> Result<CellParams> {
        match self.theta11 {
            Some(t) => Ok(t),
            None => {
                Ok(counterfactual_params(&self.theta00, &self.theta01, &self.theta10)?.as_cell())
            }
        }
    }

    pub fn treated_post_params(&self) -> Result<CellParams> {
        match self.treated_post {
            Some(t) => Ok(t),
            None => self.theta11(),
        }
    }

    /// `(θ₀₀, θ₀₁, θ₁₀, θ₁₁)` as a flat pre-period vector.
    pub fn theta_vector(&self) -> Result<Theta> {
        let t11 = self.theta11()?;
        let c = [self.theta00, self.theta01, self.theta10, t11];
        let mut out = [0.0; 8];
        for (k, p) in c.iter().enumerate() {
            out[2 * k] = p.mu;
            out[2 * k + 1] = p.sigma;
        }
        Ok(out)
    }

    /// True `Δ_j`, `j = 1..J`: treated outcome against the counterfactual.
    pub fn true_delta(&self) -> Result<Vec<f64>> {
        let (obs, cf) = (self.treated_post_params()?, self.theta11()?);
        Ok(self
            .cutoffs
            .as_slice()
            .iter()
            .map(|k| norm_sf((k - obs.mu) / obs.sigma) - norm_sf((k - cf.mu) / cf.sigma))
            .collect())
    }
}

/// Draws a panel from `spec` with its own seed.
pub fn simulate_panel(spec: &DgpSpec) -> Result<PanelDataset> {
    simulate_panel_with(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed))
}

/// Draws a panel from `spec` using `rng`. Control units come first.
pub fn simulate_panel_with<R: Rng + ?Sized>(spec: &DgpSpec, rng: &mut R) -> Result<PanelDataset> {
    spec.validate()?;
    let n = spec.n_per_group;
    let kappa = spec.cutoffs.as_slice();
    let rho = spec.latent_correlation;
    let rest = (1.0 - rho * rho).sqrt();
    let cells = [
        [spec.theta00, spec.theta01],
        [spec.theta10, spec.treated_post_params()?],
    ];
    let mut records = Vec::with_capacity(4 * n);
    for (d, [pre, post]) in cells.iter().enumerate() {
        for i in 0..n {
            let unit = (d * n + i) as u32;
            let e0: f64 = rng.sample(StandardNormal);
            let e1: f64 = rng.sample(StandardNormal);
            let e1 = rho * e0 + rest * e1;
            for (period, (p, e)) in [(pre, e0), (post, e1)].into_iter().enumerate() {
                let latent = p.mu + p.sigma * e;
                records.push(Record {
                    unit,
                    period: period as u16,
                    outcome: kappa.partition_point(|&k| k < latent) as u16,
                    treated: d == 1,
                    cluster: unit,
                });
            }
        }
    }
    PanelDataset::from_parts(PanelParts {
        records,
        n_categories: spec.n_categories(),
        periods: vec![0, 1],
        clustered: true,
        ..Default::default()
    })
}

/// SplitMix64 of `seed + index`: an independent seed per replicate.
pub fn replicate_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorMcConfig {
    pub reps: usize,
    /// Bootstrap replicates per repetition; 0 skips intervals and coverage.
    #[serde(default)]
    pub bootstrap_reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha() -> f64 {
    0.10
}

/// One repetition of the estimator study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRep {
    pub rep: usize,
    pub delta_hat: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub boot_failures: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimandMetrics {
    /// Category threshold `j` of `Δ_j`.
    pub j: usize,
    pub truth: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub n_categories: usize,
    pub n_per_group: usize,
    pub reps: usize,
    pub failures: usize,
    pub abs_bias: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub per_estimand: Vec<EstimandMetrics>,
    pub cutoffs: Cutoffs,
    #[serde(skip)]
    pub records: Vec<EstimatorRep>,
}

/// Bias, RMSE and percentile-interval coverage of `Δ̂_j`, averaged over `j`.
pub fn run_estimator_mc(spec: &DgpSpec, config: &EstimatorMcConfig) -> Result<McReport> {
    spec.validate()?;
    if config.reps < 2 {
        return Err(Error::Config("at least 2 repetitions are required".into()));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha {} is outside (0, 1)",
            config.alpha
        )));
    }
    let truth = spec.true_delta()?;
    let anchor = spec.anchor();
    let j = spec.n_categories();
    let records: Vec<EstimatorRep> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let mut out = EstimatorRep {
                rep,
                delta_hat: Vec::new(),
                lower: Vec::new(),
                upper: Vec::new(),
                boot_failures: 0,
                error: None,
            };
            let mut run = || -> Result<()> {
                let data = simulate_panel_with(spec, &mut stream_rng(config.seed, rep as u64))?;
                let est = effects_from_table(&data.cell_table(), &anchor)?;
                out.delta_hat = est.delta.clone();
                if config.bootstrap_reps > 0 {
                    let boot = block_bootstrap(
                        &data,
                        |d: &PanelDataset| {
                            effects_from_table(&d.cell_table(), &anchor).map(|e| e.delta)
                        },
                        &BootstrapSpec {
                            n_reps: config.bootstrap_reps,
                            seed: replicate_seed(config.seed, rep as u64),
                            alpha_levels: vec![config.alpha],
                        },
                    )?;
                    out.boot_failures = boot.failures.len();
                    let ci = boot.intervals_around(&est.delta);
                    for s in &ci.stats {
                        out.lower.push(s.levels[0].lower);
                        out.upper.push(s.levels[0].upper);
                    }
                }
                Ok(())
            };
            if let Err(e) = run() {
                out.error = Some(e.to_string());
                out.delta_hat.clear();
            }
            out
        })
        .collect();

    let ok: Vec<&EstimatorRep> = records.iter().filter(|r| r.error.is_none()).collect();
    if ok.len() < 2 {
        return Err(Error::Config(format!(
            "only {} of {} repetitions succeeded",
            ok.len(),
            config.reps
        )));
    }
    let s = ok.len() as f64;
    let per_estimand: Vec<EstimandMetrics> = (0..j - 1)
        .map(|k| {
            let errs: Vec<f64> = ok.iter().map(|r| r.delta_hat[k] - truth[k]).collect();
            let coverage = (config.bootstrap_reps > 0).then(|| {
                ok.iter()
                    .filter(|r| r.lower[k] <= truth[k] && truth[k] <= r.upper[k])
                    .count() as f64
                    / s
            });
            EstimandMetrics {
                j: k + 1,
                truth: truth[k],
                bias: errs.iter().sum::<f64>() / s,
                rmse: (errs.iter().map(|e| e * e).sum::<f64>() / s).sqrt(),
                coverage,
            }
        })
        .collect();
    let m = (j - 1) as f64;
    Ok(McReport {
        n_categories: j,
        n_per_group: spec.n_per_group,
        reps: config.reps,
        failures: records.len() - ok.len(),
        abs_bias: per_estimand.iter().map(|e| e.bias.abs()).sum::<f64>() / m,
        rmse: per_estimand.iter().map(|e| e.rmse).sum::<f64>() / m,
        coverage: (config.bootstrap_reps > 0).then(|| {
            per_estimand
                .iter()
                .map(|e| e.coverage.unwrap_or(f64::NAN))
                .sum::<f64>()
                / m
        }),
        per_estimand,
        cutoffs: spec.cutoffs.clone(),
        records,
    })
}

/// Threshold offsets from the true maximum deviation used in the equivalence study.
pub const DELTA_OFFSETS: [f64; 6] = [-0.05, -0.01, 0.0, 0.01, 0.05, 0.10];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivalenceMcConfig {
    pub reps: usize,
    /// Thresholds as offsets from the oracle `t_max`.
    #[serde(default = "default_offsets")]
    pub delta_offsets: Vec<f64>,
    #[serde(default = "default_test_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_offsets() -> Vec<f64> {
    DELTA_OFFSETS.to_vec()
}

fn default_test_alpha() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceRep {
    pub rep: usize,
    pub t_max: f64,
    pub u_max: f64,
    pub l_min: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub offset: f64,
    pub delta: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceMcReport {
    pub n_categories: usize,
    pub n_per_group: usize,
    pub reps: usize,
    pub failures: usize,
    /// Oracle `sup_v |t(v)|` of the design.
    pub true_t_max: f64,
    pub rates: Vec<RejectionRate>,
    pub cutoffs: Cutoffs,
    #[serde(skip)]
    pub records: Vec<EquivalenceRep>,
}

/// Rejection rates of the equivalence test over thresholds `t_max + offset`.
///
/// Both periods of the simulated panel play the role of pre-treatment periods.
pub fn run_equivalence_mc(
    spec: &DgpSpec,
    config: &EquivalenceMcConfig,
) -> Result<EquivalenceMcReport> {
    spec.validate()?;
    if config.reps < 1 {
        return Err(Error::Config("at least 1 repetition is required".into()));
    }
    let t_max = true_t_max(&spec.theta_vector()?)?;
    let deltas: Vec<f64> = config.delta_offsets.iter().map(|o| t_max + o).collect();
    if let Some(d) = deltas.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::Config(format!("threshold {d} is not positive")));
    }
    let anchor = spec.anchor();
    let records: Vec<EquivalenceRep> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let run = || -> Result<EquivalenceRep> {
                let data = simulate_panel_with(spec, &mut stream_rng(config.seed, rep as u64))?;
                let fit = fit_pretreatment(&data, &anchor)?;
                let n = fit.n as f64;
                let omega = ThetaCovariance::from_fit(&fit, n)?;
                let bands = pointwise_bands(&t_grid(&fit, &config.grid)?, &omega, n, config.alpha)?;
                Ok(EquivalenceRep {
                    rep,
                    t_max: bands.t_max,
                    u_max: bands.u_max,
                    l_min: bands.l_min,
                    error: None,
                })
            };
            run().unwrap_or_else(|e| EquivalenceRep {
                rep,
                t_max: f64::NAN,
                u_max: f64::NAN,
                l_min: f64::NAN,
                error: Some(e.to_string()),
            })
        })
        .collect();
    let failures = records.iter().filter(|r| r.error.is_some()).count();
    let ok = (records.len() - failures) as f64;
    let rates = config
        .delta_offsets
        .iter()
        .zip(&deltas)
        .map(|(&offset, &delta)| RejectionRate {
            offset,
            delta,
            rate: records
                .iter()
                .filter(|r| r.error.is_none() && r.u_max < delta && r.l_min > -delta)
                .count() as f64
                / ok,
        })
        .collect();
    Ok(EquivalenceMcReport {
        n_categories: spec.n_categories(),
        n_per_group: spec.n_per_group,
        reps: config.reps,
        failures,
        true_t_max: t_max,
        rates,
        cutoffs: spec.cutoffs.clone(),
        records,
    })
}

/// Whether a single rep rejects at `delta`; mirrors [`crate::equivalence::equivalence_test`].
pub fn rep_rejects(rep: &EquivalenceRep, delta: f64) -> bool {
    rep.error.is_none() && rep.u_max < delta && rep.l_min > -delta
}

fn check_simplex(p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("{p:?} is not a probability vector")));
    }
    Ok(())
}

/// Difference-in-differences of `P(Y ≥ j)` across groups:
/// `[P₁¹(≥j) - P₁⁰(≥j)] - [P₀¹(≥j) - P₀⁰(≥j)]`.
pub fn pt_gap(
    treated_pre: &[f64],
    treated_post: &[f64],
    control_pre: &[f64],
    control_post: &[f64],
    threshold: usize,
) -> Result<f64> {
    let all = [treated_pre, treated_post, control_pre, control_post];
    let j = treated_pre.len();
    for p in all {
        if p.len() != j {
            return Err(Error::domain("probability vectors differ in length"));
        }
        check_simplex(p)?;
    }
    if threshold == 0 || threshold >= j {
        return Err(Error::domain(format!(
            "threshold {threshold} must lie in 1..{}",
            j - 1
        )));
    }
    let tail = |p: &[f64]| p[threshold..].iter().sum::<f64>();
    Ok((tail(treated_post) - tail(treated_pre)) - (tail(control_post) - tail(control_pre)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frequencies_match_model() {
        let spec = DgpSpec {
            theta00: CellParams {
                mu: 0.0,
                sigma: 1.0,
            },
            theta01: CellParams {
                mu: 0.0,
                sigma: 1.0,
            },
            theta10: CellParams {
                mu: 0.0,
                sigma: 1.0,
            },
            theta11: None,
            treated_post: None,
            cutoffs: Cutoffs::default(),
            n_per_group: 250_000,
            seed: 5,
            latent_correlation: 0.0,
        };
        let data = simulate_panel(&spec).unwrap();
        let mut counts = [0u64; 3];
        for r in data.records() {
            counts[r.outcome as usize] += 1;
        }
        let want = [0.5, 0.341_344_746, 0.158_655_254];
        for (c, w) in counts.iter().zip(want) {
            assert!((*c as f64 / 1e6 - w).abs() < 0.002);
        }
    }

    #[test]
    fn deterministic_and_validated() {
        let spec = DgpSpec::estimator_design(5, 200, 9).unwrap();
        let a = simulate_panel(&spec).unwrap();
        let b = simulate_panel(&spec).unwrap();
        assert_eq!(a.records(), b.records());

        let mut bad = spec.clone();
        bad.theta01.sigma = 0.0;
        assert!(simulate_panel(&bad).is_err());
    }

    #[test]
    fn derived_designs_satisfy_parallel_trends() {
        let spec = DgpSpec::estimator_design(3, 10, 0).unwrap();
        assert!(true_t_max(&spec.theta_vector().unwrap()).unwrap() < 1e-12);
        let t = spec.theta11().unwrap();
        assert!((t.mu - 0.5).abs() < 1e-12 && (t.sigma - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn pt_gap_examples() {
        let t0 = [0.3, 0.5, 0.2];
        let t1 = [0.2, 0.5, 0.3];
        let c0 = [0.2, 0.5, 0.3];
        let c1 = [0.2, 0.4, 0.4];
        assert!(pt_gap(&t0, &t1, &c0, &c1, 2).unwrap().abs() < 1e-12);
        assert!((pt_gap(&t0, &t1, &c0, &c1, 1).unwrap() - 0.1).abs() < 1e-12);
        for j in 1..3 {
            assert_eq!(pt_gap(&t0, &t0, &t0, &t0, j).unwrap(), 0.0);
        }
        assert!(pt_gap(&[0.5, 0.6, 0.0], &t1, &c0, &c1, 1).is_err());
        assert!(pt_gap(&t0, &t1, &c0, &c1, 3).is_err());
    }

    #[test]
    fn latent_correlation_links_periods() {
        let mut spec = DgpSpec::estimator_design(3, 20_000, 1).unwrap();
        spec.latent_correlation = 0.9;
        let data = simulate_panel(&spec).unwrap();
        let r = data.records();
        let same = r.chunks(2).filter(|p| p[0].outcome == p[1].outcome).count() as f64;
        spec.latent_correlation = 0.0;
        let data = simulate_panel(&spec).unwrap();
        let r0 = data.records();
        let same0 = r0
            .chunks(2)
            .filter(|p| p[0].outcome == p[1].outcome)
            .count() as f64;
        assert!(same > same0 + 2000.0);
        spec.latent_correlation = 1.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn small_estimator_mc_runs() {
        let spec = DgpSpec::estimator_design(3, 300, 0).unwrap();
        let cfg = EstimatorMcConfig {
            reps: 6,
            bootstrap_reps: 20,
            alpha: 0.1,
            seed: 4,
        };
        let a = run_estimator_mc(&spec, &cfg).unwrap();
        let b = run_estimator_mc(&spec, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 6);
        assert_eq!(a.per_estimand.len(), 2);
        assert!(a.coverage.unwrap() >= 0.0 && a.coverage.unwrap() <= 1.0);
    }

    #[test]
    fn replicate_seeds_differ() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| replicate_seed(7, i)).collect();
        assert_eq!(s.len(), 1000);
    }
}
