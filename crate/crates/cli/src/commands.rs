use ordinal_did::bootstrap::{block_bootstrap, BootstrapResult, IntervalSet};
use ordinal_did::bounds::{bounds_from_marginals, BenefitBounds};
use ordinal_did::equivalence::{
    bootstrap_theta, default_delta, equivalence_test, fit_pretreatment, pointwise_bands, t_grid,
    ThetaCovariance,
};
use ordinal_did::identification::effects_from_table;
use ordinal_did::probit::CellFit;
use ordinal_did::simulate::{run_equivalence_mc, run_estimator_mc};
use ordinal_did::{
    cell_probs, covariate_effects, estimate_pipeline, estimate_with_bootstrap, fit_covariate_model,
    load_csv, PanelDataset,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{BoundsArgs, EquivArgs, FitArgs, SimulateArgs};
use crate::config::{resolve_pre_post, DeltaSetting, PeriodRoles, RunConfig, SimConfig, Study};
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// A flat CSV written next to the result document as `<stem>.<suffix>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub suffix: &'static str,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Config(e.to_string());
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| CliError::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Result document plus its side tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub document: Value,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.document).expect("document is valid JSON");
        s.push('\n');
        s
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable")
}

fn num(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

fn load(cfg: &RunConfig) -> CliResult<PanelDataset> {
    Ok(load_csv(&cfg.input, &cfg.columns)?)
}

fn data_summary(data: &PanelDataset) -> Value {
    let table = data.cell_table();
    let cells: Vec<Value> = table
        .iter()
        .enumerate()
        .flat_map(|(t, row)| {
            row.iter().enumerate().map(move |(d, counts)| {
                json!({
                    "treated": d == 1,
                    "period": data.periods()[t],
                    "n": counts.iter().sum::<u64>(),
                    "counts": counts,
                })
            })
        })
        .collect();
    json!({
        "n_records": data.len(),
        "n_units": data.n_units(),
        "n_treated_units": data.n_treated_units(),
        "n_clusters": data.is_clustered().then(|| data.n_clusters()),
        "n_categories": data.n_categories(),
        "category_codes": data.category_codes(),
        "periods": data.periods(),
        "dropped": {
            "missing_outcome": data.dropped().missing_outcome,
            "missing_covariate": data.dropped().missing_covariate,
            "filtered_out": data.dropped().filtered_out,
        },
        "cells": cells,
    })
}

fn cell_json(c: &CellFit) -> Value {
    json!({
        "mu": c.params.mu,
        "sigma": c.params.sigma,
        "se_mu": c.cov[0][0].sqrt(),
        "se_sigma": c.cov[1][1].sqrt(),
    })
}

fn intervals_json(names: &[String], set: &IntervalSet) -> Value {
    Value::Array(
        names
            .iter()
            .zip(&set.stats)
            .map(|(name, s)| {
                json!({
                    "name": name,
                    "point": s.point,
                    "se": s.se,
                    "intervals": s.levels,
                })
            })
            .collect(),
    )
}

fn bootstrap_json(boot: &BootstrapResult) -> Value {
    json!({
        "n_reps": boot.n_reps,
        "n_success": boot.n_success(),
        "failures": boot.failures,
        "warning": boot.warning,
    })
}

fn replicate_table(names: &[String], boot: &BootstrapResult) -> Table {
    let mut header = vec!["replicate".to_string()];
    header.extend(names.iter().cloned());
    let rows = boot
        .replicate_index
        .iter()
        .zip(&boot.replicates)
        .map(|(i, r)| {
            let mut row = vec![i.to_string()];
            row.extend(r.iter().map(|&x| num(x)));
            row
        })
        .collect();
    Table {
        suffix: "replicates",
        header,
        rows,
    }
}

fn effect_names(j: usize) -> Vec<String> {
    (0..j)
        .map(|k| format!("zeta_{k}"))
        .chain((1..j).map(|k| format!("delta_{k}")))
        .collect()
}

fn two_period_panel(
    cfg: &mut RunConfig,
    data: &PanelDataset,
    pre: Option<i64>,
    post: Option<i64>,
) -> CliResult<PanelDataset> {
    let (pre, post) = resolve_pre_post(pre, post, data.periods())?;
    cfg.periods = Some(PeriodRoles::PrePost { pre, post });
    Ok(data.select_periods(pre, post)?)
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<Outcome> {
    let mut cfg = RunConfig::for_fit(args)?;
    let data = load(&cfg)?;
    let panel = two_period_panel(&mut cfg, &data, args.pre, args.post)?;
    let anchor = cfg.anchor()?;
    let names = effect_names(panel.n_categories());

    let (fit, effects, boot) = match &cfg.bootstrap {
        Some(spec) => {
            let (f, e, b) = estimate_with_bootstrap(&panel, &anchor, spec)?;
            (f, e, Some(b))
        }
        None => {
            let (f, e) = estimate_pipeline(&panel, &anchor)?;
            (f, e, None)
        }
    };

    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "fit",
        "config": to_value(&cfg),
        "seed": cfg.seed,
        "data": data_summary(&panel),
        "cutoffs": fit.cutoffs.as_slice(),
        "loglik": fit.loglik,
        "cells": {
            "theta00": cell_json(&fit.theta00),
            "theta01": cell_json(&fit.theta01),
            "theta10": cell_json(&fit.theta10),
        },
        "counterfactual": {"mu11": fit.theta11.mu11, "sigma11": fit.theta11.sigma11},
        "effects": {
            "zeta": effects.zeta,
            "delta": effects.delta,
            "observed_treated": effects.observed_treated,
            "counterfactual": effects.counterfactual,
        },
    });
    let mut tables = Vec::new();
    if let (Some(b), Some(ci)) = (&boot, &effects.ci) {
        doc["effects"]["intervals"] = intervals_json(&names, ci);
        doc["bootstrap"] = bootstrap_json(b);
        tables.push(replicate_table(&names, b));
    }
    if !cfg.columns.covariates.is_empty() {
        let cov = fit_covariate_model(&panel, &anchor)?;
        let delta = covariate_effects(&cov.gamma, &panel, &cov.cutoffs)?;
        doc["covariate_model"] = json!({
            "note": "the interaction parameterization does not impose latent parallel trends; its effects need not match the main estimate",
            "design": cov.names,
            "gamma_location": cov.gamma.gamma0,
            "gamma_log_scale": cov.gamma.gamma1,
            "cutoffs": cov.cutoffs.as_slice(),
            "loglik": cov.loglik,
            "delta": delta,
        });
    }
    Ok(Outcome {
        document: doc,
        tables,
    })
}

pub fn cmd_equivtest(args: &EquivArgs) -> CliResult<Outcome> {
    let mut cfg = RunConfig::for_equivtest(args)?;
    let data = load(&cfg)?;
    let (a, b) = match cfg.periods {
        Some(PeriodRoles::PrePre { pre1, pre2 }) => (pre1, pre2),
        _ => {
            let (a, b) = resolve_pre_post(None, None, data.periods())?;
            cfg.periods = Some(PeriodRoles::PrePre { pre1: a, pre2: b });
            (a, b)
        }
    };
    let panel = data.subset_pretreatment((a, b))?;
    let anchor = cfg.anchor()?;
    let grid = cfg.grid.unwrap_or_default();
    let alpha = cfg.alpha_levels[0];

    let fit = fit_pretreatment(&panel, &anchor)?;
    let n = fit.n as f64;
    let (omega, boot) = match &cfg.bootstrap {
        Some(spec) => {
            let boot = bootstrap_theta(&panel, &anchor, spec)?;
            (ThetaCovariance::from_bootstrap(&boot, n)?, Some(boot))
        }
        None => (ThetaCovariance::from_fit(&fit, n)?, None),
    };
    let banded = pointwise_bands(&t_grid(&fit, &grid)?, &omega, n, alpha)?;
    let delta = match cfg.delta {
        Some(DeltaSetting::Value(d)) => d,
        _ => default_delta(fit.n_group(true), fit.n_group(false))?,
    };
    let res = equivalence_test(&banded, delta)?;

    let names = [
        "mu00", "sigma00", "mu01", "sigma01", "mu10", "sigma10", "mu11", "sigma11",
    ];
    let theta: serde_json::Map<String, Value> = names
        .iter()
        .zip(res.theta)
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "equivtest",
        "config": to_value(&cfg),
        "seed": cfg.seed,
        "data": data_summary(&panel),
        "n_treated": fit.n_group(true),
        "n_control": fit.n_group(false),
        "cutoffs": fit.cutoffs.as_slice(),
        "theta": theta,
        "covariance": if boot.is_some() { "bootstrap" } else { "information" },
        "alpha": alpha,
        "delta": delta,
        "delta_source": if matches!(cfg.delta, Some(DeltaSetting::Value(_))) { "given" } else { "auto" },
        "t_max": res.t_max,
        "u_max": res.u_max,
        "l_min": res.l_min,
        "reject": res.reject,
        "p_value": res.p_value,
        "saturated": res.saturated,
    });
    if let Some(b) = &boot {
        doc["bootstrap"] = bootstrap_json(b);
    }
    let rows = (0..res.grid.len())
        .map(|i| {
            vec![
                num(res.grid[i]),
                num(res.t_hat[i]),
                num(res.se[i]),
                num(res.lower[i]),
                num(res.upper[i]),
            ]
        })
        .collect();
    let grid_table = Table {
        suffix: "grid",
        header: ["v", "t_hat", "se", "lower", "upper"]
            .map(String::from)
            .to_vec(),
        rows,
    };
    Ok(Outcome {
        document: doc,
        tables: vec![grid_table],
    })
}

fn bounds_vector(eta: &BenefitBounds, tau: &BenefitBounds) -> Vec<f64> {
    vec![eta.lower, eta.upper, tau.lower, tau.upper]
}

pub fn cmd_bounds(args: &BoundsArgs) -> CliResult<Outcome> {
    let mut cfg = RunConfig::for_bounds(args)?;
    let data = load(&cfg)?;
    let panel = two_period_panel(&mut cfg, &data, args.pre, args.post)?;
    let anchor = cfg.anchor()?;
    let (fit, effects) = estimate_pipeline(&panel, &anchor)?;
    let cf = cell_probs(&fit.theta11.as_cell(), &fit.cutoffs)?;
    let (eta, tau) = bounds_from_marginals(&effects.observed_treated, &cf)?;

    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "bounds",
        "config": to_value(&cfg),
        "seed": cfg.seed,
        "data": data_summary(&panel),
        "cutoffs": fit.cutoffs.as_slice(),
        "counterfactual": {"mu11": fit.theta11.mu11, "sigma11": fit.theta11.sigma11},
        "observed_treated": effects.observed_treated,
        "counterfactual_probs": cf,
        "delta": effects.delta,
        "eta": eta,
        "tau": tau,
    });
    let mut tables = Vec::new();
    if let Some(spec) = &cfg.bootstrap {
        let boot = block_bootstrap(
            &panel,
            |d: &PanelDataset| {
                let e = effects_from_table(&d.cell_table(), &anchor)?;
                let (eta, tau) = bounds_from_marginals(&e.observed_treated, &e.counterfactual)?;
                Ok(bounds_vector(&eta, &tau))
            },
            spec,
        )?;
        let names: Vec<String> = ["eta_lower", "eta_upper", "tau_lower", "tau_upper"]
            .map(String::from)
            .to_vec();
        let ci = boot.intervals_around(&bounds_vector(&eta, &tau));
        doc["intervals"] = intervals_json(&names, &ci);
        doc["bootstrap"] = bootstrap_json(&boot);
        tables.push(replicate_table(&names, &boot));
    }
    Ok(Outcome {
        document: doc,
        tables,
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Outcome> {
    let mut sim = SimConfig::load(&args.config)?;
    if let Some(s) = args.seed {
        sim.seed = s;
    }
    if let Some(r) = args.reps {
        sim.reps = r;
    }
    let spec = sim.design.to_spec(sim.seed)?;
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "config": to_value(&sim),
        "seed": sim.seed,
        "design": to_value(&spec),
    });
    let table = match sim.study {
        Study::Estimator => {
            let mc = sim.estimator_config();
            let report = run_estimator_mc(&spec, &mc)?;
            doc["true_delta"] = json!(spec.true_delta()?);
            doc["report"] = to_value(&report);
            let j = report.n_categories;
            let mut header = vec!["rep".to_string()];
            for prefix in ["delta_hat", "lower", "upper"] {
                header.extend((1..j).map(|k| format!("{prefix}_{k}")));
            }
            header.extend(["boot_failures".to_string(), "error".to_string()]);
            let rows = report
                .records
                .iter()
                .map(|r| {
                    let mut row = vec![r.rep.to_string()];
                    for v in [&r.delta_hat, &r.lower, &r.upper] {
                        row.extend((0..j - 1).map(|k| v.get(k).map_or(String::new(), |&x| num(x))));
                    }
                    row.push(r.boot_failures.to_string());
                    row.push(r.error.clone().unwrap_or_default());
                    row
                })
                .collect();
            Table {
                suffix: "reps",
                header,
                rows,
            }
        }
        Study::Equivalence => {
            let report = run_equivalence_mc(&spec, &sim.equivalence_config())?;
            doc["report"] = to_value(&report);
            let rows = report
                .records
                .iter()
                .map(|r| {
                    vec![
                        r.rep.to_string(),
                        num(r.t_max),
                        num(r.u_max),
                        num(r.l_min),
                        r.error.clone().unwrap_or_default(),
                    ]
                })
                .collect();
            Table {
                suffix: "reps",
                header: ["rep", "t_max", "u_max", "l_min", "error"]
                    .map(String::from)
                    .to_vec(),
                rows,
            }
        }
    };
    Ok(Outcome {
        document: doc,
        tables: vec![table],
    })
}
