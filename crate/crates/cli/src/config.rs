use std::fs;
use std::path::Path;

use ordinal_did::bootstrap::BootstrapSpec;
use ordinal_did::equivalence::GridSpec;
use ordinal_did::simulate::{default_cutoffs, DgpSpec, EquivalenceMcConfig, EstimatorMcConfig};
use ordinal_did::{ColumnSchema, Cutoffs};
use serde::{Deserialize, Serialize};

use crate::args::{BoundsArgs, DataArgs, EquivArgs, FitArgs};
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subcommand {
    Fit,
    Equivtest,
    Bounds,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "design", rename_all = "snake_case")]
pub enum PeriodRoles {
    PrePost { pre: i64, post: i64 },
    PrePre { pre1: i64, pre2: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum DeltaSetting {
    Auto(AutoTag),
    Value(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoTag {
    Auto,
}

/// Fully resolved settings of a data command, embedded in its result document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub input: String,
    pub columns: ColumnSchema,
    pub periods: Option<PeriodRoles>,
    pub cutoffs: Vec<f64>,
    pub bootstrap: Option<BootstrapSpec>,
    pub alpha_levels: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<DeltaSetting>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub output: Option<String>,
    pub seed: u64,
}

impl RunConfig {
    fn base(subcommand: Subcommand, data: &DataArgs) -> CliResult<Self> {
        if data.cut.len() != 2 {
            return Err(CliError::Config(format!(
                "--cut takes exactly two values, got {}",
                data.cut.len()
            )));
        }
        Cutoffs::new(data.cut.clone())?;
        let mut filters = Vec::new();
        for f in &data.filters {
            let (col, val) = f.split_once('=').ok_or_else(|| {
                CliError::Config(format!("--filter expects column=value, got {f:?}"))
            })?;
            filters.push((col.to_string(), val.to_string()));
        }
        Ok(Self {
            subcommand,
            input: data.input.display().to_string(),
            columns: ColumnSchema {
                unit: data.unit.clone(),
                period: data.time.clone(),
                outcome: data.outcome.clone(),
                treatment: data.treat.clone(),
                cluster: data.cluster.clone(),
                covariates: Vec::new(),
                filters,
            },
            periods: None,
            cutoffs: data.cut.clone(),
            bootstrap: None,
            alpha_levels: Vec::new(),
            delta: None,
            grid: None,
            output: data.output.as_ref().map(|p| p.display().to_string()),
            seed: data.seed,
        })
    }

    fn with_bootstrap(mut self, n_reps: usize, alpha_levels: &[f64]) -> CliResult<Self> {
        if alpha_levels.is_empty() {
            return Err(CliError::Config("--alpha needs at least one level".into()));
        }
        if let Some(a) = alpha_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(CliError::Config(format!("alpha {a} is outside (0, 1)")));
        }
        self.alpha_levels = alpha_levels.to_vec();
        if n_reps > 0 {
            if self.columns.cluster.is_none() {
                return Err(CliError::Config(
                    "bootstrap requested but no --cluster column given (use --boot 0 to skip)"
                        .into(),
                ));
            }
            self.bootstrap = Some(BootstrapSpec {
                n_reps,
                seed: self.seed,
                alpha_levels: alpha_levels.to_vec(),
            });
        }
        Ok(self)
    }

    pub fn for_fit(args: &FitArgs) -> CliResult<Self> {
        let mut cfg =
            Self::base(Subcommand::Fit, &args.data)?.with_bootstrap(args.boot, &args.alpha)?;
        cfg.columns.covariates = args.covariates.clone();
        Ok(cfg)
    }

    pub fn for_bounds(args: &BoundsArgs) -> CliResult<Self> {
        Self::base(Subcommand::Bounds, &args.data)?.with_bootstrap(args.boot, &args.alpha)
    }

    pub fn for_equivtest(args: &EquivArgs) -> CliResult<Self> {
        let mut cfg = Self::base(Subcommand::Equivtest, &args.data)?
            .with_bootstrap(args.boot, &[args.alpha])?;
        cfg.delta = Some(parse_delta(&args.delta)?);
        cfg.grid = Some(parse_grid(&args.grid)?);
        match args.pre.as_slice() {
            [] => {}
            [a, b] => {
                cfg.periods = Some(PeriodRoles::PrePre { pre1: *a, pre2: *b });
            }
            other => {
                return Err(CliError::Config(format!(
                    "--pre takes two periods for equivtest, got {}",
                    other.len()
                )))
            }
        }
        Ok(cfg)
    }

    pub fn anchor(&self) -> CliResult<Cutoffs> {
        Ok(Cutoffs::new(self.cutoffs.clone())?)
    }
}

/// `auto` or a number. Positivity is checked by the test itself.
pub fn parse_delta(s: &str) -> CliResult<DeltaSetting> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(DeltaSetting::Auto(AutoTag::Auto));
    }
    s.parse::<f64>()
        .map(DeltaSetting::Value)
        .map_err(|_| CliError::Config(format!("--delta must be `auto` or a number, got {s:?}")))
}

pub fn parse_grid(s: &str) -> CliResult<GridSpec> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || CliError::Config(format!("--grid must be start:stop:step, got {s:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<CliResult<_>>()?;
    let grid = GridSpec {
        start: nums[0],
        stop: nums[1],
        step: nums[2],
    };
    grid.points()?;
    Ok(grid)
}

/// Pre/post labels, defaulting to the first two periods of the file.
pub fn resolve_pre_post(
    pre: Option<i64>,
    post: Option<i64>,
    periods: &[i64],
) -> CliResult<(i64, i64)> {
    match (pre, post) {
        (Some(a), Some(b)) => Ok((a, b)),
        (None, None) if periods.len() == 2 => Ok((periods[0], periods[1])),
        (None, None) => Err(CliError::Config(format!(
            "data has {} periods; choose two with --pre and --post",
            periods.len()
        ))),
        _ => Err(CliError::Config(
            "--pre and --post must be given together".into(),
        )),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Estimator,
    Equivalence,
}

fn default_reps() -> usize {
    500
}

/// Simulation design: one of the two built-in studies or a full spec.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Design {
    /// Parallel trends holds; treated post-period outcome `N(1.5, 1.5²)`.
    Estimator {
        categories: usize,
        n_per_group: usize,
        #[serde(default)]
        cutoffs: Option<Cutoffs>,
        #[serde(default)]
        latent_correlation: f64,
    },
    /// Parallel trends fails; treated untreated post-period `N(1.5, 1.5²)`.
    Violation {
        categories: usize,
        n_per_group: usize,
        #[serde(default)]
        cutoffs: Option<Cutoffs>,
        #[serde(default)]
        latent_correlation: f64,
    },
    Custom {
        spec: DgpSpec,
    },
}

impl Design {
    pub fn to_spec(&self, seed: u64) -> CliResult<DgpSpec> {
        let spec = match self {
            Design::Estimator {
                categories,
                n_per_group,
                cutoffs,
                latent_correlation,
            }
            | Design::Violation {
                categories,
                n_per_group,
                cutoffs,
                latent_correlation,
            } => {
                let mut spec = if matches!(self, Design::Estimator { .. }) {
                    DgpSpec::estimator_design(*categories, *n_per_group, seed)?
                } else {
                    DgpSpec::violation_design(*categories, *n_per_group, seed)?
                };
                spec.cutoffs = match cutoffs {
                    Some(c) => c.clone(),
                    None => default_cutoffs(*categories)?,
                };
                spec.latent_correlation = *latent_correlation;
                spec
            }
            Design::Custom { spec } => DgpSpec {
                seed,
                ..spec.clone()
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Monte Carlo study read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub study: Study,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub design: Design,
    /// Estimator study only; 0 skips coverage.
    #[serde(default)]
    pub bootstrap_reps: usize,
    /// Interval level (estimator) or test size (equivalence).
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Equivalence study only.
    #[serde(default)]
    pub delta_offsets: Option<Vec<f64>>,
    /// Equivalence study only.
    #[serde(default)]
    pub grid: Option<GridSpec>,
}

impl SimConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    fn check(&self) -> CliResult<()> {
        match self.study {
            Study::Estimator if self.delta_offsets.is_some() || self.grid.is_some() => Err(
                CliError::Config("delta_offsets and grid apply to the equivalence study".into()),
            ),
            Study::Equivalence if self.bootstrap_reps > 0 => Err(CliError::Config(
                "bootstrap_reps applies to the estimator study".into(),
            )),
            _ => Ok(()),
        }
    }

    pub fn estimator_config(&self) -> EstimatorMcConfig {
        EstimatorMcConfig {
            reps: self.reps,
            bootstrap_reps: self.bootstrap_reps,
            alpha: self.alpha.unwrap_or(0.10),
            seed: self.seed,
        }
    }

    pub fn equivalence_config(&self) -> EquivalenceMcConfig {
        EquivalenceMcConfig {
            reps: self.reps,
            delta_offsets: self
                .delta_offsets
                .clone()
                .unwrap_or_else(|| ordinal_did::simulate::DELTA_OFFSETS.to_vec()),
            alpha: self.alpha.unwrap_or(0.05),
            seed: self.seed,
            grid: self.grid.unwrap_or_default(),
        }
    }
}
