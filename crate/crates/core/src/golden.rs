//! Golden-file regression corpus.
//!
//! Each `*.toml` file in a fixture directory holds one case: an input
//! (inline numbers, a CSV panel next to the fixture, or a simulation
//! design), the expected outputs, and where each expected value came from.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equivalence::default_delta;
use crate::error::{Error, Result};
use crate::identification::{counterfactual_params, estimate_pipeline};
use crate::panel::{load_csv, ColumnSchema};
use crate::probit::{CellParams, Cutoffs};
use crate::simulate::{pt_gap, simulate_panel, DgpSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldenCase {
    pub name: String,
    /// Provenance of the expected values (published figure, closed form, …).
    pub origin: String,
    #[serde(default)]
    pub description: String,
    pub input: CaseInput,
    pub expected: Vec<Expected>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CaseInput {
    /// Keys `threshold_<j>`.
    PtGap {
        treated_pre: Vec<f64>,
        treated_post: Vec<f64>,
        control_pre: Vec<f64>,
        control_post: Vec<f64>,
        thresholds: Vec<usize>,
    },
    /// Key `delta`.
    DefaultDelta { n1: u64, n0: u64 },
    /// Keys `mu11`, `sigma11`.
    Counterfactual {
        theta00: CellParams,
        theta01: CellParams,
        theta10: CellParams,
    },
    /// Keys `mu<dt>`, `sigma<dt>` for the three fitted cells and the
    /// counterfactual, plus `delta_<j>`.
    CsvFit {
        file: PathBuf,
        #[serde(default)]
        schema: ColumnSchema,
        #[serde(default)]
        cutoffs: Cutoffs,
    },
    /// Keys `p<d><t>_<j>`: empirical category shares of each cell.
    Simulate { spec: DgpSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    pub key: String,
    pub value: f64,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub key: String,
    pub expected: f64,
    pub actual: Option<f64>,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub origin: String,
    pub checks: Vec<CheckOutcome>,
    /// Evaluation error, if the case could not be run at all.
    pub error: Option<String>,
}

impl CaseOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoldenReport {
    pub cases: Vec<CaseOutcome>,
}

impl GoldenReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(CaseOutcome::passed)
    }

    pub fn failures(&self) -> Vec<&CaseOutcome> {
        self.cases.iter().filter(|c| !c.passed()).collect()
    }

    /// One line per failing check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for case in &self.cases {
            if let Some(e) = &case.error {
                out.push_str(&format!("{}: error: {e}\n", case.name));
            }
            for c in case.checks.iter().filter(|c| !c.pass) {
                let actual = c
                    .actual
                    .map_or("missing".to_string(), |a| format!("{a:.12}"));
                out.push_str(&format!(
                    "{}: {} expected {} actual {} tol {}\n",
                    case.name, c.key, c.expected, actual, c.tol
                ));
            }
        }
        out
    }
}

/// Corpus shipped with the crate.
pub fn default_fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/golden")
}

pub fn load_case(path: &Path) -> Result<GoldenCase> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Every `*.toml` case under `dir`, sorted by file name.
pub fn load_cases(dir: &Path) -> Result<Vec<(PathBuf, GoldenCase)>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Load(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Load(format!("no fixtures in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| load_case(&p).map(|c| (p, c)))
        .collect()
}

/// Computed outputs of one case, keyed as documented on [`CaseInput`].
pub fn evaluate(input: &CaseInput, base: &Path) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    match input {
        CaseInput::PtGap {
            treated_pre,
            treated_post,
            control_pre,
            control_post,
            thresholds,
        } => {
            for &j in thresholds {
                let g = pt_gap(treated_pre, treated_post, control_pre, control_post, j)?;
                out.insert(format!("threshold_{j}"), g);
            }
        }
        CaseInput::DefaultDelta { n1, n0 } => {
            out.insert("delta".into(), default_delta(*n1, *n0)?);
        }
        CaseInput::Counterfactual {
            theta00,
            theta01,
            theta10,
        } => {
            let cf = counterfactual_params(theta00, theta01, theta10)?;
            out.insert("mu11".into(), cf.mu11);
            out.insert("sigma11".into(), cf.sigma11);
        }
        CaseInput::CsvFit {
            file,
            schema,
            cutoffs,
        } => {
            let path = base.join(file);
            if !path.is_file() {
                return Err(Error::Load(format!("missing fixture {}", path.display())));
            }
            let data = load_csv(&path, schema)?;
            let (fit, effects) = estimate_pipeline(&data, cutoffs)?;
            for (label, cell) in [
                ("00", fit.theta00.params),
                ("01", fit.theta01.params),
                ("10", fit.theta10.params),
                ("11", fit.theta11.as_cell()),
            ] {
                out.insert(format!("mu{label}"), cell.mu);
                out.insert(format!("sigma{label}"), cell.sigma);
            }
            for (j, d) in effects.delta.iter().enumerate() {
                out.insert(format!("delta_{}", j + 1), *d);
            }
        }
        CaseInput::Simulate { spec } => {
            let data = simulate_panel(spec)?;
            for (t, row) in data.cell_table().iter().enumerate() {
                for (d, counts) in row.iter().enumerate() {
                    let n: u64 = counts.iter().sum();
                    for (j, c) in counts.iter().enumerate() {
                        out.insert(format!("p{d}{t}_{j}"), *c as f64 / n.max(1) as f64);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn run_case(path: &Path, case: &GoldenCase) -> CaseOutcome {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut outcome = CaseOutcome {
        name: case.name.clone(),
        origin: case.origin.clone(),
        checks: Vec::new(),
        error: None,
    };
    match evaluate(&case.input, base) {
        Ok(actual) => {
            outcome.checks = case
                .expected
                .iter()
                .map(|e| {
                    let a = actual.get(&e.key).copied();
                    CheckOutcome {
                        key: e.key.clone(),
                        expected: e.value,
                        actual: a,
                        tol: e.tol,
                        pass: a.is_some_and(|a| (a - e.value).abs() <= e.tol),
                    }
                })
                .collect();
        }
        Err(e) => outcome.error = Some(e.to_string()),
    }
    outcome
}

/// Runs every case in `dir`. Fails only when the corpus cannot be read;
/// individual case failures are reported in the result.
pub fn run_golden_suite_in(dir: &Path) -> Result<GoldenReport> {
    let cases = load_cases(dir)?;
    let cases = cases
        .par_iter()
        .map(|(path, case)| run_case(path, case))
        .collect();
    Ok(GoldenReport { cases })
}

pub fn run_golden_suite() -> Result<GoldenReport> {
    run_golden_suite_in(&default_fixture_dir())
}
