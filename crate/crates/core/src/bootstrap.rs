//! Cluster (block) bootstrap for any dataset-level statistic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

/// Share of failed replicates above which a warning is attached.
pub const FAILURE_WARNING_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSpec {
    pub n_reps: usize,
    pub seed: u64,
    pub alpha_levels: Vec<f64>,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            n_reps: 2000,
            seed: 0,
            alpha_levels: vec![0.05, 0.10],
        }
    }
}

impl BootstrapSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_reps == 0 {
            return Err(Error::Config(
                "bootstrap needs at least one replicate".into(),
            ));
        }
        if let Some(a) = self.alpha_levels.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!("alpha level {a} is outside (0, 1)")));
        }
        Ok(())
    }
}

/// Independent generator for stream `stream` under `seed`.
///
/// Depends only on the pair, so replicate `r` draws the same numbers no
/// matter which worker runs it.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelInterval {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatInterval {
    pub point: f64,
    pub se: f64,
    pub levels: Vec<LevelInterval>,
    /// False when some percentile interval does not contain the point estimate.
    pub contains_point: bool,
}

/// Per-statistic point estimates, standard errors and percentile intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSet {
    pub stats: Vec<StatInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    /// Successful replicates in replicate-index order.
    pub replicates: Vec<Vec<f64>>,
    /// Replicate index of each row of `replicates`.
    pub replicate_index: Vec<usize>,
    pub failures: Vec<ReplicateFailure>,
    pub n_reps: usize,
    pub alpha_levels: Vec<f64>,
    pub warning: Option<String>,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

impl BootstrapResult {
    pub fn n_success(&self) -> usize {
        self.replicates.len()
    }

    fn column(&self, k: usize) -> Vec<f64> {
        self.replicates.iter().map(|r| r[k]).collect()
    }

    /// Sample standard deviation of each statistic across replicates.
    pub fn standard_errors(&self) -> Vec<f64> {
        let dim = self.replicates.first().map_or(0, Vec::len);
        (0..dim)
            .map(|k| {
                let col = self.column(k);
                let n = col.len() as f64;
                if col.len() < 2 {
                    return f64::NAN;
                }
                let mean = col.iter().sum::<f64>() / n;
                (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            })
            .collect()
    }

    /// Sample covariance of the replicates, row-major `dim × dim`.
    pub fn covariance(&self) -> Vec<f64> {
        let dim = self.replicates.first().map_or(0, Vec::len);
        let n = self.replicates.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &self.replicates {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x / n;
            }
        }
        let mut cov = vec![0.0; dim * dim];
        for r in &self.replicates {
            for i in 0..dim {
                for j in 0..dim {
                    cov[i * dim + j] += (r[i] - mean[i]) * (r[j] - mean[j]) / (n - 1.0);
                }
            }
        }
        cov
    }

    /// Percentile intervals at every alpha level around the given point estimates.
    pub fn intervals_around(&self, point: &[f64]) -> IntervalSet {
        let se = self.standard_errors();
        let stats = point
            .iter()
            .enumerate()
            .map(|(k, &p)| {
                let mut col = if self.replicates.is_empty() {
                    Vec::new()
                } else {
                    self.column(k)
                };
                col.sort_by(f64::total_cmp);
                let levels: Vec<LevelInterval> = self
                    .alpha_levels
                    .iter()
                    .map(|&alpha| LevelInterval {
                        alpha,
                        lower: quantile_sorted(&col, alpha / 2.0),
                        upper: quantile_sorted(&col, 1.0 - alpha / 2.0),
                    })
                    .collect();
                StatInterval {
                    point: p,
                    se: se.get(k).copied().unwrap_or(f64::NAN),
                    contains_point: levels.iter().all(|l| l.lower <= p && p <= l.upper),
                    levels,
                }
            })
            .collect();
        IntervalSet { stats }
    }
}

/// Resamples clusters with replacement and evaluates `statistic` on each replicate.
///
/// Replicates whose statistic fails are recorded and left out of the
/// intervals. Results are assembled by replicate index, so the output does
/// not depend on the number of worker threads.
pub fn block_bootstrap<F>(
    data: &PanelDataset,
    statistic: F,
    spec: &BootstrapSpec,
) -> Result<BootstrapResult>
where
    F: Fn(&PanelDataset) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let layout = data.cluster_layout()?;
    let g = layout.n_clusters();
    if g < 2 {
        return Err(Error::DegenerateClustering(format!(
            "need at least 2 clusters, found {g}"
        )));
    }
    let outcomes: Vec<std::result::Result<Vec<f64>, String>> = (0..spec.n_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(spec.seed, r as u64);
            let draws: Vec<u32> = (0..g).map(|_| rng.random_range(0..g as u32)).collect();
            let sample = data.resample(&layout, &draws);
            statistic(&sample).map_err(|e| e.to_string())
        })
        .collect();

    let mut replicates = Vec::new();
    let mut replicate_index = Vec::new();
    let mut failures = Vec::new();
    for (index, out) in outcomes.into_iter().enumerate() {
        match out {
            Ok(v) => {
                if let Some(first) = replicates.first().map(Vec::len) {
                    if first != v.len() {
                        return Err(Error::domain(format!(
                            "statistic returned {} values in replicate {index}, {first} before",
                            v.len()
                        )));
                    }
                }
                replicates.push(v);
                replicate_index.push(index);
            }
            Err(error) => failures.push(ReplicateFailure { index, error }),
        }
    }
    let share = failures.len() as f64 / spec.n_reps as f64;
    let warning = (share > FAILURE_WARNING_SHARE).then(|| {
        format!(
            "{} of {} bootstrap replicates failed ({:.1}%); intervals may be unreliable",
            failures.len(),
            spec.n_reps,
            100.0 * share
        )
    });
    Ok(BootstrapResult {
        replicates,
        replicate_index,
        failures,
        n_reps: spec.n_reps,
        alpha_levels: spec.alpha_levels.clone(),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{PanelParts, Record};

    fn clustered(n_clusters: u32, per_cluster: u32) -> PanelDataset {
        let mut records = Vec::new();
        let mut unit = 0;
        for c in 0..n_clusters {
            for k in 0..per_cluster {
                for period in 0..2u16 {
                    records.push(Record {
                        unit,
                        period,
                        outcome: ((unit + k + period as u32) % 3) as u16,
                        treated: c % 2 == 0,
                        cluster: c,
                    });
                }
                unit += 1;
            }
        }
        PanelDataset::from_parts(PanelParts {
            records,
            n_categories: 3,
            periods: vec![0, 1],
            clustered: true,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn constant_statistic() {
        let data = clustered(10, 3);
        let spec = BootstrapSpec {
            n_reps: 50,
            ..Default::default()
        };
        let res = block_bootstrap(&data, |_| Ok(vec![7.0]), &spec).unwrap();
        assert_eq!(res.n_success(), 50);
        let ci = res.intervals_around(&[7.0]);
        let s = &ci.stats[0];
        assert_eq!(s.se, 0.0);
        for l in &s.levels {
            assert_eq!((l.lower, l.upper), (7.0, 7.0));
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let data = clustered(20, 2);
        let spec = BootstrapSpec {
            n_reps: 64,
            seed: 11,
            ..Default::default()
        };
        let stat = |d: &PanelDataset| Ok(vec![d.records().iter().map(|r| r.outcome as f64).sum()]);
        let a = block_bootstrap(&data, stat, &spec).unwrap();
        let b = block_bootstrap(&data, stat, &spec).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let c = pool.install(|| block_bootstrap(&data, stat, &spec).unwrap());
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn failures_are_counted_and_flagged() {
        let data = clustered(10, 1);
        let spec = BootstrapSpec {
            n_reps: 40,
            seed: 3,
            ..Default::default()
        };
        // Fail whenever cluster 0 was not drawn.
        let res = block_bootstrap(
            &data,
            |d| {
                if d.n_clusters() > 0 && d.records().iter().any(|r| r.outcome == 0 && r.period == 0)
                {
                    Ok(vec![1.0])
                } else {
                    Err(Error::EmptyCell("x".into()))
                }
            },
            &spec,
        )
        .unwrap();
        assert_eq!(res.n_success() + res.failures.len(), 40);

        let all_fail =
            block_bootstrap(&data, |_| Err(Error::EmptyCell("x".into())), &spec).unwrap();
        assert_eq!(all_fail.failures.len(), 40);
        assert!(all_fail.warning.is_some());
    }

    #[test]
    fn needs_two_clusters() {
        let data = clustered(1, 4);
        assert!(matches!(
            block_bootstrap(&data, |_| Ok(vec![0.0]), &BootstrapSpec::default()),
            Err(Error::DegenerateClustering(_))
        ));
    }

    #[test]
    fn type7_quantiles() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 4.0);
        assert!((quantile_sorted(&x, 0.5) - 2.5).abs() < 1e-15);
        assert!((quantile_sorted(&x, 0.1) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn invalid_spec() {
        let spec = BootstrapSpec {
            alpha_levels: vec![1.5],
            ..Default::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let spec = BootstrapSpec {
            n_reps: 0,
            ..Default::default()
        };
        assert!(spec.validate().is_err());
    }
}
