//! Replicated bias studies on synthetic data and bootstrap-over-treated
//! studies on a fixed dataset.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stratmatch_core::att::Method;
use stratmatch_core::dgp::derive_seed;
use stratmatch_core::{Dataset, DgpSpec, Error as CoreError, PipelineConfig};

use crate::error::{AppError, AppResult};
use crate::pipeline::{estimate, with_threads};

/// Normal quantile for two-sided 95% intervals.
const Z95: f64 = 1.96;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub replication: usize,
    pub seed: u64,
    pub method: String,
    pub estimate: Option<f64>,
    pub abs_bias: Option<f64>,
    pub runtime_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub mean: f64,
    pub sd: f64,
    pub low: f64,
    pub high: f64,
}

/// `mean ± 1.96 sd / sqrt(R)` with the sample standard deviation.
pub fn interval(values: &[f64]) -> Option<Interval> {
    if values.is_empty() {
        return None;
    }
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0)).sqrt()
    } else {
        0.0
    };
    let half = Z95 * sd / r.sqrt();
    Some(Interval {
        mean,
        sd,
        low: mean - half,
        high: mean + half,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub replications: usize,
    pub failures: usize,
    pub estimate: Option<Interval>,
    pub abs_bias: Option<Interval>,
    /// Plain estimate on the full dataset (bootstrap studies only).
    pub full_data_estimate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub true_att: Option<f64>,
    pub records: Vec<BenchRecord>,
    pub summary: Vec<MethodSummary>,
}

impl BenchResult {
    pub fn summary_for(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method.name())
    }

    pub fn estimates(&self, method: Method) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.method == method.name())
            .filter_map(|r| r.estimate)
            .collect()
    }

    pub fn write_csv(&self, path: &Path) -> AppResult<()> {
        let err = |e: csv::Error| AppError::io(path, e.into());
        let mut w = csv::Writer::from_path(path).map_err(err)?;
        w.write_record(["seed", "replication", "method", "estimate", "bias", "runtime_ms", "error"])
            .map_err(err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.seed.to_string(),
                r.replication.to_string(),
                r.method.clone(),
                opt(r.estimate),
                opt(r.abs_bias),
                format!("{:.3}", r.runtime_ms),
                r.error.clone().unwrap_or_default(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| AppError::io(path, e))
    }

    pub fn write_summary_json(&self, path: &Path) -> AppResult<()> {
        let body = serde_json::json!({ "true_att": self.true_att, "summary": self.summary });
        let mut f = std::fs::File::create(path).map_err(|e| AppError::io(path, e))?;
        serde_json::to_writer_pretty(&mut f, &body).map_err(|e| AppError::io(path, e.into()))?;
        writeln!(f).map_err(|e| AppError::io(path, e))
    }

    fn summarize(true_att: Option<f64>, mut records: Vec<BenchRecord>, methods: &[Method], full: &[Option<f64>]) -> Self {
        records.sort_by(|a, b| (a.seed, &a.method).cmp(&(b.seed, &b.method)));
        let summary = methods
            .iter()
            .zip(full)
            .map(|(m, &full_data_estimate)| {
                let mine: Vec<&BenchRecord> = records.iter().filter(|r| r.method == m.name()).collect();
                let est: Vec<f64> = mine.iter().filter_map(|r| r.estimate).collect();
                let bias: Vec<f64> = mine.iter().filter_map(|r| r.abs_bias).collect();
                MethodSummary {
                    method: m.name().to_string(),
                    replications: mine.len(),
                    failures: mine.len() - est.len(),
                    estimate: interval(&est),
                    abs_bias: interval(&bias),
                    full_data_estimate,
                }
            })
            .collect();
        BenchResult {
            true_att,
            records,
            summary,
        }
    }
}

fn run_methods(d: &Dataset, replication: usize, seed: u64, methods: &[Method], cfg: &PipelineConfig, true_att: Option<f64>) -> Vec<BenchRecord> {
    methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let res = estimate(d, m, cfg, 1);
            let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
            let (estimate, error) = match res {
                Ok(e) => (Some(e.report.att), None),
                Err(e) => {
                    log::warn!("replication {replication}, {}: {e}", m.name());
                    (None, Some(e.to_string()))
                }
            };
            BenchRecord {
                replication,
                seed,
                method: m.name().to_string(),
                estimate,
                abs_bias: true_att.and_then(|t| estimate.map(|e| (e - t).abs())),
                runtime_ms,
                error,
            }
        })
        .collect()
}

/// Draws the Bernoulli probabilities once from the base seed so that every
/// replication shares them.
pub fn fix_probabilities(spec: &DgpSpec) -> DgpSpec {
    use rand::distributions::{Distribution, Uniform};
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, u64::MAX));
    let u = Uniform::new_inclusive(spec.probability_range.0, spec.probability_range.1);
    let mut s = spec.clone();
    s.fixed_probabilities = Some((0..spec.n_binary).map(|_| u.sample(&mut rng)).collect());
    s
}

/// Replication `r` uses a fresh dataset drawn with seed `derive_seed(spec.seed, r)`.
/// A method failing on one replication is recorded, not fatal.
pub fn run_bias_study(
    spec: &DgpSpec,
    methods: &[Method],
    replications: usize,
    cfg: &PipelineConfig,
    threads: usize,
) -> AppResult<BenchResult> {
    if replications == 0 {
        return Err(AppError::Usage("at least one replication is required".into()));
    }
    spec.validate()?;
    cfg.validate()?;
    let per_rep = with_threads(threads, || {
        (0..replications)
            .into_par_iter()
            .map(|r| {
                let seed = derive_seed(spec.seed, r as u64);
                let d = spec.clone().with_seed(seed).generate()?.normalize_min_max();
                Ok(run_methods(&d, r, seed, methods, cfg, Some(spec.true_att)))
            })
            .collect::<Result<Vec<_>, CoreError>>()
    })??;
    let full = vec![None; methods.len()];
    Ok(BenchResult::summarize(Some(spec.true_att), per_rep.into_iter().flatten().collect(), methods, &full))
}

/// Each replication keeps every control and a random `treated_sample` of
/// the treated units. `d` should already be normalized.
pub fn run_bootstrap_study(
    d: &Dataset,
    treated_sample: usize,
    replications: usize,
    methods: &[Method],
    cfg: &PipelineConfig,
    seed: u64,
    threads: usize,
) -> AppResult<BenchResult> {
    let (control, treated) = d.split_by_treatment();
    if treated_sample == 0 || treated_sample > treated.len() {
        return Err(CoreError::InvalidSample {
            requested: treated_sample,
            available: treated.len(),
        }
        .into());
    }
    if replications == 0 {
        return Err(AppError::Usage("at least one replication is required".into()));
    }
    cfg.validate()?;
    let full: Vec<Option<f64>> = methods
        .iter()
        .map(|&m| estimate(d, m, cfg, threads).ok().map(|e| e.report.att))
        .collect();
    let per_rep = with_threads(threads, || {
        (0..replications)
            .into_par_iter()
            .map(|r| {
                let s = derive_seed(seed, r as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let mut rows: Vec<usize> = rand::seq::index::sample(&mut rng, treated.len(), treated_sample)
                    .into_iter()
                    .map(|i| treated.rows()[i])
                    .collect();
                rows.extend_from_slice(control.rows());
                rows.sort_unstable();
                let sub = d.subset(&rows)?;
                Ok(run_methods(&sub, r, s, methods, cfg, None))
            })
            .collect::<Result<Vec<_>, CoreError>>()
    })??;
    Ok(BenchResult::summarize(None, per_rep.into_iter().flatten().collect(), methods, &full))
}
