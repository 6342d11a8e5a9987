//! Method dispatch with per-unit parallel matching.

use rayon::prelude::*;
use stratmatch_core::att::{estimate_m5c_m_with_tree, estimate_naive, estimate_strategy, Method};
use stratmatch_core::{build_tree, AttReport, Dataset, MatchingPlan, PipelineConfig, TreeModel};

use crate::error::{AppError, AppResult};

pub struct Estimation {
    pub report: AttReport,
    pub tree: Option<TreeModel>,
}

/// Runs `f` on a pool of `threads` workers; zero means one per core.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> AppResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AppError::Usage(format!("cannot start {threads} threads: {e}")))?;
    Ok(pool.install(f))
}

/// Estimates the ATT of a normalized dataset. Output does not depend on the
/// number of threads.
pub fn estimate(d: &Dataset, method: Method, cfg: &PipelineConfig, threads: usize) -> AppResult<Estimation> {
    cfg.validate()?;
    match method {
        Method::M5cMf => {
            let plan = MatchingPlan::prepare(d, cfg)?;
            let outcomes = with_threads(threads, || {
                plan.treated_rows()
                    .par_iter()
                    .map(|&t| plan.match_unit(t))
                    .collect::<Vec<_>>()
            })?;
            let tree = plan.tree().clone();
            let report = plan.finish(outcomes)?;
            Ok(Estimation {
                report,
                tree: Some(tree),
            })
        }
        Method::Naive => Ok(Estimation {
            report: estimate_naive(d)?,
            tree: None,
        }),
        _ => {
            let (control, _) = d.split_by_treatment();
            let tree = build_tree(&control, &cfg.tree_params())?;
            let report = if method == Method::M5cM {
                estimate_m5c_m_with_tree(d, &tree)?
            } else {
                estimate_strategy(d, &tree, method)?
            };
            Ok(Estimation {
                report,
                tree: Some(tree),
            })
        }
    }
}
