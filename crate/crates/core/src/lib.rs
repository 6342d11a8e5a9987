//! Stratified causal matching: a control-only model tree discretizes the
//! feature space, and each treated unit is matched to a balanced subset of
//! nearby controls in its leaf by an exact integer program.

#![no_std]

extern crate alloc;

pub mod att;
pub mod balance;
pub mod config;
pub mod dataset;
pub mod dgp;
pub mod error;
mod exact;
mod linalg;
pub mod matching;
pub mod stats;
pub mod tree;

pub use att::{
    aggregate_att, estimate_m5c_m, estimate_m5c_mf, estimate_naive, estimate_strategy, naive_diff_in_means,
    robust_att_1tok, robust_att_1to1, robust_att_ktok, AttReport, MatchingPlan, Method, StratumOutcome,
};
pub use balance::{post_match_balance, pre_match_balance, BalanceReport};
pub use config::PipelineConfig;
pub use dataset::{encode_categoricals, Dataset, DatasetView, Scaling};
pub use dgp::{generate_hyb20var, DgpSpec};
pub use error::{Error, Result};
pub use matching::{
    select_candidates, solve_match, solve_match_bruteforce, solve_match_lexicographic, MatchProblem, MatchSolution,
};
pub use stats::{adjusted_r2, feature_weights, ols_fit, std_dev, LinearFit};
pub use tree::{build_tree, TreeModel, TreeParams};
