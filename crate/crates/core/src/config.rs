//! Pipeline parameters.

use serde::{Deserialize, Serialize};

use crate::balance::DEFAULT_BINS;
use crate::error::{Error, Result};
use crate::matching::{DEFAULT_M1, DEFAULT_M2, SOLVER_PRECISION};
use crate::tree::{TreeParams, DEFAULT_LAMBDA, DEFAULT_MAX_DEPTH};

pub const DEFAULT_PSI: usize = 20;

/// Where the matcher's feature weights are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScope {
    /// One regression over every unit.
    #[default]
    Global,
    /// The leaf's own control regression, falling back to global weights.
    Leaf,
}

/// Which controls a treated unit may be matched to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateScope {
    #[default]
    Leaf,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Single objective `a + M2 ε`.
    #[default]
    BigM,
    /// `ε` first, then `a`.
    Lexicographic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub lambda: f64,
    /// Minimum child size; `max(30, 2p)` when unset.
    pub theta: Option<usize>,
    pub max_depth: usize,
    pub psi: usize,
    pub m1: f64,
    pub m2: f64,
    /// Search-node cap per solve; `None` searches to proven optimality.
    pub node_budget: Option<u64>,
    pub precision: f64,
    pub bins: usize,
    pub weight_scope: WeightScope,
    pub candidate_scope: CandidateScope,
    pub solver: SolverKind,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            theta: None,
            max_depth: DEFAULT_MAX_DEPTH,
            psi: DEFAULT_PSI,
            m1: DEFAULT_M1,
            m2: DEFAULT_M2,
            node_budget: None,
            precision: SOLVER_PRECISION,
            bins: DEFAULT_BINS,
            weight_scope: WeightScope::Global,
            candidate_scope: CandidateScope::Leaf,
            solver: SolverKind::BigM,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidConfig(what.into()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and non-negative");
        }
        if self.theta == Some(0) {
            return bad("theta must be positive");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if self.psi == 0 {
            return bad("psi must be positive");
        }
        if !(self.m1 > 0.0 && self.m1.is_finite() && self.m2 > 0.0 && self.m2.is_finite()) {
            return bad("m1 and m2 must be positive and finite");
        }
        if self.node_budget == Some(0) {
            return bad("node_budget must be positive");
        }
        if !(self.precision > 0.0 && self.precision.is_finite()) {
            return bad("precision must be positive");
        }
        if self.bins == 0 {
            return bad("bins must be positive");
        }
        Ok(())
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            lambda: self.lambda,
            theta: self.theta,
            max_depth: self.max_depth,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let c = PipelineConfig::default();
        c.validate().unwrap();
        assert_eq!((c.psi, c.m1, c.m2, c.node_budget), (20, 1e6, 1e6, None));
        assert_eq!(c.tree_params().lambda, 0.1);
    }

    #[test]
    fn rejects_bad_values() {
        for c in [
            PipelineConfig { psi: 0, ..Default::default() },
            PipelineConfig { m2: -1.0, ..Default::default() },
            PipelineConfig { lambda: f64::NAN, ..Default::default() },
            PipelineConfig { bins: 0, ..Default::default() },
            PipelineConfig { theta: Some(0), ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
