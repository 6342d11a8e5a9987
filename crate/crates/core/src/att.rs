//! ATT estimation: the matched (model-free) pipeline, the leaf-regression
//! (model-based) variant, within-stratum strategy estimators and the
//! stratum-weighted aggregation identity.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::config::{CandidateScope, PipelineConfig, SolverKind, WeightScope};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::exact::{fixed, fixed_sum, round_scaled};
use crate::matching::{select_candidates, solve_match_lexicographic, solve_match_with_budget};
use crate::stats::feature_weights;
use crate::tree::{build_tree, NodeId, TreeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "m5c-mf")]
    M5cMf,
    #[serde(rename = "m5c-m")]
    M5cM,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "strategy-1:1")]
    Strategy1to1,
    #[serde(rename = "strategy-1:k")]
    Strategy1tok,
    #[serde(rename = "strategy-k:k")]
    StrategyKtok,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::M5cMf,
        Method::M5cM,
        Method::Naive,
        Method::Strategy1to1,
        Method::Strategy1tok,
        Method::StrategyKtok,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::M5cMf => "m5c-mf",
            Method::M5cM => "m5c-m",
            Method::Naive => "naive",
            Method::Strategy1to1 => "strategy-1:1",
            Method::Strategy1tok => "strategy-1:k",
            Method::StrategyKtok => "strategy-k:k",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn needs_tree(&self) -> bool {
        !matches!(self, Method::Naive)
    }
}

/// Solver details for one matched treated unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchInfo {
    pub candidates: Vec<usize>,
    pub epsilon: f64,
    pub a: f64,
    pub objective: f64,
    pub nodes: u64,
    pub optimal: bool,
    pub hierarchy_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub treated: usize,
    pub leaf: Option<NodeId>,
    /// Control rows forming the counterfactual; empty for model-based and
    /// whole-pool estimates.
    pub matched: Vec<usize>,
    pub iatt: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub match_info: Option<MatchInfo>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedUnit {
    pub treated: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttReport {
    pub method: Method,
    pub att: f64,
    pub treated_total: usize,
    /// Sorted by treated row.
    pub units: Vec<UnitRecord>,
    pub skipped: Vec<SkippedUnit>,
    pub warnings: Vec<String>,
}

impl AttReport {
    /// `(treated, matched)` pairs for balance reporting.
    pub fn matches(&self) -> Vec<(usize, Vec<usize>)> {
        self.units
            .iter()
            .filter(|u| !u.matched.is_empty())
            .map(|u| (u.treated, u.matched.clone()))
            .collect()
    }

    fn assemble(
        method: Method,
        treated_total: usize,
        mut units: Vec<UnitRecord>,
        mut skipped: Vec<SkippedUnit>,
        warnings: Vec<String>,
    ) -> Result<AttReport> {
        units.sort_by_key(|u| u.treated);
        skipped.sort_by_key(|s| s.treated);
        if units.is_empty() {
            return Err(Error::EstimationImpossible(format!(
                "all {treated_total} treated units were skipped"
            )));
        }
        let att = units.iter().map(|u| u.iatt).sum::<f64>() / units.len() as f64;
        Ok(AttReport {
            method,
            att,
            treated_total,
            units,
            skipped,
            warnings,
        })
    }
}

/// Result of matching one treated unit.
#[derive(Debug, Clone, PartialEq)]
pub enum UnitOutcome {
    Matched(UnitRecord),
    Skipped(SkippedUnit),
}

/// Shared state for the model-free pipeline. Units can be matched in any
/// order or in parallel; [`MatchingPlan::finish`] sorts before reducing.
#[derive(Debug, Clone)]
pub struct MatchingPlan<'a> {
    data: &'a Dataset,
    cfg: PipelineConfig,
    tree: TreeModel,
    weights: Vec<f64>,
    leaf_weights: BTreeMap<NodeId, Vec<f64>>,
    treated: Vec<usize>,
    controls: Vec<usize>,
    warnings: Vec<String>,
}

fn nonzero_or_unit(w: Vec<f64>, what: &str, warnings: &mut Vec<String>) -> Vec<f64> {
    if w.iter().all(|&v| v == 0.0) {
        warnings.push(format!("{what} feature weights are all zero; using unit weights"));
        alloc::vec![1.0; w.len()]
    } else {
        w
    }
}

impl<'a> MatchingPlan<'a> {
    /// Builds the control tree and feature weights. `d` should already be
    /// min-max normalized.
    pub fn prepare(d: &'a Dataset, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let (control, treated) = d.split_by_treatment();
        let tree = build_tree(&control, &cfg.tree_params())?;
        let mut warnings = tree.warnings.clone();
        let weights = nonzero_or_unit(feature_weights(d)?, "global", &mut warnings);
        let mut leaf_weights = BTreeMap::new();
        if cfg.weight_scope == WeightScope::Leaf {
            for leaf in tree.leaves() {
                let w = leaf
                    .leaf_model
                    .as_ref()
                    .filter(|f| f.r2_adj.is_some())
                    .map(|f| f.coefficients.iter().map(|c| c.abs()).collect::<Vec<f64>>())
                    .filter(|w| w.iter().any(|&v| v != 0.0))
                    .unwrap_or_else(|| weights.clone());
                leaf_weights.insert(leaf.id, w);
            }
        }
        Ok(Self {
            data: d,
            cfg: cfg.clone(),
            treated: treated.rows().to_vec(),
            controls: control.rows().to_vec(),
            tree,
            weights,
            leaf_weights,
            warnings,
        })
    }

    pub fn tree(&self) -> &TreeModel {
        &self.tree
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn treated_rows(&self) -> &[usize] {
        &self.treated
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn match_unit(&self, treated_row: usize) -> UnitOutcome {
        let d = self.data;
        let leaf = self.tree.assign_leaf(d.row(treated_row));
        let pool: &[usize] = match self.cfg.candidate_scope {
            CandidateScope::Leaf => &self.tree.node(leaf).control_rows,
            CandidateScope::Global => &self.controls,
        };
        let w = self.leaf_weights.get(&leaf).unwrap_or(&self.weights);
        let prob = match select_candidates(d, treated_row, pool, w, self.cfg.psi)
            .and_then(|p| p.with_big_m(self.cfg.m1, self.cfg.m2))
        {
            Ok(p) => p,
            Err(e) => {
                return UnitOutcome::Skipped(SkippedUnit {
                    treated: treated_row,
                    reason: format!("{e}"),
                })
            }
        };
        let sol = match self.cfg.solver {
            SolverKind::BigM => solve_match_with_budget(&prob, self.cfg.node_budget),
            SolverKind::Lexicographic => solve_match_lexicographic(&prob),
        };
        let counterfactual =
            sol.selected_ids.iter().map(|&r| d.y(r)).sum::<f64>() / sol.selected_ids.len() as f64;
        UnitOutcome::Matched(UnitRecord {
            treated: treated_row,
            leaf: Some(leaf),
            iatt: d.y(treated_row) - counterfactual,
            match_info: Some(MatchInfo {
                candidates: prob.candidate_ids().to_vec(),
                epsilon: sol.epsilon,
                a: sol.a,
                objective: sol.objective,
                nodes: sol.stats.nodes,
                optimal: sol.stats.optimal,
                hierarchy_ok: prob.satisfies_hierarchy(self.cfg.precision),
            }),
            matched: sol.selected_ids,
        })
    }

    pub fn finish(self, outcomes: Vec<UnitOutcome>) -> Result<AttReport> {
        let mut units = Vec::new();
        let mut skipped = Vec::new();
        for o in outcomes {
            match o {
                UnitOutcome::Matched(u) => units.push(u),
                UnitOutcome::Skipped(s) => skipped.push(s),
            }
        }
        let mut warnings = self.warnings;
        let info = || units.iter().filter_map(|u: &UnitRecord| u.match_info.as_ref());
        let weak = info().filter(|m| !m.hierarchy_ok).count();
        if weak > 0 && self.cfg.solver == SolverKind::BigM {
            warnings.push(format!(
                "m2 = {:e} is below the hierarchy threshold (n · max w · range / {:e}) for {weak} of {} units",
                self.cfg.m2,
                self.cfg.precision,
                units.len()
            ));
        }
        let capped = info().filter(|m| !m.optimal).count();
        if capped > 0 {
            warnings.push(format!(
                "node budget reached for {capped} of {} units; incumbent selections returned",
                units.len()
            ));
        }
        if !skipped.is_empty() {
            warnings.push(format!("{} treated units skipped", skipped.len()));
        }
        AttReport::assemble(Method::M5cMf, self.treated.len(), units, skipped, warnings)
    }
}

/// Tree, candidate selection and exact per-unit matching; IATT is the
/// treated outcome minus the mean outcome of its selected controls.
pub fn estimate_m5c_mf(d: &Dataset, cfg: &PipelineConfig) -> Result<AttReport> {
    let plan = MatchingPlan::prepare(d, cfg)?;
    let outcomes = plan.treated_rows().iter().map(|&t| plan.match_unit(t)).collect();
    plan.finish(outcomes)
}

/// IATT is the treated outcome minus its leaf regression's prediction.
pub fn estimate_m5c_m(d: &Dataset, cfg: &PipelineConfig) -> Result<AttReport> {
    cfg.validate()?;
    let (control, _) = d.split_by_treatment();
    let tree = build_tree(&control, &cfg.tree_params())?;
    estimate_m5c_m_with_tree(d, &tree)
}

pub fn estimate_m5c_m_with_tree(d: &Dataset, tree: &TreeModel) -> Result<AttReport> {
    let (_, treated) = d.split_by_treatment();
    let mut units = Vec::new();
    let mut skipped = Vec::new();
    for &t in treated.rows() {
        let leaf = tree.assign_leaf(d.row(t));
        match tree.leaf_model(leaf).filter(|f| f.r2_adj.is_some()) {
            Some(fit) => units.push(UnitRecord {
                treated: t,
                leaf: Some(leaf),
                matched: Vec::new(),
                iatt: d.y(t) - fit.predict(d.row(t)),
                match_info: None,
            }),
            None => skipped.push(SkippedUnit {
                treated: t,
                reason: format!(
                    "leaf {leaf} has {} controls, too few for a regression on {} features",
                    tree.node(leaf).control_rows.len(),
                    d.feature_count()
                ),
            }),
        }
    }
    let mut warnings = tree.warnings.clone();
    if !skipped.is_empty() {
        warnings.push(format!("{} treated units skipped", skipped.len()));
    }
    AttReport::assemble(Method::M5cM, treated.len(), units, skipped, warnings)
}

fn mean(v: &[f64]) -> Result<f64> {
    crate::stats::mean(v)
}

/// `mean(y | t = 1) - mean(y | t = 0)`.
pub fn naive_diff_in_means(d: &Dataset) -> Result<f64> {
    let (c, t) = d.split_by_treatment();
    let yt: Vec<f64> = t.rows().iter().map(|&r| d.y(r)).collect();
    let yc: Vec<f64> = c.rows().iter().map(|&r| d.y(r)).collect();
    Ok(mean(&yt)? - mean(&yc)?)
}

/// Naive estimate with one record per treated unit against the whole control pool.
pub fn estimate_naive(d: &Dataset) -> Result<AttReport> {
    let (c, t) = d.split_by_treatment();
    let yc: Vec<f64> = c.rows().iter().map(|&r| d.y(r)).collect();
    let mc = mean(&yc)?;
    let units = t
        .rows()
        .iter()
        .map(|&r| UnitRecord {
            treated: r,
            leaf: None,
            matched: Vec::new(),
            iatt: d.y(r) - mc,
            match_info: None,
        })
        .collect();
    AttReport::assemble(Method::Naive, t.len(), units, Vec::new(), Vec::new())
}

/// Treated and control outcomes of one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumOutcome {
    pub id: usize,
    pub treated: Vec<f64>,
    pub control: Vec<f64>,
}

impl StratumOutcome {
    pub fn new(treated: Vec<f64>, control: Vec<f64>) -> Self {
        Self { id: 0, treated, control }
    }
}

fn is_binary(v: &[f64]) -> bool {
    v.iter().all(|&y| y == 0.0 || y == 1.0)
}

/// Pairs `(treated index, control index)` for robust 1:1 matching.
///
/// Discordant pairs first (treated 1 with control 0, then treated 0 with
/// control 1), lowest indices first; leftover treated units are then paired
/// with leftover controls of the same outcome while any remain.
pub fn robust_pairs(s: &StratumOutcome) -> Result<Vec<(usize, usize)>> {
    if !is_binary(&s.treated) || !is_binary(&s.control) {
        return Err(Error::StrategyRequiresBinary);
    }
    let split = |v: &[f64], val: f64| -> Vec<usize> { (0..v.len()).filter(|&i| v[i] == val).collect() };
    let (t1, t0) = (split(&s.treated, 1.0), split(&s.treated, 0.0));
    let (c1, c0) = (split(&s.control, 1.0), split(&s.control, 0.0));
    let d1 = t1.len().min(c0.len());
    let d2 = t0.len().min(c1.len());
    let mut pairs: Vec<(usize, usize)> = t1.iter().zip(&c0).map(|(&t, &c)| (t, c)).collect();
    pairs.extend(t0.iter().zip(&c1).map(|(&t, &c)| (t, c)));
    pairs.extend(t1[d1..].iter().zip(&c1[d2..]).map(|(&t, &c)| (t, c)));
    pairs.extend(t0[d2..].iter().zip(&c0[d1..]).map(|(&t, &c)| (t, c)));
    Ok(pairs)
}

/// Mean outcome difference over the robust 1:1 pairs. Requires binary outcomes.
pub fn robust_att_1to1(s: &StratumOutcome) -> Result<f64> {
    let pairs = robust_pairs(s)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(pairs.iter().map(|&(t, c)| s.treated[t] - s.control[c]).sum::<f64>() / pairs.len() as f64)
}

/// Every treated unit against all stratum controls, averaged over treated
/// units. Evaluated exactly and rounded once.
pub fn robust_att_1tok(s: &StratumOutcome) -> Result<f64> {
    let (nt, nc) = stratum_sizes(s)?;
    let sum_c = fixed_sum(&s.control);
    // n_c · (y_t - mean_c), scaled, for each treated unit
    let iatt_sum = s
        .treated
        .iter()
        .fold(BigInt::zero(), |acc, &y| acc + (fixed(y) * nc - &sum_c));
    Ok(round_scaled(iatt_sum, BigInt::from(nt) * nc))
}

/// `mean(Y^T) - mean(Y^C)`, evaluated exactly and rounded once.
pub fn robust_att_ktok(s: &StratumOutcome) -> Result<f64> {
    let (nt, nc) = stratum_sizes(s)?;
    let numer = fixed_sum(&s.treated) * nc - fixed_sum(&s.control) * nt;
    Ok(round_scaled(numer, BigInt::from(nt) * nc))
}

fn stratum_sizes(s: &StratumOutcome) -> Result<(u64, u64)> {
    if s.treated.is_empty() || s.control.is_empty() {
        return Err(Error::EmptyInput);
    }
    if s.treated.iter().chain(&s.control).any(|v| !v.is_finite()) {
        return Err(Error::ShapeMismatch("non-finite outcome".into()));
    }
    Ok((s.treated.len() as u64, s.control.len() as u64))
}

/// `Σ_b w_b τ_b` with `w_b = n_b / Σ n_b`.
pub fn aggregate_att(strata: &[(usize, f64)]) -> Result<f64> {
    if strata.is_empty() {
        return Err(Error::EmptyInput);
    }
    if strata.iter().any(|s| s.0 == 0) {
        return Err(Error::ShapeMismatch("stratum without treated units".into()));
    }
    let total: usize = strata.iter().map(|s| s.0).sum();
    Ok(strata.iter().map(|&(n, tau)| n as f64 / total as f64 * tau).sum())
}

/// Strategy estimators with tree leaves as strata.
///
/// 1:k and k:k give every treated unit the IATT `y_t - mean(leaf controls)`.
/// 1:1 records one IATT per robust pair, so unpaired treated units are skipped.
pub fn estimate_strategy(d: &Dataset, tree: &TreeModel, method: Method) -> Result<AttReport> {
    if !matches!(method, Method::Strategy1to1 | Method::Strategy1tok | Method::StrategyKtok) {
        return Err(Error::InvalidConfig(format!("{} is not a strategy", method.name())));
    }
    let (_, treated) = d.split_by_treatment();
    let mut by_leaf: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for &t in treated.rows() {
        by_leaf.entry(tree.assign_leaf(d.row(t))).or_default().push(t);
    }
    let mut units = Vec::new();
    let mut skipped = Vec::new();
    let mut strata = Vec::new();
    for (leaf, trows) in by_leaf {
        let crows = &tree.node(leaf).control_rows;
        let s = StratumOutcome {
            id: leaf,
            treated: trows.iter().map(|&r| d.y(r)).collect(),
            control: crows.iter().map(|&r| d.y(r)).collect(),
        };
        if crows.is_empty() {
            skipped.extend(trows.iter().map(|&t| SkippedUnit {
                treated: t,
                reason: format!("leaf {leaf} has no controls"),
            }));
            continue;
        }
        if method == Method::Strategy1to1 {
            let pairs = robust_pairs(&s)?;
            let mut paired = alloc::vec![false; trows.len()];
            for &(ti, ci) in &pairs {
                paired[ti] = true;
                units.push(UnitRecord {
                    treated: trows[ti],
                    leaf: Some(leaf),
                    matched: alloc::vec![crows[ci]],
                    iatt: s.treated[ti] - s.control[ci],
                    match_info: None,
                });
            }
            for (ti, _) in paired.iter().enumerate().filter(|(_, &p)| !p) {
                skipped.push(SkippedUnit {
                    treated: trows[ti],
                    reason: format!("no control left to pair in leaf {leaf}"),
                });
            }
            if !pairs.is_empty() {
                strata.push((pairs.len(), robust_att_1to1(&s)?));
            }
        } else {
            let mc = mean(&s.control)?;
            for (ti, &t) in trows.iter().enumerate() {
                units.push(UnitRecord {
                    treated: t,
                    leaf: Some(leaf),
                    matched: crows.clone(),
                    iatt: s.treated[ti] - mc,
                    match_info: None,
                });
            }
            let tau = if method == Method::Strategy1tok {
                robust_att_1tok(&s)?
            } else {
                robust_att_ktok(&s)?
            };
            strata.push((trows.len(), tau));
        }
    }
    let mut report = AttReport::assemble(method, treated.len(), units, skipped, tree.warnings.clone())?;
    // stratum-weighted form; equal to the unit mean up to rounding
    report.att = aggregate_att(&strata)?;
    Ok(report)
}
