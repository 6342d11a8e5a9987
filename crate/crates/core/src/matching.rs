//! Per-treated-unit control selection.
//!
//! For one treated unit with feature vector `μ` and candidate controls `x_i`,
//! the selection problem is
//!
//! ```text
//! min  a + M2 ε
//! s.t. |Σ_i g_i w_j (x_ij - μ_j)| <= ε             for every feature j
//!      w_j |x_ij - μ_j| - M1 (1 - g_i) <= a         for every i, j
//!      Σ_i g_i >= 1,  g ∈ {0,1}^n,  ε, a >= 0
//! ```
//!
//! For a fixed selection `g` the optimal `ε` and `a` are closed-form maxima, so
//! the solvers here search over selections directly. [`solve_match`] is a
//! depth-first branch and bound; [`solve_match_bruteforce`] enumerates every
//! non-empty subset and serves as the test oracle.
//!
//! Candidates are always processed in ascending control-id order and partial
//! sums are accumulated in that order, so every solver computes bit-identical
//! `ε`, `a` and objective values for the same selection. Among exactly tied
//! optima the lexicographically smallest list of control ids wins.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_M1: f64 = 1e6;
pub const DEFAULT_M2: f64 = 1e6;
/// Absolute precision on `ε` and `a`.
pub const SOLVER_PRECISION: f64 = 1e-9;
pub const ORACLE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchProblem {
    treated: Vec<f64>,
    candidates: Vec<f64>,
    weights: Vec<f64>,
    m1: f64,
    m2: f64,
    candidate_ids: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub epsilon: f64,
    pub a: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub nodes: u64,
    /// False when the node budget ran out and the incumbent was returned.
    pub optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSolution {
    /// Positions into the problem's candidate list, ascending.
    pub selected: Vec<usize>,
    /// Control ids of the selected candidates, ascending.
    pub selected_ids: Vec<usize>,
    pub epsilon: f64,
    pub a: f64,
    pub objective: f64,
    pub stats: SolverStats,
}

impl MatchProblem {
    /// Builds a problem with the default big-M constants.
    pub fn new(
        treated: Vec<f64>,
        candidates: Vec<Vec<f64>>,
        weights: Vec<f64>,
        candidate_ids: Vec<usize>,
    ) -> Result<Self> {
        let p = treated.len();
        if candidates.is_empty() {
            return Err(Error::InvalidProblem("no candidates".into()));
        }
        if weights.len() != p || candidates.iter().any(|c| c.len() != p) {
            return Err(Error::InvalidProblem(format!(
                "dimension mismatch: treated has {p} features"
            )));
        }
        if candidate_ids.len() != candidates.len() {
            return Err(Error::InvalidProblem("one id per candidate required".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidProblem("weights must be finite and non-negative".into()));
        }
        let flat: Vec<f64> = candidates.into_iter().flatten().collect();
        if flat.iter().chain(&treated).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite feature value".into()));
        }
        Ok(Self {
            treated,
            candidates: flat,
            weights,
            m1: DEFAULT_M1,
            m2: DEFAULT_M2,
            candidate_ids,
        })
    }

    pub fn with_big_m(mut self, m1: f64, m2: f64) -> Result<Self> {
        if !(m1 > 0.0 && m2 > 0.0 && m1.is_finite() && m2.is_finite()) {
            return Err(Error::InvalidProblem(format!("big-M constants must be positive, got {m1}, {m2}")));
        }
        self.m1 = m1;
        self.m2 = m2;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.candidate_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidate_ids.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.treated.len()
    }

    pub fn treated(&self) -> &[f64] {
        &self.treated
    }

    pub fn candidate(&self, i: usize) -> &[f64] {
        let p = self.feature_count();
        &self.candidates[i * p..(i + 1) * p]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn candidate_ids(&self) -> &[usize] {
        &self.candidate_ids
    }

    pub fn m1(&self) -> f64 {
        self.m1
    }

    pub fn m2(&self) -> f64 {
        self.m2
    }

    /// `n max_j w_j (max feature value - min feature value) / delta`: any `M2`
    /// above this makes a smaller `ε` (by at least `delta`) win regardless of `a`.
    pub fn hierarchy_threshold(&self, delta: f64) -> f64 {
        let wmax = self.weights.iter().cloned().fold(0.0, f64::max);
        let (lo, hi) = self
            .candidates
            .iter()
            .chain(&self.treated)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        self.len() as f64 * wmax * (hi - lo) / delta
    }

    pub fn satisfies_hierarchy(&self, delta: f64) -> bool {
        self.m2 > self.hierarchy_threshold(delta)
    }

    /// Positions sorted by (control id, position).
    fn canonical_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&i| (self.candidate_ids[i], i));
        order
    }

    /// Closed-form `ε`, `a` and objective for a selection of positions.
    pub fn evaluate(&self, selected: &[usize]) -> Result<Evaluation> {
        if selected.is_empty() {
            return Err(Error::InvalidProblem("selection must be non-empty".into()));
        }
        let prep = Prepared::new(self);
        let mut chosen = vec![false; self.len()];
        for &s in selected {
            if s >= self.len() {
                return Err(Error::InvalidProblem(format!("position {s} out of range")));
            }
            chosen[s] = true;
        }
        let ranks: Vec<bool> = prep.order.iter().map(|&pos| chosen[pos]).collect();
        Ok(prep.evaluate(&ranks))
    }
}

/// Weighted deviations in canonical order.
struct Prepared {
    order: Vec<usize>,
    ids: Vec<usize>,
    dev: Vec<f64>,
    radius: Vec<f64>,
    p: usize,
    m1: f64,
    m2: f64,
}

impl Prepared {
    fn new(prob: &MatchProblem) -> Self {
        let order = prob.canonical_order();
        let p = prob.feature_count();
        let mut dev = Vec::with_capacity(order.len() * p);
        let mut radius = Vec::with_capacity(order.len());
        for &pos in &order {
            let mut r = 0.0f64;
            for ((x, mu), w) in prob.candidate(pos).iter().zip(&prob.treated).zip(&prob.weights) {
                let d = w * (x - mu);
                r = r.max(d.abs());
                dev.push(d);
            }
            radius.push(r);
        }
        Self {
            ids: order.iter().map(|&i| prob.candidate_ids[i]).collect(),
            order,
            dev,
            radius,
            p,
            m1: prob.m1,
            m2: prob.m2,
        }
    }

    fn n(&self) -> usize {
        self.order.len()
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.dev[k * self.p..(k + 1) * self.p]
    }

    fn evaluate(&self, chosen: &[bool]) -> Evaluation {
        let mut sums = vec![0.0; self.p];
        let mut a = 0.0f64;
        for (k, &on) in chosen.iter().enumerate().take(self.n()) {
            if on {
                for (s, d) in sums.iter_mut().zip(self.row(k)) {
                    *s += d;
                }
                a = a.max(self.radius[k]);
            } else {
                a = a.max(self.radius[k] - self.m1);
            }
        }
        let epsilon = sums.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        Evaluation {
            epsilon,
            a,
            objective: a + self.m2 * epsilon,
        }
    }

    fn solution(&self, chosen: &[bool], eval: Evaluation, stats: SolverStats) -> MatchSolution {
        let mut selected: Vec<usize> = (0..self.n()).filter(|&k| chosen[k]).map(|k| self.order[k]).collect();
        selected.sort_unstable();
        let selected_ids = (0..self.n()).filter(|&k| chosen[k]).map(|k| self.ids[k]).collect();
        MatchSolution {
            selected,
            selected_ids,
            epsilon: eval.epsilon,
            a: eval.a,
            objective: eval.objective,
            stats,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Criterion {
    /// `a + M2 ε`.
    BigM,
    /// `ε` alone.
    Epsilon,
    /// `a`, restricted to selections with `ε <= cap`.
    CappedA { cap: f64 },
}

impl Criterion {
    fn value(&self, e: &Evaluation) -> Option<f64> {
        match *self {
            Criterion::BigM => Some(e.objective),
            Criterion::Epsilon => Some(e.epsilon),
            Criterion::CappedA { cap } => (e.epsilon <= cap).then_some(e.a),
        }
    }

    fn bound(&self, a_lb: f64, eps_lb: f64, m2: f64) -> Option<f64> {
        match *self {
            Criterion::BigM => Some(a_lb + m2 * eps_lb),
            Criterion::Epsilon => Some(eps_lb),
            Criterion::CappedA { cap } => (eps_lb <= cap).then_some(a_lb),
        }
    }

    /// Whether `(value, e, ids)` beats the incumbent.
    fn better(&self, value: f64, e: &Evaluation, ids: &[usize], inc: &Incumbent) -> bool {
        if value != inc.value {
            return value < inc.value;
        }
        if let Criterion::CappedA { .. } = self {
            if e.epsilon != inc.eval.epsilon {
                return e.epsilon < inc.eval.epsilon;
            }
        }
        ids < inc.ids.as_slice()
    }
}

struct Incumbent {
    value: f64,
    eval: Evaluation,
    ids: Vec<usize>,
    chosen: Vec<bool>,
}

fn slack(v: f64) -> f64 {
    1e-12 * v.abs().max(1.0)
}

struct Search<'a> {
    prep: &'a Prepared,
    crit: Criterion,
    pos_suffix: Vec<f64>,
    neg_suffix: Vec<f64>,
    min_radius_suffix: Vec<f64>,
    a_floor: f64,
    sums: Vec<f64>,
    chosen: Vec<bool>,
    best: Option<Incumbent>,
    nodes: u64,
    budget: Option<u64>,
    exhausted: bool,
}

impl<'a> Search<'a> {
    fn new(prep: &'a Prepared, crit: Criterion, budget: Option<u64>) -> Self {
        let (n, p) = (prep.n(), prep.p);
        let mut pos_suffix = vec![0.0; (n + 1) * p];
        let mut neg_suffix = vec![0.0; (n + 1) * p];
        let mut min_radius_suffix = vec![f64::INFINITY; n + 1];
        for k in (0..n).rev() {
            for j in 0..p {
                let d = prep.dev[k * p + j];
                pos_suffix[k * p + j] = pos_suffix[(k + 1) * p + j] + d.max(0.0);
                neg_suffix[k * p + j] = neg_suffix[(k + 1) * p + j] + d.min(0.0);
            }
            min_radius_suffix[k] = min_radius_suffix[k + 1].min(prep.radius[k]);
        }
        let a_floor = prep.radius.iter().fold(0.0f64, |m, r| m.max(r - prep.m1));
        Self {
            prep,
            crit,
            pos_suffix,
            neg_suffix,
            min_radius_suffix,
            a_floor,
            sums: vec![0.0; (n + 1) * p],
            chosen: vec![false; n],
            best: None,
            nodes: 0,
            budget,
            exhausted: false,
        }
    }

    fn offer(&mut self, chosen: &[bool], eval: Evaluation) {
        let Some(value) = self.crit.value(&eval) else {
            return;
        };
        let ids: Vec<usize> = (0..self.prep.n()).filter(|&k| chosen[k]).map(|k| self.prep.ids[k]).collect();
        let take = match &self.best {
            None => true,
            Some(inc) => self.crit.better(value, &eval, &ids, inc),
        };
        if take {
            self.best = Some(Incumbent {
                value,
                eval,
                ids,
                chosen: chosen.to_vec(),
            });
        }
    }

    fn seed_singletons(&mut self) {
        let n = self.prep.n();
        let mut chosen = vec![false; n];
        for k in 0..n {
            chosen[k] = true;
            let e = self.prep.evaluate(&chosen);
            self.offer(&chosen.clone(), e);
            chosen[k] = false;
        }
    }

    fn run(&mut self) {
        self.seed_singletons();
        self.dfs(0, 0.0, 0.0, 0);
    }

    fn dfs(&mut self, depth: usize, a_sel: f64, a_excl: f64, count: usize) {
        if self.exhausted {
            return;
        }
        self.nodes += 1;
        if self.budget.is_some_and(|b| self.nodes > b) {
            self.exhausted = true;
            return;
        }
        let (n, p) = (self.prep.n(), self.prep.p);
        let at = depth * p;

        if depth == n {
            if count == 0 {
                return;
            }
            let epsilon = self.sums[at..at + p].iter().fold(0.0f64, |m, s| m.max(s.abs()));
            let a = a_sel.max(a_excl);
            let eval = Evaluation {
                epsilon,
                a,
                objective: a + self.prep.m2 * epsilon,
            };
            let chosen = core::mem::take(&mut self.chosen);
            self.offer(&chosen, eval);
            self.chosen = chosen;
            return;
        }

        // lower bound over all completions of this partial selection
        let mut eps_lb = 0.0f64;
        for j in 0..p {
            let s = self.sums[at + j];
            let lo = s + self.neg_suffix[at + j];
            let hi = s + self.pos_suffix[at + j];
            let gap = if lo > 0.0 {
                lo
            } else if hi < 0.0 {
                -hi
            } else {
                0.0
            };
            eps_lb = eps_lb.max(gap);
        }
        let mut a_lb = a_sel.max(a_excl).max(self.a_floor);
        if count == 0 {
            a_lb = a_lb.max(self.min_radius_suffix[depth]);
        }
        let Some(lb) = self.crit.bound(a_lb, eps_lb, self.prep.m2) else {
            return;
        };
        if let Some(inc) = &self.best {
            if lb > inc.value + slack(inc.value) {
                return;
            }
        }

        let radius = self.prep.radius[depth];
        let next = (depth + 1) * p;

        // include
        for j in 0..p {
            self.sums[next + j] = self.sums[at + j] + self.prep.dev[at + j];
        }
        self.chosen[depth] = true;
        self.dfs(depth + 1, a_sel.max(radius), a_excl, count + 1);
        self.chosen[depth] = false;

        // exclude
        if count == 0 && depth + 1 == n {
            return;
        }
        self.sums.copy_within(at..at + p, next);
        self.dfs(depth + 1, a_sel, a_excl.max(radius - self.prep.m1), count);
    }
}

fn search(prob: &MatchProblem, crit: Criterion, budget: Option<u64>) -> (Prepared, Incumbent, SolverStats) {
    let prep = Prepared::new(prob);
    let mut s = Search::new(&prep, crit, budget);
    s.run();
    let stats = SolverStats {
        nodes: s.nodes,
        optimal: !s.exhausted,
    };
    let best = s.best.take().expect("singletons always provide an incumbent");
    drop(s);
    (prep, best, stats)
}

/// Exact minimizer of `a + M2 ε`.
pub fn solve_match(prob: &MatchProblem) -> MatchSolution {
    solve_match_with_budget(prob, None)
}

/// As [`solve_match`], but stops after `budget` search nodes and returns the
/// incumbent with `stats.optimal == false`.
pub fn solve_match_with_budget(prob: &MatchProblem, budget: Option<u64>) -> MatchSolution {
    let (prep, best, stats) = search(prob, Criterion::BigM, budget);
    prep.solution(&best.chosen, best.eval, stats)
}

/// Two-stage solve: minimal `ε` first, then minimal `a` among selections whose
/// `ε` is within [`SOLVER_PRECISION`] of that minimum.
pub fn solve_match_lexicographic(prob: &MatchProblem) -> MatchSolution {
    let (_, first, s1) = search(prob, Criterion::Epsilon, None);
    let cap = first.eval.epsilon + SOLVER_PRECISION;
    let prep = Prepared::new(prob);
    let mut s = Search::new(&prep, Criterion::CappedA { cap }, None);
    // the stage-one optimum is feasible for stage two
    s.offer(&first.chosen, first.eval);
    s.run();
    let stats = SolverStats {
        nodes: s1.nodes + s.nodes,
        optimal: true,
    };
    let best = s.best.take().expect("stage-one optimum is feasible");
    drop(s);
    prep.solution(&best.chosen, best.eval, stats)
}

/// Enumerates all `2^n - 1` non-empty selections. Limited to 20 candidates.
pub fn solve_match_bruteforce(prob: &MatchProblem) -> Result<MatchSolution> {
    let n = prob.len();
    if n > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge(n));
    }
    let p = prob.feature_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (prob.candidate_ids()[i], i));

    let mut best: Option<(f64, f64, f64, Vec<usize>, u32)> = None;
    let mut sums = vec![0.0; p];
    for mask in 1u32..(1u32 << n) {
        sums.iter_mut().for_each(|s| *s = 0.0);
        let mut a = 0.0f64;
        let mut ids = Vec::new();
        for (k, &pos) in order.iter().enumerate() {
            let x = prob.candidate(pos);
            let mut dist = 0.0f64;
            for j in 0..p {
                let d = prob.weights()[j] * (x[j] - prob.treated()[j]);
                dist = dist.max(d.abs());
                if mask & (1 << k) != 0 {
                    sums[j] += d;
                }
            }
            if mask & (1 << k) != 0 {
                a = a.max(dist);
                ids.push(prob.candidate_ids()[pos]);
            } else {
                a = a.max(dist - prob.m1());
            }
        }
        let eps = sums.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        let obj = a + prob.m2() * eps;
        let better = match &best {
            None => true,
            Some((bo, _, _, bids, _)) => obj < *bo || (obj == *bo && ids < *bids),
        };
        if better {
            best = Some((obj, eps, a, ids, mask));
        }
    }
    let (objective, epsilon, a, selected_ids, mask) = best.expect("n >= 1");
    let mut selected: Vec<usize> = (0..n).filter(|&k| mask & (1 << k) != 0).map(|k| order[k]).collect();
    selected.sort_unstable();
    Ok(MatchSolution {
        selected,
        selected_ids,
        epsilon,
        a,
        objective,
        stats: SolverStats {
            nodes: (1u64 << n) - 1,
            optimal: true,
        },
    })
}

/// Weighted distance `sqrt(Σ_j w_j (t_j - c_j)²)`.
pub fn weighted_distance(treated: &[f64], control: &[f64], w: &[f64]) -> f64 {
    libm::sqrt(
        treated
            .iter()
            .zip(control)
            .zip(w)
            .map(|((t, c), w)| w * (t - c) * (t - c))
            .sum(),
    )
}

/// The `psi` controls nearest to `treated_row` under [`weighted_distance`],
/// distance ties going to the lower row index, packaged as a problem with
/// candidates in ascending row order.
pub fn select_candidates(
    d: &Dataset,
    treated_row: usize,
    pool: &[usize],
    weights: &[f64],
    psi: usize,
) -> Result<MatchProblem> {
    if pool.is_empty() || psi == 0 {
        return Err(Error::NoCandidates(treated_row));
    }
    let t = d.row(treated_row);
    let mut scored: Vec<(f64, usize)> = pool
        .iter()
        .map(|&r| (weighted_distance(t, d.row(r), weights), r))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(psi);
    let mut ids: Vec<usize> = scored.into_iter().map(|(_, r)| r).collect();
    ids.sort_unstable();
    let candidates = ids.iter().map(|&r| d.row(r).to_vec()).collect();
    MatchProblem::new(t.to_vec(), candidates, weights.to_vec(), ids)
}
