//! The hyb20var data-generating process.
//!
//! ```text
//! x_1..x_5 ~ U(0, 10),  x_j ~ Bernoulli(p_j) with p_j ~ U(0.1, 0.9),  e ~ U(0, 1)
//! y0 = 0.5 x1 + 0.3 x2 + 0.2 x1 x6 + 0.5 sin(x3) + 0.5 x4² + 0.3 [x7 = 1] + e
//! y1 = y0 + 2
//! ```
//!
//! Exactly `n_treated` units, drawn uniformly without replacement, are treated.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Features that enter the outcome, zero-based.
pub const OUTCOME_FEATURES: [usize; 6] = [0, 1, 2, 3, 5, 6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeFormula {
    Hyb20var,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub n_continuous: usize,
    pub n_binary: usize,
    pub continuous_range: (f64, f64),
    pub probability_range: (f64, f64),
    /// Fixed Bernoulli probabilities; drawn per dataset when `None`.
    pub fixed_probabilities: Option<Vec<f64>>,
    pub formula: OutcomeFormula,
    pub true_att: f64,
    pub n_treated: usize,
    pub n_control: usize,
    pub seed: u64,
}

impl DgpSpec {
    /// 200 treated and 19,800 controls.
    pub fn hyb20var(seed: u64) -> Self {
        Self {
            n_continuous: 5,
            n_binary: 15,
            continuous_range: (0.0, 10.0),
            probability_range: (0.1, 0.9),
            fixed_probabilities: None,
            formula: OutcomeFormula::Hyb20var,
            true_att: 2.0,
            n_treated: 200,
            n_control: 19_800,
            seed,
        }
    }

    /// 100 treated and 4,900 controls.
    pub fn hyb20var_desk(seed: u64) -> Self {
        Self::hyb20var(seed).with_scale(100, 4_900)
    }

    pub fn with_scale(mut self, n_treated: usize, n_control: usize) -> Self {
        self.n_treated = n_treated;
        self.n_control = n_control;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn feature_count(&self) -> usize {
        self.n_continuous + self.n_binary
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_treated == 0 || self.n_control == 0 {
            return Err(Error::PositivityViolation {
                treated: self.n_treated,
                control: self.n_control,
            });
        }
        if self.n_continuous < 5 || self.n_binary < 2 {
            return Err(Error::InvalidConfig(
                "the outcome formula needs at least 5 continuous and 2 binary features".into(),
            ));
        }
        let (lo, hi) = self.continuous_range;
        let (plo, phi) = self.probability_range;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidConfig("empty continuous range".into()));
        }
        if !(0.0 <= plo && plo <= phi && phi <= 1.0) {
            return Err(Error::InvalidConfig("probability range must lie in [0, 1]".into()));
        }
        if let Some(p) = &self.fixed_probabilities {
            if p.len() != self.n_binary || p.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidConfig(format!(
                    "need {} fixed probabilities in [0, 1]",
                    self.n_binary
                )));
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Dataset> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let probs: Vec<f64> = match &self.fixed_probabilities {
            Some(p) => p.clone(),
            None => {
                let u = Uniform::new_inclusive(self.probability_range.0, self.probability_range.1);
                (0..self.n_binary).map(|_| u.sample(&mut rng)).collect()
            }
        };
        let n = self.n_treated + self.n_control;
        let p = self.feature_count();
        let cont = Uniform::new(self.continuous_range.0, self.continuous_range.1);
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let start = x.len();
            for _ in 0..self.n_continuous {
                x.push(cont.sample(&mut rng));
            }
            for &pj in &probs {
                x.push(if rng.gen::<f64>() < pj { 1.0 } else { 0.0 });
            }
            let e: f64 = rng.gen();
            y.push(baseline_outcome(&x[start..start + p], self.n_continuous) + e);
        }
        let mut t = alloc::vec![false; n];
        for i in rand::seq::index::sample(&mut rng, n, self.n_treated) {
            t[i] = true;
            y[i] += self.true_att;
        }
        let names: Vec<String> = (1..=p).map(|j| format!("x{j}")).collect();
        Dataset::from_flat(t, x, y, names)
    }
}

/// `y0` without noise. Binary features start at index `n_continuous`.
fn baseline_outcome(row: &[f64], n_continuous: usize) -> f64 {
    let (x1, x2, x3, x4) = (row[0], row[1], row[2], row[3]);
    let x6 = row[n_continuous];
    let x7 = row[n_continuous + 1];
    0.5 * x1 + 0.3 * x2 + 0.2 * x1 * x6 + 0.5 * libm::sin(x3) + 0.5 * x4 * x4 + if x7 == 1.0 { 0.3 } else { 0.0 }
}

/// hyb20var at full scale (200 / 19,800), or at `(n_treated, n_control)` when given.
pub fn generate_hyb20var(seed: u64, scale: Option<(usize, usize)>) -> Result<Dataset> {
    let mut spec = DgpSpec::hyb20var(seed);
    if let Some((t, c)) = scale {
        spec = spec.with_scale(t, c);
    }
    spec.generate()
}

/// Independent child seed for stream `stream` of `base` (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape() {
        let d = generate_hyb20var(1, Some((10, 90))).unwrap();
        assert_eq!((d.len(), d.feature_count()), (100, 20));
        assert_eq!((d.treated_count(), d.control_count()), (10, 90));
        assert_eq!(d.feature_names()[19], "x20");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_hyb20var(42, Some((10, 90))).unwrap();
        let b = generate_hyb20var(42, Some((10, 90))).unwrap();
        assert_eq!(a, b);
        let c = generate_hyb20var(43, Some((10, 90))).unwrap();
        assert_ne!(a.outcome(), c.outcome());
    }

    #[test]
    fn feature_domains() {
        let d = generate_hyb20var(3, Some((20, 480))).unwrap();
        for i in 0..d.len() {
            let r = d.row(i);
            assert!(r[..5].iter().all(|v| (0.0..10.0).contains(v)));
            assert!(r[5..].iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn noise_free_outcome() {
        let mut row = alloc::vec![0.0; 20];
        row[0] = 2.0;
        row[1] = 1.0;
        row[3] = 3.0;
        row[5] = 1.0;
        row[6] = 1.0;
        // 1 + 0.3 + 0.4 + 0 + 4.5 + 0.3
        assert!((baseline_outcome(&row, 5) - 6.5).abs() < 1e-12);
    }

    #[test]
    fn outcome_within_noise_band() {
        let spec = DgpSpec::hyb20var(9).with_scale(30, 270);
        let d = spec.generate().unwrap();
        for i in 0..d.len() {
            let base = baseline_outcome(d.row(i), 5) + if d.is_treated(i) { 2.0 } else { 0.0 };
            let e = d.y(i) - base;
            assert!((0.0..1.0).contains(&e), "row {i} residual {e}");
        }
    }

    #[test]
    fn difference_in_means_near_two() {
        // randomized assignment: the average naive difference over 30 seeds is
        // within a few standard errors of the true effect
        let diffs: Vec<f64> = (0..30)
            .map(|s| {
                let d = generate_hyb20var(derive_seed(7, s), Some((100, 900))).unwrap();
                let (c, t) = d.split_by_treatment();
                let mt = t.rows().iter().map(|&r| d.y(r)).sum::<f64>() / t.len() as f64;
                let mc = c.rows().iter().map(|&r| d.y(r)).sum::<f64>() / c.len() as f64;
                mt - mc
            })
            .collect();
        let m = diffs.iter().sum::<f64>() / 30.0;
        let sd = libm::sqrt(diffs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 29.0);
        let se = sd / libm::sqrt(30.0);
        assert!((m - 2.0).abs() < 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn fixed_probabilities_respected() {
        let mut spec = DgpSpec::hyb20var(1).with_scale(5, 995);
        spec.fixed_probabilities = Some(alloc::vec![0.0; 15]);
        let d = spec.generate().unwrap();
        assert!((0..d.len()).all(|i| d.row(i)[5..].iter().all(|&v| v == 0.0)));
        spec.fixed_probabilities = Some(alloc::vec![0.5; 3]);
        assert!(spec.generate().is_err());
    }

    #[test]
    fn rejects_empty_arms() {
        assert!(matches!(
            generate_hyb20var(1, Some((0, 10))),
            Err(Error::PositivityViolation { .. })
        ));
    }

    #[test]
    fn derived_seeds_distinct() {
        let s: Vec<u64> = (0..100).map(|i| derive_seed(0, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 100);
        assert_eq!(derive_seed(5, 3), derive_seed(5, 3));
    }
}
