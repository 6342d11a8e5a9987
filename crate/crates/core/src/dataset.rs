//! Observational dataset container: treatment indicators, a dense row-major
//! feature matrix and outcomes, plus min-max scaling metadata.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature affine map recorded by [`Dataset::normalize_min_max`].
///
/// `normalized = (raw - min) / (max - min)`; constant columns have `min == max`
/// and normalize to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub min: f64,
    pub max: f64,
}

impl Scaling {
    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    pub fn apply(&self, raw: f64) -> f64 {
        let range = self.range();
        if range > 0.0 {
            (raw - self.min) / range
        } else {
            0.0
        }
    }

    pub fn invert(&self, normalized: f64) -> f64 {
        normalized * self.range() + self.min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    treatment: Vec<bool>,
    features: Vec<f64>,
    outcome: Vec<f64>,
    feature_names: Vec<String>,
    scaling: Option<Vec<Scaling>>,
}

impl Dataset {
    /// Builds a validated dataset from row-major features.
    ///
    /// Rejects ragged rows, non-finite values and datasets without at least one
    /// treated and one control unit.
    pub fn new(
        treatment: Vec<bool>,
        rows: Vec<Vec<f64>>,
        outcome: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let p = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * p);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != p {
                return Err(Error::ShapeMismatch(format!(
                    "row {i} has {} features, expected {p}",
                    row.len()
                )));
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(treatment, features, outcome, feature_names)
    }

    pub fn from_flat(
        treatment: Vec<bool>,
        features: Vec<f64>,
        outcome: Vec<f64>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n = treatment.len();
        let p = feature_names.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if outcome.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} outcomes for {n} units",
                outcome.len()
            )));
        }
        if features.len() != n * p {
            return Err(Error::ShapeMismatch(format!(
                "{} feature values for {n} units x {p} features",
                features.len()
            )));
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::ParseFailure {
                row: k / p.max(1),
                column: feature_names[k % p.max(1)].clone(),
                reason: "non-finite value".to_string(),
            });
        }
        if let Some(i) = outcome.iter().position(|v| !v.is_finite()) {
            return Err(Error::ParseFailure {
                row: i,
                column: "outcome".to_string(),
                reason: "non-finite value".to_string(),
            });
        }
        let treated = treatment.iter().filter(|&&t| t).count();
        if treated == 0 || treated == n {
            return Err(Error::PositivityViolation {
                treated,
                control: n - treated,
            });
        }
        Ok(Self {
            treatment,
            features,
            outcome,
            feature_names,
            scaling: None,
        })
    }

    pub fn len(&self) -> usize {
        self.treatment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.treatment.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn is_treated(&self, row: usize) -> bool {
        self.treatment[row]
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn y(&self, row: usize) -> f64 {
        self.outcome[row]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let p = self.feature_count();
        &self.features[row * p..(row + 1) * p]
    }

    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.features[row * self.feature_count() + feature]
    }

    pub fn column(&self, feature: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i, feature)).collect()
    }

    pub fn scaling(&self) -> Option<&[Scaling]> {
        self.scaling.as_deref()
    }

    pub fn treated_count(&self) -> usize {
        self.treatment.iter().filter(|&&t| t).count()
    }

    pub fn control_count(&self) -> usize {
        self.len() - self.treated_count()
    }

    /// Rescales every feature column to `[0, 1]` using the min and max over all
    /// units. Outcomes are left untouched.
    ///
    /// Applying this to an already normalized dataset leaves the feature values
    /// unchanged and composes the stored scaling so the original units remain
    /// recoverable through [`Dataset::denormalized_row`].
    pub fn normalize_min_max(&self) -> Dataset {
        let p = self.feature_count();
        let n = self.len();
        let mut fitted = Vec::with_capacity(p);
        for j in 0..p {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for i in 0..n {
                let v = self.value(i, j);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            fitted.push(Scaling { min: lo, max: hi });
        }
        let mut features = self.features.clone();
        for (k, v) in features.iter_mut().enumerate() {
            *v = fitted[k % p].apply(*v);
        }
        let scaling = match &self.scaling {
            None => fitted,
            Some(prev) => prev
                .iter()
                .zip(&fitted)
                .map(|(outer, inner)| Scaling {
                    min: outer.invert(inner.min),
                    max: outer.invert(inner.max),
                })
                .collect(),
        };
        Dataset {
            treatment: self.treatment.clone(),
            features,
            outcome: self.outcome.clone(),
            feature_names: self.feature_names.clone(),
            scaling: Some(scaling),
        }
    }

    /// Maps a row back to the original feature units. Returns the stored values
    /// unchanged when the dataset was never normalized.
    pub fn denormalized_row(&self, row: usize) -> Vec<f64> {
        match &self.scaling {
            None => self.row(row).to_vec(),
            Some(s) => self
                .row(row)
                .iter()
                .zip(s)
                .map(|(&v, sc)| sc.invert(v))
                .collect(),
        }
    }

    /// Splits the rows into a control view (`t = 0`) and a treated view.
    pub fn split_by_treatment(&self) -> (DatasetView<'_>, DatasetView<'_>) {
        let (treated, control): (Vec<usize>, Vec<usize>) =
            (0..self.len()).partition(|&i| self.treatment[i]);
        (
            DatasetView {
                data: self,
                rows: control,
            },
            DatasetView {
                data: self,
                rows: treated,
            },
        )
    }

    /// Keeps the listed rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let p = self.feature_count();
        let mut features = Vec::with_capacity(rows.len() * p);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let mut d = Dataset::from_flat(
            rows.iter().map(|&r| self.treatment[r]).collect(),
            features,
            rows.iter().map(|&r| self.outcome[r]).collect(),
            self.feature_names.clone(),
        )?;
        d.scaling = self.scaling.clone();
        Ok(d)
    }
}

/// Borrowed subset of dataset rows.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    data: &'a Dataset,
    rows: Vec<usize>,
}

impl<'a> DatasetView<'a> {
    pub fn new(data: &'a Dataset, rows: Vec<usize>) -> Self {
        Self { data, rows }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    /// Row indices into the parent dataset.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One-hot encodes a categorical column, one indicator per distinct level
/// (levels sorted, none dropped). Returns `(indicator names, rows x levels)`.
pub fn encode_categoricals(name: &str, values: &[String]) -> (Vec<String>, Vec<Vec<f64>>) {
    let levels: Vec<&String> = values.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let names = levels.iter().map(|l| format!("{name}={l}")).collect();
    let rows = values
        .iter()
        .map(|v| {
            levels
                .iter()
                .map(|l| if *l == v { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    (names, rows)
}
