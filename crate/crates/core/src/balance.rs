//! Covariate balance: standardized mean difference, variance ratio,
//! Kolmogorov-Smirnov distance and histogram overlap.
//!
//! Every metric has a weighted form. Unweighted entry points give each value
//! weight one; post-match reports weight each selected control by the inverse
//! of its treated unit's match-set size so that every treated unit counts once.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 20;
pub const SMD_THRESHOLD: f64 = 0.1;
pub const VR_RANGE: (f64, f64) = (0.5, 2.0);

fn check(values: &[f64], weights: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(Error::ShapeMismatch("one weight per value required".into()));
    }
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::EmptyInput);
    }
    Ok(total)
}

/// Weighted mean and population variance.
pub fn weighted_moments(values: &[f64], weights: &[f64]) -> Result<(f64, f64)> {
    let total = check(values, weights)?;
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let var = values
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    Ok((mean, var))
}

fn ones(n: usize) -> Vec<f64> {
    alloc::vec![1.0; n]
}

pub fn weighted_smd_abs(t: &[f64], tw: &[f64], c: &[f64], cw: &[f64]) -> Result<f64> {
    let (m1, v1) = weighted_moments(t, tw)?;
    let (m0, v0) = weighted_moments(c, cw)?;
    let diff = (m1 - m0).abs();
    let pooled = (v1 + v0) / 2.0;
    Ok(if pooled > 0.0 {
        diff / libm::sqrt(pooled)
    } else if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY
    })
}

/// `|μ1 - μ0| / sqrt((σ1² + σ0²) / 2)` with population variances. Infinite when
/// both groups are constant at different values, zero when they coincide.
pub fn smd_abs(treated: &[f64], control: &[f64]) -> Result<f64> {
    weighted_smd_abs(treated, &ones(treated.len()), control, &ones(control.len()))
}

pub fn weighted_variance_ratio(t: &[f64], tw: &[f64], c: &[f64], cw: &[f64]) -> Result<Option<f64>> {
    let (_, v1) = weighted_moments(t, tw)?;
    let (_, v0) = weighted_moments(c, cw)?;
    Ok((v0 > 0.0).then(|| v1 / v0))
}

/// `σ1² / σ0²`; `None` when the control variance is zero.
pub fn variance_ratio(treated: &[f64], control: &[f64]) -> Result<Option<f64>> {
    weighted_variance_ratio(treated, &ones(treated.len()), control, &ones(control.len()))
}

pub fn weighted_ks_distance(t: &[f64], tw: &[f64], c: &[f64], cw: &[f64]) -> Result<f64> {
    let tt = check(t, tw)?;
    let ct = check(c, cw)?;
    let mut pooled: Vec<(f64, f64, f64)> = t
        .iter()
        .zip(tw)
        .map(|(&v, &w)| (v, w / tt, 0.0))
        .chain(c.iter().zip(cw).map(|(&v, &w)| (v, 0.0, w / ct)))
        .collect();
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut ft, mut fc, mut best) = (0.0f64, 0.0f64, 0.0f64);
    let mut i = 0;
    while i < pooled.len() {
        let v = pooled[i].0;
        while i < pooled.len() && pooled[i].0 == v {
            ft += pooled[i].1;
            fc += pooled[i].2;
            i += 1;
        }
        best = best.max((ft - fc).abs());
    }
    Ok(best.min(1.0))
}

/// Largest vertical gap between the two empirical CDFs.
pub fn ks_distance(treated: &[f64], control: &[f64]) -> Result<f64> {
    weighted_ks_distance(treated, &ones(treated.len()), control, &ones(control.len()))
}

pub fn weighted_overlap_coefficient(
    t: &[f64],
    tw: &[f64],
    c: &[f64],
    cw: &[f64],
    bins: usize,
) -> Result<f64> {
    let tt = check(t, tw)?;
    let ct = check(c, cw)?;
    if bins == 0 {
        return Err(Error::InvalidConfig("overlap needs at least one bin".into()));
    }
    let (lo, hi) = t
        .iter()
        .chain(c)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = hi - lo;
    let bin = |v: f64| -> usize {
        if width > 0.0 {
            (((v - lo) / width * bins as f64) as usize).min(bins - 1)
        } else {
            0
        }
    };
    let mut ph = alloc::vec![0.0; bins];
    let mut qh = alloc::vec![0.0; bins];
    for (&v, &w) in t.iter().zip(tw) {
        ph[bin(v)] += w / tt;
    }
    for (&v, &w) in c.iter().zip(cw) {
        qh[bin(v)] += w / ct;
    }
    let ovl: f64 = ph.iter().zip(&qh).map(|(p, q)| p.min(*q)).sum();
    Ok(ovl.clamp(0.0, 1.0))
}

/// `Σ_b min(p_b, q_b)` over a shared equal-width histogram on the pooled range.
pub fn overlap_coefficient(treated: &[f64], control: &[f64], bins: usize) -> Result<f64> {
    weighted_overlap_coefficient(treated, &ones(treated.len()), control, &ones(control.len()), bins)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "id")]
pub enum BalanceScope {
    PreMatch,
    PostMatch,
    Stratum(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRecord {
    pub feature: String,
    pub smd_abs: f64,
    pub variance_ratio: Option<f64>,
    pub ks_distance: f64,
    pub overlap: f64,
    pub smd_balanced: bool,
    pub vr_balanced: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub scope: BalanceScope,
    pub treated_n: usize,
    pub control_n: usize,
    pub bins: usize,
    pub records: Vec<BalanceRecord>,
}

impl BalanceReport {
    /// Mean `|SMD|` over the given feature indices (all features when empty).
    pub fn mean_smd(&self, features: &[usize]) -> f64 {
        let picked: Vec<f64> = if features.is_empty() {
            self.records.iter().map(|r| r.smd_abs).collect()
        } else {
            features.iter().map(|&j| self.records[j].smd_abs).collect()
        };
        picked.iter().sum::<f64>() / picked.len() as f64
    }
}

/// Balance of every feature between two weighted row groups.
pub fn balance_report(
    d: &Dataset,
    treated: &[(usize, f64)],
    control: &[(usize, f64)],
    scope: BalanceScope,
    bins: usize,
) -> Result<BalanceReport> {
    let tw: Vec<f64> = treated.iter().map(|r| r.1).collect();
    let cw: Vec<f64> = control.iter().map(|r| r.1).collect();
    let mut records = Vec::with_capacity(d.feature_count());
    for (j, name) in d.feature_names().iter().enumerate() {
        let tv: Vec<f64> = treated.iter().map(|r| d.value(r.0, j)).collect();
        let cv: Vec<f64> = control.iter().map(|r| d.value(r.0, j)).collect();
        let smd = weighted_smd_abs(&tv, &tw, &cv, &cw)?;
        let vr = weighted_variance_ratio(&tv, &tw, &cv, &cw)?;
        records.push(BalanceRecord {
            feature: name.clone(),
            smd_abs: smd,
            variance_ratio: vr,
            ks_distance: weighted_ks_distance(&tv, &tw, &cv, &cw)?,
            overlap: weighted_overlap_coefficient(&tv, &tw, &cv, &cw, bins)?,
            smd_balanced: smd < SMD_THRESHOLD,
            vr_balanced: vr.map(|v| (VR_RANGE.0..=VR_RANGE.1).contains(&v)),
        });
    }
    Ok(BalanceReport {
        scope,
        treated_n: treated.len(),
        control_n: control.len(),
        bins,
        records,
    })
}

/// All treated units against all controls, unweighted.
pub fn pre_match_balance(d: &Dataset, bins: usize) -> Result<BalanceReport> {
    let (control, treated) = d.split_by_treatment();
    let t: Vec<(usize, f64)> = treated.rows().iter().map(|&r| (r, 1.0)).collect();
    let c: Vec<(usize, f64)> = control.rows().iter().map(|&r| (r, 1.0)).collect();
    balance_report(d, &t, &c, BalanceScope::PreMatch, bins)
}

/// Pooled matched sample. Each `(treated, controls)` pair contributes its
/// treated row with weight one and each of its controls with weight
/// `1 / controls.len()`. A control matched by several treated units appears
/// once per match.
pub fn post_match_balance(d: &Dataset, matches: &[(usize, Vec<usize>)], bins: usize) -> Result<BalanceReport> {
    let mut t = Vec::with_capacity(matches.len());
    let mut c = Vec::new();
    for (treated, controls) in matches {
        if controls.is_empty() {
            continue;
        }
        t.push((*treated, 1.0));
        let w = 1.0 / controls.len() as f64;
        c.extend(controls.iter().map(|&r| (r, w)));
    }
    balance_report(d, &t, &c, BalanceScope::PostMatch, bins)
}
