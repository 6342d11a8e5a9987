//! Ordinary least squares, goodness of fit and moment helpers.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::linalg;

/// An affine least-squares fit `y ~ intercept + x . coefficients`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub r2: f64,
    /// `None` when `n_obs <= p + 1`.
    pub r2_adj: Option<f64>,
    pub n_obs: usize,
    pub rank_deficient: bool,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + linalg::dot(&self.coefficients, x)
    }
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Population variance (divides by the count).
pub fn variance(values: &[f64]) -> Result<f64> {
    let m = mean(values)?;
    Ok(values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64)
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> Result<f64> {
    variance(values).map(libm::sqrt)
}

/// `1 - (1 - r2) (n - 1) / (n - p - 1)`; requires `n > p + 1`.
pub fn adjusted_r2(r2: f64, n: usize, p: usize) -> Result<f64> {
    if n <= p + 1 {
        return Err(Error::InsufficientDegreesOfFreedom { n, p });
    }
    Ok(1.0 - (1.0 - r2) * (n - 1) as f64 / (n - p - 1) as f64)
}

/// Least-squares fit with intercept on a row-major `n x p` design.
///
/// The intercept is left unpenalized: columns are centered, and the centered
/// problem is solved for the minimum-norm coefficient vector. A zero-variance
/// outcome is treated as perfectly explained (`r2 = 1`).
pub fn ols_fit(x: &[f64], p: usize, y: &[f64]) -> Result<LinearFit> {
    let n = y.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if x.len() != n * p {
        return Err(Error::ShapeMismatch(alloc::format!(
            "design has {} values, expected {n} x {p}",
            x.len()
        )));
    }
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut x_mean = alloc::vec![0.0; p];
    for row in x.chunks_exact(p.max(1)).take(n) {
        for (m, v) in x_mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m /= n as f64);

    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..n).map(|i| x[i * p + j] - x_mean[j]).collect())
        .collect();
    let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let sol = linalg::lstsq(cols, yc);

    let intercept = y_mean - linalg::dot(&x_mean, &sol.coefficients);
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for i in 0..n {
        let row = &x[i * p..(i + 1) * p];
        let r = y[i] - intercept - linalg::dot(row, &sol.coefficients);
        ssr += r * r;
        sst += (y[i] - y_mean) * (y[i] - y_mean);
    }
    let r2 = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
    Ok(LinearFit {
        intercept,
        coefficients: sol.coefficients,
        r2,
        r2_adj: adjusted_r2(r2, n, p).ok(),
        n_obs: n,
        rank_deficient: sol.rank < p,
    })
}

/// Fits `ols_fit` on the listed dataset rows.
pub fn ols_fit_rows(d: &Dataset, rows: &[usize]) -> Result<LinearFit> {
    let p = d.feature_count();
    let mut x = Vec::with_capacity(rows.len() * p);
    let mut y = Vec::with_capacity(rows.len());
    for &r in rows {
        x.extend_from_slice(d.row(r));
        y.push(d.y(r));
    }
    ols_fit(&x, p, &y)
}

/// Absolute OLS coefficients from regressing `y` on all features over every
/// unit (treated and control). The intercept is not part of the result.
pub fn feature_weights(d: &Dataset) -> Result<Vec<f64>> {
    let rows: Vec<usize> = (0..d.len()).collect();
    Ok(ols_fit_rows(d, &rows)?
        .coefficients
        .into_iter()
        .map(f64::abs)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let fit = ols_fit(&x, 1, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn constant_outcome_has_unit_r2() {
        let fit = ols_fit(&[0.0, 1.0, 2.0, 3.0], 1, &[4.0; 4]).unwrap();
        assert_eq!(fit.r2, 1.0);
        assert_abs_diff_eq!(fit.coefficients[0], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn three_point_regression() {
        // closed form: slope = Sxy/Sxx = 1/2, intercept = 2/3 - 1/2 = 1/6
        let fit = ols_fit(&[0.0, 1.0, 2.0], 1, &[0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.intercept, 1.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2, 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.r2_adj.unwrap(), 0.5, epsilon = 1e-12);
        let two = ols_fit(&[0.0, 1.0], 1, &[0.0, 1.0]).unwrap();
        assert_eq!(two.r2_adj, None);
    }

    #[test]
    fn empty_input() {
        assert_eq!(ols_fit(&[], 1, &[]).unwrap_err(), Error::EmptyInput);
        assert_eq!(std_dev(&[]).unwrap_err(), Error::EmptyInput);
    }

    #[test]
    fn adjusted_r2_values() {
        assert_eq!(adjusted_r2(1.0, 12, 3).unwrap(), 1.0);
        assert_abs_diff_eq!(
            adjusted_r2(0.9, 30, 2).unwrap(),
            1.0 - 0.1 * 29.0 / 27.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(adjusted_r2(0.9, 30, 2).unwrap(), 0.892593, epsilon = 1e-6);
        assert_eq!(
            adjusted_r2(0.5, 10, 9).unwrap_err(),
            Error::InsufficientDegreesOfFreedom { n: 10, p: 9 }
        );
    }

    #[test]
    fn population_std() {
        assert_eq!(std_dev(&[5.0, 5.0, 5.0]).unwrap(), 0.0);
        assert_eq!(std_dev(&[0.0, 0.0, 10.0, 10.0]).unwrap(), 5.0);
        assert_abs_diff_eq!(std_dev(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 1.118034, epsilon = 1e-6);
    }

    #[test]
    fn rank_deficient_flag() {
        // second column is a copy of the first
        let x = vec![0.0, 0.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0];
        let fit = ols_fit(&x, 2, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!(fit.rank_deficient);
        assert_abs_diff_eq!(fit.coefficients[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[1], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    fn ds(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
        let n = rows.len();
        let p = rows[0].len();
        let names = (1..=p).map(|j| alloc::format!("x{j}")).collect();
        Dataset::new((0..n).map(|i| i == 0).collect(), rows, y, names).unwrap()
    }

    #[test]
    fn weights_recover_slope() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| vec![(i as f64) / 19.0, ((i * 7) % 5) as f64 / 4.0])
            .collect();
        let y = rows.iter().map(|r| 3.0 * r[0]).collect();
        let w = feature_weights(&ds(rows, y)).unwrap();
        assert_abs_diff_eq!(w[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(w[1], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn weights_are_magnitudes() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y = rows.iter().map(|r| -4.0 * r[0] + 1.0).collect();
        let w = feature_weights(&ds(rows, y)).unwrap();
        assert_abs_diff_eq!(w[0], 4.0, epsilon = 1e-10);
    }

    #[test]
    fn constant_outcome_gives_zero_weights() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let w = feature_weights(&ds(rows, vec![2.5; 10])).unwrap();
        assert!(w.iter().all(|&v| v.abs() < 1e-12));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn design() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
            (1usize..5).prop_flat_map(|p| {
                let n = p + 8;
                (
                    Just(p),
                    proptest::collection::vec(-5.0f64..5.0, n * p),
                    proptest::collection::vec(-5.0f64..5.0, n),
                )
            })
        }

        proptest! {
            #[test]
            fn residuals_orthogonal((p, x, y) in design()) {
                let fit = ols_fit(&x, p, &y).unwrap();
                prop_assume!(!fit.rank_deficient);
                let n = y.len();
                let res: Vec<f64> = (0..n).map(|i| y[i] - fit.predict(&x[i*p..(i+1)*p])).collect();
                prop_assert!(res.iter().sum::<f64>().abs() < 1e-8);
                for j in 0..p {
                    let d: f64 = (0..n).map(|i| res[i] * x[i*p + j]).sum();
                    prop_assert!(d.abs() < 1e-8, "column {} dot {}", j, d);
                }
            }

            #[test]
            fn r2_invariant_under_affine_rescale((p, x, y) in design(), scale in 0.1f64..10.0, shift in -3.0f64..3.0) {
                let fit = ols_fit(&x, p, &y).unwrap();
                prop_assume!(!fit.rank_deficient);
                let mut x2 = x.clone();
                for i in 0..y.len() {
                    x2[i * p] = x2[i * p] * scale + shift;
                }
                let fit2 = ols_fit(&x2, p, &y).unwrap();
                prop_assert!((fit.r2 - fit2.r2).abs() < 1e-9);
            }

            #[test]
            fn adjusted_below_raw(r2 in -2.0f64..0.999, n in 3usize..200, p in 1usize..10) {
                prop_assume!(n > p + 1);
                prop_assert!(adjusted_r2(r2, n, p).unwrap() < r2);
            }
        }
    }
}
