//! Dense least-squares kernel: Householder QR followed by a one-sided Jacobi
//! SVD of the triangular factor, giving the minimum-norm solution when the
//! design is rank deficient.

use alloc::vec;
use alloc::vec::Vec;

const MAX_SWEEPS: usize = 60;

pub(crate) struct LstsqSolution {
    pub coefficients: Vec<f64>,
    pub rank: usize,
}

/// Minimum-norm solution of `min ||A b - y||` for a column-major `n x p` matrix.
/// `cols[j]` holds column `j`. Both `cols` and `y` are consumed as workspace.
pub(crate) fn lstsq(mut cols: Vec<Vec<f64>>, mut y: Vec<f64>) -> LstsqSolution {
    let p = cols.len();
    let n = y.len();
    if p == 0 {
        return LstsqSolution {
            coefficients: Vec::new(),
            rank: 0,
        };
    }
    let m = n.min(p);
    householder(&mut cols, &mut y, m);

    // upper-trapezoidal factor, rows 0..m
    let r: Vec<Vec<f64>> = cols
        .iter()
        .enumerate()
        .map(|(j, c)| (0..m).map(|i| if i <= j { c[i] } else { 0.0 }).collect())
        .collect();
    let z = &y[..m];

    match jacobi_svd(r.clone()) {
        Some((a, v)) => {
            let sigma: Vec<f64> = a.iter().map(|c| norm(c)).collect();
            let smax = sigma.iter().cloned().fold(0.0, f64::max);
            let tol = smax * (n.max(p) as f64) * f64::EPSILON;
            let mut b = vec![0.0; p];
            let mut rank = 0;
            for k in 0..p {
                if sigma[k] > tol && sigma[k] > 0.0 {
                    rank += 1;
                    // u_k . z / sigma_k with u_k = a_k / sigma_k
                    let coef = dot(&a[k], z) / (sigma[k] * sigma[k]);
                    for (bi, vi) in b.iter_mut().zip(&v[k]) {
                        *bi += coef * vi;
                    }
                }
            }
            LstsqSolution {
                coefficients: b,
                rank,
            }
        }
        None => ridge_fallback(&r, z),
    }
}

fn householder(cols: &mut [Vec<f64>], y: &mut [f64], m: usize) {
    let n = y.len();
    let p = cols.len();
    for k in 0..m.min(n.saturating_sub(1)) {
        let x = &cols[k][k..];
        let xnorm = norm(x);
        if xnorm == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xnorm } else { xnorm };
        let mut v: Vec<f64> = x.to_vec();
        v[0] -= alpha;
        let vnorm = norm(&v);
        if vnorm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vnorm);
        for col in cols.iter_mut().take(p).skip(k) {
            reflect(&v, &mut col[k..]);
        }
        reflect(&v, &mut y[k..]);
    }
}

fn reflect(v: &[f64], x: &mut [f64]) {
    let s = 2.0 * dot(v, x);
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

/// Hestenes one-sided Jacobi. Returns `(A V, V)` with mutually orthogonal
/// columns in `A V`, or `None` if it fails to converge.
#[allow(clippy::type_complexity)]
fn jacobi_svd(mut a: Vec<Vec<f64>>) -> Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let p = a.len();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..p {
            for j in (i + 1)..p {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut a, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            return Some((a, v));
        }
    }
    None
}

fn rotate(m: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = m.split_at_mut(j);
    for (x, y) in lo[i].iter_mut().zip(hi[0].iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Normal equations with a 1e-10 ridge, solved by Cholesky.
fn ridge_fallback(r: &[Vec<f64>], z: &[f64]) -> LstsqSolution {
    let p = r.len();
    let mut g = vec![vec![0.0; p]; p];
    let mut rhs = vec![0.0; p];
    for i in 0..p {
        for j in 0..p {
            g[i][j] = dot(&r[i], &r[j]);
        }
        g[i][i] += 1e-10;
        rhs[i] = dot(&r[i], z);
    }
    // in-place Cholesky, lower triangle
    for j in 0..p {
        let d = g[j][j] - g[j][..j].iter().map(|v| v * v).sum::<f64>();
        let d = libm::sqrt(d.max(f64::MIN_POSITIVE));
        g[j][j] = d;
        for i in (j + 1)..p {
            let s = g[i][j] - dot(&g[i][..j], &g[j][..j]);
            g[i][j] = s / d;
        }
    }
    let mut w = rhs;
    for i in 0..p {
        for k in 0..i {
            w[i] -= g[i][k] * w[k];
        }
        w[i] /= g[i][i];
    }
    for i in (0..p).rev() {
        for k in (i + 1)..p {
            w[i] -= g[k][i] * w[k];
        }
        w[i] /= g[i][i];
    }
    LstsqSolution {
        coefficients: w,
        rank: p,
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}
