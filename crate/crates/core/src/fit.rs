//! Small linear least-squares and quadrature helpers shared by the
//! classifiers.

use nalgebra::{DMatrix, DVector};

use crate::error::{ConfineError, Result};

/// Result of an ordinary least-squares fit `y ~ X beta`.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coefficients: Vec<f64>,
    /// Root-mean-square residual.
    pub rms: f64,
    /// Largest absolute residual.
    pub max_abs: f64,
}

/// Least squares over column-scaled basis vectors. `columns[j][i]` is basis
/// function `j` at sample `i`.
pub fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let n = y.len();
    let m = columns.len();
    if m == 0 || n < m {
        return Err(ConfineError::pre(format!("least squares needs at least {m} samples, got {n}")));
    }
    // equilibrate columns so the SVD threshold is meaningful
    let scales: Vec<f64> = columns
        .iter()
        .map(|c| {
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                norm
            } else {
                1.0
            }
        })
        .collect();
    let a = DMatrix::from_fn(n, m, |i, j| columns[j][i] / scales[j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let beta = svd
        .solve(&b, 1e-13)
        .map_err(|e| ConfineError::pre(format!("least squares failed: {e}")))?;
    let resid = &b - &a * &beta;
    let rms = (resid.iter().map(|r| r * r).sum::<f64>() / n as f64).sqrt();
    let max_abs = resid.iter().fold(0.0_f64, |acc, r| acc.max(r.abs()));
    let coefficients = beta.iter().zip(&scales).map(|(b, s)| b / s).collect();
    Ok(LinearFit { coefficients, rms, max_abs })
}

/// `ln(sum exp(x_i))` without overflow. Returns `-inf` for empty input.
pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(exp(a) + exp(b))`.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Composite Simpson weights on arbitrary increasing nodes. An even number
/// of intervals is handled pairwise with the three-point nonuniform rule; a
/// trailing odd interval gets the matching end correction.
pub fn simpson_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    if n == 2 {
        let h = x[1] - x[0];
        w[0] = h / 2.0;
        w[1] = h / 2.0;
        return w;
    }
    let pairs_end = if (n - 1) % 2 == 0 { n - 1 } else { n - 2 };
    let mut i = 0;
    while i + 2 <= pairs_end {
        let h0 = x[i + 1] - x[i];
        let h1 = x[i + 2] - x[i + 1];
        let hs = h0 + h1;
        w[i] += hs / 6.0 * (2.0 - h1 / h0);
        w[i + 1] += hs * hs * hs / (6.0 * h0 * h1);
        w[i + 2] += hs / 6.0 * (2.0 - h0 / h1);
        i += 2;
    }
    if pairs_end < n - 1 {
        // last interval [x_{n-2}, x_{n-1}] from the parabola through the last three nodes
        let (a, b, c) = (x[n - 3], x[n - 2], x[n - 1]);
        let h0 = b - a;
        let h1 = c - b;
        w[n - 1] += h1 * (2.0 * h1 + 3.0 * h0) / (6.0 * (h0 + h1));
        w[n - 2] += h1 * (h1 + 3.0 * h0) / (6.0 * h0);
        w[n - 3] -= h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
    }
    w
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Composite Gauss–Legendre integral of `f` over `[a, b]`.
pub fn integrate_gl(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize, order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            total += wi * f(mid + 0.5 * h * xi);
        }
    }
    0.5 * h * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn recovers_exact_linear_model() {
        let x: Vec<f64> = (1..=50).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v.ln() + 0.5 * v).collect();
        let cols = vec![vec![1.0; 50], x.iter().map(|v| v.ln()).collect(), x.clone()];
        let fit = least_squares(&cols, &y).unwrap();
        assert_relative_eq!(fit.coefficients[0], 3.0, epsilon = 1e-9);
        assert_relative_eq!(fit.coefficients[1], -2.0, epsilon = 1e-9);
        assert_relative_eq!(fit.coefficients[2], 0.5, epsilon = 1e-9);
        assert!(fit.rms < 1e-10);
    }

    #[test]
    fn simpson_is_exact_for_quadratics_on_graded_nodes() {
        for n in [5usize, 6, 9, 12] {
            let x: Vec<f64> = (0..n).map(|i| 0.3 * 1.2f64.powi(i as i32)).collect();
            let w = simpson_weights(&x);
            let f = |t: f64| 1.0 + t - 2.0 * t * t;
            let fi = |t: f64| t + t * t / 2.0 - 2.0 * t.powi(3) / 3.0;
            let approx: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * f(*xi)).sum();
            let exact = fi(x[n - 1]) - fi(x[0]);
            assert_relative_eq!(approx, exact, max_relative = 1e-12);
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let s: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(14)).sum();
        assert_relative_eq!(s, 2.0 / 15.0, max_relative = 1e-13);
        assert_relative_eq!(w.iter().sum::<f64>(), 2.0, max_relative = 1e-14);
        let v = integrate_gl(|t| t.exp(), 0.0, 1.0, 4, 8);
        assert_relative_eq!(v, std::f64::consts::E - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn log_sum_exp_handles_huge_values() {
        let v = log_sum_exp([1000.0, 1000.0]);
        assert_relative_eq!(v, 1000.0 + 2f64.ln(), max_relative = 1e-15);
        assert_eq!(log_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
        assert_relative_eq!(log_add(0.0, 0.0), 2f64.ln());
    }
}
