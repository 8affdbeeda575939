//! Small dense BFGS minimiser used for the shape update.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfgsConfig {
    /// Stop once the gradient infinity norm falls below this.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Backtracking halvings allowed per line search.
    pub max_line_search: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iter: 100,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimises `f` from `x0`. The closure returns the value and writes the
/// gradient into its second argument; a non-finite value marks the point
/// infeasible and makes the line search back off.
///
/// The returned point never has a larger value than `x0`.
pub fn minimize<F>(mut f: F, x0: &[f64], cfg: &BfgsConfig) -> BfgsResult
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut h = identity(n);
    let mut first = true;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];

    for it in 0..cfg.max_iter {
        if !fx.is_finite() || inf_norm(&g) <= cfg.grad_tol {
            return BfgsResult {
                converged: fx.is_finite(),
                x,
                value: fx,
                grad: g,
                iterations: it,
            };
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i][j] * g[j]).sum::<f64>();
        }
        let mut slope: f64 = dir.iter().zip(&g).map(|(d, gi)| d * gi).sum();
        if slope >= 0.0 {
            // lost positive definiteness: restart along steepest descent
            h = identity(n);
            for i in 0..n {
                dir[i] = -g[i];
            }
            slope = -g.iter().map(|v| v * v).sum::<f64>();
        }
        let mut step = if first {
            (1.0 / inf_norm(&g)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut fnew = f64::NAN;
        for _ in 0..cfg.max_line_search {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            fnew = f(&x_new, &mut g_new);
            if fnew.is_finite() && fnew <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return BfgsResult {
                x,
                value: fx,
                grad: g,
                iterations: it,
                converged: false,
            };
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-12 * norm(&s) * norm(&y) {
            if first {
                let yy: f64 = y.iter().map(|v| v * v).sum();
                let scale = sy / yy;
                h = identity(n);
                h.iter_mut().enumerate().for_each(|(i, row)| row[i] = scale);
            }
            update_inverse(&mut h, &s, &y, sy);
            first = false;
        }
        let decrease = fx - fnew;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = fnew;
        if decrease <= 1e-15 * fx.abs().max(1.0) && inf_norm(&s) <= 1e-14 * (1.0 + inf_norm(&x)) {
            return BfgsResult {
                converged: inf_norm(&g) <= cfg.grad_tol,
                x,
                value: fx,
                grad: g,
                iterations: it + 1,
            };
        }
    }
    BfgsResult {
        converged: inf_norm(&g) <= cfg.grad_tol,
        x,
        value: fx,
        grad: g,
        iterations: cfg.max_iter,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`
fn update_inverse(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i][j] * y[j]).sum()).collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}
