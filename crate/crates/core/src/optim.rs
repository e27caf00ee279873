//! Quasi-Newton minimization used for optimum-score estimation.

use alloc::vec;
use alloc::vec::Vec;

// Unused when std is linked elsewhere in the build graph, which supplies
// inherent float methods.
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Stop when the largest gradient component falls below this value.
    pub grad_tol: f64,
    /// Stop when the relative objective decrease of an iteration is below this.
    pub f_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        BfgsOptions {
            max_iter: 400,
            grad_tol: 1e-9,
            f_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f` with BFGS and a backtracking Armijo line search.
///
/// `f(x, grad)` returns the objective and writes the gradient. The returned
/// point never has a larger objective than `x0`.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() {
        return Minimum {
            x,
            value: fx,
            iterations: 0,
            converged: false,
        };
    }
    // Inverse Hessian approximation, row-major.
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut first = true;
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut dir = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for iter in 0..opts.max_iter {
        if inf_norm(&g) < opts.grad_tol {
            return Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: true,
            };
        }
        for i in 0..n {
            dir[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&dir, &g);
        if slope >= 0.0 {
            // Not a descent direction: reset to steepest descent.
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
                dir[i] = -g[i];
            }
            slope = -dot(&g, &g);
        }
        let mut step = if first {
            (1.0 / inf_norm(&g).max(1e-12)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut f_new = fx;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * dir[i];
            }
            f_new = f(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted || f_new >= fx {
            return Minimum {
                x,
                value: fx,
                iterations: iter,
                converged: inf_norm(&g) < opts.grad_tol.sqrt(),
            };
        }
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * (dot(&s, &s).sqrt() * dot(&y, &y).sqrt()).max(1e-300) {
            if first {
                let scale = sy / dot(&y, &y);
                for v in h.iter_mut() {
                    *v *= scale;
                }
                first = false;
            }
            for i in 0..n {
                hy[i] = (0..n).map(|j| h[i * n + j] * y[j]).sum();
            }
            let yhy = dot(&y, &hy);
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] +=
                        rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let decrease = fx - f_new;
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        fx = f_new;
        if decrease <= opts.f_tol * fx.abs().max(1e-300) {
            return Minimum {
                x,
                value: fx,
                iterations: iter + 1,
                converged: true,
            };
        }
    }
    Minimum {
        converged: inf_norm(&g) < opts.grad_tol,
        x,
        value: fx,
        iterations: opts.max_iter,
    }
}
