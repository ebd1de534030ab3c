//! Quasi-Newton (BFGS) minimization for small smooth problems.

use thiserror::Error;

/// A smooth objective. The default gradient is a central difference.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        numeric_gradient(|p| self.value(p), x, grad);
    }
}

/// Wraps a closure; gradients are taken numerically.
pub struct NumericGradient<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Objective for NumericGradient<F> {
    fn value(&self, x: &[f64]) -> f64 {
        (self.0)(x)
    }
}

/// Wraps a value closure and an analytic gradient closure.
pub struct WithGradient<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for WithGradient<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], &mut [f64]),
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64], grad: &mut [f64]) {
        (self.gradient)(x, grad)
    }
}

/// Central differences with step `1e-6 * max(1, |x_i|)`.
pub fn numeric_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], grad: &mut [f64]) {
    let mut p = x.to_vec();
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        p[i] = x[i] + h;
        let up = f(&p);
        p[i] = x[i] - h;
        let down = f(&p);
        p[i] = x[i];
        grad[i] = (up - down) / (2.0 * h);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizeOptions {
    /// Stop when the largest gradient component is at most this.
    pub grad_tol: f64,
    /// Stop when a step moves no coordinate by more than this (relative).
    pub step_tol: f64,
    pub max_iter: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            step_tol: 1e-10,
            max_iter: 1000,
        }
    }
}

impl MinimizeOptions {
    pub fn with_tol(grad_tol: f64) -> Self {
        Self {
            grad_tol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    StepSize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("objective is not finite at the starting point (value {value})")]
    NonFiniteStart { value: f64 },

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e}, value {value})")]
    NoConvergence {
        best: Vec<f64>,
        value: f64,
        grad_norm: f64,
        iterations: usize,
    },

    #[error("invalid tolerance {0}")]
    InvalidTolerance(f64),
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `objective` from `init` with BFGS and a backtracking line search.
///
/// Deterministic for fixed inputs. The returned point satisfies either the
/// gradient tolerance or the step-size tolerance.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    init: &[f64],
    options: &MinimizeOptions,
) -> Result<Minimum, OptimError> {
    if !(options.grad_tol > 0.0) {
        return Err(OptimError::InvalidTolerance(options.grad_tol));
    }
    let n = init.len();
    let mut x = init.to_vec();
    let mut fx = objective.value(&x);
    if !fx.is_finite() {
        return Err(OptimError::NonFiniteStart { value: fx });
    }
    let mut g = vec![0.0; n];
    objective.gradient(&x, &mut g);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteStart { value: fx });
    }

    // Inverse Hessian approximation, row-major.
    let mut h = identity(n);
    let mut fresh = true;
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..options.max_iter {
        let gnorm = inf_norm(&g);
        if gnorm <= options.grad_tol {
            return Ok(Minimum {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                termination: Termination::Gradient,
            });
        }

        for i in 0..n {
            p[i] = -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>();
        }
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
            slope = dot(&g, &p);
        }
        // Keep the first trial step bounded.
        let xscale = inf_norm(&x).max(1.0);
        let plen = inf_norm(&p);
        let mut alpha = if plen > 10.0 * xscale {
            10.0 * xscale / plen
        } else {
            1.0
        };

        let mut accepted = false;
        let mut f_new = f64::NAN;
        for _ in 0..80 {
            for i in 0..n {
                x_new[i] = x[i] + alpha * p[i];
            }
            f_new = objective.value(&x_new);
            if f_new.is_finite() && f_new <= fx + 1e-4 * alpha * slope {
                accepted = true;
                break;
            }
            // Quadratic interpolation, safeguarded.
            let next = if f_new.is_finite() {
                let denom = 2.0 * (f_new - fx - alpha * slope);
                if denom > 0.0 {
                    (-slope * alpha * alpha / denom).clamp(0.1 * alpha, 0.5 * alpha)
                } else {
                    0.5 * alpha
                }
            } else {
                0.25 * alpha
            };
            alpha = next;
        }

        if !accepted {
            if !fresh {
                h = identity(n);
                fresh = true;
                continue;
            }
            // No decrease along steepest descent at working precision.
            return Ok(Minimum {
                x,
                value: fx,
                grad_norm: gnorm,
                iterations: iter,
                termination: Termination::StepSize,
            });
        }

        objective.gradient(&x_new, &mut g_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            h = identity(n);
            fresh = true;
            continue;
        }
        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;

        let step = inf_norm(&s);
        if step <= options.step_tol * inf_norm(&x).max(1.0) {
            return Ok(Minimum {
                grad_norm: inf_norm(&g),
                x,
                value: fx,
                iterations: iter + 1,
                termination: Termination::StepSize,
            });
        }

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }
    }

    Err(OptimError::NoConvergence {
        grad_norm: inf_norm(&g),
        best: x,
        value: fx,
        iterations: options.max_iter,
    })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H ← (I - ρsyᵀ) H (I - ρysᵀ) + ρssᵀ`
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] +=
                -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    fn rosenbrock_grad(x: &[f64], g: &mut [f64]) {
        g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
        g[1] = 200.0 * (x[1] - x[0] * x[0]);
    }

    #[test]
    fn quadratic_minimum() {
        let f = NumericGradient(|x: &[f64]| (x[0] - 2.0).powi(2));
        let m = minimize(&f, &[0.0], &MinimizeOptions::default()).unwrap();
        assert!((m.x[0] - 2.0).abs() < 1e-8, "{:?}", m);
    }

    #[test]
    fn rosenbrock_analytic() {
        let f = WithGradient {
            value: rosenbrock,
            gradient: rosenbrock_grad,
        };
        let m = minimize(&f, &[-1.2, 1.0], &MinimizeOptions::with_tol(1e-9)).unwrap();
        assert!(
            (m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            m
        );
    }

    #[test]
    fn rosenbrock_numeric() {
        let f = NumericGradient(rosenbrock);
        let m = minimize(&f, &[-1.2, 1.0], &MinimizeOptions::with_tol(1e-8)).unwrap();
        assert!(
            (m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6,
            "{:?}",
            m
        );
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let f = NumericGradient(|x: &[f64]| if x[0] == 0.0 { f64::NAN } else { x[0] * x[0] });
        assert!(matches!(
            minimize(&f, &[0.0], &MinimizeOptions::default()),
            Err(OptimError::NonFiniteStart { .. })
        ));
    }

    #[test]
    fn iteration_budget_reports_best_iterate() {
        let f = WithGradient {
            value: rosenbrock,
            gradient: rosenbrock_grad,
        };
        let opts = MinimizeOptions {
            max_iter: 3,
            ..MinimizeOptions::with_tol(1e-12)
        };
        match minimize(&f, &[-1.2, 1.0], &opts) {
            Err(OptimError::NoConvergence {
                best, iterations, ..
            }) => {
                assert_eq!(best.len(), 2);
                assert_eq!(iterations, 3);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn restart_from_optimum_is_idempotent() {
        let f = WithGradient {
            value: rosenbrock,
            gradient: rosenbrock_grad,
        };
        let opts = MinimizeOptions::with_tol(1e-9);
        let first = minimize(&f, &[-1.2, 1.0], &opts).unwrap();
        let second = minimize(&f, &first.x, &opts).unwrap();
        for (a, b) in first.x.iter().zip(&second.x) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic() {
        let f = NumericGradient(rosenbrock);
        let a = minimize(&f, &[-1.2, 1.0], &MinimizeOptions::default()).unwrap();
        let b = minimize(&f, &[-1.2, 1.0], &MinimizeOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
