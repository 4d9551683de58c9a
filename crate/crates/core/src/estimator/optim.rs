//! Damped Gauss-Newton descent on sums of squares with central
//! finite-difference Jacobians.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentConfig {
    pub max_iters: usize,
    /// Stop when an accepted step lowers the objective by less than this fraction.
    pub tol: f64,
    /// Initial damping, relative to the curvature diagonal.
    pub damping: f64,
    /// Sufficient-decrease fraction of the model's predicted reduction.
    pub accept: f64,
    pub max_backtracks: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-8,
            damping: 1e-3,
            accept: 1e-4,
            max_backtracks: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentResult {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Central differences of a scalar function with per-coordinate steps.
pub fn central_gradient(f: &impl Fn(&[f64]) -> f64, x: &[f64], steps: &[f64]) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = steps[i];
        probe[i] = x[i] + h;
        let up = f(&probe);
        probe[i] = x[i] - h;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * h);
    }
    g
}

fn eval<R>(residuals: &R, x: &[f64], buf: &mut Vec<f64>) -> Option<f64>
where
    R: Fn(&[f64], &mut Vec<f64>) -> bool,
{
    buf.clear();
    if !residuals(x, buf) {
        return None;
    }
    let v: f64 = buf.iter().map(|r| r * r).sum();
    v.is_finite().then_some(v)
}

/// Central-difference Jacobian of the residual map; columns whose probes
/// leave the domain are zero.
pub fn central_jacobian<R>(residuals: &R, x: &[f64], m: usize, steps: &[f64]) -> DMatrix<f64>
where
    R: Fn(&[f64], &mut Vec<f64>) -> bool,
{
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = x.to_vec();
    let (mut up, mut down) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for i in 0..n {
        let h = steps[i];
        probe[i] = x[i] + h;
        let ok_up = eval(residuals, &probe, &mut up).is_some() && up.len() == m;
        probe[i] = x[i] - h;
        let ok_down = eval(residuals, &probe, &mut down).is_some() && down.len() == m;
        probe[i] = x[i];
        if ok_up && ok_down {
            for r in 0..m {
                jac[(r, i)] = (up[r] - down[r]) / (2.0 * h);
            }
        }
    }
    jac
}

/// Minimizes `‖r(x)‖²`. `residuals` writes `r(x)` into the buffer and
/// returns `false` outside its domain.
///
/// Each iteration solves `(JᵀJ + μ·diag(JᵀJ)) δ = −Jᵀr`; a step is accepted
/// only if it achieves a fraction of the predicted decrease, otherwise the
/// damping grows and the step shrinks. The trace therefore never increases.
pub fn least_squares<R>(residuals: R, x0: &[f64], steps: &[f64], config: &DescentConfig) -> DescentResult
where
    R: Fn(&[f64], &mut Vec<f64>) -> bool,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = Vec::new();
    let Some(mut fx) = eval(&residuals, &x, &mut r) else {
        return DescentResult { x, value: f64::NAN, trace: vec![f64::NAN], iterations: 0, converged: false };
    };
    let mut trace = vec![fx];
    let mut mu = config.damping;
    let mut iterations = 0;
    let mut converged = false;
    let mut trial_r = Vec::new();

    while iterations < config.max_iters {
        if fx == 0.0 {
            converged = true;
            break;
        }
        let m = r.len();
        let jac = central_jacobian(&residuals, &x, m, steps);
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        if g.iter().all(|v| *v == 0.0) {
            converged = true;
            break;
        }
        let a = jac.tr_mul(&jac);
        let max_diag = a.diagonal().max().max(f64::MIN_POSITIVE);
        let mut accepted = None;
        for _ in 0..config.max_backtracks {
            let mut damped = a.clone();
            for i in 0..n {
                damped[(i, i)] += mu * (a[(i, i)] + 1e-12 * max_diag);
            }
            let Some(chol) = damped.cholesky() else {
                mu *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let predicted = -(2.0 * g.dot(&delta) + delta.dot(&(&a * &delta)));
            let trial: Vec<f64> = x.iter().zip(delta.iter()).map(|(xi, di)| xi + di).collect();
            if let Some(ft) = eval(&residuals, &trial, &mut trial_r) {
                if predicted > 0.0 && fx - ft >= config.accept * predicted && trial_r.len() == m {
                    accepted = Some((trial, ft));
                    mu = (mu / 3.0).max(1e-12);
                    break;
                }
            }
            mu *= 4.0;
        }
        let Some((x_new, f_new)) = accepted else {
            converged = true;
            break;
        };
        iterations += 1;
        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        std::mem::swap(&mut r, &mut trial_r);
        trace.push(fx);
        if decrease <= config.tol * (fx + decrease) {
            converged = true;
            break;
        }
    }
    DescentResult { x, value: fx, trace, iterations, converged }
}
