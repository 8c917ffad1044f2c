//! Box-constrained projected Newton minimizer (Bertsekas-style active set with
//! an Armijo search along the projection arc).

use nalgebra::{DMatrix, DVector};

/// Objective value with gradient and row-major Hessian.
#[derive(Debug, Clone)]
pub struct Eval {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
}

pub trait Objective {
    fn dim(&self) -> usize;
    /// `+∞` outside the feasible set.
    fn value(&self, x: &[f64]) -> f64;
    fn eval(&self, x: &[f64]) -> Eval;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Stop once the projected gradient satisfies ‖·‖_∞ ≤ `grad_tol · scale`.
    pub grad_tol: f64,
    pub scale: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { grad_tol: 1e-7, scale: 1.0, max_iter: 500 }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
    pub projected_grad: f64,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(*l, *u);
    }
}

fn projected_grad_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((xi, gi), (l, u))| (xi - (xi - gi).clamp(*l, *u)).abs())
        .fold(0.0, f64::max)
}

/// Solves `(H + τI) d = −g` on the free coordinates, growing τ until the
/// shifted matrix is positive definite.
fn newton_direction(hess: &[f64], grad: &[f64], free: &[usize], d: usize) -> Option<Vec<f64>> {
    let m = free.len();
    if m == 0 {
        return Some(Vec::new());
    }
    let h = DMatrix::from_fn(m, m, |i, j| {
        let a = hess[free[i] * d + free[j]];
        let b = hess[free[j] * d + free[i]];
        0.5 * (a + b)
    });
    let g = DVector::from_iterator(m, free.iter().map(|&i| -grad[i]));
    let diag_max = (0..m).map(|i| h[(i, i)].abs()).fold(0.0, f64::max).max(1e-12);
    let mut tau = 0.0;
    for _ in 0..30 {
        let shifted = &h + DMatrix::identity(m, m) * tau;
        if let Some(ch) = shifted.cholesky() {
            let sol = ch.solve(&g);
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol.iter().copied().collect());
            }
        }
        tau = if tau == 0.0 { 1e-10 * diag_max } else { tau * 10.0 };
    }
    None
}

/// Relative size of the Newton decrement below which the predicted gain is
/// lost in the rounding error of the objective.
const DECREMENT_TOL: f64 = 1e-12;

/// Minimizes `obj` over the box `[lower, upper]` from `x0` (projected first).
/// Converged means the projected gradient is within tolerance, or the Newton
/// decrement on the free coordinates is below [`DECREMENT_TOL`]`·|f|`.
pub fn minimize<O: Objective + ?Sized>(
    obj: &O,
    lower: &[f64],
    upper: &[f64],
    x0: &[f64],
    opts: &NewtonOptions,
) -> Minimum {
    let d = obj.dim();
    let mut x = x0.to_vec();
    project(&mut x, lower, upper);
    let tol = opts.grad_tol * opts.scale.max(1.0);

    let mut ev = obj.eval(&x);
    if !ev.value.is_finite() {
        return Minimum { x, value: f64::INFINITY, converged: false, iterations: 0, projected_grad: f64::INFINITY };
    }
    let mut pg = projected_grad_norm(&x, &ev.grad, lower, upper);
    let mut iterations = 0;
    let mut resolved = false;

    while iterations < opts.max_iter {
        if pg <= tol {
            break;
        }
        iterations += 1;

        let eps = pg.min(1e-8);
        let mut free = Vec::with_capacity(d);
        let mut active = Vec::new();
        for i in 0..d {
            let at_lower = x[i] <= lower[i] + eps && ev.grad[i] > 0.0;
            let at_upper = x[i] >= upper[i] - eps && ev.grad[i] < 0.0;
            if at_lower || at_upper {
                active.push(i);
            } else {
                free.push(i);
            }
        }

        let mut dir = vec![0.0; d];
        match newton_direction(&ev.hess, &ev.grad, &free, d) {
            Some(step) => {
                let decrement: f64 = free.iter().zip(&step).map(|(&i, s)| -ev.grad[i] * s).sum();
                if decrement >= 0.0 && decrement <= DECREMENT_TOL * ev.value.abs().max(1.0) {
                    resolved = true;
                    break;
                }
                for (k, &i) in free.iter().enumerate() {
                    dir[i] = step[k];
                }
            }
            None => {
                for &i in &free {
                    dir[i] = -ev.grad[i] / ev.hess[i * d + i].abs().max(1e-12);
                }
            }
        }
        for &i in &active {
            dir[i] = -ev.grad[i] / ev.hess[i * d + i].abs().max(1e-12);
        }

        let next = line_search(obj, &x, &ev, &dir, lower, upper).or_else(|| {
            // projected steepest descent as a fallback
            let scale = (0..d).map(|i| ev.hess[i * d + i].abs()).fold(0.0, f64::max).max(1e-12);
            let sd: Vec<f64> = ev.grad.iter().map(|g| -g / scale).collect();
            line_search(obj, &x, &ev, &sd, lower, upper)
        });
        let Some(next) = next else { break };
        let stalled = (ev.value - obj.value(&next)).abs() <= 1e-15 * ev.value.abs().max(1.0);
        x = next;
        ev = obj.eval(&x);
        pg = projected_grad_norm(&x, &ev.grad, lower, upper);
        if stalled && pg > tol {
            break;
        }
    }

    Minimum { converged: pg <= tol || resolved, value: ev.value, x, iterations, projected_grad: pg }
}

fn line_search<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    ev: &Eval,
    dir: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Option<Vec<f64>> {
    const ARMIJO: f64 = 1e-4;
    let mut alpha = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..50 {
        for i in 0..x.len() {
            trial[i] = x[i] + alpha * dir[i];
        }
        project(&mut trial, lower, upper);
        let slope: f64 = trial.iter().zip(x).zip(&ev.grad).map(|((t, xi), g)| g * (t - xi)).sum();
        if slope < 0.0 {
            let f = obj.value(&trial);
            if f.is_finite() && f <= ev.value + ARMIJO * slope {
                return Some(trial);
            }
        } else if trial.iter().zip(x).all(|(t, xi)| t == xi) {
            return None;
        }
        alpha *= 0.5;
    }
    None
}
