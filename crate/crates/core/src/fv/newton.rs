use crate::error::{Error, Result};

use super::linalg::{sparse_linear_solve, CsrMatrix};

/// A square nonlinear system `F(x) = 0` with a sparse Jacobian.
pub trait NonlinearSystem {
    fn dim(&self) -> usize;
    fn residual(&mut self, x: &[f64], out: &mut [f64]) -> Result<()>;
    fn jacobian(&mut self, x: &[f64]) -> Result<&CsrMatrix>;

    /// Matrix of a globally robust fixed-point step, used in place of a
    /// rejected Newton step. `None` falls back to backtracking.
    fn fallback_matrix(&mut self, _x: &[f64]) -> Result<Option<&CsrMatrix>> {
        Ok(None)
    }

    /// Nonlinear correction applied to `x` before each Newton update.
    /// Returns whether `x` changed.
    fn precondition(&mut self, _x: &mut [f64]) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonConfig {
    /// Stop once the max-norm of the residual is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative 2-norm tolerance of each linear solve.
    pub linear_tol: f64,
    /// A Newton step leaving `x >= lower_bound` is rejected.
    pub lower_bound: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: 1e-10, max_iter: 25, linear_tol: 1e-12, lower_bound: f64::NEG_INFINITY }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NewtonStats {
    /// Number of Newton updates performed.
    pub iterations: usize,
    /// Max-norm of the residual at the returned solution.
    pub final_residual: f64,
    /// Max-norm residual before each update and after the last one.
    pub history: Vec<f64>,
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| if x.is_nan() { f64::NAN } else { acc.max(x.abs()) })
}

fn two_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Smallest step fraction tried by the line search.
const MIN_STEP: f64 = 1.0 / 1024.0;

/// Newton iteration from `initial_guess`.
///
/// Each iteration first lets the system correct `x` (see
/// [`NonlinearSystem::precondition`]). The full Newton step is accepted when it keeps `x >= lower_bound` and
/// decreases the residual 2-norm (Armijo). Otherwise the system's fallback
/// step is taken, or, without one, the Newton step is halved down to
/// [`MIN_STEP`]. Near the root full steps pass, so the tail is quadratic.
///
/// At least one update is always taken, so the returned point is the result
/// of a linear solve even when the guess already satisfies the tolerance.
pub fn newton_solve<S: NonlinearSystem + ?Sized>(
    system: &mut S,
    initial_guess: &[f64],
    cfg: &NewtonConfig,
) -> Result<(Vec<f64>, NewtonStats)> {
    let n = system.dim();
    if initial_guess.len() != n {
        return Err(Error::SizeMismatch { expected: n, got: initial_guess.len() });
    }
    let mut x = initial_guess.to_vec();
    let mut r = vec![0.0; n];
    system.residual(&x, &mut r)?;
    let mut stats = NewtonStats { history: vec![max_norm(&r)], ..NewtonStats::default() };
    let mut trial = vec![0.0; n];
    let mut trial_r = vec![0.0; n];

    for it in 1..=cfg.max_iter {
        if system.precondition(&mut x)? {
            system.residual(&x, &mut r)?;
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let merit = two_norm(&r);
        let delta = sparse_linear_solve(system.jacobian(&x)?, &neg_r, cfg.linear_tol)?;

        let mut theta = 1.0;
        let mut fallback_tried = false;
        loop {
            for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&delta) {
                *t = xi + theta * di;
            }
            system.residual(&trial, &mut trial_r)?;
            let admissible = trial.iter().all(|&t| t >= cfg.lower_bound);
            let reduced = two_norm(&trial_r) <= (1.0 - 1e-4 * theta) * merit;
            if (admissible && reduced) || merit == 0.0 {
                break;
            }
            if !fallback_tried {
                fallback_tried = true;
                if let Some(a) = system.fallback_matrix(&x)? {
                    let step = sparse_linear_solve(a, &neg_r, cfg.linear_tol)?;
                    for ((t, xi), di) in trial.iter_mut().zip(&x).zip(&step) {
                        *t = xi + di;
                    }
                    system.residual(&trial, &mut trial_r)?;
                    break;
                }
            }
            if theta <= MIN_STEP {
                break;
            }
            theta *= 0.5;
        }
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut r, &mut trial_r);
        let norm = max_norm(&r);
        stats.iterations = it;
        stats.final_residual = norm;
        stats.history.push(norm);
        if !norm.is_finite() {
            break;
        }
        if norm <= cfg.tol {
            return Ok((x, stats));
        }
    }
    Err(Error::NewtonDivergence {
        iterations: stats.iterations,
        residual: stats.final_residual,
    })
}
