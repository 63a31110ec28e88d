//! Undamped Newton iteration for discrete nonlinear systems `R(u) = 0`.

use super::solver::{solve_linear, SolverOptions};
use super::sparse::SparseSystem;
use crate::error::{Error, Result};
use crate::scalar::{norm2, Real};

/// A discrete nonlinear system and its Jacobian.
pub trait NonlinearProblem<T: Real> {
    fn residual(&self, u: &[T]) -> Result<Vec<T>>;

    /// Jacobian at `u`, wrapped as a system whose right-hand side is ignored.
    fn jacobian(&self, u: &[T]) -> Result<SparseSystem<T>>;
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions<T> {
    pub atol: T,
    pub rtol: T,
    pub max_iter: usize,
    /// Abort after this many consecutive residual increases.
    pub divergence_window: usize,
    pub linear: SolverOptions<T>,
}

impl<T: Real> Default for NewtonOptions<T> {
    fn default() -> Self {
        Self {
            atol: T::lit(1e-10).max(T::epsilon() * T::lit(1e4)),
            rtol: T::lit(1e-12).max(T::epsilon() * T::lit(10.0)),
            max_iter: 25,
            divergence_window: 5,
            linear: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome<T> {
    pub solution: Vec<T>,
    pub iterations: usize,
    /// Residual 2-norm before each iteration and after the last one.
    pub history: Vec<f64>,
}

pub fn newton_solve<T: Real>(
    problem: &impl NonlinearProblem<T>,
    initial_guess: Vec<T>,
    opts: &NewtonOptions<T>,
) -> Result<NewtonOutcome<T>> {
    let mut u = initial_guess;
    let mut r = problem.residual(&u)?;
    let r0 = norm2(&r);
    let mut history = vec![r0.as_f64()];
    let converged = |rn: T| rn <= opts.atol || rn <= opts.rtol * r0;
    let mut increases = 0;
    for it in 0..opts.max_iter {
        let rn = norm2(&r);
        if !rn.is_finite() {
            return Err(Error::NonConvergence {
                reason: "non-finite residual".into(),
                history,
            });
        }
        if converged(rn) {
            return Ok(NewtonOutcome {
                solution: u,
                iterations: it,
                history,
            });
        }
        let mut system = problem.jacobian(&u)?;
        for (b, &ri) in system.rhs.iter_mut().zip(&r) {
            *b = -ri;
        }
        let delta = solve_linear(&system, &opts.linear)?;
        for (ui, di) in u.iter_mut().zip(delta) {
            *ui += di;
        }
        r = problem.residual(&u)?;
        let new = norm2(&r);
        history.push(new.as_f64());
        increases = if new > rn { increases + 1 } else { 0 };
        if increases >= opts.divergence_window {
            return Err(Error::NonConvergence {
                reason: format!("residual grew over {increases} consecutive steps"),
                history,
            });
        }
    }
    if converged(norm2(&r)) {
        return Ok(NewtonOutcome {
            solution: u,
            iterations: opts.max_iter,
            history,
        });
    }
    Err(Error::NonConvergence {
        reason: format!("iteration cap of {} reached", opts.max_iter),
        history,
    })
}
