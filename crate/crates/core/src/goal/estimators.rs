use crate::error::{Error, Result};
use crate::scalar::Real;

use super::pair::{ModelPair, StateVector};

/// `R(u₀; q) = F(q) − B(u₀; q)`
pub fn residual<T: Real, P: ModelPair<T>>(pair: &P, u0: &P::State, q: &P::State) -> Result<T> {
    Ok(residual_dual(pair, u0)?.dot(q))
}

/// Dual vector of `R(u₀; ·)`.
pub fn residual_dual<T: Real, P: ModelPair<T>>(pair: &P, u0: &P::State) -> Result<P::State> {
    let mut r = pair.load()?;
    r.axpy(-T::one(), &pair.fine_operator(u0)?);
    Ok(r)
}

/// `R̄(u₀; v, p₀) = Q′(u₀; v) − B′(u₀; v, p₀)`
pub fn adjoint_residual<T: Real, P: ModelPair<T>>(
    pair: &P,
    u0: &P::State,
    v: &P::State,
    p0: &P::State,
) -> Result<T> {
    Ok(adjoint_residual_dual(pair, u0, p0)?.dot(v))
}

/// Dual vector of `R̄(u₀; ·, p₀)`.
pub fn adjoint_residual_dual<T: Real, P: ModelPair<T>>(
    pair: &P,
    u0: &P::State,
    p0: &P::State,
) -> Result<P::State> {
    let mut r = pair.qoi_gradient(u0);
    r.axpy(-T::one(), &pair.tangent_transpose_apply(u0, p0)?);
    Ok(r)
}

/// Approximate forward and adjoint errors `(ê₀, ε̂₀)`.
#[derive(Debug, Clone)]
pub struct ApproximateErrors<S> {
    pub e_hat: S,
    pub eps_hat: S,
    /// Newton iterations spent on the quadratic forward error problem.
    pub newton_iterations: usize,
}

/// `B′(u₀; ê₀, q) = R(u₀; q)` only; the calibration path needs nothing else.
pub fn solve_error_forward<T: Real, P: ModelPair<T>>(pair: &P, u0: &P::State) -> Result<P::State> {
    pair.solve_tangent(u0, None, &residual_dual(pair, u0)?)
}

/// Two decoupled linearized problems for `ê₀` and `ε̂₀`.
pub fn solve_errors_first_order<T: Real, P: ModelPair<T>>(
    pair: &P,
    u0: &P::State,
    p0: &P::State,
) -> Result<ApproximateErrors<P::State>> {
    let e_hat = solve_error_forward(pair, u0)?;
    let eps_hat = pair.solve_tangent_adjoint(u0, None, &adjoint_residual_dual(pair, u0, p0)?)?;
    Ok(ApproximateErrors {
        e_hat,
        eps_hat,
        newton_iterations: 0,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SecondOrderOptions<T> {
    pub atol: T,
    pub rtol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for SecondOrderOptions<T> {
    fn default() -> Self {
        Self {
            atol: T::lit(1e-12),
            rtol: T::solver_rtol(),
            max_iter: 25,
        }
    }
}

/// Quadratic error problem for `ê₀` by Newton from the first-order `ê₀`,
/// then the linear problem for `ε̂₀` with `ê₀`-dependent coefficients.
pub fn solve_errors_second_order<T: Real, P: ModelPair<T>>(
    pair: &P,
    u0: &P::State,
    p0: &P::State,
    opts: &SecondOrderOptions<T>,
) -> Result<ApproximateErrors<P::State>> {
    let r = residual_dual(pair, u0)?;
    let r_norm = r.norm();
    let half = T::lit(0.5);
    let tol = opts.atol + opts.rtol * r_norm;

    let mut e = pair.solve_tangent(u0, None, &r)?;
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        // G(e) = B′(u₀; e, ·) + ½ B″(u₀; e, e, ·) − R(u₀; ·)
        let mut g = pair.tangent_apply(u0, &e)?;
        g.axpy(half, &pair.hessian_apply(u0, &e, &e)?);
        g.axpy(-T::one(), &r);
        let g_norm = g.norm();
        history.push(g_norm.as_f64());
        if !g_norm.is_finite() {
            return Err(Error::NonConvergence {
                reason: "quadratic error residual is not finite".into(),
                history,
            });
        }
        if g_norm <= tol {
            break;
        }
        if iterations == opts.max_iter {
            return Err(Error::NonConvergence {
                reason: format!("quadratic error problem not solved in {} iterations", opts.max_iter),
                history,
            });
        }
        g.scale(-T::one());
        let delta = pair.solve_tangent(u0, Some(&e), &g)?;
        e.axpy(T::one(), &delta);
        iterations += 1;
    }

    let mut rhs = adjoint_residual_dual(pair, u0, p0)?;
    rhs.axpy(-T::one(), &pair.hessian_transpose_apply(u0, &e, p0)?);
    rhs.axpy(T::one(), &pair.qoi_hessian_apply(u0, &e));
    let eps_hat = pair.solve_tangent_adjoint(u0, Some(&e), &rhs)?;
    Ok(ApproximateErrors {
        e_hat: e,
        eps_hat,
        newton_iterations: iterations,
    })
}

/// `Ξ₁ = R(u₀; p)`
pub fn estimate_xi1<T: Real, P: ModelPair<T>>(pair: &P, u0: &P::State, p: &P::State) -> Result<T> {
    residual(pair, u0, p)
}

/// `Ξ₂ = R(u₀; p₀ + ε) − Q″(u₀; e, e) + B″(u₀; e, e, p₀ + ε/2)`
pub fn estimate_xi2<T: Real, P: ModelPair<T>>(
    pair: &P,
    u0: &P::State,
    p0: &P::State,
    e: &P::State,
    eps: &P::State,
) -> Result<T> {
    let p = p0.combine(T::one(), eps);
    let p_mid = p0.combine(T::lit(0.5), eps);
    let hess = pair.hessian_apply(u0, e, e)?;
    Ok(residual(pair, u0, &p)? - pair.qoi_second_derivative(u0, e, e) + hess.dot(&p_mid))
}

/// `Q′(u₀; ê₀)`
pub fn estimate_q_ehat<T: Real, P: ModelPair<T>>(pair: &P, u0: &P::State, e_hat: &P::State) -> T {
    pair.qoi_derivative(u0, e_hat)
}
