//! The coarse/fine model-pair contract the error estimators are written against.
//!
//! Every form is exposed in its *dual-vector* representation: a state-shaped
//! coefficient array `b` such that the form's value on a test function `q` is
//! the Euclidean pairing `b · q` of coefficient vectors. Scalar forms follow
//! as provided methods.

use crate::error::Result;
use crate::scalar::Real;

/// Discrete function (or its dual) the estimators manipulate.
pub trait StateVector<T: Real>: Clone + Send + Sync {
    fn zeros_like(&self) -> Self;

    /// Euclidean pairing of coefficient arrays.
    fn dot(&self, other: &Self) -> T;

    /// `self += a · x`
    fn axpy(&mut self, a: T, x: &Self);

    fn scale(&mut self, a: T);

    fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    fn combine(&self, a: T, x: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(a, x);
        out
    }
}

/// Fine model `B(u; q) = F(q)` and coarse model `B₀(u₀; q) = F(q)` sharing a
/// load `F` and a quantity of interest `Q`.
pub trait ModelPair<T: Real>: Send + Sync {
    type State: StateVector<T>;

    /// `B(u; ·)`
    fn fine_operator(&self, u: &Self::State) -> Result<Self::State>;

    /// `B₀(u; ·)`
    fn coarse_operator(&self, u: &Self::State) -> Result<Self::State>;

    /// `F(·)`
    fn load(&self) -> Result<Self::State>;

    /// `B′(u; v, ·)`
    fn tangent_apply(&self, u: &Self::State, v: &Self::State) -> Result<Self::State>;

    /// `B′(u; ·, p)`
    fn tangent_transpose_apply(&self, u: &Self::State, p: &Self::State) -> Result<Self::State>;

    /// `B″(u; a, b, ·)`
    fn hessian_apply(&self, u: &Self::State, a: &Self::State, b: &Self::State)
        -> Result<Self::State>;

    /// `B″(u; a, ·, p)`
    fn hessian_transpose_apply(
        &self,
        u: &Self::State,
        a: &Self::State,
        p: &Self::State,
    ) -> Result<Self::State>;

    fn qoi(&self, u: &Self::State) -> T;

    /// `Q′(u; ·)`
    fn qoi_gradient(&self, u: &Self::State) -> Self::State;

    /// `Q″(u; a, ·)`; zero for the linear functionals used here.
    fn qoi_hessian_apply(&self, u: &Self::State, a: &Self::State) -> Self::State {
        let _ = a;
        u.zeros_like()
    }

    fn solve_coarse_forward(&self) -> Result<Self::State>;

    /// `B₀′(u₀; v, p₀) = Q′(u₀; v)` for all `v`.
    fn solve_coarse_adjoint(&self, u0: &Self::State) -> Result<Self::State>;

    fn solve_fine_forward(&self) -> Result<Self::State>;

    /// `B′(u; v, p) = Q′(u; v)` for all `v`.
    fn solve_fine_adjoint(&self, u: &Self::State) -> Result<Self::State>;

    /// Solves `B′(u; x, q) + B″(u; s, x, q) = rhs · q` for all `q`, with
    /// `s` the optional shift (absent means zero).
    fn solve_tangent(
        &self,
        u: &Self::State,
        shift: Option<&Self::State>,
        rhs: &Self::State,
    ) -> Result<Self::State>;

    /// Solves `B′(u; v, x) + B″(u; s, v, x) = rhs · v` for all `v`.
    fn solve_tangent_adjoint(
        &self,
        u: &Self::State,
        shift: Option<&Self::State>,
        rhs: &Self::State,
    ) -> Result<Self::State>;

    /// Fine-model parameter vector θ.
    fn fine_parameters(&self) -> Vec<T>;

    /// Coarse-model parameter vector θ₀.
    fn coarse_parameters(&self) -> Vec<T>;

    /// Same pair with the fine parameters replaced; coarse-side data may be
    /// shared with `self`.
    fn with_fine_parameters(&self, theta: &[T]) -> Result<Self>
    where
        Self: Sized;

    fn form_b(&self, u: &Self::State, q: &Self::State) -> Result<T> {
        Ok(self.fine_operator(u)?.dot(q))
    }

    fn form_b0(&self, u: &Self::State, q: &Self::State) -> Result<T> {
        Ok(self.coarse_operator(u)?.dot(q))
    }

    fn form_f(&self, q: &Self::State) -> Result<T> {
        Ok(self.load()?.dot(q))
    }

    fn form_db(&self, u: &Self::State, v: &Self::State, p: &Self::State) -> Result<T> {
        Ok(self.tangent_apply(u, v)?.dot(p))
    }

    fn form_d2b(
        &self,
        u: &Self::State,
        q: &Self::State,
        v: &Self::State,
        p: &Self::State,
    ) -> Result<T> {
        Ok(self.hessian_apply(u, q, v)?.dot(p))
    }

    fn qoi_derivative(&self, u: &Self::State, v: &Self::State) -> T {
        self.qoi_gradient(u).dot(v)
    }

    fn qoi_second_derivative(&self, u: &Self::State, q: &Self::State, v: &Self::State) -> T {
        self.qoi_hessian_apply(u, q).dot(v)
    }
}
