//! Quasi-linear diffusion on the unit square (fine model) against linear
//! diffusion (coarse model), homogeneous Dirichlet data, volume-integral QoI.
//!
//! Fine:   `B(u; v) = ∫ k(u) ∇u·∇v`, `k(u) = κ (1 + α u²)` by default.
//! Coarse: `B₀(u; v) = ∫ κ₀ ∇u·∇v`.
//! Both:   `F(v) = ∫ f v`, `Q(u) = ∫ u`.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble, assemble_vector, load_vector, newton_solve, solve_linear, CsrMatrix, ElementView,
    Field, LocalMatrix, LocalVector, NewtonOptions, NonlinearProblem, SolverOptions,
    SparseSystem, StructuredMesh,
};
use crate::goal::{ModelPair, StateVector};
use crate::scalar::Real;

/// `f(x) = 10 cos²(4πx₁) cos²(4πx₂)`.
pub fn forcing<T: Real>(p: [T; 2]) -> T {
    let w = T::lit(4.0) * T::PI();
    let c1 = (w * p[0]).cos();
    let c2 = (w * p[1]).cos();
    T::lit(10.0) * c1 * c1 * c2 * c2
}

/// Diffusivity law `k(u)` of the fine model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Nonlinearity {
    /// `κ (1 + α u²)`
    #[default]
    Quadratic,
    /// `κ (1 + α u)`
    Linear,
    /// `κ exp(α u)`
    Exponential,
}

impl Nonlinearity {
    /// `(k, k′, k″)` at `u`.
    #[inline]
    pub fn eval<T: Real>(self, kappa: T, alpha: T, u: T) -> (T, T, T) {
        match self {
            Nonlinearity::Quadratic => (
                kappa * (T::one() + alpha * u * u),
                T::lit(2.0) * kappa * alpha * u,
                T::lit(2.0) * kappa * alpha,
            ),
            Nonlinearity::Linear => (kappa * (T::one() + alpha * u), kappa * alpha, T::zero()),
            Nonlinearity::Exponential => {
                let k = kappa * (alpha * u).exp();
                (k, alpha * k, alpha * alpha * k)
            }
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::Quadratic => "quadratic",
            Nonlinearity::Linear => "linear",
            Nonlinearity::Exponential => "exponential",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticFineParams<T> {
    pub kappa: T,
    pub alpha: T,
}

impl<T: Real> EllipticFineParams<T> {
    pub fn new(kappa: T, alpha: T) -> Result<Self> {
        if !(kappa > T::zero() && kappa.is_finite()) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "fine parameters need kappa > 0 and finite alpha, got ({kappa}, {alpha})"
            )));
        }
        Ok(Self { kappa, alpha })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticCoarseParams<T> {
    pub kappa0: T,
}

impl<T: Real> EllipticCoarseParams<T> {
    pub fn new(kappa0: T) -> Result<Self> {
        if !(kappa0 > T::zero() && kappa0.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coarse diffusion must be positive, got {kappa0}"
            )));
        }
        Ok(Self { kappa0 })
    }
}

impl<T: Real> Default for EllipticCoarseParams<T> {
    fn default() -> Self {
        Self {
            kappa0: T::lit(0.25),
        }
    }
}

/// `B′(u; v, p)` and `B″(u; q, v, p)` at one argument set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FormDerivatives<T> {
    pub b_prime: T,
    pub b_double_prime: T,
}

pub type Forcing<T> = Arc<dyn Fn([T; 2]) -> T + Send + Sync>;

/// Data that depends only on the mesh, forcing and coarse model.
struct Shared<T> {
    load: Vec<T>,
    volume_weights: Vec<T>,
    coarse_solution: OnceLock<Field<T>>,
}

#[derive(Clone)]
pub struct EllipticModelPair<T: Real> {
    mesh: Arc<StructuredMesh<T>>,
    fine: EllipticFineParams<T>,
    coarse: EllipticCoarseParams<T>,
    nonlinearity: Nonlinearity,
    forcing: Forcing<T>,
    solver: SolverOptions<T>,
    shared: Arc<Shared<T>>,
}

impl<T: Real> fmt::Debug for EllipticModelPair<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EllipticModelPair")
            .field("nx", &self.mesh.nx())
            .field("ny", &self.mesh.ny())
            .field("fine", &self.fine)
            .field("coarse", &self.coarse)
            .field("nonlinearity", &self.nonlinearity)
            .finish()
    }
}

impl<T: Real> EllipticModelPair<T> {
    pub fn new(
        mesh: Arc<StructuredMesh<T>>,
        coarse: EllipticCoarseParams<T>,
        fine: EllipticFineParams<T>,
        nonlinearity: Nonlinearity,
    ) -> Result<Self> {
        Self::with_forcing(mesh, coarse, fine, nonlinearity, Arc::new(forcing::<T>))
    }

    pub fn with_forcing(
        mesh: Arc<StructuredMesh<T>>,
        coarse: EllipticCoarseParams<T>,
        fine: EllipticFineParams<T>,
        nonlinearity: Nonlinearity,
        forcing: Forcing<T>,
    ) -> Result<Self> {
        let load = load_vector(&mesh, |p| forcing(p))?;
        let volume_weights = load_vector(&mesh, |_| T::one())?;
        Ok(Self {
            mesh,
            fine,
            coarse,
            nonlinearity,
            forcing,
            solver: SolverOptions::default(),
            shared: Arc::new(Shared {
                load,
                volume_weights,
                coarse_solution: OnceLock::new(),
            }),
        })
    }

    pub fn with_solver(mut self, solver: SolverOptions<T>) -> Self {
        self.solver = solver;
        self
    }

    pub fn mesh(&self) -> &Arc<StructuredMesh<T>> {
        &self.mesh
    }

    pub fn fine_params(&self) -> EllipticFineParams<T> {
        self.fine
    }

    pub fn coarse_params(&self) -> EllipticCoarseParams<T> {
        self.coarse
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.nonlinearity
    }

    pub fn forcing_at(&self, p: [T; 2]) -> T {
        (self.forcing)(p)
    }

    fn field(&self, values: Vec<T>) -> Field<T> {
        Field::new(self.mesh.clone(), values).expect("vector sized to the mesh")
    }

    /// Zeroes the entries of constrained nodes, mapping a raw assembled
    /// vector to a functional on the test space.
    fn restricted(&self, mut values: Vec<T>) -> Field<T> {
        for (v, &b) in values.iter_mut().zip(self.mesh.boundary_mask()) {
            if b {
                *v = T::zero();
            }
        }
        self.field(values)
    }

    #[inline]
    fn k(&self, u: T) -> (T, T, T) {
        self.nonlinearity.eval(self.fine.kappa, self.fine.alpha, u)
    }

    fn fine_operator_raw(&self, u: &[T]) -> Result<Vec<T>> {
        assemble_vector(&self.mesh, |el, fe| {
            for q in 0..4 {
                let (k, _, _) = self.k(el.value(q, u));
                let g = el.gradient(q, u);
                let w = k * el.jxw();
                for a in 0..4 {
                    let ga = el.grad(q, a);
                    fe[a] += w * (g[0] * ga[0] + g[1] * ga[1]);
                }
            }
        })
    }

    /// Unconstrained matrix of `B′(u; φ_j, φ_i) + B″(u; s, φ_j, φ_i)`
    /// (row `i` is the test function).
    fn tangent_matrix(&self, u: &[T], shift: Option<&[T]>) -> Result<CsrMatrix<T>> {
        let kernel = |el: &ElementView<'_, T>, ke: &mut LocalMatrix<T>, _: &mut LocalVector<T>| {
            for q in 0..4 {
                let (k, dk, d2k) = self.k(el.value(q, u));
                let gu = el.gradient(q, u);
                let (s, gs) = match shift {
                    Some(s) => (el.value(q, s), el.gradient(q, s)),
                    None => (T::zero(), [T::zero(); 2]),
                };
                let jxw = el.jxw();
                // coefficient of φ_b and of ∇φ_b in the integrand
                let c_val = dk + d2k * s;
                let c_grad = k + dk * s;
                for a in 0..4 {
                    let ga = el.grad(q, a);
                    let gu_ga = gu[0] * ga[0] + gu[1] * ga[1];
                    let gs_ga = gs[0] * ga[0] + gs[1] * ga[1];
                    for b in 0..4 {
                        let gb = el.grad(q, b);
                        let phib = el.phi(q, b);
                        ke[a][b] += jxw
                            * (c_val * phib * gu_ga
                                + dk * phib * gs_ga
                                + c_grad * (gb[0] * ga[0] + gb[1] * ga[1]));
                    }
                }
            }
        };
        Ok(assemble(&self.mesh, &kernel)?.matrix)
    }

    fn constrained_solve(&self, matrix: CsrMatrix<T>, rhs: Vec<T>, symmetric: bool) -> Result<Field<T>> {
        let mut sys = SparseSystem::new(matrix, rhs)?.with_symmetric(symmetric);
        sys.apply_dirichlet(self.mesh.boundary_mask(), |_| T::zero());
        Ok(self.field(solve_linear(&sys, &self.solver)?))
    }

    fn coarse_matrix(&self) -> Result<CsrMatrix<T>> {
        let k0 = self.coarse.kappa0;
        crate::fem::assemble_matrix(&self.mesh, |el, ke| {
            for a in 0..4 {
                for b in 0..4 {
                    ke[a][b] = k0 * el.reference.stiffness[a][b];
                }
            }
        })
    }

    /// `B′(u; v, p)` and `B″(u; q, v, p)`.
    pub fn fine_form_derivatives(
        &self,
        u: &Field<T>,
        v: &Field<T>,
        p: &Field<T>,
        q: &Field<T>,
    ) -> Result<FormDerivatives<T>> {
        Ok(FormDerivatives {
            b_prime: self.form_db(u, v, p)?,
            b_double_prime: self.form_d2b(u, q, v, p)?,
        })
    }

    /// Coarse solve with the QoI weights as the load, i.e. the forward
    /// problem `B₀(w; v) = Q(v)`.
    pub fn solve_coarse_with_volume_load(&self) -> Result<Field<T>> {
        self.constrained_solve(self.coarse_matrix()?, self.shared.volume_weights.clone(), true)
    }
}

struct FineProblem<'a, T: Real> {
    pair: &'a EllipticModelPair<T>,
}

impl<T: Real> NonlinearProblem<T> for FineProblem<'_, T> {
    fn residual(&self, u: &[T]) -> Result<Vec<T>> {
        let mut r = self.pair.fine_operator_raw(u)?;
        for (i, ri) in r.iter_mut().enumerate() {
            *ri = if self.pair.mesh.is_boundary(i) {
                u[i]
            } else {
                *ri - self.pair.shared.load[i]
            };
        }
        Ok(r)
    }

    fn jacobian(&self, u: &[T]) -> Result<SparseSystem<T>> {
        let j = self.pair.tangent_matrix(u, None)?;
        let mut sys = SparseSystem::new(j, vec![T::zero(); u.len()])?;
        sys.apply_dirichlet(self.pair.mesh.boundary_mask(), |_| T::zero());
        Ok(sys)
    }
}

impl<T: Real> StateVector<T> for Field<T> {
    fn zeros_like(&self) -> Self {
        Field::zeros(self.mesh().clone())
    }

    fn dot(&self, other: &Self) -> T {
        crate::scalar::dot(self.values(), other.values())
    }

    fn axpy(&mut self, a: T, x: &Self) {
        crate::scalar::axpy(self.values_mut(), a, x.values());
    }

    fn scale(&mut self, a: T) {
        for v in self.values_mut() {
            *v *= a;
        }
    }
}

impl<T: Real> ModelPair<T> for EllipticModelPair<T> {
    type State = Field<T>;

    fn fine_operator(&self, u: &Field<T>) -> Result<Field<T>> {
        Ok(self.restricted(self.fine_operator_raw(u.values())?))
    }

    fn coarse_operator(&self, u: &Field<T>) -> Result<Field<T>> {
        let k0 = self.coarse.kappa0;
        let uv = u.values();
        let raw = assemble_vector(&self.mesh, |el, fe| {
            let local = el.gather(uv);
            for a in 0..4 {
                for b in 0..4 {
                    fe[a] += k0 * el.reference.stiffness[a][b] * local[b];
                }
            }
        })?;
        Ok(self.restricted(raw))
    }

    fn load(&self) -> Result<Field<T>> {
        Ok(self.restricted(self.shared.load.clone()))
    }

    fn tangent_apply(&self, u: &Field<T>, v: &Field<T>) -> Result<Field<T>> {
        let j = self.tangent_matrix(u.values(), None)?;
        Ok(self.restricted(j.matvec(v.values())))
    }

    fn tangent_transpose_apply(&self, u: &Field<T>, p: &Field<T>) -> Result<Field<T>> {
        let j = self.tangent_matrix(u.values(), None)?;
        Ok(self.restricted(j.transpose_matvec(p.values())))
    }

    fn hessian_apply(&self, u: &Field<T>, a: &Field<T>, b: &Field<T>) -> Result<Field<T>> {
        let (uv, av, bv) = (u.values(), a.values(), b.values());
        let raw = assemble_vector(&self.mesh, |el, fe| {
            for q in 0..4 {
                let (_, dk, d2k) = self.k(el.value(q, uv));
                let (aq, bq) = (el.value(q, av), el.value(q, bv));
                let (gu, ga, gb) = (el.gradient(q, uv), el.gradient(q, av), el.gradient(q, bv));
                let jxw = el.jxw();
                for i in 0..4 {
                    let gi = el.grad(q, i);
                    let d = |g: [T; 2]| g[0] * gi[0] + g[1] * gi[1];
                    fe[i] += jxw * (d2k * aq * bq * d(gu) + dk * bq * d(ga) + dk * aq * d(gb));
                }
            }
        })?;
        Ok(self.restricted(raw))
    }

    fn hessian_transpose_apply(&self, u: &Field<T>, a: &Field<T>, p: &Field<T>) -> Result<Field<T>> {
        let (uv, av, pv) = (u.values(), a.values(), p.values());
        let raw = assemble_vector(&self.mesh, |el, fe| {
            for q in 0..4 {
                let (_, dk, d2k) = self.k(el.value(q, uv));
                let aq = el.value(q, av);
                let (gu, ga, gp) = (el.gradient(q, uv), el.gradient(q, av), el.gradient(q, pv));
                let gu_gp = gu[0] * gp[0] + gu[1] * gp[1];
                let ga_gp = ga[0] * gp[0] + ga[1] * gp[1];
                let jxw = el.jxw();
                for i in 0..4 {
                    let gi = el.grad(q, i);
                    let phi = el.phi(q, i);
                    fe[i] += jxw
                        * (d2k * aq * phi * gu_gp
                            + dk * phi * ga_gp
                            + dk * aq * (gi[0] * gp[0] + gi[1] * gp[1]));
                }
            }
        })?;
        Ok(self.restricted(raw))
    }

    fn qoi(&self, u: &Field<T>) -> T {
        crate::scalar::dot(&self.shared.volume_weights, u.values())
    }

    fn qoi_gradient(&self, _u: &Field<T>) -> Field<T> {
        self.restricted(self.shared.volume_weights.clone())
    }

    fn solve_coarse_forward(&self) -> Result<Field<T>> {
        if let Some(u0) = self.shared.coarse_solution.get() {
            return Ok(u0.clone());
        }
        let u0 = self.constrained_solve(self.coarse_matrix()?, self.shared.load.clone(), true)?;
        let _ = self.shared.coarse_solution.set(u0.clone());
        Ok(u0)
    }

    fn solve_coarse_adjoint(&self, _u0: &Field<T>) -> Result<Field<T>> {
        // B₀ is symmetric and Q′ = Q
        self.solve_coarse_with_volume_load()
    }

    fn solve_fine_forward(&self) -> Result<Field<T>> {
        let mut guess = self.solve_coarse_forward()?.into_values();
        for (g, &b) in guess.iter_mut().zip(self.mesh.boundary_mask()) {
            if b {
                *g = T::zero();
            }
        }
        let opts = NewtonOptions {
            linear: self.solver,
            ..NewtonOptions::default()
        };
        let out = newton_solve(&FineProblem { pair: self }, guess, &opts)?;
        Ok(self.field(out.solution))
    }

    fn solve_fine_adjoint(&self, u: &Field<T>) -> Result<Field<T>> {
        let jt = self.tangent_matrix(u.values(), None)?.transpose()?;
        self.constrained_solve(jt, self.shared.volume_weights.clone(), false)
    }

    fn solve_tangent(&self, u: &Field<T>, shift: Option<&Field<T>>, rhs: &Field<T>) -> Result<Field<T>> {
        let j = self.tangent_matrix(u.values(), shift.map(Field::values))?;
        self.constrained_solve(j, rhs.values().to_vec(), false)
    }

    fn solve_tangent_adjoint(
        &self,
        u: &Field<T>,
        shift: Option<&Field<T>>,
        rhs: &Field<T>,
    ) -> Result<Field<T>> {
        let jt = self.tangent_matrix(u.values(), shift.map(Field::values))?.transpose()?;
        self.constrained_solve(jt, rhs.values().to_vec(), false)
    }

    fn fine_parameters(&self) -> Vec<T> {
        vec![self.fine.kappa, self.fine.alpha]
    }

    fn coarse_parameters(&self) -> Vec<T> {
        vec![self.coarse.kappa0]
    }

    fn with_fine_parameters(&self, theta: &[T]) -> Result<Self> {
        let [kappa, alpha] = theta else {
            return Err(Error::InvalidArgument(format!(
                "elliptic fine model takes (kappa, alpha), got {} values",
                theta.len()
            )));
        };
        let mut next = self.clone();
        next.fine = EllipticFineParams::new(*kappa, *alpha)?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests;
