//! Allen–Cahn tumor growth (fine model) against linear reaction–diffusion
//! (coarse model) on the unit square with homogeneous Neumann data,
//! marched by backward Euler.
//!
//! The discrete space-time forms act on trajectories `U = (U_0, …, U_N)`:
//!
//! ```text
//! B(U; Q) = U_0ᵀ M Q_0 + Σ_{n≥1} [ (U_n − U_{n−1})ᵀ M Q_n + Δt (A U_n + N(U_n))·Q_n ]
//! A = εK + λᵈM,   N(u) = ∫ (Ψ′(u) − λᵖ u(1−u) f) φ,   Ψ(u) = C u²(1−u)²
//! B₀ likewise with A₀ = DK + λᵈ₀M − λᵖ₀M_f and no N,
//! F(Q) = ūᵀ M Q_0.
//! ```
//!
//! Adjoints are the exact transposes of these discrete forms.

mod trajectory;

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{
    assemble_matrix, assemble_vector, mass_matrix, newton_solve, solve_linear_from,
    stiffness_matrix, weighted_mass_matrix, BandedLu, CsrMatrix, ElementView, NewtonOptions,
    NonlinearProblem, SolverOptions, SparseSystem, StructuredMesh,
};
use crate::goal::ModelPair;
use crate::scalar::Real;

pub use trajectory::{QoISpec, TimeGrid, Trajectory, TrajectoryManifest};

/// Tumor center and radius of the initial disc.
pub const TUMOR_CENTER: [f64; 2] = [0.5, 0.5];
pub const TUMOR_RADIUS: f64 = 0.2821;

/// Nodal bounds the fine trajectory must respect.
pub const FINE_BOUNDS: (f64, f64) = (-0.1, 1.1);

/// `f(t, x) = exp(−1.5 x₁)`
pub fn nutrient<T: Real>(_t: T, p: [T; 2]) -> T {
    (T::lit(-1.5) * p[0]).exp()
}

/// Nodal interpolant of the indicator of `|x − (0.5, 0.5)| < 0.2821`.
pub fn initial_condition<T: Real>(mesh: &StructuredMesh<T>) -> Vec<T> {
    let c = TUMOR_CENTER;
    mesh.nodes()
        .iter()
        .map(|p| {
            let dx = p[0].as_f64() - c[0];
            let dy = p[1].as_f64() - c[1];
            if (dx * dx + dy * dy).sqrt() < TUMOR_RADIUS {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect()
}

fn check_rates<T: Real>(names: &[&str], values: &[T], strict: bool) -> Result<()> {
    for (name, &v) in names.iter().zip(values) {
        let ok = v.is_finite() && if strict { v > T::zero() } else { v >= T::zero() };
        if !ok {
            let rule = if strict { "positive" } else { "non-negative" };
            return Err(Error::InvalidArgument(format!("{name} must be {rule}, got {v}")));
        }
    }
    Ok(())
}

/// θ = (λᵖ, λᵈ, ε, C).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TumorFineParams<T> {
    pub lambda_p: T,
    pub lambda_d: T,
    pub epsilon: T,
    pub c: T,
}

const FINE_NAMES: [&str; 4] = ["lambda_p", "lambda_d", "epsilon", "C"];

impl<T: Real> TumorFineParams<T> {
    pub fn new(lambda_p: T, lambda_d: T, epsilon: T, c: T) -> Result<Self> {
        check_rates(&FINE_NAMES, &[lambda_p, lambda_d, epsilon, c], true)?;
        Ok(Self::raw(lambda_p, lambda_d, epsilon, c))
    }

    /// Allows zero entries; used for degenerate verification setups and
    /// homotopy end points.
    pub fn new_nonnegative(lambda_p: T, lambda_d: T, epsilon: T, c: T) -> Result<Self> {
        check_rates(&FINE_NAMES, &[lambda_p, lambda_d, epsilon, c], false)?;
        Ok(Self::raw(lambda_p, lambda_d, epsilon, c))
    }

    fn raw(lambda_p: T, lambda_d: T, epsilon: T, c: T) -> Self {
        Self {
            lambda_p,
            lambda_d,
            epsilon,
            c,
        }
    }

    /// (0.5, 0.1, 0.01, 1)
    pub fn test_values() -> Self {
        Self::raw(T::lit(0.5), T::lit(0.1), T::lit(0.01), T::one())
    }

    pub fn to_vec(&self) -> Vec<T> {
        vec![self.lambda_p, self.lambda_d, self.epsilon, self.c]
    }

    /// `Ψ′`, `Ψ″`, `Ψ‴` of `C u²(1−u)²`.
    #[inline]
    pub fn psi_derivatives(&self, u: T) -> (T, T, T) {
        let c = self.c;
        let two = T::lit(2.0);
        let twelve = T::lit(12.0);
        (
            c * u * (two - T::lit(6.0) * u + T::lit(4.0) * u * u),
            c * (two - twelve * u + twelve * u * u),
            c * (T::lit(24.0) * u - twelve),
        )
    }

    /// `(N, N′, N″)` integrands at a point with state `u` and nutrient `f`.
    #[inline]
    fn reaction(&self, u: T, f: T) -> (T, T, T) {
        let (d1, d2, d3) = self.psi_derivatives(u);
        let lp = self.lambda_p * f;
        (
            d1 - lp * u * (T::one() - u),
            d2 - lp * (T::one() - T::lit(2.0) * u),
            d3 + T::lit(2.0) * lp,
        )
    }
}

/// θ₀ = (λᵖ₀, λᵈ₀, D).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TumorCoarseParams<T> {
    pub lambda_p0: T,
    pub lambda_d0: T,
    pub diffusivity: T,
}

const COARSE_NAMES: [&str; 3] = ["lambda_p0", "lambda_d0", "D"];

impl<T: Real> TumorCoarseParams<T> {
    pub fn new(lambda_p0: T, lambda_d0: T, diffusivity: T) -> Result<Self> {
        check_rates(&COARSE_NAMES, &[lambda_p0, lambda_d0, diffusivity], true)?;
        Ok(Self {
            lambda_p0,
            lambda_d0,
            diffusivity,
        })
    }

    pub fn new_nonnegative(lambda_p0: T, lambda_d0: T, diffusivity: T) -> Result<Self> {
        check_rates(&COARSE_NAMES, &[lambda_p0, lambda_d0, diffusivity], false)?;
        Ok(Self {
            lambda_p0,
            lambda_d0,
            diffusivity,
        })
    }

    pub fn to_vec(&self) -> Vec<T> {
        vec![self.lambda_p0, self.lambda_d0, self.diffusivity]
    }
}

impl<T: Real> Default for TumorCoarseParams<T> {
    /// (0.2, 0.1, 0.05)
    fn default() -> Self {
        Self {
            lambda_p0: T::lit(0.2),
            lambda_d0: T::lit(0.1),
            diffusivity: T::lit(0.05),
        }
    }
}

pub type Nutrient<T> = Arc<dyn Fn(T, [T; 2]) -> T + Send + Sync>;

/// Everything that does not depend on the fine parameters.
struct Shared<T: Real> {
    mass: CsrMatrix<T>,
    mass_lu: BandedLu<T>,
    /// `M + Δt A₀`
    coarse_step: CsrMatrix<T>,
    coarse_lu: BandedLu<T>,
    /// Nutrient at the quadrature points, per element.
    nutrient_qp: Vec<[T; 4]>,
    initial: Vec<T>,
    initial_load: Vec<T>,
    /// `M 1 / |Ω|`
    volume: Vec<T>,
    step_weights: Vec<T>,
    coarse_forward: OnceLock<Trajectory<T>>,
    coarse_adjoint: OnceLock<Trajectory<T>>,
}

#[derive(Clone)]
pub struct TumorModelPair<T: Real> {
    mesh: Arc<StructuredMesh<T>>,
    grid: TimeGrid<T>,
    qoi: QoISpec,
    fine: TumorFineParams<T>,
    coarse: TumorCoarseParams<T>,
    nutrient: Nutrient<T>,
    solver: SolverOptions<T>,
    newton: NewtonOptions<T>,
    check_bounds: bool,
    shared: Arc<Shared<T>>,
}

impl<T: Real> fmt::Debug for TumorModelPair<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TumorModelPair")
            .field("nx", &self.mesh.nx())
            .field("ny", &self.mesh.ny())
            .field("grid", &self.grid)
            .field("qoi", &self.qoi)
            .field("fine", &self.fine)
            .field("coarse", &self.coarse)
            .finish()
    }
}

impl<T: Real> TumorModelPair<T> {
    pub fn new(
        mesh: Arc<StructuredMesh<T>>,
        grid: TimeGrid<T>,
        qoi: QoISpec,
        coarse: TumorCoarseParams<T>,
        fine: TumorFineParams<T>,
    ) -> Result<Self> {
        Self::with_nutrient(mesh, grid, qoi, coarse, fine, Arc::new(nutrient::<T>))
    }

    pub fn with_nutrient(
        mesh: Arc<StructuredMesh<T>>,
        grid: TimeGrid<T>,
        qoi: QoISpec,
        coarse: TumorCoarseParams<T>,
        fine: TumorFineParams<T>,
        nutrient: Nutrient<T>,
    ) -> Result<Self> {
        let initial = initial_condition(&mesh);
        Self::build(mesh, grid, qoi, coarse, fine, nutrient, initial)
    }

    /// Same models with a different initial state `U_0`.
    pub fn with_initial_condition(&self, initial: Vec<T>) -> Result<Self> {
        if initial.len() != self.mesh.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "initial state has {} values, mesh has {} nodes",
                initial.len(),
                self.mesh.n_nodes()
            )));
        }
        let next = Self::build(
            self.mesh.clone(),
            self.grid,
            self.qoi.clone(),
            self.coarse,
            self.fine,
            self.nutrient.clone(),
            initial,
        )?;
        Ok(Self {
            solver: self.solver,
            newton: self.newton,
            check_bounds: self.check_bounds,
            ..next
        })
    }

    fn build(
        mesh: Arc<StructuredMesh<T>>,
        grid: TimeGrid<T>,
        qoi: QoISpec,
        coarse: TumorCoarseParams<T>,
        fine: TumorFineParams<T>,
        nutrient: Nutrient<T>,
        initial: Vec<T>,
    ) -> Result<Self> {
        let step_weights = qoi.step_weights(&grid)?;
        let mut nutrient_qp = vec![[T::zero(); 4]; mesh.n_elements()];
        crate::fem::assembly::for_each_element(&mesh, |el| {
            for q in 0..4 {
                nutrient_qp[el.index][q] = nutrient(T::zero(), el.point(q));
            }
            Ok(())
        })?;
        let mass = mass_matrix(&mesh)?;
        let stiffness = stiffness_matrix(&mesh)?;
        let mass_f = weighted_mass_matrix(&mesh, |el, q| nutrient_qp[el.index][q])?;
        let dt = grid.dt();
        let mut coarse_step = mass.clone();
        coarse_step.add_scaled(dt * coarse.diffusivity, &stiffness)?;
        coarse_step.add_scaled(dt * coarse.lambda_d0, &mass)?;
        coarse_step.add_scaled(-dt * coarse.lambda_p0, &mass_f)?;
        let coarse_lu = BandedLu::factor(&coarse_step)?;
        let mass_lu = BandedLu::factor(&mass)?;
        let initial_load = mass.matvec(&initial);
        let area = mesh.rect().area();
        let volume = mass.matvec(&vec![T::one() / area; mesh.n_nodes()]);
        let mut solver = SolverOptions::cg();
        solver.max_iter = 2000;
        Ok(Self {
            mesh,
            grid,
            qoi,
            fine,
            coarse,
            nutrient,
            solver,
            newton: NewtonOptions {
                linear: solver,
                ..NewtonOptions::default()
            },
            check_bounds: true,
            shared: Arc::new(Shared {
                mass,
                mass_lu,
                coarse_step,
                coarse_lu,
                nutrient_qp,
                initial,
                initial_load,
                volume,
                step_weights,
                coarse_forward: OnceLock::new(),
                coarse_adjoint: OnceLock::new(),
            }),
        })
    }

    pub fn with_solver(mut self, solver: SolverOptions<T>) -> Self {
        self.solver = solver;
        self.newton.linear = solver;
        self
    }

    /// Disables the nodal bounds check on fine trajectories.
    pub fn without_bounds_check(mut self) -> Self {
        self.check_bounds = false;
        self
    }

    pub fn mesh(&self) -> &Arc<StructuredMesh<T>> {
        &self.mesh
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn qoi_spec(&self) -> &QoISpec {
        &self.qoi
    }

    pub fn fine_params(&self) -> TumorFineParams<T> {
        self.fine
    }

    /// Same coarse data, new fine parameters (no validation beyond
    /// non-negativity).
    pub fn with_fine_params(&self, fine: TumorFineParams<T>) -> Result<Self> {
        TumorFineParams::new_nonnegative(fine.lambda_p, fine.lambda_d, fine.epsilon, fine.c)?;
        let mut next = self.clone();
        next.fine = fine;
        Ok(next)
    }

    pub fn coarse_params(&self) -> TumorCoarseParams<T> {
        self.coarse
    }

    pub fn initial_state(&self) -> &[T] {
        &self.shared.initial
    }

    pub fn mass(&self) -> &CsrMatrix<T> {
        &self.shared.mass
    }

    /// Weight of each time level in the QoI.
    pub fn step_weights(&self) -> &[T] {
        &self.shared.step_weights
    }

    /// `∫ u` of one time level.
    pub fn total_mass(&self, u: &[T]) -> T {
        crate::scalar::dot(&self.shared.volume, u) * self.mesh.rect().area()
    }

    fn trajectory(&self) -> Trajectory<T> {
        Trajectory::zeros(self.mesh.clone(), self.grid)
    }

    fn step_error(n: usize) -> impl FnOnce(Error) -> Error {
        move |e| Error::at_step(n, e)
    }

    /// `M (U_n − U_{n−1}) + Δt (A U_n + N(U_n))`
    fn fine_step_operator(&self, prev: &[T], cur: &[T]) -> Result<Vec<T>> {
        let th = self.fine;
        let dt = self.grid.dt();
        let fq = &self.shared.nutrient_qp;
        assemble_vector(&self.mesh, |el, fe| {
            let up = el.gather(prev);
            let uc = el.gather(cur);
            let r = &el.reference;
            for a in 0..4 {
                for b in 0..4 {
                    fe[a] += r.mass[a][b] * ((uc[b] - up[b]) + dt * th.lambda_d * uc[b])
                        + dt * th.epsilon * r.stiffness[a][b] * uc[b];
                }
            }
            for q in 0..4 {
                let (n, _, _) = th.reaction(el.value(q, cur), fq[el.index][q]);
                let w = dt * n * el.jxw();
                for a in 0..4 {
                    fe[a] += w * el.phi(q, a);
                }
            }
        })
    }

    /// `M + Δt (A + ∫ (N′(u) + N″(u) s) φφ)`; symmetric.
    fn fine_step_matrix(&self, cur: &[T], shift: Option<&[T]>) -> Result<CsrMatrix<T>> {
        let th = self.fine;
        let dt = self.grid.dt();
        let fq = &self.shared.nutrient_qp;
        let cm = T::one() + dt * th.lambda_d;
        let ck = dt * th.epsilon;
        assemble_matrix(&self.mesh, |el: &ElementView<'_, T>, ke| {
            let r = &el.reference;
            for a in 0..4 {
                for b in 0..4 {
                    ke[a][b] = cm * r.mass[a][b] + ck * r.stiffness[a][b];
                }
            }
            for q in 0..4 {
                let (_, n1, n2) = th.reaction(el.value(q, cur), fq[el.index][q]);
                let s = shift.map_or(T::zero(), |s| el.value(q, s));
                let w = dt * (n1 + n2 * s) * el.jxw();
                for a in 0..4 {
                    let wa = w * el.phi(q, a);
                    for b in 0..4 {
                        ke[a][b] += wa * el.phi(q, b);
                    }
                }
            }
        })
    }

    /// `Δt ∫ N″(u) a b φ`
    fn step_hessian(&self, u: &[T], a: &[T], b: &[T]) -> Result<Vec<T>> {
        let th = self.fine;
        let dt = self.grid.dt();
        let fq = &self.shared.nutrient_qp;
        assemble_vector(&self.mesh, |el, fe| {
            for q in 0..4 {
                let (_, _, n2) = th.reaction(el.value(q, u), fq[el.index][q]);
                let w = dt * n2 * el.value(q, a) * el.value(q, b) * el.jxw();
                for i in 0..4 {
                    fe[i] += w * el.phi(q, i);
                }
            }
        })
    }

    fn spd_solve(&self, matrix: CsrMatrix<T>, rhs: Vec<T>, guess: Option<&[T]>) -> Result<Vec<T>> {
        let sys = SparseSystem::new(matrix, rhs)?.with_symmetric(true);
        solve_linear_from(&sys, guess, &self.solver)
    }

    fn check_trajectory_bounds(&self, traj: &Trajectory<T>) -> Result<()> {
        if !self.check_bounds {
            return Ok(());
        }
        let (lo, hi) = traj.min_max();
        let (lo, hi) = (lo.as_f64(), hi.as_f64());
        if lo < FINE_BOUNDS.0 || hi > FINE_BOUNDS.1 {
            return Err(Error::SolverFailure {
                reason: format!(
                    "fine trajectory left [{}, {}]: range [{lo}, {hi}]",
                    FINE_BOUNDS.0, FINE_BOUNDS.1
                ),
                iterations: 0,
                residual: f64::NAN,
            });
        }
        Ok(())
    }

    /// Linear backward march shared by the fine and coarse adjoints:
    /// `S_N P_N = g_N`, `S_n P_n = g_n + M P_{n+1}`, `M P_0 = g_0 + M P_1`.
    fn backward_march(
        &self,
        rhs: &Trajectory<T>,
        mut solve: impl FnMut(usize, Vec<T>, Option<&[T]>) -> Result<Vec<T>>,
    ) -> Result<Trajectory<T>> {
        let n_steps = self.grid.n_steps();
        let mut p = self.trajectory();
        let mut carry = vec![T::zero(); self.mesh.n_nodes()];
        for n in (1..=n_steps).rev() {
            let mut b = rhs.step(n).to_vec();
            crate::scalar::axpy(&mut b, T::one(), &carry);
            let guess = (n < n_steps).then(|| p.step(n + 1).to_vec());
            let x = solve(n, b, guess.as_deref()).map_err(Self::step_error(n))?;
            carry = self.shared.mass.matvec(&x);
            p.step_mut(n).copy_from_slice(&x);
        }
        let mut b = rhs.step(0).to_vec();
        crate::scalar::axpy(&mut b, T::one(), &carry);
        let x = self.shared.mass_lu.solve(&b);
        p.step_mut(0).copy_from_slice(&x);
        Ok(p)
    }

    /// Linear forward march: `M V_0 = g_0`, `S_n V_n = g_n + M V_{n−1}`.
    fn forward_march(
        &self,
        rhs: &Trajectory<T>,
        mut solve: impl FnMut(usize, Vec<T>, &[T]) -> Result<Vec<T>>,
    ) -> Result<Trajectory<T>> {
        let mut v = self.trajectory();
        let v0 = self.shared.mass_lu.solve(rhs.step(0));
        v.step_mut(0).copy_from_slice(&v0);
        for n in 1..=self.grid.n_steps() {
            let prev = v.step(n - 1).to_vec();
            let mut b = self.shared.mass.matvec(&prev);
            crate::scalar::axpy(&mut b, T::one(), rhs.step(n));
            let x = solve(n, b, &prev).map_err(Self::step_error(n))?;
            v.step_mut(n).copy_from_slice(&x);
        }
        Ok(v)
    }

    /// `B′(u₀; ê₀, q) = R(u₀; q)` marched forward with the per-step
    /// residual assembled on the fly; same result as the generic
    /// [`crate::goal::solve_error_forward`] at lower memory traffic.
    pub fn solve_error_forward(&self, u0: &Trajectory<T>) -> Result<Trajectory<T>> {
        let mut e = self.trajectory();
        // R at level 0 is Mū − M U₀ = 0 because U₀ = ū.
        let r0: Vec<T> = self
            .shared
            .initial_load
            .iter()
            .zip(self.shared.mass.matvec(u0.step(0)))
            .map(|(&a, b)| a - b)
            .collect();
        let e0 = self.shared.mass_lu.solve(&r0);
        e.step_mut(0).copy_from_slice(&e0);
        for n in 1..=self.grid.n_steps() {
            let (prev_u, cur_u) = (u0.step(n - 1), u0.step(n));
            let mut b = self.fine_step_operator(prev_u, cur_u).map_err(Self::step_error(n))?;
            for v in &mut b {
                *v = -*v;
            }
            let prev_e = e.step(n - 1).to_vec();
            crate::scalar::axpy(&mut b, T::one(), &self.shared.mass.matvec(&prev_e));
            let s = self.fine_step_matrix(cur_u, None).map_err(Self::step_error(n))?;
            let x = self.spd_solve(s, b, Some(&prev_e)).map_err(Self::step_error(n))?;
            e.step_mut(n).copy_from_slice(&x);
        }
        Ok(e)
    }
}

struct FineStep<'a, T: Real> {
    pair: &'a TumorModelPair<T>,
    prev: &'a [T],
}

impl<T: Real> NonlinearProblem<T> for FineStep<'_, T> {
    fn residual(&self, u: &[T]) -> Result<Vec<T>> {
        self.pair.fine_step_operator(self.prev, u)
    }

    fn jacobian(&self, u: &[T]) -> Result<SparseSystem<T>> {
        let m = self.pair.fine_step_matrix(u, None)?;
        Ok(SparseSystem::new(m, vec![T::zero(); u.len()])?.with_symmetric(true))
    }
}

impl<T: Real> ModelPair<T> for TumorModelPair<T> {
    type State = Trajectory<T>;

    fn fine_operator(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        let mut out = self.trajectory();
        out.step_mut(0).copy_from_slice(&self.shared.mass.matvec(u.step(0)));
        for n in 1..=self.grid.n_steps() {
            let b = self.fine_step_operator(u.step(n - 1), u.step(n)).map_err(Self::step_error(n))?;
            out.step_mut(n).copy_from_slice(&b);
        }
        Ok(out)
    }

    fn coarse_operator(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        let mut out = self.trajectory();
        let sh = &self.shared;
        out.step_mut(0).copy_from_slice(&sh.mass.matvec(u.step(0)));
        for n in 1..=self.grid.n_steps() {
            let mut b = sh.coarse_step.matvec(u.step(n));
            crate::scalar::axpy(&mut b, -T::one(), &sh.mass.matvec(u.step(n - 1)));
            out.step_mut(n).copy_from_slice(&b);
        }
        Ok(out)
    }

    fn load(&self) -> Result<Trajectory<T>> {
        let mut out = self.trajectory();
        out.step_mut(0).copy_from_slice(&self.shared.initial_load);
        Ok(out)
    }

    fn tangent_apply(&self, u: &Trajectory<T>, v: &Trajectory<T>) -> Result<Trajectory<T>> {
        let mut out = self.trajectory();
        let m = &self.shared.mass;
        out.step_mut(0).copy_from_slice(&m.matvec(v.step(0)));
        for n in 1..=self.grid.n_steps() {
            let s = self.fine_step_matrix(u.step(n), None).map_err(Self::step_error(n))?;
            let mut b = s.matvec(v.step(n));
            crate::scalar::axpy(&mut b, -T::one(), &m.matvec(v.step(n - 1)));
            out.step_mut(n).copy_from_slice(&b);
        }
        Ok(out)
    }

    fn tangent_transpose_apply(&self, u: &Trajectory<T>, p: &Trajectory<T>) -> Result<Trajectory<T>> {
        let n_steps = self.grid.n_steps();
        let mut out = self.trajectory();
        let m = &self.shared.mass;
        let mut b0 = m.matvec(p.step(0));
        crate::scalar::axpy(&mut b0, -T::one(), &m.matvec(p.step(1)));
        out.step_mut(0).copy_from_slice(&b0);
        for n in 1..=n_steps {
            let s = self.fine_step_matrix(u.step(n), None).map_err(Self::step_error(n))?;
            let mut b = s.transpose_matvec(p.step(n));
            if n < n_steps {
                crate::scalar::axpy(&mut b, -T::one(), &m.matvec(p.step(n + 1)));
            }
            out.step_mut(n).copy_from_slice(&b);
        }
        Ok(out)
    }

    fn hessian_apply(&self, u: &Trajectory<T>, a: &Trajectory<T>, b: &Trajectory<T>) -> Result<Trajectory<T>> {
        let mut out = self.trajectory();
        for n in 1..=self.grid.n_steps() {
            let h = self.step_hessian(u.step(n), a.step(n), b.step(n)).map_err(Self::step_error(n))?;
            out.step_mut(n).copy_from_slice(&h);
        }
        Ok(out)
    }

    fn hessian_transpose_apply(
        &self,
        u: &Trajectory<T>,
        a: &Trajectory<T>,
        p: &Trajectory<T>,
    ) -> Result<Trajectory<T>> {
        // N″ acts pointwise, so B″(u; a, ·, p) has the same dual as B″(u; a, p, ·).
        self.hessian_apply(u, a, p)
    }

    fn qoi(&self, u: &Trajectory<T>) -> T {
        let sh = &self.shared;
        sh.step_weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w != T::zero())
            .map(|(n, &w)| w * crate::scalar::dot(&sh.volume, u.step(n)))
            .sum()
    }

    fn qoi_gradient(&self, _u: &Trajectory<T>) -> Trajectory<T> {
        let sh = &self.shared;
        let mut g = self.trajectory();
        for (n, &w) in sh.step_weights.iter().enumerate() {
            if w != T::zero() {
                for (gi, &vi) in g.step_mut(n).iter_mut().zip(&sh.volume) {
                    *gi = w * vi;
                }
            }
        }
        g
    }

    fn solve_coarse_forward(&self) -> Result<Trajectory<T>> {
        if let Some(u0) = self.shared.coarse_forward.get() {
            return Ok(u0.clone());
        }
        let sh = &self.shared;
        let mut u0 = self.trajectory();
        u0.step_mut(0).copy_from_slice(&sh.initial);
        for n in 1..=self.grid.n_steps() {
            let b = sh.mass.matvec(u0.step(n - 1));
            let x = sh
                .coarse_lu
                .solve_checked(&sh.coarse_step, &b, self.solver.rtol)
                .map_err(Self::step_error(n))?;
            u0.step_mut(n).copy_from_slice(&x);
        }
        let _ = sh.coarse_forward.set(u0.clone());
        Ok(u0)
    }

    fn solve_coarse_adjoint(&self, _u0: &Trajectory<T>) -> Result<Trajectory<T>> {
        if let Some(p0) = self.shared.coarse_adjoint.get() {
            return Ok(p0.clone());
        }
        let sh = &self.shared;
        let rhs = self.qoi_gradient(_u0);
        // M + Δt A₀ is symmetric, so its factor also solves the transpose.
        let p0 = self.backward_march(&rhs, |_, b, _| {
            sh.coarse_lu.solve_checked(&sh.coarse_step, &b, self.solver.rtol)
        })?;
        let _ = sh.coarse_adjoint.set(p0.clone());
        Ok(p0)
    }

    fn solve_fine_forward(&self) -> Result<Trajectory<T>> {
        let mut u = self.trajectory();
        u.step_mut(0).copy_from_slice(&self.shared.initial);
        for n in 1..=self.grid.n_steps() {
            let prev = u.step(n - 1).to_vec();
            let problem = FineStep {
                pair: self,
                prev: &prev,
            };
            let out = newton_solve(&problem, prev.clone(), &self.newton).map_err(Self::step_error(n))?;
            u.step_mut(n).copy_from_slice(&out.solution);
        }
        self.check_trajectory_bounds(&u)?;
        Ok(u)
    }

    fn solve_fine_adjoint(&self, u: &Trajectory<T>) -> Result<Trajectory<T>> {
        self.solve_tangent_adjoint(u, None, &self.qoi_gradient(u))
    }

    fn solve_tangent(&self, u: &Trajectory<T>, shift: Option<&Trajectory<T>>, rhs: &Trajectory<T>) -> Result<Trajectory<T>> {
        self.forward_march(rhs, |n, b, guess| {
            let s = self.fine_step_matrix(u.step(n), shift.map(|s| s.step(n)))?;
            self.spd_solve(s, b, Some(guess))
        })
    }

    fn solve_tangent_adjoint(
        &self,
        u: &Trajectory<T>,
        shift: Option<&Trajectory<T>>,
        rhs: &Trajectory<T>,
    ) -> Result<Trajectory<T>> {
        self.backward_march(rhs, |n, b, guess| {
            let s = self.fine_step_matrix(u.step(n), shift.map(|s| s.step(n)))?;
            self.spd_solve(s, b, guess)
        })
    }

    fn fine_parameters(&self) -> Vec<T> {
        self.fine.to_vec()
    }

    fn coarse_parameters(&self) -> Vec<T> {
        self.coarse.to_vec()
    }

    fn with_fine_parameters(&self, theta: &[T]) -> Result<Self> {
        let [lp, ld, eps, c] = theta else {
            return Err(Error::InvalidArgument(format!(
                "tumor fine model takes (lambda_p, lambda_d, epsilon, C), got {} values",
                theta.len()
            )));
        };
        let mut next = self.clone();
        next.fine = TumorFineParams::new(*lp, *ld, *eps, *c)?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests;
