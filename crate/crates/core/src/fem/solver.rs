//! Linear solvers: banded LU with partial pivoting (the default for the
//! structured-grid sizes used here) and Jacobi-preconditioned conjugate
//! gradients for symmetric positive definite systems.

use super::sparse::{CsrMatrix, SparseSystem};
use crate::error::{Error, Result};
use crate::scalar::{axpy, dot, norm2, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    #[default]
    Direct,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    pub method: LinearSolver,
    /// Required `‖A x − b‖ ≤ rtol ‖b‖`.
    pub rtol: T,
    /// Iteration cap for conjugate gradients.
    pub max_iter: usize,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            method: LinearSolver::Direct,
            rtol: T::solver_rtol(),
            max_iter: 5000,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn cg() -> Self {
        Self {
            method: LinearSolver::ConjugateGradient,
            ..Self::default()
        }
    }
}

/// Solves the system; a failed direct solve of a symmetric system retries
/// with conjugate gradients.
pub fn solve_linear<T: Real>(system: &SparseSystem<T>, opts: &SolverOptions<T>) -> Result<Vec<T>> {
    solve_linear_from(system, None, opts)
}

/// As [`solve_linear`], with an initial guess for the iterative path.
pub fn solve_linear_from<T: Real>(
    system: &SparseSystem<T>,
    guess: Option<&[T]>,
    opts: &SolverOptions<T>,
) -> Result<Vec<T>> {
    match opts.method {
        LinearSolver::ConjugateGradient => {
            conjugate_gradient(&system.matrix, &system.rhs, guess, opts.rtol, opts.max_iter)
        }
        LinearSolver::Direct => {
            let direct = BandedLu::factor(&system.matrix)
                .and_then(|lu| lu.solve_checked(&system.matrix, &system.rhs, opts.rtol));
            match direct {
                Err(e) if system.symmetric => {
                    log::debug!("direct solve failed ({e}); retrying with conjugate gradients");
                    conjugate_gradient(&system.matrix, &system.rhs, guess, opts.rtol, opts.max_iter)
                }
                other => other,
            }
        }
    }
}

/// LU factors of a banded matrix, `P A = L U`, in LAPACK `gbtrf` layout.
#[derive(Debug, Clone)]
pub struct BandedLu<T> {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<T>,
    ipiv: Vec<usize>,
}

impl<T: Real> BandedLu<T> {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        j * self.ldab + self.kl + self.ku + i - j
    }

    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.n();
        let bw = a.pattern().half_bandwidth();
        let (kl, ku) = (bw, bw);
        let ldab = 2 * kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![T::zero(); ldab * n],
            ipiv: vec![0; n],
        };
        let mut scale = T::zero();
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let k = lu.at(r, c);
                lu.ab[k] = v;
                scale = scale.max(v.abs());
            }
        }
        let tiny = scale * T::epsilon() * T::lit(n as f64);
        let mut ju = 0usize;
        for k in 0..n {
            let km = kl.min(n - 1 - k);
            let base = lu.at(k, k);
            let mut p = 0;
            let mut best = lu.ab[base].abs();
            for i in 1..=km {
                let v = lu.ab[base + i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            lu.ipiv[k] = k + p;
            if !(best > tiny) {
                return Err(Error::SolverFailure {
                    reason: format!("zero pivot in column {k}"),
                    iterations: 0,
                    residual: f64::NAN,
                });
            }
            ju = ju.max((k + ku + p).min(n - 1));
            if p != 0 {
                for j in k..=ju {
                    let (x, y) = (lu.at(k, j), lu.at(k + p, j));
                    lu.ab.swap(x, y);
                }
            }
            let piv = lu.ab[base];
            for i in 1..=km {
                lu.ab[base + i] /= piv;
            }
            if km == 0 {
                continue;
            }
            for j in k + 1..=ju {
                let akj = lu.ab[lu.at(k, j)];
                if akj == T::zero() {
                    continue;
                }
                let start = lu.at(k + 1, j);
                let (head, tail) = lu.ab.split_at_mut(start);
                let lcol = &head[base + 1..=base + km];
                for (t, &l) in tail[..km].iter_mut().zip(lcol) {
                    *t -= l * akj;
                }
            }
        }
        Ok(lu)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let n = self.n;
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                x.swap(k, p);
            }
            let km = self.kl.min(n - 1 - k);
            let xk = x[k];
            if xk != T::zero() {
                let base = self.at(k, k);
                for i in 1..=km {
                    x[k + i] -= self.ab[base + i] * xk;
                }
            }
        }
        let reach = self.kl + self.ku;
        for k in (0..n).rev() {
            let xk = x[k] / self.ab[self.at(k, k)];
            x[k] = xk;
            if xk != T::zero() {
                for i in k.saturating_sub(reach)..k {
                    x[i] -= self.ab[self.at(i, k)] * xk;
                }
            }
        }
    }

    /// Solves and verifies the residual, applying up to three steps of
    /// iterative refinement when the first solve falls short.
    pub fn solve_checked(&self, a: &CsrMatrix<T>, b: &[T], rtol: T) -> Result<Vec<T>> {
        let bnorm = norm2(b);
        let target = rtol * bnorm;
        let mut x = self.solve(b);
        let mut r = vec![T::zero(); b.len()];
        for step in 0..=3 {
            a.matvec_into(&x, &mut r);
            for (ri, &bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
            }
            let rn = norm2(&r);
            if rn <= target || bnorm == T::zero() {
                return Ok(x);
            }
            if step == 3 || !rn.is_finite() {
                return Err(Error::SolverFailure {
                    reason: "direct solve did not reach the residual tolerance".into(),
                    iterations: step,
                    residual: (rn / bnorm).as_f64(),
                });
            }
            self.solve_in_place(&mut r);
            axpy(&mut x, T::one(), &r);
        }
        unreachable!()
    }
}

/// Jacobi-preconditioned conjugate gradients.
pub fn conjugate_gradient<T: Real>(
    a: &CsrMatrix<T>,
    b: &[T],
    guess: Option<&[T]>,
    rtol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let n = b.len();
    let bnorm = norm2(b);
    if bnorm == T::zero() {
        return Ok(vec![T::zero(); n]);
    }
    let target = rtol * bnorm;
    let inv_diag: Vec<T> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
        .collect();
    let mut x = guess.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut r = a.matvec(&x);
    for (ri, &bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &d)| ri * d).collect();
    let mut p = z.clone();
    let mut ap = vec![T::zero(); n];
    let mut rz = dot(&r, &z);
    let mut rn = norm2(&r);
    for it in 0..max_iter {
        if rn <= target {
            return Ok(x);
        }
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > T::zero()) {
            return Err(Error::SolverFailure {
                reason: "matrix is not positive definite along a search direction".into(),
                iterations: it,
                residual: (rn / bnorm).as_f64(),
            });
        }
        let alpha = rz / pap;
        axpy(&mut x, alpha, &p);
        axpy(&mut r, -alpha, &ap);
        for ((zi, &ri), &d) in z.iter_mut().zip(&r).zip(&inv_diag) {
            *zi = ri * d;
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, &zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
        rn = norm2(&r);
    }
    if rn <= target {
        return Ok(x);
    }
    Err(Error::SolverFailure {
        reason: "conjugate gradients hit the iteration cap".into(),
        iterations: max_iter,
        residual: (rn / bnorm).as_f64(),
    })
}
