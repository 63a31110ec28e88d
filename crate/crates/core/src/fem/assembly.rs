//! Element loop and scatter into the global compressed-row system.

use std::sync::Arc;

use super::basis::ReferenceElement;
use super::mesh::StructuredMesh;
use super::sparse::{CsrMatrix, SparseSystem};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub type LocalMatrix<T> = [[T; 4]; 4];
pub type LocalVector<T> = [T; 4];

/// One element as seen by a kernel: its nodes, its placement and the shared
/// shape data at its four quadrature points.
#[derive(Debug, Clone, Copy)]
pub struct ElementView<'a, T> {
    pub index: usize,
    pub nodes: [usize; 4],
    pub origin: [T; 2],
    pub reference: &'a ReferenceElement<T>,
}

impl<T: Real> ElementView<'_, T> {
    pub const N_QP: usize = 4;

    #[inline]
    pub fn phi(&self, q: usize, a: usize) -> T {
        self.reference.values[q][a]
    }

    #[inline]
    pub fn grad(&self, q: usize, a: usize) -> [T; 2] {
        self.reference.grads[q][a]
    }

    #[inline]
    pub fn jxw(&self) -> T {
        self.reference.jxw
    }

    #[inline]
    pub fn point(&self, q: usize) -> [T; 2] {
        let o = self.reference.offsets[q];
        [self.origin[0] + o[0], self.origin[1] + o[1]]
    }

    /// Interpolated value of a nodal field at quadrature point `q`.
    #[inline]
    pub fn value(&self, q: usize, nodal: &[T]) -> T {
        let v = &self.reference.values[q];
        v[0] * nodal[self.nodes[0]]
            + v[1] * nodal[self.nodes[1]]
            + v[2] * nodal[self.nodes[2]]
            + v[3] * nodal[self.nodes[3]]
    }

    #[inline]
    pub fn gradient(&self, q: usize, nodal: &[T]) -> [T; 2] {
        let g = &self.reference.grads[q];
        let mut out = [T::zero(); 2];
        for a in 0..4 {
            let u = nodal[self.nodes[a]];
            out[0] += g[a][0] * u;
            out[1] += g[a][1] * u;
        }
        out
    }

    /// Nodal values of a global field on this element.
    #[inline]
    pub fn gather(&self, nodal: &[T]) -> [T; 4] {
        self.nodes.map(|n| nodal[n])
    }
}

/// Local contribution of one element to a global matrix and vector.
pub trait ElementKernel<T: Real> {
    fn element(&self, el: &ElementView<'_, T>, ke: &mut LocalMatrix<T>, fe: &mut LocalVector<T>);
}

impl<T, F> ElementKernel<T> for F
where
    T: Real,
    F: Fn(&ElementView<'_, T>, &mut LocalMatrix<T>, &mut LocalVector<T>),
{
    fn element(&self, el: &ElementView<'_, T>, ke: &mut LocalMatrix<T>, fe: &mut LocalVector<T>) {
        self(el, ke, fe)
    }
}

pub(crate) fn for_each_element<T: Real>(
    mesh: &StructuredMesh<T>,
    mut body: impl FnMut(&ElementView<'_, T>) -> Result<()>,
) -> Result<()> {
    let reference = ReferenceElement::new(mesh.h());
    for e in 0..mesh.n_elements() {
        let view = ElementView {
            index: e,
            nodes: mesh.element_nodes(e),
            origin: mesh.element_origin(e),
            reference: &reference,
        };
        body(&view)?;
    }
    Ok(())
}

fn all_finite<T: Real>(xs: impl IntoIterator<Item = T>) -> bool {
    xs.into_iter().all(|x| x.is_finite())
}

/// Assembles matrix and right-hand side from an element kernel.
pub fn assemble<T: Real>(
    mesh: &StructuredMesh<T>,
    kernel: &impl ElementKernel<T>,
) -> Result<SparseSystem<T>> {
    let pattern = mesh.pattern().clone();
    let mut matrix = CsrMatrix::zeros(Arc::clone(&pattern));
    let mut rhs = vec![T::zero(); mesh.n_nodes()];
    for_each_element(mesh, |el| {
        let mut ke = [[T::zero(); 4]; 4];
        let mut fe = [T::zero(); 4];
        kernel.element(el, &mut ke, &mut fe);
        if !all_finite(ke.iter().flatten().copied()) || !all_finite(fe) {
            return Err(Error::NumericFailure { element: el.index });
        }
        let slots = &pattern.element_slots[el.index];
        let values = matrix.values_mut();
        for a in 0..4 {
            for b in 0..4 {
                values[slots[4 * a + b]] += ke[a][b];
            }
            rhs[el.nodes[a]] += fe[a];
        }
        Ok(())
    })?;
    SparseSystem::new(matrix, rhs)
}

/// Matrix-only assembly.
pub fn assemble_matrix<T: Real>(
    mesh: &StructuredMesh<T>,
    kernel: impl Fn(&ElementView<'_, T>, &mut LocalMatrix<T>),
) -> Result<CsrMatrix<T>> {
    let k = |el: &ElementView<'_, T>, ke: &mut LocalMatrix<T>, _: &mut LocalVector<T>| kernel(el, ke);
    Ok(assemble(mesh, &k)?.matrix)
}

/// Vector-only assembly; skips the matrix scatter entirely.
pub fn assemble_vector<T: Real>(
    mesh: &StructuredMesh<T>,
    kernel: impl Fn(&ElementView<'_, T>, &mut LocalVector<T>),
) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); mesh.n_nodes()];
    for_each_element(mesh, |el| {
        let mut fe = [T::zero(); 4];
        kernel(el, &mut fe);
        if !all_finite(fe) {
            return Err(Error::NumericFailure { element: el.index });
        }
        for a in 0..4 {
            out[el.nodes[a]] += fe[a];
        }
        Ok(())
    })?;
    Ok(out)
}

/// Consistent mass matrix `∫ φ_i φ_j`.
pub fn mass_matrix<T: Real>(mesh: &StructuredMesh<T>) -> Result<CsrMatrix<T>> {
    assemble_matrix(mesh, |el, ke| *ke = el.reference.mass)
}

/// Stiffness matrix `∫ ∇φ_i · ∇φ_j`.
pub fn stiffness_matrix<T: Real>(mesh: &StructuredMesh<T>) -> Result<CsrMatrix<T>> {
    assemble_matrix(mesh, |el, ke| *ke = el.reference.stiffness)
}

/// `∫ w φ_i φ_j` with the weight given per element and quadrature point.
pub fn weighted_mass_matrix<T: Real>(
    mesh: &StructuredMesh<T>,
    weight: impl Fn(&ElementView<'_, T>, usize) -> T,
) -> Result<CsrMatrix<T>> {
    assemble_matrix(mesh, |el, ke| {
        for q in 0..4 {
            let w = weight(el, q) * el.jxw();
            for a in 0..4 {
                let wa = w * el.phi(q, a);
                for b in 0..4 {
                    ke[a][b] += wa * el.phi(q, b);
                }
            }
        }
    })
}

/// `∫ g φ_i` for a pointwise function `g`.
pub fn load_vector<T: Real>(
    mesh: &StructuredMesh<T>,
    g: impl Fn([T; 2]) -> T,
) -> Result<Vec<T>> {
    assemble_vector(mesh, |el, fe| {
        for q in 0..4 {
            let w = g(el.point(q)) * el.jxw();
            for a in 0..4 {
                fe[a] += w * el.phi(q, a);
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_laplacian() {
        let mesh = StructuredMesh::<f64>::unit_square(1, 1).unwrap();
        let k = stiffness_matrix(&mesh).unwrap();
        for r in 0..4 {
            let (_, vals) = k.row(r);
            assert!(vals.iter().sum::<f64>().abs() < 1e-14);
        }
        assert!((k.get(0, 0) - 2.0 / 3.0).abs() < 1e-14);
        // global node 3 is the diagonal opposite of node 0
        assert!((k.get(0, 3) + 1.0 / 3.0).abs() < 1e-14);
        assert!((k.get(0, 2) + 1.0 / 6.0).abs() < 1e-14);
        assert_eq!(k.max_asymmetry(), 0.0);
    }

    #[test]
    fn total_mass_is_domain_area() {
        let mesh = StructuredMesh::<f64>::unit_square(7, 5).unwrap();
        let m = mass_matrix(&mesh).unwrap();
        assert!((m.sum() - 1.0).abs() < 1e-12);
        let mesh = StructuredMesh::<f32>::unit_square(4, 4).unwrap();
        assert!((mass_matrix(&mesh).unwrap().sum() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dirichlet_laplacian_has_identity_boundary_rows() {
        let mesh = StructuredMesh::<f64>::unit_square(4, 4).unwrap();
        let kernel = |el: &ElementView<'_, f64>, ke: &mut LocalMatrix<f64>, fe: &mut LocalVector<f64>| {
            *ke = el.reference.stiffness;
            for a in 0..4 {
                fe[a] = el.reference.mass[a].iter().sum();
            }
        };
        let mut sys = assemble(&mesh, &kernel).unwrap();
        assert!(sys.matrix.max_asymmetry() < 1e-15);
        sys.apply_dirichlet(mesh.boundary_mask(), |_| 0.0);
        for n in (0..mesh.n_nodes()).filter(|&n| mesh.is_boundary(n)) {
            let (cols, vals) = sys.matrix.row(n);
            for (&c, &v) in cols.iter().zip(vals) {
                assert_eq!(v, if c == n { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn non_finite_kernel_output_names_the_element() {
        let mesh = StructuredMesh::<f64>::unit_square(3, 3).unwrap();
        let kernel = |el: &ElementView<'_, f64>, ke: &mut LocalMatrix<f64>, _: &mut LocalVector<f64>| {
            if el.index == 4 {
                ke[1][1] = f64::NAN;
            }
        };
        match assemble(&mesh, &kernel) {
            Err(Error::NumericFailure { element }) => assert_eq!(element, 4),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn interpolation_reproduces_bilinear_fields() {
        let mesh = StructuredMesh::<f64>::unit_square(3, 2).unwrap();
        let f = |p: [f64; 2]| 1.0 + 2.0 * p[0] - p[1] + 0.5 * p[0] * p[1];
        let nodal: Vec<f64> = mesh.nodes().iter().map(|&p| f(p)).collect();
        for_each_element(&mesh, |el| {
            for q in 0..4 {
                let p = el.point(q);
                assert!((el.value(q, &nodal) - f(p)).abs() < 1e-14);
                let g = el.gradient(q, &nodal);
                assert!((g[0] - (2.0 + 0.5 * p[1])).abs() < 1e-13);
                assert!((g[1] - (-1.0 + 0.5 * p[0])).abs() < 1e-13);
            }
            Ok(())
        })
        .unwrap();
    }
}
