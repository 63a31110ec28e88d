//! Bilinear (Q1) shape functions and the 2×2 Gauss–Legendre rule.

use crate::scalar::Real;

/// Reference square `[-1, 1]²`, corners counter-clockwise from `(-1, -1)`.
pub const REF_CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Points of the tensor 2×2 Gauss rule on the reference square (all weights 1).
pub fn gauss_points<T: Real>() -> [[T; 2]; 4] {
    let g = T::one() / T::lit(3.0).sqrt();
    [[-g, -g], [g, -g], [g, g], [-g, g]]
}

pub fn shape_values<T: Real>(xi: [T; 2]) -> [T; 4] {
    let q = T::lit(0.25);
    let mut out = [T::zero(); 4];
    for (a, c) in REF_CORNERS.iter().enumerate() {
        let (ca, cb) = (T::lit(c[0]), T::lit(c[1]));
        out[a] = q * (T::one() + ca * xi[0]) * (T::one() + cb * xi[1]);
    }
    out
}

/// Gradients with respect to the reference coordinates.
pub fn shape_ref_gradients<T: Real>(xi: [T; 2]) -> [[T; 2]; 4] {
    let q = T::lit(0.25);
    let mut out = [[T::zero(); 2]; 4];
    for (a, c) in REF_CORNERS.iter().enumerate() {
        let (ca, cb) = (T::lit(c[0]), T::lit(c[1]));
        out[a] = [
            q * ca * (T::one() + cb * xi[1]),
            q * cb * (T::one() + ca * xi[0]),
        ];
    }
    out
}

/// Shape data at the quadrature points of one (any) element of a uniform grid.
#[derive(Debug, Clone)]
pub struct ReferenceElement<T> {
    /// Offsets of the quadrature points from the element's lower-left corner.
    pub offsets: [[T; 2]; 4],
    /// `values[q][a]`: basis function `a` at point `q`.
    pub values: [[T; 4]; 4],
    /// `grads[q][a]`: physical gradient of basis `a` at point `q`.
    pub grads: [[[T; 2]; 4]; 4],
    /// Quadrature weight times Jacobian determinant (the same at every point).
    pub jxw: T,
    pub mass: [[T; 4]; 4],
    pub stiffness: [[T; 4]; 4],
}

impl<T: Real> ReferenceElement<T> {
    pub fn new(h: [T; 2]) -> Self {
        let half = T::lit(0.5);
        let pts = gauss_points::<T>();
        let jxw = h[0] * h[1] * T::lit(0.25);
        let mut offsets = [[T::zero(); 2]; 4];
        let mut values = [[T::zero(); 4]; 4];
        let mut grads = [[[T::zero(); 2]; 4]; 4];
        for (q, xi) in pts.iter().enumerate() {
            offsets[q] = [
                (xi[0] + T::one()) * half * h[0],
                (xi[1] + T::one()) * half * h[1],
            ];
            values[q] = shape_values(*xi);
            let rg = shape_ref_gradients(*xi);
            for a in 0..4 {
                grads[q][a] = [rg[a][0] * T::lit(2.0) / h[0], rg[a][1] * T::lit(2.0) / h[1]];
            }
        }
        let mut mass = [[T::zero(); 4]; 4];
        let mut stiffness = [[T::zero(); 4]; 4];
        for q in 0..4 {
            for a in 0..4 {
                for b in 0..4 {
                    mass[a][b] += values[q][a] * values[q][b] * jxw;
                    stiffness[a][b] +=
                        (grads[q][a][0] * grads[q][b][0] + grads[q][a][1] * grads[q][b][1]) * jxw;
                }
            }
        }
        Self {
            offsets,
            values,
            grads,
            jxw,
            mass,
            stiffness,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shape_functions_are_nodal() {
        for (a, c) in REF_CORNERS.iter().enumerate() {
            let v = shape_values::<f64>(*c);
            for (b, &vb) in v.iter().enumerate() {
                assert_eq!(vb, if a == b { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn gauss_rule_integrates_bicubics() {
        // ∫∫ x³y² + x²y² + 1 over [-1,1]² = 0 + 4/9 + 4
        let s: f64 = gauss_points::<f64>()
            .iter()
            .map(|p| p[0].powi(3) * p[1].powi(2) + p[0].powi(2) * p[1].powi(2) + 1.0)
            .sum();
        assert!((s - (4.0 / 9.0 + 4.0)).abs() < 1e-14);
    }

    #[test]
    fn unit_element_stiffness_matches_closed_form() {
        let r = ReferenceElement::<f64>::new([1.0, 1.0]);
        let expected = [
            [4.0, -1.0, -2.0, -1.0],
            [-1.0, 4.0, -1.0, -2.0],
            [-2.0, -1.0, 4.0, -1.0],
            [-1.0, -2.0, -1.0, 4.0],
        ];
        for a in 0..4 {
            for b in 0..4 {
                assert!((r.stiffness[a][b] - expected[a][b] / 6.0).abs() < 1e-14);
            }
            assert!(r.stiffness[a].iter().sum::<f64>().abs() < 1e-14);
        }
        let total: f64 = r.mass.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn partition_of_unity(x in -1.0f64..1.0, y in -1.0f64..1.0) {
            let s: f64 = shape_values([x, y]).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-14);
            let g = shape_ref_gradients([x, y]);
            prop_assert!(g.iter().map(|v| v[0]).sum::<f64>().abs() < 1e-14);
            prop_assert!(g.iter().map(|v| v[1]).sum::<f64>().abs() < 1e-14);
        }

        #[test]
        fn partition_of_unity_single_precision(x in -1.0f32..1.0, y in -1.0f32..1.0) {
            let s: f32 = shape_values([x, y]).iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-6);
        }
    }
}
