use std::sync::Arc;

use super::sparse::SparsityPattern;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Axis-aligned rectangle `[origin, origin + extent]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub origin: [T; 2],
    pub extent: [T; 2],
}

impl<T: Real> Rect<T> {
    pub fn new(origin: [T; 2], extent: [T; 2]) -> Self {
        Self { origin, extent }
    }

    pub fn unit_square() -> Self {
        Self::new([T::zero(); 2], [T::one(); 2])
    }

    pub fn area(&self) -> T {
        self.extent[0] * self.extent[1]
    }
}

/// Uniform grid of `nx × ny` bilinear quadrilaterals over a rectangle.
///
/// Nodes are numbered lexicographically, `i + j (nx + 1)`, elements
/// `i + j nx`; element-local node order is counter-clockwise starting at
/// the lower-left corner.
#[derive(Debug, Clone)]
pub struct StructuredMesh<T> {
    nx: usize,
    ny: usize,
    rect: Rect<T>,
    node_coords: Vec<[T; 2]>,
    boundary_mask: Vec<bool>,
    pattern: Arc<SparsityPattern>,
}

impl<T: Real> StructuredMesh<T> {
    pub fn new(nx: usize, ny: usize, rect: Rect<T>) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidArgument(format!(
                "mesh needs at least one element per axis, got {nx}×{ny}"
            )));
        }
        let ext_ok = |e: T| e.is_finite() && e > T::zero();
        if !ext_ok(rect.extent[0]) || !ext_ok(rect.extent[1]) {
            return Err(Error::InvalidArgument(
                "mesh rectangle must have positive finite extent".into(),
            ));
        }
        let hx = rect.extent[0] / T::lit(nx as f64);
        let hy = rect.extent[1] / T::lit(ny as f64);
        let mut node_coords = Vec::with_capacity((nx + 1) * (ny + 1));
        let mut boundary_mask = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // The last row/column is pinned to the exact edge.
                let x = if i == nx {
                    rect.origin[0] + rect.extent[0]
                } else {
                    rect.origin[0] + hx * T::lit(i as f64)
                };
                let y = if j == ny {
                    rect.origin[1] + rect.extent[1]
                } else {
                    rect.origin[1] + hy * T::lit(j as f64)
                };
                node_coords.push([x, y]);
                boundary_mask.push(i == 0 || j == 0 || i == nx || j == ny);
            }
        }
        Ok(Self {
            nx,
            ny,
            rect,
            node_coords,
            boundary_mask,
            pattern: Arc::new(SparsityPattern::for_grid(nx, ny)),
        })
    }

    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        Self::new(nx, ny, Rect::unit_square())
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn rect(&self) -> &Rect<T> {
        &self.rect
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn n_elements(&self) -> usize {
        self.nx * self.ny
    }

    /// Element size along each axis.
    pub fn h(&self) -> [T; 2] {
        [
            self.rect.extent[0] / T::lit(self.nx as f64),
            self.rect.extent[1] / T::lit(self.ny as f64),
        ]
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        i + j * (self.nx + 1)
    }

    pub fn node(&self, n: usize) -> [T; 2] {
        self.node_coords[n]
    }

    pub fn nodes(&self) -> &[[T; 2]] {
        &self.node_coords
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary_mask
    }

    pub fn is_boundary(&self, n: usize) -> bool {
        self.boundary_mask[n]
    }

    pub fn element_nodes(&self, e: usize) -> [usize; 4] {
        let (i, j) = (e % self.nx, e / self.nx);
        let n0 = self.node_index(i, j);
        let stride = self.nx + 1;
        [n0, n0 + 1, n0 + 1 + stride, n0 + stride]
    }

    /// Lower-left corner of element `e`.
    pub fn element_origin(&self, e: usize) -> [T; 2] {
        self.node_coords[self.element_nodes(e)[0]]
    }

    /// Determinant of the reference-to-physical map, identical for all elements.
    pub fn jacobian_det(&self) -> T {
        let [hx, hy] = self.h();
        hx * hy / T::lit(4.0)
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }
}
