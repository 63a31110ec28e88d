use std::io::{BufRead, Write};
use std::sync::Arc;

use super::assembly::assemble_vector;
use super::mesh::StructuredMesh;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Nodal coefficients of one Q1 function on a mesh.
#[derive(Debug, Clone)]
pub struct Field<T> {
    mesh: Arc<StructuredMesh<T>>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn new(mesh: Arc<StructuredMesh<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::InvalidArgument(format!(
                "field has {} coefficients, mesh has {} nodes",
                values.len(),
                mesh.n_nodes()
            )));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<StructuredMesh<T>>) -> Self {
        let values = vec![T::zero(); mesh.n_nodes()];
        Self { mesh, values }
    }

    /// Nodal interpolant of `f`.
    pub fn interpolate(mesh: Arc<StructuredMesh<T>>, f: impl Fn([T; 2]) -> T) -> Self {
        let values = mesh.nodes().iter().map(|&p| f(p)).collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<StructuredMesh<T>> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// `∫_Ω u dx` with the element quadrature.
    pub fn integral(&self) -> Result<T> {
        let w = assemble_vector(&self.mesh, |el, fe| {
            for q in 0..4 {
                let v = el.value(q, &self.values) * el.jxw();
                fe[0] += v;
            }
        })?;
        Ok(w.into_iter().sum())
    }

    /// Whether every masked entry equals `value`.
    pub fn satisfies_dirichlet(&self, mask: &[bool], value: T, tol: T) -> bool {
        self.values
            .iter()
            .zip(mask)
            .all(|(&v, &m)| !m || (v - value).abs() <= tol)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }

    /// CSV with header `node_index,x,y,value`, 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "node_index,x,y,value")?;
        for (n, (p, v)) in self.mesh.nodes().iter().zip(&self.values).enumerate() {
            writeln!(
                w,
                "{n},{:.16e},{:.16e},{:.16e}",
                p[0].as_f64(),
                p[1].as_f64(),
                v.as_f64()
            )?;
        }
        Ok(())
    }

    /// Reads the format written by [`Field::write_csv`]; every node must appear once.
    pub fn read_csv(mesh: Arc<StructuredMesh<T>>, r: impl BufRead) -> Result<Self> {
        let n = mesh.n_nodes();
        let mut values = vec![None; n];
        let mut lines = r.lines();
        let header = lines
            .next()
            .transpose()
            .map_err(|e| Error::Parse(e.to_string()))?
            .unwrap_or_default();
        if header.trim() != "node_index,x,y,value" {
            return Err(Error::Parse(format!("unexpected header {header:?}")));
        }
        for (lineno, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || Error::Parse(format!("line {}: {line:?}", lineno + 2));
            if cols.len() != 4 {
                return Err(bad());
            }
            let idx: usize = cols[0].trim().parse().map_err(|_| bad())?;
            let v: f64 = cols[3].trim().parse().map_err(|_| bad())?;
            if idx >= n || values[idx].is_some() {
                return Err(bad());
            }
            values[idx] = Some(T::lit(v));
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Parse(format!("node {i} missing"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { mesh, values })
    }
}
