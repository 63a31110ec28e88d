use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Field, StructuredMesh};
use crate::goal::StateVector;
use crate::scalar::Real;

/// Uniform time grid `t_n = n Δt`, `n = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T> {
    dt: T,
    n_steps: usize,
}

impl<T: Real> TimeGrid<T> {
    /// Fails unless `dt` divides `t_final` into a whole number of steps.
    pub fn new(dt: T, t_final: T) -> Result<Self> {
        if !(dt > T::zero() && t_final > T::zero() && dt.is_finite() && t_final.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "time step and final time must be positive, got dt = {dt}, t_final = {t_final}"
            )));
        }
        let n_steps = whole_steps(t_final, dt).ok_or_else(|| {
            Error::InvalidArgument(format!("dt = {dt} does not divide t_final = {t_final}"))
        })?;
        if n_steps == 0 {
            return Err(Error::InvalidArgument("time grid needs at least one step".into()));
        }
        Ok(Self { dt, n_steps })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_final(&self) -> T {
        self.dt * T::from_usize(self.n_steps).unwrap()
    }

    pub fn time(&self, n: usize) -> T {
        self.dt * T::from_usize(n).unwrap()
    }
}

/// `Some(k)` when `t ≈ k·dt` for a whole `k ≥ 0`.
fn whole_steps<T: Real>(t: T, dt: T) -> Option<usize> {
    let ratio = (t / dt).as_f64();
    let k = ratio.round();
    ((ratio - k).abs() <= 1e-6 * k.max(1.0) && k >= 0.0).then_some(k as usize)
}

/// Final-time volume average plus window-averaged volume averages at the
/// observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoISpec {
    pub observation_times: Vec<f64>,
    pub window: f64,
}

impl QoISpec {
    /// Observation times 0.2, 0.4, 0.6, 0.8 with window 0.05.
    pub fn table1() -> Self {
        Self {
            observation_times: vec![0.2, 0.4, 0.6, 0.8],
            window: 0.05,
        }
    }

    /// Final-time average only.
    pub fn final_time_only() -> Self {
        Self {
            observation_times: Vec::new(),
            window: 0.05,
        }
    }

    pub fn n_observations(&self) -> usize {
        self.observation_times.len()
    }

    /// Weight of each time level in `Q(U) = Σ_n w_n ⟨1/|Ω|, U_n⟩`. Window
    /// `i` contributes `Δt/Δτ` at the step ends `τ_i + Δt, …, τ_i + Δτ`.
    pub fn step_weights<T: Real>(&self, grid: &TimeGrid<T>) -> Result<Vec<T>> {
        let dt = grid.dt().as_f64();
        let n = grid.n_steps();
        let mut w = vec![T::zero(); n + 1];
        w[n] = T::one();
        if self.observation_times.is_empty() {
            return Ok(w);
        }
        let width = whole_steps(self.window, dt)
            .filter(|&k| k > 0)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "observation window {} is not a positive multiple of dt = {dt}",
                    self.window
                ))
            })?;
        let each = T::lit(dt / self.window);
        for &tau in &self.observation_times {
            let start = whole_steps(tau, dt).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "observation time {tau} is not on the time grid (dt = {dt})"
                ))
            })?;
            if start + width > n {
                return Err(Error::InvalidArgument(format!(
                    "observation window [{tau}, {}] extends past the final time",
                    tau + self.window
                )));
            }
            for wk in &mut w[start + 1..=start + width] {
                *wk += each;
            }
        }
        Ok(w)
    }
}

/// One nodal field per time level, stored contiguously.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    mesh: Arc<StructuredMesh<T>>,
    grid: TimeGrid<T>,
    values: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn zeros(mesh: Arc<StructuredMesh<T>>, grid: TimeGrid<T>) -> Self {
        let values = vec![T::zero(); mesh.n_nodes() * (grid.n_steps() + 1)];
        Self { mesh, grid, values }
    }

    pub fn mesh(&self) -> &Arc<StructuredMesh<T>> {
        &self.mesh
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn n_steps(&self) -> usize {
        self.grid.n_steps()
    }

    pub fn step(&self, n: usize) -> &[T] {
        let m = self.mesh.n_nodes();
        &self.values[n * m..(n + 1) * m]
    }

    pub fn step_mut(&mut self, n: usize) -> &mut [T] {
        let m = self.mesh.n_nodes();
        &mut self.values[n * m..(n + 1) * m]
    }

    pub fn field(&self, n: usize) -> Field<T> {
        Field::new(self.mesh.clone(), self.step(n).to_vec()).expect("step sized to the mesh")
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn min_max(&self) -> (T, T) {
        self.values
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Writes `step_<n>.csv` for each requested time index and a
    /// `manifest.json` with the time grid and QoI specification. Returns the
    /// paths written.
    pub fn export(&self, dir: &Path, steps: &[usize], qoi: &QoISpec) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::with_capacity(steps.len() + 1);
        for &n in steps {
            if n > self.n_steps() {
                return Err(Error::InvalidArgument(format!(
                    "time index {n} beyond the last step {}",
                    self.n_steps()
                )));
            }
            let path = dir.join(format!("step_{n:05}.csv"));
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            self.field(n).write_csv(&mut w).map_err(|e| Error::io(&path, e))?;
            w.flush().map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        let manifest = TrajectoryManifest {
            dt: self.grid.dt().as_f64(),
            n_steps: self.n_steps(),
            steps: steps.to_vec(),
            qoi_spec: qoi.clone(),
        };
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Parse(e.to_string()))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub dt: f64,
    pub n_steps: usize,
    pub steps: Vec<usize>,
    pub qoi_spec: QoISpec,
}

impl<T: Real> StateVector<T> for Trajectory<T> {
    fn zeros_like(&self) -> Self {
        Trajectory::zeros(self.mesh.clone(), self.grid)
    }

    fn dot(&self, other: &Self) -> T {
        crate::scalar::dot(&self.values, &other.values)
    }

    fn axpy(&mut self, a: T, x: &Self) {
        crate::scalar::axpy(&mut self.values, a, &x.values);
    }

    fn scale(&mut self, a: T) {
        for v in &mut self.values {
            *v *= a;
        }
    }
}
