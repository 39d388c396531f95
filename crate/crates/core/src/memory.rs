//! Memory (convolution) terms: trapezoidal Volterra quadrature against stored
//! field histories for the time steppers, and fast-time Fourier decomposition
//! of kernels for the cell problems.

use crate::ap::ndfft;
use crate::coeffs::KernelSpec;
use crate::error::{Error, Result};
use crate::geometry::PeriodicMesh;
use rustfft::num_complex::Complex64;

/// Matrix-valued kernel sampled per mesh cell in space and on a uniform
/// fast-time grid over one period.
#[derive(Debug, Clone)]
pub struct MemoryKernel {
    dim: usize,
    n_cells: usize,
    /// Row-major `dim x dim` matrix per cell.
    spatial_per_cell: Vec<f64>,
    /// Samples of the scalar temporal profile at `j / m_tau`.
    temporal_samples: Vec<f64>,
    continuous: bool,
}

impl MemoryKernel {
    /// Samples a separable kernel spec on the cell mesh with `m_tau` fast-time
    /// points.
    pub fn from_spec(spec: &KernelSpec, mesh: &PeriodicMesh, m_tau: usize) -> Result<Self> {
        if m_tau < 2 {
            return Err(Error::InvalidInput("fast-time grid needs at least 2 samples".into()));
        }
        let dim = mesh.dim();
        let n_cells = mesh.n_cells();
        let mut spatial_per_cell = Vec::with_capacity(n_cells * dim * dim);
        for c in 0..n_cells {
            let y = mesh.cell_center(c);
            let solid = mesh.phase(c) == crate::geometry::Phase::Solid;
            spatial_per_cell.extend(spec.spatial.eval_phase(&y, solid));
        }
        let temporal_samples: Vec<f64> =
            (0..m_tau).map(|j| spec.temporal_value(j as f64 / m_tau as f64)).collect();
        let k = Self { dim, n_cells, spatial_per_cell, temporal_samples, continuous: true };
        k.check_bounded()?;
        Ok(k)
    }

    /// Raw samples; `continuous = false` marks kernels whose fast-time data
    /// may jump, which blocks the Fourier treatment.
    pub fn from_samples(
        dim: usize,
        n_cells: usize,
        spatial_per_cell: Vec<f64>,
        temporal_samples: Vec<f64>,
        continuous: bool,
    ) -> Result<Self> {
        if spatial_per_cell.len() != n_cells * dim * dim {
            return Err(Error::GridMismatch("spatial sample count mismatch".into()));
        }
        if temporal_samples.len() < 2 {
            return Err(Error::InvalidInput("fast-time grid needs at least 2 samples".into()));
        }
        let k = Self { dim, n_cells, spatial_per_cell, temporal_samples, continuous };
        k.check_bounded()?;
        Ok(k)
    }

    fn check_bounded(&self) -> Result<()> {
        let ok = self.spatial_per_cell.iter().all(|v| v.is_finite())
            && self.temporal_samples.iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("kernel samples must be bounded".into()))
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn m_tau(&self) -> usize {
        self.temporal_samples.len()
    }

    pub fn temporal_samples(&self) -> &[f64] {
        &self.temporal_samples
    }

    pub fn spatial_matrix(&self, cell: usize) -> &[f64] {
        &self.spatial_per_cell[cell * self.dim * self.dim..(cell + 1) * self.dim * self.dim]
    }
}

/// Time-indexed nodal vectors retained for the convolution quadrature.
#[derive(Debug, Clone)]
pub struct FieldHistory {
    dt: f64,
    steps: Vec<Vec<f64>>,
}

impl FieldHistory {
    pub fn new(dt: f64) -> Self {
        assert!(dt > 0.0, "time step must be positive");
        Self { dt, steps: Vec::new() }
    }

    pub fn push(&mut self, v: Vec<f64>) {
        if let Some(first) = self.steps.first() {
            assert_eq!(first.len(), v.len(), "history entries must share their length");
        }
        self.steps.push(v);
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.steps[j]
    }
}

/// Trapezoidal approximation of `int_0^{t_n} k(t_n - s) g(s) ds` from stored
/// history; second order for smooth integrands, `O(n)` per call.
pub fn volterra_convolve(kernel_in_t: &[f64], history: &FieldHistory, n: usize) -> Result<Vec<f64>> {
    if history.len() < n + 1 {
        return Err(Error::HistoryError { have: history.len(), want: n + 1 });
    }
    if kernel_in_t.len() < n + 1 {
        return Err(Error::HistoryError { have: kernel_in_t.len(), want: n + 1 });
    }
    let width = history.get(0).len();
    let mut acc = vec![0.0; width];
    if n == 0 {
        return Ok(acc);
    }
    let dt = history.dt();
    for j in 0..=n {
        let w = if j == 0 || j == n { 0.5 * dt } else { dt };
        let k = kernel_in_t[n - j];
        if k == 0.0 {
            continue;
        }
        let g = history.get(j);
        for (a, &gi) in acc.iter_mut().zip(g) {
            *a += w * k * gi;
        }
    }
    Ok(acc)
}

/// Discrete Fourier modes of the fast-time samples: `modes[m] = (1/M) sum_j
/// k_j exp(-2 pi i j m / M)`, so mode 0 is the fast-time mean. Rejects
/// kernels marked discontinuous.
pub fn kernel_fast_time_modes(k: &MemoryKernel) -> Result<Vec<Complex64>> {
    if !k.continuous {
        return Err(Error::InvalidInput(
            "kernel marked discontinuous in fast time; Fourier treatment skipped".into(),
        ));
    }
    let m = k.m_tau();
    let mut data: Vec<Complex64> =
        k.temporal_samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    ndfft(&mut data, &[m], false);
    let scale = 1.0 / m as f64;
    for x in &mut data {
        *x *= scale;
    }
    Ok(data)
}

/// Fast-time mean of the kernel as a per-cell matrix field: the only kernel
/// content that survives convolution against fast-time-independent fields.
pub fn effective_time_average(k: &MemoryKernel) -> Vec<f64> {
    let mean: f64 =
        k.temporal_samples.iter().sum::<f64>() / k.temporal_samples.len() as f64;
    k.spatial_per_cell.iter().map(|v| v * mean).collect()
}

/// Largest admissible step for resolving a kernel oscillating at fast time
/// `t / epsilon`: an eighth of the shortest oscillation period.
pub fn max_resolved_dt(spec: &KernelSpec, epsilon: f64) -> Option<f64> {
    let cycles = spec.max_temporal_cycles();
    (cycles > 0.0 && !spec.is_zero()).then(|| epsilon / (8.0 * cycles))
}
