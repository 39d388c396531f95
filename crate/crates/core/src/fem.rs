//! Periodic finite-element assembly and iterative solvers.
//!
//! Everything runs on uniform tensor-product meshes with multilinear (Q1)
//! elements: vector elliptic operators with per-cell matrix coefficients,
//! Stokes-type saddle blocks with equal-order pressure stabilization,
//! conjugate gradients for the definite systems and MINRES for the
//! indefinite ones. Assembly is deterministic: identical inputs produce
//! bit-identical operators.

use crate::coeffs::check_matrix_spd;
use crate::error::{Error, Result};
use crate::geometry::{PeriodicMesh, Phase};

/// Compressed-sparse-row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl CsrMatrix {
    /// Builds from triplets; duplicates are summed in insertion order, so a
    /// deterministic assembly order gives a bit-identical matrix.
    pub fn from_triplets(nrows: usize, ncols: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|a| (a.0, a.1));
        let mut col_idx = Vec::with_capacity(t.len());
        let mut values: Vec<f64> = Vec::with_capacity(t.len());
        let mut row_counts = vec![0usize; nrows];
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in t {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_counts[r] += 1;
                last = Some((r, c));
            }
        }
        let mut row_ptr = vec![0usize; nrows + 1];
        for i in 0..nrows {
            row_ptr[i + 1] = row_ptr[i] + row_counts[i];
        }
        Self { nrows, ncols, row_ptr, col_idx, values, symmetric: false }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    /// Verifies the symmetry defect and sets the flag; panics in tests if a
    /// caller claims symmetry the data does not have.
    pub fn flag_symmetric(mut self) -> Self {
        let defect = self.symmetry_defect();
        assert!(defect < 1e-12, "operator flagged symmetric but defect is {defect}");
        self.symmetric = true;
        self
    }

    /// `max |A - A^T|` entry-wise.
    pub fn symmetry_defect(&self) -> f64 {
        let mut defect: f64 = 0.0;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let v = self.values[k];
                let vt = self.get(c, r).unwrap_or(0.0);
                defect = defect.max((v - vt).abs());
            }
        }
        defect
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        if r >= self.nrows {
            return None;
        }
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.col_idx[lo..hi]
            .binary_search(&c)
            .ok()
            .map(|k| self.values[lo + k])
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[r] = acc;
        }
    }

    /// `y += A^T x`.
    pub fn matvec_transpose_add(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr == 0.0 {
                continue;
            }
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i).unwrap_or(0.0))
            .collect()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[k], self.values[k]));
            }
        }
        out
    }

    pub fn transpose(&self) -> CsrMatrix {
        let t = self
            .triplets()
            .into_iter()
            .map(|(r, c, v)| (c, r, v))
            .collect();
        CsrMatrix::from_triplets(self.ncols, self.nrows, t)
    }

    /// Plain-text export in matrix-market coordinate format.
    pub fn write_matrix_market(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(w, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for r in 0..self.nrows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                writeln!(w, "{} {} {:.17e}", r + 1, self.col_idx[k] + 1, self.values[k])?;
            }
        }
        Ok(())
    }
}

/// Weighted sum of sparse matrices plus an optional scaled diagonal, all on
/// one square dof space.
pub fn linear_combination(
    n: usize,
    parts: &[(&CsrMatrix, f64)],
    diag: Option<(&[f64], f64)>,
) -> CsrMatrix {
    let mut triplets = Vec::new();
    if let Some((d, s)) = diag {
        debug_assert_eq!(d.len(), n);
        for (i, &v) in d.iter().enumerate() {
            if v != 0.0 {
                triplets.push((i, i, s * v));
            }
        }
    }
    for (m, s) in parts {
        if *s == 0.0 {
            continue;
        }
        debug_assert_eq!(m.nrows(), n);
        for (r, c, v) in m.triplets() {
            triplets.push((r, c, s * v));
        }
    }
    CsrMatrix::from_triplets(n, n, triplets)
}

/// Splits into symmetric and skew parts.
pub fn split_symmetric(m: &CsrMatrix) -> (CsrMatrix, CsrMatrix) {
    let t = m.transpose();
    let mut sym = Vec::new();
    let mut skew = Vec::new();
    for (r, c, v) in m.triplets() {
        sym.push((r, c, 0.5 * v));
        skew.push((r, c, 0.5 * v));
    }
    for (r, c, v) in t.triplets() {
        sym.push((r, c, 0.5 * v));
        skew.push((r, c, -0.5 * v));
    }
    (
        CsrMatrix::from_triplets(m.nrows(), m.ncols(), sym),
        CsrMatrix::from_triplets(m.nrows(), m.ncols(), skew),
    )
}

/// Plain-text vector export companion to the matrix-market writer.
pub fn write_vector(v: &[f64], w: &mut impl std::io::Write) -> std::io::Result<()> {
    writeln!(w, "%%MatrixMarket matrix array real general")?;
    writeln!(w, "{} 1", v.len())?;
    for x in v {
        writeln!(w, "{x:.17e}")?;
    }
    Ok(())
}

/// Active-node bookkeeping: maps (node, component) pairs to contiguous
/// unknowns after Dirichlet elimination. Periodic identification is already
/// built into the mesh node numbering.
#[derive(Debug, Clone)]
pub struct DofMap {
    ncomp: usize,
    node_to_active: Vec<usize>,
    active_nodes: Vec<usize>,
}

const INACTIVE: usize = usize::MAX;

impl DofMap {
    pub fn new(active: &[bool], ncomp: usize) -> Self {
        let mut node_to_active = vec![INACTIVE; active.len()];
        let mut active_nodes = Vec::new();
        for (n, &a) in active.iter().enumerate() {
            if a {
                node_to_active[n] = active_nodes.len();
                active_nodes.push(n);
            }
        }
        Self { ncomp, node_to_active, active_nodes }
    }

    pub fn all(n_nodes: usize, ncomp: usize) -> Self {
        Self::new(&vec![true; n_nodes], ncomp)
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn n_dofs(&self) -> usize {
        self.active_nodes.len() * self.ncomp
    }

    pub fn n_nodes(&self) -> usize {
        self.node_to_active.len()
    }

    pub fn is_active(&self, node: usize) -> bool {
        self.node_to_active[node] != INACTIVE
    }

    pub fn dof(&self, node: usize, comp: usize) -> Option<usize> {
        debug_assert!(comp < self.ncomp);
        let a = self.node_to_active[node];
        (a != INACTIVE).then(|| a * self.ncomp + comp)
    }

    pub fn active_nodes(&self) -> &[usize] {
        &self.active_nodes
    }

    /// Expands a reduced vector to full nodal layout (zeros at constrained
    /// nodes).
    pub fn scatter(&self, reduced: &[f64]) -> Vec<f64> {
        debug_assert_eq!(reduced.len(), self.n_dofs());
        let mut full = vec![0.0; self.n_nodes() * self.ncomp];
        for (a, &n) in self.active_nodes.iter().enumerate() {
            for c in 0..self.ncomp {
                full[n * self.ncomp + c] = reduced[a * self.ncomp + c];
            }
        }
        full
    }

    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        debug_assert_eq!(full.len(), self.n_nodes() * self.ncomp);
        let mut reduced = vec![0.0; self.n_dofs()];
        for (a, &n) in self.active_nodes.iter().enumerate() {
            for c in 0..self.ncomp {
                reduced[a * self.ncomp + c] = full[n * self.ncomp + c];
            }
        }
        reduced
    }
}

/// Dirichlet-zero node sets. Periodic identifications live in the mesh; the
/// zero-mean normalization of singular periodic solves is a solver option.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    dirichlet: Vec<bool>,
}

impl ConstraintSet {
    pub fn none(mesh: &PeriodicMesh) -> Self {
        Self { dirichlet: vec![false; mesh.n_nodes()] }
    }

    /// Constrains the outer boundary of a box mesh.
    pub fn boundary(mesh: &PeriodicMesh) -> Self {
        let dirichlet = (0..mesh.n_nodes()).map(|n| mesh.is_boundary_node(n)).collect();
        Self { dirichlet }
    }

    /// Constrains every node touching a cell of the given phase: the nodal
    /// transfer of "field vanishes in the other phase", interface included.
    pub fn phase_interface(mesh: &PeriodicMesh, forbidden: Phase) -> Self {
        let mut dirichlet = vec![false; mesh.n_nodes()];
        for c in 0..mesh.n_cells() {
            if mesh.phase(c) == forbidden {
                for n in mesh.cell_nodes(c) {
                    dirichlet[n] = true;
                }
            }
        }
        Self { dirichlet }
    }

    pub fn union(&self, other: &Self) -> Self {
        let dirichlet = self
            .dirichlet
            .iter()
            .zip(&other.dirichlet)
            .map(|(a, b)| a | b)
            .collect();
        Self { dirichlet }
    }

    pub fn is_constrained(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    pub fn dof_map(&self, ncomp: usize) -> DofMap {
        let active: Vec<bool> = self.dirichlet.iter().map(|d| !d).collect();
        DofMap::new(&active, ncomp)
    }
}

/// Q1 element integrals on one (shared) cell of a uniform mesh.
#[derive(Debug, Clone)]
pub struct ElementMatrices {
    dim: usize,
    corners: usize,
    /// `grad_grad[j*dim + l][a*corners + b] = int d_j phi_a d_l phi_b`.
    pub grad_grad: Vec<Vec<f64>>,
    /// `val_grad[j][a*corners + b] = int phi_a d_j phi_b`.
    pub val_grad: Vec<Vec<f64>>,
    /// `grad_integral[j][a] = int d_j phi_a`.
    pub grad_integral: Vec<Vec<f64>>,
    /// Row-sum lumped mass per corner: `vol / 2^dim`.
    pub mass_lumped: f64,
    pub volume: f64,
}

impl ElementMatrices {
    pub fn new(spacing: &[f64]) -> Self {
        let dim = spacing.len();
        let corners = 1usize << dim;
        let volume: f64 = spacing.iter().product();
        // two-point Gauss per axis on [0,1], exact for the bilinear products
        let gp = [0.5 - 0.5 / 3.0_f64.sqrt(), 0.5 + 0.5 / 3.0_f64.sqrt()];
        let npts = 1usize << dim; // 2 points per axis
        let weight = volume / npts as f64;

        let shape = |a: usize, xi: &[f64]| -> f64 {
            (0..dim)
                .map(|d| if (a >> d) & 1 == 1 { xi[d] } else { 1.0 - xi[d] })
                .product()
        };
        let dshape = |a: usize, j: usize, xi: &[f64]| -> f64 {
            let mut v = if (a >> j) & 1 == 1 { 1.0 } else { -1.0 } / spacing[j];
            for d in 0..dim {
                if d != j {
                    v *= if (a >> d) & 1 == 1 { xi[d] } else { 1.0 - xi[d] };
                }
            }
            v
        };

        let mut grad_grad = vec![vec![0.0; corners * corners]; dim * dim];
        let mut val_grad = vec![vec![0.0; corners * corners]; dim];
        let mut grad_integral = vec![vec![0.0; corners]; dim];
        let mut xi = vec![0.0; dim];
        for p in 0..npts {
            for d in 0..dim {
                xi[d] = gp[(p >> d) & 1];
            }
            for a in 0..corners {
                let va = shape(a, &xi);
                let ga: Vec<f64> = (0..dim).map(|j| dshape(a, j, &xi)).collect();
                for j in 0..dim {
                    grad_integral[j][a] += weight * ga[j];
                }
                for b in 0..corners {
                    let gb: Vec<f64> = (0..dim).map(|l| dshape(b, l, &xi)).collect();
                    for j in 0..dim {
                        val_grad[j][a * corners + b] += weight * va * gb[j];
                        for l in 0..dim {
                            grad_grad[j * dim + l][a * corners + b] += weight * ga[j] * gb[l];
                        }
                    }
                }
            }
        }
        Self {
            dim,
            corners,
            grad_grad,
            val_grad,
            grad_integral,
            mass_lumped: volume / corners as f64,
            volume,
        }
    }

    pub fn corners(&self) -> usize {
        self.corners
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

fn mask_allows(mask: Option<Phase>, phase: Phase) -> bool {
    mask.is_none_or(|m| m == phase)
}

/// Stiffness of `(w, z) -> int_masked coeff grad w : grad z` for a vector
/// field with `map.ncomp()` components; the coefficient acts on the
/// derivative index, so components decouple. Fails with a coercivity error
/// when a masked cell sample is not symmetric positive definite.
pub fn assemble_vector_elliptic(
    mesh: &PeriodicMesh,
    map: &DofMap,
    coeff_per_cell: &[f64],
    mask: Option<Phase>,
) -> Result<CsrMatrix> {
    let m = assemble_gradient_coupling(mesh, map, coeff_per_cell, mask, true)?;
    Ok(m.flag_symmetric())
}

/// Same bilinear form without the coercivity gate; memory kernels are merely
/// bounded, not definite.
pub fn assemble_gradient_coupling(
    mesh: &PeriodicMesh,
    map: &DofMap,
    coeff_per_cell: &[f64],
    mask: Option<Phase>,
    require_spd: bool,
) -> Result<CsrMatrix> {
    let dim = mesh.dim();
    let ncomp = map.ncomp();
    let em = ElementMatrices::new(&mesh.spacing());
    let corners = em.corners();
    debug_assert_eq!(coeff_per_cell.len(), mesh.n_cells() * dim * dim);

    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        if !mask_allows(mask, mesh.phase(cell)) {
            continue;
        }
        let coeff = &coeff_per_cell[cell * dim * dim..(cell + 1) * dim * dim];
        if require_spd {
            check_matrix_spd(coeff, dim)
                .map_err(|why| Error::CoercivityViolation(format!("cell {cell}: {why}")))?;
        }
        let nodes = mesh.cell_nodes(cell);
        for a in 0..corners {
            for b in 0..corners {
                let mut k = 0.0;
                for j in 0..dim {
                    for l in 0..dim {
                        k += coeff[j * dim + l] * em.grad_grad[j * dim + l][a * corners + b];
                    }
                }
                if k == 0.0 {
                    continue;
                }
                for comp in 0..ncomp {
                    if let (Some(ra), Some(cb)) =
                        (map.dof(nodes[a], comp), map.dof(nodes[b], comp))
                    {
                        triplets.push((ra, cb, k));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(map.n_dofs(), map.n_dofs(), triplets))
}

/// Right-hand side `-int_masked (coeff xi) : grad psi` driving a corrector
/// for the constant gradient load `xi` (row-major `ncomp x dim`).
pub fn corrector_load_vector(
    mesh: &PeriodicMesh,
    map: &DofMap,
    coeff_per_cell: &[f64],
    xi: &[f64],
    mask: Option<Phase>,
) -> Vec<f64> {
    let dim = mesh.dim();
    let ncomp = map.ncomp();
    let em = ElementMatrices::new(&mesh.spacing());
    let corners = em.corners();
    let mut rhs = vec![0.0; map.n_dofs()];
    for cell in 0..mesh.n_cells() {
        if !mask_allows(mask, mesh.phase(cell)) {
            continue;
        }
        let coeff = &coeff_per_cell[cell * dim * dim..(cell + 1) * dim * dim];
        // stress of the constant load: (coeff xi)_{i j} = sum_l coeff[j][l] xi[i][l]
        let mut stress = vec![0.0; ncomp * dim];
        for i in 0..ncomp {
            for j in 0..dim {
                let mut s = 0.0;
                for l in 0..dim {
                    s += coeff[j * dim + l] * xi[i * dim + l];
                }
                stress[i * dim + j] = s;
            }
        }
        let nodes = mesh.cell_nodes(cell);
        for a in 0..corners {
            for i in 0..ncomp {
                if let Some(dof) = map.dof(nodes[a], i) {
                    let mut v = 0.0;
                    for j in 0..dim {
                        v += stress[i * dim + j] * em.grad_integral[j][a];
                    }
                    rhs[dof] -= v;
                }
            }
        }
    }
    rhs
}

/// Negative divergence coupling: `(D v)_q = -int_masked q div v`.
pub fn assemble_divergence(
    mesh: &PeriodicMesh,
    vmap: &DofMap,
    pmap: &DofMap,
    mask: Phase,
) -> CsrMatrix {
    let dim = mesh.dim();
    let em = ElementMatrices::new(&mesh.spacing());
    let corners = em.corners();
    debug_assert_eq!(pmap.ncomp(), 1);
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        if mesh.phase(cell) != mask {
            continue;
        }
        let nodes = mesh.cell_nodes(cell);
        for a in 0..corners {
            let Some(row) = pmap.dof(nodes[a], 0) else { continue };
            for b in 0..corners {
                for j in 0..dim {
                    if let Some(col) = vmap.dof(nodes[b], j) {
                        let v = -em.val_grad[j][a * corners + b];
                        if v != 0.0 {
                            triplets.push((row, col, v));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(pmap.n_dofs(), vmap.n_dofs(), triplets)
}

/// Brezzi-Pitkaranta pressure stabilization `delta sum_j h_j^2 (d_j p, d_j q)`
/// over masked cells; makes equal-order velocity/pressure pairs solvable.
pub fn assemble_pressure_stabilization(
    mesh: &PeriodicMesh,
    pmap: &DofMap,
    mask: Phase,
    delta: f64,
) -> CsrMatrix {
    let dim = mesh.dim();
    let em = ElementMatrices::new(&mesh.spacing());
    let corners = em.corners();
    let h = mesh.spacing();
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        if mesh.phase(cell) != mask {
            continue;
        }
        let nodes = mesh.cell_nodes(cell);
        for a in 0..corners {
            let Some(row) = pmap.dof(nodes[a], 0) else { continue };
            for b in 0..corners {
                let Some(col) = pmap.dof(nodes[b], 0) else { continue };
                let mut v = 0.0;
                for j in 0..dim {
                    v += delta * h[j] * h[j] * em.grad_grad[j * dim + j][a * corners + b];
                }
                if v != 0.0 {
                    triplets.push((row, col, v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(pmap.n_dofs(), pmap.n_dofs(), triplets).flag_symmetric()
}

/// Row-sum lumped mass diagonal weighted by a per-cell density.
pub fn lumped_mass(
    mesh: &PeriodicMesh,
    map: &DofMap,
    density_per_cell: &[f64],
    mask: Option<Phase>,
) -> Vec<f64> {
    let em = ElementMatrices::new(&mesh.spacing());
    let ncomp = map.ncomp();
    let mut diag = vec![0.0; map.n_dofs()];
    for cell in 0..mesh.n_cells() {
        if !mask_allows(mask, mesh.phase(cell)) {
            continue;
        }
        let w = em.mass_lumped * density_per_cell[cell];
        for n in mesh.cell_nodes(cell) {
            for c in 0..ncomp {
                if let Some(dof) = map.dof(n, c) {
                    diag[dof] += w;
                }
            }
        }
    }
    diag
}

/// Load vector from a per-cell constant vector density (lumped).
pub fn load_vector(
    mesh: &PeriodicMesh,
    map: &DofMap,
    per_cell: impl Fn(usize) -> Vec<f64>,
    mask: Option<Phase>,
) -> Vec<f64> {
    let em = ElementMatrices::new(&mesh.spacing());
    let ncomp = map.ncomp();
    let mut rhs = vec![0.0; map.n_dofs()];
    for cell in 0..mesh.n_cells() {
        if !mask_allows(mask, mesh.phase(cell)) {
            continue;
        }
        let f = per_cell(cell);
        for n in mesh.cell_nodes(cell) {
            for c in 0..ncomp {
                if let Some(dof) = map.dof(n, c) {
                    rhs[dof] += em.mass_lumped * f[c];
                }
            }
        }
    }
    rhs
}

/// Cell-averaged gradient of a full nodal vector field: row-major
/// `ncomp x dim` for one cell.
pub fn cell_gradient(
    mesh: &PeriodicMesh,
    em: &ElementMatrices,
    full: &[f64],
    ncomp: usize,
    cell: usize,
) -> Vec<f64> {
    let dim = mesh.dim();
    let nodes = mesh.cell_nodes(cell);
    let mut g = vec![0.0; ncomp * dim];
    for (b, &n) in nodes.iter().enumerate() {
        for i in 0..ncomp {
            let v = full[n * ncomp + i];
            if v == 0.0 {
                continue;
            }
            for j in 0..dim {
                g[i * dim + j] += v * em.grad_integral[j][b];
            }
        }
    }
    let inv_vol = 1.0 / em.volume;
    for x in &mut g {
        *x *= inv_vol;
    }
    g
}

/// Options shared by the iterative solvers.
#[derive(Debug, Clone)]
pub struct SolveOpts {
    pub tol: f64,
    pub max_iter: usize,
    /// Project out per-component constants (null space of pure periodic
    /// Neumann operators). The value is the component count.
    pub zero_mean_comps: Option<usize>,
}

impl Default for SolveOpts {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 50_000, zero_mean_comps: None }
    }
}

fn project_zero_mean(x: &mut [f64], ncomp: usize) {
    let n = x.len() / ncomp;
    for c in 0..ncomp {
        let mean: f64 = (0..n).map(|i| x[i * ncomp + c]).sum::<f64>() / n as f64;
        for i in 0..n {
            x[i * ncomp + c] -= mean;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Conjugate gradients for symmetric positive (semi-)definite operators.
///
/// With `zero_mean_comps` set, right-hand side and iterates are kept
/// orthogonal to per-component constants, which solves the compatible
/// projected problem for singular periodic operators.
pub fn solve_spd(a: &CsrMatrix, rhs: &[f64], opts: &SolveOpts) -> Result<Vec<f64>> {
    let n = a.nrows();
    debug_assert_eq!(rhs.len(), n);
    let mut b = rhs.to_vec();
    if let Some(ncomp) = opts.zero_mean_comps {
        project_zero_mean(&mut b, ncomp);
    }
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.clone();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..opts.max_iter {
        a.matvec(&p, &mut ap);
        if let Some(ncomp) = opts.zero_mean_comps {
            project_zero_mean(&mut ap, ncomp);
        }
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverDiverged {
                solver: "cg",
                residual: rr.sqrt() / bnorm,
                iterations: opts.max_iter,
            });
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= opts.tol * bnorm {
            if let Some(ncomp) = opts.zero_mean_comps {
                project_zero_mean(&mut x, ncomp);
            }
            return Ok(x);
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::SolverDiverged {
        solver: "cg",
        residual: rr.sqrt() / bnorm,
        iterations: opts.max_iter,
    })
}

/// Symmetric indefinite saddle operator `[[A, D^T], [D, -S]]` acting on the
/// concatenated (velocity, pressure) vector.
pub struct SaddleBlocks<'a> {
    pub a: &'a CsrMatrix,
    pub div: &'a CsrMatrix,
    pub stab: &'a CsrMatrix,
    /// Extra diagonal added to the velocity block (mass shifts in time
    /// stepping); empty for none.
    pub vel_diag: &'a [f64],
}

impl SaddleBlocks<'_> {
    pub fn nv(&self) -> usize {
        self.a.nrows()
    }

    pub fn np(&self) -> usize {
        self.div.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nv = self.nv();
        let np = self.np();
        let (xv, xp) = x.split_at(nv);
        {
            let (yv, yp) = y.split_at_mut(nv);
            self.a.matvec(xv, yv);
            if !self.vel_diag.is_empty() {
                for i in 0..nv {
                    yv[i] += self.vel_diag[i] * xv[i];
                }
            }
            self.div.matvec_transpose_add(xp, yv);
            self.div.matvec(xv, yp);
            let mut sp = vec![0.0; np];
            self.stab.matvec(xp, &mut sp);
            for i in 0..np {
                yp[i] -= sp[i];
            }
        }
    }
}

/// Options for the saddle-point solve.
#[derive(Debug, Clone)]
pub struct SaddleOpts {
    pub tol: f64,
    pub max_iter: usize,
    /// Project the pressure right-hand side onto the range (removes the
    /// constant-pressure incompatibility of enclosed cells) and return the
    /// pressure with zero weighted mean.
    pub project_pressure_null: bool,
}

impl Default for SaddleOpts {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 100_000, project_pressure_null: false }
    }
}

/// MINRES for the symmetric indefinite saddle system. Returns (velocity,
/// pressure); with the projection flag the pressure weighted mean is exactly
/// zero.
pub fn solve_saddle(
    blocks: &SaddleBlocks,
    rhs_v: &[f64],
    rhs_p: &[f64],
    pressure_weights: &[f64],
    opts: &SaddleOpts,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nv = blocks.nv();
    let np = blocks.np();
    let n = nv + np;
    let mut b = Vec::with_capacity(n);
    b.extend_from_slice(rhs_v);
    b.extend_from_slice(rhs_p);
    if opts.project_pressure_null && np > 0 {
        // the null vector is (0, 1_p); consistency needs the plain mean out
        let mean: f64 = b[nv..].iter().sum::<f64>() / np as f64;
        for x in &mut b[nv..] {
            *x -= mean;
        }
    }
    let bnorm = norm(&b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; nv], vec![0.0; np]));
    }

    let mut x = vec![0.0; n];
    let mut v_old = vec![0.0; n];
    let mut v = b.clone();
    let beta1 = bnorm;
    for e in &mut v {
        *e /= beta1;
    }
    let mut w = vec![0.0; n];
    let mut w_old = vec![0.0; n];
    let (mut c, mut c_old) = (1.0f64, 1.0f64);
    let (mut s, mut s_old) = (0.0f64, 0.0f64);
    let mut eta = beta1;
    let mut beta = 0.0f64; // beta_k entering the iteration
    let mut t = vec![0.0; n];

    let mut converged = false;
    let mut iterations = 0;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        blocks.apply(&v, &mut t);
        for i in 0..n {
            t[i] -= beta * v_old[i];
        }
        let alpha = dot(&t, &v);
        for i in 0..n {
            t[i] -= alpha * v[i];
        }
        let beta_new = norm(&t);

        // Givens rotations updating the tridiagonal QR
        let rho1 = c * alpha - c_old * s * beta;
        let rho2 = s * alpha + c_old * c * beta;
        let rho3 = s_old * beta;
        let rho0 = (rho1 * rho1 + beta_new * beta_new).sqrt();
        if rho0 == 0.0 {
            break;
        }
        let c_new = rho1 / rho0;
        let s_new = beta_new / rho0;

        for i in 0..n {
            let wi = (v[i] - rho3 * w_old[i] - rho2 * w[i]) / rho0;
            w_old[i] = w[i];
            w[i] = wi;
            x[i] += c_new * eta * wi;
        }
        eta *= -s_new;

        std::mem::swap(&mut v_old, &mut v);
        // v = t / beta_new
        if beta_new > 0.0 {
            for i in 0..n {
                v[i] = t[i] / beta_new;
            }
        }
        c_old = c;
        s_old = s;
        c = c_new;
        s = s_new;
        beta = beta_new;

        if eta.abs() <= opts.tol * bnorm {
            converged = true;
            break;
        }
        if beta_new == 0.0 {
            converged = true;
            break;
        }
    }
    if !converged {
        // fall back to the true residual before declaring failure
        blocks.apply(&x, &mut t);
        let res: f64 = t
            .iter()
            .zip(&b)
            .map(|(ax, bi)| (ax - bi) * (ax - bi))
            .sum::<f64>()
            .sqrt();
        if res > opts.tol * bnorm * 10.0 {
            return Err(Error::SolverDiverged {
                solver: "minres",
                residual: res / bnorm,
                iterations,
            });
        }
    }

    let (xv, xp) = x.split_at(nv);
    let mut p = xp.to_vec();
    if opts.project_pressure_null && np > 0 {
        let wsum: f64 = pressure_weights.iter().sum();
        if wsum > 0.0 {
            let mean = dot(&p, pressure_weights) / wsum;
            for e in &mut p {
                *e -= mean;
            }
        }
    }
    Ok((xv.to_vec(), p))
}

/// Crude smallest-eigenvalue estimate by inverse iteration (CG inner solves);
/// used to check discrete coercivity on small meshes.
pub fn estimate_min_eigenvalue(a: &CsrMatrix, iters: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = a.nrows();
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let nx = norm(&x);
    for e in &mut x {
        *e /= nx;
    }
    let opts = SolveOpts { tol: 1e-8, max_iter: 10_000, zero_mean_comps: None };
    for _ in 0..iters {
        let y = solve_spd(a, &x, &opts)?;
        let ny = norm(&y);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / ny;
        }
    }
    let mut ax = vec![0.0; n];
    a.matvec(&x, &mut ax);
    Ok(dot(&x, &ax) / dot(&x, &x))
}
