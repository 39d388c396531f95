//! Reference-cell geometry, phase-tagged periodic meshes, and the scaled
//! perforated domain built by tiling the cell across a pore layout.

use crate::ap::{detect_period, PoreDistribution};
use crate::error::{Error, Result};

/// Inclusion shapes for the solid part of the unit cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellShape {
    /// Ball (interval/disk/ball by dimension) strictly inside the cell.
    Disk { center: Vec<f64>, radius: f64 },
    /// Axis-aligned box strictly inside the cell.
    AxisBox { corner: Vec<f64>, sides: Vec<f64> },
    /// Solid slab `0 <= y_axis < thickness` spanning the cell. Touches the
    /// cell boundary, so it is a validation-only geometry and excluded from
    /// fluid solves; `thickness = 1` gives an all-solid validation cell.
    Laminate { axis: usize, thickness: f64 },
}

/// The unit reference cell with its solid/fluid partition.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    dim: usize,
    shape: CellShape,
    validation_only: bool,
}

/// Validates shape parameters and returns the cell with evaluable phase
/// indicators.
pub fn build_cell(dim: usize, shape: CellShape) -> Result<CellGeometry> {
    if !(1..=3).contains(&dim) {
        return Err(Error::GeometryViolation(format!("dimension {dim} unsupported")));
    }
    let validation_only = match &shape {
        CellShape::Disk { center, radius } => {
            if center.len() != dim {
                return Err(Error::GeometryViolation("disk center dimension mismatch".into()));
            }
            if !(*radius > 0.0) {
                return Err(Error::GeometryViolation("disk radius must be positive".into()));
            }
            for &c in center {
                if c - radius <= 0.0 || c + radius >= 1.0 {
                    return Err(Error::GeometryViolation(format!(
                        "disk of radius {radius} at {center:?} touches the cell boundary"
                    )));
                }
            }
            false
        }
        CellShape::AxisBox { corner, sides } => {
            if corner.len() != dim || sides.len() != dim {
                return Err(Error::GeometryViolation("box spec dimension mismatch".into()));
            }
            for (&c, &s) in corner.iter().zip(sides) {
                if !(s > 0.0) || c <= 0.0 || c + s >= 1.0 {
                    return Err(Error::GeometryViolation(format!(
                        "box corner {corner:?} sides {sides:?} not strictly inside the cell"
                    )));
                }
            }
            false
        }
        CellShape::Laminate { axis, thickness } => {
            if *axis >= dim {
                return Err(Error::GeometryViolation(format!("laminate axis {axis} out of range")));
            }
            if !(*thickness > 0.0 && *thickness <= 1.0) {
                return Err(Error::GeometryViolation("laminate thickness must lie in (0, 1]".into()));
            }
            true
        }
    };
    Ok(CellGeometry { dim, shape, validation_only })
}

impl CellGeometry {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &CellShape {
        &self.shape
    }

    /// Laminates touch the cell boundary; they stay out of fluid solves.
    pub fn validation_only(&self) -> bool {
        self.validation_only
    }

    /// Solid indicator on the unit cell.
    pub fn chi1(&self, y: &[f64]) -> bool {
        match &self.shape {
            CellShape::Disk { center, radius } => {
                let r2: f64 = center.iter().zip(y).map(|(c, x)| (x - c) * (x - c)).sum();
                r2 <= radius * radius
            }
            CellShape::AxisBox { corner, sides } => corner
                .iter()
                .zip(sides)
                .zip(y)
                .all(|((c, s), x)| *x >= *c && *x <= c + s),
            CellShape::Laminate { axis, thickness } => y[*axis] < *thickness,
        }
    }

    /// Fluid indicator; complements `chi1` pointwise.
    pub fn chi2(&self, y: &[f64]) -> bool {
        !self.chi1(y)
    }

    /// Closed-form solid volume.
    pub fn analytic_solid_volume(&self) -> f64 {
        match &self.shape {
            CellShape::Disk { radius, .. } => match self.dim {
                1 => 2.0 * radius,
                2 => std::f64::consts::PI * radius * radius,
                _ => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
            },
            CellShape::AxisBox { sides, .. } => sides.iter().product(),
            CellShape::Laminate { thickness, .. } => *thickness,
        }
    }
}

/// Numerical `(|Y1|, |Y2|)` by midpoint quadrature; the two fractions sum to
/// one exactly because they come from one count.
pub fn volume_fractions(geom: &CellGeometry, resolution: usize) -> (f64, f64) {
    assert!(resolution >= 2, "resolution must be at least 2");
    let dim = geom.dim;
    let total = resolution.pow(dim as u32);
    let mut solid = 0usize;
    let mut y = vec![0.0; dim];
    for flat in 0..total {
        let mut rest = flat;
        for d in 0..dim {
            y[d] = (rest % resolution) as f64 / resolution as f64 + 0.5 / resolution as f64;
            rest /= resolution;
        }
        if geom.chi1(&y) {
            solid += 1;
        }
    }
    let s = solid as f64 / total as f64;
    (s, (total - solid) as f64 / total as f64)
}

/// Phase tag of a mesh cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Solid,
    Fluid,
}

/// Node identification rule at the domain boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshTopology {
    /// Opposite faces identified; nodes live on the torus.
    Periodic,
    /// Plain box with boundary nodes (Dirichlet data applied by solvers).
    Box,
}

/// Uniform tensor-product mesh of axis-aligned cells with per-cell phase
/// tags. Interface-cut cells are tagged by the phase of their centroid.
#[derive(Debug, Clone)]
pub struct PeriodicMesh {
    dim: usize,
    cells_per_axis: Vec<usize>,
    lengths: Vec<f64>,
    topology: MeshTopology,
    phase: Vec<Phase>,
}

/// Virtual vertex grid, cell connectivity, and periodic identification map.
pub type MeshExport = (Vec<Vec<f64>>, Vec<Vec<usize>>, Vec<(usize, usize)>);

impl PeriodicMesh {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn topology(&self) -> MeshTopology {
        self.topology
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells_per_axis
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn spacing(&self) -> Vec<f64> {
        self.lengths
            .iter()
            .zip(&self.cells_per_axis)
            .map(|(l, &n)| l / n as f64)
            .collect()
    }

    pub fn n_cells(&self) -> usize {
        self.cells_per_axis.iter().product()
    }

    pub fn nodes_per_axis(&self) -> Vec<usize> {
        match self.topology {
            MeshTopology::Periodic => self.cells_per_axis.clone(),
            MeshTopology::Box => self.cells_per_axis.iter().map(|&n| n + 1).collect(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes_per_axis().iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub fn phase(&self, cell: usize) -> Phase {
        self.phase[cell]
    }

    pub fn phases(&self) -> &[Phase] {
        &self.phase
    }

    pub fn n_solid_cells(&self) -> usize {
        self.phase.iter().filter(|p| **p == Phase::Solid).count()
    }

    pub fn cell_index(&self, multi: &[usize]) -> usize {
        let mut flat = 0;
        for (d, &i) in multi.iter().enumerate() {
            flat = flat * self.cells_per_axis[d] + i;
        }
        flat
    }

    pub fn cell_multi_index(&self, cell: usize) -> Vec<usize> {
        let mut multi = vec![0; self.dim];
        let mut rest = cell;
        for d in (0..self.dim).rev() {
            multi[d] = rest % self.cells_per_axis[d];
            rest /= self.cells_per_axis[d];
        }
        multi
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let nodes = self.nodes_per_axis();
        let mut flat = 0;
        for (d, &i) in multi.iter().enumerate() {
            debug_assert!(i < nodes[d]);
            flat = flat * nodes[d] + i;
        }
        flat
    }

    pub fn node_multi_index(&self, node: usize) -> Vec<usize> {
        let nodes = self.nodes_per_axis();
        let mut multi = vec![0; self.dim];
        let mut rest = node;
        for d in (0..self.dim).rev() {
            multi[d] = rest % nodes[d];
            rest /= nodes[d];
        }
        multi
    }

    pub fn node_coords(&self, node: usize) -> Vec<f64> {
        let h = self.spacing();
        self.node_multi_index(node)
            .iter()
            .zip(&h)
            .map(|(&i, &hi)| i as f64 * hi)
            .collect()
    }

    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        let h = self.spacing();
        self.cell_multi_index(cell)
            .iter()
            .zip(&h)
            .map(|(&i, &hi)| (i as f64 + 0.5) * hi)
            .collect()
    }

    /// The `2^dim` node ids of a cell; local node `l` offsets axis `d` by bit
    /// `d` of `l`.
    pub fn cell_nodes(&self, cell: usize) -> Vec<usize> {
        let multi = self.cell_multi_index(cell);
        let corners = 1usize << self.dim;
        let nodes = self.nodes_per_axis();
        let mut out = Vec::with_capacity(corners);
        for l in 0..corners {
            let mut node_multi = Vec::with_capacity(self.dim);
            for d in 0..self.dim {
                let mut i = multi[d] + ((l >> d) & 1);
                if self.topology == MeshTopology::Periodic && i == nodes[d] {
                    i = 0;
                }
                node_multi.push(i);
            }
            out.push(self.node_index(&node_multi));
        }
        out
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        match self.topology {
            MeshTopology::Periodic => false,
            MeshTopology::Box => {
                let nodes = self.nodes_per_axis();
                self.node_multi_index(node)
                    .iter()
                    .zip(&nodes)
                    .any(|(&i, &n)| i == 0 || i == n - 1)
            }
        }
    }

    /// Virtual `(n+1)^dim` vertex list with the periodic identification map,
    /// for plain-text export and visualization.
    pub fn export_vertices(&self) -> MeshExport {
        let n = &self.cells_per_axis;
        let h = self.spacing();
        let vdims: Vec<usize> = n.iter().map(|&x| x + 1).collect();
        let vtotal: usize = vdims.iter().product();
        let flat = |multi: &[usize]| -> usize {
            let mut f = 0;
            for (d, &i) in multi.iter().enumerate() {
                f = f * vdims[d] + i;
            }
            f
        };
        let mut vertices = Vec::with_capacity(vtotal);
        let mut pairs = Vec::new();
        let mut multi = vec![0usize; self.dim];
        for v in 0..vtotal {
            let mut rest = v;
            for d in (0..self.dim).rev() {
                multi[d] = rest % vdims[d];
                rest /= vdims[d];
            }
            vertices.push(multi.iter().zip(&h).map(|(&i, &hi)| i as f64 * hi).collect());
            if self.topology == MeshTopology::Periodic {
                for d in 0..self.dim {
                    if multi[d] == n[d] {
                        let mut partner = multi.clone();
                        partner[d] = 0;
                        pairs.push((v, flat(&partner)));
                        break;
                    }
                }
            }
        }
        let mut cells = Vec::with_capacity(self.n_cells());
        for c in 0..self.n_cells() {
            let cm = self.cell_multi_index(c);
            let corners = 1usize << self.dim;
            let mut ids = Vec::with_capacity(corners);
            for l in 0..corners {
                let vm: Vec<usize> = (0..self.dim).map(|d| cm[d] + ((l >> d) & 1)).collect();
                ids.push(flat(&vm));
            }
            cells.push(ids);
        }
        (vertices, cells, pairs)
    }
}

impl PeriodicMesh {
    /// Plain box mesh of the unit domain (macroscopic solves); phase tags are
    /// all solid and unused there.
    pub fn unit_box(dim: usize, resolution: usize) -> Self {
        let cells: usize = resolution.pow(dim as u32);
        Self {
            dim,
            cells_per_axis: vec![resolution; dim],
            lengths: vec![1.0; dim],
            topology: MeshTopology::Box,
            phase: vec![Phase::Solid; cells],
        }
    }
}

/// Uniform periodic mesh of the unit cell with centroid-based phase tags.
pub fn mesh_cell(geom: &CellGeometry, resolution: usize) -> Result<PeriodicMesh> {
    if resolution < 4 {
        return Err(Error::InvalidInput("cell mesh resolution must be at least 4".into()));
    }
    let dim = geom.dim;
    let cells_per_axis = vec![resolution; dim];
    let mut mesh = PeriodicMesh {
        dim,
        cells_per_axis,
        lengths: vec![1.0; dim],
        topology: MeshTopology::Periodic,
        phase: Vec::new(),
    };
    let n_cells = mesh.n_cells();
    let mut phase = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let y = mesh.cell_center(c);
        phase.push(if geom.chi1(&y) { Phase::Solid } else { Phase::Fluid });
    }
    mesh.phase = phase;
    Ok(mesh)
}

/// The scaled perforated domain: the unit box tiled by `1/epsilon` lattice
/// cells per axis, each carrying the cell microstructure where the pore
/// distribution says so and plain fluid elsewhere.
#[derive(Debug, Clone)]
pub struct EpsilonDomain {
    pub epsilon: f64,
    pub lattice_per_axis: Vec<usize>,
    pub res_per_cell: usize,
    pub mesh: PeriodicMesh,
    /// Pore indicator per lattice cell, row-major.
    pub theta_layout: Vec<u8>,
}

/// Builds the global mesh over the unit box. `1/epsilon` must be an integer
/// multiple of the pore period along each axis so the layout tiles exactly.
pub fn build_epsilon_domain(
    geom: &CellGeometry,
    epsilon: f64,
    theta: &PoreDistribution,
    res_per_cell: usize,
) -> Result<EpsilonDomain> {
    if res_per_cell < 2 {
        return Err(Error::InvalidInput("resolution per lattice cell must be at least 2".into()));
    }
    let dim = geom.dim;
    if theta.dims().len() != dim {
        return Err(Error::GridMismatch("pore window dimension differs from geometry".into()));
    }
    let period = match theta.declared_period() {
        Some(p) => p.to_vec(),
        None => detect_period(theta)?,
    };
    let inv = 1.0 / epsilon;
    let m = inv.round();
    if !(epsilon > 0.0) || (inv - m).abs() > 1e-9 || m < 1.0 {
        return Err(Error::EpsilonNotConforming { epsilon, period });
    }
    let m = m as usize;
    if period.iter().any(|&p| !m.is_multiple_of(p)) {
        return Err(Error::EpsilonNotConforming { epsilon, period });
    }

    let lattice_per_axis = vec![m; dim];
    let cells_per_axis = vec![m * res_per_cell; dim];
    let mut mesh = PeriodicMesh {
        dim,
        cells_per_axis,
        lengths: vec![1.0; dim],
        topology: MeshTopology::Box,
        phase: Vec::new(),
    };

    let lattice_total: usize = lattice_per_axis.iter().product();
    let mut theta_layout = vec![0u8; lattice_total];
    for (flat, slot) in theta_layout.iter_mut().enumerate() {
        let mut rest = flat;
        let mut k = vec![0i64; dim];
        for d in (0..dim).rev() {
            k[d] = (rest % lattice_per_axis[d]) as i64;
            rest /= lattice_per_axis[d];
        }
        *slot = theta.get_periodic(&k);
    }

    let n_cells = mesh.n_cells();
    let mut phase = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let multi = mesh.cell_multi_index(c);
        let lattice: Vec<usize> = multi.iter().map(|&i| i / res_per_cell).collect();
        let mut lflat = 0;
        for (d, &k) in lattice.iter().enumerate() {
            lflat = lflat * lattice_per_axis[d] + k;
        }
        let tagged = if theta_layout[lflat] == 1 {
            // local cell-center coordinates within the unit cell
            let y: Vec<f64> = multi
                .iter()
                .zip(&lattice)
                .map(|(&i, &k)| ((i - k * res_per_cell) as f64 + 0.5) / res_per_cell as f64)
                .collect();
            if geom.chi1(&y) {
                Phase::Solid
            } else {
                Phase::Fluid
            }
        } else {
            Phase::Fluid
        };
        phase.push(tagged);
    }
    mesh.phase = phase;

    Ok(EpsilonDomain { epsilon, lattice_per_axis, res_per_cell, mesh, theta_layout })
}

impl EpsilonDomain {
    /// Measure of the solid part as tagged on the mesh.
    pub fn solid_measure(&self) -> f64 {
        self.mesh.n_solid_cells() as f64 * self.mesh.cell_volume()
    }
}

/// Checks whether the given phase connects across cells (periodic adjacency
/// on cell meshes, plain adjacency on box meshes). Used to guard fluid
/// solves.
pub fn phase_connected(mesh: &PeriodicMesh, phase: Phase) -> bool {
    let n_cells = mesh.n_cells();
    let members: Vec<usize> = (0..n_cells).filter(|&c| mesh.phase(c) == phase).collect();
    if members.is_empty() {
        return false;
    }
    let mut seen = vec![false; n_cells];
    let mut stack = vec![members[0]];
    seen[members[0]] = true;
    let caps = mesh.cells_per_axis().to_vec();
    while let Some(c) = stack.pop() {
        let multi = mesh.cell_multi_index(c);
        for d in 0..mesh.dim() {
            for step in [-1i64, 1] {
                let mut nb = multi.clone();
                let raw = multi[d] as i64 + step;
                match mesh.topology() {
                    MeshTopology::Periodic => {
                        nb[d] = raw.rem_euclid(caps[d] as i64) as usize;
                    }
                    MeshTopology::Box => {
                        if raw < 0 || raw >= caps[d] as i64 {
                            continue;
                        }
                        nb[d] = raw as usize;
                    }
                }
                let nc = mesh.cell_index(&nb);
                if !seen[nc] && mesh.phase(nc) == phase {
                    seen[nc] = true;
                    stack.push(nc);
                }
            }
        }
    }
    members.into_iter().all(|c| seen[c])
}
