//! Direct fine-scale solver for the coupled solid/fluid system in the global
//! displacement formulation: one displacement field over the whole domain,
//! solid stiffness and fluid viscosity acting on their phases, fluid pressure
//! enforcing incompressibility of the velocity, and fading-memory convolution
//! terms sampled at fast time `t / epsilon`.
//!
//! Taking a single global test space makes the interface conditions
//! (velocity continuity and normal stress balance) automatic, which is the
//! point of the formulation.

use crate::coeffs::{BodyLoad, KernelSpec};
use crate::error::{Error, Result};
use crate::fem::{
    assemble_divergence, assemble_gradient_coupling, assemble_pressure_stabilization,
    assemble_vector_elliptic, cell_gradient, linear_combination, lumped_mass, solve_saddle,
    solve_spd, ConstraintSet, CsrMatrix, DofMap, ElementMatrices, SaddleBlocks, SaddleOpts,
    SolveOpts,
};
use crate::geometry::{EpsilonDomain, Phase};
use crate::homogenize::CellInputs;
use crate::memory::{max_resolved_dt, volterra_convolve, FieldHistory};

/// Operators of the fine-scale system on an epsilon domain.
pub struct FineOperators {
    pub domain: EpsilonDomain,
    pub vmap: DofMap,
    pub pmap: DofMap,
    /// Lumped mass with the two-phase density sampled at `x / epsilon`.
    pub mass: Vec<f64>,
    /// Elastic stiffness on solid cells.
    pub solid_stiffness: CsrMatrix,
    /// Viscosity operator on fluid cells (acts on the velocity).
    pub fluid_viscosity: CsrMatrix,
    /// Negative divergence coupling on fluid cells.
    pub div: CsrMatrix,
    /// Pressure stabilization.
    pub stab: CsrMatrix,
    pub pressure_weights: Vec<f64>,
    /// Memory coupling operators built from the spatial kernel parts; `None`
    /// when the corresponding kernel vanishes.
    pub solid_memory: Option<CsrMatrix>,
    pub fluid_memory: Option<CsrMatrix>,
    /// Unit-coefficient phase operators for the estimate report (gradient
    /// seminorms per phase).
    pub solid_grad_energy: CsrMatrix,
    pub fluid_grad_energy: CsrMatrix,
    /// Phase-restricted unit-density mass diagonals for the same report.
    pub solid_mass: Vec<f64>,
    pub fluid_mass: Vec<f64>,
    /// Per-cell phase densities at `x / epsilon`.
    rho_solid_per_cell: Vec<f64>,
    rho_fluid_per_cell: Vec<f64>,
}

/// Samples coefficients at `x / epsilon` and assembles the operator bundle.
pub fn assemble_fine_operators(
    domain: &EpsilonDomain,
    inputs: &CellInputs,
) -> Result<FineOperators> {
    let mesh = &domain.mesh;
    let dim = mesh.dim();
    let eps = domain.epsilon;
    if mesh.n_solid_cells() == 0 {
        return Err(Error::PhaseError("no solid cells: the pore layout is empty".into()));
    }

    let n_cells = mesh.n_cells();
    let mut coeff_solid = vec![0.0; n_cells * dim * dim];
    let mut coeff_fluid = vec![0.0; n_cells * dim * dim];
    let mut unit = vec![0.0; n_cells * dim * dim];
    let mut rho_per_cell = vec![0.0; n_cells];
    let mut rho_solid_per_cell = vec![0.0; n_cells];
    let mut rho_fluid_per_cell = vec![0.0; n_cells];
    for c in 0..n_cells {
        let x = mesh.cell_center(c);
        let y: Vec<f64> = x.iter().map(|&v| v / eps).collect();
        let base = c * dim * dim;
        match mesh.phase(c) {
            Phase::Solid => {
                coeff_solid[base..base + dim * dim].copy_from_slice(&inputs.elastic.eval_phase(&y, true));
                let r = inputs.density_solid.eval(&y);
                rho_per_cell[c] = r;
                rho_solid_per_cell[c] = r;
            }
            Phase::Fluid => {
                coeff_fluid[base..base + dim * dim].copy_from_slice(&inputs.viscous.eval_phase(&y, false));
                let r = inputs.density_fluid.eval(&y);
                rho_per_cell[c] = r;
                rho_fluid_per_cell[c] = r;
            }
        }
        for d in 0..dim {
            unit[base + d * dim + d] = 1.0;
        }
    }

    let constraints = ConstraintSet::boundary(mesh);
    let vmap = constraints.dof_map(dim);
    let mut pactive = vec![false; mesh.n_nodes()];
    for c in 0..n_cells {
        if mesh.phase(c) == Phase::Fluid {
            for n in mesh.cell_nodes(c) {
                pactive[n] = true;
            }
        }
    }
    let pmap = DofMap::new(&pactive, 1);
    let has_fluid = pmap.n_dofs() > 0;

    let solid_stiffness = assemble_vector_elliptic(mesh, &vmap, &coeff_solid, Some(Phase::Solid))?;
    let empty = || CsrMatrix::from_triplets(vmap.n_dofs(), vmap.n_dofs(), Vec::new());
    let fluid_viscosity = if has_fluid {
        assemble_vector_elliptic(mesh, &vmap, &coeff_fluid, Some(Phase::Fluid))?
    } else {
        empty()
    };
    let div = assemble_divergence(mesh, &vmap, &pmap, Phase::Fluid);
    let stab = assemble_pressure_stabilization(mesh, &pmap, Phase::Fluid, inputs.stabilization);
    let pressure_weights = lumped_mass(mesh, &pmap, &vec![1.0; n_cells], Some(Phase::Fluid));
    let mass = lumped_mass(mesh, &vmap, &rho_per_cell, None);
    let solid_grad_energy = assemble_vector_elliptic(mesh, &vmap, &unit, Some(Phase::Solid))?;
    let fluid_grad_energy = if has_fluid {
        assemble_vector_elliptic(mesh, &vmap, &unit, Some(Phase::Fluid))?
    } else {
        empty()
    };
    let ones = vec![1.0; n_cells];
    let solid_mass = lumped_mass(mesh, &vmap, &ones, Some(Phase::Solid));
    let fluid_mass = lumped_mass(mesh, &vmap, &ones, Some(Phase::Fluid));

    let memory_operator = |spec: &KernelSpec, phase: Phase| -> Result<Option<CsrMatrix>> {
        if spec.is_zero() {
            return Ok(None);
        }
        let mut coeff = vec![0.0; n_cells * dim * dim];
        for c in 0..n_cells {
            if mesh.phase(c) != phase {
                continue;
            }
            let x = mesh.cell_center(c);
            let y: Vec<f64> = x.iter().map(|&v| v / eps).collect();
            let base = c * dim * dim;
            coeff[base..base + dim * dim]
                .copy_from_slice(&spec.spatial.eval_phase(&y, mesh.phase(c) == Phase::Solid));
        }
        Ok(Some(assemble_gradient_coupling(mesh, &vmap, &coeff, Some(phase), false)?))
    };
    let solid_memory = memory_operator(&inputs.elastic_kernel, Phase::Solid)?;
    let fluid_memory = if has_fluid {
        memory_operator(&inputs.viscous_kernel, Phase::Fluid)?
    } else {
        None
    };

    Ok(FineOperators {
        domain: domain.clone(),
        vmap,
        pmap,
        mass,
        solid_stiffness,
        fluid_viscosity,
        div,
        stab,
        pressure_weights,
        solid_memory,
        fluid_memory,
        solid_grad_energy,
        fluid_grad_energy,
        solid_mass,
        fluid_mass,
        rho_solid_per_cell,
        rho_fluid_per_cell,
    })
}

/// Per-step energy ledger of the fine solve.
#[derive(Debug, Clone, Copy)]
pub struct FineEnergyRecord {
    pub time: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub viscous_dissipated: f64,
    pub memory_work: f64,
    pub pressure_work: f64,
    pub external_work: f64,
    pub residual: f64,
    /// Worst cell-wise divergence of the discrete displacement rate over the
    /// fluid phase.
    pub max_fluid_divergence: f64,
}

/// Trajectory of the fine solve on the reduced dof maps.
pub struct FineTrajectory {
    pub dt: f64,
    pub epsilon: f64,
    pub displacements: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// Midpoint pressure per step (empty vectors when the domain carries no
    /// fluid).
    pub pressures: Vec<Vec<f64>>,
    pub energy: Vec<FineEnergyRecord>,
}

/// Marches the fine system from homogeneous initial data. Memory terms use
/// trapezoidal quadrature over stored nodal histories with the current-step
/// weight lagged one step, so each step stays one fixed symmetric solve.
pub fn solve_fine(
    ops: &FineOperators,
    inputs: &CellInputs,
    f: &BodyLoad,
    g: &BodyLoad,
    horizon: f64,
    dt: f64,
) -> Result<FineTrajectory> {
    let mesh = &ops.domain.mesh;
    let dim = mesh.dim();
    let eps = ops.domain.epsilon;
    for spec in [&inputs.elastic_kernel, &inputs.viscous_kernel] {
        if let Some(limit) = max_resolved_dt(spec, eps) {
            if dt > limit {
                return Err(Error::TimeStepUnresolved { dt, limit });
            }
        }
    }
    let n = ops.vmap.n_dofs();
    let np = ops.pmap.n_dofs();
    let steps = (horizon / dt).round() as usize;
    let em = ElementMatrices::new(&mesh.spacing());

    // velocity-block combination for the midpoint step
    let a_block = linear_combination(
        n,
        &[(&ops.fluid_viscosity, 0.5), (&ops.solid_stiffness, dt / 4.0)],
        None,
    );
    let mass_over_dt: Vec<f64> = ops.mass.iter().map(|m| m / dt).collect();
    // the constraint rows are doubled to keep the block system symmetric
    let stab2 = linear_combination(np, &[(&ops.stab, 2.0)], None);

    // static kernel tables k(t_m / eps) shared by every step
    let kernel_table = |spec: &KernelSpec| -> Vec<f64> {
        (0..=steps).map(|m| spec.temporal_value(m as f64 * dt / eps)).collect()
    };
    let solid_table = ops.solid_memory.is_some().then(|| kernel_table(&inputs.elastic_kernel));
    let fluid_table = ops.fluid_memory.is_some().then(|| kernel_table(&inputs.viscous_kernel));

    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut u_hist = FieldHistory::new(dt);
    let mut v_hist = FieldHistory::new(dt);
    if ops.solid_memory.is_some() {
        u_hist.push(u.clone());
    }
    if ops.fluid_memory.is_some() {
        v_hist.push(v.clone());
    }

    let mut displacements = vec![u.clone()];
    let mut velocities = vec![v.clone()];
    let mut pressures: Vec<Vec<f64>> = Vec::new();
    let mut energy = Vec::with_capacity(steps);

    let saddle_opts = SaddleOpts {
        tol: inputs.minres_tol,
        max_iter: inputs.max_iter,
        project_pressure_null: false,
    };
    let cg_opts = SolveOpts { tol: inputs.cg_tol, max_iter: inputs.max_iter, zero_mean_comps: None };

    let mut tmp = vec![0.0; n];
    for k in 0..steps {
        let t_n = k as f64 * dt;
        let t_mid = t_n + dt / 2.0;

        // memory forces from history through step k (lagged current weight)
        let mut mem = vec![0.0; n];
        if let (Some(op), Some(table)) = (&ops.solid_memory, &solid_table) {
            let conv = volterra_convolve(table, &u_hist, k)?;
            op.matvec(&conv, &mut tmp);
            for i in 0..n {
                mem[i] += tmp[i];
            }
        }
        if let (Some(op), Some(table)) = (&ops.fluid_memory, &fluid_table) {
            let conv = volterra_convolve(table, &v_hist, k)?;
            op.matvec(&conv, &mut tmp);
            for i in 0..n {
                mem[i] += tmp[i];
            }
        }

        // lumped phase loads at the midpoint
        let fv = f.value(t_mid);
        let gv = g.value(t_mid);
        let mut f_mid = vec![0.0; n];
        for c in 0..mesh.n_cells() {
            let (rho, load) = match mesh.phase(c) {
                Phase::Solid => (ops.rho_solid_per_cell[c], &fv),
                Phase::Fluid => (ops.rho_fluid_per_cell[c], &gv),
            };
            if rho == 0.0 || load.iter().all(|&x| x == 0.0) {
                continue;
            }
            let w = em.mass_lumped * rho;
            for node in mesh.cell_nodes(c) {
                for d in 0..dim {
                    if let Some(dof) = ops.vmap.dof(node, d) {
                        f_mid[dof] += w * load[d];
                    }
                }
            }
        }

        let mut rhs = f_mid.clone();
        ops.fluid_viscosity.matvec(&v, &mut tmp);
        for i in 0..n {
            rhs[i] -= tmp[i] + mem[i];
        }
        let u_pred: Vec<f64> = u.iter().zip(&v).map(|(ui, vi)| ui + dt / 2.0 * vi).collect();
        ops.solid_stiffness.matvec(&u_pred, &mut tmp);
        for i in 0..n {
            rhs[i] -= tmp[i];
        }

        let (dv, p_mid) = if np > 0 {
            let mut rhs_p = vec![0.0; np];
            ops.div.matvec(&v, &mut rhs_p);
            for x in &mut rhs_p {
                *x *= -2.0;
            }
            let blocks =
                SaddleBlocks { a: &a_block, div: &ops.div, stab: &stab2, vel_diag: &mass_over_dt };
            solve_saddle(&blocks, &rhs, &rhs_p, &ops.pressure_weights, &saddle_opts)?
        } else {
            let system = linear_combination(n, &[(&a_block, 1.0)], Some((&ops.mass, 1.0 / dt)));
            (solve_spd(&system, &rhs, &cg_opts)?, Vec::new())
        };

        let v_mid: Vec<f64> = v.iter().zip(&dv).map(|(vi, d)| vi + 0.5 * d).collect();
        let v_next: Vec<f64> = v.iter().zip(&dv).map(|(vi, d)| vi + d).collect();
        let u_next: Vec<f64> = u.iter().zip(&v_mid).map(|(ui, vm)| ui + dt * vm).collect();

        // energy ledger from the same midpoint quantities
        let quad = |m: &CsrMatrix, x: &[f64], y: &[f64]| -> f64 {
            let mut t = vec![0.0; x.len()];
            m.matvec(y, &mut t);
            x.iter().zip(&t).map(|(a, b)| a * b).sum()
        };
        let kin = |w: &[f64]| 0.5 * w.iter().zip(&ops.mass).map(|(x, m)| m * x * x).sum::<f64>();
        let kinetic0 = kin(&v);
        let kinetic1 = kin(&v_next);
        let elastic0 = 0.5 * quad(&ops.solid_stiffness, &u, &u);
        let elastic1 = 0.5 * quad(&ops.solid_stiffness, &u_next, &u_next);
        let viscous = dt * quad(&ops.fluid_viscosity, &v_mid, &v_mid);
        let memory_work = dt * v_mid.iter().zip(&mem).map(|(a, b)| a * b).sum::<f64>();
        let pressure_work = if np > 0 {
            let mut dtp = vec![0.0; n];
            ops.div.matvec_transpose_add(&p_mid, &mut dtp);
            dt * v_mid.iter().zip(&dtp).map(|(a, b)| a * b).sum::<f64>()
        } else {
            0.0
        };
        let external = dt * v_mid.iter().zip(&f_mid).map(|(a, b)| a * b).sum::<f64>();
        let residual = (kinetic1 + elastic1) - (kinetic0 + elastic0)
            + viscous
            + memory_work
            + pressure_work
            - external;

        // worst fluid-cell divergence of the discrete displacement rate
        let mut max_div = 0.0f64;
        if np > 0 {
            let full_vmid = ops.vmap.scatter(&v_mid);
            for c in 0..mesh.n_cells() {
                if mesh.phase(c) != Phase::Fluid {
                    continue;
                }
                let gradient = cell_gradient(mesh, &em, &full_vmid, dim, c);
                let div_c: f64 = (0..dim).map(|d| gradient[d * dim + d]).sum();
                max_div = max_div.max(div_c.abs());
            }
        }

        energy.push(FineEnergyRecord {
            time: t_n + dt,
            kinetic: kinetic1,
            elastic: elastic1,
            viscous_dissipated: viscous,
            memory_work,
            pressure_work,
            external_work: external,
            residual,
            max_fluid_divergence: max_div,
        });

        u = u_next;
        v = v_next;
        if ops.solid_memory.is_some() {
            u_hist.push(u.clone());
        }
        if ops.fluid_memory.is_some() {
            v_hist.push(v.clone());
        }
        displacements.push(u.clone());
        velocities.push(v.clone());
        pressures.push(p_mid);
    }

    Ok(FineTrajectory { dt, epsilon: eps, displacements, velocities, pressures, energy })
}

/// The five fine-scale estimate quantities plus the worst energy-identity
/// residual, all from one trajectory.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReport {
    pub sup_u_solid_sq: f64,
    pub sup_grad_u_solid_sq: f64,
    pub sup_v_fluid_sq: f64,
    pub int_grad_v_fluid_sq: f64,
    pub pressure_l2: f64,
    pub max_residual_rel: f64,
}

impl EnergyReport {
    pub fn quantities(&self) -> [f64; 5] {
        [
            self.sup_u_solid_sq,
            self.sup_grad_u_solid_sq,
            self.sup_v_fluid_sq,
            self.int_grad_v_fluid_sq,
            self.pressure_l2,
        ]
    }
}

/// Discrete analogues of the a-priori estimates: sup-in-time phase norms of
/// the displacement and velocity, the time-integrated fluid gradient, and
/// the space-time pressure norm.
pub fn energy_report(ops: &FineOperators, traj: &FineTrajectory) -> EnergyReport {
    let quad = |m: &CsrMatrix, x: &[f64]| -> f64 {
        let mut t = vec![0.0; x.len()];
        m.matvec(x, &mut t);
        x.iter().zip(&t).map(|(a, b)| a * b).sum()
    };
    let weighted =
        |diag: &[f64], x: &[f64]| -> f64 { x.iter().zip(diag).map(|(v, m)| m * v * v).sum() };
    let mut sup_u = 0.0f64;
    let mut sup_gu = 0.0f64;
    let mut sup_v = 0.0f64;
    let mut int_gv = 0.0f64;
    for (u, v) in traj.displacements.iter().zip(&traj.velocities) {
        sup_u = sup_u.max(weighted(&ops.solid_mass, u));
        sup_gu = sup_gu.max(quad(&ops.solid_grad_energy, u));
        sup_v = sup_v.max(weighted(&ops.fluid_mass, v));
        int_gv += traj.dt * quad(&ops.fluid_grad_energy, v);
    }
    let mut p_l2_sq = 0.0;
    for p in &traj.pressures {
        if !p.is_empty() {
            p_l2_sq += traj.dt * weighted(&ops.pressure_weights, p);
        }
    }
    let scale = traj
        .energy
        .iter()
        .map(|r| {
            r.kinetic
                + r.elastic
                + r.viscous_dissipated.abs()
                + r.external_work.abs()
                + r.pressure_work.abs()
        })
        .fold(1e-30, f64::max);
    let max_residual_rel =
        traj.energy.iter().map(|r| r.residual.abs()).fold(0.0, f64::max) / scale;
    EnergyReport {
        sup_u_solid_sq: sup_u,
        sup_grad_u_solid_sq: sup_gu,
        sup_v_fluid_sq: sup_v,
        int_grad_v_fluid_sq: int_gv,
        pressure_l2: p_l2_sq.sqrt(),
        max_residual_rel,
    }
}
