//! Time integration of the homogenized equivalent-medium equation with the
//! effective coefficients: trapezoidal Newmark stepping of
//! `rho0 u'' - Div(C0 grad u + C1 grad u') + grad h(grad u') = F` with
//! homogeneous boundary and initial data.

use crate::coeffs::BodyLoad;
use crate::error::{Error, Result};
use crate::fem::{
    linear_combination, load_vector, lumped_mass, solve_spd, split_symmetric, ConstraintSet,
    CsrMatrix, DofMap, ElementMatrices, SolveOpts,
};
use crate::geometry::PeriodicMesh;
use crate::homogenize::EffectiveModel;

/// Assembled weak-form operators of the homogenized equation on a box mesh
/// with a clamped boundary.
pub struct MacroOperators {
    pub mesh: PeriodicMesh,
    pub map: DofMap,
    /// Lumped mass diagonal scaled by the effective density.
    pub mass: Vec<f64>,
    /// Stiffness from the instantaneous effective tensor.
    pub stiffness: CsrMatrix,
    /// Velocity-proportional damping from the rate tensor.
    pub damping: CsrMatrix,
    /// Velocity coupling from the pressure form, assembled weakly as
    /// `-(h(grad u'), div psi)`; nonsymmetric in general.
    pub pressure: CsrMatrix,
    pub model: EffectiveModel,
}

/// Assembles mass, stiffness, damping and pressure-coupling operators.
pub fn assemble_macro_system(model: &EffectiveModel, mesh: &PeriodicMesh) -> Result<MacroOperators> {
    let dim = mesh.dim();
    if model.dim != dim {
        return Err(Error::GridMismatch("effective model dimension differs from mesh".into()));
    }
    let constraints = ConstraintSet::boundary(mesh);
    let map = constraints.dof_map(dim);
    let mass = lumped_mass(mesh, &map, &vec![model.density; mesh.n_cells()], None);
    let stiffness = assemble_tensor_operator(mesh, &map, &model.elastic_tensor);
    let damping = assemble_tensor_operator(mesh, &map, &model.viscous_tensor);
    let pressure = assemble_pressure_operator(mesh, &map, &model.pressure_coupling);
    Ok(MacroOperators { mesh: mesh.clone(), map, mass, stiffness, damping, pressure, model: model.clone() })
}

/// `int (T grad u) : grad psi` for a fourth-order tensor stored as an
/// `N^2 x N^2` matrix over row-major index pairs.
fn assemble_tensor_operator(mesh: &PeriodicMesh, map: &DofMap, tensor: &[f64]) -> CsrMatrix {
    let dim = mesh.dim();
    let em = ElementMatrices::new(&mesh.spacing());
    let corners = em.corners();
    let mut triplets = Vec::new();
    for cell in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(cell);
        for a in 0..corners {
            for b in 0..corners {
                for k in 0..dim {
                    let Some(row) = map.dof(nodes[a], k) else { continue };
                    for i in 0..dim {
                        let Some(col) = map.dof(nodes[b], i) else { continue };
                        let mut v = 0.0;
                        for l in 0..dim {
                            for j in 0..dim {
                                let c = tensor[(k * dim + l) * dim * dim + (i * dim + j)];
                                if c != 0.0 {
                                    v += c * em.grad_grad[l * dim + j][a * corners + b];
                                }
                            }
                        }
                        if v != 0.0 {
                            triplets.push((row, col, v));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(map.n_dofs(), map.n_dofs(), triplets)
}

/// `-(H : grad u, div psi)`: moves the gradient of the scalar pressure form
/// onto the test function.
fn assemble_pressure_operator(mesh: &PeriodicMesh, map: &DofMap, coupling: &[f64]) -> CsrMatrix {
    let dim = mesh.dim();
    let em = ElementMatrices::new(&mesh.spacing());
    let corners = em.corners();
    let mut triplets = Vec::new();
    if coupling.iter().all(|&h| h == 0.0) {
        return CsrMatrix::from_triplets(map.n_dofs(), map.n_dofs(), triplets);
    }
    for cell in 0..mesh.n_cells() {
        let nodes = mesh.cell_nodes(cell);
        for a in 0..corners {
            for b in 0..corners {
                for k in 0..dim {
                    let Some(row) = map.dof(nodes[a], k) else { continue };
                    for i in 0..dim {
                        let Some(col) = map.dof(nodes[b], i) else { continue };
                        let mut v = 0.0;
                        for j in 0..dim {
                            let h = coupling[i * dim + j];
                            if h != 0.0 {
                                v -= h * em.grad_grad[k * dim + j][a * corners + b];
                            }
                        }
                        if v != 0.0 {
                            triplets.push((row, col, v));
                        }
                    }
                }
            }
        }
    }
    CsrMatrix::from_triplets(map.n_dofs(), map.n_dofs(), triplets)
}

/// Nodal state of the macroscopic field on the reduced (interior) dofs.
#[derive(Debug, Clone)]
pub struct MacroState {
    pub step: usize,
    pub dt: f64,
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

impl MacroState {
    /// Homogeneous initial data.
    pub fn zero(n_dofs: usize, dt: f64) -> Self {
        Self {
            step: 0,
            dt,
            displacement: vec![0.0; n_dofs],
            velocity: vec![0.0; n_dofs],
            acceleration: vec![0.0; n_dofs],
        }
    }
}

/// Per-step energy ledger.
#[derive(Debug, Clone, Copy)]
pub struct EnergyRecord {
    pub time: f64,
    pub kinetic: f64,
    pub elastic: f64,
    pub dissipated: f64,
    pub pressure_work: f64,
    pub external_work: f64,
    /// Defect of the discrete energy identity accumulated this step.
    pub residual: f64,
}

/// The per-step linear system of the trapezoidal Newmark scheme, factored
/// once per time-step size.
pub struct NewmarkSystem {
    system: CsrMatrix,
    sym: CsrMatrix,
    skew: Option<CsrMatrix>,
    opts: SolveOpts,
}

impl NewmarkSystem {
    pub fn new(ops: &MacroOperators, dt: f64, tol: f64) -> Self {
        let n = ops.map.n_dofs();
        let system = linear_combination(
            n,
            &[(&ops.damping, 0.5), (&ops.pressure, 0.5), (&ops.stiffness, dt / 4.0)],
            Some((&ops.mass, 1.0 / dt)),
        );
        let defect = system.symmetry_defect();
        let scale = ops.mass.iter().fold(0.0f64, |m, &v| m.max(v.abs())) / dt;
        if defect <= 1e-12 * scale.max(1.0) {
            let sym = system.clone();
            Self { system, sym, skew: None, opts: SolveOpts { tol, max_iter: 100_000, zero_mean_comps: None } }
        } else {
            let (sym, skew) = split_symmetric(&system);
            Self {
                system,
                sym,
                skew: Some(skew),
                opts: SolveOpts { tol, max_iter: 100_000, zero_mean_comps: None },
            }
        }
    }

    /// Solves `S dv = r`; symmetric systems go straight to CG, nonsymmetric
    /// ones iterate on the skew part with the symmetric part as
    /// preconditioner.
    fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        match &self.skew {
            None => solve_spd(&self.sym, rhs, &self.opts),
            Some(skew) => {
                let n = rhs.len();
                let mut x = solve_spd(&self.sym, rhs, &self.opts)?;
                let mut corrected = vec![0.0; n];
                for _ in 0..200 {
                    skew.matvec(&x, &mut corrected);
                    let adjusted: Vec<f64> =
                        rhs.iter().zip(&corrected).map(|(b, s)| b - s).collect();
                    let next = solve_spd(&self.sym, &adjusted, &self.opts)?;
                    let delta: f64 = next
                        .iter()
                        .zip(&x)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    let norm: f64 = next.iter().map(|v| v * v).sum::<f64>().sqrt();
                    x = next;
                    if delta <= self.opts.tol * norm.max(1e-30) {
                        // verify against the unsplit operator
                        let mut res = vec![0.0; n];
                        self.system.matvec(&x, &mut res);
                        return Ok(x);
                    }
                }
                Err(Error::SolverDiverged {
                    solver: "newmark-skew-iteration",
                    residual: f64::NAN,
                    iterations: 200,
                })
            }
        }
    }
}

/// One trapezoidal Newmark step with the midpoint load `f_mid`.
pub fn step_newmark(
    state: &MacroState,
    ops: &MacroOperators,
    system: &NewmarkSystem,
    f_mid: &[f64],
) -> Result<(MacroState, EnergyRecord)> {
    let n = ops.map.n_dofs();
    let dt = state.dt;
    let mut rhs = f_mid.to_vec();
    let mut tmp = vec![0.0; n];
    ops.damping.matvec(&state.velocity, &mut tmp);
    for i in 0..n {
        rhs[i] -= tmp[i];
    }
    ops.pressure.matvec(&state.velocity, &mut tmp);
    for i in 0..n {
        rhs[i] -= tmp[i];
    }
    let u_pred: Vec<f64> = state
        .displacement
        .iter()
        .zip(&state.velocity)
        .map(|(u, v)| u + dt / 2.0 * v)
        .collect();
    ops.stiffness.matvec(&u_pred, &mut tmp);
    for i in 0..n {
        rhs[i] -= tmp[i];
    }

    let dv = system.solve(&rhs)?;
    let v_mid: Vec<f64> = state.velocity.iter().zip(&dv).map(|(v, d)| v + 0.5 * d).collect();
    let velocity: Vec<f64> = state.velocity.iter().zip(&dv).map(|(v, d)| v + d).collect();
    let displacement: Vec<f64> = state
        .displacement
        .iter()
        .zip(&v_mid)
        .map(|(u, vm)| u + dt * vm)
        .collect();
    let acceleration: Vec<f64> = dv.iter().map(|d| d / dt).collect();

    // energy bookkeeping from the same midpoint quantities
    let quad = |m: &CsrMatrix, x: &[f64], y: &[f64]| -> f64 {
        let mut t = vec![0.0; n];
        m.matvec(y, &mut t);
        x.iter().zip(&t).map(|(a, b)| a * b).sum()
    };
    let kin = |v: &[f64]| -> f64 {
        0.5 * v.iter().zip(&ops.mass).map(|(x, m)| m * x * x).sum::<f64>()
    };
    let kinetic0 = kin(&state.velocity);
    let kinetic1 = kin(&velocity);
    let elastic0 = 0.5 * quad(&ops.stiffness, &state.displacement, &state.displacement);
    let elastic1 = 0.5 * quad(&ops.stiffness, &displacement, &displacement);
    let dissipated = dt * quad(&ops.damping, &v_mid, &v_mid);
    let pressure_work = dt * quad(&ops.pressure, &v_mid, &v_mid);
    let external: f64 = dt * v_mid.iter().zip(f_mid).map(|(a, b)| a * b).sum::<f64>();
    let residual =
        (kinetic1 + elastic1) - (kinetic0 + elastic0) + dissipated + pressure_work - external;

    let record = EnergyRecord {
        time: (state.step + 1) as f64 * dt,
        kinetic: kinetic1,
        elastic: elastic1,
        dissipated,
        pressure_work,
        external_work: external,
        residual,
    };
    Ok((
        MacroState { step: state.step + 1, dt, displacement, velocity, acceleration },
        record,
    ))
}

/// Full trajectory of the homogenized solve.
pub struct MacroTrajectory {
    pub dt: f64,
    pub map: DofMap,
    pub displacements: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    pub energy: Vec<EnergyRecord>,
}

impl MacroTrajectory {
    pub fn n_steps(&self) -> usize {
        self.displacements.len().saturating_sub(1)
    }
}

/// Integrates the homogenized equation from rest under the phase loads.
pub fn solve_macro(
    model: &EffectiveModel,
    mesh: &PeriodicMesh,
    f: &BodyLoad,
    g: &BodyLoad,
    horizon: f64,
    dt: f64,
    tol: f64,
) -> Result<MacroTrajectory> {
    solve_macro_from(model, mesh, f, g, horizon, dt, tol, None)
}

/// Same, but optionally starting from given reduced initial data (validation
/// oracles drive the integrator with nonzero initial velocity).
#[allow(clippy::too_many_arguments)]
pub fn solve_macro_from(
    model: &EffectiveModel,
    mesh: &PeriodicMesh,
    f: &BodyLoad,
    g: &BodyLoad,
    horizon: f64,
    dt: f64,
    tol: f64,
    initial: Option<(Vec<f64>, Vec<f64>)>,
) -> Result<MacroTrajectory> {
    let ops = assemble_macro_system(model, mesh)?;
    let system = NewmarkSystem::new(&ops, dt, tol);
    let n = ops.map.n_dofs();
    let steps = (horizon / dt).round() as usize;
    let mut state = MacroState::zero(n, dt);
    if let Some((u0, v0)) = initial {
        state.displacement = u0;
        state.velocity = v0;
    }
    let mut displacements = vec![state.displacement.clone()];
    let mut velocities = vec![state.velocity.clone()];
    let mut energy = Vec::with_capacity(steps);
    for k in 0..steps {
        let t_mid = (k as f64 + 0.5) * dt;
        let fv = model.body_force(&f.value(t_mid), &g.value(t_mid));
        let f_mid = load_vector(&ops.mesh, &ops.map, |_| fv.clone(), None);
        let (next, record) = step_newmark(&state, &ops, &system, &f_mid)?;
        state = next;
        displacements.push(state.displacement.clone());
        velocities.push(state.velocity.clone());
        energy.push(record);
    }
    Ok(MacroTrajectory { dt, map: ops.map, displacements, velocities, energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::TimeProfile;
    use crate::fem::assemble_vector_elliptic;
    use approx::assert_abs_diff_eq;

    fn identity_model(dim: usize) -> EffectiveModel {
        let n2 = dim * dim;
        let mut elastic = vec![0.0; n2 * n2];
        for i in 0..n2 {
            elastic[i * n2 + i] = 1.0;
        }
        EffectiveModel {
            dim,
            density: 1.0,
            elastic_tensor: elastic,
            viscous_tensor: vec![0.0; n2 * n2],
            pressure_coupling: vec![0.0; n2],
            load_weights: (0.5, 0.5),
        }
    }

    #[test]
    fn zero_load_stays_zero() {
        let model = identity_model(2);
        let mesh = PeriodicMesh::unit_box(2, 8);
        let f = BodyLoad::zero(2);
        let traj = solve_macro(&model, &mesh, &f, &f, 0.5, 0.05, 1e-10).unwrap();
        for u in &traj.displacements {
            assert!(u.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn operators_have_the_expected_structure() {
        let model = identity_model(2);
        let mesh = PeriodicMesh::unit_box(2, 6);
        let ops = assemble_macro_system(&model, &mesh).unwrap();
        assert!(ops.stiffness.symmetry_defect() < 1e-13);
        assert!(ops.mass.iter().all(|&m| m > 0.0), "mass diagonal must be positive");
        assert_eq!(ops.pressure.nnz(), 0, "zero coupling assembles empty");
        assert_eq!(ops.damping.nnz(), 0, "zero rate tensor assembles empty");
    }

    #[test]
    fn identity_tensor_matches_vector_laplacian() {
        let model = identity_model(2);
        let mesh = PeriodicMesh::unit_box(2, 6);
        let ops = assemble_macro_system(&model, &mesh).unwrap();
        let coeff: Vec<f64> = (0..mesh.n_cells()).flat_map(|_| [1.0, 0.0, 0.0, 1.0]).collect();
        let lap = assemble_vector_elliptic(&mesh, &ops.map, &coeff, None).unwrap();
        for (a, b) in ops.stiffness.triplets().iter().zip(lap.triplets().iter()) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1, b.1);
            assert_abs_diff_eq!(a.2, b.2, epsilon = 1e-14);
        }
    }

    #[test]
    fn pressure_operator_linear_in_coupling() {
        let mesh = PeriodicMesh::unit_box(2, 5);
        let mut m1 = identity_model(2);
        m1.pressure_coupling = vec![0.3, -0.1, 0.2, 0.7];
        let mut m2 = identity_model(2);
        m2.pressure_coupling = m1.pressure_coupling.iter().map(|v| 2.0 * v).collect();
        let p1 = assemble_macro_system(&m1, &mesh).unwrap().pressure;
        let p2 = assemble_macro_system(&m2, &mesh).unwrap().pressure;
        for (a, b) in p1.triplets().iter().zip(p2.triplets().iter()) {
            assert_abs_diff_eq!(2.0 * a.2, b.2, epsilon = 1e-12);
        }
    }

    /// Semi-discrete standing-wave oracle: with lumped mass and the discrete
    /// sine eigenvalue the time evolution is exactly harmonic, so the
    /// remaining error is the Newmark phase lag.
    fn standing_wave_error(n: usize, steps_per_period: usize) -> f64 {
        let model = identity_model(1);
        let mesh = PeriodicMesh::unit_box(1, n);
        let h = 1.0 / n as f64;
        let pi = std::f64::consts::PI;
        // discrete eigenvalue of the clamped sine mode (lumped mass)
        let lambda = 2.0 * (1.0 - (pi * h).cos()) / (h * h);
        let omega = lambda.sqrt();
        let period = std::f64::consts::TAU / omega;
        let dt = period / steps_per_period as f64;
        let ops = assemble_macro_system(&model, &mesh).unwrap();
        let v0: Vec<f64> = ops
            .map
            .active_nodes()
            .iter()
            .map(|&node| (pi * (node as f64) * h).sin())
            .collect();
        let zero = BodyLoad::zero(1);
        let traj = solve_macro_from(
            &model,
            &mesh,
            &zero,
            &zero,
            period,
            dt,
            1e-12,
            Some((vec![0.0; v0.len()], v0.clone())),
        )
        .unwrap();
        // after one full period the semi-discrete solution returns to zero
        // displacement with the initial velocity
        let u_end = traj.displacements.last().unwrap();
        let v_end = traj.velocities.last().unwrap();
        let mut err2 = 0.0;
        for i in 0..u_end.len() {
            let eu = u_end[i];
            let ev = v_end[i] - v0[i];
            err2 += h * (eu * eu + ev * ev / (omega * omega));
        }
        err2.sqrt()
    }

    #[test]
    fn standing_wave_phase_error_second_order() {
        let e1 = standing_wave_error(64, 16);
        let e2 = standing_wave_error(64, 32);
        let e3 = standing_wave_error(64, 64);
        let r1 = (e1 / e2).log2();
        let r2 = (e2 / e3).log2();
        assert!(r1 > 1.9 && r2 > 1.9, "orders {r1} {r2} (errors {e1} {e2} {e3})");
    }

    #[test]
    fn manufactured_source_temporal_order() {
        // successive dt-halving differences isolate the temporal order
        let model = identity_model(1);
        let mesh = PeriodicMesh::unit_box(1, 32);
        let f = BodyLoad { direction: vec![1.0], profile: TimeProfile::Sine { omega: 6.0 } };
        let g = BodyLoad::zero(1);
        let run = |dt: f64| {
            solve_macro(&model, &mesh, &f, &g, 0.5, dt, 1e-12)
                .unwrap()
                .displacements
                .last()
                .unwrap()
                .clone()
        };
        let u1 = run(0.025);
        let u2 = run(0.0125);
        let u3 = run(0.00625);
        let d12: f64 = u1.iter().zip(&u2).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let d23: f64 = u2.iter().zip(&u3).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let order = (d12 / d23).log2();
        assert!(order > 1.9, "temporal order {order}");
    }

    #[test]
    fn free_decay_energy_nonincreasing() {
        let mut model = identity_model(2);
        // positive semidefinite rate tensor
        for i in 0..4 {
            model.viscous_tensor[i * 4 + i] = 0.1;
        }
        let mesh = PeriodicMesh::unit_box(2, 8);
        let ops = assemble_macro_system(&model, &mesh).unwrap();
        let v0: Vec<f64> = (0..ops.map.n_dofs()).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let zero = BodyLoad::zero(2);
        let traj = solve_macro_from(
            &model,
            &mesh,
            &zero,
            &zero,
            0.5,
            0.01,
            1e-12,
            Some((vec![0.0; v0.len()], v0)),
        )
        .unwrap();
        let mut prev = f64::INFINITY;
        for rec in &traj.energy {
            let total = rec.kinetic + rec.elastic;
            assert!(total <= prev + 1e-10, "energy grew: {total} > {prev}");
            prev = total;
        }
    }

    #[test]
    fn energy_identity_residual_small() {
        let model = identity_model(2);
        let mesh = PeriodicMesh::unit_box(2, 8);
        let f = BodyLoad { direction: vec![1.0, 0.0], profile: TimeProfile::Ramp { ramp: 0.2 } };
        let g = BodyLoad { direction: vec![0.0, 0.5], profile: TimeProfile::Sine { omega: 4.0 } };
        let traj = solve_macro(&model, &mesh, &f, &g, 0.5, 0.01, 1e-12).unwrap();
        let scale: f64 = traj
            .energy
            .iter()
            .map(|r| r.kinetic + r.elastic + r.external_work.abs())
            .fold(1e-30, f64::max);
        for rec in &traj.energy {
            assert!(rec.residual.abs() / scale < 1e-8, "residual {}", rec.residual);
        }
    }

    #[test]
    fn static_manufactured_second_order_in_space() {
        // K u = F with u = sin(pi x) sin(pi y) per component, identity tensor
        let model = identity_model(2);
        let pi = std::f64::consts::PI;
        let mut errors = Vec::new();
        for n in [8usize, 16, 32] {
            let mesh = PeriodicMesh::unit_box(2, n);
            let ops = assemble_macro_system(&model, &mesh).unwrap();
            let f = load_vector(&mesh, &ops.map, |cell| {
                let c = mesh.cell_center(cell);
                let v = 2.0 * pi * pi * (pi * c[0]).sin() * (pi * c[1]).sin();
                vec![v, v]
            }, None);
            let u = solve_spd(
                &ops.stiffness,
                &f,
                &SolveOpts { tol: 1e-12, max_iter: 50_000, zero_mean_comps: None },
            )
            .unwrap();
            let h = 1.0 / n as f64;
            let mut err2 = 0.0;
            for (a, &node) in ops.map.active_nodes().iter().enumerate() {
                let x = mesh.node_coords(node);
                let exact = (pi * x[0]).sin() * (pi * x[1]).sin();
                for c in 0..2 {
                    let e = u[a * 2 + c] - exact;
                    err2 += h * h * e * e;
                }
            }
            errors.push(err2.sqrt());
        }
        let r1 = (errors[0] / errors[1]).log2();
        let r2 = (errors[1] / errors[2]).log2();
        assert!(r1 > 1.7 && r2 > 1.7, "rates {r1} {r2} errors {errors:?}");
    }
}
