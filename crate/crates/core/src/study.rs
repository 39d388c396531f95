//! The multiscale convergence study: runs the fine-scale and homogenized
//! solvers on shared meshes and time grids and measures the discrete
//! `H^1(0,T; L^2)` distance per microstructure size.

use crate::ap::PoreDistribution;
use crate::coeffs::BodyLoad;
use crate::error::Result;
use crate::fine::{assemble_fine_operators, energy_report, solve_fine, EnergyReport};
use crate::geometry::{build_epsilon_domain, CellGeometry, PeriodicMesh};
use crate::homogenize::{assemble_effective, CellInputs, EffectiveModel};
use crate::macroscale::solve_macro;

/// One row of the study: the scale, the error, and the run context.
#[derive(Debug, Clone, Copy)]
pub struct ConvergencePoint {
    pub epsilon: f64,
    /// Discrete `H^1(0,T; L^2)` distance between the fine and homogenized
    /// trajectories (trapezoid in time, lumped mass in space).
    pub error: f64,
    /// Same, relative to the homogenized trajectory norm.
    pub relative_error: f64,
    pub cells: usize,
    pub dt: f64,
    pub fine_seconds: f64,
    pub macro_seconds: f64,
}

/// Study output: per-scale errors plus the monotonicity verdict. The theory
/// proves convergence without a rate, so decrease is all that is checked.
#[derive(Debug, Clone)]
pub struct ConvergenceRecord {
    pub points: Vec<ConvergencePoint>,
    pub monotone: bool,
    pub reference_norm: f64,
    pub energy_reports: Vec<EnergyReport>,
}

/// Everything one study run needs.
pub struct StudySetup<'a> {
    pub geom: &'a CellGeometry,
    pub theta: &'a PoreDistribution,
    pub inputs: &'a CellInputs,
    pub f: &'a BodyLoad,
    pub g: &'a BodyLoad,
    pub horizon: f64,
    pub dt: f64,
    pub epsilons: &'a [f64],
    pub res_per_cell: usize,
    pub cell_resolution: usize,
    pub threads: usize,
}

/// Runs the study. The effective model is assembled once from the cell
/// problems; each scale then gets a fine solve and a homogenized solve on
/// the same mesh and time grid, compared in the discrete norm.
pub fn run_convergence(setup: &StudySetup) -> Result<ConvergenceRecord> {
    if setup.epsilons.is_empty() {
        return Err(crate::error::Error::InvalidInput("empty epsilon list".into()));
    }
    for w in setup.epsilons.windows(2) {
        if w[1] >= w[0] {
            return Err(crate::error::Error::InvalidInput(
                "epsilon list must be strictly decreasing".into(),
            ));
        }
    }
    let cell_mesh = crate::geometry::mesh_cell(setup.geom, setup.cell_resolution)?;
    let model = assemble_effective(setup.geom, &cell_mesh, setup.inputs, setup.threads)?;

    let runs: Vec<Result<(ConvergencePoint, EnergyReport)>> = if setup.threads > 1 {
        let mut slots: Vec<Option<Result<(ConvergencePoint, EnergyReport)>>> = Vec::new();
        slots.resize_with(setup.epsilons.len(), || None);
        std::thread::scope(|scope| {
            for (slot, &eps) in slots.iter_mut().zip(setup.epsilons) {
                let model = &model;
                scope.spawn(move || {
                    *slot = Some(study_point(setup, model, eps));
                });
            }
        });
        slots.into_iter().map(|s| s.expect("study point completed")).collect()
    } else {
        setup.epsilons.iter().map(|&eps| study_point(setup, &model, eps)).collect()
    };

    let mut points = Vec::with_capacity(runs.len());
    let mut energy_reports = Vec::with_capacity(runs.len());
    let mut reference_norm: f64 = 0.0;
    for run in runs {
        let (p, e) = run?;
        reference_norm = reference_norm.max(p.error / p.relative_error.max(1e-300));
        points.push(p);
        energy_reports.push(e);
    }
    let monotone = points.windows(2).all(|w| w[1].error < w[0].error);
    Ok(ConvergenceRecord { points, monotone, reference_norm, energy_reports })
}

fn study_point(
    setup: &StudySetup,
    model: &EffectiveModel,
    eps: f64,
) -> Result<(ConvergencePoint, EnergyReport)> {
    let domain = build_epsilon_domain(setup.geom, eps, setup.theta, setup.res_per_cell)?;
    let mesh = domain.mesh.clone();

    let t0 = std::time::Instant::now();
    let ops = assemble_fine_operators(&domain, setup.inputs)?;
    let fine = solve_fine(&ops, setup.inputs, setup.f, setup.g, setup.horizon, setup.dt)?;
    let fine_seconds = t0.elapsed().as_secs_f64();
    let report = energy_report(&ops, &fine);

    let t1 = std::time::Instant::now();
    let coarse = solve_macro(
        model,
        &mesh,
        setup.f,
        setup.g,
        setup.horizon,
        setup.dt,
        setup.inputs.cg_tol.max(1e-12),
    )?;
    let macro_seconds = t1.elapsed().as_secs_f64();

    // both solvers share the boundary-constrained dof map on the same mesh
    let (error, reference) = trajectory_distance(
        &fine.displacements,
        &fine.velocities,
        &coarse.displacements,
        &coarse.velocities,
        &ops.mass_unit(&mesh),
        setup.dt,
    );
    Ok((
        ConvergencePoint {
            epsilon: eps,
            error,
            relative_error: error / reference.max(1e-300),
            cells: mesh.n_cells(),
            dt: setup.dt,
            fine_seconds,
            macro_seconds,
        },
        report,
    ))
}

impl crate::fine::FineOperators {
    /// Unit-density lumped mass on the velocity map: the spatial quadrature
    /// of the comparison norm.
    pub fn mass_unit(&self, mesh: &PeriodicMesh) -> Vec<f64> {
        crate::fem::lumped_mass(mesh, &self.vmap, &vec![1.0; mesh.n_cells()], None)
    }
}

/// Discrete `H^1(0,T; L^2)` distance and the reference-trajectory norm:
/// `(sum_n dt (|u - u0|_M^2 + |u' - u0'|_M^2))^(1/2)` with the composite
/// trapezoid rule in time.
pub fn trajectory_distance(
    u_a: &[Vec<f64>],
    v_a: &[Vec<f64>],
    u_b: &[Vec<f64>],
    v_b: &[Vec<f64>],
    mass: &[f64],
    dt: f64,
) -> (f64, f64) {
    let steps = u_a.len().min(u_b.len());
    let mut err2 = 0.0;
    let mut ref2 = 0.0;
    for n in 0..steps {
        let w = if n == 0 || n + 1 == steps { 0.5 * dt } else { dt };
        let mut du = 0.0;
        let mut dv = 0.0;
        let mut bu = 0.0;
        let mut bv = 0.0;
        for i in 0..mass.len() {
            let m = mass[i];
            let eu = u_a[n][i] - u_b[n][i];
            let ev = v_a[n][i] - v_b[n][i];
            du += m * eu * eu;
            dv += m * ev * ev;
            bu += m * u_b[n][i] * u_b[n][i];
            bv += m * v_b[n][i] * v_b[n][i];
        }
        err2 += w * (du + dv);
        ref2 += w * (bu + bv);
    }
    (err2.sqrt(), ref2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::{CoefficientField, TimeProfile};
    use crate::geometry::{build_cell, CellShape};

    #[test]
    fn contrast_one_sits_at_the_floor() {
        // all-solid validation: the fine and homogenized discrete systems
        // coincide, so the distance is solver noise
        let geom = build_cell(2, CellShape::Laminate { axis: 0, thickness: 1.0 }).unwrap();
        let theta = PoreDistribution::from_fn(vec![2, 2], |_| true).unwrap();
        let mut inputs = CellInputs::memoryless(
            2,
            CoefficientField::constant_isotropic(2, 2.0),
            CoefficientField::constant_isotropic(2, 2.0),
        );
        inputs.full_cell_validation = true;
        let f = BodyLoad { direction: vec![1.0, 0.0], profile: TimeProfile::Ramp { ramp: 0.1 } };
        let setup = StudySetup {
            geom: &geom,
            theta: &theta,
            inputs: &inputs,
            f: &f,
            g: &f,
            horizon: 0.2,
            dt: 0.025,
            epsilons: &[0.5, 0.25],
            res_per_cell: 4,
            cell_resolution: 8,
            threads: 1,
        };
        let record = run_convergence(&setup).unwrap();
        for p in &record.points {
            assert!(p.relative_error < 1e-6, "floor violated: {}", p.relative_error);
        }
    }

    #[test]
    fn rejects_bad_epsilon_lists() {
        let geom = build_cell(2, CellShape::Disk { center: vec![0.5, 0.5], radius: 0.25 }).unwrap();
        let theta = PoreDistribution::from_fn(vec![2, 2], |_| true).unwrap();
        let inputs = CellInputs::memoryless(
            2,
            CoefficientField::constant_isotropic(2, 1.0),
            CoefficientField::constant_isotropic(2, 1.0),
        );
        let f = BodyLoad::zero(2);
        let mut setup = StudySetup {
            geom: &geom,
            theta: &theta,
            inputs: &inputs,
            f: &f,
            g: &f,
            horizon: 0.1,
            dt: 0.05,
            epsilons: &[],
            res_per_cell: 4,
            cell_resolution: 8,
            threads: 1,
        };
        assert!(run_convergence(&setup).is_err());
        let increasing = [0.125, 0.25];
        setup.epsilons = &increasing;
        assert!(run_convergence(&setup).is_err());
    }
}
