//! Report and CSV emission. Every file starts with a versioned header
//! comment; numeric formatting is fixed so identical runs produce
//! byte-identical output.

use porohom::fine::{EnergyReport, FineTrajectory};
use porohom::homogenize::EffectiveModel;
use porohom::macroscale::MacroTrajectory;
use porohom::study::ConvergenceRecord;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

fn num(v: f64) -> String {
    format!("{v:.17e}")
}

/// Human-readable effective-model report.
pub fn effective_report(model: &EffectiveModel) -> String {
    let n2 = model.n2();
    let mut s = String::new();
    let _ = writeln!(s, "effective medium report (v1)");
    let _ = writeln!(s, "dimension: {}", model.dim);
    let _ = writeln!(s, "density rho0: {}", num(model.density));
    let _ = writeln!(
        s,
        "load weights (solid, fluid): {} {}",
        num(model.load_weights.0),
        num(model.load_weights.1)
    );
    let _ = writeln!(s, "norms: trapezoid in time, lumped-mass quadrature in space");
    for (label, tensor) in
        [("C0 (instantaneous stiffness)", &model.elastic_tensor), ("C1 (rate coupling)", &model.viscous_tensor)]
    {
        let _ = writeln!(s, "{label}, {n2} x {n2} row-major on gradient index pairs:");
        for r in 0..n2 {
            let row: Vec<String> = (0..n2).map(|c| num(tensor[r * n2 + c])).collect();
            let _ = writeln!(s, "  {}", row.join(" "));
        }
    }
    let _ = writeln!(s, "H (pressure form), {} x {} row-major:", model.dim, model.dim);
    for i in 0..model.dim {
        let row: Vec<String> =
            (0..model.dim).map(|j| num(model.pressure_coupling[i * model.dim + j])).collect();
        let _ = writeln!(s, "  {}", row.join(" "));
    }
    s
}

/// Machine-readable effective model: `quantity,row,col,value` rows.
pub fn effective_csv(model: &EffectiveModel) -> String {
    let n2 = model.n2();
    let mut s = String::new();
    let _ = writeln!(s, "# porohom effective v1");
    let _ = writeln!(s, "quantity,row,col,value");
    let _ = writeln!(s, "dimension,0,0,{}", model.dim);
    let _ = writeln!(s, "rho0,0,0,{}", num(model.density));
    let _ = writeln!(s, "weight_solid,0,0,{}", num(model.load_weights.0));
    let _ = writeln!(s, "weight_fluid,0,0,{}", num(model.load_weights.1));
    for r in 0..n2 {
        for c in 0..n2 {
            let _ = writeln!(s, "c0,{r},{c},{}", num(model.elastic_tensor[r * n2 + c]));
        }
    }
    for r in 0..n2 {
        for c in 0..n2 {
            let _ = writeln!(s, "c1,{r},{c},{}", num(model.viscous_tensor[r * n2 + c]));
        }
    }
    for i in 0..model.dim {
        for j in 0..model.dim {
            let _ = writeln!(s, "h,{i},{j},{}", num(model.pressure_coupling[i * model.dim + j]));
        }
    }
    s
}

/// Parses the machine-readable form back into a model.
pub fn parse_effective_csv(text: &str) -> io::Result<EffectiveModel> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut dim = 0usize;
    let mut rho0 = 0.0;
    let mut w = (0.0, 0.0);
    let mut c0 = Vec::new();
    let mut c1 = Vec::new();
    let mut h = Vec::new();
    for line in text.lines() {
        if line.starts_with('#') || line.starts_with("quantity") || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(bad(&format!("malformed row: {line}")));
        }
        let value: f64 = parts[3].parse().map_err(|_| bad("bad value"))?;
        match parts[0] {
            "dimension" => dim = value as usize,
            "rho0" => rho0 = value,
            "weight_solid" => w.0 = value,
            "weight_fluid" => w.1 = value,
            "c0" => c0.push(value),
            "c1" => c1.push(value),
            "h" => h.push(value),
            other => return Err(bad(&format!("unknown quantity {other}"))),
        }
    }
    let n2 = dim * dim;
    if c0.len() != n2 * n2 || c1.len() != n2 * n2 || h.len() != n2 {
        return Err(bad("tensor blocks incomplete"));
    }
    Ok(EffectiveModel {
        dim,
        density: rho0,
        elastic_tensor: c0,
        viscous_tensor: c1,
        pressure_coupling: h,
        load_weights: w,
    })
}

/// Macro trajectory: per-step norms and the energy ledger.
pub fn macro_trajectory_csv(traj: &MacroTrajectory, mass: &[f64]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# porohom macro-trajectory v1");
    let _ = writeln!(s, "# norms: lumped-mass quadrature in space");
    let _ = writeln!(s, "time,l2_u,l2_v,kinetic,elastic,dissipated,pressure_work,work,residual");
    let norm = |x: &[f64]| -> f64 {
        x.iter().zip(mass).map(|(v, m)| m * v * v).sum::<f64>().sqrt()
    };
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{}",
        num(0.0),
        num(norm(&traj.displacements[0])),
        num(norm(&traj.velocities[0])),
        num(0.0),
        num(0.0),
        num(0.0),
        num(0.0),
        num(0.0),
        num(0.0)
    );
    for (k, rec) in traj.energy.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            num(rec.time),
            num(norm(&traj.displacements[k + 1])),
            num(norm(&traj.velocities[k + 1])),
            num(rec.kinetic),
            num(rec.elastic),
            num(rec.dissipated),
            num(rec.pressure_work),
            num(rec.external_work),
            num(rec.residual)
        );
    }
    s
}

/// Fine trajectory: phase-resolved norms plus the energy ledger.
pub fn fine_trajectory_csv(
    traj: &FineTrajectory,
    solid_mass: &[f64],
    fluid_mass: &[f64],
    pressure_weights: &[f64],
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# porohom fine-trajectory v1 (epsilon {})", num(traj.epsilon));
    let _ = writeln!(s, "# norms: lumped-mass quadrature per phase");
    let _ = writeln!(
        s,
        "time,l2_u_solid,l2_u_fluid,l2_v_fluid,l2_p,kinetic,elastic,viscous,memory_work,pressure_work,work,residual,max_div"
    );
    let wnorm = |m: &[f64], x: &[f64]| -> f64 {
        x.iter().zip(m).map(|(v, mi)| mi * v * v).sum::<f64>().sqrt()
    };
    for (k, rec) in traj.energy.iter().enumerate() {
        let u = &traj.displacements[k + 1];
        let v = &traj.velocities[k + 1];
        let p = &traj.pressures[k];
        let pl2 = if p.is_empty() { 0.0 } else { wnorm(pressure_weights, p) };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            num(rec.time),
            num(wnorm(solid_mass, u)),
            num(wnorm(fluid_mass, u)),
            num(wnorm(fluid_mass, v)),
            num(pl2),
            num(rec.kinetic),
            num(rec.elastic),
            num(rec.viscous_dissipated),
            num(rec.memory_work),
            num(rec.pressure_work),
            num(rec.external_work),
            num(rec.residual),
            num(rec.max_fluid_divergence)
        );
    }
    s
}

/// Estimate-report block appended to the fine run.
pub fn energy_report_csv(report: &EnergyReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# porohom estimate-report v1");
    let _ = writeln!(s, "quantity,value");
    let _ = writeln!(s, "sup_u_solid_sq,{}", num(report.sup_u_solid_sq));
    let _ = writeln!(s, "sup_grad_u_solid_sq,{}", num(report.sup_grad_u_solid_sq));
    let _ = writeln!(s, "sup_v_fluid_sq,{}", num(report.sup_v_fluid_sq));
    let _ = writeln!(s, "int_grad_v_fluid_sq,{}", num(report.int_grad_v_fluid_sq));
    let _ = writeln!(s, "pressure_l2,{}", num(report.pressure_l2));
    let _ = writeln!(s, "max_residual_rel,{}", num(report.max_residual_rel));
    s
}

/// Convergence study data (timings live in a separate log so this file is
/// reproducible bit for bit).
pub fn convergence_csv(record: &ConvergenceRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# porohom convergence v1");
    let _ = writeln!(s, "# error: discrete H1(0,T;L2) distance, trapezoid in time");
    let _ = writeln!(s, "epsilon,error,relative_error,cells,dt");
    for p in &record.points {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            num(p.epsilon),
            num(p.error),
            num(p.relative_error),
            p.cells,
            num(p.dt)
        );
    }
    let _ = writeln!(s, "# monotone_decrease: {}", if record.monotone { "PASS" } else { "FAILED" });
    s
}

/// Plot-ready two-column data file.
pub fn convergence_dat(record: &ConvergenceRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# epsilon error");
    for p in &record.points {
        let _ = writeln!(s, "{} {}", num(p.epsilon), num(p.error));
    }
    s
}

pub fn timings_log(record: &ConvergenceRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# wall-clock seconds per study point (not reproducible)");
    for p in &record.points {
        let _ = writeln!(
            s,
            "epsilon {} fine {:.3}s macro {:.3}s",
            p.epsilon, p.fine_seconds, p.macro_seconds
        );
    }
    s
}

/// Property ledger.
pub fn properties_csv(outcomes: &[porohom::props::PropertyOutcome]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# porohom properties v1");
    let _ = writeln!(s, "property,status,detail");
    for o in outcomes {
        let detail = o.detail.replace(',', ";");
        let _ = writeln!(s, "{},{},{detail}", o.name, if o.passed { "pass" } else { "FAIL" });
    }
    s
}

/// Full-field nodal snapshot (one row per node).
pub fn snapshot_csv(coords: &[Vec<f64>], field: &[f64], ncomp: usize, label: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# porohom snapshot v1 ({label})");
    let dim = coords.first().map_or(0, |c| c.len());
    let xs: Vec<String> = (0..dim).map(|d| format!("x{d}")).collect();
    let us: Vec<String> = (0..ncomp).map(|c| format!("u{c}")).collect();
    let _ = writeln!(s, "{},{}", xs.join(","), us.join(","));
    for (n, c) in coords.iter().enumerate() {
        let xs: Vec<String> = c.iter().map(|&v| num(v)).collect();
        let us: Vec<String> = (0..ncomp).map(|k| num(field[n * ncomp + k])).collect();
        let _ = writeln!(s, "{},{}", xs.join(","), us.join(","));
    }
    s
}

/// Mesh export: vertex list, cell list, periodic pairs.
pub fn mesh_export(mesh: &porohom::geometry::PeriodicMesh) -> String {
    let (vertices, cells, pairs) = mesh.export_vertices();
    let mut s = String::new();
    let _ = writeln!(s, "# porohom mesh v1");
    let _ = writeln!(s, "vertices {}", vertices.len());
    for v in &vertices {
        let row: Vec<String> = v.iter().map(|&x| num(x)).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    let _ = writeln!(s, "cells {}", cells.len());
    for (c, ids) in cells.iter().enumerate() {
        let row: Vec<String> = ids.iter().map(|i| i.to_string()).collect();
        let phase = match mesh.phase(c) {
            porohom::geometry::Phase::Solid => "solid",
            porohom::geometry::Phase::Fluid => "fluid",
        };
        let _ = writeln!(s, "{} {phase}", row.join(" "));
    }
    let _ = writeln!(s, "periodic_pairs {}", pairs.len());
    for (a, b) in &pairs {
        let _ = writeln!(s, "{a} {b}");
    }
    s
}

pub fn write(path: &Path, content: &str) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)
}
