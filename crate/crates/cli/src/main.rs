//! Command-line harness: cell diagnostics, effective-medium assembly, the
//! two time-domain solvers, the multiscale convergence study, the runtime
//! property suite, and report printing.
//!
//! Exit codes: 0 success, 2 config error, 3 solver failure, 4 property
//! failure.

mod config;
mod output;

use clap::{Parser, Subcommand};
use config::SimConfig;
use porohom::fem::lumped_mass;
use porohom::fine::{assemble_fine_operators, energy_report, solve_fine};
use porohom::geometry::{build_epsilon_domain, mesh_cell, volume_fractions, PeriodicMesh};
use porohom::homogenize::assemble_effective;
use porohom::macroscale::{assemble_macro_system, solve_macro};
use porohom::props::{run_property_suite, PropertyContext, PropertyOutcome};
use porohom::study::{run_convergence, StudySetup};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "porohom", version, about = "fluid-solid composite homogenization harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for the randomized property checks.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for independent solves.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Build the reference cell, report volume fractions and the detected
    /// pore period, export the mesh.
    Cell,
    /// Solve the cell problems and write the effective-model report.
    Effective {
        /// Also export the assembled cell operators in matrix-market form.
        #[arg(long)]
        dump_operators: bool,
    },
    /// Time-step the homogenized equation.
    Macro {
        /// Read the effective model from a previous report instead of
        /// recomputing it.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Time-step the fine-scale system at one scale.
    Fine {
        /// Scale to run; defaults to the first entry of the config list.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Run the multiscale convergence study.
    Converge,
    /// Execute the runtime property suite.
    Props,
    /// Pretty-print a stored effective model with structure diagnostics.
    Report {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(msg: impl std::fmt::Display) -> Self {
        Self { code: 2, message: msg.to_string() }
    }

    fn solver(msg: impl std::fmt::Display) -> Self {
        Self { code: 3, message: msg.to_string() }
    }

    fn properties(msg: impl std::fmt::Display) -> Self {
        Self { code: 4, message: msg.to_string() }
    }
}

impl From<porohom::Error> for Failure {
    fn from(e: porohom::Error) -> Self {
        // bad scale lists and malformed inputs are configuration problems
        match &e {
            porohom::Error::EpsilonNotConforming { .. } | porohom::Error::InvalidInput(_) => {
                Failure::config(e)
            }
            _ => Failure::solver(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 3, message: format!("i/o: {e}") }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::config(e)
    }
}

fn main() -> ExitCode {
    // die quietly when the consumer of a pipe goes away (e.g. `| head`)
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<SimConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::config("--config PATH is required for this command"))?;
    Ok(SimConfig::load(path)?)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Cell => cmd_cell(cli),
        Command::Effective { dump_operators } => cmd_effective(cli, *dump_operators),
        Command::Macro { model } => cmd_macro(cli, model.as_deref()),
        Command::Fine { epsilon } => cmd_fine(cli, *epsilon),
        Command::Converge => cmd_converge(cli),
        Command::Props => cmd_props(cli),
        Command::Report { model } => cmd_report(cli, model.as_deref()),
    }
}

fn cmd_cell(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let geom = cfg.geometry()?;
    let theta = cfg.pores()?;
    let mesh = mesh_cell(&geom, cfg.multiscale.cell_resolution)?;
    let (s_quad, f_quad) = volume_fractions(&geom, 512);
    let tagged = mesh.n_solid_cells() as f64 / mesh.n_cells() as f64;
    println!("cell geometry: {:?}", geom.shape());
    println!("analytic solid volume: {:.6}", geom.analytic_solid_volume());
    println!("quadrature fractions (res 512): solid {s_quad:.6}, fluid {f_quad:.6}");
    println!(
        "mesh {}^{} cells, tagged solid fraction {tagged:.6}",
        cfg.multiscale.cell_resolution,
        cfg.dimension
    );
    match porohom::ap::detect_period(&theta) {
        Ok(p) => println!("pore period: {p:?}"),
        Err(e) => println!("pore period: {e}"),
    }
    output::write(&cli.out.join("cell_mesh.txt"), &output::mesh_export(&mesh))?;
    println!("wrote {}", cli.out.join("cell_mesh.txt").display());
    Ok(())
}

fn cmd_effective(cli: &Cli, dump_operators: bool) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let geom = cfg.geometry()?;
    let inputs = cfg.cell_inputs()?;
    let mesh = mesh_cell(&geom, cfg.multiscale.cell_resolution)?;
    let model = assemble_effective(&geom, &mesh, &inputs, cli.threads.max(1))?;
    output::write(&cli.out.join("effective_report.txt"), &output::effective_report(&model))?;
    output::write(&cli.out.join("effective.csv"), &output::effective_csv(&model))?;
    println!("{}", output::effective_report(&model));
    println!("wrote {}", cli.out.join("effective.csv").display());
    if dump_operators {
        use porohom::fem::{assemble_vector_elliptic, ConstraintSet};
        use porohom::geometry::Phase;
        let coeff = porohom::homogenize::reduced_coefficient(
            &inputs.elastic,
            &inputs.elastic_kernel,
            &mesh,
            inputs.m_tau,
        )?;
        let constraints = if inputs.full_cell_validation {
            ConstraintSet::none(&mesh)
        } else {
            ConstraintSet::phase_interface(&mesh, Phase::Fluid)
        };
        let map = constraints.dof_map(cfg.dimension);
        let mask = (!inputs.full_cell_validation).then_some(Phase::Solid);
        let a = assemble_vector_elliptic(&mesh, &map, &coeff, mask)?;
        let mut buf = Vec::new();
        a.write_matrix_market(&mut buf)?;
        output::write(
            &cli.out.join("elastic_cell_operator.mtx"),
            std::str::from_utf8(&buf).expect("ascii"),
        )?;
        println!("wrote {}", cli.out.join("elastic_cell_operator.mtx").display());
    }
    Ok(())
}

fn obtain_model(
    cli: &Cli,
    cfg: &SimConfig,
    stored: Option<&std::path::Path>,
) -> Result<porohom::homogenize::EffectiveModel, Failure> {
    if let Some(path) = stored {
        let text = std::fs::read_to_string(path)?;
        return Ok(output::parse_effective_csv(&text)?);
    }
    let geom = cfg.geometry()?;
    let inputs = cfg.cell_inputs()?;
    let mesh = mesh_cell(&geom, cfg.multiscale.cell_resolution)?;
    Ok(assemble_effective(&geom, &mesh, &inputs, cli.threads.max(1))?)
}

fn cmd_macro(cli: &Cli, stored: Option<&std::path::Path>) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let model = obtain_model(cli, &cfg, stored)?;
    let mesh = PeriodicMesh::unit_box(cfg.dimension, cfg.multiscale.macro_resolution);
    let f = cfg.load_f()?;
    let g = cfg.load_g()?;
    let traj = solve_macro(
        &model,
        &mesh,
        &f,
        &g,
        cfg.time.horizon,
        cfg.time.dt,
        cfg.solver.cg_tol.max(1e-12),
    )?;
    let ops = assemble_macro_system(&model, &mesh)?;
    let mass = lumped_mass(&mesh, &ops.map, &vec![1.0; mesh.n_cells()], None);
    output::write(
        &cli.out.join("macro_trajectory.csv"),
        &output::macro_trajectory_csv(&traj, &mass),
    )?;
    println!("macro run: {} steps, dt {}", traj.n_steps(), traj.dt);
    println!("wrote {}", cli.out.join("macro_trajectory.csv").display());
    for &t in &cfg.output.snapshot_times {
        let k = ((t / cfg.time.dt).round() as usize).min(traj.displacements.len() - 1);
        let full = ops.map.scatter(&traj.displacements[k]);
        let coords: Vec<Vec<f64>> = (0..mesh.n_nodes()).map(|n| mesh.node_coords(n)).collect();
        let name = format!("macro_snapshot_t{t}.csv");
        output::write(
            &cli.out.join(&name),
            &output::snapshot_csv(&coords, &full, cfg.dimension, &format!("t = {t}")),
        )?;
        println!("wrote {}", cli.out.join(&name).display());
    }
    Ok(())
}

fn cmd_fine(cli: &Cli, epsilon: Option<f64>) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let geom = cfg.geometry()?;
    let theta = cfg.pores()?;
    let inputs = cfg.cell_inputs()?;
    let eps = epsilon.unwrap_or(cfg.multiscale.epsilons[0]);
    let domain = build_epsilon_domain(&geom, eps, &theta, cfg.multiscale.resolution_per_cell)?;
    let ops = assemble_fine_operators(&domain, &inputs)?;
    let f = cfg.load_f()?;
    let g = cfg.load_g()?;
    let traj = solve_fine(&ops, &inputs, &f, &g, cfg.time.horizon, cfg.time.dt)?;
    let report = energy_report(&ops, &traj);
    let tag = format!("{eps}").replace('.', "_");
    let csv = format!(
        "{}{}",
        output::fine_trajectory_csv(&traj, &ops.solid_mass, &ops.fluid_mass, &ops.pressure_weights),
        output::energy_report_csv(&report)
    );
    let name = format!("fine_trajectory_eps{tag}.csv");
    output::write(&cli.out.join(&name), &csv)?;
    println!(
        "fine run at epsilon {eps}: {} cells, {} steps",
        domain.mesh.n_cells(),
        traj.energy.len()
    );
    println!("estimate quantities: {:?}", report.quantities());
    println!("wrote {}", cli.out.join(&name).display());
    // final-state snapshot of displacement and pressure
    let full = ops.vmap.scatter(traj.displacements.last().expect("nonempty"));
    let coords: Vec<Vec<f64>> =
        (0..domain.mesh.n_nodes()).map(|n| domain.mesh.node_coords(n)).collect();
    let name = format!("fine_snapshot_eps{tag}.csv");
    output::write(
        &cli.out.join(&name),
        &output::snapshot_csv(&coords, &full, cfg.dimension, "final displacement"),
    )?;
    if let Some(p) = traj.pressures.last() {
        if !p.is_empty() {
            let fullp = ops.pmap.scatter(p);
            let name = format!("fine_pressure_eps{tag}.csv");
            output::write(
                &cli.out.join(&name),
                &output::snapshot_csv(&coords, &fullp, 1, "final pressure"),
            )?;
        }
    }
    Ok(())
}

fn cmd_converge(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let geom = cfg.geometry()?;
    let theta = cfg.pores()?;
    let inputs = cfg.cell_inputs()?;
    let f = cfg.load_f()?;
    let g = cfg.load_g()?;
    let setup = StudySetup {
        geom: &geom,
        theta: &theta,
        inputs: &inputs,
        f: &f,
        g: &g,
        horizon: cfg.time.horizon,
        dt: cfg.time.dt,
        epsilons: &cfg.multiscale.epsilons,
        res_per_cell: cfg.multiscale.resolution_per_cell,
        cell_resolution: cfg.multiscale.cell_resolution,
        threads: cli.threads.max(1),
    };
    let record = run_convergence(&setup)?;
    output::write(&cli.out.join("convergence.csv"), &output::convergence_csv(&record))?;
    output::write(&cli.out.join("convergence.dat"), &output::convergence_dat(&record))?;
    output::write(&cli.out.join("timings.log"), &output::timings_log(&record))?;
    for p in &record.points {
        println!(
            "epsilon {:>8.5}  error {:.6e}  relative {:.6e}",
            p.epsilon, p.error, p.relative_error
        );
    }
    println!("monotone decrease: {}", if record.monotone { "PASS" } else { "FAILED" });
    println!("wrote {}", cli.out.join("convergence.csv").display());
    Ok(())
}

fn cmd_props(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let inputs = cfg.cell_inputs()?;
    let ctx = PropertyContext {
        seed: cli.seed,
        dim: cfg.dimension,
        elastic: inputs.elastic.clone(),
        viscous: inputs.viscous.clone(),
    };
    let mut outcomes = run_property_suite(&ctx);
    outcomes.push(harness_round_trip(&cfg));
    outcomes.push(harness_reproducibility(&cfg, cli.threads.max(1)));
    for o in &outcomes {
        println!("{:<52} {}", o.name, if o.passed { "pass" } else { "FAIL" });
    }
    output::write(&cli.out.join("properties.csv"), &output::properties_csv(&outcomes))?;
    println!("wrote {}", cli.out.join("properties.csv").display());
    let failures: Vec<&PropertyOutcome> = outcomes.iter().filter(|o| !o.passed).collect();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::properties(format!(
            "{} properties failed: {}",
            failures.len(),
            failures.iter().map(|o| o.name).collect::<Vec<_>>().join(", ")
        )))
    }
}

/// Harness-level property: parse/serialize idempotence.
fn harness_round_trip(cfg: &SimConfig) -> PropertyOutcome {
    let once = cfg.normalize();
    let again = SimConfig::parse(&once).map(|c| c.normalize());
    let passed = matches!(&again, Ok(s) if *s == once);
    PropertyOutcome {
        name: "harness.config_round_trip",
        passed,
        detail: if passed {
            "serialize(parse(text)) is idempotent".into()
        } else {
            "normalization changed on a second pass".into()
        },
    }
}

/// Harness-level property: a repeated small pipeline run emits identical
/// bytes.
fn harness_reproducibility(cfg: &SimConfig, threads: usize) -> PropertyOutcome {
    let run_once = || -> Result<String, Failure> {
        let geom = cfg.geometry()?;
        let inputs = cfg.cell_inputs()?;
        let res = cfg.multiscale.cell_resolution.min(16);
        let mesh = mesh_cell(&geom, res.max(4))?;
        let model = assemble_effective(&geom, &mesh, &inputs, threads)?;
        Ok(output::effective_csv(&model))
    };
    match (run_once(), run_once()) {
        (Ok(a), Ok(b)) if a == b => PropertyOutcome {
            name: "harness.bitwise_reproducible",
            passed: true,
            detail: "two pipeline runs emitted identical bytes".into(),
        },
        (Ok(_), Ok(_)) => PropertyOutcome {
            name: "harness.bitwise_reproducible",
            passed: false,
            detail: "repeated runs differ".into(),
        },
        (Err(e), _) | (_, Err(e)) => PropertyOutcome {
            name: "harness.bitwise_reproducible",
            passed: false,
            detail: e.message,
        },
    }
}

fn cmd_report(cli: &Cli, stored: Option<&std::path::Path>) -> Result<(), Failure> {
    let path = stored
        .map(PathBuf::from)
        .unwrap_or_else(|| cli.out.join("effective.csv"));
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let model = output::parse_effective_csv(&text)?;
    println!("{}", output::effective_report(&model));
    // structure diagnostics
    let n2 = model.n2();
    let mut defect = 0.0f64;
    for r in 0..n2 {
        for c in 0..n2 {
            defect =
                defect.max((model.elastic_tensor[r * n2 + c] - model.elastic_tensor[c * n2 + r]).abs());
        }
    }
    println!("C0 major-symmetry defect: {defect:.3e}");
    let trace: f64 = (0..n2).map(|i| model.elastic_tensor[i * n2 + i]).sum();
    println!("C0 trace: {trace:.6e}");
    Ok(())
}
