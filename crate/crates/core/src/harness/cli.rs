use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::geometry::AnalyticSurface;
use crate::mesh::build_ball_mesh;
use crate::solver::{diagnostics, run_observed, NodalState, StepDiagnostics};

use super::config::{ExperimentKind, RunConfig};
use super::errors::{convergence_study, StudyConfig};
use super::fracnorm::fracnorm_check;
use super::oracle::RadialOracle;
use super::output::{write_csv, write_fracnorm_csv, write_vtk};

#[derive(Debug, Parser)]
#[command(name = "bulksurf", version, about = "Evolving bulk-surface finite elements for a free-boundary tumour growth model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the coupled model from the unit ball under a constant source.
    Simulate(SimulateArgs),
    /// Convergence study over a sequence of ball refinements.
    Converge(ConvergeArgs),
    /// Fractional-norm property battery.
    FracnormCheck(FracnormArgs),
    /// Size and quality of a ball mesh.
    MeshInfo(MeshInfoArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    q_const: Option<f64>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write a VTK file every this many steps (0 disables).
    #[arg(long)]
    vtk_every: Option<usize>,
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[arg(long, value_enum)]
    experiment: Option<ExperimentKind>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    levels: Option<usize>,
    /// Output CSV path.
    #[arg(long, default_value = "convergence.csv")]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FracnormArgs {
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long, default_value = "fracnorm.csv")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct MeshInfoArgs {
    #[arg(long)]
    level: usize,
    #[arg(long)]
    degree: usize,
}

/// Exit status for an error: 1 for invalid input, 2 for a failure at run time.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidDegree(_) | Error::NodeBudgetExceeded { .. } => 1,
        _ => 2,
    }
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn cli_main<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, out),
        Command::Converge(a) => converge(a, out),
        Command::FracnormCheck(a) => fracnorm(a, out),
        Command::MeshInfo(a) => mesh_info(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn io<T>(r: std::io::Result<T>) -> Result<T> {
    r.map_err(Error::from)
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    path.map(RunConfig::load).transpose().map(Option::unwrap_or_default)
}

fn simulate(a: SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let flags = RunConfig {
        alpha: a.alpha,
        beta: a.beta,
        tau: a.tau,
        t_end: a.t_end,
        q_const: a.q_const,
        degree: a.degree,
        level: a.level,
        out_dir: a.out_dir,
        vtk_every: a.vtk_every,
        ..Default::default()
    };
    let cfg = load_config(a.config.as_deref())?.overridden_by(flags);
    let stepper = cfg.stepper()?;
    let q = cfg.q_const.unwrap_or(0.2);
    let out_dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    let vtk_every = cfg.vtk_every.unwrap_or(0);
    let mut mesh = build_ball_mesh(1.0, cfg.level.unwrap_or(2), cfg.degree.unwrap_or(2))?;
    std::fs::create_dir_all(&out_dir)?;

    let initial = NodalState::initial(&mesh, &AnalyticSurface::sphere(1.0), 0.0)?;
    let oracle = RadialOracle::new(q, 1.0);
    let mut diag = csv::Writer::from_path(out_dir.join("diagnostics.csv"))?;
    diag.write_record(["t", "mean_radius", "oracle_radius", "min_radius_ratio", "normal_drift", "u_max", "h_mean"])?;
    let mut record = |d: &StepDiagnostics<f64>| -> Result<()> {
        let f = |x: f64| format!("{x:.16e}");
        diag.write_record([
            f(d.t),
            f(d.mean_radius),
            f(oracle.radius(d.t)),
            f(d.min_radius_ratio),
            f(d.normal_drift),
            f(d.u_max),
            f(d.h_mean),
        ])?;
        Ok(())
    };
    record(&diagnostics(&initial, &mesh)?)?;
    let vtk_path = |i: usize| out_dir.join(format!("state_{i:06}.vtk"));
    if vtk_every > 0 {
        write_vtk(&mesh, &initial, &vtk_path(0))?;
    }
    let mut steps = 0usize;
    let traj = run_observed(&initial, &stepper, &mut mesh, &|_, _| q, &mut |state, m, d| {
        steps += 1;
        record(d)?;
        if vtk_every > 0 && steps.is_multiple_of(vtk_every) {
            write_vtk(m, state, &vtk_path(steps))?;
        }
        Ok(())
    })?;
    diag.flush()?;
    let last = traj.last();
    if vtk_every > 0 && !steps.is_multiple_of(vtk_every) {
        write_vtk(&mesh, last, &vtk_path(steps))?;
    }
    let d = traj.diagnostics.last().expect("initial diagnostics");
    io(writeln!(
        out,
        "steps={steps} t={:.6} mean_radius={:.10} oracle_radius={:.10} min_radius_ratio={:.4}",
        d.t,
        d.mean_radius,
        oracle.radius(d.t),
        d.min_radius_ratio
    ))?;
    match traj.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn converge(a: ConvergeArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?.overridden_by(RunConfig {
        experiment: a.experiment,
        degree: a.degree,
        levels: a.levels,
        ..Default::default()
    });
    let degree = cfg.degree.unwrap_or(1);
    let levels = cfg.levels.unwrap_or(3);
    if levels < 3 {
        return Err(Error::InvalidArgument(format!("--levels must be at least 3, got {levels}")));
    }
    if !(1..=3).contains(&degree) {
        return Err(Error::InvalidDegree(degree));
    }
    let mut study = match cfg.experiment.unwrap_or(ExperimentKind::Robin) {
        ExperimentKind::Robin => StudyConfig::robin(degree, levels),
        ExperimentKind::Flow => StudyConfig::flow(degree, levels),
    };
    study.alpha = cfg.alpha.unwrap_or(study.alpha);
    study.beta = cfg.beta.unwrap_or(study.beta);
    study.q_const = cfg.q_const.unwrap_or(study.q_const);
    study.t_end = cfg.t_end.unwrap_or(study.t_end);
    study.tau = cfg.tau.unwrap_or(study.tau);
    if let Some(l) = cfg.level {
        study.min_level = l;
    }
    let (report, failure) = convergence_study(&study);
    write_csv(&report, &a.out)?;
    for (r, row) in report.rows.iter().enumerate() {
        let mut line = format!("level {} h={:.4e}", row.level, row.h);
        for (c, &n) in report.norms.iter().enumerate() {
            line += &format!(" {}={:.4e}", n.name(), row.errors[c]);
            if let Some(e) = report.eoc(r, n) {
                line += &format!(" (eoc {e:.3})");
            }
        }
        io(writeln!(out, "{line}"))?;
    }
    io(writeln!(out, "wrote {}", a.out.display()))?;
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn fracnorm(a: FracnormArgs, out: &mut dyn Write) -> Result<()> {
    if a.levels < 2 {
        return Err(Error::InvalidArgument(format!("--levels must be at least 2, got {}", a.levels)));
    }
    let report = fracnorm_check(a.levels)?;
    for c in &report.checks {
        let level = c.level.map(|l| format!(" level {l}")).unwrap_or_default();
        let op = if c.lower { ">=" } else { "<=" };
        let verdict = if c.passed() { "PASS" } else { "FAIL" };
        io(writeln!(out, "{verdict} {}{level}: {:.3e} {op} {:.3e}", c.name, c.value, c.bound))?;
    }
    for r in &report.inverse_constants {
        io(writeln!(out, "inverse constant ({}, {}) level {}: {:.6}", r.s1, r.s2, r.level, r.constant))?;
    }
    write_fracnorm_csv(&report, &a.out)?;
    let failed = report.checks.iter().filter(|c| !c.passed()).count();
    io(writeln!(out, "{} checks, {failed} failed; wrote {}", report.checks.len(), a.out.display()))?;
    Ok(())
}

fn mesh_info(a: MeshInfoArgs, out: &mut dyn Write) -> Result<()> {
    let mesh = build_ball_mesh(1.0, a.level, a.degree)?;
    let q = mesh.quality_report()?;
    io(writeln!(
        out,
        "N={}\nN_Γ={}\ntets={}\nfaces={}\nh={:.6}\nmin_radius_ratio={:.6}",
        mesh.n_nodes(),
        mesh.n_boundary(),
        mesh.n_tets(),
        mesh.n_faces(),
        q.h,
        q.min_radius_ratio
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        let code = cli_main(std::iter::once("bulksurf").chain(args.iter().copied()), &mut o, &mut e);
        (code, String::from_utf8(o).unwrap(), String::from_utf8(e).unwrap())
    }

    #[test]
    fn mesh_info_base() {
        let (code, out, _) = run(&["mesh-info", "--level", "0", "--degree", "1"]);
        assert_eq!(code, 0);
        assert!(out.contains("N=7\n") && out.contains("N_Γ=6\n"));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(&["--help"]).0, 0);
        assert_eq!(run(&["mesh-info", "--bogus"]).0, 1);
        assert_eq!(run(&["mesh-info", "--level", "0", "--degree", "7"]).0, 1);
        let (code, _, err) = run(&["simulate", "--level", "0", "--degree", "1"]);
        assert_eq!(code, 1);
        assert!(err.contains("--tau"));
    }
}
