use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;
use vortex_core::dynamics::{integrate, IntegratorMethod, IntegratorSpec};
use vortex_core::io::{self, ConvergenceRow, CriticalPointReport, RunManifest};
use vortex_core::orbit::{find_orbit_with_diagnostics, verify_orbit_by_integration, OrbitOptions};
use vortex_core::robin::{contour_grid, scan_critical_points};
use vortex_core::spectral::spectrum_report;
use vortex_core::{DomainSpec, Result, VortexError};

#[derive(Parser, Debug)]
#[command(name = "vortex", version, about = "Point-vortex dynamics and small-period choreographies in planar domains")]
struct Cli {
    /// Worker threads for r-sweeps and grid scans (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the vortex system and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Compute a small-period choreography near a Robin critical point.
    Orbit(OrbitArgs),
    /// Locate and classify critical points of the Robin function.
    Robin(RobinArgs),
    /// Report the linearization spectrum at the circle solution.
    Spectrum(SpectrumArgs),
    /// Run the orbit pipeline over a sequence of scales.
    VerifyTheorem(VerifyArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Integrator {
    Midpoint,
    Rk4,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    dt: f64,
    #[arg(long = "t-end")]
    t_end: f64,
    #[arg(long, value_enum, default_value = "midpoint")]
    integrator: Integrator,
    /// Record every k-th step.
    #[arg(long, default_value_t = 1)]
    sample_every: usize,
    #[arg(long, default_value_t = IntegratorSpec::DEFAULT_GUARD_MARGIN)]
    guard_margin: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OrbitArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(short = 'N', long = "vortices")]
    n: usize,
    #[arg(long)]
    r: f64,
    #[arg(long, default_value_t = 64)]
    modes: usize,
    /// Tolerance on the reduced gradient.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Physical seed for the orbit centre, `re,im`.
    #[arg(long = "seed-a", default_value = "0,0", value_parser = parse_complex, allow_hyphen_values = true)]
    seed_a: Complex64,
    /// Truncation used for the robustness comparison (default: twice --modes).
    #[arg(long)]
    compare_modes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RobinArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long)]
    contour_out: Option<PathBuf>,
    #[arg(long)]
    critical_out: Option<PathBuf>,
    /// Also write a gnuplot script next to the contour CSV.
    #[arg(long)]
    gnuplot: bool,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(short = 'N', long = "vortices")]
    n: usize,
    #[arg(long, default_value_t = 64)]
    modes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    domain: PathBuf,
    #[arg(short = 'N', long = "vortices")]
    n: usize,
    #[arg(long = "r-list", value_delimiter = ',', required = true)]
    r_list: Vec<f64>,
    #[arg(long, default_value_t = 64)]
    modes: usize,
    #[arg(long = "seed-a", default_value = "0,0", value_parser = parse_complex, allow_hyphen_values = true)]
    seed_a: Complex64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_complex(s: &str) -> std::result::Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |p: &str| p.parse::<f64>().map_err(|e| format!("invalid number '{p}': {e}"));
    match parts.as_slice() {
        [re] => Ok(Complex64::new(num(re)?, 0.0)),
        [re, im] => Ok(Complex64::new(num(re)?, num(im)?)),
        _ => Err(format!("expected 're,im', got '{s}'")),
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", out.display()))
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}{suffix}", out.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports always serialize") + "\n"
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let d = io::read_domain(&args.domain)?;
    let c0 = io::read_configuration(&args.config)?;
    let method = match args.integrator {
        Integrator::Midpoint => IntegratorMethod::ImplicitMidpoint,
        Integrator::Rk4 => IntegratorMethod::Rk4,
    };
    let spec = IntegratorSpec::new(method, args.dt).with_guard_margin(args.guard_margin);
    let traj = integrate(&d, &c0, &spec, args.t_end, args.sample_every)?;
    info!("integrated {} samples up to t = {}", traj.len(), args.t_end);

    let mut manifest = RunManifest::new(
        "simulate",
        json!({
            "dt": args.dt, "t_end": args.t_end, "integrator": format!("{:?}", args.integrator).to_lowercase(),
            "sample_every": args.sample_every, "guard_margin": args.guard_margin,
            "domain": args.domain, "config": args.config,
        }),
    );
    manifest.add_input(&args.domain)?;
    manifest.add_input(&args.config)?;
    manifest.write_output(&args.out, io::trajectory_csv(&traj).as_bytes())?;
    manifest.write(&manifest_path(&args.out))
}

fn orbit_options(modes: usize, tol: f64) -> OrbitOptions {
    OrbitOptions { modes, reduced_tol: tol, correction_tol: (0.1 * tol).min(1e-11), ..OrbitOptions::default() }
}

/// Truncation changes above this trigger a warning.
const TRUNCATION_TOL: f64 = 1e-8;

fn orbit(args: &OrbitArgs) -> Result<()> {
    let d = io::read_domain(&args.domain)?;
    let opts = orbit_options(args.modes, args.tol);
    let (record, diagnostics) = find_orbit_with_diagnostics(&d, args.n, args.r, args.seed_a, &opts)?;
    let spec = IntegratorSpec::rk4(record.t_r / 20_000.0);
    let verification = verify_orbit_by_integration(&d, &record, &spec)?;

    let compare = args.compare_modes.unwrap_or(2 * args.modes);
    let truncation = match find_orbit_with_diagnostics(&d, args.n, args.r, args.seed_a, &orbit_options(compare, args.tol)) {
        Ok((other, _)) => {
            let da = (other.a_r - record.a_r).norm();
            let dh = (other.h1_error - record.h1_error).abs();
            let stable = da < TRUNCATION_TOL && dh < TRUNCATION_TOL;
            if !stable {
                warn!("truncation M = {} vs {compare}: |Δa_r| = {da:.3e}, |Δh1_error| = {dh:.3e}", args.modes);
            }
            json!({"modes": compare, "delta_a_r": da, "delta_h1_error": dh, "stable": stable,
                   "warning": (!stable).then(|| format!("results change by more than {TRUNCATION_TOL:e} between M = {} and M = {compare}", args.modes))})
        }
        Err(e) => {
            warn!("comparison run at M = {compare} failed: {e}");
            json!({"modes": compare, "stable": false, "warning": format!("comparison run failed: {e}")})
        }
    };

    let r = record.r;
    let checks = json!({
        "full_gradient": record.full_grad_norm < 10.0 * args.tol,
        "return_distance": verification.return_distance < 1e-6 * r,
        "choreography": record.choreography_residual < 1e-8 * r,
        "minimal_period": verification.minimal_period_confirmed,
    });
    let all_ok = checks.as_object().expect("object literal").values().all(|v| v.as_bool() == Some(true));
    let report = json!({
        "verification": verification, "truncation": truncation,
        "diagnostics": diagnostics, "checks": checks, "passed": all_ok,
    });

    let mut manifest = RunManifest::new(
        "orbit",
        json!({"N": args.n, "r": args.r, "modes": args.modes, "tol": args.tol,
               "seed_a": [args.seed_a.re, args.seed_a.im], "compare_modes": compare,
               "domain": DomainSpec::from(&d)}),
    );
    manifest.add_input(&args.domain)?;
    manifest.write_output(&args.out, (io::orbit_to_json(&record) + "\n").as_bytes())?;
    manifest.write_output(&sibling(&args.out, ".verify.json"), to_json(&report).as_bytes())?;
    manifest.write(&manifest_path(&args.out))?;
    println!("T_r = {:.7}  a_r = ({:.3e}, {:.3e})  h1_error = {:.3e}", record.t_r, record.a_r.re, record.a_r.im, record.h1_error);
    if !all_ok {
        return Err(VortexError::VerificationFailed(checks.to_string()));
    }
    Ok(())
}

fn robin(args: &RobinArgs) -> Result<()> {
    let d = io::read_domain(&args.domain)?;
    let records = scan_critical_points(&d, args.grid)?;
    let report = CriticalPointReport { domain: DomainSpec::from(&d), grid: args.grid, critical_points: records };
    let text = to_json(&report);
    let mut manifest = RunManifest::new(
        "robin",
        json!({"grid": args.grid, "domain": DomainSpec::from(&d), "contour_out": args.contour_out, "gnuplot": args.gnuplot}),
    );
    manifest.add_input(&args.domain)?;
    match &args.critical_out {
        Some(path) => manifest.write_output(path, text.as_bytes())?,
        None => print!("{text}"),
    }
    if let Some(path) = &args.contour_out {
        let rows = contour_grid(&d, args.grid)?;
        manifest.write_output(path, io::contour_csv(&rows).as_bytes())?;
        if args.gnuplot {
            let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let script = io::gnuplot_contour_script(&name, args.grid);
            manifest.write_output(&sibling(path, ".gp"), script.as_bytes())?;
        }
    }
    if let Some(first) = args.critical_out.as_ref().or(args.contour_out.as_ref()) {
        manifest.write(&manifest_path(first))?;
    }
    Ok(())
}

fn spectrum(args: &SpectrumArgs) -> Result<()> {
    let report = spectrum_report(args.n, args.modes)?;
    let text = to_json(&report);
    match &args.out {
        Some(path) => {
            let mut manifest = RunManifest::new("spectrum", json!({"N": args.n, "modes": args.modes}));
            manifest.write_output(path, text.as_bytes())?;
            manifest.write(&manifest_path(path))?;
            println!("kernel dimension {} (gap {:.3e})", report.kernel_dimension, report.spectral_gap);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn verify_theorem(args: &VerifyArgs) -> Result<()> {
    let d = io::read_domain(&args.domain)?;
    let opts = orbit_options(args.modes, 1e-10);
    let rows: Vec<ConvergenceRow> = args
        .r_list
        .par_iter()
        .map(|&r| -> Result<ConvergenceRow> {
            let (record, diag) = find_orbit_with_diagnostics(&d, args.n, r, args.seed_a, &opts)?;
            let verification = verify_orbit_by_integration(&d, &record, &IntegratorSpec::rk4(record.t_r / 20_000.0))?;
            info!("r = {r}: h1_error {:.3e}, return {:.3e}", record.h1_error, verification.return_distance);
            Ok(ConvergenceRow {
                r,
                a_r: [record.a_r.re, record.a_r.im],
                h1_error: record.h1_error,
                w_over_r: diag.w_norm / r,
                choreography_residual: record.choreography_residual,
                return_distance: verification.return_distance,
            })
        })
        .collect::<Result<_>>()?;
    let table = io::convergence_csv(&rows);
    let mut manifest = RunManifest::new(
        "verify-theorem",
        json!({"N": args.n, "r_list": args.r_list, "modes": args.modes,
               "seed_a": [args.seed_a.re, args.seed_a.im], "domain": DomainSpec::from(&d)}),
    );
    manifest.add_input(&args.domain)?;
    manifest.write_output(&args.out, table.as_bytes())?;
    manifest.write(&manifest_path(&args.out))?;
    print!("{table}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| VortexError::Input(format!("--jobs: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Orbit(a) => orbit(a),
        Command::Robin(a) => robin(a),
        Command::Spectrum(a) => spectrum(a),
        Command::VerifyTheorem(a) => verify_theorem(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VORTEX_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(history) = e.history() {
                eprintln!("residual history: {}", serde_json::to_string(history).unwrap_or_default());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
