//! Command-line runner: every invocation writes its products into a fresh
//! run directory under the output root together with a `run.json` record
//! (command, input digests, parameters, output list, timestamp, version).
//!
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 computation failure.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use scr_core::circuit::{build_matrices, eigenmodes};
use scr_core::electron::{LeverArms, SweepRange};
use scr_core::error::{Error, Result};
use scr_core::io::{
    load_arms, load_designs, load_references, load_trace, save_csv, save_json, save_trace,
    TraceFormat,
};
use scr_core::material::{scaling_predict, ScalingBase};
use scr_core::resonance::{
    fit_resonance_with, photon_number, synth_trace, FitOptions, ResonanceFit,
};
use scr_core::verify::fit_gamma;

#[derive(Parser)]
#[command(
    name = "scr",
    version,
    about = "Coupled high-impedance resonator toolkit",
    arg_required_else_help = true
)]
struct Cli {
    /// Root for run directories (default: $SCR_RUN_ROOT, then ./runs).
    #[arg(long, global = true)]
    out_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenmode table for every design in a file.
    Simulate(SimulateArgs),
    /// Coupled-mode spectrum of one design across a dot-frequency sweep.
    Couple(CoupleArgs),
    /// Hanger-resonance fits of one or more trace CSVs.
    Fit(FitArgs),
    /// Capacitance-discount fit against reference frequencies.
    Verify(VerifyArgs),
    /// Frequency and impedance prediction for a rescaled geometry.
    Scale(ScaleArgs),
    /// Synthetic resonance trace.
    Synth(SynthArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Designs file (JSON).
    designs: PathBuf,
    /// Capacitance discount in [(2/pi)^2, 1].
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Exclude the feedline coupling capacitances.
    #[arg(long)]
    bare: bool,
}

#[derive(Args)]
struct CoupleArgs {
    /// Designs file (JSON).
    designs: PathBuf,
    /// Design name (default: first in the file).
    #[arg(long)]
    design: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Number of electrons in the dot.
    #[arg(long, default_value_t = 1)]
    electrons: usize,
    /// Uniform antisymmetric lever arm, 1/(V*m).
    #[arg(long, required_unless_present = "arms", conflicts_with = "arms")]
    e_x: Option<f64>,
    /// Per-electron lever-arm table (JSON, per-micrometer units).
    #[arg(long)]
    arms: Option<PathBuf>,
    /// Dot-frequency sweep start, Hz.
    #[arg(long)]
    dot_start: f64,
    /// Dot-frequency sweep stop, Hz.
    #[arg(long)]
    dot_stop: f64,
    #[arg(long, default_value_t = 41)]
    points: usize,
}

#[derive(Args)]
struct FitArgs {
    /// Trace CSVs.
    #[arg(required = true)]
    traces: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = TraceArg::ReIm)]
    format: TraceArg,
    /// Fit a cable-delay nuisance phase.
    #[arg(long)]
    cable_delay: bool,
    /// Probe power at the feedline, watts; adds photon-number estimates.
    #[arg(long)]
    power: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Designs file (JSON).
    designs: PathBuf,
    /// Reference frequencies (JSON).
    references: PathBuf,
}

#[derive(Args)]
struct ScaleArgs {
    /// Base meander length, meters.
    #[arg(long)]
    l: f64,
    /// Base wire width, meters.
    #[arg(long)]
    w: f64,
    /// Base differential frequency, Hz.
    #[arg(long, default_value_t = 3.62e9)]
    f0: f64,
    /// Base mode impedance, ohms.
    #[arg(long, default_value_t = 2.66e3)]
    z: f64,
    /// Target meander length, meters.
    #[arg(long)]
    target_l: f64,
    /// Target wire width, meters.
    #[arg(long)]
    target_w: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    f0: f64,
    #[arg(long)]
    qi: f64,
    #[arg(long)]
    qc: f64,
    #[arg(long, default_value_t = 0.0)]
    phi: f64,
    /// Span, Hz (default: 200 loaded linewidths).
    #[arg(long)]
    span: Option<f64>,
    #[arg(long, default_value_t = 2001)]
    points: usize,
    /// Complex noise RMS per sample, linear amplitude.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TraceArg::ReIm)]
    format: TraceArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TraceArg {
    /// frequency_hz, re, im
    ReIm,
    /// frequency_hz, magnitude_db, phase_rad
    DbPhase,
}

impl From<TraceArg> for TraceFormat {
    fn from(value: TraceArg) -> Self {
        match value {
            TraceArg::ReIm => TraceFormat::ReIm,
            TraceArg::DbPhase => TraceFormat::DbPhase,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out_root = cli
        .out_root
        .or_else(|| std::env::var_os("SCR_RUN_ROOT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    match run(&cli.command, &out_root) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::InvalidParameter(_)
                | Error::Parse(_)
                | Error::Validation(_)
                | Error::Io(_) => 2,
                _ => 3,
            })
        }
    }
}

fn run(command: &Command, out_root: &Path) -> Result<()> {
    match command {
        Command::Simulate(args) => simulate(args, out_root),
        Command::Couple(args) => couple(args, out_root),
        Command::Fit(args) => fit(args, out_root),
        Command::Verify(args) => verify(args, out_root),
        Command::Scale(args) => scale(args, out_root),
        Command::Synth(args) => synth(args, out_root),
    }
}

/// First free `<name>-NNNN` directory under the root.
fn create_run_dir(root: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(root)?;
    let mut next = 0u32;
    for entry in fs::read_dir(root)? {
        let entry = entry?;
        if let Some(rest) = entry
            .file_name()
            .to_string_lossy()
            .strip_prefix(&format!("{name}-"))
            .and_then(|s| s.parse::<u32>().ok())
        {
            next = next.max(rest + 1);
        }
    }
    loop {
        let dir = root.join(format!("{name}-{next:04}"));
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => next += 1,
            Err(e) => return Err(e.into()),
        }
    }
}

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

fn digest(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path)?;
    let hash = Sha256::digest(&bytes);
    Ok(InputDigest {
        path: path.display().to_string(),
        sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
    })
}

#[derive(Serialize)]
struct RunRecord {
    command: String,
    version: String,
    timestamp: String,
    inputs: Vec<InputDigest>,
    parameters: Value,
    outputs: Vec<String>,
}

fn write_record(
    dir: &Path,
    command: &str,
    inputs: &[&Path],
    parameters: Value,
    outputs: &[&str],
) -> Result<()> {
    let record = RunRecord {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: Utc::now().to_rfc3339(),
        inputs: inputs.iter().map(|p| digest(p)).collect::<Result<_>>()?,
        parameters,
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    save_json(dir.join("run.json"), &record)
}

#[derive(Serialize)]
struct EigenmodeRow {
    design: String,
    label: String,
    frequency_hz: f64,
    impedance_ohm: Option<f64>,
    v_node_a: f64,
    v_node_b: f64,
}

fn simulate(args: &SimulateArgs, out_root: &Path) -> Result<()> {
    let designs = load_designs(&args.designs)?;
    let mut rows = Vec::new();
    for design in &designs {
        let mats = build_matrices(design, !args.bare, args.gamma)?;
        for mode in eigenmodes(&mats)? {
            rows.push(EigenmodeRow {
                design: design.name.clone(),
                label: mode.label.to_string(),
                frequency_hz: mode.frequency,
                impedance_ohm: mode.impedance,
                v_node_a: mode.eigenvector[0],
                v_node_b: mode.eigenvector[1],
            });
        }
    }
    let dir = create_run_dir(out_root, "simulate")?;
    save_csv(dir.join("modes.csv"), &rows)?;
    write_record(
        &dir,
        "simulate",
        &[&args.designs],
        json!({ "gamma": args.gamma, "bare": args.bare }),
        &["modes.csv"],
    )?;
    for row in &rows {
        println!(
            "{}: {} {:.6} GHz",
            row.design,
            row.label,
            row.frequency_hz / 1e9
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    f_dot_hz: f64,
    mode: usize,
    label: String,
    frequency_hz: f64,
}

fn couple(args: &CoupleArgs, out_root: &Path) -> Result<()> {
    let designs = load_designs(&args.designs)?;
    let design = match &args.design {
        Some(name) => designs
            .iter()
            .find(|d| &d.name == name)
            .ok_or_else(|| Error::Validation(format!("no design named {name}")))?,
        None => designs
            .first()
            .ok_or_else(|| Error::Validation("designs file is empty".into()))?,
    };
    let arms = match (&args.arms, args.e_x) {
        (Some(path), _) => load_arms(path)?,
        (None, Some(e_x)) => LeverArms::antisymmetric_x(e_x, args.electrons)?,
        (None, None) => unreachable!("clap enforces one of --e-x/--arms"),
    };
    let sweep = SweepRange {
        start: 2.0 * PI * args.dot_start,
        stop: 2.0 * PI * args.dot_stop,
        points: args.points,
    };
    let points =
        scr_core::electron::sweep_coupled_modes(design, args.gamma, args.electrons, &arms, &sweep)?;
    let mut rows = Vec::new();
    for point in &points {
        for (i, mode) in point.modes.iter().enumerate() {
            rows.push(SweepRow {
                f_dot_hz: point.omega_dot / (2.0 * PI),
                mode: i,
                label: mode.label.to_string(),
                frequency_hz: mode.frequency,
            });
        }
    }
    let dir = create_run_dir(out_root, "couple")?;
    save_csv(dir.join("sweep.csv"), &rows)?;
    let mut inputs: Vec<&Path> = vec![&args.designs];
    if let Some(path) = &args.arms {
        inputs.push(path);
    }
    write_record(
        &dir,
        "couple",
        &inputs,
        json!({
            "design": design.name,
            "gamma": args.gamma,
            "electrons": args.electrons,
            "e_x_per_vm": args.e_x,
            "dot_start_hz": args.dot_start,
            "dot_stop_hz": args.dot_stop,
            "points": args.points,
        }),
        &["sweep.csv"],
    )?;
    println!(
        "{}: {} sweep points, {} modes each",
        design.name,
        points.len(),
        points.first().map_or(0, |p| p.modes.len())
    );
    println!("wrote {}", dir.display());
    Ok(())
}

#[derive(Serialize)]
struct FitRow {
    file: String,
    f0_hz: f64,
    qi: f64,
    qc: f64,
    phi_rad: f64,
    q_loaded: f64,
    residual_rms: f64,
    f0_err_hz: f64,
    qi_err: f64,
    qc_err: f64,
    phi_err_rad: f64,
    photons: Option<f64>,
}

fn fit(args: &FitArgs, out_root: &Path) -> Result<()> {
    let options = FitOptions {
        cable_delay: args.cable_delay,
    };
    let mut rows = Vec::new();
    for path in &args.traces {
        let trace = load_trace(path, args.format.into())?;
        let fit = fit_resonance_with(&trace, None, &options)?;
        let photons = match args.power.or(trace.power_in) {
            Some(p) => Some(photon_number(p, &fit)?),
            None => None,
        };
        rows.push(FitRow {
            file: path.display().to_string(),
            f0_hz: fit.f0,
            qi: fit.qi,
            qc: fit.qc,
            phi_rad: fit.phi,
            q_loaded: fit.q_loaded(),
            residual_rms: fit.residual_rms,
            f0_err_hz: fit.uncertainties.f0,
            qi_err: fit.uncertainties.qi,
            qc_err: fit.uncertainties.qc,
            phi_err_rad: fit.uncertainties.phi,
            photons,
        });
    }
    let dir = create_run_dir(out_root, "fit")?;
    save_csv(dir.join("fits.csv"), &rows)?;
    save_json(dir.join("fits.json"), &rows)?;
    let inputs: Vec<&Path> = args.traces.iter().map(PathBuf::as_path).collect();
    write_record(
        &dir,
        "fit",
        &inputs,
        json!({
            "format": format!("{:?}", args.format),
            "cable_delay": args.cable_delay,
            "power_w": args.power,
        }),
        &["fits.csv", "fits.json"],
    )?;
    for row in &rows {
        println!(
            "{}: f0 = {:.6} GHz, Qi = {:.4e}, Qc = {:.4e}, phi = {:.4}",
            row.file,
            row.f0_hz / 1e9,
            row.qi,
            row.qc,
            row.phi_rad
        );
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn verify(args: &VerifyArgs, out_root: &Path) -> Result<()> {
    let designs = load_designs(&args.designs)?;
    let references = load_references(&args.references)?;
    let report = fit_gamma(&designs, &references)?;
    let dir = create_run_dir(out_root, "verify")?;
    save_json(dir.join("report.json"), &report)?;
    save_csv(dir.join("comparison.csv"), &report.modes)?;
    save_csv(dir.join("splittings.csv"), &report.splittings)?;
    write_record(
        &dir,
        "verify",
        &[&args.designs, &args.references],
        json!({}),
        &["report.json", "comparison.csv", "splittings.csv"],
    )?;
    println!(
        "gamma* = {:.6}, max |rel err| = {:.3e}, rms = {:.3e}{}",
        report.gamma_star,
        report.max_abs_relative_error,
        report.rms_relative_error,
        if report.multiple_minima {
            " (warning: objective not unimodal)"
        } else {
            ""
        }
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn scale(args: &ScaleArgs, out_root: &Path) -> Result<()> {
    let base = ScalingBase {
        length: args.l,
        width: args.w,
        f0: args.f0,
        z: args.z,
    };
    let prediction = scaling_predict(&base, args.target_l, args.target_w)?;
    let dir = create_run_dir(out_root, "scale")?;
    save_json(
        dir.join("prediction.json"),
        &json!({
            "base": {
                "length_m": base.length,
                "width_m": base.width,
                "f0_hz": base.f0,
                "z_ohm": base.z,
            },
            "target": {
                "length_m": args.target_l,
                "width_m": args.target_w,
                "f0_hz": prediction.f0,
                "z_ohm": prediction.z,
            },
            "f0_ratio": prediction.f0_ratio,
            "z_ratio": prediction.z_ratio,
        }),
    )?;
    write_record(
        &dir,
        "scale",
        &[],
        json!({
            "l_m": args.l,
            "w_m": args.w,
            "f0_hz": args.f0,
            "z_ohm": args.z,
            "target_l_m": args.target_l,
            "target_w_m": args.target_w,
        }),
        &["prediction.json"],
    )?;
    println!(
        "f0: {:.6} GHz -> {:.6} GHz (x{:.4}), Z: {:.1} ohm -> {:.1} ohm (x{:.4})",
        base.f0 / 1e9,
        prediction.f0 / 1e9,
        prediction.f0_ratio,
        base.z,
        prediction.z,
        prediction.z_ratio
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn synth(args: &SynthArgs, out_root: &Path) -> Result<()> {
    let params = ResonanceFit::params(args.f0, args.qi, args.qc, args.phi)?;
    let span = args
        .span
        .unwrap_or(200.0 * params.f0 / params.q_loaded());
    let trace = synth_trace(&params, span, args.points, args.noise, args.seed)?;
    let dir = create_run_dir(out_root, "synth")?;
    save_trace(dir.join("trace.csv"), &trace, args.format.into())?;
    save_json(
        dir.join("params.json"),
        &json!({
            "f0_hz": params.f0,
            "qi": params.qi,
            "qc": params.qc,
            "phi_rad": params.phi,
            "span_hz": span,
            "points": args.points,
            "noise_rms": args.noise,
            "seed": args.seed,
        }),
    )?;
    write_record(
        &dir,
        "synth",
        &[],
        json!({
            "f0_hz": args.f0,
            "qi": args.qi,
            "qc": args.qc,
            "phi_rad": args.phi,
            "span_hz": span,
            "points": args.points,
            "noise_rms": args.noise,
            "seed": args.seed,
            "format": format!("{:?}", args.format),
        }),
        &["trace.csv", "params.json"],
    )?;
    println!(
        "synthesized {} points spanning {:.3} MHz around {:.6} GHz",
        args.points,
        span / 1e6,
        args.f0 / 1e9
    );
    println!("wrote {}", dir.display());
    Ok(())
}
