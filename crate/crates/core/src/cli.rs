//! Command-line front end: one subcommand per experiment, each writing CSV
//! artifacts and a `manifest.json` into its output directory.

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::diagnostics::{
    blowup_scan, convergence_batch_experiment, convergence_dt_experiment, lipschitz_scan, validation_experiment,
    ConvergenceOptions,
};
use crate::error::{Error, Result};
use crate::model::SimulationConfig;
use crate::reference_fdm::{fdm_cdf, solve_radial};
use crate::simulation::{resume, run, RunSummary, SnapshotPolicy};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "SIPF_OUT_ROOT";

/// Mean relative CDF error reported for the radial validation case.
const VALIDATION_REFERENCE: f64 = 0.05512;

#[derive(Debug, Parser)]
#[command(
    name = "sipf",
    version,
    about = "Particle-field solver for the 3D parabolic Keller-Segel system"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration; defaults to the radial validation case.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $SIPF_OUT_ROOT/<command> or ./sipf-out/<command>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the configured number of trials.
    #[arg(long)]
    pub trials: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation with snapshots and a checkpoint.
    Run {
        #[command(flatten)]
        common: Common,
        /// Write particles, field and diagnostics every k steps.
        #[arg(long)]
        snapshot_every: Option<u64>,
    },
    /// Continue a checkpointed run directory (given by --out).
    Resume {
        #[command(flatten)]
        common: Common,
        /// New final time; defaults to the stored one.
        #[arg(long)]
        t_final: Option<f64>,
        #[arg(long)]
        snapshot_every: Option<u64>,
    },
    /// Solve the radial finite-volume reference problem.
    ValidateFdm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fdm: FdmArgs,
    },
    /// Compare particle radial CDFs with the finite-volume reference.
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        fdm: FdmArgs,
    },
    /// Coefficient error against a full-interaction reference versus dt.
    ConvergenceDt {
        #[command(flatten)]
        common: Common,
        /// Step sizes (default: T/2^8 .. T/2^4).
        #[arg(long, value_delimiter = ',')]
        dt: Vec<f64>,
        /// Reference step (default: T/2^14).
        #[arg(long)]
        reference_dt: Option<f64>,
    },
    /// Coefficient error against a full-interaction reference versus R.
    ConvergenceBatch {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "100,200,400,800,1600")]
        batch: Vec<usize>,
        /// Reference step (default: the configured dt).
        #[arg(long)]
        reference_dt: Option<f64>,
    },
    /// Max concentration versus time across H for several masses.
    BlowupScan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "40,100")]
        masses: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "8,12,16")]
        modes: Vec<usize>,
        /// Final time (default: the configured one).
        #[arg(long)]
        t_final: Option<f64>,
        /// Number of equally spaced probe times.
        #[arg(long, default_value_t = 20)]
        probes: usize,
    },
    /// Lipschitz constant of the concentration gradient versus H.
    Lipschitz {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "6,12,18,24")]
        modes: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct FdmArgs {
    /// Radial grid nodes.
    #[arg(long, default_value_t = 2000)]
    pub nr: usize,
    /// Largest radial time step.
    #[arg(long, default_value_t = 1e-5)]
    pub dt_fdm: f64,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Run { .. } => "run",
            Command::Resume { .. } => "resume",
            Command::ValidateFdm { .. } => "validate-fdm",
            Command::Validate { .. } => "validate",
            Command::ConvergenceDt { .. } => "convergence-dt",
            Command::ConvergenceBatch { .. } => "convergence-batch",
            Command::BlowupScan { .. } => "blowup-scan",
            Command::Lipschitz { .. } => "lipschitz",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Run { common, .. }
            | Command::Resume { common, .. }
            | Command::ValidateFdm { common, .. }
            | Command::Validate { common, .. }
            | Command::ConvergenceDt { common, .. }
            | Command::ConvergenceBatch { common, .. }
            | Command::BlowupScan { common, .. }
            | Command::Lipschitz { common, .. } => common,
        }
    }
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Json(_) => 2,
        Error::NumericalAbort { .. } => 3,
        Error::Io(_) | Error::Checkpoint(_) => 4,
        _ => 1,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit status. Diagnostics go to stderr.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a parsed command inside a worker pool of the requested size.
pub fn execute(cmd: &Command) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cmd.common().threads {
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Experiment(format!("thread pool: {e}")))?;
    pool.install(|| execute_in_pool(cmd))
}

fn load_config(common: &Common) -> Result<SimulationConfig> {
    let mut cfg = match &common.config {
        Some(p) => SimulationConfig::from_json_file(p).map_err(|e| match e {
            Error::Io(io) => Error::Config(crate::error::ConfigError::Unreadable(format!("{}: {io}", p.display()))),
            other => other,
        })?,
        None => SimulationConfig::paper_validation(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, name: &str) -> Result<PathBuf> {
    let dir = match &common.out {
        Some(p) => p.clone(),
        None => std::env::var_os(OUT_ROOT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("sipf-out"))
            .join(name),
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_manifest(dir: &Path, command: &str, cfg: &SimulationConfig, start: Instant, results: Value) -> Result<()> {
    let m = json!({
        "command": command,
        "config": cfg,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "wall_time_s": start.elapsed().as_secs_f64(),
        "results": results,
    });
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(())
}

fn policy(every: Option<u64>) -> SnapshotPolicy {
    SnapshotPolicy {
        every_k_steps: every,
        ..SnapshotPolicy::default()
    }
}

fn summary_json(s: &RunSummary) -> Value {
    json!({
        "final_step": s.final_step,
        "final_time": s.final_time,
        "max_c": s.max_c,
        "l2_coeff_norm": s.l2_coeff_norm,
        "stability_violations": s.stability_violations,
    })
}

fn execute_in_pool(cmd: &Command) -> Result<()> {
    let start = Instant::now();
    let name = cmd.name();
    match cmd {
        Command::Run { common, snapshot_every } => {
            let cfg = load_config(common)?.validate()?;
            let dir = out_dir(common, name)?;
            let s = run(&cfg, &policy(*snapshot_every), &dir)?;
            println!("step {} t = {} max c = {:.6}", s.final_step, s.final_time, s.max_c);
            write_manifest(&dir, name, &cfg, start, summary_json(&s))
        }
        Command::Resume {
            common,
            t_final,
            snapshot_every,
        } => {
            let dir = out_dir(common, "run")?;
            let mut cfg = SimulationConfig::from_json_file(&dir.join("config.json"))
                .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", dir.join("config.json").display())))?;
            if let Some(t) = t_final {
                cfg.t_final = *t;
            }
            let s = resume(&dir, &cfg, &policy(*snapshot_every))?;
            println!("step {} t = {} max c = {:.6}", s.final_step, s.final_time, s.max_c);
            write_manifest(&dir, name, &cfg, start, summary_json(&s))
        }
        Command::ValidateFdm { common, fdm } => {
            let cfg = load_config(common)?.validate()?;
            let dir = out_dir(common, name)?;
            let sol = solve_radial(&cfg, fdm.nr, fdm.dt_fdm)?;
            let f = fdm_cdf(&sol)?;
            let mut w = create(&dir.join("fdm.csv"))?;
            writeln!(w, "r,rho,c,F")?;
            for i in 0..sol.r.len() {
                writeln!(w, "{},{},{},{}", sol.r[i], sol.rho[i], sol.c[i], f[i])?;
            }
            w.flush()?;
            let max_c = sol.c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            println!("radial solution at t = {}: max c = {max_c:.6}", sol.time);
            write_manifest(
                &dir,
                name,
                &cfg,
                start,
                json!({"n_r": fdm.nr, "dt_fdm": fdm.dt_fdm, "time": sol.time, "max_c": max_c}),
            )
        }
        Command::Validate { common, fdm } => {
            let cfg = load_config(common)?.validate()?;
            let dir = out_dir(common, name)?;
            let rep = validation_experiment(&cfg, fdm.nr, fdm.dt_fdm, cfg.trials)?;
            rep.write_csv(create(&dir.join("cdf.csv"))?)?;
            let mut w = create(&dir.join("errors.csv"))?;
            writeln!(w, "trial,relative_cdf_error")?;
            for (t, e) in rep.errors.iter().enumerate() {
                writeln!(w, "{t},{e}")?;
            }
            w.flush()?;
            println!(
                "mean relative CDF error: {:.5} (reference {VALIDATION_REFERENCE})",
                rep.mean_error
            );
            write_manifest(
                &dir,
                name,
                &cfg,
                start,
                json!({
                    "mean_relative_cdf_error": rep.mean_error,
                    "errors": rep.errors,
                    "reference_mean_relative_cdf_error": VALIDATION_REFERENCE,
                    "n_r": fdm.nr,
                    "dt_fdm": fdm.dt_fdm,
                    "stability_violations": rep.stability_violations,
                }),
            )
        }
        Command::ConvergenceDt {
            common,
            dt,
            reference_dt,
        } => {
            let cfg = load_config(common)?.validate()?;
            let dir = out_dir(common, name)?;
            let t = cfg.t_final;
            let dts = if dt.is_empty() {
                (4..=8).map(|k| t / f64::powi(2.0, k)).collect()
            } else {
                dt.clone()
            };
            let opts = ConvergenceOptions {
                reference_dt: reference_dt.unwrap_or(t / f64::powi(2.0, 14)),
                first_trial: 0,
            };
            let rec = convergence_dt_experiment(&cfg, &dts, cfg.trials, &opts)?;
            rec.write_csv(create(&dir.join("convergence_dt.csv"))?)?;
            println!("fitted slope: {}", fmt_slope(rec.slope()));
            write_manifest(&dir, name, &cfg, start, record_json(&rec, opts.reference_dt))
        }
        Command::ConvergenceBatch {
            common,
            batch,
            reference_dt,
        } => {
            let cfg = load_config(common)?.validate()?;
            let dir = out_dir(common, name)?;
            let opts = ConvergenceOptions {
                reference_dt: reference_dt.unwrap_or(cfg.dt),
                first_trial: 0,
            };
            let rec = convergence_batch_experiment(&cfg, batch, cfg.trials, &opts)?;
            rec.write_csv(create(&dir.join("convergence_batch.csv"))?)?;
            println!("fitted slope: {}", fmt_slope(rec.slope()));
            write_manifest(&dir, name, &cfg, start, record_json(&rec, opts.reference_dt))
        }
        Command::BlowupScan {
            common,
            masses,
            modes,
            t_final,
            probes,
        } => {
            let cfg = load_config(common)?.validate()?;
            let dir = out_dir(common, name)?;
            let t = t_final.unwrap_or(cfg.t_final);
            let times: Vec<f64> = (1..=*probes).map(|k| t * k as f64 / *probes as f64).collect();
            let scan = blowup_scan(&cfg, masses, modes, t, &times)?;
            scan.write_csv(create(&dir.join("blowup_scan.csv"))?)?;
            let mut w = create(&dir.join("classification.csv"))?;
            writeln!(w, "total_mass,class,ratio")?;
            for (m, class, ratio) in &scan.classes {
                writeln!(w, "{m},{},{ratio}", class_name(*class))?;
                println!("M0 = {m}: {} (ratio {ratio:.3})", class_name(*class));
            }
            w.flush()?;
            let violations: u64 = scan.curves.iter().map(|c| c.stability_violations).sum();
            let classes: Vec<Value> = scan
                .classes
                .iter()
                .map(|(m, c, r)| json!({"total_mass": m, "class": class_name(*c), "ratio": finite_or_null(*r)}))
                .collect();
            write_manifest(
                &dir,
                name,
                &cfg,
                start,
                json!({"t_final": t, "modes": modes, "classes": classes, "stability_violations": violations}),
            )
        }
        Command::Lipschitz { common, modes, pairs } => {
            let cfg = load_config(common)?.validate()?;
            let dir = out_dir(common, name)?;
            let rows = lipschitz_scan(&cfg, modes, *pairs)?;
            let mut w = create(&dir.join("lipschitz.csv"))?;
            writeln!(w, "modes_per_dim,lipschitz,max_c")?;
            for r in &rows {
                writeln!(w, "{},{},{}", r.modes_per_dim, r.lipschitz, r.max_c)?;
                println!("H = {}: L = {:.6}", r.modes_per_dim, r.lipschitz);
            }
            w.flush()?;
            let violations: u64 = rows.iter().map(|r| r.stability_violations).sum();
            write_manifest(
                &dir,
                name,
                &cfg,
                start,
                json!({"rows": rows, "pairs": pairs, "stability_violations": violations}),
            )
        }
    }
}

fn class_name(c: crate::diagnostics::BlowupClass) -> &'static str {
    use crate::diagnostics::BlowupClass::*;
    match c {
        Stable => "stable",
        BlowupCandidate => "blowup_candidate",
        Indeterminate => "indeterminate",
    }
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "n/a".to_string(), |v| format!("{v:.4}"))
}

fn record_json(rec: &crate::diagnostics::ExperimentRecord, reference_dt: f64) -> Value {
    json!({
        "axis_name": rec.axis_name,
        "axis": rec.axis,
        "mean_errors": rec.errors,
        "slope": rec.slope(),
        "reference_dt": reference_dt,
        "stability_violations": rec.stability_violations,
    })
}
