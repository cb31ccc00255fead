//! Command-line front end for multi-layer GAMP experiments.
//!
//! Three subcommands read the same JSON experiment file (see [`config`]):
//!
//! - `run` writes one row per trial and iteration with the normalized error,
//!   the symbol error rate and the state-evolution prediction;
//! - `se` writes the state-evolution recursion alone, one row per iteration;
//! - `compare` averages the trials and reports the gap to the prediction,
//!   failing when it exceeds `--threshold-db`.
//!
//! Every command also writes the resolved configuration next to its table,
//! as `<out>.config.json`. Exit codes: 0 success, 1 invalid configuration
//! (nothing is written), 2 divergence or state-evolution breakdown (the
//! partial table is written), 3 `compare` gap above the threshold.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mlgamp::state_evolution::SE_STOP_TOL;
use mlgamp::{run_point_trials, se_backward_step, se_forward_step, se_init, summarize, ModelSpec};
use serde::Serialize;

pub mod config;
pub mod output;

use config::{Overrides, Resolved, RunConfigFile};
use output::{Table, COMPARE_HEADER, RUN_HEADER};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Diverged,
    GapExceeded,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Diverged => 2,
            Status::GapExceeded => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mlgamp", version, about = "Multi-layer GAMP experiments and state evolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte-Carlo trials with the state-evolution prediction alongside.
    Run(CommonArgs),
    /// State evolution only.
    Se(CommonArgs),
    /// Trial averages against state evolution.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Largest tolerated |mean NMSE - SE| in dB over all iterations.
        #[arg(long, default_value_t = 0.5)]
        threshold_db: f64,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Damping factor in (0, 1] applied to every layer.
    #[arg(long)]
    pub damping: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub jobs: Option<usize>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            iters: self.iters,
            damping: self.damping,
            out: self.out.clone(),
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Messages go to standard output and error.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli.command) {
        Ok(status) => status.code(),
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(command: &Command) -> Result<Status, CliError> {
    let (common, name) = match command {
        Command::Run(c) => (c, "run"),
        Command::Se(c) => (c, "se"),
        Command::Compare { common, .. } => (common, "compare"),
    };
    if common.jobs == Some(0) {
        return Err(CliError::Config("--jobs must be >= 1".into()));
    }
    let resolved = load(&common.config, &common.overrides(), &format!("mlgamp_{name}.csv"))?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = common.jobs {
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| CliError::Io(e.to_string()))?;
    pool.install(|| match command {
        Command::Run(_) => cmd_run(&resolved),
        Command::Se(_) => cmd_se(&resolved),
        Command::Compare { threshold_db, .. } => cmd_compare(&resolved, *threshold_db),
    })
}

/// Reads and resolves an experiment file. Seeds given in the environment
/// are used when neither the flags nor the file set one.
pub fn load(path: &Path, overrides: &Overrides, default_out: &str) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let file = config::parse(&text)?;
    let env_seed = std::env::var(config::SEED_ENV).ok();
    config::resolve(file, overrides, env_seed.as_deref(), default_out)
}

#[derive(Serialize)]
struct Echo<'a> {
    command: &'a str,
    status: Status,
    config: &'a RunConfigFile,
    /// Every sweep point with noise variances and quantizer steps filled in.
    points: Vec<EchoPoint<'a>>,
}

#[derive(Serialize)]
struct EchoPoint<'a> {
    label: &'a str,
    spec: &'a ModelSpec,
}

pub fn echo_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(OsString::from).unwrap_or_default();
    name.push(".config.json");
    out.with_file_name(name)
}

fn write_echo(r: &Resolved, command: &str, status: Status) -> Result<(), CliError> {
    let echo = Echo {
        command,
        status,
        config: &r.file,
        points: r.points.iter().map(|(label, spec)| EchoPoint { label, spec }).collect(),
    };
    let text = serde_json::to_string_pretty(&echo).map_err(|e| CliError::Io(e.to_string()))?;
    let path = echo_path(&r.out);
    std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn finish(r: &Resolved, command: &str, table: Table, status: Status) -> Result<Status, CliError> {
    table.write(&r.out)?;
    write_echo(r, command, status)?;
    if status == Status::Diverged {
        eprintln!("warning: {} is partial", r.out.display());
    }
    println!("wrote {} and {}", r.out.display(), echo_path(&r.out).display());
    Ok(status)
}

fn point_name(label: &str) -> &str {
    if label.is_empty() {
        "model"
    } else {
        label
    }
}

/// First iteration after which the mean error stays within 0.05 dB of its
/// final value.
fn settling_iteration(mean_db: &[f64]) -> usize {
    let last = *mean_db.last().unwrap_or(&f64::NAN);
    let outside = mean_db.iter().rposition(|m| !((m - last).abs() <= 0.05));
    outside.map_or(1, |k| k + 2).min(mean_db.len())
}

pub fn cmd_run(r: &Resolved) -> Result<Status, CliError> {
    let with_point = r.points.len() > 1;
    let mut table = Table::new(&RUN_HEADER, with_point)?;
    let mut status = Status::Ok;
    for (label, spec) in &r.points {
        let (_, outcomes) = match run_point_trials(spec, &r.experiment) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("{}: {e}", point_name(label));
                status = Status::Diverged;
                continue;
            }
        };
        let mut records = Vec::new();
        for (trial, o) in outcomes.into_iter().enumerate() {
            if let Some(e) = &o.error {
                eprintln!("{}: trial {trial}: {e}", point_name(label));
                status = Status::Diverged;
            }
            records.extend(o.records);
        }
        for rec in &records {
            table.run_row(label, rec)?;
        }
        let summary = summarize(&records);
        if let Some(last) = summary.last() {
            let means: Vec<f64> = summary.iter().map(|s| s.mean_nmse_db).collect();
            println!(
                "{}: final mean NMSE {:.2} dB (SE {:.2} dB) after {} iterations, settled at iteration {}",
                point_name(label),
                last.mean_nmse_db,
                last.se_mse_db,
                last.iteration,
                settling_iteration(&means)
            );
        }
    }
    finish(r, "run", table, status)
}

pub fn cmd_se(r: &Resolved) -> Result<Status, CliError> {
    let n_layers = r.points[0].1.num_layers();
    let with_point = r.points.len() > 1;
    let mut table = Table::new(&output::se_header(n_layers), with_point)?;
    let mut status = Status::Ok;
    let quad = &r.experiment.quadrature;
    for (label, spec) in &r.points {
        let mut st = se_init(spec).map_err(|e| CliError::Config(e.to_string()))?;
        let mut converged = false;
        for _ in 0..r.experiment.iters {
            let before = st.mse();
            let step = se_backward_step(&mut st, spec, quad).and_then(|()| se_forward_step(&mut st, spec, quad));
            if let Err(e) = step {
                // the row holds the state at the point of failure
                table.se_row(label, st.iteration + 1, st.mse(), &st.layers)?;
                eprintln!("{}: {e}", point_name(label));
                status = Status::Diverged;
                break;
            }
            table.se_row(label, st.iteration, st.mse(), &st.layers)?;
            let scale = before.max(SE_STOP_TOL * st.layers[0].t_x);
            if (st.mse() - before).abs() <= SE_STOP_TOL * scale {
                converged = true;
                break;
            }
        }
        if status == Status::Ok {
            println!(
                "{}: MSE {:.2} dB after {} iterations{}",
                point_name(label),
                mlgamp::to_db(st.mse()),
                st.iteration,
                if converged { " (fixed point)" } else { "" }
            );
        }
    }
    finish(r, "se", table, status)
}

// A NaN gap poisons the maximum so that it fails the threshold.
fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

pub fn cmd_compare(r: &Resolved, threshold_db: f64) -> Result<Status, CliError> {
    let with_point = r.points.len() > 1;
    let mut table = Table::new(&COMPARE_HEADER, with_point)?;
    let mut status = Status::Ok;
    let mut worst = 0.0f64;
    for (label, spec) in &r.points {
        let outcomes = run_point_trials(spec, &r.experiment).map(|(_, o)| o);
        let outcomes = match outcomes {
            Ok(o) => o,
            Err(e) => {
                eprintln!("{}: {e}", point_name(label));
                status = Status::Diverged;
                continue;
            }
        };
        let mut records = Vec::new();
        for (trial, o) in outcomes.into_iter().enumerate() {
            if let Some(e) = &o.error {
                eprintln!("{}: trial {trial}: {e}", point_name(label));
                status = Status::Diverged;
            }
            records.extend(o.records);
        }
        let summary = summarize(&records);
        for s in &summary {
            table.compare_row(label, s)?;
        }
        let point_worst = summary.iter().map(|s| s.gap_db.abs()).fold(0.0, nan_max);
        println!("{}: largest gap {:.3} dB", point_name(label), point_worst);
        worst = nan_max(worst, point_worst);
    }
    if status == Status::Ok && !(worst <= threshold_db) {
        println!("largest gap {worst:.3} dB exceeds the {threshold_db} dB threshold");
        status = Status::GapExceeded;
    }
    finish(r, "compare", table, status)
}
