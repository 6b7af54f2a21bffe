//! Command-line front end: `solve`, `sweep` and `validate`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::solve_scheme;
use crate::error::{Error, Result};
use crate::experiments::{emit_outputs, run_sweep_with, ExperimentConfig, SweepAxis, SweepResult};
use crate::model::{validate_instance, Instance};
use crate::oracle::verify_kkt;
use crate::solver::{Scheme, SolverOptions};

/// Exit status of a finished command.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;

/// Tolerance of `--check-kkt`.
pub const KKT_TOL: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "wpmec", version, about = "Energy-minimal resource allocation for wireless powered mobile edge computing")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Random seed for sweeps.
    #[arg(long, global = true, env = "WPMEC_SEED")]
    pub seed: Option<u64>,
    /// Relative tolerance of the dual search.
    #[arg(long, global = true, env = "WPMEC_TOL")]
    pub tol: Option<f64>,
    /// Iteration cap of the dual search.
    #[arg(long = "max-iter", global = true, env = "WPMEC_MAX_ITER")]
    pub max_iter: Option<usize>,
    /// Monte-Carlo trials per sweep point.
    #[arg(long, global = true, env = "WPMEC_TRIALS")]
    pub trials: Option<usize>,
    /// Output file (solve) or directory (sweep).
    #[arg(long, global = true, env = "WPMEC_OUT")]
    pub out: Option<PathBuf>,
    /// Log filter: error, warn, info, debug or trace.
    #[arg(long = "log-level", global = true, env = "WPMEC_LOG_LEVEL", default_value = "warn")]
    pub log_level: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one instance with a scheme and print the report as JSON.
    Solve {
        /// Instance JSON file.
        instance: PathBuf,
        #[arg(long, env = "WPMEC_SCHEME", default_value = "joint")]
        scheme: String,
        /// Attach KKT residuals of the returned primal-dual pair.
        #[arg(long = "check-kkt")]
        check_kkt: bool,
    },
    /// Run a Monte-Carlo sweep and write `sweep.csv` and `sweep.svg`.
    Sweep {
        /// Experiment config (TOML or JSON).
        config: PathBuf,
        /// Override the swept parameter: K or A_max.
        #[arg(long, env = "WPMEC_AXIS")]
        axis: Option<String>,
        /// Override the sweep values, comma separated.
        #[arg(long, env = "WPMEC_VALUES", value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Check an instance file and list every violation.
    Validate {
        /// Instance JSON file.
        instance: PathBuf,
    },
}

impl GlobalOpts {
    pub fn solver_options(&self) -> SolverOptions {
        let mut opts = SolverOptions::default();
        if let Some(tol) = self.tol {
            opts.ellipsoid.tol = tol;
        }
        if let Some(max_iter) = self.max_iter {
            opts.ellipsoid.max_iter = max_iter;
        }
        opts
    }
}

fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    Instance::from_json_str(&text).map_err(|e| match e {
        Error::InvalidInstance(msg) => Error::InvalidInstance(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn write_output(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Solve one instance and emit its report.
pub fn cmd_solve(instance: &Path, scheme: &str, check_kkt: bool, global: &GlobalOpts) -> Result<()> {
    let scheme: Scheme = scheme.parse()?;
    let inst = read_instance(instance)?;
    let opts = global.solver_options();
    let mut report = solve_scheme(&inst, scheme, &opts)?;
    if check_kkt {
        report.kkt = Some(verify_kkt(&inst, &report, KKT_TOL)?);
    }
    write_output(&report.to_json_string()?, global.out.as_deref())
}

/// Plain-text table of a sweep result.
pub fn summary_table(result: &SweepResult) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:>8} {:>12} {:>14} {:>12} {:>5} {:>5}", "axis", "scheme", "mean J/slot", "stderr", "ok", "fail");
    for r in &result.rows {
        let _ = writeln!(
            s,
            "{:>8} {:>12} {:>14.6e} {:>12.3e} {:>5} {:>5}",
            r.axis_value,
            r.scheme.name(),
            r.mean_j_per_slot,
            r.stderr,
            r.n_ok,
            r.n_infeasible
        );
    }
    s
}

/// Load a sweep config with the command-line overrides applied.
pub fn load_sweep_config(config: &Path, axis: Option<&str>, values: Option<&[f64]>, global: &GlobalOpts) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(axis) = axis {
        cfg.sweep.axis = SweepAxis::parse(axis)?;
    }
    if let Some(values) = values {
        cfg.sweep.values = values.to_vec();
    }
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = global.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Run a sweep, write its CSV and SVG into `--out` (default `.`) and print
/// a summary.
pub fn cmd_sweep(config: &Path, axis: Option<&str>, values: Option<&[f64]>, global: &GlobalOpts) -> Result<SweepResult> {
    let cfg = load_sweep_config(config, axis, values, global)?;
    let result = run_sweep_with(&cfg, &global.solver_options())?;
    let out_dir = global.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let (csv, svg) = emit_outputs(&result, &out_dir, cfg.log_y)?;
    print!("{}", summary_table(&result));
    for f in &result.failures {
        log::info!("{} = {}, trial {}, {}: {}", cfg.sweep.axis.name(), f.axis_value, f.trial, f.scheme, f.reason);
    }
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(result)
}

/// Validate an instance file. Returns whether it is clean.
pub fn cmd_validate(instance: &Path, global: &GlobalOpts) -> Result<bool> {
    let text = fs::read_to_string(instance)?;
    let inst = match Instance::from_json_str(&text) {
        Ok(inst) => inst,
        Err(e) => {
            eprintln!("{}: {e}", instance.display());
            return Ok(false);
        }
    };
    let report = validate_instance(&inst);
    for v in &report.violations {
        eprintln!("{:?}: {v}", v.kind);
    }
    write_output(&serde_json::to_string_pretty(&report)?, global.out.as_deref())?;
    Ok(report.is_clean())
}

/// Exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_ERROR,
    }
}

/// Parse `args`, run the command and return the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.global.log_level).format_timestamp(None).try_init();
    let outcome = match &cli.command {
        Command::Solve { instance, scheme, check_kkt } => cmd_solve(instance, scheme, *check_kkt, &cli.global).map(|_| EXIT_OK),
        Command::Sweep { config, axis, values } => cmd_sweep(config, axis.as_deref(), values.as_deref(), &cli.global).map(|_| EXIT_OK),
        Command::Validate { instance } => cmd_validate(instance, &cli.global).map(|clean| if clean { EXIT_OK } else { EXIT_ERROR }),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
