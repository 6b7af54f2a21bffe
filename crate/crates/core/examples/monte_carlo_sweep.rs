//! Small Monte-Carlo sweep over the user count; writes CSV and SVG to the
//! directory given as the first argument (default `sweep-out`).

use std::path::PathBuf;

use wpmec::cli::summary_table;
use wpmec::experiments::{emit_outputs, run_sweep, ExperimentConfig, SweepAxis};
use wpmec::Scheme;

fn main() -> wpmec::Result<()> {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "sweep-out".into()).into();
    let mut cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![2.0, 4.0]);
    cfg.slots = 5;
    cfg.trials = 4;
    cfg.seed = 2024;
    cfg.schemes = vec![Scheme::Joint, Scheme::LocalOnly, Scheme::Myopic, Scheme::Separate];
    let result = run_sweep(&cfg)?;
    print!("{}", summary_table(&result));
    let (csv, svg) = emit_outputs(&result, &out, true)?;
    println!("wrote {} and {}", csv.display(), svg.display());
    Ok(())
}
