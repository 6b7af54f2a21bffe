//! Joint solver against the exhaustive grid on a single-antenna, single-user instance.

use wpmec::experiments::{gen_instance, ExperimentConfig, SweepAxis};
use wpmec::oracle::brute_force_tiny;
use wpmec::{solve, SolverOptions};

fn main() -> wpmec::Result<()> {
    let mut cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![1.0]);
    cfg.users = 1;
    cfg.antennas = 1;
    cfg.slots = 3;
    let inst = gen_instance(&cfg, 11);
    let joint = solve(&inst, &SolverOptions::default())?;
    let grid = brute_force_tiny(&inst, 64)?;
    println!("joint {:.9e} J", joint.primal_objective);
    println!("grid  {:.9e} J ({} points)", grid.objective, grid.points_evaluated);
    println!("relative difference {:.3e}", (joint.primal_objective - grid.objective).abs() / grid.objective);
    Ok(())
}
