//! Solve one random instance with the joint design and check its KKT residuals.

use wpmec::experiments::{gen_instance, ExperimentConfig, SweepAxis};
use wpmec::oracle::verify_kkt;
use wpmec::{solve, SolverOptions};

fn main() -> wpmec::Result<()> {
    let mut cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![3.0]);
    cfg.users = 3;
    cfg.slots = 6;
    let inst = gen_instance(&cfg, 42);
    let report = solve(&inst, &SolverOptions::default())?;
    println!("energy at the AP   {:.6e} J", report.primal_objective);
    println!("dual bound         {:.6e} J", report.dual_value.unwrap_or(f64::NAN));
    println!("relative gap       {:.3e}", report.duality_gap_rel.unwrap_or(f64::NAN));
    println!("wall time          {:.2} s", report.wall_time);
    for (k, (l, r)) in report.allocation.local.iter().zip(&report.allocation.offload).enumerate() {
        let fmt = |v: &[f64]| v.iter().map(|b| format!("{b:9.3e}")).collect::<Vec<_>>().join(" ");
        println!("user {k} local   {}", fmt(l));
        println!("user {k} offload {}", fmt(r));
    }
    let kkt = verify_kkt(&inst, &report, 1e-4)?;
    println!("KKT passed {} (max residual {:.2e})", kkt.passed, kkt.max_residual());
    Ok(())
}
