//! Joint barrier solve over bits and covariances, with its energy multipliers.

use wpmec::dual::Restriction;
use wpmec::experiments::{gen_instance, ExperimentConfig, SweepAxis};
use wpmec::interior::solve_interior;

fn main() -> wpmec::Result<()> {
    let mut cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![2.0]);
    cfg.users = 2;
    cfg.antennas = 2;
    cfg.slots = 4;
    let inst = gen_instance(&cfg, 9);
    for restriction in [Restriction::Joint, Restriction::LocalOnly] {
        let sol = solve_interior(&inst, restriction)?;
        println!(
            "{restriction:?}: {:.6e} J, {} Newton steps, converged {}",
            sol.objective, sol.newton_steps, sol.converged
        );
        for (k, row) in sol.lambda.iter().enumerate() {
            let row: Vec<String> = row.iter().map(|v| format!("{v:.3e}")).collect();
            println!("  user {k} energy multipliers [{}]", row.join(", "));
        }
    }
    Ok(())
}
