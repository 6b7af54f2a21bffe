//! Energy of the joint design and the four benchmarks on one instance.

use wpmec::baselines::solve_scheme;
use wpmec::experiments::{gen_instance, ExperimentConfig, SweepAxis};
use wpmec::{Scheme, SolverOptions};

fn main() -> wpmec::Result<()> {
    let mut cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![4.0]);
    cfg.users = 4;
    let inst = gen_instance(&cfg, 7);
    // no arrivals in the last slot, so full offloading has a solution
    let inst = inst.map_arrivals(|_, i, a| if i + 1 == cfg.slots { 0.0 } else { a });
    let opts = SolverOptions::default();
    for scheme in Scheme::ALL {
        match solve_scheme(&inst, scheme, &opts) {
            Ok(rep) => println!("{:<13} {:.6e} J per slot", scheme.name(), rep.objective_per_slot()),
            Err(e) => println!("{:<13} {e}", scheme.name()),
        }
    }
    Ok(())
}
