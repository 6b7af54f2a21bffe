//! Dual function, subproblem minimizers and supergradient at one point.

use wpmec::dual::{check_dual_feasible, evaluate, Feasibility};
use wpmec::experiments::{gen_instance, ExperimentConfig, SweepAxis};
use wpmec::{DualPoint, Result};

fn main() -> Result<()> {
    let mut cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![2.0]);
    cfg.users = 2;
    cfg.antennas = 2;
    cfg.slots = 3;
    let inst = gen_instance(&cfg, 1);
    let mut dual = DualPoint::zeros(2, 3);
    for k in 0..2 {
        dual.lambda[k] = vec![0.0, 0.0, 1e3];
        dual.mu[k] = vec![0.0, 0.0, -1e-6];
    }
    dual.nu[2] = -1e-7;
    match check_dual_feasible(&inst, &dual)? {
        Feasibility::Feasible => println!("dual point is feasible"),
        Feasibility::Cut(cut) => {
            println!("infeasible: {:?} cut of depth {:.3e}", cut.kind, cut.depth);
            return Ok(());
        }
    }
    let ev = evaluate(&inst, &dual)?;
    println!("G = {:.6e}", ev.value);
    println!("local   {:?}", ev.minimizers.local);
    println!("offload {:?}", ev.minimizers.offload);
    println!("server  {:?}", ev.minimizers.server);
    let s: Vec<String> = ev.subgradient.iter().map(|v| format!("{v:.3e}")).collect();
    println!("supergradient [{}]", s.join(", "));
    Ok(())
}
