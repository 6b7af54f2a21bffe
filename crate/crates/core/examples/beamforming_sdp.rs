//! Minimum transmit energy that meets cumulative harvesting demands.

use wpmec::experiments::{gen_instance, ExperimentConfig, SweepAxis};
use wpmec::linalg::{eigh, trace_re};
use wpmec::sdp::{sdp_kkt_residuals, solve_wpt_sdp};

fn main() -> wpmec::Result<()> {
    let mut cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![3.0]);
    cfg.users = 3;
    cfg.slots = 4;
    let inst = gen_instance(&cfg, 3);
    let demands: Vec<Vec<f64>> = (0..3).map(|k| (1..=4).map(|i| 1e-3 * (k + i) as f64).collect()).collect();
    let sol = solve_wpt_sdp(&inst, &demands)?;
    println!("transmit energy {:.6e} J ({:?}, {} Newton steps)", sol.objective, sol.status, sol.newton_steps);
    for (i, q) in sol.q.iter().enumerate() {
        let (eig, _) = eigh(q)?;
        let eig: Vec<String> = eig.iter().map(|v| format!("{v:.3e}")).collect();
        println!("slot {i}: tr Q = {:.4e} W, eigenvalues [{}]", trace_re(q), eig.join(", "));
    }
    let kkt = sdp_kkt_residuals(&inst, &demands, &sol.q, &sol.y, &sol.z)?;
    println!("max KKT residual {:.2e}", kkt.max_residual());
    Ok(())
}
