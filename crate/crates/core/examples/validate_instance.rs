//! Validation of a malformed instance and of a JSON file with a missing key.

use wpmec::experiments::{gen_instance, ExperimentConfig, SweepAxis};
use wpmec::model::validate_instance;
use wpmec::Instance;

fn main() -> wpmec::Result<()> {
    let cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![2.0]);
    let mut inst = gen_instance(&cfg.at(2.0), 5);
    inst.tasks.arrivals[1][3] = -1.0;
    inst.channels.g[0][2] = 0.0;
    inst.params.eta[1] = 1.5;
    for v in &validate_instance(&inst).violations {
        println!("{:?}: {v}", v.kind);
    }
    let text = inst.to_json_string()?.replacen("\"sigma2\"", "\"sigma_2\"", 1);
    if let Err(e) = Instance::from_json_str(&text) {
        println!("parse error: {e}");
    }
    Ok(())
}
