//! Ellipsoid method on `max −(x−1)² − (y+2)²` subject to `x + y ≤ 0`.

use wpmec::ellipsoid::{maximize, EllipsoidOptions, OracleCut};

fn main() -> wpmec::Result<()> {
    let opts = EllipsoidOptions { tol: 1e-10, cut_tol: 1e-9, trace_every: 25, ..Default::default() };
    let res = maximize(
        |x, cut| {
            let slack = x[0] + x[1];
            if slack > 0.0 {
                cut.copy_from_slice(&[-1.0, -1.0]);
                return Ok(OracleCut::Feasibility { depth: slack, tag: "halfplane" });
            }
            cut[0] = -2.0 * (x[0] - 1.0);
            cut[1] = -2.0 * (x[1] + 2.0);
            Ok(OracleCut::Objective { value: -(x[0] - 1.0).powi(2) - (x[1] + 2.0).powi(2) })
        },
        &[0.0, 0.0],
        10.0,
        &opts,
    )?;
    println!("best point {:?}", res.best_point);
    println!("best value {:.3e}, upper bound {:.3e}", res.best_value, res.upper_bound);
    println!("{} iterations ({} objective, {} feasibility cuts), stop {:?}", res.iterations, res.objective_cuts, res.feasibility_cuts, res.stop);
    res.write_trace_csv(std::io::stdout().lock())
}
