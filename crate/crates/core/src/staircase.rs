//! Exact minimization of a separable convex cost under cumulative caps,
//!
//! ```text
//! minimize Σ_i f_i(x_i)  subject to  Σ_{j≤i} x_j ≤ C_i,  Σ_j x_j = C_{N−1},
//! ```
//!
//! given each slot's response `x_i(p) = argmin f_i(x) − p·x`, nondecreasing
//! in the price `p`. Optimal prices are nondecreasing and constant between
//! slots where a cap binds; each segment takes the smallest price that
//! exhausts some cap ahead of it.

use crate::error::{Error, Result};

/// Prices and quantities solving the capped allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct Staircase {
    pub prices: Vec<f64>,
    pub amounts: Vec<f64>,
}

const BISECTION_STEPS: usize = 200;

/// `sup {p : Σ_{i∈seg} x_i(p) ≤ demand}` by bracketing and bisection.
fn segment_price(response: &impl Fn(usize, f64) -> f64, slots: std::ops::RangeInclusive<usize>, demand: f64, p_lo: f64, p_scale: f64) -> f64 {
    let total = |p: f64| slots.clone().map(|i| response(i, p)).sum::<f64>();
    let mut lo = p_lo;
    let mut hi = p_lo.abs().max(p_scale).max(f64::MIN_POSITIVE);
    let mut grow = 0;
    while total(hi) <= demand {
        lo = hi;
        hi *= 4.0;
        grow += 1;
        if grow > 2000 || !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if total(mid) <= demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Solve the capped allocation. `caps[i]` are the cumulative caps `C_i`
/// (nondecreasing), `response(i, p)` the per-slot response, `p_lo` a price
/// at which every response is zero and `p_scale` a positive price magnitude
/// used to start the bracket.
pub fn solve(caps: &[f64], response: impl Fn(usize, f64) -> f64, p_lo: f64, p_scale: f64) -> Result<Staircase> {
    let n = caps.len();
    let mut prices = vec![0.0; n];
    let mut amounts = vec![0.0; n];
    let mut start = 0;
    let mut done = 0.0;
    while start < n {
        let mut best_j = n;
        let mut best_p = f64::INFINITY;
        for j in start..n {
            let demand = (caps[j] - done).max(0.0);
            let p = segment_price(&response, start..=j, demand, p_lo, p_scale);
            let tie = best_p.is_finite() && (p - best_p).abs() <= 1e-12 * best_p.abs().max(f64::MIN_POSITIVE);
            if p < best_p || tie {
                best_p = best_p.min(p);
                best_j = j;
            }
        }
        if best_j == n {
            let demand = caps[n - 1] - done;
            if demand > 0.0 {
                return Err(Error::Infeasible(format!("{demand:.3e} units cannot be placed in slots {start}..{n}")));
            }
            prices[start..].iter_mut().for_each(|p| *p = p_lo);
            break;
        }
        let demand = (caps[best_j] - done).max(0.0);
        let mut placed = 0.0;
        for i in start..=best_j {
            prices[i] = best_p;
            amounts[i] = response(i, best_p);
            placed += amounts[i];
        }
        let fix = demand - placed;
        if fix != 0.0 {
            let i = (start..=best_j).rev().find(|&i| amounts[i] > 0.0).unwrap_or(best_j);
            amounts[i] = (amounts[i] + fix).max(0.0);
        }
        done = caps[best_j].max(done);
        start = best_j + 1;
    }
    Ok(Staircase { prices, amounts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_costs_equalize_without_binding_caps() {
        // f_i(x) = x²/2 ⇒ x_i(p) = max(p, 0); caps loose until the end.
        let caps = [10.0, 10.0, 10.0];
        let st = solve(&caps, |_, p| p.max(0.0), -1.0, 1.0).unwrap();
        assert!((st.amounts.iter().sum::<f64>() - 10.0).abs() < 1e-9);
        assert!(st.amounts.iter().all(|&x| (x - 10.0 / 3.0).abs() < 1e-9), "{:?}", st.amounts);
    }

    #[test]
    fn binding_cap_splits_segments() {
        let caps = [1.0, 1.0, 9.0];
        // x₀ + x₁ ≤ 1 binds, so the first two slots share it equally.
        let st = solve(&caps, |_, p| p.max(0.0), -1.0, 1.0).unwrap();
        assert!((st.amounts[0] - 0.5).abs() < 1e-9);
        assert!((st.amounts[1] - 0.5).abs() < 1e-9);
        assert!((st.amounts[2] - 8.0).abs() < 1e-9);
        assert!(st.prices[0] <= st.prices[2]);
    }

    #[test]
    fn weighted_costs_follow_marginals() {
        // f_i(x) = w_i x²/2 ⇒ x_i(p) = p/w_i.
        let w = [1.0, 3.0];
        let st = solve(&[8.0, 8.0], |i, p| p.max(0.0) / w[i], -1.0, 1.0).unwrap();
        assert!((st.amounts[0] - 6.0).abs() < 1e-9 && (st.amounts[1] - 2.0).abs() < 1e-9, "{:?}", st.amounts);
    }

    #[test]
    fn zero_demand_gives_zero_amounts() {
        let st = solve(&[0.0, 0.0], |_, p| p.max(0.0), -1.0, 1.0).unwrap();
        assert_eq!(st.amounts, vec![0.0, 0.0]);
    }

    #[test]
    fn unplaceable_demand_is_infeasible() {
        let r = solve(&[0.0, 5.0], |i, p| if i == 0 { p.max(0.0) } else { 0.0 }, -1.0, 1.0);
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }
}
