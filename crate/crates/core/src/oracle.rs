//! Independent checks: an exhaustive grid solver for tiny single-antenna
//! instances, a KKT verifier for solver reports and a monotonicity check.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dual::{check_dual_feasible_with, Feasibility};
use crate::energy::cumulative_demands;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{suffix_sums, Allocation, BitAllocation, Instance};
use crate::solver::SolveReport;

/// Largest number of grid points a single brute-force pass may visit.
pub const MAX_GRID_POINTS: f64 = 2e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub allocation: Allocation,
    pub objective: f64,
    pub resolution: usize,
    pub points_evaluated: u64,
}

/// Minimum of `Σ τ Q_j` over `Q_j ≥ 0` subject to
/// `Σ_{j≤i} c[k][j] Q_j ≥ d[k][i]`, by vertex enumeration. Returns the
/// minimizer, or `None` when infeasible.
pub fn scalar_wpt_lp(coeff: &[Vec<f64>], demand: &[Vec<f64>], tau: f64) -> Option<(Vec<f64>, f64)> {
    let n = demand.first().map_or(0, Vec::len);
    if demand.iter().flatten().all(|&d| d <= 0.0) {
        return Some((vec![0.0; n], 0.0));
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for (c, d) in coeff.iter().zip(demand) {
        for i in 0..n {
            let mut a = vec![0.0; n];
            a[..=i].copy_from_slice(&c[..=i]);
            rows.push((a, d[i]));
        }
    }
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        rows.push((a, 0.0));
    }
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |r, c| rows[pick[r]].0[c]);
        let b = DVector::from_fn(n, |r, _| rows[pick[r]].1);
        if let Some(q) = a.lu().solve(&b) {
            let feasible = q.iter().all(|v| v.is_finite())
                && rows.iter().all(|(a, d)| {
                    let lhs: f64 = a.iter().zip(q.iter()).map(|(x, y)| x * y).sum();
                    lhs >= d - 1e-12 * d.abs().max(1e-300)
                });
            if feasible {
                let cost = tau * q.iter().sum::<f64>();
                if best.as_ref().is_none_or(|(_, c)| cost < *c) {
                    best = Some((q.iter().map(|v| v.max(0.0)).collect(), cost));
                }
            }
        }
        let mut idx = n;
        loop {
            if idx == 0 {
                return best;
            }
            idx -= 1;
            if pick[idx] < rows.len() - n + idx {
                pick[idx] += 1;
                for t in idx + 1..n {
                    pick[t] = pick[t - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Optimal server schedule for offloads `sent[i]` (per slot, summed over
/// users) when `N ≤ 3`.
fn server_schedule(sent: &[f64]) -> Vec<f64> {
    let n = sent.len();
    let mut out = vec![0.0; n];
    match n {
        0 | 1 => {}
        2 => out[1] = sent[0],
        _ => {
            let total = sent[0] + sent[1];
            out[1] = sent[0].min(total / 2.0);
            out[2] = total - out[1];
        }
    }
    out
}

/// `Σ c0·L0³` of [`server_schedule`] without allocating.
fn server_cost(sent: &[f64], c0: f64) -> f64 {
    match sent.len() {
        0 | 1 => 0.0,
        2 => c0 * sent[0].powi(3),
        _ => {
            let total = sent[0] + sent[1];
            let first = sent[0].min(total / 2.0);
            let second = total - first;
            c0 * (first.powi(3) + second.powi(3))
        }
    }
}

/// Decode unit-cube coordinates into bits. Per user the first `N−1`
/// coordinates place cumulative processed bits between their causal bounds
/// and the next `N−1` give the offloaded fraction of each slot's bits.
fn decode(inst: &Instance, u: &[f64], bits: &mut BitAllocation) {
    let (kk, n) = (inst.users(), inst.slots());
    let d = 2 * (n - 1);
    for k in 0..kk {
        let uk = &u[k * d..(k + 1) * d];
        let mut cum_a = 0.0;
        let mut prev = 0.0;
        let total = inst.user_total_arrivals(k);
        for i in 0..n {
            cum_a += inst.arrivals(k, i);
            let x_cum = if i + 1 < n { prev + uk[i] * (cum_a - prev) } else { total };
            let x = (x_cum - prev).max(0.0);
            prev = x_cum;
            let r = if i + 1 < n { x * uk[n - 1 + i] } else { 0.0 };
            bits.offload[k][i] = r;
            bits.local[k][i] = x - r;
        }
    }
    let sent: Vec<f64> = (0..n).map(|i| (0..kk).map(|k| bits.offload[k][i]).sum()).collect();
    bits.server = server_schedule(&sent);
}

fn channel_coeffs(inst: &Instance) -> Vec<Vec<f64>> {
    let p = &inst.params;
    (0..inst.users())
        .map(|k| (0..inst.slots()).map(|i| p.tau * p.eta[k] * inst.h(k, i)[0].norm_sqr()).collect())
        .collect()
}

fn grid_cost(inst: &Instance, coeffs: &[Vec<f64>], bits: &BitAllocation) -> f64 {
    let demands = cumulative_demands(inst, &bits.local, &bits.offload);
    let wpt = match scalar_wpt_lp(coeffs, &demands, inst.params.tau) {
        Some((_, c)) => c,
        None => return f64::INFINITY,
    };
    let c0 = inst.params.server_coeff();
    wpt + bits.server.iter().map(|l| c0 * l * l * l).sum::<f64>()
}

/// Visit every point of the product grid `axes`, returning the best
/// coordinates and cost.
fn search(inst: &Instance, axes: &[Vec<f64>]) -> (Vec<f64>, f64, u64) {
    if inst.users() == 1 {
        return search_single_user(inst, axes);
    }
    let coeffs = channel_coeffs(inst);
    let d = axes.len();
    let mut idx = vec![0usize; d];
    let mut u: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut bits = BitAllocation::zeros(inst.users(), inst.slots());
    let mut best = (u.clone(), f64::INFINITY);
    let mut count = 0u64;
    loop {
        decode(inst, &u, &mut bits);
        let c = grid_cost(inst, &coeffs, &bits);
        count += 1;
        if c < best.1 {
            best = (u.clone(), c);
        }
        let mut t = 0;
        loop {
            if t == d {
                return (best.0, best.1, count);
            }
            idx[t] += 1;
            if idx[t] < axes[t].len() {
                u[t] = axes[t][idx[t]];
                break;
            }
            idx[t] = 0;
            u[t] = axes[t][0];
            t += 1;
        }
    }
}

/// Single user: the cheapest way to harvest slot `i`'s energy is in the best
/// channel slot up to `i`, so the transfer cost separates over slots.
fn search_single_user(inst: &Instance, axes: &[Vec<f64>]) -> (Vec<f64>, f64, u64) {
    let p = &inst.params;
    let n = inst.slots();
    let a = p.local_coeff(0);
    let c0 = p.server_coeff();
    let mut best_gain = 0.0_f64;
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            best_gain = best_gain.max(p.eta[0] * inst.h(0, i)[0].norm_sqr());
            if best_gain > 0.0 {
                1.0 / best_gain
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let b: Vec<f64> = (0..n).map(|i| p.tau * p.sigma2 / inst.g(0, i)).collect();
    let rate = LN_2 / (p.tau * p.bandwidth);
    let energy = |i: usize, l: f64, r: f64| -> f64 {
        let e = a * l * l * l + if r > 0.0 { b[i] * (r * rate).exp_m1() } else { 0.0 };
        if e > 0.0 {
            weights[i] * e
        } else {
            0.0
        }
    };

    let m = n - 1;
    let mut best_u = vec![0.0; 2 * m];
    let mut best_cost = f64::INFINITY;
    let mut count = 0u64;
    let mut cum_idx = vec![0usize; m];
    loop {
        let mut x = vec![0.0; n];
        let mut prev = 0.0;
        let mut cum_a = 0.0;
        for i in 0..n {
            cum_a += inst.arrivals(0, i);
            let x_cum = if i < m { prev + axes[i][cum_idx[i]] * (cum_a - prev) } else { inst.user_total_arrivals(0) };
            x[i] = (x_cum - prev).max(0.0);
            prev = x_cum;
        }
        let last = energy(m, x[m], 0.0);
        let slot_cost: Vec<Vec<(f64, f64)>> = (0..m)
            .map(|i| {
                axes[m + i]
                    .iter()
                    .map(|&f| {
                        let r = x[i] * f;
                        (energy(i, x[i] - r, r), r)
                    })
                    .collect()
            })
            .collect();
        let mut split_idx = vec![0usize; m];
        let mut sent = vec![0.0; n];
        loop {
            let mut c = last;
            for i in 0..m {
                let (e, r) = slot_cost[i][split_idx[i]];
                c += e;
                sent[i] = r;
            }
            c += server_cost(&sent, c0);
            count += 1;
            if c < best_cost {
                best_cost = c;
                for i in 0..m {
                    best_u[i] = axes[i][cum_idx[i]];
                    best_u[m + i] = axes[m + i][split_idx[i]];
                }
            }
            if !advance(&mut split_idx, |t| axes[m + t].len()) {
                break;
            }
        }
        if !advance(&mut cum_idx, |t| axes[t].len()) {
            break;
        }
    }
    (best_u, best_cost, count)
}

fn advance(idx: &mut [usize], len: impl Fn(usize) -> usize) -> bool {
    for t in 0..idx.len() {
        idx[t] += 1;
        if idx[t] < len(t) {
            return true;
        }
        idx[t] = 0;
    }
    false
}

/// Exhaustive grid search with `resolution` intervals per coordinate and one
/// local refinement around the incumbent.
pub fn brute_force_tiny(inst: &Instance, resolution: usize) -> Result<OracleSolution> {
    brute_force_tiny_with(inst, resolution, true)
}

pub fn brute_force_tiny_with(inst: &Instance, resolution: usize, refine: bool) -> Result<OracleSolution> {
    inst.ensure_valid()?;
    let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
    if kk > 2 || n > 3 || m != 1 {
        return Err(Error::InvalidArgument(format!(
            "brute force supports K ≤ 2, N ≤ 3, M = 1 (got K={kk}, N={n}, M={m})"
        )));
    }
    if resolution < 32 {
        return Err(Error::InvalidArgument(format!("grid resolution {resolution} is below 32")));
    }
    let d = kk * 2 * (n - 1);
    let points = ((resolution + 1) as f64).powi(d as i32);
    if points > MAX_GRID_POINTS {
        return Err(Error::InvalidArgument(format!("grid of {points:.3e} points is too large")));
    }
    let coarse: Vec<f64> = (0..=resolution).map(|j| j as f64 / resolution as f64).collect();
    let axes = vec![coarse; d];
    let (mut u, cost, mut count) = search(inst, &axes);
    if !cost.is_finite() {
        return Err(Error::Infeasible("no grid point admits a finite transfer cost".into()));
    }
    if refine && d > 0 {
        let h = 1.0 / resolution as f64;
        let axes: Vec<Vec<f64>> = u
            .iter()
            .map(|&c| {
                let lo = (c - h).max(0.0);
                let hi = (c + h).min(1.0);
                (0..=resolution).map(|j| lo + (hi - lo) * j as f64 / resolution as f64).collect()
            })
            .collect();
        let (u2, c2, n2) = search(inst, &axes);
        count += n2;
        if c2 < cost {
            u = u2;
        }
    }
    let mut bits = BitAllocation::zeros(kk, n);
    if d > 0 {
        decode(inst, &u, &mut bits);
    } else {
        for k in 0..kk {
            bits.local[k][0] = inst.arrivals(k, 0);
        }
    }
    let coeffs = channel_coeffs(inst);
    let demands = cumulative_demands(inst, &bits.local, &bits.offload);
    let (q, _) = scalar_wpt_lp(&coeffs, &demands, inst.params.tau)
        .ok_or_else(|| Error::Infeasible("transfer program infeasible at the incumbent".into()))?;
    let q: Vec<CMat> = q.iter().map(|&v| CMat::from_element(1, 1, Complex64::new(v, 0.0))).collect();
    let allocation = bits.with_q(q);
    let objective = crate::energy::objective(inst, &allocation);
    Ok(OracleSolution { allocation, objective, resolution, points_evaluated: count })
}

/// KKT residuals of a report's primal-dual pair, all relative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// Largest stationarity violation over `L`, `R` and `L0`, relative to
    /// the larger of the term's own marginals and the mean price `J/ΣA`.
    pub stationarity: f64,
    /// Largest multiplier-slack product relative to the objective.
    pub complementarity: f64,
    pub dual_feasible: bool,
    pub tolerance: f64,
    pub violations: Vec<String>,
    pub passed: bool,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.stationarity.max(self.complementarity)
    }
}

/// Check stationarity of the Lagrangian in every bit variable (bits below the
/// bit tolerance count as zero), complementary slackness of the causality constraints and dual feasibility.
pub fn verify_kkt(inst: &Instance, report: &SolveReport, tol: f64) -> Result<KktReport> {
    let (kk, n) = (inst.users(), inst.slots());
    let alloc = &report.allocation;
    let mut violations = Vec::new();
    let Some(dual) = report.dual.as_ref() else {
        let trivial = inst.total_arrivals() == 0.0;
        return Ok(KktReport {
            stationarity: 0.0,
            complementarity: 0.0,
            dual_feasible: trivial,
            tolerance: tol,
            violations: if trivial { vec![] } else { vec!["report carries no dual point".into()] },
            passed: trivial,
        });
    };
    dual.check_shape(kk, n)?;
    let p = &inst.params;
    let dual_feasible = matches!(check_dual_feasible_with(inst, dual, 0.0)?, Feasibility::Feasible);
    if !dual_feasible {
        violations.push("dual point outside the dual domain".into());
    }
    let v = suffix_sums(&dual.nu);
    let v_next = |i: usize| if i + 1 < n { v[i + 1] } else { 0.0 };
    let rate = LN_2 / (p.tau * p.bandwidth);
    let bit_tol = inst.bit_tolerance();
    let price_floor = report.primal_objective.abs() / inst.total_arrivals().max(1.0);
    let mut stationarity: f64 = 0.0;
    let mut check = |name: String, value: f64, deriv: f64, scale: f64| {
        let scale = scale.max(price_floor).max(f64::MIN_POSITIVE);
        let rel = if value > bit_tol { deriv.abs() / scale } else { (-deriv).max(0.0) / scale };
        if rel > tol {
            violations.push(format!("stationarity in {name}: derivative {deriv:.3e} (relative {rel:.3e})"));
        }
        stationarity = stationarity.max(rel);
    };
    for k in 0..kk {
        let lam = dual.lambda_suffix(k);
        let mu = dual.mu_suffix(k);
        let a = p.local_coeff(k);
        for i in 0..n {
            let l = alloc.local[k][i];
            let marg = 3.0 * lam[i] * a * l * l;
            check(format!("L[{k}][{i}]"), l, marg + mu[i], marg.max(mu[i].abs()));
            if i + 1 < n {
                let r = alloc.offload[k][i];
                let b = p.tau * p.sigma2 / inst.g(k, i);
                let marg = lam[i] * b * rate * (r * rate).exp();
                let price = v_next(i) - mu[i];
                check(format!("R[{k}][{i}]"), r, marg - price, marg.max(price.abs()));
            }
        }
    }
    let c0 = p.server_coeff();
    for i in 0..n {
        let l0 = alloc.server[i];
        let marg = 3.0 * c0 * l0 * l0;
        check(format!("L0[{i}]"), l0, marg + v[i], marg.max(v[i].abs()));
    }

    let obj = report.primal_objective.abs().max(f64::MIN_POSITIVE);
    let mut complementarity: f64 = 0.0;
    let res = &report.residuals;
    for k in 0..kk {
        for i in 0..n {
            if i + 1 < n {
                complementarity = complementarity.max((dual.mu[k][i] * res.user_task_causality[k][i]).abs() / obj);
            }
            let slack = res.energy_causality[k][i];
            complementarity = complementarity.max((dual.lambda[k][i] * slack).abs() / obj);
        }
    }
    for i in 0..n.saturating_sub(1) {
        complementarity = complementarity.max((dual.nu[i] * res.ap_task_causality[i]).abs() / obj);
    }
    if complementarity > tol {
        violations.push(format!("complementary slackness residual {complementarity:.3e}"));
    }
    let passed = violations.is_empty();
    Ok(KktReport { stationarity, complementarity, dual_feasible, tolerance: tol, violations, passed })
}

/// First slot where a computed-bit sequence drops by more than the tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityViolation {
    /// `None` for the AP server, `Some(k)` for user `k`.
    pub user: Option<usize>,
    pub slot: usize,
    pub drop: f64,
}

/// Check that `L[k][i]` and `L0[i]` are nondecreasing in `i` up to
/// `1e−6·max(1, ΣA)`.
pub fn check_monotonicity(report: &SolveReport) -> std::result::Result<(), MonotonicityViolation> {
    let tol = 1e-6 * report.residuals.bit_scale.max(1.0);
    let seqs = report
        .allocation
        .local
        .iter()
        .enumerate()
        .map(|(k, s)| (Some(k), s))
        .chain(std::iter::once((None, &report.allocation.server)));
    for (user, seq) in seqs {
        for i in 1..seq.len() {
            let drop = seq[i - 1] - seq[i];
            if drop > tol {
                return Err(MonotonicityViolation { user, slot: i, drop });
            }
        }
    }
    Ok(())
}
