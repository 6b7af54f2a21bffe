//! Joint solver: ellipsoid method on the dual, closed-form primal recovery,
//! feasibility repair and beamforming recovery by SDP.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dual::{DualContext, Restriction};
use crate::ellipsoid::{maximize_from, EllipsoidOptions, EllipsoidState, OracleCut, StopReason};
use crate::energy::{cumulative_demands, objective, residuals, ConstraintReport, FeasibilityTolerance};
use crate::error::{Error, Result};
use crate::linalg::min_eig_hermitian;
use crate::model::{hbar_weighted, suffix_sums, Allocation, BitAllocation, DualPoint, Instance, DEFAULT_EPS_LAMBDA};
use crate::oracle::KktReport;
use crate::sdp::{solve_wpt_sdp_with, SdpOptions, SdpSolution, SdpStatus};
use crate::allocate::allocate_bits;
use crate::interior::solve_interior;

/// Allocation schemes: the joint design and the four benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Joint,
    LocalOnly,
    FullOffload,
    Myopic,
    Separate,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [Scheme::Joint, Scheme::LocalOnly, Scheme::FullOffload, Scheme::Myopic, Scheme::Separate];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Joint => "joint",
            Scheme::LocalOnly => "local-only",
            Scheme::FullOffload => "full-offload",
            Scheme::Myopic => "myopic",
            Scheme::Separate => "separate",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

/// Shape of the starting ellipsoid for the dual search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DualStart {
    /// Axis-aligned ellipsoid sized by per-coordinate bounds on the dual optimum.
    #[default]
    Scaled,
    /// Ball of radius `max(1, 10‖x0‖)·√n` around the default start.
    Ball,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub ellipsoid: EllipsoidOptions,
    pub eps_lambda: f64,
    pub feasibility: FeasibilityTolerance,
    pub sdp: SdpOptions,
    pub start: DualStart,
    /// Refine the dual-recovered allocation with a primal interior-point
    /// solve and certify it with the beamforming multipliers.
    pub refine: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            ellipsoid: EllipsoidOptions::default(),
            eps_lambda: DEFAULT_EPS_LAMBDA,
            feasibility: FeasibilityTolerance::default(),
            sdp: SdpOptions::default(),
            start: DualStart::default(),
            refine: true,
        }
    }
}

/// Bits moved by [`repair_feasibility`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RepairSummary {
    pub applied: bool,
    pub magnitude: f64,
    /// Magnitude above 1% of the total task load.
    pub excessive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepairOutcome {
    pub bits: BitAllocation,
    pub summary: RepairSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub scheme: Scheme,
    pub allocation: Allocation,
    pub primal_objective: f64,
    /// Dual bound; absent for schemes without a dual certificate.
    pub dual_value: Option<f64>,
    pub duality_gap_rel: Option<f64>,
    pub residuals: ConstraintReport,
    pub iterations: usize,
    /// Seconds.
    pub wall_time: f64,
    pub repair: RepairSummary,
    pub dual: Option<DualPoint>,
    pub stop: Option<StopReason>,
    pub sdp_status: SdpStatus,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt: Option<KktReport>,
}

impl SolveReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn is_feasible(&self, tol: &FeasibilityTolerance) -> bool {
        self.residuals.is_feasible(tol)
    }

    /// Energy per slot at the AP.
    pub fn objective_per_slot(&self) -> f64 {
        self.primal_objective / self.allocation.server.len().max(1) as f64
    }
}

/// Outcome of maximizing a (possibly restricted) dual.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub point: DualPoint,
    pub value: f64,
    pub bits: BitAllocation,
    pub iterations: usize,
    pub stop: StopReason,
}

/// Starting center and per-coordinate radii of the dual search.
fn start_box(ctx: &DualContext, start: DualStart) -> (Vec<f64>, Vec<f64>) {
    let x0 = ctx.initial_point();
    let n = x0.len();
    let sqrt_n = (n as f64).sqrt();
    match start {
        DualStart::Ball => {
            let norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = (10.0 * norm).max(1.0) * sqrt_n;
            (x0, vec![r; n])
        }
        DualStart::Scaled => {
            let (kk, slots) = (ctx.users(), ctx.slots());
            let bounds = ctx.lambda_bounds();
            let (user_price, ap_price) = ctx.price_scales();
            let max_price = user_price.iter().copied().fold(ap_price, f64::max);
            let floor = if max_price > 0.0 { 1e-9 * max_price } else { 1.0 };
            let mut radii = vec![0.0; n];
            for k in 0..kk {
                for i in 0..slots {
                    let b = bounds[k * slots + i];
                    let b = if b.is_finite() { b } else { 1e3 * x0[k * slots + i].max(1.0) };
                    radii[k * slots + i] = 2.0 * sqrt_n * b.max(x0[k * slots + i]);
                    radii[kk * slots + k * slots + i] = 2.0 * sqrt_n * user_price[k].max(floor);
                }
            }
            for r in radii.iter_mut().skip(2 * kk * slots) {
                *r = 2.0 * sqrt_n * ap_price.max(floor);
            }
            (x0, radii)
        }
    }
}

/// Maximize the dual of the problem restricted by `restriction`. The search
/// runs in coordinates `y = (x − x0)/r` so the starting ellipsoid is the
/// unit ball whatever the spread of multiplier magnitudes.
pub fn solve_dual(inst: &Instance, restriction: Restriction, opts: &SolverOptions) -> Result<DualSolution> {
    let mut ctx = DualContext::new(inst, restriction, opts.eps_lambda)?;
    let (x0, radii) = start_box(&ctx, opts.start);
    let n = x0.len();
    let to_x = |y: &[f64]| -> Vec<f64> { (0..n).map(|j| x0[j] + radii[j] * y[j]).collect() };
    let result = {
        let ctx = &mut ctx;
        let mut x = vec![0.0; n];
        let oracle = |y: &[f64], a: &mut [f64]| -> Result<OracleCut> {
            for j in 0..n {
                x[j] = x0[j] + radii[j] * y[j];
            }
            let out = if let Some(cut) = ctx.feasibility_cut(&x) {
                a.copy_from_slice(&cut.direction);
                OracleCut::Feasibility { depth: cut.depth, tag: "feasibility" }
            } else {
                let value = ctx.value_and_supergradient(&x, a, None);
                OracleCut::Objective { value }
            };
            for j in 0..n {
                a[j] *= radii[j];
            }
            Ok(out)
        };
        maximize_from(EllipsoidState::ball(&vec![0.0; n], 1.0)?, oracle, &opts.ellipsoid)?
    };
    let best = result
        .best_point
        .ok_or_else(|| Error::Numerical(format!("no dual-feasible point found ({:?})", result.stop)))?;
    let best = to_x(&best);
    let eval = ctx.evaluate(&best)?;
    Ok(DualSolution {
        point: ctx.unpack(&best)?,
        value: eval.value,
        bits: eval.minimizers,
        iterations: result.iterations,
        stop: result.stop,
    })
}

/// Closed-form minimizers at a dual point; `R[k][N−1]` is exactly zero.
pub fn recover_primal(inst: &Instance, dual: &DualPoint) -> Result<BitAllocation> {
    let ctx = DualContext::new(inst, Restriction::Joint, DEFAULT_EPS_LAMBDA)?;
    let x = ctx.pack(dual)?;
    let mut grad = vec![0.0; ctx.dim()];
    let mut bits = BitAllocation::zeros(inst.users(), inst.slots());
    ctx.value_and_supergradient(&x, &mut grad, Some(&mut bits));
    Ok(bits)
}

/// Task-feasible bits and the dual point they are optimal for.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub bits: BitAllocation,
    pub dual: DualPoint,
    pub newton_steps: usize,
    pub converged: bool,
}

/// Keep `λ` and re-solve the task multipliers exactly: the bits minimize the
/// `Λ`-weighted user energy plus server energy over the task-causality
/// constraints, and `μ`, `ν` are the multipliers of those constraints.
pub fn refine_recovery(inst: &Instance, restriction: Restriction, dual: &DualPoint) -> Result<Refinement> {
    let (kk, n) = (inst.users(), inst.slots());
    dual.check_shape(kk, n)?;
    let weights: Vec<Vec<f64>> = (0..kk).map(|k| dual.lambda_suffix(k)).collect();
    let alloc = allocate_bits(inst, restriction, &weights, true)?;
    Ok(Refinement {
        bits: alloc.bits,
        dual: DualPoint { lambda: dual.lambda.clone(), mu: alloc.mu, nu: alloc.nu },
        newton_steps: alloc.newton_steps,
        converged: alloc.converged,
    })
}

/// Clip `λ` to nonnegative values, scale it onto the PSD boundary when it
/// lies outside, then shrink toward zero until the PSD condition holds
/// despite rounding.
fn feasible_vertex(ctx: &mut DualContext, inst: &Instance, y: &[Vec<f64>], eps_lambda: f64) -> Result<Option<Vec<Vec<f64>>>> {
    let (kk, n) = (ctx.users(), ctx.slots());
    let mut base: Vec<Vec<f64>> = y.iter().map(|row| row.iter().map(|v| v.max(0.0)).collect()).collect();
    let mut rho: f64 = 0.0;
    let suffix: Vec<Vec<f64>> = base.iter().map(|row| suffix_sums(row)).collect();
    for i in 0..n {
        let w: Vec<f64> = (0..kk).map(|k| suffix[k][i] * inst.params.eta[k]).collect();
        let (min_eig, _) = min_eig_hermitian(&hbar_weighted(inst, i, &w))?;
        rho = rho.max(1.0 - min_eig);
    }
    if rho > 1.0 {
        base.iter_mut().flatten().for_each(|v| *v /= rho);
    }
    for shrink in [0.0, 1e-12, 1e-9, 1e-6, 1e-3] {
        let mut lambda = base.clone();
        for row in &mut lambda {
            row.iter_mut().for_each(|v| *v *= 1.0 - shrink);
            row[n - 1] = row[n - 1].max(eps_lambda);
        }
        let probe = DualPoint { lambda, mu: vec![vec![0.0; n]; kk], nu: vec![0.0; n] };
        let x = ctx.pack(&probe)?;
        if ctx.feasibility_cut(&x).is_none() {
            return Ok(Some(probe.lambda));
        }
    }
    Ok(None)
}

/// Relative dual value a certificate of the reported primal may give up
/// against a tighter but unrelated dual point.
const CERTIFICATE_SLACK: f64 = 1e-4;

/// Refinement at a dual point, its dual value and the energy demands of the
/// minimizing bits (the gradient in `λ`).
type DualAt = (Refinement, f64, Vec<Vec<f64>>);

/// Exact task prices for `λ` with the dual value and demands there.
fn dual_at(ctx: &mut DualContext, inst: &Instance, restriction: Restriction, lambda: Vec<Vec<f64>>) -> Result<Option<DualAt>> {
    let (kk, n) = (inst.users(), inst.slots());
    let point = DualPoint { lambda, mu: vec![vec![0.0; n]; kk], nu: vec![0.0; n] };
    let refined = refine_recovery(inst, restriction, &point)?;
    let x = ctx.pack(&refined.dual)?;
    Ok(match ctx.evaluate(&x) {
        Ok(ev) => {
            let demands = cumulative_demands(inst, &refined.bits.local, &refined.bits.offload);
            Some((refined, ev.value, demands))
        }
        Err(_) => None,
    })
}

/// Take up to `amount` from `v`, returning what was taken.
fn take(v: &mut f64, amount: f64) -> f64 {
    let t = amount.min(*v).max(0.0);
    *v -= t;
    t
}

/// Make recovered bits exactly satisfy task causality and deadlines for the
/// users and the AP. Deficits go to the last local slot, surpluses leave the
/// latest slots, and AP prefix excess moves forward.
pub fn repair_feasibility(inst: &Instance, bits: &BitAllocation) -> Result<RepairOutcome> {
    let (kk, n) = (inst.users(), inst.slots());
    if bits.local.len() != kk || bits.offload.len() != kk || bits.server.len() != n {
        return Err(Error::Shape("bit allocation does not match instance".into()));
    }
    let mut out = bits.clone();
    let mut moved = 0.0;
    let mut clip = |v: &mut f64| {
        if *v < 0.0 || !v.is_finite() {
            moved += v.abs().min(f64::MAX);
            *v = 0.0;
        }
    };
    for k in 0..kk {
        out.local[k].iter_mut().for_each(&mut clip);
        out.offload[k].iter_mut().for_each(&mut clip);
    }
    out.server.iter_mut().for_each(&mut clip);

    for k in 0..kk {
        let (l, r) = (&mut out.local[k], &mut out.offload[k]);
        moved += r[n - 1];
        r[n - 1] = 0.0;
        let mut cum_a = 0.0;
        let mut cum_x = 0.0;
        for i in 0..n - 1 {
            cum_a += inst.arrivals(k, i);
            cum_x += l[i] + r[i];
            let excess = cum_x - cum_a;
            if excess > 0.0 {
                let mut left = excess;
                left -= take(&mut l[i], left);
                left -= take(&mut r[i], left);
                let shifted = excess - left;
                l[i + 1] += shifted;
                cum_x -= shifted;
                moved += shifted;
            }
        }
        let total: f64 = l.iter().chain(r.iter()).sum();
        let deficit = inst.user_total_arrivals(k) - total;
        if deficit > 0.0 {
            l[n - 1] += deficit;
            moved += deficit;
        } else if deficit < 0.0 {
            let mut left = -deficit;
            for i in (0..n).rev() {
                left -= take(&mut l[i], left);
            }
            for i in (0..n).rev() {
                left -= take(&mut r[i], left);
            }
            moved += -deficit - left;
        }
    }

    let mut available = 0.0;
    let mut cum = 0.0;
    for i in 0..n {
        if i > 0 {
            available += (0..kk).map(|k| out.offload[k][i - 1]).sum::<f64>();
        }
        let excess = cum + out.server[i] - available;
        if excess > 0.0 {
            out.server[i] -= excess;
            if i + 1 < n {
                out.server[i + 1] += excess;
            }
            moved += excess;
        }
        cum += out.server[i];
    }
    let before: f64 = out.server[n - 1];
    out.server[n - 1] = (available - (cum - before)).max(0.0);
    moved += (out.server[n - 1] - before).abs();

    let load = inst.total_arrivals();
    let summary = RepairSummary {
        applied: moved > 0.0,
        magnitude: moved,
        excessive: moved > 0.01 * load,
    };
    if summary.excessive {
        log::warn!("repair moved {moved:.3e} bits, more than 1% of the task load {load:.3e}");
    }
    Ok(RepairOutcome { bits: out, summary })
}

/// Repaired bits with the beamforming solution for their demands.
pub(crate) struct Recovered {
    pub(crate) bits: BitAllocation,
    pub(crate) repair: RepairSummary,
    pub(crate) sdp: SdpSolution,
}

pub(crate) fn recover(inst: &Instance, bits: &BitAllocation, opts: &SolverOptions) -> Result<Recovered> {
    let repaired = repair_feasibility(inst, bits)?;
    let demands = cumulative_demands(inst, &repaired.bits.local, &repaired.bits.offload);
    let sdp = solve_wpt_sdp_with(inst, &demands, &opts.sdp)?;
    Ok(Recovered { bits: repaired.bits, repair: repaired.summary, sdp })
}

impl Recovered {
    fn objective(&self, inst: &Instance) -> f64 {
        objective(inst, &self.bits.clone().with_q(self.sdp.q.clone()))
    }
}

/// Recover covariances for fixed bits and assemble a report.
#[allow(clippy::too_many_arguments)]
pub(crate) fn finish_report(
    inst: &Instance,
    scheme: Scheme,
    bits: BitAllocation,
    dual: Option<(DualPoint, f64)>,
    iterations: usize,
    stop: Option<StopReason>,
    opts: &SolverOptions,
    started: Instant,
) -> Result<SolveReport> {
    let rec = recover(inst, &bits, opts)?;
    assemble(inst, scheme, rec, dual, iterations, stop, opts, started)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn assemble(
    inst: &Instance,
    scheme: Scheme,
    rec: Recovered,
    dual: Option<(DualPoint, f64)>,
    iterations: usize,
    stop: Option<StopReason>,
    opts: &SolverOptions,
    started: Instant,
) -> Result<SolveReport> {
    let allocation = rec.bits.with_q(rec.sdp.q);
    let primal = objective(inst, &allocation);
    let residuals = residuals(inst, &allocation)?;
    let mut notes = residuals.check(&opts.feasibility);
    if rec.repair.excessive {
        notes.push(format!("repair magnitude {:.3e} bits exceeds 1% of the task load", rec.repair.magnitude));
    }
    if rec.sdp.status == SdpStatus::Inaccurate {
        notes.push("beamforming SDP stopped before reaching its gap target".into());
    }
    let (dual_point, dual_value) = match dual {
        Some((p, v)) => (Some(p), Some(v)),
        None => (None, None),
    };
    let duality_gap_rel = dual_value.map(|d| (primal - d) / primal.max(1e-12));
    Ok(SolveReport {
        scheme,
        allocation,
        primal_objective: primal,
        dual_value,
        duality_gap_rel,
        residuals,
        iterations,
        wall_time: started.elapsed().as_secs_f64(),
        repair: rec.repair,
        dual: dual_point,
        stop,
        sdp_status: rec.sdp.status,
        notes,
        kkt: None,
    })
}

/// Report for an instance with no tasks.
pub(crate) fn zero_report(inst: &Instance, scheme: Scheme, opts: &SolverOptions, started: Instant) -> Result<SolveReport> {
    let bits = BitAllocation::zeros(inst.users(), inst.slots());
    let mut dual = DualPoint::zeros(inst.users(), inst.slots());
    for row in &mut dual.lambda {
        if let Some(last) = row.last_mut() {
            *last = opts.eps_lambda;
        }
    }
    finish_report(inst, scheme, bits, Some((dual, 0.0)), 0, None, opts, started)
}

/// Solve with a dual restricted to the variables `restriction` leaves free.
pub(crate) fn solve_restricted(inst: &Instance, restriction: Restriction, scheme: Scheme, opts: &SolverOptions) -> Result<SolveReport> {
    let started = Instant::now();
    inst.ensure_valid()?;
    if inst.total_arrivals() == 0.0 {
        return zero_report(inst, scheme, opts, started);
    }
    let dual = solve_dual(inst, restriction, opts)?;
    if dual.stop == StopReason::MaxIterations {
        log::warn!("dual search hit the iteration cap after {} iterations", dual.iterations);
    }
    let mut ctx = DualContext::new(inst, restriction, opts.eps_lambda)?;
    let mut notes = Vec::new();
    // candidate A: exact task prices at the ellipsoid's λ
    let refined = refine_recovery(inst, restriction, &dual.point)?;
    let x = ctx.pack(&refined.dual)?;
    let mut best_dual = (dual.point.clone(), dual.value);
    if let Ok(ev) = ctx.evaluate(&x) {
        if ev.value > best_dual.1 {
            best_dual = (refined.dual.clone(), ev.value);
        }
    }
    let mut settled = refined.converged;
    let mut rec = recover(inst, &refined.bits, opts)?;
    // candidate B: primal interior point, certified by its own multipliers or
    // those of the beamforming SDP
    if opts.refine {
        match solve_interior(inst, restriction) {
            Ok(sol) => {
                let alt = recover(inst, &sol.bits, opts)?;
                let alt_objective = alt.objective(inst);
                let mut certificate: Option<(Refinement, f64, Vec<Vec<f64>>)> = None;
                for lambda in [&sol.lambda, &alt.sdp.y] {
                    if let Some(lambda) = feasible_vertex(&mut ctx, inst, lambda, opts.eps_lambda)? {
                        if let Some(c) = dual_at(&mut ctx, inst, restriction, lambda)? {
                            if certificate.as_ref().is_none_or(|b| c.1 > b.1) {
                                certificate = Some(c);
                            }
                        }
                    }
                }
                if alt_objective < rec.objective(inst) {
                    rec = alt;
                    settled = sol.converged;
                    // the certificate built from the reported primal is preferred when it is as tight
                    if let Some((cert, g, _)) = certificate {
                        if g >= best_dual.1 - CERTIFICATE_SLACK * alt_objective.abs() {
                            best_dual = (cert.dual, g);
                        }
                    }
                } else if let Some((cert, g, _)) = certificate {
                    if g > best_dual.1 {
                        best_dual = (cert.dual, g);
                    }
                }
            }
            Err(e) => {
                log::warn!("interior-point refinement failed: {e}");
                notes.push(format!("interior-point refinement failed: {e}"));
            }
        }
    }
    let mut report = assemble(inst, scheme, rec, Some(best_dual), dual.iterations, Some(dual.stop), opts, started)?;
    if !settled {
        report.notes.push("bit allocation stopped before reaching its gap target".into());
    }
    report.notes.extend(notes);
    Ok(report)
}

/// Minimum-energy joint allocation.
pub fn solve(inst: &Instance, opts: &SolverOptions) -> Result<SolveReport> {
    solve_restricted(inst, Restriction::Joint, Scheme::Joint, opts)
}
