//! Benchmark schemes: local computing only, full offloading, per-slot
//! (myopic) design and separate user/AP design.

use std::time::Instant;

use crate::allocate::allocate_bits;
use crate::dual::{cubic_minimizer, offload_minimizer, Restriction};
use crate::energy::cumulative_demands;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{BitAllocation, ChannelRealization, Instance, TaskArrivals};
use crate::sdp::{solve_wpt_sdp_with, SdpSolution, SdpStatus};
use crate::solver::{assemble, finish_report, solve, solve_restricted, zero_report, Recovered, RepairSummary, Scheme, SolveReport, SolverOptions};
use crate::staircase;

/// Local computing only: `R ≡ 0`, `L0 ≡ 0`.
pub fn solve_local_only(inst: &Instance, opts: &SolverOptions) -> Result<SolveReport> {
    solve_restricted(inst, Restriction::LocalOnly, Scheme::LocalOnly, opts)
}

/// Full offloading: `L ≡ 0`.
pub fn solve_full_offloading(inst: &Instance, opts: &SolverOptions) -> Result<SolveReport> {
    inst.ensure_valid()?;
    let n = inst.slots();
    for k in 0..inst.users() {
        let last = inst.arrivals(k, n - 1);
        if last > 0.0 {
            return Err(Error::Infeasible(format!(
                "user {k} has {last:.3e} bits arriving in the last slot, which cannot be offloaded"
            )));
        }
    }
    if inst.total_arrivals() == 0.0 {
        return zero_report(inst, Scheme::FullOffload, opts, Instant::now());
    }
    solve_restricted(inst, Restriction::FullOffload, Scheme::FullOffload, opts)
}

/// Dispatch on the scheme name.
pub fn solve_scheme(inst: &Instance, scheme: Scheme, opts: &SolverOptions) -> Result<SolveReport> {
    match scheme {
        Scheme::Joint => solve(inst, opts),
        Scheme::LocalOnly => solve_local_only(inst, opts),
        Scheme::FullOffload => solve_full_offloading(inst, opts),
        Scheme::Myopic => solve_myopic(inst, opts),
        Scheme::Separate => solve_separate(inst, opts),
    }
}

/// Copy of `inst` holding only slot `i`, with no arrivals.
fn single_slot(inst: &Instance, i: usize) -> Instance {
    let mut params = inst.params.clone();
    params.slots = 1;
    let kk = inst.users();
    Instance {
        params,
        channels: ChannelRealization {
            h: (0..kk).map(|k| vec![inst.h(k, i).to_vec()]).collect(),
            g: (0..kk).map(|k| vec![inst.g(k, i)]).collect(),
        },
        tasks: TaskArrivals { arrivals: vec![vec![0.0]; kk] },
    }
}

/// Split `a` bits of user `k` in slot `i` between local computing and
/// offloading at the price where both marginal energies meet.
fn own_energy_split(inst: &Instance, k: usize, i: usize, a: f64) -> Result<(f64, f64)> {
    let p = &inst.params;
    if a <= 0.0 {
        return Ok((0.0, 0.0));
    }
    if i + 1 == inst.slots() {
        return Ok((a, 0.0));
    }
    let c = p.local_coeff(k);
    let g = inst.g(k, i);
    let response = |_: usize, price: f64| cubic_minimizer(c, -price) + offload_minimizer(1.0, price, g, p.tau, p.bandwidth, p.sigma2);
    let stair = staircase::solve(&[a], response, 0.0, 3.0 * c * a * a)?;
    let local = cubic_minimizer(c, -stair.prices[0]).min(a);
    Ok((local, a - local))
}

/// Per-slot design: every slot finishes its own arrivals, the AP computes the
/// previous slot's offloaded bits, and each slot's harvest covers its own
/// energy use.
pub fn solve_myopic(inst: &Instance, opts: &SolverOptions) -> Result<SolveReport> {
    let started = Instant::now();
    inst.ensure_valid()?;
    if inst.total_arrivals() == 0.0 {
        return zero_report(inst, Scheme::Myopic, opts, started);
    }
    let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
    let mut bits = BitAllocation::zeros(kk, n);
    for k in 0..kk {
        for i in 0..n {
            let (l, r) = own_energy_split(inst, k, i, inst.arrivals(k, i))?;
            bits.local[k][i] = l;
            bits.offload[k][i] = r;
        }
    }
    for i in 1..n {
        bits.server[i] = (0..kk).map(|k| bits.offload[k][i - 1]).sum();
    }
    let mut sdp = SdpSolution {
        q: Vec::with_capacity(n),
        objective: 0.0,
        y: vec![vec![0.0; n]; kk],
        z: Vec::with_capacity(n),
        gap_rel: 0.0,
        newton_steps: 0,
        status: SdpStatus::Optimal,
    };
    for i in 0..n {
        let slot = single_slot(inst, i);
        let local: Vec<Vec<f64>> = (0..kk).map(|k| vec![bits.local[k][i]]).collect();
        let offload: Vec<Vec<f64>> = (0..kk).map(|k| vec![bits.offload[k][i]]).collect();
        let demands = cumulative_demands(&slot, &local, &offload);
        let sol = solve_wpt_sdp_with(&slot, &demands, &opts.sdp)?;
        sdp.q.push(sol.q.into_iter().next().unwrap_or_else(|| CMat::zeros(m, m)));
        sdp.z.extend(sol.z);
        sdp.objective += sol.objective;
        for k in 0..kk {
            sdp.y[k][i] = sol.y[k][0];
        }
        sdp.gap_rel = sdp.gap_rel.max(sol.gap_rel);
        sdp.newton_steps += sol.newton_steps;
        if sol.status == SdpStatus::Inaccurate {
            sdp.status = SdpStatus::Inaccurate;
        }
    }
    let rec = Recovered { bits, repair: RepairSummary::default(), sdp };
    assemble(inst, Scheme::Myopic, rec, None, 0, None, opts, started)
}

/// Separate design: users minimize their own total energy under task
/// causality, the AP schedules the offloaded bits at least energy, and the
/// beamforming then meets the resulting demands.
pub fn solve_separate(inst: &Instance, opts: &SolverOptions) -> Result<SolveReport> {
    let started = Instant::now();
    inst.ensure_valid()?;
    if inst.total_arrivals() == 0.0 {
        return zero_report(inst, Scheme::Separate, opts, started);
    }
    let (kk, n) = (inst.users(), inst.slots());
    let ones = vec![vec![1.0; n]; kk];
    let users = allocate_bits(inst, Restriction::Joint, &ones, false)?;
    let mut bits = users.bits;
    let mut caps = vec![0.0; n];
    for i in 1..n {
        caps[i] = caps[i - 1] + (0..kk).map(|k| bits.offload[k][i - 1]).sum::<f64>();
    }
    if caps[n - 1] > 0.0 {
        let c0 = inst.params.server_coeff();
        let scale = 3.0 * c0 * (caps[n - 1] / n as f64).powi(2);
        let stair = staircase::solve(&caps, |_, price| cubic_minimizer(c0, -price), 0.0, scale)?;
        bits.server = stair.amounts;
    }
    let mut report = finish_report(inst, Scheme::Separate, bits, None, 0, None, opts, started)?;
    if !users.converged {
        report.notes.push("bit allocation stopped before reaching its gap target".into());
    }
    Ok(report)
}
