//! Energy formulas and constraint residuals of the joint allocation problem.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{ensure_hermitian, quad_form, trace_re, CMat};
use crate::model::{Allocation, Instance};

/// DVFS local computing energy `ζ C³ L³ / τ²`.
pub fn local_energy(zeta: f64, cycles: f64, bits: f64, tau: f64) -> Result<f64> {
    if bits < 0.0 || bits.is_nan() {
        return Err(Error::InvalidArgument(format!("negative bit count {bits}")));
    }
    Ok(zeta * cycles.powi(3) * bits.powi(3) / (tau * tau))
}

/// Offloading energy `(τ σ² / g)(2^{R/(τB)} − 1)`.
pub fn offload_energy(gain: f64, bits: f64, tau: f64, bandwidth: f64, sigma2: f64) -> Result<f64> {
    if !(gain > 0.0) {
        return Err(Error::InvalidArgument(format!("nonpositive channel gain {gain}")));
    }
    if bits < 0.0 || bits.is_nan() {
        return Err(Error::InvalidArgument(format!("negative bit count {bits}")));
    }
    Ok(tau * sigma2 / gain * (bits / (tau * bandwidth) * LN_2).exp_m1())
}

/// Harvested energy `τ η h^H Q h`.
pub fn harvested_energy(q: &CMat, h: &[Complex64], eta: f64, tau: f64) -> Result<f64> {
    ensure_hermitian(q)?;
    if q.nrows() != h.len() {
        return Err(Error::Shape(format!(
            "covariance is {}x{} but channel has length {}",
            q.nrows(),
            q.ncols(),
            h.len()
        )));
    }
    Ok(tau * eta * quad_form(q, h))
}

/// Server computing energy `Σ_i ζ₀ C₀³ L₀ᵢ³ / τ²`.
pub fn server_energy(zeta0: f64, cycles0: f64, server_bits: &[f64], tau: f64) -> Result<f64> {
    server_bits
        .iter()
        .map(|&l| local_energy(zeta0, cycles0, l, tau))
        .sum()
}

/// Per-slot local plus offloading energy of user `k` for the given bits.
pub fn user_slot_energy(inst: &Instance, k: usize, i: usize, local: f64, offload: f64) -> f64 {
    let p = &inst.params;
    let loc = p.local_coeff(k) * local.max(0.0).powi(3);
    let off = p.tau * p.sigma2 / inst.g(k, i) * (offload.max(0.0) / p.slot_bits() * LN_2).exp_m1();
    loc + off
}

/// Cumulative energy demand `D[k][i] = Σ_{j ≤ i}` (local + offloading energy).
pub fn cumulative_demands(inst: &Instance, local: &[Vec<f64>], offload: &[Vec<f64>]) -> Vec<Vec<f64>> {
    (0..inst.users())
        .map(|k| {
            let mut acc = 0.0;
            (0..inst.slots())
                .map(|i| {
                    acc += user_slot_energy(inst, k, i, local[k][i], offload[k][i]);
                    acc
                })
                .collect()
        })
        .collect()
}

/// AP energy: WPT transmit energy plus server computing energy.
pub fn objective(inst: &Instance, alloc: &Allocation) -> f64 {
    let p = &inst.params;
    let wpt: f64 = alloc.q.iter().map(|q| p.tau * trace_re(q)).sum();
    let server: f64 = alloc
        .server
        .iter()
        .map(|&l| p.server_coeff() * l.max(0.0).powi(3))
        .sum();
    wpt + server
}

/// Residuals of every constraint. Causality entries are `≥ 0` when
/// satisfied; deadline entries must vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `Σ_{j≤i} (A − L − R)` for every user and slot.
    pub user_task_causality: Vec<Vec<f64>>,
    /// `Σ_j (A − L − R)` per user.
    pub user_deadline: Vec<f64>,
    /// `Σ_{j<i} Σ_k R − Σ_{j≤i} L0` per slot.
    pub ap_task_causality: Vec<f64>,
    /// `Σ_{j<N} Σ_k R − Σ_j L0`.
    pub ap_deadline: f64,
    /// Cumulative harvested minus cumulative consumed energy, per user and slot.
    pub energy_causality: Vec<Vec<f64>>,
    /// Most negative bit entry (0 when all are nonnegative).
    pub min_bit_entry: f64,
    /// Smallest eigenvalue over all covariance matrices.
    pub min_q_eigenvalue: f64,
    /// `R[k][N−1]` per user.
    pub r_last: Vec<f64>,
    /// Bit scale `max(1, ΣA)`.
    pub bit_scale: f64,
    /// Energy scale: largest cumulative user demand.
    pub energy_scale: f64,
}

/// Tolerances applied by [`ConstraintReport::check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityTolerance {
    /// Relative (to the bit or energy scale) floor for causality slacks.
    pub causality_rel: f64,
    /// Relative (to the bit scale) bound on deadline residuals.
    pub equality_rel: f64,
    /// Relative (to the largest covariance trace) PSD floor.
    pub psd_rel: f64,
}

impl Default for FeasibilityTolerance {
    fn default() -> Self {
        Self {
            causality_rel: 1e-9,
            equality_rel: 1e-9,
            psd_rel: 1e-10,
        }
    }
}

impl ConstraintReport {
    /// All violations beyond tolerance, as human-readable strings.
    pub fn check(&self, tol: &FeasibilityTolerance) -> Vec<String> {
        let mut out = Vec::new();
        let bit_floor = -tol.causality_rel * self.bit_scale;
        let eq_bound = tol.equality_rel * self.bit_scale;
        for (k, row) in self.user_task_causality.iter().enumerate() {
            for (i, &r) in row.iter().enumerate() {
                if r < bit_floor {
                    out.push(format!("user task causality violated at ({k}, {i}): {r:.6e}"));
                }
            }
        }
        for (k, &r) in self.user_deadline.iter().enumerate() {
            if r.abs() > eq_bound {
                out.push(format!("user deadline residual at {k}: {r:.6e}"));
            }
        }
        for (i, &r) in self.ap_task_causality.iter().enumerate() {
            if r < bit_floor {
                out.push(format!("AP task causality violated at {i}: {r:.6e}"));
            }
        }
        if self.ap_deadline.abs() > eq_bound {
            out.push(format!("AP deadline residual {:.6e}", self.ap_deadline));
        }
        let energy_floor = -tol.causality_rel * self.energy_scale.max(f64::MIN_POSITIVE);
        for (k, row) in self.energy_causality.iter().enumerate() {
            for (i, &s) in row.iter().enumerate() {
                if s < energy_floor {
                    out.push(format!("energy causality violated at ({k}, {i}): {s:.6e}"));
                }
            }
        }
        if self.min_bit_entry < bit_floor {
            out.push(format!("negative bit entry {:.6e}", self.min_bit_entry));
        }
        if self.min_q_eigenvalue < -tol.psd_rel * self.energy_scale.max(1.0) {
            out.push(format!("covariance not PSD (min eig {:.6e})", self.min_q_eigenvalue));
        }
        for (k, &r) in self.r_last.iter().enumerate() {
            if r != 0.0 {
                out.push(format!("R[{k}][N-1] = {r:.6e} must be zero"));
            }
        }
        out
    }

    pub fn is_feasible(&self, tol: &FeasibilityTolerance) -> bool {
        self.check(tol).is_empty()
    }
}

/// Evaluate every constraint residual of an allocation.
pub fn residuals(inst: &Instance, alloc: &Allocation) -> Result<ConstraintReport> {
    let (kk, n) = (inst.users(), inst.slots());
    if alloc.q.len() != n
        || alloc.server.len() != n
        || alloc.local.len() != kk
        || alloc.offload.len() != kk
        || alloc.local.iter().chain(&alloc.offload).any(|r| r.len() != n)
    {
        return Err(Error::Shape("allocation does not match instance".into()));
    }
    let p = &inst.params;

    let mut user_task_causality = vec![vec![0.0; n]; kk];
    let mut user_deadline = vec![0.0; kk];
    for k in 0..kk {
        let mut acc = 0.0;
        for i in 0..n {
            acc += inst.arrivals(k, i) - alloc.local[k][i] - alloc.offload[k][i];
            user_task_causality[k][i] = acc;
        }
        user_deadline[k] = acc;
    }

    let mut ap_task_causality = vec![0.0; n];
    let mut offloaded = 0.0;
    let mut executed = 0.0;
    for i in 0..n {
        executed += alloc.server[i];
        ap_task_causality[i] = offloaded - executed;
        offloaded += (0..kk).map(|k| alloc.offload[k][i]).sum::<f64>();
    }
    let offloaded_before_last: f64 = (0..kk)
        .map(|k| alloc.offload[k][..n - 1].iter().sum::<f64>())
        .sum();
    let ap_deadline = offloaded_before_last - alloc.server.iter().sum::<f64>();

    let demands = cumulative_demands(inst, &alloc.local, &alloc.offload);
    let mut energy_causality = vec![vec![0.0; n]; kk];
    for k in 0..kk {
        let mut harvested = 0.0;
        for i in 0..n {
            harvested += harvested_energy(&alloc.q[i], inst.h(k, i), p.eta[k], p.tau)?;
            energy_causality[k][i] = harvested - demands[k][i];
        }
    }
    let energy_scale = demands
        .iter()
        .flat_map(|r| r.iter().copied())
        .fold(0.0_f64, f64::max);

    let min_bit_entry = alloc
        .server
        .iter()
        .chain(alloc.local.iter().flatten())
        .chain(alloc.offload.iter().flatten())
        .fold(0.0_f64, |a, &b| a.min(b));
    let mut min_q_eigenvalue = f64::INFINITY;
    for q in &alloc.q {
        let (v, _) = crate::linalg::min_eig_hermitian(q)?;
        min_q_eigenvalue = min_q_eigenvalue.min(v);
    }

    Ok(ConstraintReport {
        user_task_causality,
        user_deadline,
        ap_task_causality,
        ap_deadline,
        energy_causality,
        min_bit_entry,
        min_q_eigenvalue,
        r_last: alloc.offload.iter().map(|r| r[n - 1]).collect(),
        bit_scale: inst.total_arrivals().max(1.0),
        energy_scale,
    })
}
