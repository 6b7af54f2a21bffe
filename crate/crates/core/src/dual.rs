//! Lagrange dual of the joint allocation problem: closed-form subproblem
//! minimizers, dual feasibility cuts, dual value and supergradient.
//!
//! Dual points are handled in two forms. [`DualPoint`] is the structured
//! view used by the public API; [`DualContext`] works on a flat vector laid
//! out as `[λ (k·N+i), μ (k·N+i), ν (i)]` and is what the ellipsoid method
//! drives. Restricted schemes drop blocks from the flat vector.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, min_eig_hermitian, CMat};
use crate::model::{suffix_sums, BitAllocation, DualPoint, Instance, DEFAULT_EPS_LAMBDA};

/// Closed-form minimizers of the Lagrangian subproblems. `Q*` is always zero.
pub type SubproblemMinimizers = BitAllocation;

/// `sqrt([−v]⁺ / (3 c))`: the minimizer of `c·x³ + v·x` over `x ≥ 0`.
#[inline]
pub fn cubic_minimizer(coeff: f64, linear: f64) -> f64 {
    if linear >= 0.0 {
        0.0
    } else {
        (-linear / (3.0 * coeff)).sqrt()
    }
}

/// Minimizer over `R ≥ 0` of `w·b·(2^{R/(τB)} − 1) − s·R` with `b = τσ²/g`.
///
/// Returns `τB·log₂(s·B·g / (w·σ²·ln 2))` when that is positive, else 0.
#[inline]
pub fn offload_minimizer(weight: f64, price: f64, gain: f64, tau: f64, bandwidth: f64, sigma2: f64) -> f64 {
    if price <= 0.0 {
        return 0.0;
    }
    let arg = price * bandwidth * gain / (weight * sigma2 * LN_2);
    if arg <= 1.0 {
        0.0
    } else {
        tau * bandwidth * arg.log2()
    }
}

/// Which primal variables the dual is taken over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Restriction {
    /// All variables free.
    Joint,
    /// `R ≡ 0`, `L0 ≡ 0`; the AP block of multipliers disappears.
    LocalOnly,
    /// `L ≡ 0`.
    FullOffload,
}

impl Restriction {
    pub fn has_nu(self) -> bool {
        !matches!(self, Restriction::LocalOnly)
    }

    pub fn allows_local(self) -> bool {
        !matches!(self, Restriction::FullOffload)
    }

    pub fn allows_offload(self) -> bool {
        !matches!(self, Restriction::LocalOnly)
    }
}

/// Constraint family a feasibility cut comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    LambdaSign,
    MuSign,
    NuSign,
    LambdaSuffix,
    Psd,
}

/// Separating hyperplane: every dual-feasible `y` satisfies
/// `direction·(y − x) ≥ depth`, with `depth ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub direction: Vec<f64>,
    pub depth: f64,
    pub kind: CutKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility {
    Feasible,
    Cut(Cut),
}

/// Dual value, minimizers and supergradient at one dual point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualEvaluation {
    pub value: f64,
    pub minimizers: SubproblemMinimizers,
    pub subgradient: Vec<f64>,
}

/// Per-instance constants and scratch space for fast dual evaluation.
#[derive(Debug, Clone)]
pub struct DualContext {
    users: usize,
    slots: usize,
    antennas: usize,
    restriction: Restriction,
    eps_lambda: f64,
    tau: f64,
    bandwidth: f64,
    sigma2: f64,
    server_coeff: f64,
    local_coeff: Vec<f64>,
    /// `τσ²/g[k][i]`, flat `k·N+i`.
    offload_scale: Vec<f64>,
    gain: Vec<f64>,
    eta: Vec<f64>,
    /// `h[k][i]`, flat `(k·N+i)·M + m`.
    channel: Vec<Complex64>,
    arrivals: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl DualContext {
    pub fn new(inst: &Instance, restriction: Restriction, eps_lambda: f64) -> Result<Self> {
        inst.ensure_valid()?;
        let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
        let p = &inst.params;
        let mut channel = Vec::with_capacity(kk * n * m);
        let mut offload_scale = Vec::with_capacity(kk * n);
        let mut gain = Vec::with_capacity(kk * n);
        let mut arrivals = Vec::with_capacity(kk * n);
        for k in 0..kk {
            for i in 0..n {
                channel.extend_from_slice(inst.h(k, i));
                offload_scale.push(p.tau * p.sigma2 / inst.g(k, i));
                gain.push(inst.g(k, i));
                arrivals.push(inst.arrivals(k, i));
            }
        }
        Ok(Self {
            users: kk,
            slots: n,
            antennas: m,
            restriction,
            eps_lambda,
            tau: p.tau,
            bandwidth: p.bandwidth,
            sigma2: p.sigma2,
            server_coeff: p.server_coeff(),
            local_coeff: (0..kk).map(|k| p.local_coeff(k)).collect(),
            offload_scale,
            gain,
            eta: p.eta.clone(),
            channel,
            arrivals,
            scratch: vec![Complex64::new(0.0, 0.0); m * m],
        })
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn restriction(&self) -> Restriction {
        self.restriction
    }

    pub fn eps_lambda(&self) -> f64 {
        self.eps_lambda
    }

    /// Length of the flat dual vector.
    pub fn dim(&self) -> usize {
        2 * self.users * self.slots + if self.restriction.has_nu() { self.slots } else { 0 }
    }

    fn mu_offset(&self) -> usize {
        self.users * self.slots
    }

    fn nu_offset(&self) -> usize {
        2 * self.users * self.slots
    }

    fn h(&self, k: usize, i: usize) -> &[Complex64] {
        let start = (k * self.slots + i) * self.antennas;
        &self.channel[start..start + self.antennas]
    }

    pub fn channel_norm_sqr(&self, k: usize, i: usize) -> f64 {
        self.h(k, i).iter().map(|z| z.norm_sqr()).sum()
    }

    /// Flatten a structured dual point (the AP block is dropped when absent).
    pub fn pack(&self, dual: &DualPoint) -> Result<Vec<f64>> {
        dual.check_shape(self.users, self.slots)?;
        let mut x = Vec::with_capacity(self.dim());
        x.extend(dual.lambda.iter().flatten());
        x.extend(dual.mu.iter().flatten());
        if self.restriction.has_nu() {
            x.extend(&dual.nu);
        }
        Ok(x)
    }

    pub fn unpack(&self, x: &[f64]) -> Result<DualPoint> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("dual vector has length {}, expected {}", x.len(), self.dim())));
        }
        let (kk, n) = (self.users, self.slots);
        let rows = |off: usize| (0..kk).map(|k| x[off + k * n..off + (k + 1) * n].to_vec()).collect();
        Ok(DualPoint {
            lambda: rows(0),
            mu: rows(self.mu_offset()),
            nu: if self.restriction.has_nu() {
                x[self.nu_offset()..].to_vec()
            } else {
                vec![0.0; n]
            },
        })
    }

    /// A strictly feasible starting point: `λ` spread so that every `H̄_i ≻ 0`,
    /// `μ` and `ν` just inside their sign constraints.
    pub fn initial_point(&self) -> Vec<f64> {
        let (kk, n) = (self.users, self.slots);
        let mut x = vec![0.0; self.dim()];
        let shift = self.eps_lambda.max(1e-12);
        for k in 0..kk {
            let hmax = (0..n).map(|i| self.channel_norm_sqr(k, i)).fold(0.0_f64, f64::max);
            let lam = if hmax > 0.0 {
                1.0 / (2.0 * (kk * n) as f64 * self.eta[k] * hmax)
            } else {
                1.0
            };
            for i in 0..n {
                x[k * n + i] = lam.max(self.eps_lambda);
                x[self.mu_offset() + k * n + i] = shift;
            }
        }
        if self.restriction.has_nu() {
            for i in 0..n {
                x[self.nu_offset() + i] = shift;
            }
        }
        x
    }

    /// Upper bound on each `λ[k][j]` implied by the PSD constraints:
    /// `min_{i ≤ j} 1/(η_k ‖h[k][i]‖²)`.
    pub fn lambda_bounds(&self) -> Vec<f64> {
        let (kk, n) = (self.users, self.slots);
        let mut out = vec![0.0; kk * n];
        for k in 0..kk {
            let mut best = f64::INFINITY;
            for j in 0..n {
                let h2 = self.channel_norm_sqr(k, j);
                if h2 > 0.0 {
                    best = best.min(1.0 / (self.eta[k] * h2));
                }
                out[k * n + j] = best;
            }
        }
        out
    }

    /// Largest marginal energy prices that can matter at a dual optimum, per
    /// block: `(user k price bound, AP price bound)`.
    pub fn price_scales(&self) -> (Vec<f64>, f64) {
        let (kk, n) = (self.users, self.slots);
        let lam = self.lambda_bounds();
        let total: f64 = self.arrivals.iter().sum();
        let mut user = Vec::with_capacity(kk);
        for k in 0..kk {
            let a_tot: f64 = self.arrivals[k * n..(k + 1) * n].iter().sum();
            let lam_max = lam[k * n..(k + 1) * n]
                .iter()
                .copied()
                .filter(|v| v.is_finite())
                .fold(0.0_f64, f64::max);
            user.push(3.0 * lam_max * self.local_coeff[k] * a_tot * a_tot);
        }
        (user, 3.0 * self.server_coeff * total * total)
    }

    /// Separating hyperplane for the first violated dual constraint, if any.
    pub fn feasibility_cut(&mut self, x: &[f64]) -> Option<Cut> {
        let (kk, n, m) = (self.users, self.slots, self.antennas);
        let dim = self.dim();
        let unit = |idx: usize, depth: f64, kind: CutKind| {
            let mut d = vec![0.0; dim];
            d[idx] = 1.0;
            Cut { direction: d, depth, kind }
        };
        for idx in 0..kk * n {
            if x[idx] < 0.0 {
                return Some(unit(idx, -x[idx], CutKind::LambdaSign));
            }
        }
        for k in 0..kk {
            for i in 0..n - 1 {
                let idx = self.mu_offset() + k * n + i;
                if x[idx] < 0.0 {
                    return Some(unit(idx, -x[idx], CutKind::MuSign));
                }
            }
        }
        if self.restriction.has_nu() {
            for i in 0..n - 1 {
                let idx = self.nu_offset() + i;
                if x[idx] < 0.0 {
                    return Some(unit(idx, -x[idx], CutKind::NuSign));
                }
            }
        }
        for k in 0..kk {
            let mut acc = 0.0;
            for i in (0..n).rev() {
                acc += x[k * n + i];
                if acc < self.eps_lambda {
                    let mut d = vec![0.0; dim];
                    d[k * n + i..(k + 1) * n].iter_mut().for_each(|v| *v = 1.0);
                    return Some(Cut { direction: d, depth: self.eps_lambda - acc, kind: CutKind::LambdaSuffix });
                }
            }
        }
        let mut suffix = vec![0.0; kk];
        for i in (0..n).rev() {
            for (k, s) in suffix.iter_mut().enumerate() {
                *s += x[k * n + i];
            }
            if self.hbar_is_psd(i, &suffix) {
                continue;
            }
            let hb = self.hbar_matrix(i, &suffix);
            let (min_eig, v) = match min_eig_hermitian(&hb) {
                Ok(r) => r,
                Err(_) => continue,
            };
            if min_eig >= 0.0 && m > 1 {
                continue;
            }
            let mut d = vec![0.0; dim];
            for k in 0..kk {
                let proj: Complex64 = v.iter().zip(self.h(k, i)).map(|(a, b)| a.conj() * b).sum();
                let w = self.eta[k] * proj.norm_sqr();
                d[k * n + i..(k + 1) * n].iter_mut().for_each(|e| *e = -w);
            }
            return Some(Cut { direction: d, depth: (-min_eig).max(0.0), kind: CutKind::Psd });
        }
        None
    }

    fn hbar_matrix(&self, i: usize, suffix: &[f64]) -> CMat {
        let m = self.antennas;
        let mut out = CMat::identity(m, m);
        for (k, &lam) in suffix.iter().enumerate() {
            let w = lam * self.eta[k];
            if w == 0.0 {
                continue;
            }
            let h = self.h(k, i);
            for r in 0..m {
                for c in 0..m {
                    out[(r, c)] -= h[r] * h[c].conj() * w;
                }
            }
        }
        out
    }

    fn hbar_is_psd(&mut self, i: usize, suffix: &[f64]) -> bool {
        let m = self.antennas;
        if m == 1 {
            let s: f64 = suffix
                .iter()
                .enumerate()
                .map(|(k, &lam)| lam * self.eta[k] * self.h(k, i)[0].norm_sqr())
                .sum();
            return 1.0 - s >= 0.0;
        }
        let mut buf = std::mem::take(&mut self.scratch);
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for r in 0..m {
            buf[r * m + r] = Complex64::new(1.0, 0.0);
        }
        for (k, &lam) in suffix.iter().enumerate() {
            let w = lam * self.eta[k];
            let h = self.h(k, i);
            for r in 0..m {
                for c in 0..=r {
                    buf[r * m + c] -= h[r] * h[c].conj() * w;
                }
            }
        }
        let ok = cholesky_in_place(&mut buf, m, 1e-13);
        self.scratch = buf;
        ok
    }

    /// Dual value at `x`, writing the supergradient into `grad`. Assumes `x`
    /// is dual feasible.
    pub fn value_and_supergradient(&self, x: &[f64], grad: &mut [f64], bits: Option<&mut SubproblemMinimizers>) -> f64 {
        let (kk, n) = (self.users, self.slots);
        let has_nu = self.restriction.has_nu();
        let mu_off = self.mu_offset();
        let nu_off = self.nu_offset();
        let mut value = 0.0;

        let mut v_suffix = vec![0.0; n + 1];
        if has_nu {
            for i in (0..n).rev() {
                v_suffix[i] = v_suffix[i + 1] + x[nu_off + i];
            }
        }
        let mut offloaded_per_slot = vec![0.0; n];
        let mut bits = bits;

        for k in 0..kk {
            let mut lam_suffix = 0.0;
            let mut mu_suffix = 0.0;
            let mut lam_s = vec![0.0; n];
            let mut mu_s = vec![0.0; n];
            for i in (0..n).rev() {
                lam_suffix += x[k * n + i];
                mu_suffix += x[mu_off + k * n + i];
                lam_s[i] = lam_suffix;
                mu_s[i] = mu_suffix;
            }
            let mut energy_acc = 0.0;
            let mut bits_acc = 0.0;
            for i in 0..n {
                let idx = k * n + i;
                let lam = lam_s[i];
                let mu = mu_s[i];
                let l = if self.restriction.allows_local() {
                    cubic_minimizer(lam * self.local_coeff[k], mu)
                } else {
                    0.0
                };
                let r = if self.restriction.allows_offload() && i + 1 < n {
                    let price = v_suffix[i + 1] - mu;
                    offload_minimizer(lam, price, self.gain[idx], self.tau, self.bandwidth, self.sigma2)
                } else {
                    0.0
                };
                let e_loc = self.local_coeff[k] * l * l * l;
                let e_off = if r > 0.0 {
                    self.offload_scale[idx] * (r / (self.tau * self.bandwidth) * LN_2).exp_m1()
                } else {
                    0.0
                };
                value += lam * (e_loc + e_off) + mu * (l + r) - v_suffix[i + 1] * r - mu * self.arrivals[idx];
                energy_acc += e_loc + e_off;
                bits_acc += l + r - self.arrivals[idx];
                grad[idx] = energy_acc;
                grad[mu_off + idx] = bits_acc;
                offloaded_per_slot[i] += r;
                if let Some(b) = bits.as_deref_mut() {
                    b.local[k][i] = l;
                    b.offload[k][i] = r;
                }
            }
        }

        if has_nu {
            let mut server_acc = 0.0;
            let mut offload_acc = 0.0;
            for i in 0..n {
                let l0 = cubic_minimizer(self.server_coeff, v_suffix[i]);
                value += self.server_coeff * l0 * l0 * l0 + v_suffix[i] * l0;
                server_acc += l0;
                grad[nu_off + i] = server_acc - offload_acc;
                offload_acc += offloaded_per_slot[i];
                if let Some(b) = bits.as_deref_mut() {
                    b.server[i] = l0;
                }
            }
        } else if let Some(b) = bits {
            b.server.iter_mut().for_each(|v| *v = 0.0);
        }
        value
    }

    /// Full evaluation at a flat dual point.
    pub fn evaluate(&mut self, x: &[f64]) -> Result<DualEvaluation> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!("dual vector has length {}, expected {}", x.len(), self.dim())));
        }
        if let Some(cut) = self.feasibility_cut(x) {
            return Err(Error::DualInfeasible(format!("{:?} constraint violated by {:.3e}", cut.kind, cut.depth)));
        }
        let mut grad = vec![0.0; self.dim()];
        let mut bits = BitAllocation::zeros(self.users, self.slots);
        let value = self.value_and_supergradient(x, &mut grad, Some(&mut bits));
        Ok(DualEvaluation { value, minimizers: bits, subgradient: grad })
    }
}

/// Check the dual domain constraints at a structured point.
pub fn check_dual_feasible(inst: &Instance, dual: &DualPoint) -> Result<Feasibility> {
    check_dual_feasible_with(inst, dual, DEFAULT_EPS_LAMBDA)
}

pub fn check_dual_feasible_with(inst: &Instance, dual: &DualPoint, eps_lambda: f64) -> Result<Feasibility> {
    let mut ctx = DualContext::new(inst, Restriction::Joint, eps_lambda)?;
    let x = ctx.pack(dual)?;
    Ok(match ctx.feasibility_cut(&x) {
        Some(cut) => Feasibility::Cut(cut),
        None => Feasibility::Feasible,
    })
}

fn lambda_suffix_checked(inst: &Instance, dual: &DualPoint, k: usize, i: usize) -> Result<f64> {
    dual.check_shape(inst.users(), inst.slots())?;
    if k >= inst.users() {
        return Err(Error::UserOutOfRange { user: k, users: inst.users() });
    }
    if i >= inst.slots() {
        return Err(Error::SlotOutOfRange { slot: i, slots: inst.slots() });
    }
    let lam: f64 = dual.lambda[k][i..].iter().sum();
    if !(lam >= DEFAULT_EPS_LAMBDA) {
        return Err(Error::DualInfeasible(format!("suffix sum of lambda[{k}] from slot {i} is {lam:.3e}")));
    }
    Ok(lam)
}

/// Server bits in slot `i`: `sqrt(τ²[−Σ_{j≥i} ν_j]⁺ / (3 ζ₀ C₀³))`.
pub fn solve_l0(inst: &Instance, dual: &DualPoint, i: usize) -> Result<f64> {
    dual.check_shape(inst.users(), inst.slots())?;
    if i >= inst.slots() {
        return Err(Error::SlotOutOfRange { slot: i, slots: inst.slots() });
    }
    let v: f64 = dual.nu[i..].iter().sum();
    Ok(cubic_minimizer(inst.params.server_coeff(), v))
}

/// Local bits of user `k` in slot `i`.
pub fn solve_lk(inst: &Instance, dual: &DualPoint, k: usize, i: usize) -> Result<f64> {
    let lam = lambda_suffix_checked(inst, dual, k, i)?;
    let mu: f64 = dual.mu[k][i..].iter().sum();
    Ok(cubic_minimizer(lam * inst.params.local_coeff(k), mu))
}

/// Offloaded bits of user `k` in slot `i`, priced by
/// `Σ_{j>i} ν_j − Σ_{j≥i} μ[k][j]`; zero in the last slot.
pub fn solve_rk(inst: &Instance, dual: &DualPoint, k: usize, i: usize) -> Result<f64> {
    let lam = lambda_suffix_checked(inst, dual, k, i)?;
    if i + 1 == inst.slots() {
        return Ok(0.0);
    }
    let price = dual.nu[i + 1..].iter().sum::<f64>() - dual.mu[k][i..].iter().sum::<f64>();
    let p = &inst.params;
    Ok(offload_minimizer(lam, price, inst.g(k, i), p.tau, p.bandwidth, p.sigma2))
}

/// Evaluate the dual function, its minimizers and a supergradient.
pub fn evaluate(inst: &Instance, dual: &DualPoint) -> Result<DualEvaluation> {
    let mut ctx = DualContext::new(inst, Restriction::Joint, DEFAULT_EPS_LAMBDA)?;
    let x = ctx.pack(dual)?;
    ctx.evaluate(&x)
}

pub fn dual_value(inst: &Instance, dual: &DualPoint) -> Result<f64> {
    evaluate(inst, dual).map(|e| e.value)
}

/// Supergradient for given minimizers, ordered `[λ, μ, ν]` by `(k, i)`.
pub fn dual_subgradient(inst: &Instance, dual: &DualPoint, minimizers: &SubproblemMinimizers) -> Result<Vec<f64>> {
    let (kk, n) = (inst.users(), inst.slots());
    dual.check_shape(kk, n)?;
    if minimizers.server.len() != n
        || minimizers.local.len() != kk
        || minimizers.offload.len() != kk
        || minimizers.local.iter().chain(&minimizers.offload).any(|r| r.len() != n)
    {
        return Err(Error::Shape("minimizers do not match instance".into()));
    }
    let p = &inst.params;
    let mut out = vec![0.0; 2 * kk * n + n];
    for k in 0..kk {
        let mut energy = 0.0;
        let mut bits = 0.0;
        for i in 0..n {
            let (l, r) = (minimizers.local[k][i], minimizers.offload[k][i]);
            energy += p.local_coeff(k) * l.powi(3)
                + p.tau * p.sigma2 / inst.g(k, i) * (r / p.slot_bits() * LN_2).exp_m1();
            bits += l + r - inst.arrivals(k, i);
            out[k * n + i] = energy;
            out[kk * n + k * n + i] = bits;
        }
    }
    let mut server = 0.0;
    let mut offloaded = 0.0;
    for i in 0..n {
        server += minimizers.server[i];
        out[2 * kk * n + i] = server - offloaded;
        offloaded += (0..kk).map(|k| minimizers.offload[k][i]).sum::<f64>();
    }
    Ok(out)
}

/// Lagrangian of the joint problem at `(bits, dual)` with `Q = 0`.
pub fn lagrangian(inst: &Instance, dual: &DualPoint, bits: &BitAllocation) -> f64 {
    let (kk, n) = (inst.users(), inst.slots());
    let p = &inst.params;
    let v = suffix_sums(&dual.nu);
    let mut total: f64 = (0..n).map(|i| p.server_coeff() * bits.server[i].powi(3) + v[i] * bits.server[i]).sum();
    for k in 0..kk {
        let lam = suffix_sums(&dual.lambda[k]);
        let mu = suffix_sums(&dual.mu[k]);
        for i in 0..n {
            let (l, r) = (bits.local[k][i], bits.offload[k][i]);
            let energy = p.local_coeff(k) * l.powi(3) + p.tau * p.sigma2 / inst.g(k, i) * (r / p.slot_bits() * LN_2).exp_m1();
            let v_next = if i + 1 < n { v[i + 1] } else { 0.0 };
            total += lam[i] * energy + mu[i] * (l + r - inst.arrivals(k, i)) - v_next * r;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scalar_instance;
    use crate::model::{ChannelRealization, SystemParams, TaskArrivals};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn random_instance(rng: &mut ChaCha8Rng, users: usize, slots: usize, antennas: usize) -> Instance {
        let params = SystemParams::uniform(antennas, users, slots, 0.1, 2e6, 1e-9, 1e-29, 1e3, 0.3, 1e-28, 1e3);
        let scale = 10f64.powf(-3.2) / 64.0;
        let h = (0..users)
            .map(|_| {
                (0..slots)
                    .map(|_| {
                        (0..antennas)
                            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * scale.sqrt())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let g = (0..users)
            .map(|_| (0..slots).map(|_| scale * rng.gen_range(0.2..2.0)).collect())
            .collect();
        let arrivals = (0..users)
            .map(|_| (0..slots).map(|_| rng.gen_range(1e4..1e5)).collect())
            .collect();
        Instance { params, channels: ChannelRealization { h, g }, tasks: TaskArrivals { arrivals } }
    }

    /// Random point strictly inside the dual domain.
    fn random_feasible(ctx: &mut DualContext, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let (kk, n) = (ctx.users(), ctx.slots());
        let bounds = ctx.lambda_bounds();
        let (user_scale, ap_scale) = ctx.price_scales();
        loop {
            let mut x = vec![0.0; ctx.dim()];
            for k in 0..kk {
                for i in 0..n {
                    x[k * n + i] = rng.gen_range(0.0..1.0) * bounds[k * n + i] / (kk * n) as f64;
                    let s = user_scale[k] * 1e-2;
                    x[kk * n + k * n + i] = if i + 1 < n { rng.gen_range(0.0..s) } else { rng.gen_range(-s..s) };
                }
            }
            if ctx.restriction().has_nu() {
                for i in 0..n {
                    let s = ap_scale * 1e-2;
                    x[2 * kk * n + i] = if i + 1 < n { rng.gen_range(0.0..s) } else { rng.gen_range(-s..s) };
                }
            }
            if ctx.feasibility_cut(&x).is_none() {
                return x;
            }
        }
    }

    fn fixture_dual(users: usize, slots: usize) -> DualPoint {
        DualPoint::zeros(users, slots)
    }

    #[test]
    fn server_closed_form_fixture() {
        let mut inst = scalar_instance(1, vec![vec![0.0]], 1e-4, 1e-6);
        inst.params.zeta0 = 1e-28;
        let mut d = fixture_dual(1, 1);
        d.nu[0] = -3e-7;
        assert!(rel(solve_l0(&inst, &d, 0).unwrap(), 1e5) < 1e-12);
        d.nu[0] = 0.5;
        assert_eq!(solve_l0(&inst, &d, 0).unwrap(), 0.0);
        d.nu[0] = -4.0 * 3e-7;
        assert!(rel(solve_l0(&inst, &d, 0).unwrap(), 2e5) < 1e-12);
    }

    #[test]
    fn local_closed_form_fixture() {
        let inst = scalar_instance(1, vec![vec![0.0]], 1e-4, 1e-6);
        let mut d = fixture_dual(1, 1);
        d.lambda[0][0] = 2.0;
        d.mu[0][0] = -6e-7;
        let l = solve_lk(&inst, &d, 0, 0).unwrap();
        assert!(rel(l, 1e5) < 1e-12);
        d.lambda[0][0] = 4.0;
        assert!(rel(solve_lk(&inst, &d, 0, 0).unwrap(), l / 2f64.sqrt()) < 1e-12);
        d.mu[0][0] = 1.0;
        assert_eq!(solve_lk(&inst, &d, 0, 0).unwrap(), 0.0);
        d.lambda[0][0] = 0.0;
        assert!(solve_lk(&inst, &d, 0, 0).is_err());
    }

    #[test]
    fn offload_closed_form_stationarity() {
        // log argument 4 → 2 spectral bits per Hz per slot.
        let r = offload_minimizer(1.0, 4.0 * 1e-9 * LN_2 / (2e6 * 1e-6), 1e-6, 0.1, 2e6, 1e-9);
        assert!(rel(r, 4e5) < 1e-12);
        assert_eq!(offload_minimizer(1.0, 0.0, 1e-6, 0.1, 2e6, 1e-9), 0.0);
        let small = offload_minimizer(1.0, 4.0 * 1e-9 * LN_2 / (2e6 * 1e-6), 1e-6 / 8.0, 0.1, 2e6, 1e-9);
        assert_eq!(small, 0.0);
        // derivative of w·b(2^{R/τB}−1) − sR vanishes at the minimizer
        let (w, s, g) = (3.0, 2e-8, 1e-5);
        let r = offload_minimizer(w, s, g, 0.1, 2e6, 1e-9);
        let deriv = w * 1e-9 * LN_2 / (g * 2e6) * (r / 2e5).exp2() - s;
        assert!(deriv.abs() < 1e-12 * s);
    }

    #[test]
    fn rk_is_zero_in_last_slot() {
        let inst = scalar_instance(1, vec![vec![1.0, 1.0]], 1e-4, 1e-6);
        let mut d = fixture_dual(1, 2);
        d.lambda[0] = vec![1.0, 1.0];
        d.mu[0] = vec![0.0, -1.0];
        assert_eq!(solve_rk(&inst, &d, 0, 1).unwrap(), 0.0);
        assert!(solve_rk(&inst, &d, 0, 0).unwrap() > 0.0);
    }

    #[test]
    fn zero_tasks_and_nonnegative_prices_give_zero_value() {
        let inst = scalar_instance(2, vec![vec![0.0; 3]; 2], 1e-4, 1e-6);
        let mut d = DualPoint::zeros(2, 3);
        for k in 0..2 {
            d.lambda[k] = vec![1.0; 3];
            d.mu[k] = vec![0.5; 3];
        }
        d.nu = vec![0.1; 3];
        let ev = evaluate(&inst, &d).unwrap();
        assert_eq!(ev.value, 0.0);
        assert!(ev.subgradient.iter().all(|&s| s == 0.0));
        assert_eq!(ev.subgradient.len(), 2 * 2 * 3 + 3);
    }

    #[test]
    fn feasibility_fixtures() {
        let inst = scalar_instance(1, vec![vec![0.0]], 1e-4, 1e-6);
        let mut d = DualPoint::zeros(1, 1);
        d.lambda[0][0] = 1e5 / 3.0;
        assert_eq!(check_dual_feasible(&inst, &d).unwrap(), Feasibility::Feasible);
        d.lambda[0][0] = 3.4e4;
        match check_dual_feasible(&inst, &d).unwrap() {
            Feasibility::Cut(c) => {
                assert_eq!(c.kind, CutKind::Psd);
                assert!(c.direction[0] < 0.0);
            }
            other => panic!("expected PSD cut, got {other:?}"),
        }
        d.lambda[0][0] = -1.0;
        match check_dual_feasible(&inst, &d).unwrap() {
            Feasibility::Cut(c) => {
                assert_eq!(c.kind, CutKind::LambdaSign);
                assert_eq!(c.direction[0], 1.0);
            }
            other => panic!("expected sign cut, got {other:?}"),
        }
        let tiny = scalar_instance(2, vec![vec![0.0; 3]; 2], 1e-20, 1e-6);
        let mut d = DualPoint::zeros(2, 3);
        for k in 0..2 {
            d.lambda[k] = vec![DEFAULT_EPS_LAMBDA * 1.0001; 3];
        }
        assert_eq!(check_dual_feasible(&tiny, &d).unwrap(), Feasibility::Feasible);
    }

    #[test]
    fn multi_antenna_psd_cut_separates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let inst = random_instance(&mut rng, 2, 3, 2);
        let mut ctx = DualContext::new(&inst, Restriction::Joint, DEFAULT_EPS_LAMBDA).unwrap();
        let mut x = ctx.initial_point();
        assert!(ctx.feasibility_cut(&x).is_none());
        for v in x[..6].iter_mut() {
            *v *= 1e3;
        }
        let cut = ctx.feasibility_cut(&x).expect("scaled λ must be infeasible");
        assert_eq!(cut.kind, CutKind::Psd);
        // the initial point lies on the feasible side
        let y = ctx.initial_point();
        let lhs: f64 = cut.direction.iter().zip(y.iter().zip(&x)).map(|(d, (a, b))| d * (a - b)).sum();
        assert!(lhs >= cut.depth);
    }

    #[test]
    fn minimizers_beat_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let inst = random_instance(&mut rng, 2, 4, 1);
            let mut ctx = DualContext::new(&inst, Restriction::Joint, DEFAULT_EPS_LAMBDA).unwrap();
            let x = random_feasible(&mut ctx, &mut rng);
            let dual = ctx.unpack(&x).unwrap();
            let ev = ctx.evaluate(&x).unwrap();
            let base = lagrangian(&inst, &dual, &ev.minimizers);
            assert!(rel(base, ev.value) < 1e-10);
            let probe = |f: &dyn Fn(&mut BitAllocation, f64)| {
                for sign in [-1.0, 1.0] {
                    let mut b = ev.minimizers.clone();
                    f(&mut b, sign);
                    let v = lagrangian(&inst, &dual, &b);
                    assert!(v >= base - 1e-12 * base.abs().max(1.0), "perturbation decreased Lagrangian");
                }
            };
            for k in 0..2 {
                for i in 0..4 {
                    probe(&|b, s| b.local[k][i] = (b.local[k][i] * (1.0 + s * 1e-3)).max(0.0) + if s > 0.0 { 1.0 } else { 0.0 });
                    if i < 3 {
                        probe(&|b, s| b.offload[k][i] = (b.offload[k][i] * (1.0 + s * 1e-3)).max(0.0) + if s > 0.0 { 1.0 } else { 0.0 });
                    }
                }
            }
            for i in 0..4 {
                probe(&|b, s| b.server[i] = (b.server[i] * (1.0 + s * 1e-3)).max(0.0) + if s > 0.0 { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn supergradient_matches_structured_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let inst = random_instance(&mut rng, 3, 4, 2);
        let mut ctx = DualContext::new(&inst, Restriction::Joint, DEFAULT_EPS_LAMBDA).unwrap();
        let x = random_feasible(&mut ctx, &mut rng);
        let ev = ctx.evaluate(&x).unwrap();
        let dual = ctx.unpack(&x).unwrap();
        let s = dual_subgradient(&inst, &dual, &ev.minimizers).unwrap();
        for (a, b) in s.iter().zip(&ev.subgradient) {
            assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn supergradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        for _ in 0..20 {
            let inst = random_instance(&mut rng, 2, 3, 1);
            let mut ctx = DualContext::new(&inst, Restriction::Joint, DEFAULT_EPS_LAMBDA).unwrap();
            let x = random_feasible(&mut ctx, &mut rng);
            let ev = ctx.evaluate(&x).unwrap();
            let dir: Vec<f64> = x.iter().map(|v| v.abs() * rng.gen_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let xp: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
            let xm: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
            if ctx.feasibility_cut(&xp).is_some() || ctx.feasibility_cut(&xm).is_some() {
                continue;
            }
            let fd = (ctx.evaluate(&xp).unwrap().value - ctx.evaluate(&xm).unwrap().value) / (2.0 * h);
            let an: f64 = ev.subgradient.iter().zip(&dir).map(|(s, d)| s * d).sum();
            let scale = ev.subgradient.iter().zip(&dir).map(|(s, d)| (s * d).abs()).sum::<f64>();
            assert!((fd - an).abs() <= 1e-4 * scale.max(1e-300), "fd {fd} vs {an}");
            checked += 1;
        }
        assert!(checked >= 10);
    }

    #[test]
    fn restricted_contexts_drop_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = random_instance(&mut rng, 2, 3, 1);
        let mut lo = DualContext::new(&inst, Restriction::LocalOnly, DEFAULT_EPS_LAMBDA).unwrap();
        assert_eq!(lo.dim(), 12);
        let x = random_feasible(&mut lo, &mut rng);
        let ev = lo.evaluate(&x).unwrap();
        assert!(ev.minimizers.offload.iter().flatten().all(|&r| r == 0.0));
        assert!(ev.minimizers.server.iter().all(|&r| r == 0.0));
        let mut fo = DualContext::new(&inst, Restriction::FullOffload, DEFAULT_EPS_LAMBDA).unwrap();
        let x = random_feasible(&mut fo, &mut rng);
        let ev = fo.evaluate(&x).unwrap();
        assert!(ev.minimizers.local.iter().flatten().all(|&l| l == 0.0));
        let dual = fo.unpack(&x).unwrap();
        assert_eq!(fo.pack(&dual).unwrap(), x);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn dual_is_concave_and_supported(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let inst = random_instance(&mut rng, 2, 3, 2);
            let mut ctx = DualContext::new(&inst, Restriction::Joint, DEFAULT_EPS_LAMBDA).unwrap();
            let x = random_feasible(&mut ctx, &mut rng);
            let y = random_feasible(&mut ctx, &mut rng);
            let ex = ctx.evaluate(&x).unwrap();
            let ey = ctx.evaluate(&y).unwrap();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            let em = ctx.evaluate(&mid).unwrap();
            let tol = 1e-9 * (ex.value.abs() + ey.value.abs()).max(1e-300);
            prop_assert!(em.value >= 0.5 * (ex.value + ey.value) - tol);
            let lin: f64 = ex.subgradient.iter().zip(y.iter().zip(&x)).map(|(s, (b, a))| s * (b - a)).sum();
            prop_assert!(ey.value <= ex.value + lin + 1e-9 * ex.value.abs().max(1e-300));
        }

        #[test]
        fn psd_subproblem_is_nonnegative(lam in 0.0f64..1.0, q in proptest::collection::vec(-1.0f64..1.0, 4)) {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let inst = random_instance(&mut rng, 2, 2, 2);
            let bounds = DualContext::new(&inst, Restriction::Joint, DEFAULT_EPS_LAMBDA).unwrap().lambda_bounds();
            let mut d = DualPoint::zeros(2, 2);
            d.lambda[0][0] = lam * bounds[0] / 2.0;
            d.lambda[1][0] = lam * bounds[2] / 2.0;
            let hb = crate::model::hbar(&inst, &d, 0).unwrap();
            let b = nalgebra::DMatrix::from_fn(2, 2, |r, c| Complex64::new(q[2 * r + c], q[(2 * r + c + 1) % 4]));
            let qm = &b * b.adjoint();
            let tr = crate::linalg::trace_re(&(qm * hb));
            prop_assert!(tr >= -1e-12);
        }
    }
}
