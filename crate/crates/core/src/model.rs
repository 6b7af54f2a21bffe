//! Domain types: system parameters, channels, task arrivals, primal
//! allocations and dual points.
//!
//! Slots and users are indexed from zero throughout the API; slot `N - 1` is
//! the deadline slot.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Default strict-positivity floor for suffix sums of energy multipliers.
pub const DEFAULT_EPS_LAMBDA: f64 = 1e-12;

/// Physical and system constants of one wireless powered MEC deployment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// AP antenna count.
    #[serde(rename = "M")]
    pub antennas: usize,
    /// Number of users.
    #[serde(rename = "K")]
    pub users: usize,
    /// Number of slots in the horizon.
    #[serde(rename = "N")]
    pub slots: usize,
    /// Slot duration in seconds.
    pub tau: f64,
    /// Offloading bandwidth per user, Hz.
    #[serde(rename = "B")]
    pub bandwidth: f64,
    /// Receiver noise power at the AP, watts.
    pub sigma2: f64,
    /// Server capacitance coefficient.
    pub zeta0: f64,
    /// Server CPU cycles per bit.
    #[serde(rename = "C0")]
    pub server_cycles: f64,
    /// Per-user harvesting efficiency in (0, 1].
    #[serde(rename = "eta_k")]
    pub eta: Vec<f64>,
    /// Per-user capacitance coefficient.
    #[serde(rename = "zeta_k")]
    pub zeta: Vec<f64>,
    /// Per-user CPU cycles per bit.
    #[serde(rename = "C_k")]
    pub cycles: Vec<f64>,
}

impl SystemParams {
    /// Homogeneous users with the given per-user constants.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        antennas: usize,
        users: usize,
        slots: usize,
        tau: f64,
        bandwidth: f64,
        sigma2: f64,
        zeta0: f64,
        server_cycles: f64,
        eta: f64,
        zeta: f64,
        cycles: f64,
    ) -> Self {
        Self {
            antennas,
            users,
            slots,
            tau,
            bandwidth,
            sigma2,
            zeta0,
            server_cycles,
            eta: vec![eta; users],
            zeta: vec![zeta; users],
            cycles: vec![cycles; users],
        }
    }

    /// `ζ_k C_k³ / τ²`: local energy per cubed bit.
    pub fn local_coeff(&self, k: usize) -> f64 {
        self.zeta[k] * self.cycles[k].powi(3) / (self.tau * self.tau)
    }

    /// `ζ_0 C_0³ / τ²`: server energy per cubed bit.
    pub fn server_coeff(&self) -> f64 {
        self.zeta0 * self.server_cycles.powi(3) / (self.tau * self.tau)
    }

    /// Bits per slot at unit spectral efficiency, `τ B`.
    pub fn slot_bits(&self) -> f64 {
        self.tau * self.bandwidth
    }
}

/// Per-slot channels. `h[k][i]` is the downlink vector to user `k` in slot
/// `i`; `g[k][i]` the uplink power gain after MRC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    pub h: Vec<Vec<Vec<Complex64>>>,
    pub g: Vec<Vec<f64>>,
}

/// `A[k][i]`: task input-bits arriving at user `k` at the start of slot `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskArrivals {
    #[serde(rename = "A")]
    pub arrivals: Vec<Vec<f64>>,
}

/// The full problem data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub params: SystemParams,
    pub channels: ChannelRealization,
    pub tasks: TaskArrivals,
}

impl Instance {
    pub fn users(&self) -> usize {
        self.params.users
    }

    pub fn slots(&self) -> usize {
        self.params.slots
    }

    pub fn antennas(&self) -> usize {
        self.params.antennas
    }

    pub fn h(&self, k: usize, i: usize) -> &[Complex64] {
        &self.channels.h[k][i]
    }

    pub fn g(&self, k: usize, i: usize) -> f64 {
        self.channels.g[k][i]
    }

    pub fn arrivals(&self, k: usize, i: usize) -> f64 {
        self.tasks.arrivals[k][i]
    }

    pub fn user_total_arrivals(&self, k: usize) -> f64 {
        self.tasks.arrivals[k].iter().sum()
    }

    pub fn total_arrivals(&self) -> f64 {
        (0..self.users()).map(|k| self.user_total_arrivals(k)).sum()
    }

    /// Bit tolerance `1e-6 · max(1, ΣA)` used for repair and monotonicity checks.
    pub fn bit_tolerance(&self) -> f64 {
        1e-6 * self.total_arrivals().max(1.0)
    }

    /// Parse from JSON, reporting the key path of the first offending field.
    pub fn from_json_str(s: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(s);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::InvalidInstance(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Same instance with every arrival replaced by `f(k, i, A)`.
    pub fn map_arrivals(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for (k, row) in out.tasks.arrivals.iter_mut().enumerate() {
            for (i, a) in row.iter_mut().enumerate() {
                *a = f(k, i, *a);
            }
        }
        out
    }

    /// Fail fast with the first validation violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_instance(self);
        match report.violations.first() {
            None => Ok(()),
            Some(v) => Err(Error::InvalidInstance(v.to_string())),
        }
    }
}

/// Primal decision variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    /// Transmit energy covariance per slot (watts).
    #[serde(rename = "Q", with = "crate::serde_util::cmat_vec")]
    pub q: Vec<CMat>,
    /// Bits executed by the AP server per slot.
    #[serde(rename = "L0")]
    pub server: Vec<f64>,
    /// Bits computed locally, `[k][i]`.
    #[serde(rename = "L")]
    pub local: Vec<Vec<f64>>,
    /// Bits offloaded, `[k][i]`.
    #[serde(rename = "R")]
    pub offload: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn zeros(params: &SystemParams) -> Self {
        let (m, k, n) = (params.antennas, params.users, params.slots);
        Self {
            q: vec![CMat::zeros(m, m); n],
            server: vec![0.0; n],
            local: vec![vec![0.0; n]; k],
            offload: vec![vec![0.0; n]; k],
        }
    }

    pub fn bits(&self) -> BitAllocation {
        BitAllocation {
            server: self.server.clone(),
            local: self.local.clone(),
            offload: self.offload.clone(),
        }
    }
}

/// The bit-valued part of an allocation (everything except `Q`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitAllocation {
    #[serde(rename = "L0")]
    pub server: Vec<f64>,
    #[serde(rename = "L")]
    pub local: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub offload: Vec<Vec<f64>>,
}

impl BitAllocation {
    pub fn zeros(users: usize, slots: usize) -> Self {
        Self {
            server: vec![0.0; slots],
            local: vec![vec![0.0; slots]; users],
            offload: vec![vec![0.0; slots]; users],
        }
    }

    pub fn with_q(self, q: Vec<CMat>) -> Allocation {
        Allocation {
            q,
            server: self.server,
            local: self.local,
            offload: self.offload,
        }
    }
}

/// Lagrange multipliers of the task causality (`mu`), AP causality (`nu`)
/// and energy causality (`lambda`) constraints. The last-slot entries of
/// `mu` and `nu` belong to the deadline equalities and are sign-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualPoint {
    pub lambda: Vec<Vec<f64>>,
    pub mu: Vec<Vec<f64>>,
    pub nu: Vec<f64>,
}

impl DualPoint {
    pub fn zeros(users: usize, slots: usize) -> Self {
        Self {
            lambda: vec![vec![0.0; slots]; users],
            mu: vec![vec![0.0; slots]; users],
            nu: vec![0.0; slots],
        }
    }

    pub fn users(&self) -> usize {
        self.lambda.len()
    }

    pub fn slots(&self) -> usize {
        self.nu.len()
    }

    pub fn check_shape(&self, users: usize, slots: usize) -> Result<()> {
        let ok = self.lambda.len() == users
            && self.mu.len() == users
            && self.nu.len() == slots
            && self.lambda.iter().all(|r| r.len() == slots)
            && self.mu.iter().all(|r| r.len() == slots);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "dual point does not match {users} users x {slots} slots"
            )))
        }
    }

    /// `Σ_{j ≥ i} λ[k][j]` for every `i`.
    pub fn lambda_suffix(&self, k: usize) -> Vec<f64> {
        suffix_sums(&self.lambda[k])
    }

    pub fn mu_suffix(&self, k: usize) -> Vec<f64> {
        suffix_sums(&self.mu[k])
    }

    pub fn nu_suffix(&self) -> Vec<f64> {
        suffix_sums(&self.nu)
    }
}

/// `out[i] = Σ_{j ≥ i} v[j]`.
pub fn suffix_sums(v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    let mut acc = 0.0;
    for i in (0..v.len()).rev() {
        acc += v[i];
        out[i] = acc;
    }
    out
}

/// `out[i] = Σ_{j ≤ i} v[j]`.
pub fn prefix_sums(v: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Dimension,
    Parameter,
    UplinkGain,
    Channel,
    Arrival,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, message: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            message: message.into(),
        });
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Report every broken invariant of an instance. Never fails.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    use ViolationKind::*;
    let mut rep = ValidationReport::default();
    let p = &inst.params;
    let (m, k, n) = (p.antennas, p.users, p.slots);
    if m == 0 || k == 0 || n == 0 {
        rep.push(Dimension, format!("M, K, N must be >= 1 (got M={m}, K={k}, N={n})"));
    }
    for (name, v) in [
        ("tau", p.tau),
        ("B", p.bandwidth),
        ("sigma2", p.sigma2),
        ("zeta0", p.zeta0),
        ("C0", p.server_cycles),
    ] {
        if !positive(v) {
            rep.push(Parameter, format!("parameter {name} must be positive (got {v})"));
        }
    }
    for (name, v) in [("eta_k", &p.eta), ("zeta_k", &p.zeta), ("C_k", &p.cycles)] {
        if v.len() != k {
            rep.push(Dimension, format!("{name} has length {} but K = {k}", v.len()));
        }
    }
    for (idx, &e) in p.eta.iter().enumerate() {
        if !(e.is_finite() && e > 0.0 && e <= 1.0) {
            rep.push(Parameter, format!("eta_k[{idx}] = {e} outside (0, 1]"));
        }
    }
    for (idx, &z) in p.zeta.iter().enumerate() {
        if !positive(z) {
            rep.push(Parameter, format!("zeta_k[{idx}] = {z} must be positive"));
        }
    }
    for (idx, &c) in p.cycles.iter().enumerate() {
        if !positive(c) {
            rep.push(Parameter, format!("C_k[{idx}] = {c} must be positive"));
        }
    }

    let h = &inst.channels.h;
    if h.len() != k {
        rep.push(Dimension, format!("h has {} users but K = {k}", h.len()));
    }
    for (ku, rows) in h.iter().enumerate() {
        if rows.len() != n {
            rep.push(Dimension, format!("h[{ku}] has {} slots but N = {n}", rows.len()));
        }
        for (i, v) in rows.iter().enumerate() {
            if v.len() != m {
                rep.push(Dimension, format!("h[{ku}][{i}] has length {} but M = {m}", v.len()));
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                rep.push(Channel, format!("h[{ku}][{i}] has a non-finite entry"));
            }
        }
    }
    let g = &inst.channels.g;
    if g.len() != k {
        rep.push(Dimension, format!("g has {} users but K = {k}", g.len()));
    }
    for (ku, row) in g.iter().enumerate() {
        if row.len() != n {
            rep.push(Dimension, format!("g[{ku}] has {} slots but N = {n}", row.len()));
        }
        for (i, &gain) in row.iter().enumerate() {
            if !positive(gain) {
                rep.push(UplinkGain, format!("uplink gain nonpositive at g[{ku}][{i}] = {gain}"));
            }
        }
    }
    let a = &inst.tasks.arrivals;
    if a.len() != k {
        rep.push(Dimension, format!("A has {} users but K = {k}", a.len()));
    }
    for (ku, row) in a.iter().enumerate() {
        if row.len() != n {
            rep.push(Dimension, format!("A[{ku}] has {} slots but N = {n}", row.len()));
        }
        for (i, &bits) in row.iter().enumerate() {
            if !(bits.is_finite() && bits >= 0.0) {
                rep.push(Arrival, format!("negative or non-finite arrival A[{ku}][{i}] = {bits}"));
            }
        }
    }
    rep
}

/// `H̄_i = I − Σ_k (Σ_{j ≥ i} λ[k][j]) η_k h[k][i] h[k][i]^H`.
pub fn hbar(inst: &Instance, dual: &DualPoint, i: usize) -> Result<CMat> {
    let n = inst.slots();
    if i >= n {
        return Err(Error::SlotOutOfRange { slot: i, slots: n });
    }
    dual.check_shape(inst.users(), n)?;
    let weights: Vec<f64> = (0..inst.users())
        .map(|k| dual.lambda[k][i..].iter().sum::<f64>() * inst.params.eta[k])
        .collect();
    Ok(hbar_weighted(inst, i, &weights))
}

/// `I − Σ_k w_k h[k][i] h[k][i]^H` for precomputed weights `w_k`.
pub fn hbar_weighted(inst: &Instance, i: usize, weights: &[f64]) -> CMat {
    let m = inst.antennas();
    let mut out = CMat::identity(m, m);
    for (k, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let h = inst.h(k, i);
        for r in 0..m {
            for c in 0..m {
                out[(r, c)] -= h[r] * h[c].conj() * w;
            }
        }
    }
    out
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Scalar-channel instance with `|h|² = h2` and unit uplink gain scale.
    pub fn scalar_instance(users: usize, arrivals: Vec<Vec<f64>>, h2: f64, g: f64) -> Instance {
        let slots = arrivals[0].len();
        let params = SystemParams::uniform(1, users, slots, 0.1, 2e6, 1e-9, 1e-29, 1e3, 0.3, 1e-28, 1e3);
        Instance {
            params,
            channels: ChannelRealization {
                h: vec![vec![vec![Complex64::new(h2.sqrt(), 0.0)]; slots]; users],
                g: vec![vec![g; slots]; users],
            },
            tasks: TaskArrivals { arrivals },
        }
    }
}
