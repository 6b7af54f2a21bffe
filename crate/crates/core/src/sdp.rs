//! Log-barrier interior-point solver for the energy beamforming program
//!
//! ```text
//! minimize    Σ_i τ tr(Q_i)
//! subject to  Σ_{j≤i} τ η_k h_{k,j}^H Q_j h_{k,j} ≥ D_{k,i}   for all k, i
//!             Q_i ⪰ 0
//! ```
//!
//! Each Hermitian `Q_i` is parametrized by `M²` reals (diagonal, then real and
//! imaginary parts of the strict upper triangle). The variables are rescaled
//! so that `Q = α·Q̃` with `Q̃ = I` strictly feasible, constraints are divided
//! by the largest demand, and Newton's method with backtracking follows the
//! central path while the barrier weight grows tenfold per stage.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_in_place, min_eig_hermitian, trace_re, CMat};
use crate::model::Instance;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpOptions {
    /// Target for `m/t` relative to the objective.
    pub gap_rel: f64,
    pub barrier_factor: f64,
    /// Newton decrement threshold `λ²/2` per centering.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self { gap_rel: 1e-10, barrier_factor: 10.0, newton_tol: 1e-12, max_newton: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    /// Newton stalled before reaching the gap target; the last centered
    /// iterate is returned.
    Inaccurate,
}

/// Optimal covariances with the recovered dual multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpSolution {
    #[serde(with = "crate::serde_util::cmat_vec")]
    pub q: Vec<CMat>,
    pub objective: f64,
    /// Multipliers of the cumulative harvest constraints, `[k][i]`.
    pub y: Vec<Vec<f64>>,
    /// PSD dual slacks, one per slot.
    #[serde(with = "crate::serde_util::cmat_vec")]
    pub z: Vec<CMat>,
    /// Duality gap bound `m/t`, relative to the objective.
    pub gap_rel: f64,
    pub newton_steps: usize,
    pub status: SdpStatus,
}

/// KKT residuals of a candidate solution with its multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdpKktReport {
    /// Most negative `harvest − demand`, relative to `max(1, max D)`.
    pub primal_infeasibility: f64,
    /// Smallest eigenvalue over all `Q_i`, relative to `max(1, max tr Q)`.
    pub min_q_eigenvalue: f64,
    /// Smallest eigenvalue over all `Z_i`, relative to `τ`.
    pub min_z_eigenvalue: f64,
    /// Most negative multiplier.
    pub min_multiplier: f64,
    /// `Σ y·slack + Σ tr(Z Q)`, relative to `max(objective, tiny)`.
    pub complementarity: f64,
    /// `max_i ‖τI − Σ y τη h h^H − Z_i‖_F / τ`.
    pub stationarity: f64,
}

impl SdpKktReport {
    /// Largest residual magnitude.
    pub fn max_residual(&self) -> f64 {
        [
            self.primal_infeasibility.max(0.0),
            (-self.min_q_eigenvalue).max(0.0),
            (-self.min_z_eigenvalue).max(0.0),
            (-self.min_multiplier).max(0.0),
            self.complementarity.abs(),
            self.stationarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Sparse Hermitian basis element `Σ coef · e_a e_bᵀ`.
pub(crate) type BasisElem = Vec<(usize, usize, Complex64)>;

pub(crate) fn hermitian_basis(m: usize) -> Vec<BasisElem> {
    let mut out = Vec::with_capacity(m * m);
    let one = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    for a in 0..m {
        out.push(vec![(a, a, one)]);
    }
    for a in 0..m {
        for b in (a + 1)..m {
            out.push(vec![(a, b, one), (b, a, one)]);
        }
    }
    for a in 0..m {
        for b in (a + 1)..m {
            out.push(vec![(a, b, i), (b, a, -i)]);
        }
    }
    out
}

pub(crate) fn to_matrix(basis: &[BasisElem], x: &[f64], m: usize) -> CMat {
    let mut q = CMat::zeros(m, m);
    for (e, &v) in basis.iter().zip(x) {
        for &(a, b, c) in e {
            q[(a, b)] += c * v;
        }
    }
    q
}

/// `ln det Q` when `Q ≻ 0`.
pub(crate) fn log_det(q: &CMat) -> Option<f64> {
    let m = q.nrows();
    let mut buf: Vec<Complex64> = Vec::with_capacity(m * m);
    for r in 0..m {
        for c in 0..m {
            buf.push(q[(r, c)]);
        }
    }
    if !cholesky_in_place(&mut buf, m, 0.0) {
        return None;
    }
    Some((0..m).map(|j| 2.0 * buf[j * m + j].re.ln()).sum())
}

/// Subtract the gradient and add the Hessian of `ln det Q` in basis
/// coordinates starting at `offset`, given `W = Q⁻¹`.
pub(crate) fn add_log_det_terms(basis: &[BasisElem], w: &CMat, offset: usize, g: &mut DVector<f64>, h: &mut DMatrix<f64>) {
    for (a, ea) in basis.iter().enumerate() {
        let tr: Complex64 = ea.iter().map(|&(r, c, co)| co * w[(c, r)]).sum();
        g[offset + a] -= tr.re;
        for (b, eb) in basis.iter().enumerate().skip(a) {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(ra, ca, alpha) in ea {
                for &(rb, cb, beta) in eb {
                    acc += alpha * beta * w[(ca, rb)] * w[(cb, ra)];
                }
            }
            h[(offset + a, offset + b)] += acc.re;
            if b != a {
                h[(offset + b, offset + a)] += acc.re;
            }
        }
    }
}

/// One cumulative harvest constraint in scaled form:
/// `Σ_{j ≤ slot} coeffs[j]·x_j ≥ demand`.
struct Row {
    user: usize,
    slot: usize,
    demand: f64,
    /// Coefficients over the first `(slot+1)·M²` variables.
    coeffs: Vec<f64>,
}

struct Problem {
    m: usize,
    n: usize,
    p: usize,
    basis: Vec<BasisElem>,
    rows: Vec<Row>,
    /// Objective `Σ tr Q̃_j` as a linear functional.
    cost: Vec<f64>,
}

impl Problem {
    fn dim(&self) -> usize {
        self.n * self.p
    }

    fn slacks(&self, x: &[f64]) -> Option<Vec<f64>> {
        let mut out = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            let s: f64 = r.coeffs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>() - r.demand;
            if !(s > 0.0) {
                return None;
            }
            out.push(s);
        }
        Some(out)
    }

    /// Barrier value `t·cᵀx − Σ ln det Q̃_j − Σ ln s`, or `None` outside the domain.
    fn barrier(&self, x: &[f64], t: f64) -> Option<f64> {
        let mut v = t * self.cost.iter().zip(x).map(|(c, v)| c * v).sum::<f64>();
        for j in 0..self.n {
            let q = to_matrix(&self.basis, &x[j * self.p..(j + 1) * self.p], self.m);
            v -= log_det(&q)?;
        }
        for s in self.slacks(x)? {
            v -= s.ln();
        }
        Some(v)
    }

    fn inverses(&self, x: &[f64]) -> Option<Vec<CMat>> {
        (0..self.n)
            .map(|j| {
                let q = to_matrix(&self.basis, &x[j * self.p..(j + 1) * self.p], self.m);
                nalgebra::Cholesky::new(q).map(|c| c.inverse())
            })
            .collect()
    }

    fn gradient_hessian(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let dim = self.dim();
        let p = self.p;
        let mut g = DVector::from_iterator(dim, self.cost.iter().map(|c| t * c));
        let mut h = DMatrix::zeros(dim, dim);
        let winv = self.inverses(x)?;
        for (j, w) in winv.iter().enumerate() {
            add_log_det_terms(&self.basis, w, j * p, &mut g, &mut h);
        }
        let slacks = self.slacks(x)?;
        for (r, s) in self.rows.iter().zip(&slacks) {
            let len = r.coeffs.len();
            for u in 0..len {
                let cu = r.coeffs[u];
                if cu == 0.0 {
                    continue;
                }
                g[u] -= cu / s;
                for v in 0..len {
                    h[(u, v)] += cu * r.coeffs[v] / (s * s);
                }
            }
        }
        Some((g, h))
    }
}

fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
    let dim = g.len();
    // Jacobi scaling keeps the factorization usable deep into the central path.
    let d: Vec<f64> = (0..dim).map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let hs = DMatrix::from_fn(dim, dim, |i, j| h[(i, j)] * d[i] * d[j]);
    let gs = DVector::from_fn(dim, |i, _| -g[i] * d[i]);
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut m = hs.clone();
        for i in 0..dim {
            m[(i, i)] += shift;
        }
        if let Some(ch) = nalgebra::Cholesky::new(m) {
            let ys = ch.solve(&gs);
            return Some(DVector::from_fn(dim, |i, _| ys[i] * d[i]));
        }
        shift = if shift == 0.0 { 1e-14 } else { shift * 100.0 };
    }
    None
}

fn build_problem(inst: &Instance, demands: &[Vec<f64>]) -> Result<Option<(Problem, f64, f64)>> {
    let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
    if demands.len() != kk || demands.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!("demands must be {kk} x {n}")));
    }
    if demands.iter().flatten().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidArgument("demands must be finite and nonnegative".into()));
    }
    let dmax = demands.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
    if dmax == 0.0 {
        return Ok(None);
    }
    let p = &inst.params;
    // cumulative harvest coefficient at Q = I
    let mut alpha: f64 = 0.0;
    for k in 0..kk {
        let mut acc = 0.0;
        for i in 0..n {
            let h2: f64 = inst.h(k, i).iter().map(|z| z.norm_sqr()).sum();
            acc += p.tau * p.eta[k] * h2;
            let d = demands[k][i];
            if d > 0.0 {
                if acc <= 0.0 {
                    return Err(Error::Infeasible(format!(
                        "user {k} needs {d:.3e} J by slot {i} but has no channel energy"
                    )));
                }
                alpha = alpha.max(2.0 * d / acc);
            }
        }
    }
    let basis = hermitian_basis(m);
    let pp = m * m;
    let mut rows = Vec::new();
    for k in 0..kk {
        for i in 0..n {
            let mut coeffs = vec![0.0; (i + 1) * pp];
            for j in 0..=i {
                let h = inst.h(k, j);
                let w = alpha * p.tau * p.eta[k] / dmax;
                for (b, e) in basis.iter().enumerate() {
                    let v: Complex64 = e.iter().map(|&(r, c, co)| co * h[r].conj() * h[c]).sum();
                    coeffs[j * pp + b] = w * v.re;
                }
            }
            if coeffs.iter().all(|&c| c == 0.0) {
                continue;
            }
            rows.push(Row { user: k, slot: i, demand: demands[k][i] / dmax, coeffs });
        }
    }
    let mut cost = vec![0.0; n * pp];
    for j in 0..n {
        for a in 0..m {
            cost[j * pp + a] = 1.0;
        }
    }
    Ok(Some((Problem { m, n, p: pp, basis, rows, cost }, alpha, dmax)))
}

/// Solve the beamforming SDP for cumulative demands `D[k][i]` (joules).
pub fn solve_wpt_sdp(inst: &Instance, demands: &[Vec<f64>]) -> Result<SdpSolution> {
    solve_wpt_sdp_with(inst, demands, &SdpOptions::default())
}

pub fn solve_wpt_sdp_with(inst: &Instance, demands: &[Vec<f64>], opts: &SdpOptions) -> Result<SdpSolution> {
    let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
    let tau = inst.params.tau;
    let Some((prob, alpha, dmax)) = build_problem(inst, demands)? else {
        return Ok(SdpSolution {
            q: vec![CMat::zeros(m, m); n],
            objective: 0.0,
            y: vec![vec![0.0; n]; kk],
            z: vec![CMat::identity(m, m) * Complex64::new(tau, 0.0); n],
            gap_rel: 0.0,
            newton_steps: 0,
            status: SdpStatus::Optimal,
        });
    };
    let dim = prob.dim();
    let mut x = vec![0.0; dim];
    for j in 0..n {
        for a in 0..m {
            x[j * prob.p + a] = 1.0;
        }
    }
    let n_barrier = (n * m + prob.rows.len()) as f64;
    let mut t = n_barrier / (n * m) as f64;
    let mut steps = 0;
    let mut status = SdpStatus::Optimal;

    loop {
        let mut centered = false;
        let mut prev_decrement = f64::INFINITY;
        for _ in 0..opts.max_newton {
            let (g, h) = prob
                .gradient_hessian(&x, t)
                .ok_or_else(|| Error::Numerical("barrier iterate left the domain".into()))?;
            let Some(dx) = newton_direction(&g, &h) else {
                break;
            };
            let decrement = -g.dot(&dx);
            // a small decrement that stopped shrinking is at the rounding floor
            if decrement / 2.0 <= opts.newton_tol || (decrement < 1e-6 && decrement > 0.5 * prev_decrement) {
                centered = true;
                break;
            }
            prev_decrement = decrement;
            let mut step = 1.0;
            let mut moved = false;
            if decrement < 0.1 {
                let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + d).collect();
                if prob.slacks(&cand).is_some() && prob.barrier(&cand, t).is_some() {
                    x = cand;
                    steps += 1;
                    continue;
                }
            }
            let f0 = prob.barrier(&x, t).expect("iterate inside domain");
            for _ in 0..60 {
                let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
                if let Some(f1) = prob.barrier(&cand, t) {
                    if f1 <= f0 - 0.25 * step * decrement {
                        x = cand;
                        moved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            steps += 1;
            if !moved {
                centered = decrement < 1e-6;
                break;
            }
        }
        if !centered {
            status = SdpStatus::Inaccurate;
        }
        let obj: f64 = prob.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        if n_barrier / t <= opts.gap_rel * obj.max(f64::MIN_POSITIVE) || !centered {
            break;
        }
        t *= opts.barrier_factor;
    }

    let obj_scaled: f64 = prob.cost.iter().zip(&x).map(|(c, v)| c * v).sum();
    let slacks = prob.slacks(&x).ok_or_else(|| Error::Numerical("final iterate infeasible".into()))?;
    let scale = Complex64::new(alpha, 0.0);
    let q: Vec<CMat> = (0..n)
        .map(|j| {
            let qm = to_matrix(&prob.basis, &x[j * prob.p..(j + 1) * prob.p], m) * scale;
            (&qm + qm.adjoint()) * Complex64::new(0.5, 0.0)
        })
        .collect();
    let mut y_bar = vec![vec![0.0; n]; kk];
    let mut active = Vec::new();
    let split = (n_barrier / t).sqrt();
    for (r, s) in prob.rows.iter().zip(&slacks) {
        y_bar[r.user][r.slot] = alpha * tau / (dmax * t * s);
        if *s < split {
            active.push((r.user, r.slot));
        }
    }
    let z_bar = dual_slack(inst, &y_bar);
    let mut y = y_bar;
    let mut z = z_bar;
    if let Some(y_pol) = polish_multipliers(inst, &q, &y, &active) {
        let z_pol = dual_slack(inst, &y_pol);
        let before = sdp_kkt_residuals(inst, demands, &q, &y, &z)?.max_residual();
        let after = sdp_kkt_residuals(inst, demands, &q, &y_pol, &z_pol)?.max_residual();
        if after < before {
            y = y_pol;
            z = z_pol;
        }
    }
    let objective = tau * q.iter().map(trace_re).sum::<f64>();
    Ok(SdpSolution {
        q,
        objective,
        y,
        z,
        gap_rel: n_barrier / t / obj_scaled.max(f64::MIN_POSITIVE),
        newton_steps: steps,
        status,
    })
}

/// `Z_j = τI − Σ_k (Σ_{i≥j} y_{k,i}) τ η_k h_{k,j} h_{k,j}^H`.
fn dual_slack(inst: &Instance, y: &[Vec<f64>]) -> Vec<CMat> {
    let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
    let tau = inst.params.tau;
    (0..n)
        .map(|j| {
            let mut zj = CMat::identity(m, m) * Complex64::new(tau, 0.0);
            for k in 0..kk {
                let w: f64 = y[k][j..].iter().sum::<f64>() * tau * inst.params.eta[k];
                let h = inst.h(k, j);
                for a in 0..m {
                    for b in 0..m {
                        zj[(a, b)] -= h[a] * h[b].conj() * w;
                    }
                }
            }
            zj
        })
        .collect()
}

/// Least-squares multipliers on the active rows minimizing `Σ_j ‖Z_j Q_j‖_F²`,
/// lightly regularized toward `y0`.
fn polish_multipliers(inst: &Instance, q: &[CMat], y0: &[Vec<f64>], active: &[(usize, usize)]) -> Option<Vec<Vec<f64>>> {
    if active.is_empty() {
        return None;
    }
    let (n, m) = (inst.slots(), inst.antennas());
    let tau = inst.params.tau;
    let na = active.len();
    let nr = 2 * n * m * m;
    let mut a = DMatrix::<f64>::zeros(nr, na);
    let mut b = DVector::<f64>::zeros(nr);
    for j in 0..n {
        let base = 2 * j * m * m;
        for r in 0..m {
            for c in 0..m {
                let e = q[j][(r, c)] * tau;
                b[base + 2 * (r * m + c)] = e.re;
                b[base + 2 * (r * m + c) + 1] = e.im;
            }
        }
        for (col, &(k, i)) in active.iter().enumerate() {
            if i < j {
                continue;
            }
            let h = inst.h(k, j);
            let w = tau * inst.params.eta[k];
            let hq: Vec<Complex64> = (0..m).map(|c| (0..m).map(|s| h[s].conj() * q[j][(s, c)]).sum()).collect();
            for r in 0..m {
                for c in 0..m {
                    let e = h[r] * hq[c] * w;
                    a[(base + 2 * (r * m + c), col)] = e.re;
                    a[(base + 2 * (r * m + c) + 1, col)] = e.im;
                }
            }
        }
    }
    let mut ata = a.transpose() * &a;
    let mut atb = a.transpose() * &b;
    let diag_max = (0..na).map(|c| ata[(c, c)]).fold(0.0_f64, f64::max);
    if !(diag_max > 0.0) {
        return None;
    }
    let delta = 1e-14 * diag_max;
    for (col, &(k, i)) in active.iter().enumerate() {
        ata[(col, col)] += delta;
        atb[col] += delta * y0[k][i];
    }
    let sol = ata.cholesky()?.solve(&atb);
    let mut y = y0.to_vec();
    for (col, &(k, i)) in active.iter().enumerate() {
        y[k][i] = sol[col].max(0.0);
    }
    Some(y)
}

/// KKT residuals of `(Q, y, Z)` for the beamforming SDP.
pub fn sdp_kkt_residuals(
    inst: &Instance,
    demands: &[Vec<f64>],
    q: &[CMat],
    y: &[Vec<f64>],
    z: &[CMat],
) -> Result<SdpKktReport> {
    let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
    if q.len() != n || z.len() != n || y.len() != kk || demands.len() != kk {
        return Err(Error::Shape("KKT inputs do not match the instance".into()));
    }
    let p = &inst.params;
    let dscale = demands.iter().flatten().fold(1.0_f64, |a, &b| a.max(b));
    let qscale = q.iter().map(trace_re).fold(1.0_f64, f64::max);
    let objective = p.tau * q.iter().map(trace_re).sum::<f64>();

    let mut primal: f64 = 0.0;
    let mut comp = 0.0;
    let mut min_y: f64 = 0.0;
    for k in 0..kk {
        let mut acc = 0.0;
        for i in 0..n {
            acc += p.tau * p.eta[k] * crate::linalg::quad_form(&q[i], inst.h(k, i));
            let slack = acc - demands[k][i];
            primal = primal.max(-slack / dscale);
            comp += y[k][i] * slack;
            min_y = min_y.min(y[k][i]);
        }
    }
    let mut min_q = f64::INFINITY;
    let mut min_z = f64::INFINITY;
    let mut stationarity: f64 = 0.0;
    for j in 0..n {
        min_q = min_q.min(min_eig_hermitian(&q[j])?.0 / qscale);
        min_z = min_z.min(min_eig_hermitian(&z[j])?.0 / p.tau);
        comp += trace_re(&(&z[j] * &q[j]));
        let mut r = CMat::identity(m, m) * Complex64::new(p.tau, 0.0) - &z[j];
        for k in 0..kk {
            let w: f64 = y[k][j..].iter().sum::<f64>() * p.tau * p.eta[k];
            let h = inst.h(k, j);
            for a in 0..m {
                for b in 0..m {
                    r[(a, b)] -= h[a] * h[b].conj() * w;
                }
            }
        }
        stationarity = stationarity.max(r.norm() / p.tau);
    }
    Ok(SdpKktReport {
        primal_infeasibility: primal,
        min_q_eigenvalue: min_q,
        min_z_eigenvalue: min_z,
        min_multiplier: min_y,
        complementarity: if objective > 0.0 { comp / objective } else { comp },
        stationarity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scalar_instance;
    use crate::model::{ChannelRealization, SystemParams, TaskArrivals};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(seed: u64, users: usize, slots: usize, antennas: usize) -> (Instance, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = SystemParams::uniform(antennas, users, slots, 0.1, 2e6, 1e-9, 1e-29, 1e3, 0.3, 1e-28, 1e3);
        let s = (10f64.powf(-3.2) / 64.0).sqrt();
        let h = (0..users)
            .map(|_| {
                (0..slots)
                    .map(|_| (0..antennas).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)) * s).collect())
                    .collect()
            })
            .collect();
        let inst = Instance {
            params,
            channels: ChannelRealization { h, g: vec![vec![1e-6; slots]; users] },
            tasks: TaskArrivals { arrivals: vec![vec![0.0; slots]; users] },
        };
        let demands = (0..users)
            .map(|_| {
                let mut acc = 0.0;
                (0..slots)
                    .map(|_| {
                        acc += rng.gen_range(0.0..2.0);
                        acc
                    })
                    .collect()
            })
            .collect();
        (inst, demands)
    }

    #[test]
    fn zero_demands_give_zero_covariance() {
        let (inst, _) = random_instance(1, 2, 3, 2);
        let sol = solve_wpt_sdp(&inst, &vec![vec![0.0; 3]; 2]).unwrap();
        assert_eq!(sol.objective, 0.0);
        assert!(sol.q.iter().all(|q| q.iter().all(|z| z.norm() == 0.0)));
        let rep = sdp_kkt_residuals(&inst, &vec![vec![0.0; 3]; 2], &sol.q, &sol.y, &sol.z).unwrap();
        assert_eq!(rep.max_residual(), 0.0);
    }

    #[test]
    fn scalar_case_by_hand() {
        let inst = scalar_instance(1, vec![vec![0.0]], 1e-4, 1e-6);
        let d = vec![vec![3e-6]];
        let sol = solve_wpt_sdp(&inst, &d).unwrap();
        assert!((sol.q[0][(0, 0)].re - 1.0).abs() < 1e-6, "{}", sol.q[0][(0, 0)]);
        assert!((sol.objective - 0.1).abs() < 1e-7);
        let rep = sdp_kkt_residuals(&inst, &d, &sol.q, &sol.y, &sol.z).unwrap();
        assert!(rep.max_residual() <= 1e-8, "{rep:?}");
        let doubled: Vec<CMat> = sol.q.iter().map(|q| q * Complex64::new(2.0, 0.0)).collect();
        let bad = sdp_kkt_residuals(&inst, &d, &doubled, &sol.y, &sol.z).unwrap();
        assert!(bad.complementarity > 1e-3);
    }

    #[test]
    fn two_antennas_align_with_channel() {
        let mut inst = scalar_instance(1, vec![vec![0.0]], 1e-4, 1e-6);
        inst.params.antennas = 2;
        inst.channels.h[0][0] = vec![Complex64::new(1e-2, 0.0), Complex64::new(0.0, 0.0)];
        let sol = solve_wpt_sdp(&inst, &[vec![3e-6]]).unwrap();
        assert!((sol.objective - 0.1).abs() < 1e-7);
        let q = &sol.q[0];
        let leak = q[(0, 1)].norm().max(q[(1, 0)].norm()).max(q[(1, 1)].norm());
        assert!(leak <= 1e-8, "leakage {leak}");
    }

    #[test]
    fn unreachable_demand_is_infeasible() {
        let mut inst = scalar_instance(1, vec![vec![0.0, 0.0]], 1e-4, 1e-6);
        inst.channels.h[0][0] = vec![Complex64::new(0.0, 0.0)];
        assert!(matches!(solve_wpt_sdp(&inst, &[vec![1e-6, 1e-6]]), Err(Error::Infeasible(_))));
    }

    #[test]
    fn random_demands_satisfy_kkt() {
        for seed in 0..6 {
            let (inst, d) = random_instance(seed, 3, 4, 2);
            let sol = solve_wpt_sdp(&inst, &d).unwrap();
            let rep = sdp_kkt_residuals(&inst, &d, &sol.q, &sol.y, &sol.z).unwrap();
            assert!(rep.max_residual() <= 1e-6, "seed {seed}: {rep:?}");
            for q in &sol.q {
                let tr = trace_re(q);
                assert!(min_eig_hermitian(q).unwrap().0 >= -1e-10 * tr.max(1e-300));
            }
        }
    }

    #[test]
    fn covariance_lies_in_active_channel_span() {
        for seed in 10..14 {
            let (inst, d) = random_instance(seed, 2, 3, 4);
            let sol = solve_wpt_sdp(&inst, &d).unwrap();
            let ymax = sol.y.iter().flatten().fold(0.0_f64, |a, &b| a.max(b));
            let trmax = sol.q.iter().map(trace_re).fold(0.0_f64, f64::max);
            for j in 0..3 {
                let active: Vec<usize> = (0..2).filter(|&k| sol.y[k][j..].iter().sum::<f64>() > 1e-6 * ymax).collect();
                let q = &sol.q[j];
                let basis = CMat::from_fn(4, active.len(), |r, c| inst.h(active[c], j)[r]);
                let proj = if active.is_empty() {
                    CMat::zeros(4, 4)
                } else {
                    let g = basis.adjoint() * &basis;
                    &basis * g.try_inverse().unwrap() * basis.adjoint()
                };
                let resid = (CMat::identity(4, 4) - proj) * q;
                assert!(resid.norm() <= 1e-6 * trmax, "seed {seed} slot {j}: {}", resid.norm() / trmax);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn objective_monotone_in_demand(seed in 0u64..1000, k in 0usize..2, i in 0usize..3) {
            let (inst, d) = random_instance(seed, 2, 3, 2);
            let base = solve_wpt_sdp(&inst, &d).unwrap().objective;
            let mut up = d.clone();
            let bump = 0.1 * up[k][i].max(1e-3);
            for v in up[k][i..].iter_mut() {
                *v += bump;
            }
            let raised = solve_wpt_sdp(&inst, &up).unwrap().objective;
            prop_assert!(raised >= base * (1.0 - 1e-8));
        }
    }
}
