//! Primal log-barrier method on the full convex program: energy covariances,
//! bit allocation and AP schedule together.
//!
//! Covariances are parametrized as `Q_i = q₀·Q̃_i` with `Q̃_i = I` at the
//! start, bits as `b = s_b·z`, and every energy constraint is divided by the
//! largest starting demand. The cumulative energy rows
//! `Σ_{j≤i} τη h^H Q_j h − Σ_{j≤i} e(L, R) ≥ 0` are convex, so the
//! logarithmic barrier stays self-concordant enough for damped Newton steps.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::allocate::{build, equality_newton, run_barrier, BarrierProblem, Cost, Row, Var};
use crate::dual::Restriction;
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{BitAllocation, Instance};
use crate::sdp::{add_log_det_terms, hermitian_basis, log_det, to_matrix, BasisElem};

const GAP_REL: f64 = 1e-9;
const GAP_FALLBACK: f64 = 1e-6;

/// Jointly optimized bits and covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSolution {
    pub bits: BitAllocation,
    pub q: Vec<CMat>,
    pub objective: f64,
    /// Central-path multipliers of the cumulative energy constraints, `[k][i]`.
    pub lambda: Vec<Vec<f64>>,
    pub newton_steps: usize,
    pub converged: bool,
}

/// Cumulative energy row of one user: linear harvest over the covariance
/// coordinates minus the convex energy of that user's bits.
struct EnergyRow {
    user: usize,
    slot: usize,
    harvest: Vec<f64>,
    spend: Vec<usize>,
}

struct Program<'a> {
    m: usize,
    slots: usize,
    p: usize,
    basis: Vec<BasisElem>,
    /// Objective weight on each diagonal covariance coordinate.
    trace_weight: f64,
    /// Costs of the bit variables: energy for user bits, objective for AP bits.
    costs: Vec<Cost>,
    server: Vec<bool>,
    energy: Vec<EnergyRow>,
    ineq: Vec<&'a Row>,
    eq: Vec<&'a Row>,
}

impl Program<'_> {
    fn offset(&self) -> usize {
        self.slots * self.p
    }

    fn energy_slack(&self, row: &EnergyRow, x: &[f64]) -> f64 {
        let off = self.offset();
        let gain: f64 = row.harvest.iter().zip(x).map(|(c, v)| c * v).sum();
        let spent: f64 = row.spend.iter().map(|&v| self.costs[v].value(x[off + v])).sum();
        gain - spent
    }

    /// All barrier slacks in a fixed order, or `None` outside the domain.
    fn slacks(&self, x: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        let z = &x[self.offset()..];
        if z.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let task: Vec<f64> = self.ineq.iter().map(|r| r.rhs - r.dot(z)).collect();
        let energy: Vec<f64> = self.energy.iter().map(|r| self.energy_slack(r, x)).collect();
        if task.iter().chain(&energy).any(|&v| !(v > 0.0)) {
            return None;
        }
        Some((task, energy))
    }

    fn q_block(&self, x: &[f64], j: usize) -> CMat {
        to_matrix(&self.basis, &x[j * self.p..(j + 1) * self.p], self.m)
    }
}

impl BarrierProblem for Program<'_> {
    fn objective(&self, x: &[f64]) -> f64 {
        let off = self.offset();
        let trace: f64 = (0..self.slots).map(|j| (0..self.m).map(|a| x[j * self.p + a]).sum::<f64>()).sum();
        let server: f64 = (0..self.costs.len())
            .filter(|&v| self.server[v])
            .map(|v| self.costs[v].value(x[off + v]))
            .sum();
        self.trace_weight * trace + server
    }

    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let (task, energy) = self.slacks(x)?;
        let f = self.objective(x);
        if !f.is_finite() {
            return None;
        }
        let mut v = t * f;
        for j in 0..self.slots {
            v -= log_det(&self.q_block(x, j))?;
        }
        v -= x[self.offset()..].iter().map(|z| z.ln()).sum::<f64>();
        v -= task.iter().chain(&energy).map(|s| s.ln()).sum::<f64>();
        Some(v)
    }

    fn newton(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
        let dim = x.len();
        let off = self.offset();
        let (task, energy) = self.slacks(x)?;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        for j in 0..self.slots {
            for a in 0..self.m {
                g[j * self.p + a] += t * self.trace_weight;
            }
            let w = nalgebra::Cholesky::new(self.q_block(x, j))?.inverse();
            add_log_det_terms(&self.basis, &w, j * self.p, &mut g, &mut h);
        }
        for (v, cost) in self.costs.iter().enumerate() {
            let z = x[off + v];
            if self.server[v] {
                g[off + v] += t * cost.d1(z);
                h[(off + v, off + v)] += t * cost.d2(z);
            }
            g[off + v] -= 1.0 / z;
            h[(off + v, off + v)] += 1.0 / (z * z);
        }
        for (row, s) in self.ineq.iter().zip(&task) {
            let inv = 1.0 / s;
            for &(a, ca) in &row.terms {
                g[off + a] += ca * inv;
                for &(b, cb) in &row.terms {
                    h[(off + a, off + b)] += ca * cb * inv * inv;
                }
            }
        }
        let mut grad: Vec<(usize, f64)> = Vec::new();
        for (row, &s) in self.energy.iter().zip(&energy) {
            grad.clear();
            grad.extend(row.harvest.iter().enumerate().filter(|(_, c)| **c != 0.0).map(|(u, &c)| (u, c)));
            grad.extend(row.spend.iter().map(|&v| (off + v, -self.costs[v].d1(x[off + v]))));
            let inv = 1.0 / s;
            for &(a, ca) in &grad {
                g[a] -= ca * inv;
                for &(b, cb) in &grad {
                    h[(a, b)] += ca * cb * inv * inv;
                }
            }
            for &v in &row.spend {
                h[(off + v, off + v)] += self.costs[v].d2(x[off + v]) * inv;
            }
        }
        equality_newton(&h, &g, &self.eq, off)
    }

    fn barrier_size(&self) -> f64 {
        (self.slots * self.m + self.costs.len() + self.ineq.len() + self.energy.len()) as f64
    }

    fn gap_targets(&self) -> (f64, f64) {
        (GAP_REL, GAP_FALLBACK)
    }
}

/// Minimize `Σ τ tr Q_i + Σ c₀L₀³` over covariances and task-feasible bits
/// allowed by `restriction`.
pub fn solve_interior(inst: &Instance, restriction: Restriction) -> Result<InteriorSolution> {
    inst.ensure_valid()?;
    let (kk, n, m) = (inst.users(), inst.slots(), inst.antennas());
    let par = &inst.params;
    let ones = vec![vec![1.0; n]; kk];
    let prob = build(inst, restriction, &ones, true)?;
    let mut out = InteriorSolution {
        bits: BitAllocation::zeros(kk, n),
        q: vec![CMat::zeros(m, m); n],
        objective: 0.0,
        lambda: vec![vec![0.0; n]; kk],
        newton_steps: 0,
        converged: true,
    };
    if prob.vars.is_empty() {
        return Ok(out);
    }
    let bit_scale = (inst.total_arrivals() / prob.vars.len() as f64).max(f64::MIN_POSITIVE);

    // cumulative demands of the start point and the channel energy at Q = I
    let mut demand = vec![vec![0.0; n]; kk];
    let mut spends: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; kk];
    for (v, var) in prob.vars.iter().enumerate() {
        if let Var::Local(k, i) | Var::Offload(k, i) = *var {
            demand[k][i] += prob.costs[v].value(prob.start[v]);
            spends[k][i].push(v);
        }
    }
    let mut q0: f64 = 0.0;
    let mut e0: f64 = 0.0;
    for k in 0..kk {
        let mut cum_d = 0.0;
        let mut cum_h = 0.0;
        for i in 0..n {
            cum_d += demand[k][i];
            cum_h += par.tau * par.eta[k] * inst.h(k, i).iter().map(|z| z.norm_sqr()).sum::<f64>();
            if cum_d > 0.0 {
                if !(cum_h > 0.0) {
                    return Err(Error::Infeasible(format!("user {k} must spend energy by slot {i} but has no channel energy")));
                }
                q0 = q0.max(2.0 * cum_d / cum_h);
                e0 = e0.max(cum_d);
            }
        }
    }
    if !(q0 > 0.0) {
        q0 = 1.0;
        e0 = 1.0;
    }
    let server_start: f64 = prob
        .vars
        .iter()
        .zip(&prob.costs)
        .zip(&prob.start)
        .filter(|((v, _), _)| matches!(v, Var::Server(_)))
        .map(|((_, c), &b)| c.value(b))
        .sum();
    let f0 = par.tau * q0 * (n * m) as f64 + server_start;

    let basis = hermitian_basis(m);
    let pp = m * m;
    let mut energy = Vec::new();
    for k in 0..kk {
        let mut spend = Vec::new();
        let mut harvest = vec![0.0; n * pp];
        for i in 0..n {
            let h = inst.h(k, i);
            let w = q0 * par.tau * par.eta[k] / e0;
            for (b, e) in basis.iter().enumerate() {
                let v: Complex64 = e.iter().map(|&(r, c, co)| co * h[r].conj() * h[c]).sum();
                harvest[i * pp + b] = w * v.re;
            }
            spend.extend_from_slice(&spends[k][i]);
            if !spend.is_empty() {
                energy.push(EnergyRow { user: k, slot: i, harvest: harvest[..(i + 1) * pp].to_vec(), spend: spend.clone() });
            }
        }
    }
    let server: Vec<bool> = prob.vars.iter().map(|v| matches!(v, Var::Server(_))).collect();
    let costs: Vec<Cost> = prob
        .costs
        .iter()
        .zip(&server)
        .map(|(c, &s)| c.scaled(bit_scale, if s { f0 } else { e0 }))
        .collect();
    let scale_row = |r: &Row| Row { terms: r.terms.clone(), rhs: r.rhs / bit_scale };
    let ineq_rows: Vec<Row> = prob.ineq.iter().map(scale_row).collect();
    let eq_rows: Vec<Row> = prob.eq.iter().map(scale_row).collect();
    let program = Program {
        m,
        slots: n,
        p: pp,
        basis,
        trace_weight: par.tau * q0 / f0,
        costs,
        server,
        energy,
        ineq: ineq_rows.iter().collect(),
        eq: eq_rows.iter().collect(),
    };
    let mut x0 = vec![0.0; n * pp];
    for j in 0..n {
        for a in 0..m {
            x0[j * pp + a] = 1.0;
        }
    }
    x0.extend(prob.start.iter().map(|b| b / bit_scale));
    if program.slacks(&x0).is_none() {
        return Err(Error::Numerical("interior start point is not strictly feasible".into()));
    }
    let run = run_barrier(&program, x0, "interior-point")?;
    let x = run.x;
    let off = program.offset();
    for (v, var) in prob.vars.iter().enumerate() {
        let b = x[off + v] * bit_scale;
        match *var {
            Var::Local(k, i) => out.bits.local[k][i] = b,
            Var::Offload(k, i) => out.bits.offload[k][i] = b,
            Var::Server(i) => out.bits.server[i] = b,
        }
    }
    out.q = (0..n).map(|j| program.q_block(&x, j) * Complex64::new(q0, 0.0)).collect();
    out.objective = program.objective(&x) * f0;
    // multipliers 1/(t·s) corrected to first order along the remaining Newton step
    if let (Some((_, slacks)), Some((dx, _))) = (program.slacks(&x), program.newton(&x, run.t)) {
        for (row, s) in program.energy.iter().zip(slacks) {
            let ds: f64 = row.harvest.iter().zip(dx.iter()).map(|(c, d)| c * d).sum::<f64>()
                - row.spend.iter().map(|&v| program.costs[v].d1(x[off + v]) * dx[off + v]).sum::<f64>();
            let y = (1.0 - ds / s).max(0.0) / (run.t * s);
            out.lambda[row.user][row.slot] = y * f0 / e0;
        }
    }
    out.newton_steps = run.steps;
    out.converged = run.converged;
    Ok(out)
}
