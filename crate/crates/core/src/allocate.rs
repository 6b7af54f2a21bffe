//! Exact bit allocation for fixed per-slot energy weights: a barrier method
//! over the task-causality polytopes of the users and the AP.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, DVector};

use crate::dual::Restriction;
use crate::error::{Error, Result};
use crate::model::{BitAllocation, Instance};

const GAP_REL: f64 = 1e-10;
/// Gap at which a failed centering still counts as converged.
const GAP_FALLBACK: f64 = 1e-8;
const BARRIER_FACTOR: f64 = 20.0;
const MAX_NEWTON: usize = 50;
const NEWTON_TOL: f64 = 1e-12;

/// Minimizer of `Σ w·(local + offload energy) + Σ c₀L₀³` over task-feasible bits,
/// with the multipliers of the task-causality constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedAllocation {
    pub bits: BitAllocation,
    /// User task-causality multipliers, `[k][i]`; slot `N−1` holds the deadline.
    pub mu: Vec<Vec<f64>>,
    /// AP task-causality multipliers; slot `N−1` holds the deadline.
    pub nu: Vec<f64>,
    pub objective: f64,
    pub newton_steps: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Cost {
    /// `c z³`
    Cubic(f64),
    /// `c (e^{r z} − 1)`
    Exp(f64, f64),
}

impl Cost {
    pub(crate) fn value(self, z: f64) -> f64 {
        match self {
            Cost::Cubic(c) => c * z * z * z,
            Cost::Exp(c, r) => c * (r * z).exp_m1(),
        }
    }

    pub(crate) fn d1(self, z: f64) -> f64 {
        match self {
            Cost::Cubic(c) => 3.0 * c * z * z,
            Cost::Exp(c, r) => c * r * (r * z).exp(),
        }
    }

    pub(crate) fn d2(self, z: f64) -> f64 {
        match self {
            Cost::Cubic(c) => 6.0 * c * z,
            Cost::Exp(c, r) => c * r * r * (r * z).exp(),
        }
    }

    pub(crate) fn scaled(self, bits: f64, value: f64) -> Cost {
        match self {
            Cost::Cubic(c) => Cost::Cubic(c * bits.powi(3) / value),
            Cost::Exp(c, r) => Cost::Exp(c / value, r * bits),
        }
    }
}

/// Sparse row `Σ coef·z ≤ rhs` (or `=`).
#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub(crate) terms: Vec<(usize, f64)>,
    pub(crate) rhs: f64,
}

impl Row {
    pub(crate) fn dot(&self, z: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, c)| c * z[j]).sum()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Var {
    Local(usize, usize),
    Offload(usize, usize),
    Server(usize),
}

pub(crate) struct Problem {
    pub(crate) vars: Vec<Var>,
    pub(crate) costs: Vec<Cost>,
    pub(crate) ineq: Vec<Row>,
    pub(crate) eq: Vec<Row>,
    pub(crate) start: Vec<f64>,
}

/// First slot with arrivals and the last slot that may still process bits.
fn user_window(inst: &Instance, restriction: Restriction, k: usize) -> Result<Option<(usize, usize)>> {
    let n = inst.slots();
    let Some(first) = (0..n).find(|&i| inst.arrivals(k, i) > 0.0) else {
        return Ok(None);
    };
    let last = if restriction.allows_local() { n - 1 } else { n.saturating_sub(2) };
    if !restriction.allows_local() && (n < 2 || (first..n).any(|i| i > last && inst.arrivals(k, i) > 0.0)) {
        return Err(Error::Infeasible(format!("user {k} has bits that cannot be offloaded before the deadline")));
    }
    Ok(Some((first, last)))
}

/// Spread each arrival evenly over the slots from its arrival to `last`.
fn lagged_schedule(arrivals: &[f64], first: usize, last: usize) -> Vec<f64> {
    let mut out = vec![0.0; arrivals.len()];
    for j in first..=last {
        let share = arrivals[j] / (last - j + 1) as f64;
        for v in &mut out[j..=last] {
            *v += share;
        }
    }
    out
}

pub(crate) fn build(inst: &Instance, restriction: Restriction, weights: &[Vec<f64>], with_server: bool) -> Result<Problem> {
    let (kk, n) = (inst.users(), inst.slots());
    let p = &inst.params;
    let rate = LN_2 / p.slot_bits();
    let mut vars = Vec::new();
    let mut costs = Vec::new();
    let mut start = Vec::new();
    let mut ineq = Vec::new();
    let mut eq = Vec::new();
    // per slot, indices of offload variables for the AP rows
    let mut offload_at: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut sent = vec![0.0; n];

    for k in 0..kk {
        let Some((first, last)) = user_window(inst, restriction, k)? else { continue };
        let arrivals: Vec<f64> = (0..n).map(|i| inst.arrivals(k, i)).collect();
        let plan = lagged_schedule(&arrivals, first, last);
        let mut slot_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in first..=last {
            let has_local = restriction.allows_local();
            let has_offload = restriction.allows_offload() && i + 1 < n;
            let parts = (has_local as usize + has_offload as usize) as f64;
            if has_local {
                slot_vars[i].push(vars.len());
                vars.push(Var::Local(k, i));
                costs.push(Cost::Cubic(weights[k][i] * p.local_coeff(k)));
                start.push(plan[i] / parts);
            }
            if has_offload {
                slot_vars[i].push(vars.len());
                offload_at[i].push(vars.len());
                vars.push(Var::Offload(k, i));
                costs.push(Cost::Exp(weights[k][i] * p.tau * p.sigma2 / inst.g(k, i), rate));
                start.push(plan[i] / parts);
                sent[i] += plan[i] / parts;
            }
        }
        let mut terms = Vec::new();
        let mut cum = arrivals[..first].iter().sum::<f64>();
        for i in first..=last {
            cum += arrivals[i];
            terms.extend(slot_vars[i].iter().map(|&j| (j, 1.0)));
            if i < last {
                ineq.push(Row { terms: terms.clone(), rhs: cum });
            }
        }
        let total: f64 = arrivals.iter().sum();
        eq.push(Row { terms, rhs: total });
    }

    if with_server && restriction.has_nu() {
        if let Some(first_send) = (0..n).find(|&i| !offload_at[i].is_empty()) {
            let first = first_send + 1;
            let incoming: Vec<f64> = (0..n).map(|i| if i >= 1 { sent[i - 1] } else { 0.0 }).collect();
            let plan = lagged_schedule(&incoming, first, n - 1);
            let c0 = p.server_coeff();
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for i in first..n {
                terms.extend(offload_at[i - 1].iter().map(|&j| (j, -1.0)));
                terms.push((vars.len(), 1.0));
                vars.push(Var::Server(i));
                costs.push(Cost::Cubic(c0));
                start.push(plan[i]);
                if i + 1 < n {
                    ineq.push(Row { terms: terms.clone(), rhs: 0.0 });
                }
            }
            eq.push(Row { terms, rhs: 0.0 });
        }
    }
    Ok(Problem { vars, costs, ineq, eq, start })
}

/// Factor `H` with Jacobi scaling, retrying with a growing diagonal shift.
pub(crate) fn factor(h: &DMatrix<f64>) -> Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, Vec<f64>)> {
    let dim = h.nrows();
    let d: Vec<f64> = (0..dim).map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
    let hs = DMatrix::from_fn(dim, dim, |i, j| h[(i, j)] * d[i] * d[j]);
    let mut shift = 0.0;
    for _ in 0..8 {
        let mut m = hs.clone();
        for i in 0..dim {
            m[(i, i)] += shift;
        }
        if let Some(ch) = nalgebra::Cholesky::new(m) {
            return Some((ch, d));
        }
        shift = if shift == 0.0 { 1e-14 } else { shift * 100.0 };
    }
    None
}

pub(crate) fn solve_factored(f: &(nalgebra::Cholesky<f64, nalgebra::Dyn>, Vec<f64>), rhs: &DVector<f64>) -> DVector<f64> {
    let (ch, d) = f;
    let scaled = DVector::from_fn(rhs.len(), |i, _| rhs[i] * d[i]);
    let y = ch.solve(&scaled);
    DVector::from_fn(rhs.len(), |i, _| y[i] * d[i])
}

struct Barrier<'a> {
    costs: &'a [Cost],
    ineq: Vec<&'a Row>,
    eq: Vec<&'a Row>,
}

impl Barrier<'_> {
    fn slacks(&self, z: &[f64]) -> Option<Vec<f64>> {
        if z.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let s: Vec<f64> = self.ineq.iter().map(|r| r.rhs - r.dot(z)).collect();
        if s.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        Some(s)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        self.costs.iter().zip(z).map(|(c, &v)| c.value(v)).sum()
    }

    fn value(&self, z: &[f64], t: f64) -> Option<f64> {
        let s = self.slacks(z)?;
        let f = self.objective(z);
        if !f.is_finite() {
            return None;
        }
        Some(t * f - z.iter().map(|v| v.ln()).sum::<f64>() - s.iter().map(|v| v.ln()).sum::<f64>())
    }

    /// Newton step on the equality-constrained barrier and its decrement.
    fn newton(&self, z: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
        let dim = z.len();
        let slacks = self.slacks(z)?;
        let mut g = DVector::from_fn(dim, |j, _| t * self.costs[j].d1(z[j]) - 1.0 / z[j]);
        let mut h = DMatrix::from_fn(dim, dim, |i, j| if i == j { t * self.costs[i].d2(z[i]) + 1.0 / (z[i] * z[i]) } else { 0.0 });
        for (row, s) in self.ineq.iter().zip(&slacks) {
            let inv = 1.0 / s;
            for &(a, ca) in &row.terms {
                g[a] += ca * inv;
                for &(b, cb) in &row.terms {
                    h[(a, b)] += ca * cb * inv * inv;
                }
            }
        }
        equality_newton(&h, &g, &self.eq, 0)
    }
}

impl BarrierProblem for Barrier<'_> {
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        Barrier::value(self, x, t)
    }

    fn objective(&self, x: &[f64]) -> f64 {
        Barrier::objective(self, x)
    }

    fn newton(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, f64)> {
        Barrier::newton(self, x, t)
    }

    fn barrier_size(&self) -> f64 {
        (self.costs.len() + self.ineq.len()) as f64
    }
}

/// A self-concordant barrier problem `min t·f(x) + φ(x)` with equality rows
/// kept by the Newton steps.
pub(crate) trait BarrierProblem {
    /// `t·f(x) + φ(x)`, or `None` outside the domain.
    fn value(&self, x: &[f64], t: f64) -> Option<f64>;
    fn objective(&self, x: &[f64]) -> f64;
    /// Newton step and decrement `λ²`.
    fn newton(&self, x: &[f64], t: f64) -> Option<(DVector<f64>, f64)>;
    /// Barrier parameter (number of log terms).
    fn barrier_size(&self) -> f64;
    /// Relative gap target and the gap at which a failed centering still
    /// counts as converged.
    fn gap_targets(&self) -> (f64, f64) {
        (GAP_REL, GAP_FALLBACK)
    }
}

pub(crate) struct BarrierRun {
    pub(crate) x: Vec<f64>,
    pub(crate) t: f64,
    pub(crate) steps: usize,
    pub(crate) converged: bool,
}

/// Path-following from a strictly feasible `x0` until the gap bound `m/t`
/// falls below `GAP_REL·f`.
pub(crate) fn run_barrier<P: BarrierProblem>(prob: &P, x0: Vec<f64>, what: &str) -> Result<BarrierRun> {
    let mut x = x0;
    let m_barrier = prob.barrier_size();
    let (gap_rel, gap_fallback) = prob.gap_targets();
    let mut t = m_barrier / prob.objective(&x).max(f64::MIN_POSITIVE);
    let mut steps = 0;
    let mut converged = true;
    let mut centered_at: Option<(Vec<f64>, f64)> = None;
    loop {
        let mut centered = false;
        let mut prev = f64::INFINITY;
        for _ in 0..MAX_NEWTON {
            let (dx, decrement) = prob
                .newton(&x, t)
                .ok_or_else(|| Error::Numerical(format!("{what} Newton system is singular")))?;
            // a small decrement that stopped shrinking is at the rounding floor
            if decrement / 2.0 <= NEWTON_TOL || (decrement < 1e-6 && decrement > 0.5 * prev) {
                centered = true;
                break;
            }
            prev = decrement;
            let f0 = prob.value(&x, t).ok_or_else(|| Error::Numerical(format!("{what} iterate left the domain")))?;
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..80 {
                let cand: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
                if let Some(f1) = prob.value(&cand, t) {
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
            match centered_at.take() {
                Some((x_prev, t_prev)) if m_barrier / t_prev <= gap_fallback * prob.objective(&x_prev) => {
                    x = x_prev;
                    t = t_prev;
                }
                _ => converged = false,
            }
            break;
        }
        if m_barrier / t <= gap_rel * prob.objective(&x) {
            break;
        }
        centered_at = Some((x.clone(), t));
        t *= BARRIER_FACTOR;
    }
    Ok(BarrierRun { x, t, steps, converged })
}

/// Solve `[H Eᵀ; E 0][dx; w] = [−g; 0]` through the Schur complement, for
/// equality rows whose indices are shifted by `offset`. Returns `dx` and the
/// Newton decrement `−gᵀdx`.
pub(crate) fn equality_newton(h: &DMatrix<f64>, g: &DVector<f64>, eq: &[&Row], offset: usize) -> Option<(DVector<f64>, f64)> {
    let dim = g.len();
    let f = factor(h)?;
    let hg = solve_factored(&f, g);
    let m = eq.len();
    let mut cols = Vec::with_capacity(m);
    for row in eq {
        let mut e = DVector::zeros(dim);
        for &(j, c) in &row.terms {
            e[offset + j] = c;
        }
        cols.push(solve_factored(&f, &e));
    }
    let mut schur = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    for (a, ra) in eq.iter().enumerate() {
        rhs[a] = -ra.terms.iter().map(|&(j, c)| c * hg[offset + j]).sum::<f64>();
        for b in 0..m {
            schur[(a, b)] = ra.terms.iter().map(|&(j, c)| c * cols[b][offset + j]).sum::<f64>();
        }
    }
    let w = if m == 0 {
        DVector::zeros(0)
    } else {
        let sf = factor(&schur)?;
        solve_factored(&sf, &rhs)
    };
    let mut dx = -hg;
    for (b, col) in cols.iter().enumerate() {
        dx -= col * w[b];
    }
    let decrement = -g.dot(&dx);
    Some((dx, decrement))
}

/// Minimize the weighted energy over task-feasible bits for energy weights
/// `weights[k][i]` (the suffix sums of the energy multipliers). With
/// `with_server` false the AP schedule is left empty and unconstrained.
pub fn allocate_bits(inst: &Instance, restriction: Restriction, weights: &[Vec<f64>], with_server: bool) -> Result<WeightedAllocation> {
    let (kk, n) = (inst.users(), inst.slots());
    if weights.len() != kk || weights.iter().any(|r| r.len() != n) {
        return Err(Error::Shape(format!("weights must be {kk} x {n}")));
    }
    if weights.iter().flatten().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("energy weights must be finite and nonnegative".into()));
    }
    let prob = build(inst, restriction, weights, with_server)?;
    let mut result = WeightedAllocation {
        bits: BitAllocation::zeros(kk, n),
        mu: vec![vec![0.0; n]; kk],
        nu: vec![0.0; n],
        objective: 0.0,
        newton_steps: 0,
        converged: true,
    };
    if prob.vars.is_empty() {
        return Ok(result);
    }

    let bit_scale = (inst.total_arrivals() / prob.vars.len() as f64).max(f64::MIN_POSITIVE);
    let raw_start: f64 = prob.costs.iter().zip(&prob.start).map(|(c, &v)| c.value(v)).sum();
    let value_scale = if raw_start > 0.0 && raw_start.is_finite() { raw_start } else { 1.0 };
    let costs: Vec<Cost> = prob.costs.iter().map(|c| c.scaled(bit_scale, value_scale)).collect();
    let scale_row = |r: &Row| Row { terms: r.terms.clone(), rhs: r.rhs / bit_scale };
    let ineq_rows: Vec<Row> = prob.ineq.iter().map(scale_row).collect();
    let eq_rows: Vec<Row> = prob.eq.iter().map(scale_row).collect();
    let barrier = Barrier { costs: &costs, ineq: ineq_rows.iter().collect(), eq: eq_rows.iter().collect() };
    let z: Vec<f64> = prob.start.iter().map(|v| v / bit_scale).collect();
    if barrier.slacks(&z).is_none() {
        return Err(Error::Numerical("allocation start point is not strictly feasible".into()));
    }

    let run = run_barrier(&barrier, z, "allocation")?;
    let (z, t) = (run.x, run.t);
    result.converged = run.converged;
    let steps = run.steps;

    let to_price = value_scale / bit_scale;
    let mut local_at = vec![vec![None; n]; kk];
    let mut offload_at = vec![vec![None; n]; kk];
    let mut server_at = vec![None; n];
    for (idx, (var, &v)) in prob.vars.iter().zip(&z).enumerate() {
        let bits = v * bit_scale;
        match *var {
            Var::Local(k, i) => {
                result.bits.local[k][i] = bits;
                local_at[k][i] = Some(idx);
            }
            Var::Offload(k, i) => {
                result.bits.offload[k][i] = bits;
                offload_at[k][i] = Some(idx);
            }
            Var::Server(i) => {
                result.bits.server[i] = bits;
                server_at[i] = Some(idx);
            }
        }
    }
    // marginal price of a variable: cost slope minus its bound multiplier
    let slope = |idx: usize| prob.costs[idx].d1(z[idx] * bit_scale) - to_price / (t * z[idx]);

    let mut v_suffix = vec![0.0; n + 1];
    for i in 0..n {
        if let Some(idx) = server_at[i] {
            v_suffix[i] = -slope(idx);
        }
    }
    monotone_suffix(&mut v_suffix);
    for i in 0..n {
        result.nu[i] = v_suffix[i] - v_suffix[i + 1];
    }
    for k in 0..kk {
        let mut m_suffix = vec![0.0; n + 1];
        let mut last_set = None;
        for i in 0..n {
            let from_local = local_at[k][i].map(|idx| (z[idx], -slope(idx)));
            let from_offload = offload_at[k][i].map(|idx| (z[idx], v_suffix[i + 1] - slope(idx)));
            let pick = match (from_local, from_offload) {
                (Some(a), Some(b)) => Some(if a.0 >= b.0 { a.1 } else { b.1 }),
                (a, b) => a.or(b).map(|x| x.1),
            };
            if let Some(m) = pick {
                m_suffix[i] = m;
                last_set = Some(i);
            } else if let Some(prev) = last_set {
                m_suffix[i] = m_suffix[prev];
            }
        }
        monotone_suffix(&mut m_suffix);
        for i in 0..n {
            result.mu[k][i] = m_suffix[i] - m_suffix[i + 1];
        }
    }
    result.objective = prob.costs.iter().zip(&z).map(|(c, &v)| c.value(v * bit_scale)).sum();
    result.newton_steps = steps;
    Ok(result)
}

/// Make `v[i] ≥ v[i+1]` for `i < len−2`, so the differences (all but the
/// deadline entry) are nonnegative.
fn monotone_suffix(v: &mut [f64]) {
    let n = v.len() - 1;
    for i in (0..n.saturating_sub(1)).rev() {
        v[i] = v[i].max(v[i + 1]);
    }
}
