//! Ellipsoid method for maximizing a concave function over a convex set
//! described by separation cuts.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Answer of a cutting-plane oracle at a query point `x`. The oracle writes
/// the cut vector into the buffer it is handed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleCut {
    /// `x` is feasible with objective `value`; the buffer holds a supergradient.
    Objective { value: f64 },
    /// `x` is infeasible; every feasible `y` obeys `a·(y − x) ≥ depth` for the
    /// buffer vector `a`.
    Feasibility { depth: f64, tag: &'static str },
}

/// Whether cuts pass through the center or use the available depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutMode {
    #[default]
    Central,
    Deep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidOptions {
    /// Relative optimality tolerance on `ub − best`, scaled by `max(1, |best|)`.
    pub tol: f64,
    /// Absolute stop on the cut norm `√(aᵀPa)` of objective cuts.
    pub cut_tol: f64,
    pub max_iter: usize,
    /// Stagnation window, in iterations, as a multiple of the dimension.
    pub stagnation_factor: usize,
    /// Relative improvement below which the best value counts as stagnant.
    pub stagnation_rel: f64,
    pub cut_mode: CutMode,
    /// Record one trace row every this many iterations (0 disables).
    pub trace_every: usize,
}

impl Default for EllipsoidOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            cut_tol: 1e-6,
            max_iter: 5_000_000,
            stagnation_factor: 50,
            stagnation_rel: 1e-9,
            cut_mode: CutMode::Central,
            trace_every: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    CutNorm,
    Stagnation,
    MaxIterations,
    EmptyEllipsoid,
    ShapeCollapsed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_value: f64,
    pub cut_kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidResult {
    pub best_point: Option<Vec<f64>>,
    pub best_value: f64,
    /// Smallest certified upper bound on the optimum.
    pub upper_bound: f64,
    pub iterations: usize,
    pub objective_cuts: usize,
    pub feasibility_cuts: usize,
    pub shape_repairs: usize,
    pub stop: StopReason,
    pub trace: Vec<TraceRow>,
}

impl EllipsoidResult {
    /// Dump the trace as CSV (`iteration,best_value,cut_kind`).
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "best_value", "cut_kind"])?;
        for row in &self.trace {
            w.write_record([row.iteration.to_string(), format!("{:e}", row.best_value), row.cut_kind.clone()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Center and shape matrix `P` (row-major) of `{y : (y−c)ᵀP⁻¹(y−c) ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidState {
    pub center: Vec<f64>,
    pub shape: Vec<f64>,
    pub iteration: usize,
    pub best_point: Option<Vec<f64>>,
    pub best_value: f64,
    pa: Vec<f64>,
}

impl EllipsoidState {
    /// Ball of radius `r0` around `x0`.
    pub fn ball(x0: &[f64], r0: f64) -> Result<Self> {
        Self::axis_aligned(x0, &vec![r0; x0.len()])
    }

    /// Axis-aligned ellipsoid with the given semi-axes.
    pub fn axis_aligned(x0: &[f64], radii: &[f64]) -> Result<Self> {
        let n = x0.len();
        if n == 0 || radii.len() != n {
            return Err(Error::InvalidArgument("ellipsoid needs matching nonempty center and radii".into()));
        }
        if x0.iter().any(|v| !v.is_finite()) || radii.iter().any(|&r| !(r > 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument("ellipsoid center must be finite and radii positive".into()));
        }
        let mut shape = vec![0.0; n * n];
        for (i, r) in radii.iter().enumerate() {
            shape[i * n + i] = r * r;
        }
        Ok(Self {
            center: x0.to_vec(),
            shape,
            iteration: 0,
            best_point: None,
            best_value: f64::NEG_INFINITY,
            pa: vec![0.0; n],
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `ln det P` via Cholesky; `None` when `P` is not positive definite.
    pub fn log_det(&self) -> Option<f64> {
        let n = self.dim();
        let mut l = self.shape.clone();
        let mut acc = 0.0;
        for j in 0..n {
            let mut d = l[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return None;
            }
            let d = d.sqrt();
            acc += 2.0 * d.ln();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = l[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Some(acc)
    }

    /// `√(aᵀPa)`, caching `Pa`.
    fn norm_of(&mut self, a: &[f64]) -> f64 {
        let n = self.dim();
        let mut q = 0.0;
        for i in 0..n {
            let row = &self.shape[i * n..(i + 1) * n];
            let v: f64 = row.iter().zip(a).map(|(p, x)| p * x).sum();
            self.pa[i] = v;
            q += v * a[i];
        }
        if q > 0.0 {
            q.sqrt()
        } else {
            0.0
        }
    }

    /// Keep the half `{y : a·(y − c) ≥ α√(aᵀPa)}` and replace the ellipsoid by
    /// the minimum-volume one containing it. `alpha ∈ [0, 1)`; 0 is a central
    /// cut. Returns `√(aᵀPa)` before the update.
    pub fn apply_cut(&mut self, a: &[f64], alpha: f64) -> Result<f64> {
        let n = self.dim();
        if a.len() != n {
            return Err(Error::Shape(format!("cut has length {}, ellipsoid dimension {n}", a.len())));
        }
        let norm = self.norm_of(a);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numerical(format!("degenerate cut norm {norm:e}")));
        }
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("cut depth {alpha} outside [0, 1)")));
        }
        self.iteration += 1;
        let nf = n as f64;
        for v in &mut self.pa {
            *v /= norm;
        }
        if n == 1 {
            let step = 0.5 * (1.0 + alpha);
            self.center[0] += step * self.pa[0];
            let shrink = 0.5 * (1.0 - alpha);
            self.shape[0] *= shrink * shrink;
            return Ok(norm);
        }
        let step = (1.0 + nf * alpha) / (nf + 1.0);
        for (c, b) in self.center.iter_mut().zip(&self.pa) {
            *c += step * b;
        }
        let scale = nf * nf * (1.0 - alpha * alpha) / (nf * nf - 1.0);
        let rank = 2.0 * (1.0 + nf * alpha) / ((nf + 1.0) * (1.0 + alpha));
        for i in 0..n {
            let bi = rank * self.pa[i];
            let row = &mut self.shape[i * n..(i + 1) * n];
            for (p, bj) in row.iter_mut().zip(&self.pa) {
                *p = scale * (*p - bi * bj);
            }
        }
        Ok(norm)
    }

    /// Symmetrize `P` and floor its eigenvalues at `1e−300·trace`.
    pub fn repair_shape(&mut self) {
        let n = self.dim();
        let mut m = nalgebra::DMatrix::<f64>::from_row_slice(n, n, &self.shape);
        m = (&m + m.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::new(m);
        let floor = 1e-300 * eig.eigenvalues.iter().map(|v| v.abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        let vals = eig.eigenvalues.map(|v| v.max(floor));
        let fixed = &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
        for i in 0..n {
            for j in 0..n {
                self.shape[i * n + j] = fixed[(i, j)];
            }
        }
    }
}

/// Maximize through `oracle` starting from `state`.
pub fn maximize_from<F>(mut state: EllipsoidState, mut oracle: F, opts: &EllipsoidOptions) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<OracleCut>,
{
    let n = state.dim();
    let mut cut = vec![0.0; n];
    let mut upper = f64::INFINITY;
    let mut objective_cuts = 0;
    let mut feasibility_cuts = 0;
    let mut repairs = 0;
    let mut trace = Vec::new();
    let window = opts.stagnation_factor.saturating_mul(n).max(1);
    let mut last_improvement_value = f64::NEG_INFINITY;
    let mut last_improvement_iter = 0;
    let mut stop = StopReason::MaxIterations;

    for iter in 0..opts.max_iter {
        cut.iter_mut().for_each(|v| *v = 0.0);
        let x = state.center.clone();
        let response = oracle(&x, &mut cut)?;
        let (alpha_raw, tag, norm) = match response {
            OracleCut::Objective { value } => {
                objective_cuts += 1;
                if value > state.best_value {
                    state.best_value = value;
                    state.best_point = Some(x.clone());
                }
                let norm = state.norm_of(&cut);
                upper = upper.min(value + norm);
                let best = state.best_value;
                let scale = best.abs().max(1.0);
                if upper - best <= opts.tol * scale {
                    stop = StopReason::Converged;
                    break;
                }
                if norm <= opts.cut_tol {
                    stop = StopReason::CutNorm;
                    break;
                }
                let alpha = if opts.cut_mode == CutMode::Deep { (best - value) / norm } else { 0.0 };
                (alpha, "objective", norm)
            }
            OracleCut::Feasibility { depth, tag } => {
                feasibility_cuts += 1;
                let norm = state.norm_of(&cut);
                let alpha = if opts.cut_mode == CutMode::Deep && norm > 0.0 { depth / norm } else { 0.0 };
                (alpha, tag, norm)
            }
        };
        if alpha_raw >= 1.0 {
            stop = if state.best_point.is_some() { StopReason::Converged } else { StopReason::EmptyEllipsoid };
            break;
        }
        let alpha = alpha_raw.clamp(0.0, 1.0 - 1e-12);
        if !(norm > 0.0) || !norm.is_finite() {
            state.repair_shape();
            repairs += 1;
            if repairs > 10 {
                if state.best_point.is_none() {
                    return Err(Error::Numerical("ellipsoid shape matrix collapsed".into()));
                }
                stop = StopReason::ShapeCollapsed;
                break;
            }
            continue;
        }
        state.apply_cut(&cut, alpha)?;

        if state.best_value > last_improvement_value {
            let gain = state.best_value - last_improvement_value;
            if !last_improvement_value.is_finite() || gain > opts.stagnation_rel * state.best_value.abs().max(1e-300) {
                last_improvement_iter = iter;
                last_improvement_value = state.best_value;
            }
        }
        if state.best_point.is_some() && iter - last_improvement_iter > window {
            stop = StopReason::Stagnation;
            break;
        }
        if opts.trace_every > 0 && iter % opts.trace_every == 0 {
            trace.push(TraceRow { iteration: iter, best_value: state.best_value, cut_kind: tag.to_string() });
        }
    }

    Ok(EllipsoidResult {
        best_point: state.best_point.clone(),
        best_value: state.best_value,
        upper_bound: upper,
        iterations: state.iteration,
        objective_cuts,
        feasibility_cuts,
        shape_repairs: repairs,
        stop,
        trace,
    })
}

/// Maximize from a ball of radius `r0` around `x0`.
pub fn maximize<F>(oracle: F, x0: &[f64], r0: f64, opts: &EllipsoidOptions) -> Result<EllipsoidResult>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<OracleCut>,
{
    if !(r0 > 0.0) {
        return Err(Error::InvalidArgument(format!("initial radius {r0} must be positive")));
    }
    maximize_from(EllipsoidState::ball(x0, r0)?, oracle, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn maximizes_negative_square_norm() {
        let opts = EllipsoidOptions { tol: 1e-14, cut_tol: 1e-12, ..Default::default() };
        let res = maximize(
            |x, g| {
                for (gi, xi) in g.iter_mut().zip(x) {
                    *gi = -2.0 * xi;
                }
                Ok(OracleCut::Objective { value: -x.iter().map(|v| v * v).sum::<f64>() })
            },
            &[1.0, 1.0],
            10.0,
            &opts,
        )
        .unwrap();
        let p = res.best_point.unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-6), "{p:?}");
    }

    #[test]
    fn linear_objective_with_feasibility_cut() {
        for mode in [CutMode::Central, CutMode::Deep] {
            let opts = EllipsoidOptions { tol: 1e-9, cut_mode: mode, ..Default::default() };
            let res = maximize(
                |x, g| {
                    if x[0] > 3.0 {
                        g[0] = -1.0;
                        return Ok(OracleCut::Feasibility { depth: x[0] - 3.0, tag: "bound" });
                    }
                    g[0] = 1.0;
                    Ok(OracleCut::Objective { value: x[0] })
                },
                &[0.0, 0.0],
                10.0,
                &opts,
            )
            .unwrap();
            assert!((res.best_value - 3.0).abs() < 1e-6, "{mode:?}: {}", res.best_value);
            assert!(res.upper_bound >= res.best_value);
        }
    }

    #[test]
    fn one_dimensional_bisection() {
        let opts = EllipsoidOptions { tol: 1e-12, cut_tol: 0.0, ..Default::default() };
        let res = maximize(
            |x, g| {
                g[0] = -2.0 * (x[0] - 0.3);
                Ok(OracleCut::Objective { value: -(x[0] - 0.3).powi(2) })
            },
            &[0.0],
            1.0,
            &opts,
        )
        .unwrap();
        assert!((res.best_point.unwrap()[0] - 0.3).abs() < 1e-5);
    }

    #[test]
    fn reports_missing_feasible_point() {
        let opts = EllipsoidOptions { max_iter: 200, ..Default::default() };
        let res = maximize(
            |x, g| {
                g[0] = 1.0;
                Ok(OracleCut::Feasibility { depth: 0.0 * x[0], tag: "never" })
            },
            &[0.0, 0.0],
            1.0,
            &opts,
        )
        .unwrap();
        assert!(res.best_point.is_none());
        assert_eq!(res.stop, StopReason::MaxIterations);
    }

    #[test]
    fn trace_csv_has_header() {
        let opts = EllipsoidOptions { trace_every: 1, max_iter: 5, ..Default::default() };
        let res = maximize(
            |x, g| {
                g[0] = -2.0 * x[0];
                Ok(OracleCut::Objective { value: -x[0] * x[0] })
            },
            &[1.0],
            2.0,
            &opts,
        )
        .unwrap();
        let mut buf = Vec::new();
        res.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,best_value,cut_kind"));
        assert!(text.lines().count() > 1);
    }

    proptest! {
        #[test]
        fn central_cut_shrinks_volume(
            n in 2usize..8,
            dirs in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 8), 1..20),
        ) {
            let mut st = EllipsoidState::ball(&vec![0.0; n], 3.0).unwrap();
            for d in dirs {
                let a: Vec<f64> = d[..n].to_vec();
                if a.iter().all(|v| v.abs() < 1e-6) {
                    continue;
                }
                let before = st.log_det().unwrap();
                st.apply_cut(&a, 0.0).unwrap();
                let after = st.log_det().unwrap();
                // volume ∝ √det P; each step shrinks it by at least e^{−1/(2(n+1))}
                prop_assert!(after - before <= -1.0 / (n as f64 + 1.0) + 1e-9);
            }
        }

        #[test]
        fn cut_keeps_the_retained_half(
            a in proptest::collection::vec(-1.0f64..1.0, 3),
            y in proptest::collection::vec(-1.0f64..1.0, 3),
            alpha in 0.0f64..0.9,
        ) {
            prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-3);
            let mut st = EllipsoidState::ball(&[0.0; 3], 1.0).unwrap();
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let inside = y.iter().map(|v| v * v).sum::<f64>() <= 1.0;
            let kept = a.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>() >= alpha * norm;
            st.apply_cut(&a, alpha).unwrap();
            if inside && kept {
                let n = 3;
                let m = nalgebra::DMatrix::<f64>::from_row_slice(n, n, &st.shape);
                let inv = m.try_inverse().unwrap();
                let d = nalgebra::DVector::from_iterator(n, y.iter().zip(&st.center).map(|(p, c)| p - c));
                let q = (d.transpose() * inv * &d)[(0, 0)];
                prop_assert!(q <= 1.0 + 1e-9);
            }
        }
    }
}
