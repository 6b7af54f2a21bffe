//! Random instance generation, Monte-Carlo sweeps over the user count or the
//! task load, and CSV/SVG output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::solve_scheme;
use crate::error::{Error, Result};
use crate::model::{ChannelRealization, Instance, SystemParams, TaskArrivals};
use crate::solver::{Scheme, SolverOptions};

/// How the uplink gain `g[k][i]` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UplinkModel {
    /// Squared norm of an `M`-entry Rayleigh vector (MRC receiver).
    #[default]
    Mrc,
    /// Squared magnitude of one Rayleigh entry scaled by `M` (same mean).
    Scalar,
}

/// Parameter swept across a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepAxis {
    K,
    #[serde(rename = "A_max")]
    AMax,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::K => "K",
            SweepAxis::AMax => "A_max",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(SweepAxis::K),
            "A_max" | "a_max" | "amax" => Ok(SweepAxis::AMax),
            other => Err(Error::Config(format!("unknown sweep axis `{other}` (expected K or A_max)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

fn default_m() -> usize {
    4
}
fn default_n() -> usize {
    10
}
fn default_k() -> usize {
    6
}
fn default_tau() -> f64 {
    0.1
}
fn default_b() -> f64 {
    2e6
}
fn default_sigma2() -> f64 {
    1e-9
}
fn default_eta() -> f64 {
    0.3
}
fn default_cycles() -> f64 {
    1e3
}
fn default_zeta0() -> f64 {
    1e-29
}
fn default_zetak() -> f64 {
    1e-28
}
fn default_pl_ref() -> f64 {
    -32.0
}
fn default_pl_exp() -> f64 {
    3.0
}
fn default_distances() -> Vec<f64> {
    vec![4.0]
}
fn default_a_min() -> f64 {
    1e5
}
fn default_a_max() -> f64 {
    1e6
}
fn default_trials() -> usize {
    50
}
fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

/// Monte-Carlo experiment description. Field names match the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(rename = "M", default = "default_m")]
    pub antennas: usize,
    #[serde(rename = "N", default = "default_n")]
    pub slots: usize,
    /// User count when the sweep axis is not `K`.
    #[serde(rename = "K", default = "default_k")]
    pub users: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(rename = "B", default = "default_b")]
    pub bandwidth: f64,
    #[serde(default = "default_sigma2")]
    pub sigma2: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(rename = "C0", default = "default_cycles")]
    pub server_cycles: f64,
    #[serde(rename = "Ck", default = "default_cycles")]
    pub cycles: f64,
    #[serde(default = "default_zeta0")]
    pub zeta0: f64,
    #[serde(default = "default_zetak")]
    pub zetak: f64,
    #[serde(default = "default_pl_ref")]
    pub pathloss_ref_db: f64,
    #[serde(default = "default_pl_exp")]
    pub pathloss_exponent: f64,
    /// Per-user distances in meters; a single entry applies to every user.
    #[serde(default = "default_distances")]
    pub distances: Vec<f64>,
    #[serde(rename = "A_min", default = "default_a_min")]
    pub a_min: f64,
    #[serde(rename = "A_max", default = "default_a_max")]
    pub a_max: f64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub uplink: UplinkModel,
    pub sweep: SweepSpec,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default)]
    pub log_y: bool,
}

impl ExperimentConfig {
    /// Defaults with the given sweep.
    pub fn with_sweep(axis: SweepAxis, values: Vec<f64>) -> Self {
        Self {
            antennas: default_m(),
            slots: default_n(),
            users: default_k(),
            tau: default_tau(),
            bandwidth: default_b(),
            sigma2: default_sigma2(),
            eta: default_eta(),
            server_cycles: default_cycles(),
            cycles: default_cycles(),
            zeta0: default_zeta0(),
            zetak: default_zetak(),
            pathloss_ref_db: default_pl_ref(),
            pathloss_exponent: default_pl_exp(),
            distances: default_distances(),
            a_min: default_a_min(),
            a_max: default_a_max(),
            trials: default_trials(),
            seed: 0,
            uplink: UplinkModel::default(),
            sweep: SweepSpec { axis, values },
            schemes: default_schemes(),
            log_y: false,
        }
    }

    /// Parse TOML, or JSON when the text starts with `{`.
    pub fn from_str_auto(text: &str) -> Result<Self> {
        let cfg: Self = if text.trim_start().starts_with('{') {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(|e| Error::Config(format!("at `{}`: {}", e.path(), e.inner())))?
        } else {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_str_auto(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.trials < 1 {
            return fail("trials must be at least 1".into());
        }
        if self.antennas < 1 || self.slots < 1 || self.users < 1 {
            return fail("M, N and K must be at least 1".into());
        }
        if !(self.a_min >= 0.0 && self.a_min <= self.a_max) {
            return fail(format!("need 0 ≤ A_min ≤ A_max (got {}, {})", self.a_min, self.a_max));
        }
        if self.distances.is_empty() || self.distances.iter().any(|d| !(*d > 0.0)) {
            return fail("distances must be nonempty and positive".into());
        }
        if self.schemes.is_empty() {
            return fail("at least one scheme is required".into());
        }
        if self.sweep.values.is_empty() {
            return fail("sweep needs at least one value".into());
        }
        for &v in &self.sweep.values {
            let ok = match self.sweep.axis {
                SweepAxis::K => v >= 1.0 && v.fract() == 0.0,
                SweepAxis::AMax => v >= self.a_min,
            };
            if !ok {
                return fail(format!("invalid {} sweep value {v}", self.sweep.axis.name()));
            }
        }
        Ok(())
    }

    /// The configuration at one sweep point.
    pub fn at(&self, axis_value: f64) -> Self {
        let mut cfg = self.clone();
        match self.sweep.axis {
            SweepAxis::K => cfg.users = axis_value as usize,
            SweepAxis::AMax => cfg.a_max = axis_value,
        }
        cfg
    }

    fn distance(&self, k: usize) -> f64 {
        if self.distances.len() == 1 {
            self.distances[0]
        } else {
            self.distances[k % self.distances.len()]
        }
    }

    /// Mean per-entry channel power `10^{ref/10}·d^{−exp}`.
    pub fn pathloss(&self, k: usize) -> f64 {
        10f64.powf(self.pathloss_ref_db / 10.0) * self.distance(k).powf(-self.pathloss_exponent)
    }
}

/// Random stream for `(seed, axis index, trial)`.
pub fn trial_rng(seed: u64, axis_index: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream((axis_index << 32) | (trial & 0xffff_ffff));
    rng
}

fn rayleigh<R: Rng>(rng: &mut R, power: f64) -> Complex64 {
    let normal = Normal::new(0.0, (power / 2.0).sqrt()).expect("finite variance");
    Complex64::new(normal.sample(rng), normal.sample(rng))
}

/// Draw one instance from `cfg` using `rng`.
pub fn gen_instance_with<R: Rng>(cfg: &ExperimentConfig, rng: &mut R) -> Instance {
    let (m, kk, n) = (cfg.antennas, cfg.users, cfg.slots);
    let params = SystemParams::uniform(
        m,
        kk,
        n,
        cfg.tau,
        cfg.bandwidth,
        cfg.sigma2,
        cfg.zeta0,
        cfg.server_cycles,
        cfg.eta,
        cfg.zetak,
        cfg.cycles,
    );
    let mut h = vec![vec![Vec::new(); n]; kk];
    let mut g = vec![vec![0.0; n]; kk];
    for k in 0..kk {
        let pl = cfg.pathloss(k);
        for i in 0..n {
            h[k][i] = (0..m).map(|_| rayleigh(rng, pl)).collect();
            g[k][i] = match cfg.uplink {
                UplinkModel::Mrc => (0..m).map(|_| rayleigh(rng, pl).norm_sqr()).sum(),
                UplinkModel::Scalar => m as f64 * rayleigh(rng, pl).norm_sqr(),
            };
        }
    }
    let uni = Uniform::new_inclusive(cfg.a_min, cfg.a_max);
    let arrivals = (0..kk).map(|_| (0..n).map(|_| uni.sample(rng)).collect()).collect();
    Instance {
        params,
        channels: ChannelRealization { h, g },
        tasks: TaskArrivals { arrivals },
    }
}

/// Deterministic instance for a trial seed.
pub fn gen_instance(cfg: &ExperimentConfig, trial_seed: u64) -> Instance {
    let mut rng = ChaCha20Rng::seed_from_u64(trial_seed);
    gen_instance_with(cfg, &mut rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_name: String,
    pub axis_value: f64,
    pub scheme: Scheme,
    pub mean_j_per_slot: f64,
    pub stderr: f64,
    pub n_ok: usize,
    pub n_infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFailure {
    pub axis_value: f64,
    pub trial: usize,
    pub scheme: Scheme,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub failures: Vec<SweepFailure>,
}

impl SweepResult {
    pub fn row(&self, axis_value: f64, scheme: Scheme) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.axis_value == axis_value && r.scheme == scheme)
    }
}

/// Sum after sorting, so the result does not depend on evaluation order.
fn sorted_mean_stderr(mut v: Vec<f64>) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    let var = dev.iter().sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-trial outcome of every scheme: `Ok(J per slot)` or a failure reason.
type TrialOutcome = Vec<std::result::Result<f64, String>>;

fn run_trial(cfg: &ExperimentConfig, axis_index: usize, trial: usize, opts: &SolverOptions) -> TrialOutcome {
    let point = cfg.at(cfg.sweep.values[axis_index]);
    let mut rng = trial_rng(cfg.seed, axis_index as u64, trial as u64);
    let inst = gen_instance_with(&point, &mut rng);
    cfg.schemes
        .iter()
        .map(|&scheme| match solve_scheme(&inst, scheme, opts) {
            Ok(rep) if rep.is_feasible(&opts.feasibility) => Ok(rep.objective_per_slot()),
            Ok(rep) => Err(format!("infeasible report: {}", rep.residuals.check(&opts.feasibility).join("; "))),
            Err(e) => Err(e.to_string()),
        })
        .collect()
}

fn reduce(cfg: &ExperimentConfig, outcomes: Vec<((usize, usize), TrialOutcome)>) -> SweepResult {
    let mut per: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    let mut failures = Vec::new();
    for ((a, t), out) in outcomes {
        for (s, r) in out.into_iter().enumerate() {
            let entry = per.entry((a, s)).or_default();
            match r {
                Ok(v) => entry.0.push(v),
                Err(reason) => {
                    entry.1 += 1;
                    failures.push(SweepFailure {
                        axis_value: cfg.sweep.values[a],
                        trial: t,
                        scheme: cfg.schemes[s],
                        reason,
                    });
                }
            }
        }
    }
    let rows = per
        .into_iter()
        .map(|((a, s), (vals, bad))| {
            let n_ok = vals.len();
            let (mean, stderr) = sorted_mean_stderr(vals);
            SweepRow {
                axis_name: cfg.sweep.axis.name().to_string(),
                axis_value: cfg.sweep.values[a],
                scheme: cfg.schemes[s],
                mean_j_per_slot: mean,
                stderr,
                n_ok,
                n_infeasible: bad,
            }
        })
        .collect();
    SweepResult { rows, failures }
}

/// Run every scheme on every trial of every sweep point in parallel.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep_with(cfg, &SolverOptions::default())
}

pub fn run_sweep_with(cfg: &ExperimentConfig, opts: &SolverOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let work: Vec<(usize, usize)> = (0..cfg.sweep.values.len())
        .flat_map(|a| (0..cfg.trials).map(move |t| (a, t)))
        .collect();
    let outcomes: Vec<_> = work
        .par_iter()
        .map(|&(a, t)| ((a, t), run_trial(cfg, a, t, opts)))
        .collect();
    Ok(reduce(cfg, outcomes))
}

/// Same as [`run_sweep_with`] but strictly sequential.
pub fn run_sweep_serial(cfg: &ExperimentConfig, opts: &SolverOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let mut outcomes = Vec::new();
    for a in (0..cfg.sweep.values.len()).rev() {
        for t in (0..cfg.trials).rev() {
            outcomes.push(((a, t), run_trial(cfg, a, t, opts)));
        }
    }
    Ok(reduce(cfg, outcomes))
}

pub const CSV_HEADER: [&str; 7] = ["axis_name", "axis_value", "scheme", "mean_J_per_slot", "stderr", "n_ok", "n_infeasible"];

pub fn write_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in &result.rows {
        w.write_record([
            r.axis_name.clone(),
            r.axis_value.to_string(),
            r.scheme.to_string(),
            r.mean_j_per_slot.to_string(),
            r.stderr.to_string(),
            r.n_ok.to_string(),
            r.n_infeasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Parse a CSV written by [`write_csv`]. Failure reasons are not stored.
pub fn read_csv<R: Read>(input: R) -> Result<SweepResult> {
    let mut rd = csv::Reader::from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Config(format!("bad number `{}` in column {}", &rec[i], CSV_HEADER[i])))
        };
        let count = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| Error::Config(format!("bad count `{}` in column {}", &rec[i], CSV_HEADER[i])))
        };
        rows.push(SweepRow {
            axis_name: rec[0].to_string(),
            axis_value: num(1)?,
            scheme: rec[2].parse()?,
            mean_j_per_slot: num(3)?,
            stderr: num(4)?,
            n_ok: count(5)?,
            n_infeasible: count(6)?,
        });
    }
    Ok(SweepResult { rows, failures: Vec::new() })
}

/// Line chart with one polyline per scheme.
pub fn render_svg(result: &SweepResult, log_y: bool) -> String {
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let mut by_scheme: BTreeMap<Scheme, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &result.rows {
        if r.n_ok > 0 {
            by_scheme.entry(r.scheme).or_default().push((r.axis_value, r.mean_j_per_slot));
        }
    }
    let ty = |v: f64| if log_y { v.max(1e-300).log10() } else { v };
    let pts: Vec<(f64, f64)> = by_scheme.values().flatten().map(|&(x, y)| (x, ty(y))).collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"];
    let axis_name = result.rows.first().map_or("axis", |r| r.axis_name.as_str());
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{axis_name}</text>"#, w / 2.0, h - 15.0);
    let ylabel = if log_y { "log10 J per slot" } else { "J per slot" };
    let _ = writeln!(s, r#"<text x="15" y="{}" transform="rotate(-90 15 {})" text-anchor="middle">{ylabel}</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(s, r#"<text x="{pad}" y="{}">{:.3e}</text><text x="{}" y="{}" text-anchor="end">{:.3e}</text>"#, h - pad + 15.0, x0, w - pad, h - pad + 15.0, x1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.3e}</text><text x="{}" y="{pad}" text-anchor="end">{:.3e}</text>"#, pad - 4.0, h - pad, y0, pad - 4.0, y1);
    for (idx, (scheme, mut line)) in by_scheme.into_iter().enumerate() {
        line.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = colors[idx % colors.len()];
        let path: Vec<String> = line.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(ty(y)))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in &line {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(ty(y)));
        }
        let ly = pad + 16.0 * idx as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{scheme}</text>"#, w - pad - 90.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Write `sweep.csv` and `sweep.svg` into `out_dir`.
pub fn emit_outputs(result: &SweepResult, out_dir: &Path, log_y: bool) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join("sweep.csv");
    let svg_path = out_dir.join("sweep.svg");
    write_csv(result, fs::File::create(&csv_path)?)?;
    fs::write(&svg_path, render_svg(result, log_y))?;
    Ok((csv_path, svg_path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(axis: SweepAxis, values: Vec<f64>) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::with_sweep(axis, values);
        cfg.antennas = 1;
        cfg.slots = 3;
        cfg.users = 1;
        cfg.trials = 2;
        cfg.schemes = vec![Scheme::Joint, Scheme::LocalOnly];
        cfg
    }

    #[test]
    fn instances_are_deterministic_and_in_range() {
        let cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![4.0]);
        let a = gen_instance(&cfg, 11);
        assert_eq!(a, gen_instance(&cfg, 11));
        assert_ne!(a, gen_instance(&cfg, 12));
        assert!(a.tasks.arrivals.iter().flatten().all(|&v| (1e5..=1e6).contains(&v)));
    }

    #[test]
    fn channel_power_matches_pathloss() {
        let cfg = ExperimentConfig::with_sweep(SweepAxis::K, vec![1.0]);
        let pl = cfg.pathloss(0);
        assert!((pl - 10f64.powf(-3.2) / 64.0).abs() < 1e-15);
        let mut rng = trial_rng(1, 0, 0);
        let draws = 100_000;
        let mean: f64 = (0..draws).map(|_| rayleigh(&mut rng, pl).norm_sqr()).sum::<f64>() / draws as f64;
        assert!((mean - pl).abs() <= 0.02 * pl, "{mean} vs {pl}");
    }

    #[test]
    fn zero_load_gives_zero_mean() {
        let mut cfg = tiny(SweepAxis::K, vec![1.0]);
        cfg.trials = 1;
        cfg.a_min = 0.0;
        cfg.a_max = 0.0;
        cfg.schemes = vec![Scheme::Joint];
        let res = run_sweep(&cfg).unwrap();
        assert_eq!(res.rows.len(), 1);
        assert_eq!(res.rows[0].mean_j_per_slot, 0.0);
    }

    #[test]
    fn parallel_and_serial_runs_agree() {
        let cfg = tiny(SweepAxis::AMax, vec![2e5, 4e5]);
        let opts = SolverOptions::default();
        assert_eq!(run_sweep_with(&cfg, &opts).unwrap(), run_sweep_serial(&cfg, &opts).unwrap());
    }

    #[test]
    fn infeasible_trials_are_counted() {
        let mut cfg = tiny(SweepAxis::K, vec![1.0]);
        cfg.schemes = vec![Scheme::FullOffload];
        let res = run_sweep(&cfg).unwrap();
        assert_eq!((res.rows[0].n_ok, res.rows[0].n_infeasible), (0, 2));
        assert_eq!(res.failures.len(), 2);
    }

    #[test]
    fn csv_round_trips() {
        let res = run_sweep(&tiny(SweepAxis::K, vec![1.0, 2.0])).unwrap();
        let mut buf = Vec::new();
        write_csv(&res, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows, res.rows);
        let svg = render_svg(&res, true);
        assert!(svg.starts_with("<svg") && svg.contains("joint"));
    }

    #[test]
    fn config_parses_toml_and_json() {
        let toml = "K = 3\ntrials = 4\n[sweep]\naxis = \"A_max\"\nvalues = [2e5, 5e5]\n";
        let cfg = ExperimentConfig::from_str_auto(toml).unwrap();
        assert_eq!((cfg.users, cfg.trials, cfg.sweep.axis), (3, 4, SweepAxis::AMax));
        let json = r#"{"N": 5, "sweep": {"axis": "K", "values": [2, 4]}}"#;
        assert_eq!(ExperimentConfig::from_str_auto(json).unwrap().slots, 5);
        let bad = r#"{"sweep": {"axis": "K", "values": [2]}, "bogus": 1}"#;
        assert!(matches!(ExperimentConfig::from_str_auto(bad), Err(Error::Config(_))));
        let bad = "[sweep]\naxis = \"K\"\nvalues = [2.5]\n";
        assert!(matches!(ExperimentConfig::from_str_auto(bad), Err(Error::Config(_))));
    }
}
