//! Experiment manifests, the `run` and `validate` commands and their exit
//! codes.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::corpus;
use crate::error::{invalid, Result};
use crate::gaussflow::{linspace, monotonicity_scan, q_exact_integer, q_quadrature, auto_grid, FlowSystem, ScanMode};
use crate::grid::GridSpec;
use crate::io::{csv_string, read_to_string, write_atomic, RawSystem};
use crate::joints::{bound_report, coordinate_caps, find_joints, fit_exponent, joints_csv, lattice_config, LineConfig};
use crate::matcore::{check_condition_ajab, lw_matrices, SymMatrix};
use crate::perturbflow::{
    corollary_bound_check, epsilon_of, notmon_search, relation_ratio, NotmonOptions, PerturbedSystem,
};
use crate::tubes::{
    families_from_json_str, loglog_slope, random_transversal_families, sharpness_family, sweep_rows, transversal_grid,
    transversality_nu, SweepRow, TubeFamily, SWEEP_HEADER,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CHECK: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "hflab", version, about = "Heat-flow, tube-overlap and joints experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a flow system, tube family, lines CSV or manifest without running it.
    Validate { path: PathBuf },
    /// Execute an experiment manifest.
    Run {
        manifest: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long, env = "HFLAB_WORKERS")]
        workers: Option<usize>,
        /// Overrides the manifest seed.
        #[arg(long, env = "HFLAB_SEED")]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    FlowScan,
    FlowXval,
    PerturbBound,
    NotmonSearch,
    KakeyaSweep,
    SharpnessSweep,
    JointsCount,
    JointsSweep,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Paths {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

impl Default for Paths {
    fn default() -> Self {
        Paths::Many(Vec::new())
    }
}

impl Paths {
    pub fn to_vec(&self) -> Vec<PathBuf> {
        match self {
            Paths::One(p) => vec![p.clone()],
            Paths::Many(v) => v.clone(),
        }
    }
}

/// Relative `inputs` and `output` resolve against the manifest directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    pub kind: Kind,
    #[serde(default)]
    pub inputs: Paths,
    #[serde(default)]
    pub parameters: Map<String, Value>,
    pub output: PathBuf,
}

impl Manifest {
    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn seed(&self) -> Result<u64> {
        match self.parameters.get("seed") {
            None => Ok(0),
            Some(v) => v.as_u64().ok_or_else(|| invalid(format!("seed must be a non-negative integer, got {v}"))),
        }
    }

    fn params<T: DeserializeOwned>(&self) -> Result<T> {
        let mut m = self.parameters.clone();
        m.remove("seed");
        serde_json::from_value(Value::Object(m)).map_err(|e| invalid(format!("{:?} parameters: {e}", self.kind)))
    }

    /// Parses the kind-specific parameters without running anything.
    pub fn check_parameters(&self) -> Result<()> {
        self.seed()?;
        match self.kind {
            Kind::FlowScan => self.params::<FlowScanParams>().map(drop),
            Kind::FlowXval => self.params::<FlowXvalParams>().map(drop),
            Kind::PerturbBound => self.params::<PerturbBoundParams>().map(drop),
            Kind::NotmonSearch => self.params::<NotmonParams>().map(drop),
            Kind::KakeyaSweep => self.params::<KakeyaParams>().map(drop),
            Kind::SharpnessSweep => self.params::<SharpnessParams>().map(drop),
            Kind::JointsCount => self.params::<JointsCountParams>().map(drop),
            Kind::JointsSweep => self.params::<JointsSweepParams>().map(drop),
        }
    }
}

/// Primary CSV plus the summary recorded in the metadata sidecar; `pass`
/// is false when a mathematical check failed.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub csv: String,
    pub summary: Value,
    pub pass: bool,
    /// Extra artifacts `(file name suffix, contents)` written next to the CSV.
    pub extras: Vec<(String, String)>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowScanParams {
    #[serde(default = "default_t_range")]
    t_range: [f64; 2],
    #[serde(default = "default_nodes")]
    nodes: usize,
    /// `exact` or `quadrature`; defaults to exact for integer exponents.
    mode: Option<String>,
    grid: Option<GridSpec>,
    slack: Option<f64>,
}

fn default_t_range() -> [f64; 2] {
    [0.0, 4.0]
}

fn default_nodes() -> usize {
    81
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlowXvalParams {
    #[serde(default = "default_xval_count")]
    count: usize,
    #[serde(default = "default_xval_times")]
    t: Vec<f64>,
    #[serde(default = "default_xval_tol")]
    tol: f64,
}

fn default_xval_count() -> usize {
    50
}

fn default_xval_times() -> Vec<f64> {
    vec![0.0, 0.5, 1.0, 2.0]
}

fn default_xval_tol() -> f64 {
    1e-6
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PerturbBoundParams {
    #[serde(default = "default_pb_count")]
    count: usize,
    #[serde(default = "default_three")]
    dim: usize,
    #[serde(default = "default_one")]
    p: f64,
    #[serde(default = "default_epsilons")]
    epsilon: Vec<f64>,
    #[serde(default = "default_slack_multiplier")]
    slack_multiplier: f64,
}

fn default_pb_count() -> usize {
    20
}

fn default_three() -> usize {
    3
}

fn default_one() -> f64 {
    1.0
}

fn default_epsilons() -> Vec<f64> {
    vec![0.005, 0.01, 0.05]
}

fn default_slack_multiplier() -> f64 {
    10.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NotmonParams {
    #[serde(default = "default_three")]
    dim: usize,
    /// Matrix sets `W_j`; the Loomis-Whitney singletons by default.
    sets: Option<Vec<Vec<SymMatrix>>>,
    #[serde(default = "default_trials")]
    trials: usize,
    #[serde(default)]
    options: NotmonOptions,
    /// Treat violations as a failed check (default: all sets singletons).
    expect_monotone: Option<bool>,
}

fn default_trials() -> usize {
    1000
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct KakeyaParams {
    /// `transversal` or `lw-partition`; without it the families come from
    /// the input file and `grid` is required.
    generator: Option<String>,
    #[serde(default = "default_three")]
    dim: usize,
    #[serde(default)]
    delta: Vec<f64>,
    #[serde(default = "default_radius")]
    radius: f64,
    #[serde(default = "default_q")]
    q: Vec<f64>,
    points_per_axis: Option<usize>,
    grid: Option<GridSpec>,
    #[serde(default = "default_true")]
    refine: bool,
    max_growth: Option<f64>,
    expect_ratio: Option<f64>,
    #[serde(default = "default_ratio_tol")]
    ratio_tol: f64,
}

fn default_radius() -> f64 {
    0.1
}

fn default_q() -> Vec<f64> {
    vec![2.0]
}

fn default_true() -> bool {
    true
}

fn default_ratio_tol() -> f64 {
    0.02
}

fn default_points(d: usize) -> usize {
    if d == 2 { 512 } else { 128 }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SharpnessParams {
    #[serde(default = "default_two")]
    n: usize,
    #[serde(default = "default_two")]
    dim: usize,
    #[serde(default = "default_sharp_deltas")]
    delta: Vec<f64>,
    #[serde(default = "default_sharp_q")]
    q: Vec<f64>,
    points_per_axis: Option<usize>,
    #[serde(default = "default_slope_tol")]
    slope_tol: f64,
}

fn default_two() -> usize {
    2
}

fn default_sharp_deltas() -> Vec<f64> {
    vec![0.125, 0.0625, 0.03125, 0.015625]
}

fn default_sharp_q() -> Vec<f64> {
    vec![1.5]
}

fn default_slope_tol() -> f64 {
    0.15
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointsCountParams {
    lattice: Option<usize>,
    tol_meet: Option<f64>,
    #[serde(default = "default_tol_coplanar")]
    tol_coplanar: f64,
    #[serde(default = "default_joint_eps")]
    epsilon: f64,
    expect_count: Option<usize>,
}

fn default_tol_coplanar() -> f64 {
    crate::joints::DEFAULT_TOL_COPLANAR
}

fn default_joint_eps() -> f64 {
    0.01
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointsSweepParams {
    #[serde(default)]
    lattice: Vec<usize>,
    exponent_range: Option<[f64; 2]>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
}

/// Runs a parsed manifest; `base` resolves relative input paths.
pub fn execute(m: &Manifest, base: &Path, seed: u64) -> Result<Outcome> {
    let inputs: Vec<PathBuf> = m.inputs.to_vec().iter().map(|p| resolve(base, p)).collect();
    match m.kind {
        Kind::FlowScan => flow_scan(m.params()?, &inputs),
        Kind::FlowXval => flow_xval(m.params()?, &inputs, seed),
        Kind::PerturbBound => perturb_bound(m.params()?, &inputs, seed),
        Kind::NotmonSearch => notmon(m.params()?, seed),
        Kind::KakeyaSweep => kakeya(m.params()?, &inputs, seed),
        Kind::SharpnessSweep => sharpness(m.params()?),
        Kind::JointsCount => joints_count(m.params()?, &inputs),
        Kind::JointsSweep => joints_sweep(m.params()?, &inputs),
    }
}

fn single_input(inputs: &[PathBuf], what: &str) -> Result<PathBuf> {
    match inputs {
        [p] => Ok(p.clone()),
        _ => Err(invalid(format!("expected exactly one {what} input, got {}", inputs.len()))),
    }
}

fn load_system(path: &Path) -> Result<FlowSystem> {
    FlowSystem::from_json_str(&read_to_string(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn flow_scan(p: FlowScanParams, inputs: &[PathBuf]) -> Result<Outcome> {
    let sys = load_system(&single_input(inputs, "flow system")?)?;
    let [a, b] = p.t_range;
    let mode = match p.mode.as_deref() {
        None if sys.p().as_integers().is_some() => ScanMode::Exact,
        None | Some("quadrature") => ScanMode::Quadrature(p.grid),
        Some("exact") => ScanMode::Exact,
        Some(other) => return Err(invalid(format!("unknown scan mode {other:?}"))),
    };
    let report = monotonicity_scan(&sys, &linspace(a, b, p.nodes), &mode, p.slack)?;
    Ok(Outcome {
        csv: report.to_csv()?,
        summary: json!({"rows": report.rows.len(), "max_violation": report.max_violation, "slack": report.slack, "pass": report.pass}),
        pass: report.pass,
        extras: vec![],
    })
}

fn flow_xval(p: FlowXvalParams, inputs: &[PathBuf], seed: u64) -> Result<Outcome> {
    let systems = if inputs.is_empty() {
        corpus::integer_corpus(seed, p.count)?
    } else {
        inputs.iter().map(|i| load_system(i)).collect::<Result<_>>()?
    };
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, sys) in systems.iter().enumerate() {
        if sys.p().as_integers().is_none() {
            return Err(invalid(format!("system {k}: cross-validation needs integer exponents")));
        }
        let (lo, hi) = p.t.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &t| (l.min(t), h.max(t)));
        let grid = auto_grid(sys, lo, hi)?;
        for &t in &p.t {
            let exact = q_exact_integer(sys, t)?;
            let quad = q_quadrature(sys, t, &grid)?;
            let rel = ((quad - exact) / exact).abs();
            worst = worst.max(rel);
            rows.push(vec![k.to_string(), t.to_string(), exact.to_string(), quad.to_string(), rel.to_string()]);
        }
    }
    let pass = worst <= p.tol;
    Ok(Outcome {
        csv: csv_string(&["system", "t", "exact", "quadrature", "rel_err"], rows)?,
        summary: json!({"systems": systems.len(), "max_rel_err": worst, "tol": p.tol, "pass": pass}),
        pass,
        extras: vec![],
    })
}

fn perturb_bound(p: PerturbBoundParams, inputs: &[PathBuf], seed: u64) -> Result<Outcome> {
    let mut cases: Vec<(Option<f64>, PerturbedSystem)> = Vec::new();
    if inputs.is_empty() {
        for (i, &eps) in p.epsilon.iter().enumerate() {
            for ps in corpus::perturbed_lw_corpus(seed.wrapping_add(i as u64), p.count, p.dim, p.p, eps)? {
                cases.push((Some(eps), ps));
            }
        }
    } else {
        for path in inputs {
            let ps = PerturbedSystem::from_json_str(&read_to_string(path)?)
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            cases.push((None, ps));
        }
    }
    let mut rows = Vec::new();
    let mut failures = 0usize;
    let mut worst_c: f64 = f64::NEG_INFINITY;
    for (k, (target, ps)) in cases.iter().enumerate() {
        let r = corollary_bound_check(ps, p.slack_multiplier)?;
        let rel = if r.exact { relation_ratio(ps, 1.0)?.to_string() } else { String::new() };
        if !r.pass {
            failures += 1;
        }
        if let Some(c) = r.empirical_c {
            worst_c = worst_c.max(c);
        }
        rows.push(vec![
            k.to_string(),
            target.map(|e| e.to_string()).unwrap_or_default(),
            r.epsilon.to_string(),
            r.gap_margin.to_string(),
            r.q1.to_string(),
            r.bound.to_string(),
            r.ratio.to_string(),
            r.empirical_c.map(|c| c.to_string()).unwrap_or_default(),
            rel,
            r.pass.to_string(),
        ]);
    }
    Ok(Outcome {
        csv: csv_string(
            &["system", "epsilon_target", "epsilon", "gap_margin", "q1", "bound", "ratio", "empirical_c", "relation", "pass"],
            rows,
        )?,
        summary: json!({"systems": cases.len(), "failures": failures, "max_empirical_c": worst_c, "slack_multiplier": p.slack_multiplier}),
        pass: failures == 0,
        extras: vec![],
    })
}

fn notmon(p: NotmonParams, seed: u64) -> Result<Outcome> {
    let sets = match p.sets {
        Some(s) => s,
        None => lw_matrices(p.dim)?.into_iter().map(|m| vec![m]).collect(),
    };
    let expect = p.expect_monotone.unwrap_or_else(|| sets.iter().all(|s| s.len() == 1));
    let report = notmon_search(&sets, seed, p.trials, &p.options)?;
    let violated: std::collections::BTreeSet<usize> = report.violations.iter().map(|v| v.trial).collect();
    let rows = report.records.iter().map(|r| {
        vec![
            r.trial.to_string(),
            r.q0.to_string(),
            r.q1.to_string(),
            r.ratio.to_string(),
            r.confirmed.to_string(),
            violated.contains(&r.trial).to_string(),
        ]
    });
    let csv = csv_string(&["trial", "q0", "q1", "ratio", "confirmed", "violation"], rows)?;
    if !report.violations.is_empty() {
        log::info!("{} violation witnesses found (best ratio {})", report.violations.len(), report.best_ratio);
    }
    let extras = if report.violations.is_empty() {
        vec![]
    } else {
        vec![(".witnesses.json".to_string(), serde_json::to_string_pretty(&report.violations)?)]
    };
    let pass = !(expect && !report.violations.is_empty());
    Ok(Outcome {
        csv,
        summary: json!({
            "trials": report.trials,
            "failed_trials": report.failed_trials,
            "best_ratio": report.best_ratio,
            "best_trial": report.best_trial,
            "violations": report.violations.len(),
            "expect_monotone": expect,
            "options": p.options,
        }),
        pass,
        extras,
    })
}

fn unit_cube_grid(d: usize, points: usize) -> Result<GridSpec> {
    GridSpec::new(vec![0.5; d], 0.5, points)
}

fn kakeya(p: KakeyaParams, inputs: &[PathBuf], seed: u64) -> Result<Outcome> {
    let mut sets: Vec<(Vec<TubeFamily>, GridSpec)> = Vec::new();
    match p.generator.as_deref() {
        Some(g) => {
            if !inputs.is_empty() {
                return Err(invalid("kakeya-sweep takes either a generator or input files"));
            }
            if p.delta.is_empty() {
                return Err(invalid("generator sweeps need a non-empty delta list"));
            }
            let points = p.points_per_axis.unwrap_or(default_points(p.dim));
            for &delta in &p.delta {
                match g {
                    "transversal" => sets.push((
                        random_transversal_families(p.dim, delta, p.radius, seed)?,
                        p.grid.clone().map_or_else(|| transversal_grid(p.dim, points), Ok)?,
                    )),
                    "lw-partition" => sets.push((
                        sharpness_family(p.dim, p.dim, delta)?,
                        p.grid.clone().map_or_else(|| unit_cube_grid(p.dim, points), Ok)?,
                    )),
                    other => return Err(invalid(format!("unknown tube generator {other:?}"))),
                }
            }
        }
        None => {
            let grid = p.grid.clone().ok_or_else(|| invalid("kakeya-sweep over input files needs a grid"))?;
            for path in inputs {
                let fams = families_from_json_str(&read_to_string(path)?)
                    .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
                sets.push((fams, grid.clone()));
            }
            if sets.is_empty() {
                return Err(invalid("kakeya-sweep needs tube family inputs"));
            }
        }
    }
    let mut rows: Vec<SweepRow> = Vec::new();
    for (fams, grid) in &sets {
        rows.extend(sweep_rows(fams, &p.q, grid, p.refine)?);
    }
    let mut checks = Vec::new();
    let mut pass = true;
    if let Some(expect) = p.expect_ratio {
        let worst = rows.iter().map(|r| (r.ratio / expect - 1.0).abs()).fold(0.0, f64::max);
        pass &= worst <= p.ratio_tol;
        checks.push(json!({"expect_ratio": expect, "max_rel_dev": worst, "tol": p.ratio_tol}));
    }
    if let Some(limit) = p.max_growth {
        let worst = max_growth(&rows);
        pass &= worst <= limit;
        checks.push(json!({"max_growth": worst, "limit": limit}));
    }
    Ok(Outcome {
        csv: csv_string(&SWEEP_HEADER, rows.iter().map(|r| r.record()))?,
        summary: json!({"rows": rows.len(), "checks": checks, "pass": pass}),
        pass,
        extras: vec![],
    })
}

/// Largest `ratio(delta') / ratio(delta)` over consecutive widths
/// `delta' < delta` at equal `q`.
pub fn max_growth(rows: &[SweepRow]) -> f64 {
    let mut worst: f64 = 0.0;
    let mut qs: Vec<f64> = rows.iter().map(|r| r.q).collect();
    qs.sort_by(f64::total_cmp);
    qs.dedup();
    for q in qs {
        let mut sel: Vec<&SweepRow> = rows.iter().filter(|r| r.q == q).collect();
        sel.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        for w in sel.windows(2) {
            worst = worst.max(w[1].ratio / w[0].ratio);
        }
    }
    worst
}

/// Predicted log-log slope of the sharpness ratio in `delta`.
pub fn sharpness_slope(n: usize, q: f64) -> f64 {
    let n = n as f64;
    n * (n - 1.0 - n / q)
}

fn sharpness(p: SharpnessParams) -> Result<Outcome> {
    let points = p.points_per_axis.unwrap_or(default_points(p.dim));
    let grid = unit_cube_grid(p.dim, points)?;
    let mut rows: Vec<SweepRow> = Vec::new();
    for &delta in &p.delta {
        rows.extend(sweep_rows(&sharpness_family(p.n, p.dim, delta)?, &p.q, &grid, false)?);
    }
    let mut slopes = Vec::new();
    let mut pass = true;
    for &q in &p.q {
        let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.q == q).collect();
        if sel.len() < 2 {
            continue;
        }
        let xs: Vec<f64> = sel.iter().map(|r| r.delta).collect();
        let ys: Vec<f64> = sel.iter().map(|r| r.ratio).collect();
        let measured = loglog_slope(&xs, &ys)?;
        let predicted = sharpness_slope(p.n, q);
        let ok = if predicted == 0.0 { measured.abs() <= p.slope_tol } else { (measured / predicted - 1.0).abs() <= p.slope_tol };
        pass &= ok;
        slopes.push(json!({"q": q, "measured": measured, "predicted": predicted, "pass": ok}));
    }
    Ok(Outcome {
        csv: csv_string(&SWEEP_HEADER, rows.iter().map(|r| r.record()))?,
        summary: json!({"rows": rows.len(), "slopes": slopes, "pass": pass}),
        pass,
        extras: vec![],
    })
}

fn load_lines(path: &Path) -> Result<LineConfig> {
    LineConfig::from_csv_str(&read_to_string(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn joints_count(p: JointsCountParams, inputs: &[PathBuf]) -> Result<Outcome> {
    let config = match p.lattice {
        Some(m) if inputs.is_empty() => lattice_config(m)?,
        Some(_) => return Err(invalid("joints-count takes either a lattice size or a lines file")),
        None => load_lines(&single_input(inputs, "lines CSV")?)?,
    };
    let tol = p.tol_meet.unwrap_or_else(|| config.default_tol_meet());
    let joints = find_joints(&config, tol, p.tol_coplanar)?;
    let report = bound_report(&config, &joints, p.epsilon, Some(&coordinate_caps(&config, 0.1)))?;
    let pass = p.expect_count.is_none_or(|c| c == joints.len());
    Ok(Outcome {
        csv: joints_csv(&joints)?,
        summary: json!({"lines": config.len(), "joints": joints.len(), "tol_meet": tol, "report": report, "pass": pass}),
        pass,
        extras: vec![],
    })
}

fn joints_sweep(p: JointsSweepParams, inputs: &[PathBuf]) -> Result<Outcome> {
    let mut configs: Vec<(String, LineConfig)> = Vec::new();
    for &m in &p.lattice {
        configs.push((format!("lattice-{m}"), lattice_config(m)?));
    }
    for path in inputs {
        configs.push((path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(), load_lines(path)?));
    }
    if configs.is_empty() {
        return Err(invalid("joints-sweep needs lattice sizes or lines files"));
    }
    let mut rows = Vec::new();
    let (mut ns, mut js) = (Vec::new(), Vec::new());
    for (name, c) in &configs {
        let j = find_joints(c, c.default_tol_meet(), crate::joints::DEFAULT_TOL_COPLANAR)?.len();
        rows.push(vec![name.clone(), c.len().to_string(), j.to_string(), (j as f64 / (c.len() as f64).powf(1.5)).to_string()]);
        ns.push(c.len());
        js.push(j);
    }
    let exponent = fit_exponent(&ns, &js).ok();
    let pass = match (p.exponent_range, exponent) {
        (Some([lo, hi]), Some(e)) => lo <= e && e <= hi,
        (Some(_), None) => false,
        (None, _) => true,
    };
    Ok(Outcome {
        csv: csv_string(&["config", "lines", "joints", "normalized"], rows)?,
        summary: json!({"exponent": exponent, "exponent_range": p.exponent_range, "pass": pass}),
        pass,
        extras: vec![],
    })
}

/// Loads a manifest, runs it on a pool of `workers` threads and writes the
/// CSV, any extra artifacts and the `.meta.json` sidecar atomically.
pub fn run(manifest_path: &Path, workers: Option<usize>, seed: Option<u64>) -> Result<Outcome> {
    let m = Manifest::from_json_str(&read_to_string(manifest_path)?)
        .map_err(|e| invalid(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let seed = match seed {
        Some(s) => s,
        None => m.seed()?,
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(invalid("workers must be >= 1"));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| invalid(format!("thread pool: {e}")))?;
    log::info!("running {:?} ({:?}) seed {seed} workers {}", m.name, m.kind, pool.current_num_threads());
    let outcome = pool.install(|| execute(&m, &base, seed))?;
    let out = resolve(&base, &m.output);
    write_atomic(&out, outcome.csv.as_bytes())?;
    for (suffix, body) in &outcome.extras {
        write_atomic(&sibling(&out, suffix), body.as_bytes())?;
    }
    let meta = json!({
        "name": m.name,
        "kind": m.kind,
        "seed": seed,
        "workers": pool.current_num_threads(),
        "inputs": m.inputs.to_vec(),
        "parameters": m.parameters,
        "output": m.output,
        "version": env!("CARGO_PKG_VERSION"),
        "summary": outcome.summary,
        "pass": outcome.pass,
    });
    write_atomic(&sibling(&out, ".meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    Ok(outcome)
}

/// `out.csv` + `.meta.json` -> `out.csv.meta.json`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Diagnostics of `validate`; `ok` is false when the file is unusable.
#[derive(Clone, Debug, Default)]
pub struct Validation {
    pub ok: bool,
    pub lines: Vec<String>,
}

impl Validation {
    fn fail(msg: String) -> Self {
        Self { ok: false, lines: vec![format!("error: {msg}")] }
    }
}

pub fn validate(path: &Path) -> Validation {
    let text = match read_to_string(path) {
        Ok(t) => t,
        Err(e) => return Validation::fail(e.to_string()),
    };
    if path.extension().is_some_and(|e| e == "csv") {
        return match LineConfig::from_csv_str(&text) {
            Ok(c) => Validation { ok: true, lines: vec!["ok".into(), format!("lines: {}", c.len())] },
            Err(e) => Validation::fail(e.to_string()),
        };
    }
    let value: Value = match serde_json::from_str(&text) {
        Ok(v) => v,
        Err(e) => return Validation::fail(format!("invalid JSON: {e}")),
    };
    let obj_has = |k: &str| value.get(k).is_some();
    let tube_like = obj_has("tubes") || value.as_array().is_some_and(|a| a.iter().any(|f| f.get("tubes").is_some()));
    if obj_has("kind") {
        validate_manifest(path, &text)
    } else if obj_has("families") {
        validate_system(value)
    } else if tube_like {
        validate_tubes(&text)
    } else {
        Validation::fail("unrecognized file: expected a flow system, tube family, manifest or lines CSV".into())
    }
}

fn validate_system(value: Value) -> Validation {
    let raw: RawSystem = match serde_json::from_value(value) {
        Ok(r) => r,
        Err(e) => return Validation::fail(e.to_string()),
    };
    let base = raw.base_matrices.clone();
    let sys = match raw.into_flow_system(None) {
        Ok(s) => s,
        Err(e) => return Validation::fail(e.to_string()),
    };
    let mut lines = vec![
        "ok".to_string(),
        format!("dim: {}, families: {}, p: {:?}", sys.dim(), sys.n(), sys.p().values()),
    ];
    match sys.constant_matrices() {
        Ok(ms) => match check_condition_ajab(&ms, sys.p(), 1e-12) {
            Ok(b) => lines.push(format!("(a-jab): {b}")),
            Err(e) => lines.push(format!("(a-jab): not evaluated ({e})")),
        },
        Err(_) => lines.push("(a-jab): not applicable (atom matrices vary within a family)".into()),
    }
    if let Some(b) = base {
        match PerturbedSystem::new(b, sys) {
            Ok(ps) => {
                lines.push(format!("(gap): true, margin {}", ps.gap_margin()));
                if let Ok(eps) = epsilon_of(&ps) {
                    lines.push(format!("epsilon: {eps}"));
                }
            }
            Err(e) => lines.push(format!("(gap): false ({e})")),
        }
    }
    Validation { ok: true, lines }
}

fn validate_tubes(text: &str) -> Validation {
    let fams = match families_from_json_str(text) {
        Ok(f) => f,
        Err(e) => return Validation::fail(e.to_string()),
    };
    let mut lines = vec!["ok".to_string()];
    for (j, f) in fams.iter().enumerate() {
        lines.push(format!("family {j}: {} tubes, width {}, radius {}", f.len(), f.width(), f.radius()));
    }
    match transversality_nu(&fams) {
        Ok(c) if c.is_valid() => lines.push(format!("transversality: nu = {} (exact: {})", c.nu, c.exact)),
        Ok(c) => {
            lines.push(format!("transversality: nu = {} (invalid certificate)", c.nu));
            return Validation { ok: false, lines };
        }
        Err(e) => lines.push(format!("transversality: not evaluated ({e})")),
    }
    Validation { ok: true, lines }
}

fn validate_manifest(path: &Path, text: &str) -> Validation {
    let m = match Manifest::from_json_str(text) {
        Ok(m) => m,
        Err(e) => return Validation::fail(e.to_string()),
    };
    if let Err(e) = m.check_parameters() {
        return Validation::fail(e.to_string());
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = vec!["ok".to_string(), format!("kind: {:?}", m.kind)];
    for p in m.inputs.to_vec() {
        let full = resolve(base, &p);
        let v = validate(&full);
        if !v.ok {
            let mut out = Validation { ok: false, lines };
            out.lines.push(format!("input {}: {}", p.display(), v.lines.join("; ")));
            return out;
        }
        lines.push(format!("input {}: ok", p.display()));
    }
    Validation { ok: true, lines }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match cli.command {
        Command::Validate { path } => {
            let v = validate(&path);
            for l in &v.lines {
                println!("{l}");
            }
            if v.ok { EXIT_OK } else { EXIT_INPUT }
        }
        Command::Run { manifest, workers, seed } => match run(&manifest, workers, seed) {
            Ok(o) if o.pass => EXIT_OK,
            Ok(o) => {
                eprintln!("check failed: {}", o.summary);
                EXIT_CHECK
            }
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_INPUT
            }
        },
    }
}
