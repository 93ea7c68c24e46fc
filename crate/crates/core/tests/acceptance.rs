//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Numeric arguments select a
//! subset, e.g. `cargo test --test acceptance -- 3 9`.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use hflab::corpus::{ajab_corpus, fractional_corpus, integer_corpus, perturbed_lw_corpus, random_invertible, rng};
use hflab::gaussflow::{
    auto_grid, g_function, linspace, monotonicity_scan, q_exact_integer, q_quadrature, qprime_chainrule,
    qprime_formula, GaussianAtom, GaussianFamily, ScanMode,
};
use hflab::joints::{find_joints_default, fit_exponent, lattice_config, lattice_sweep};
use hflab::matcore::{check_condition_ajab, lw_matrices, ExponentVector, SymMatrix};
use hflab::perturbflow::{
    epsilon_of, notmon_lemma_check, notmon_search, optimal_v0, qtilde_exact_integer, relation_ratio,
    replay_witness, s_functional, v0_residual, NotmonOptions,
};
use hflab::sum::loglog_slope;
use hflab::tubes::{kakeya_ratio, random_transversal_families, sharpness_family, transversal_grid};
use hflab::grid::GridSpec;
use hflab::FlowSystem;
use rand::Rng;

type Check = std::result::Result<String, String>;

struct Criterion {
    id: usize,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Check,
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok { Ok(detail) } else { Err(detail) }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn unit_gaussian(d: usize) -> FlowSystem {
    let fam = GaussianFamily::new(vec![GaussianAtom::new(SymMatrix::identity(d), vec![0.0; d], 1.0).unwrap()]).unwrap();
    FlowSystem::new(vec![fam], ExponentVector::new(vec![1.0]).unwrap()).unwrap()
}

fn c1_normalization() -> Check {
    let mut worst: f64 = 0.0;
    for d in [2, 3] {
        let sys = unit_gaussian(d);
        let q = q_quadrature(&sys, 0.0, &auto_grid(&sys, 0.0, 0.0).unwrap()).unwrap();
        worst = worst.max((q - 1.0).abs());
    }
    ensure(worst <= 1e-6, format!("max |Q - 1| = {worst:.2e}"))
}

fn c2_closed_form_oracle() -> Check {
    let corpus = integer_corpus(2024, 50).unwrap();
    let mut worst: f64 = 0.0;
    for sys in &corpus {
        let grid = auto_grid(sys, 0.0, 2.0).unwrap();
        for t in [0.0, 0.5, 2.0] {
            let exact = q_exact_integer(sys, t).unwrap();
            worst = worst.max(rel(q_quadrature(sys, t, &grid).unwrap(), exact));
        }
    }
    ensure(worst <= 1e-6, format!("{} systems x 3 times, max rel err {worst:.2e}", corpus.len()))
}

/// Shared corpus for the monotonicity, endpoint and G criteria.
fn ajab() -> Vec<FlowSystem> {
    ajab_corpus(7, 100, 25).unwrap()
}

fn c3_monotonicity() -> Check {
    let corpus = ajab();
    let t = linspace(0.0, 4.0, 81);
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (k, sys) in corpus.iter().enumerate() {
        let ms = sys.constant_matrices().unwrap();
        if !check_condition_ajab(&ms, sys.p(), 1e-12).unwrap() {
            return Err(format!("system {k} fails the Loewner condition"));
        }
        let r = monotonicity_scan(sys, &t, &ScanMode::Quadrature(None), None).unwrap();
        worst = worst.max(r.max_violation / r.rows[0].q);
        if !r.pass {
            failures.push(k);
        }
    }
    let d3 = corpus.iter().filter(|s| s.dim() == 3).count();
    ensure(
        failures.is_empty(),
        format!("{} systems ({d3} with d = 3), max increase {worst:.2e} Q(0), failing {failures:?}", corpus.len()),
    )
}

fn c4_endpoint_bound() -> Check {
    let corpus = ajab();
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut worst_eq: f64 = 0.0;
    for sys in &corpus {
        let a_star = sys.a_star().unwrap();
        let bound = a_star.det().powf(-0.5) * sys.mass_product();
        let q1 = q_quadrature(sys, 1.0, &auto_grid(sys, 1.0, 1.0).unwrap()).unwrap();
        worst = worst.max(q1 / bound - 1.0);
        let still = sys
            .map_families(|_, f| f.map_atoms(|a| a.with_velocity(vec![0.0; sys.dim()])))
            .unwrap();
        let q1 = q_quadrature(&still, 1.0, &auto_grid(&still, 1.0, 1.0).unwrap()).unwrap();
        worst_eq = worst_eq.max(rel(q1, bound));
    }
    ensure(
        worst <= 1e-9 && worst_eq <= 1e-9,
        format!("max Q(1)/bound - 1 = {worst:.2e}; zero-velocity max rel deviation {worst_eq:.2e}"),
    )
}

fn c5_derivative_identity() -> Check {
    let corpus = fractional_corpus(55, 50).unwrap();
    let h = 1e-4;
    let (mut worst_chain, mut worst_fd): (f64, f64) = (0.0, 0.0);
    for sys in &corpus {
        for t in [0.6, 1.5] {
            let grid = auto_grid(sys, t - h, t + h).unwrap();
            let f = qprime_formula(sys, t, &grid).unwrap();
            let c = qprime_chainrule(sys, t, &grid).unwrap();
            let q = q_quadrature(sys, t, &grid).unwrap();
            let fd = (q_quadrature(sys, t + h, &grid).unwrap() - q_quadrature(sys, t - h, &grid).unwrap()) / (2.0 * h);
            // single-atom systems have Q' = 0 exactly; both sides are then roundoff of size eps * Q
            let scale = f.abs().max(c.abs()).max(1e-8 * q);
            worst_chain = worst_chain.max((f - c).abs() / scale);
            worst_fd = worst_fd.max((f - fd).abs() / 1e-6_f64.max(1e-3 * f.abs()));
        }
    }
    ensure(
        worst_chain <= 1e-4 && worst_fd <= 1.0,
        format!("formula vs chain rule max rel {worst_chain:.2e}; finite-difference error / tolerance max {worst_fd:.2e}"),
    )
}

fn c6_g_nonnegative() -> Check {
    let corpus = ajab();
    let mut r = rng(606);
    let mut min: f64 = f64::INFINITY;
    for sys in &corpus {
        let grid = auto_grid(sys, 0.0, 4.0).unwrap();
        for _ in 0..1000 {
            let t = r.random_range(0.0..4.0);
            let x: Vec<f64> = (0..sys.dim())
                .map(|i| grid.center[i] + r.random_range(-grid.half_width..grid.half_width))
                .collect();
            min = min.min(g_function(sys, t, &x).unwrap());
        }
    }
    ensure(min >= -1e-10, format!("{} systems x 1000 samples, min G = {min:.3e}", corpus.len()))
}

fn c7_perturbed_relation() -> Check {
    let t = linspace(0.0, 4.0, 81);
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, eps) in [0.005, 0.01, 0.05].into_iter().enumerate() {
        let mut worst: f64 = 0.0;
        let mut rise: f64 = 0.0;
        for ps in perturbed_lw_corpus(700 + k as u64, 20, 3, 1.0, eps).unwrap() {
            for &s in &t {
                worst = worst.max((relation_ratio(&ps, s).unwrap() - 1.0).abs());
            }
            let q0 = qtilde_exact_integer(&ps, 0.0).unwrap();
            let vals: Vec<f64> = t.iter().map(|&s| qtilde_exact_integer(&ps, s).unwrap()).collect();
            for w in vals.windows(2) {
                rise = rise.max((w[1] - w[0]) / q0);
            }
        }
        ok &= worst <= 10.0 * eps && rise <= 1e-9;
        lines.push(format!("eps {eps}: max |rel - 1| = {worst:.2e} (limit {:.2e}), max rise {rise:.1e}", 10.0 * eps));
    }
    ensure(ok, lines.join("; "))
}

fn c8_optimal_v0() -> Check {
    let mut r = rng(808);
    let mut worst_res: f64 = 0.0;
    let mut worst_s: f64 = f64::INFINITY;
    let mut s_checks = 0;
    let mut systems = 0;
    for (k, eps) in [0.005, 0.01, 0.05].into_iter().enumerate() {
        let count = [17, 17, 16][k];
        for ps in perturbed_lw_corpus(800 + k as u64, count, 3, 1.0, eps).unwrap() {
            systems += 1;
            let small = epsilon_of(&ps).unwrap() <= ps.gap_margin() / 20.0;
            for _ in 0..20 {
                let t = r.random_range(0.0..4.0);
                let x: Vec<f64> = (0..3).map(|_| r.random_range(-2.0..2.0)).collect();
                let v0 = optimal_v0(&ps, t, &x).unwrap();
                let (res, scale) = v0_residual(&ps, t, &x, &v0).unwrap();
                worst_res = worst_res.max(res / scale);
                if small {
                    let s = s_functional(&ps, t, &x, &v0).unwrap();
                    worst_s = worst_s.min(s.value / s.natural_scale);
                    s_checks += 1;
                }
            }
        }
    }
    ensure(
        worst_res <= 1e-10 && worst_s >= -1e-10 && s_checks > 0,
        format!("{systems} systems; max residual/scale {worst_res:.2e}; {s_checks} S samples, min S/scale {worst_s:.2e}"),
    )
}

fn c9_kakeya_endpoint() -> Check {
    let grid = GridSpec::new(vec![0.5, 0.5], 0.5, 512).unwrap();
    let mut ratios = Vec::new();
    for m in [8, 16, 32] {
        let fams = sharpness_family(2, 2, 1.0 / m as f64).unwrap();
        ratios.push(kakeya_ratio(&fams, 2.0, &grid).unwrap().ratio);
    }
    ensure(ratios.iter().all(|r| (r - 1.0).abs() <= 0.02), format!("ratios {ratios:?}"))
}

fn c10_kakeya_uniformity() -> Check {
    let grid = transversal_grid(3, 128).unwrap();
    let mut worst: f64 = 0.0;
    let mut lines = Vec::new();
    for seed in 1..=3 {
        let ratios: Vec<f64> = [0.125, 0.0625, 0.03125]
            .iter()
            .map(|&d| kakeya_ratio(&random_transversal_families(3, d, 0.1, seed).unwrap(), 2.0, &grid).unwrap().ratio)
            .collect();
        let growth = ratios.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        worst = worst.max(growth);
        lines.push(format!("seed {seed}: {:.4} {:.4} {:.4}", ratios[0], ratios[1], ratios[2]));
    }
    ensure(worst <= 1.5, format!("max growth per halving {worst:.3}; {}", lines.join(", ")))
}

fn c11_sharpness() -> Check {
    let grid = GridSpec::new(vec![0.5, 0.5], 0.5, 512).unwrap();
    let deltas = [0.125, 0.0625, 0.03125, 0.015625];
    let ratios: Vec<f64> =
        deltas.iter().map(|&d| kakeya_ratio(&sharpness_family(2, 2, d).unwrap(), 1.5, &grid).unwrap().ratio).collect();
    let slope = loglog_slope(&deltas, &ratios).unwrap();
    // n (n - 1 - n/q) with n = 2, q = 3/2
    let predicted = -2.0 / 3.0;
    ensure((slope / predicted - 1.0).abs() <= 0.15, format!("slope {slope:.4} vs {predicted:.4}"))
}

fn c12_joints() -> Check {
    for m in 1..=6 {
        let j = find_joints_default(&lattice_config(m).unwrap()).unwrap();
        if j.len() != m * m * m || j.iter().any(|j| j.theta != 1.0) {
            return Err(format!("m = {m}: {} joints", j.len()));
        }
    }
    let rows = lattice_sweep(&[1, 2, 3, 4, 5, 6]).unwrap();
    let lines: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let joints: Vec<usize> = rows.iter().map(|r| r.2).collect();
    let e = fit_exponent(&lines, &joints).unwrap();
    ensure((1.45..=1.55).contains(&e), format!("m^3 unit joints for m = 1..6; fitted exponent {e:.4}"))
}

fn c13_lemma_checker() -> Check {
    let lw = lw_matrices(3).unwrap();
    if !notmon_lemma_check(&lw, 1e-10).unwrap().all_hold {
        return Err("hypotheses fail for the coordinate matrices".into());
    }
    let mut r = rng(1313);
    for trial in 0..100 {
        let d = random_invertible(&mut r, 3);
        let ms: Vec<SymMatrix> = lw.iter().map(|m| m.congruence(&d)).collect();
        if !notmon_lemma_check(&ms, 1e-10).unwrap().all_hold {
            return Err(format!("congruence {trial} fails"));
        }
        for j in 0..3 {
            let mut bad = ms.clone();
            bad[j] = bad[j] + SymMatrix::identity(3).scale(0.1);
            if notmon_lemma_check(&bad, 1e-10).unwrap().rank {
                return Err(format!("congruence {trial}: rank passes after perturbing matrix {j}"));
            }
        }
    }
    Ok("coordinate matrices and 100 congruences pass; every +0.1 I perturbation fails the rank test".into())
}

fn c14_notmon_harness() -> Check {
    let lw = lw_matrices(3).unwrap();
    let singletons: Vec<Vec<SymMatrix>> = lw.iter().map(|m| vec![*m]).collect();
    let rep = notmon_search(&singletons, 11, 1000, &NotmonOptions::default()).unwrap();
    if !rep.violations.is_empty() || rep.failed_trials > 0 {
        return Err(format!("{} violations, {} failed trials", rep.violations.len(), rep.failed_trials));
    }
    let u = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt(), 0.0];
    let mut sets = singletons.clone();
    sets[0].push(SymMatrix::identity(3) - SymMatrix::outer(&u));
    let opts = NotmonOptions { velocity_scale: 0.5, recenter: true, ..NotmonOptions::default() };
    let explore = notmon_search(&sets, 7, 30, &opts).unwrap();
    for v in &explore.violations {
        let json = serde_json::to_string(&v.system).unwrap();
        let (q0, q1, violated) = replay_witness(&json, opts.threshold).unwrap();
        if !violated || rel(q1 / q0, v.ratio) > 1e-9 {
            return Err(format!("witness of trial {} does not replay (ratio {} vs {})", v.trial, q1 / q0, v.ratio));
        }
    }
    Ok(format!(
        "singleton: 1000 trials, 0 violations, best ratio {:.6}; exploratory: {} witnesses found and replayed (best {:.5})",
        rep.best_ratio,
        explore.violations.len(),
        explore.best_ratio
    ))
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        if entry.file_name() == "out" {
            continue;
        }
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Every artifact of every manifest, keyed by file name.
fn run_all(dir: &Path, workers: &str) -> std::result::Result<Vec<(String, Vec<u8>)>, String> {
    let mut manifests: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    manifests.sort();
    let out = dir.join("out");
    let _ = fs::remove_dir_all(&out);
    for m in &manifests {
        let o = Command::new(env!("CARGO_BIN_EXE_hflab"))
            .args(["run", m.to_str().unwrap(), "--workers", workers])
            .env_remove("HFLAB_SEED")
            .output()
            .unwrap();
        if o.status.code() != Some(0) {
            return Err(format!("{} exited {:?}: {}", m.display(), o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| !p.to_string_lossy().ends_with(".meta.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    Ok(files)
}

fn c15_cli_determinism() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(&Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests"), tmp.path());
    let a = run_all(tmp.path(), "1")?;
    let b = run_all(tmp.path(), "4")?;
    let c = run_all(tmp.path(), "1")?;
    if a.len() < 10 {
        return Err(format!("only {} artifacts", a.len()));
    }
    for (x, y) in a.iter().zip(&b).chain(a.iter().zip(&c)) {
        if x != y {
            return Err(format!("{} differs between runs", x.0));
        }
    }
    ensure(a.len() == b.len() && a.len() == c.len(), format!("{} artifacts identical across workers 1, 4 and a repeat", a.len()))
}

fn criteria() -> Vec<Criterion> {
    let s = Duration::from_secs;
    vec![
        Criterion { id: 1, name: "gaussian normalization", limit: Some(s(5)), run: c1_normalization },
        Criterion { id: 2, name: "closed form vs quadrature", limit: Some(s(120)), run: c2_closed_form_oracle },
        Criterion { id: 3, name: "monotonicity under the Loewner condition", limit: Some(s(300)), run: c3_monotonicity },
        Criterion { id: 4, name: "endpoint bound", limit: None, run: c4_endpoint_bound },
        Criterion { id: 5, name: "fractional derivative identity", limit: None, run: c5_derivative_identity },
        Criterion { id: 6, name: "G non-negativity", limit: None, run: c6_g_nonnegative },
        Criterion { id: 7, name: "perturbed relation and Q~ monotonicity", limit: Some(s(180)), run: c7_perturbed_relation },
        Criterion { id: 8, name: "optimal v0 identity and S sign", limit: None, run: c8_optimal_v0 },
        Criterion { id: 9, name: "Kakeya endpoint identity (d = 2)", limit: Some(s(60)), run: c9_kakeya_endpoint },
        Criterion { id: 10, name: "Kakeya uniformity (d = 3, q = 2)", limit: Some(s(600)), run: c10_kakeya_uniformity },
        Criterion { id: 11, name: "sharpness exponent", limit: None, run: c11_sharpness },
        Criterion { id: 12, name: "joints exactness", limit: Some(s(120)), run: c12_joints },
        Criterion { id: 13, name: "endpoint lemma checker", limit: None, run: c13_lemma_checker },
        Criterion { id: 14, name: "non-monotonicity harness", limit: None, run: c14_notmon_harness },
        Criterion { id: 15, name: "CLI determinism", limit: None, run: c15_cli_determinism },
    ]
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    let mut ran = 0;
    for c in criteria() {
        if !selected.is_empty() && !selected.contains(&c.id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.limit) {
            (Ok(d), Some(l)) if elapsed > l => Err(format!("{d}; runtime {:.1} s over the {} s limit", elapsed.as_secs_f64(), l.as_secs())),
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} [{:>2}] {} ({:.1} s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
