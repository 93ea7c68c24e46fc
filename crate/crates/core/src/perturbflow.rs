//! Perturbed heat flow: per-atom matrices close to per-family base
//! matrices `M_j`.
//!
//! Besides the det-weighted functional `Q~_p` this module carries the
//! S-functional with its recentering velocity `v0`, the endpoint bound check,
//! and the explorers for the rank `d - 1` endpoint where monotonicity fails.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussflow::{
    auto_grid_with, for_each_tuple, complete_square, q_exact_integer, q_quadrature, tuple_sum, FlowSystem,
    GaussianAtom, GaussianFamily, GridPolicy, Prepared,
};
use crate::io::RawSystem;
use crate::matcore::{
    dot, gap_margin, is_psd, loewner_leq, norm2, psd_sqrt, weighted_sum, ExponentVector, SquareMatrix, SymMatrix,
    DEFAULT_PSD_TOL,
};

/// A flow system together with the base matrices its atoms perturb.
#[derive(Clone, Debug)]
pub struct PerturbedSystem {
    base: Vec<SymMatrix>,
    base_sqrt: Vec<SymMatrix>,
    system: FlowSystem,
    m_star: SymMatrix,
    m_star_inv: SymMatrix,
    gap: f64,
}

impl PerturbedSystem {
    /// Requires a strictly positive gap margin for `(base, p)`.
    pub fn new(base: Vec<SymMatrix>, system: FlowSystem) -> Result<Self> {
        if base.len() != system.n() {
            return Err(Error::DimensionMismatch { expected: system.n(), found: base.len() });
        }
        if let Some(m) = base.iter().find(|m| m.dim() != system.dim()) {
            return Err(Error::DimensionMismatch { expected: system.dim(), found: m.dim() });
        }
        for (j, m) in base.iter().enumerate() {
            if !is_psd(m, DEFAULT_PSD_TOL)? {
                return Err(Error::Domain(format!("base matrix {j} is not positive semi-definite")));
            }
        }
        let gap = gap_margin(&base, system.p())?;
        if !(gap > 0.0) {
            return Err(Error::Domain(format!("gap condition fails: margin {gap:e} is not positive")));
        }
        let m_star = weighted_sum(&base, system.p())?;
        let m_star_inv = m_star.inverse()?;
        let base_sqrt = base.iter().map(psd_sqrt).collect::<Result<_>>()?;
        Ok(Self { base, base_sqrt, system, m_star, m_star_inv, gap })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawSystem = serde_json::from_str(s)?;
        let base = raw
            .base_matrices
            .clone()
            .ok_or_else(|| invalid("perturbed system needs \"base_matrices\""))?;
        let system = raw.into_flow_system(None)?;
        Self::new(base, system)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RawSystem::from_flow_system(&self.system, Some(&self.base)))?)
    }

    pub fn base(&self) -> &[SymMatrix] {
        &self.base
    }

    pub fn system(&self) -> &FlowSystem {
        &self.system
    }

    pub fn p(&self) -> &ExponentVector {
        self.system.p()
    }

    pub fn m_star(&self) -> &SymMatrix {
        &self.m_star
    }

    pub fn gap_margin(&self) -> f64 {
        self.gap
    }

    pub fn dim(&self) -> usize {
        self.system.dim()
    }
}

/// `B = A^{1/2}` and `w = B (v - v0)` for one atom.
#[derive(Clone, Debug, PartialEq)]
pub struct WSample {
    pub b: SymMatrix,
    pub w_vec: Vec<f64>,
}

impl WSample {
    pub fn new(atom: &GaussianAtom, v0: &[f64]) -> Result<Self> {
        let b = psd_sqrt(atom.matrix())?;
        let diff: Vec<f64> = atom.velocity().iter().zip(v0).map(|(v, s)| v - s).collect();
        Ok(Self { w_vec: b.mul_vec(&diff), b })
    }
}

/// `max_{j,k} || A_{j,k}^{1/2} - M_j^{1/2} ||`.
pub fn epsilon_of(ps: &PerturbedSystem) -> Result<f64> {
    let mut eps: f64 = 0.0;
    for (fam, m_sqrt) in ps.system.families().iter().zip(&ps.base_sqrt) {
        for a in fam.atoms() {
            eps = eps.max((psd_sqrt(a.matrix())? - *m_sqrt).norm());
        }
    }
    Ok(eps)
}

/// `Q~_p(t)`: tuple sum with `det(A_*)^{+1/2}`; integer `p` only.
pub fn qtilde_exact_integer(ps: &PerturbedSystem, t: f64) -> Result<f64> {
    tuple_sum(&ps.system, t, 0.5)
}

/// `Q_p(t) det(M_*) / Q~_p(t)`; integer `p` only.
pub fn relation_ratio(ps: &PerturbedSystem, t: f64) -> Result<f64> {
    Ok(q_exact_integer(&ps.system, t)? * ps.m_star.det() / qtilde_exact_integer(ps, t)?)
}

/// One tuple of the integer-`p` expansion.
#[derive(Clone, Debug, PartialEq)]
pub struct TupleTerm {
    pub weight: f64,
    pub det: f64,
    pub delta: f64,
    pub q_term: f64,
    pub qtilde_term: f64,
}

/// Per-tuple terms of `Q_p(t)` and `Q~_p(t)` in enumeration order.
pub fn tuple_terms(system: &FlowSystem, t: f64) -> Result<Vec<TupleTerm>> {
    let mut out = Vec::new();
    for_each_tuple(system, |weight, atoms| {
        let cs = complete_square(atoms)?;
        let det = cs.a_star.det();
        let e = (-PI * cs.delta * t * t).exp();
        out.push(TupleTerm {
            weight,
            det,
            delta: cs.delta,
            q_term: weight * det.powf(-0.5) * e,
            qtilde_term: weight * det.sqrt() * e,
        });
        Ok(())
    })?;
    Ok(out)
}

/// The S-functional and its pieces at one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SParts {
    pub value: f64,
    /// `sum p_j ||E w_j||^2`
    pub mean_term: f64,
    /// `sum p_j E <(I - M_j^{1/2} M_*^{-1} M_j^{1/2})(w_j - E w_j), w_j - E w_j>`
    pub variance_term: f64,
    /// `<M_*^{-1} y, y>` with `y = sum p_j M_j^{1/2} E w_j`
    pub cross_term: f64,
    /// `det(M_*) sum p_j E ||w_j||^2`
    pub natural_scale: f64,
}

struct PointExpectations {
    /// per-family atom probabilities
    prob: Vec<Vec<f64>>,
}

fn expectations(ps: &PerturbedSystem, t: f64, x: &[f64]) -> Result<PointExpectations> {
    if x.len() != ps.dim() {
        return Err(Error::DimensionMismatch { expected: ps.dim(), found: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) || !t.is_finite() {
        return Err(Error::NonFinite("evaluation point".into()));
    }
    let prep = Prepared::new(&ps.system, t);
    let mut s = prep.scratch();
    prep.fill(x, &mut s);
    let prob = (0..prep.n()).map(|j| s.prob[prep.family_range(j)].to_vec()).collect();
    Ok(PointExpectations { prob })
}

/// Evaluates the S-functional at `(t, x)` with recentering velocity `v0`.
pub fn s_functional(ps: &PerturbedSystem, t: f64, x: &[f64], v0: &[f64]) -> Result<SParts> {
    let d = ps.dim();
    if v0.len() != d {
        return Err(Error::DimensionMismatch { expected: d, found: v0.len() });
    }
    let ex = expectations(ps, t, x)?;
    let p = ps.p().values();
    let mut mean_term = 0.0;
    let mut variance_term = 0.0;
    let mut second_moment = 0.0;
    let mut y = vec![0.0; d];
    for (j, fam) in ps.system.families().iter().enumerate() {
        let samples: Vec<WSample> = fam.atoms().iter().map(|a| WSample::new(a, v0)).collect::<Result<_>>()?;
        let probs = &ex.prob[j];
        let mut ew = vec![0.0; d];
        for (s, &pr) in samples.iter().zip(probs) {
            for i in 0..d {
                ew[i] += pr * s.w_vec[i];
            }
        }
        let c = SymMatrix::identity(d) - ps.m_star_inv.sandwich(&ps.base_sqrt[j]);
        let mut var = 0.0;
        let mut sq = 0.0;
        for (s, &pr) in samples.iter().zip(probs) {
            let diff: Vec<f64> = s.w_vec.iter().zip(&ew).map(|(a, b)| a - b).collect();
            var += pr * c.quad_form(&diff);
            sq += pr * dot(&s.w_vec, &s.w_vec);
        }
        mean_term += p[j] * dot(&ew, &ew);
        variance_term += p[j] * var;
        second_moment += p[j] * sq;
        for (yi, mi) in y.iter_mut().zip(ps.base_sqrt[j].mul_vec(&ew)) {
            *yi += p[j] * mi;
        }
    }
    let cross_term = dot(&ps.m_star_inv.mul_vec(&y), &y);
    let det = ps.m_star.det();
    Ok(SParts {
        value: det * (mean_term + variance_term - cross_term),
        mean_term,
        variance_term,
        cross_term,
        natural_scale: det * second_moment,
    })
}

/// `K = sum p_j M_j^{1/2} E(B_j)` and `r = sum p_j M_j^{1/2} E(B_j v_j)`.
fn v0_system(ps: &PerturbedSystem, t: f64, x: &[f64]) -> Result<(SquareMatrix, Vec<f64>, f64)> {
    let d = ps.dim();
    let ex = expectations(ps, t, x)?;
    let p = ps.p().values();
    let mut k = SquareMatrix::zeros(d);
    let mut r = vec![0.0; d];
    let mut scale = 0.0;
    for (j, fam) in ps.system.families().iter().enumerate() {
        for (a, &pr) in fam.atoms().iter().zip(&ex.prob[j]) {
            let b = psd_sqrt(a.matrix())?;
            let mb = ps.base_sqrt[j].product(&b);
            k = k.add(&mb.scale(p[j] * pr));
            let mbv = mb.mul_vec(a.velocity());
            scale += p[j] * pr * norm2(&mbv);
            for (ri, x) in r.iter_mut().zip(mbv) {
                *ri += p[j] * pr * x;
            }
        }
    }
    Ok((k, r, scale))
}

/// Recentering velocity that makes `sum p_j M_j^{1/2} E(w_j)` vanish.
pub fn optimal_v0(ps: &PerturbedSystem, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    let (k, r, _) = v0_system(ps, t, x)?;
    let sv = k.singular_values();
    let (smin, smax) = (sv[sv.len() - 1], sv[0]);
    if !(smin > 1e-12 * smax.max(f64::MIN_POSITIVE)) {
        return Err(Error::Singular { context: format!("mean matrix for v0 (smallest singular value {smin:e})"), det: k.det() });
    }
    k.solve(&r)
}

/// `(||sum p_j M_j^{1/2} E w_j||, scale)` where the scale is
/// `sum p_j E ||M_j^{1/2} B_j v_j|| + ||K|| ||v0||`.
pub fn v0_residual(ps: &PerturbedSystem, t: f64, x: &[f64], v0: &[f64]) -> Result<(f64, f64)> {
    let (k, r, scale) = v0_system(ps, t, x)?;
    let kv = k.mul_vec(v0);
    let res: Vec<f64> = r.iter().zip(&kv).map(|(a, b)| a - b).collect();
    let knorm = k.singular_values()[0];
    Ok((norm2(&res), scale + knorm * norm2(v0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub q1: f64,
    pub bound: f64,
    pub ratio: f64,
    pub epsilon: f64,
    pub gap_margin: f64,
    pub slack_multiplier: f64,
    /// Allowance for evaluation error on top of `slack_multiplier * epsilon`.
    pub numerical_tol: f64,
    /// `(ratio - 1) / epsilon` when `epsilon > 0`.
    pub empirical_c: Option<f64>,
    pub exact: bool,
    pub pass: bool,
}

/// Checks `Q_p(1) <= (1 + slack_multiplier eps) det(M_*)^{-1/2} prod mass_j^{p_j}`.
pub fn corollary_bound_check(ps: &PerturbedSystem, slack_multiplier: f64) -> Result<BoundReport> {
    let exact = ps.p().as_integers().is_some();
    let (q1, numerical_tol) = if exact {
        (q_exact_integer(&ps.system, 1.0)?, 1e-12)
    } else {
        let grid = crate::gaussflow::auto_grid(&ps.system, 1.0, 1.0)?;
        (q_quadrature(&ps.system, 1.0, &grid)?, 1e-9)
    };
    let bound = ps.m_star.det().powf(-0.5) * ps.system.mass_product();
    let epsilon = epsilon_of(ps)?;
    let ratio = q1 / bound;
    Ok(BoundReport {
        q1,
        bound,
        ratio,
        epsilon,
        gap_margin: ps.gap,
        slack_multiplier,
        numerical_tol,
        empirical_c: (epsilon > 0.0).then(|| (ratio - 1.0) / epsilon),
        exact,
        pass: ratio <= 1.0 + slack_multiplier * epsilon + numerical_tol,
    })
}

/// Hypotheses of the rank `d - 1` endpoint lemma for `d` matrices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotmonLemmaReport {
    pub psd: bool,
    /// Per matrix: exactly one eigenvalue below `tol ||A||`, the next at
    /// least `1e3 tol ||A||`.
    pub rank_ok: Vec<bool>,
    pub rank: bool,
    /// `|det|` of the unit kernel vectors.
    pub kernel_volume: f64,
    pub kernels_span: bool,
    /// `(1/(d-1)) sum A_i >= A_j` for every `j`.
    pub order: bool,
    pub all_hold: bool,
}

/// Reports which hypotheses hold; never fails on well-formed input.
pub fn notmon_lemma_check(matrices: &[SymMatrix], tol: f64) -> Result<NotmonLemmaReport> {
    let d = matrices.len();
    if d < 3 {
        return Err(invalid("the endpoint lemma needs d >= 3 matrices"));
    }
    if let Some(m) = matrices.iter().find(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: m.dim() });
    }
    let psd = matrices.iter().map(|m| is_psd(m, DEFAULT_PSD_TOL)).collect::<Result<Vec<_>>>()?.iter().all(|&b| b);
    let mut rank_ok = Vec::with_capacity(d);
    let mut kernel = SquareMatrix::zeros(d);
    for (j, m) in matrices.iter().enumerate() {
        let e = m.eigen();
        let scale = m.norm();
        rank_ok.push(scale > 0.0 && e.values[0].abs() < tol * scale && e.values[1] >= 1e3 * tol * scale);
        for i in 0..d {
            kernel.set(i, j, e.vectors.get(i, 0));
        }
    }
    let kernel_volume = kernel.det().abs();
    let kernels_span = kernel_volume > 1e-8;
    let avg = matrices.iter().fold(SymMatrix::zeros(d), |acc, m| acc + *m).scale(1.0 / (d as f64 - 1.0));
    let order = matrices
        .iter()
        .map(|m| loewner_leq(m, &avg, tol))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .all(|&b| b);
    let rank = rank_ok.iter().all(|&b| b);
    Ok(NotmonLemmaReport { psd, rank_ok, rank, kernel_volume, kernels_span, order, all_hold: psd && rank && kernels_span && order })
}

/// Sampler settings for [`notmon_search`].
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct NotmonOptions {
    pub min_atoms: usize,
    pub max_atoms: usize,
    pub velocity_scale: f64,
    /// Shift each family's velocities to zero weighted mean.
    pub recenter: bool,
    /// Relative increase `Q(1) > (1 + threshold) Q(0)` counted as a violation.
    pub threshold: f64,
}

impl Default for NotmonOptions {
    fn default() -> Self {
        Self { min_atoms: 1, max_atoms: 3, velocity_scale: 1.0, recenter: false, threshold: 1e-6 }
    }
}

/// Screening grid of the search (about 1e-5 relative accuracy).
pub fn search_policy() -> GridPolicy {
    GridPolicy { tail: 1e-14, spacing_factor: 0.45, branch_tol: 1e-7, max_nodes: 2e5 }
}

/// Trials whose screened ratio exceeds `1 - CONFIRM_BAND` are re-evaluated
/// with the default policy before being classified.
pub const CONFIRM_BAND: f64 = 1e-3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub ratio: f64,
    pub q0: f64,
    pub q1: f64,
    pub system: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub q0: f64,
    pub q1: f64,
    pub ratio: f64,
    /// Re-evaluated on the default policy after screening.
    pub confirmed: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NotmonSearchReport {
    pub dim: usize,
    pub p: f64,
    pub seed: u64,
    pub trials: usize,
    pub failed_trials: usize,
    pub best_ratio: f64,
    pub best_trial: Option<usize>,
    pub violations: Vec<Violation>,
    /// Successful trials in trial order.
    pub records: Vec<TrialRecord>,
}

/// Draws the random discrete measures of one trial.
pub fn notmon_trial_system(
    base_sets: &[Vec<SymMatrix>],
    seed: u64,
    trial: usize,
    opts: &NotmonOptions,
) -> Result<FlowSystem> {
    let d = base_sets.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
    let fams = base_sets
        .iter()
        .map(|set| {
            let k = rng.random_range(opts.min_atoms..=opts.max_atoms);
            let atoms = (0..k)
                .map(|_| {
                    let m = set[rng.random_range(0..set.len())];
                    let v: Vec<f64> = (0..d)
                        .map(|_| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            opts.velocity_scale * z
                        })
                        .collect();
                    Ok((m, v, rng.random_range(0.5..2.0)))
                })
                .collect::<Result<Vec<(SymMatrix, Vec<f64>, f64)>>>()?;
            let mut shift = vec![0.0; d];
            if opts.recenter {
                let mass: f64 = atoms.iter().map(|a| a.2).sum();
                for (_, v, w) in &atoms {
                    for i in 0..d {
                        shift[i] += w * v[i] / mass;
                    }
                }
            }
            GaussianFamily::new(
                atoms
                    .into_iter()
                    .map(|(m, v, w)| GaussianAtom::new(m, v.iter().zip(&shift).map(|(a, b)| a - b).collect(), w))
                    .collect::<Result<_>>()?,
            )
        })
        .collect::<Result<_>>()?;
    FlowSystem::new(fams, ExponentVector::uniform(d, 1.0 / (d as f64 - 1.0))?)
}

/// `(Q(0), Q(1))`. `Q(0)` is the closed form `det(A_*)^{-1/2} prod mass^p`
/// when every family has a constant matrix (all centers sit at the origin),
/// otherwise both values share one quadrature grid.
pub fn endpoint_pair(system: &FlowSystem, policy: &GridPolicy) -> Result<(f64, f64)> {
    let grid = auto_grid_with(system, 0.0, 1.0, policy)?;
    let q0 = match system.a_star() {
        Some(a) if !a.is_singular() => a.det().powf(-0.5) * system.mass_product(),
        _ => q_quadrature(system, 0.0, &grid)?,
    };
    Ok((q0, q_quadrature(system, 1.0, &grid)?))
}

/// Screens on [`search_policy`] and confirms near-violations on the default
/// policy. The flag tells whether the confirming evaluation ran.
pub fn screened_endpoint_pair(system: &FlowSystem) -> Result<(f64, f64, bool)> {
    let (q0, q1) = endpoint_pair(system, &search_policy())?;
    if q1 > (1.0 - CONFIRM_BAND) * q0 {
        let (q0, q1) = endpoint_pair(system, &GridPolicy::default())?;
        return Ok((q0, q1, true));
    }
    Ok((q0, q1, false))
}

/// Random search for `Q_p(1) > (1 + threshold) Q_p(0)` at `p = 1/(d-1)`.
/// Trials are independent (seed `seed + trial`) and evaluated in parallel;
/// failed quadratures are logged and counted.
pub fn notmon_search(
    base_sets: &[Vec<SymMatrix>],
    seed: u64,
    trials: usize,
    opts: &NotmonOptions,
) -> Result<NotmonSearchReport> {
    let d = base_sets.len();
    if d < 3 {
        return Err(invalid("notmon search needs d >= 3 matrix sets"));
    }
    for set in base_sets {
        if set.is_empty() {
            return Err(invalid("empty matrix set"));
        }
        if let Some(m) = set.iter().find(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: m.dim() });
        }
    }
    if opts.min_atoms == 0 || opts.min_atoms > opts.max_atoms {
        return Err(invalid("atom count range must satisfy 1 <= min <= max"));
    }
    let outcomes: Vec<Option<(f64, f64, bool, FlowSystem)>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let run = || -> Result<(f64, f64, bool, FlowSystem)> {
                let sys = notmon_trial_system(base_sets, seed, trial, opts)?;
                let (q0, q1, confirmed) = screened_endpoint_pair(&sys)?;
                Ok((q0, q1, confirmed, sys))
            };
            match run() {
                Ok(r) => Some(r),
                Err(e) => {
                    log::warn!("notmon trial {trial} failed: {e}");
                    None
                }
            }
        })
        .collect();
    let mut report = NotmonSearchReport {
        dim: d,
        p: 1.0 / (d as f64 - 1.0),
        seed,
        trials,
        failed_trials: 0,
        best_ratio: f64::NEG_INFINITY,
        best_trial: None,
        violations: Vec::new(),
        records: Vec::with_capacity(trials),
    };
    for (trial, outcome) in outcomes.into_iter().enumerate() {
        let Some((q0, q1, confirmed, sys)) = outcome else {
            report.failed_trials += 1;
            continue;
        };
        let ratio = q1 / q0;
        report.records.push(TrialRecord { trial, q0, q1, ratio, confirmed });
        if ratio > report.best_ratio {
            report.best_ratio = ratio;
            report.best_trial = Some(trial);
        }
        if q1 > (1.0 + opts.threshold) * q0 {
            let system = serde_json::to_value(RawSystem::from_flow_system(&sys, None))?;
            report.violations.push(Violation { trial, ratio, q0, q1, system });
        }
    }
    Ok(report)
}

/// Re-evaluates a serialized witness; returns `(Q(0), Q(1), violated)`.
pub fn replay_witness(system_json: &str, threshold: f64) -> Result<(f64, f64, bool)> {
    let sys = FlowSystem::from_json_str(system_json)?;
    let (q0, q1) = endpoint_pair(&sys, &GridPolicy::default())?;
    Ok((q0, q1, q1 > (1.0 + threshold) * q0))
}

/// PSD clip of a symmetric matrix.
fn clip_psd(m: &SymMatrix) -> SymMatrix {
    m.map_spectrum(|l| l.max(0.0))
}

/// Random `A` with `||A^{1/2} - M^{1/2}|| = eps` (up to the PSD clip, which
/// can only shrink the deviation after rescaling).
pub fn perturbed_matrix<R: Rng>(m: &SymMatrix, eps: f64, rng: &mut R) -> Result<SymMatrix> {
    let d = m.dim();
    let root = psd_sqrt(m)?;
    if eps == 0.0 {
        return Ok(*m);
    }
    let raw = SymMatrix::from_fn(d, |_, _| StandardNormal.sample(rng));
    let delta = raw.scale(eps / raw.norm());
    let b = clip_psd(&(root + delta));
    let dev = (b - root).norm();
    let b = if dev > eps { root + (b - root).scale(eps / dev) } else { b };
    let sq = b.product(&b);
    Ok(SymMatrix::from_fn(d, |i, j| 0.5 * (sq.get(i, j) + sq.get(j, i))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::lw_matrices;

    fn single(m: SymMatrix, v: Vec<f64>, w: f64) -> GaussianFamily {
        GaussianFamily::new(vec![GaussianAtom::new(m, v, w).unwrap()]).unwrap()
    }

    fn lw_system(d: usize, p: f64, vs: &[Vec<f64>]) -> PerturbedSystem {
        let base = lw_matrices(d).unwrap();
        let fams = base.iter().zip(vs).map(|(m, v)| single(*m, v.clone(), 1.0)).collect();
        let sys = FlowSystem::new(fams, ExponentVector::uniform(d, p).unwrap()).unwrap();
        PerturbedSystem::new(base, sys).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        let ps = lw_system(3, 1.0, &[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]);
        assert_eq!(epsilon_of(&ps).unwrap(), 0.0);

        let s = 0.03;
        let sys = FlowSystem::new(
            vec![single(SymMatrix::identity(2).scale((1.0 + s) * (1.0 + s)), vec![0.0, 0.0], 1.0)],
            ExponentVector::new(vec![2.0]).unwrap(),
        )
        .unwrap();
        let ps = PerturbedSystem::new(vec![SymMatrix::identity(2)], sys).unwrap();
        assert!((epsilon_of(&ps).unwrap() - s).abs() < 1e-12);

        let lw = lw_matrices(3).unwrap();
        let a = lw[0] + SymMatrix::outer(&[1.0, 0.0, 0.0]).scale(0.01);
        let sys = FlowSystem::new(
            vec![single(a, vec![0.0; 3], 1.0), single(lw[1], vec![0.0; 3], 1.0), single(lw[2], vec![0.0; 3], 1.0)],
            ExponentVector::uniform(3, 1.0).unwrap(),
        )
        .unwrap();
        let ps = PerturbedSystem::new(lw, sys).unwrap();
        assert!((epsilon_of(&ps).unwrap() - 0.1).abs() < 1e-10);
    }

    #[test]
    fn gap_is_required() {
        let base = lw_matrices(3).unwrap();
        let fams = base.iter().map(|m| single(*m, vec![0.0; 3], 1.0)).collect();
        let sys = FlowSystem::new(fams, ExponentVector::uniform(3, 0.5).unwrap()).unwrap();
        assert!(PerturbedSystem::new(base, sys).is_err());
    }

    #[test]
    fn qtilde_unperturbed_lw() {
        let base = lw_matrices(2).unwrap();
        let fams = base.iter().map(|m| single(*m, vec![0.0; 2], 1.0)).collect();
        let sys = FlowSystem::new(fams, ExponentVector::uniform(2, 1.0).unwrap()).unwrap();
        // d = 2 LW at p = 1 has zero gap, so evaluate the closed form directly
        for t in [0.0, 1.0, 2.5] {
            assert!((tuple_sum(&sys, t, 0.5).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn s_functional_two_atom_example() {
        let i2 = SymMatrix::identity(2);
        let fam = GaussianFamily::with_matrix(i2, &[(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 1.0)]).unwrap();
        let sys = FlowSystem::new(vec![fam], ExponentVector::new(vec![2.0]).unwrap()).unwrap();
        let ps = PerturbedSystem::new(vec![i2], sys).unwrap();
        let s = s_functional(&ps, 0.0, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        // M_* = 2I, probabilities 1/2, w = +-e1, E w = 0, C = I/2
        assert!(s.mean_term.abs() < 1e-15);
        assert!((s.variance_term - 1.0).abs() < 1e-15);
        assert!(s.cross_term.abs() < 1e-15);
        assert!((s.value - 4.0).abs() < 1e-14);
    }

    #[test]
    fn s_functional_vanishes_for_common_velocity() {
        let v = vec![0.4, -1.0, 0.3];
        let ps = lw_system(3, 1.0, &[v.clone(), v.clone(), v.clone()]);
        let s = s_functional(&ps, 0.7, &[0.1, 0.2, 0.3], &v).unwrap();
        assert!(s.value.abs() < 1e-14);
    }

    #[test]
    fn optimal_v0_examples() {
        let ps = lw_system(3, 1.0, &[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]);
        let v0 = optimal_v0(&ps, 1.0, &[0.3, 0.1, -0.2]).unwrap();
        assert!(v0.iter().all(|v| v.abs() < 1e-15));

        let vs = [vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.0], vec![0.2, 0.2, -0.7]];
        let ps = lw_system(3, 1.0, &vs);
        let v0 = optimal_v0(&ps, 1.0, &[0.3, 0.1, -0.2]).unwrap();
        let mut rhs = vec![0.0; 3];
        for (m, v) in ps.base().iter().zip(&vs) {
            for (r, x) in rhs.iter_mut().zip(m.mul_vec(v)) {
                *r += x;
            }
        }
        let want = ps.m_star().solve(&rhs).unwrap();
        for (a, b) in v0.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let (res, scale) = v0_residual(&ps, 1.0, &[0.3, 0.1, -0.2], &v0).unwrap();
        assert!(res <= 1e-10 * scale);
    }

    #[test]
    fn bound_check_equality_at_zero_velocity() {
        let ps = lw_system(3, 1.0, &[vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]]);
        let r = corollary_bound_check(&ps, 10.0).unwrap();
        assert!(r.exact && r.pass);
        assert!((r.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lemma_check_examples() {
        let lw = lw_matrices(3).unwrap();
        assert!(notmon_lemma_check(&lw, 1e-10).unwrap().all_hold);
        let mut bad = lw.clone();
        bad[2] = bad[2] + SymMatrix::identity(3).scale(0.1);
        let r = notmon_lemma_check(&bad, 1e-10).unwrap();
        assert!(!r.rank && !r.all_hold);
        assert!(notmon_lemma_check(&lw[..2], 1e-10).is_err());
    }

    #[test]
    fn perturbed_matrix_hits_epsilon() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let lw = lw_matrices(3).unwrap();
        for eps in [0.005, 0.01, 0.05] {
            let a = perturbed_matrix(&lw[1], eps, &mut rng).unwrap();
            let dev = (psd_sqrt(&a).unwrap() - lw[1]).norm();
            assert!(dev <= eps * (1.0 + 1e-9) && dev > 0.2 * eps, "{dev} vs {eps}");
        }
    }

    #[test]
    fn json_round_trip() {
        let ps = lw_system(3, 1.0, &[vec![0.0, 1.0, 0.0], vec![0.0; 3], vec![0.5; 3]]);
        let back = PerturbedSystem::from_json_str(&ps.to_json_string().unwrap()).unwrap();
        assert_eq!(back.system(), ps.system());
        assert_eq!(back.base(), ps.base());
    }
}
