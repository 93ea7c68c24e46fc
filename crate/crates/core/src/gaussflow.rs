//! Heat flow of superpositions of sliding gaussians.
//!
//! A [`GaussianFamily`] is a finite weighted list of atoms `(A, v, w)`; its
//! density at time `t` is
//!
//! ```text
//! f(t, x) = sum_k w_k exp(-pi <A_k (x - v_k t), (x - v_k t)>)
//! ```
//!
//! and a [`FlowSystem`] pairs `n` families with exponents `p` so that
//! `Q_p(t) = int prod_j f_j(t, x)^{p_j} dx`. For integer `p` the integral is
//! a finite sum over atom tuples ([`q_exact_integer`]); otherwise it is
//! evaluated on a tensor grid ([`q_quadrature`]).
//!
//! All grid integrands are evaluated in the log domain: `log f_j` is a
//! log-sum-exp over atoms and the per-family atom probabilities used by the
//! expectation formulas are the matching softmax weights.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::GridSpec;
use crate::matcore::{
    dot, is_psd, norm2, weighted_sum, ExponentVector, SymMatrix, DEFAULT_PSD_TOL, MAX_DIM,
};
use crate::sum::KahanSum;

/// Cap on the number of atom tuples enumerated by the closed forms.
pub const MAX_TUPLES: f64 = 1e7;

/// One Dirac component of a velocity measure together with its exponent
/// matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianAtom {
    matrix: SymMatrix,
    velocity: Vec<f64>,
    weight: f64,
}

impl GaussianAtom {
    pub fn new(matrix: SymMatrix, velocity: Vec<f64>, weight: f64) -> Result<Self> {
        if velocity.len() != matrix.dim() {
            return Err(Error::DimensionMismatch { expected: matrix.dim(), found: velocity.len() });
        }
        if velocity.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("atom velocity".into()));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(invalid(format!("atom weight {weight} must be finite and > 0")));
        }
        if !is_psd(&matrix, DEFAULT_PSD_TOL)? {
            return Err(Error::Domain("atom matrix is not positive semi-definite".into()));
        }
        Ok(Self { matrix, velocity, weight })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.matrix
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// `w exp(-pi <A(x - vt), (x - vt)>)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let y: Vec<f64> = x.iter().zip(&self.velocity).map(|(xi, vi)| xi - vi * t).collect();
        self.weight * (-PI * self.matrix.quad_form(&y)).exp()
    }

    pub fn with_velocity(&self, velocity: Vec<f64>) -> Result<Self> {
        Self::new(self.matrix, velocity, self.weight)
    }

    pub fn with_weight(&self, weight: f64) -> Result<Self> {
        Self::new(self.matrix, self.velocity.clone(), weight)
    }
}

/// Finite weighted atom list realizing one measure.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianFamily {
    atoms: Vec<GaussianAtom>,
}

impl GaussianFamily {
    pub fn new(atoms: Vec<GaussianAtom>) -> Result<Self> {
        let first = atoms.first().ok_or_else(|| invalid("gaussian family needs at least one atom"))?;
        let d = first.dim();
        if let Some(a) = atoms.iter().find(|a| a.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: a.dim() });
        }
        Ok(Self { atoms })
    }

    /// Family whose atoms all share `matrix`.
    pub fn with_matrix(matrix: SymMatrix, atoms: &[(Vec<f64>, f64)]) -> Result<Self> {
        Self::new(
            atoms
                .iter()
                .map(|(v, w)| GaussianAtom::new(matrix, v.clone(), *w))
                .collect::<Result<_>>()?,
        )
    }

    pub fn atoms(&self) -> &[GaussianAtom] {
        &self.atoms
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].dim()
    }

    /// Total mass `sum w`.
    pub fn mass(&self) -> f64 {
        crate::sum::ordered_sum(self.atoms.iter().map(|a| a.weight))
    }

    /// The shared matrix when every atom carries the same one.
    pub fn constant_matrix(&self) -> Option<&SymMatrix> {
        let m = &self.atoms[0].matrix;
        self.atoms.iter().all(|a| a.matrix == *m).then_some(m)
    }

    pub fn map_atoms(&self, f: impl Fn(&GaussianAtom) -> Result<GaussianAtom>) -> Result<Self> {
        Self::new(self.atoms.iter().map(f).collect::<Result<_>>()?)
    }
}

/// `n` families with exponents `p`, all in dimension `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSystem {
    dim: usize,
    p: ExponentVector,
    families: Vec<GaussianFamily>,
}

impl FlowSystem {
    pub fn new(families: Vec<GaussianFamily>, p: ExponentVector) -> Result<Self> {
        let first = families.first().ok_or_else(|| invalid("flow system needs at least one family"))?;
        let dim = first.dim();
        if let Some(f) = families.iter().find(|f| f.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: f.dim() });
        }
        if families.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: families.len(), found: p.len() });
        }
        Ok(Self { dim, p, families })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn p(&self) -> &ExponentVector {
        &self.p
    }

    pub fn families(&self) -> &[GaussianFamily] {
        &self.families
    }

    pub fn n(&self) -> usize {
        self.families.len()
    }

    /// `A_* = sum p_j A_j` when every family has a constant matrix.
    pub fn a_star(&self) -> Option<SymMatrix> {
        let ms: Option<Vec<SymMatrix>> = self.families.iter().map(|f| f.constant_matrix().copied()).collect();
        weighted_sum(&ms?, &self.p).ok()
    }

    /// `prod_j mass_j^{p_j}`.
    pub fn mass_product(&self) -> f64 {
        self.families
            .iter()
            .zip(self.p.values())
            .map(|(f, &p)| f.mass().powf(p))
            .product()
    }

    pub fn with_p(&self, p: ExponentVector) -> Result<Self> {
        Self::new(self.families.clone(), p)
    }

    pub fn map_families(&self, f: impl Fn(usize, &GaussianFamily) -> Result<GaussianFamily>) -> Result<Self> {
        let fams = self.families.iter().enumerate().map(|(j, fam)| f(j, fam)).collect::<Result<_>>()?;
        Self::new(fams, self.p.clone())
    }

    /// Per-family constant matrices, or an error naming the first family
    /// whose atoms carry different matrices.
    pub fn constant_matrices(&self) -> Result<Vec<SymMatrix>> {
        self.families
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.constant_matrix().copied().ok_or_else(|| {
                    Error::Domain(format!("family {j} does not have a single constant matrix"))
                })
            })
            .collect()
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: crate::io::RawSystem = serde_json::from_str(s)?;
        raw.into_flow_system(None)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&crate::io::RawSystem::from_flow_system(self, None))?)
    }
}

/// Completed square of a tuple of atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct CompletedSquare {
    pub a_star: SymMatrix,
    pub v_bar: Vec<f64>,
    pub delta: f64,
}

/// Sum of the tuple's quadratic forms written as
/// `<A_*(x - v_bar t), (x - v_bar t)> + delta t^2`.
///
/// `delta` is evaluated as `sum <A(v - v_bar), v - v_bar>`, which equals
/// `sum <Av, v> - <A_* v_bar, v_bar>` because `sum A (v - v_bar) = 0`; this
/// form is a sum of PSD quadratic forms and avoids cancellation.
pub fn complete_square(atoms: &[&GaussianAtom]) -> Result<CompletedSquare> {
    let first = atoms.first().ok_or_else(|| invalid("empty tuple"))?;
    let d = first.dim();
    let mut a_star = SymMatrix::zeros(d);
    let mut moment = vec![0.0; d];
    for a in atoms {
        if a.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: a.dim() });
        }
        a_star = a_star + a.matrix;
        for (m, x) in moment.iter_mut().zip(a.matrix.mul_vec(&a.velocity)) {
            *m += x;
        }
    }
    if a_star.is_singular() {
        return Err(Error::DegenerateTuple { det: a_star.det() });
    }
    let v_bar = a_star.solve(&moment)?;
    let mut delta = KahanSum::new();
    let mut diff = vec![0.0; d];
    for a in atoms {
        for i in 0..d {
            diff[i] = a.velocity[i] - v_bar[i];
        }
        delta.add(a.matrix.quad_form(&diff));
    }
    Ok(CompletedSquare { a_star, v_bar, delta: delta.value() })
}

/// Visits every ordered tuple of independent atom choices (`p_j` slots for
/// family `j`) in lexicographic order, passing the weight product and the
/// atoms.
pub(crate) fn for_each_tuple<F>(system: &FlowSystem, mut visit: F) -> Result<()>
where
    F: FnMut(f64, &[&GaussianAtom]) -> Result<()>,
{
    let ints = system
        .p
        .as_integers()
        .ok_or_else(|| Error::Domain("closed form requires integer exponents".into()))?;
    let mut slots: Vec<&GaussianFamily> = Vec::new();
    for (fam, &pj) in system.families.iter().zip(&ints) {
        slots.extend(std::iter::repeat_n(fam, pj));
    }
    let count: f64 = slots.iter().map(|f| f.atoms.len() as f64).product();
    if count > MAX_TUPLES {
        return Err(Error::GuardExceeded { what: "tuple enumeration", count, limit: MAX_TUPLES });
    }
    let mut choice = vec![0usize; slots.len()];
    let mut tuple: Vec<&GaussianAtom> = slots.iter().map(|f| &f.atoms[0]).collect();
    loop {
        let weight: f64 = tuple.iter().map(|a| a.weight).product();
        visit(weight, &tuple)?;
        // odometer, last slot fastest
        let mut s = slots.len();
        loop {
            if s == 0 {
                return Ok(());
            }
            s -= 1;
            choice[s] += 1;
            if choice[s] < slots[s].atoms.len() {
                tuple[s] = &slots[s].atoms[choice[s]];
                break;
            }
            choice[s] = 0;
            tuple[s] = &slots[s].atoms[0];
        }
    }
}

/// Per-tuple closed-form term `(prod w) det(A_*)^{power} exp(-pi delta t^2)`.
pub(crate) fn tuple_sum(system: &FlowSystem, t: f64, det_power: f64) -> Result<f64> {
    let mut acc = KahanSum::new();
    for_each_tuple(system, |w, atoms| {
        let cs = complete_square(atoms)?;
        let det = cs.a_star.det();
        acc.add(w * det.powf(det_power) * (-PI * cs.delta * t * t).exp());
        Ok(())
    })?;
    Ok(acc.value())
}

/// `Q_p(t)` by tuple expansion; requires integer `p`.
pub fn q_exact_integer(system: &FlowSystem, t: f64) -> Result<f64> {
    tuple_sum(system, t, -0.5)
}

/// `f(t, x)` for one family.
pub fn eval_f(family: &GaussianFamily, t: f64, x: &[f64]) -> Result<f64> {
    if x.len() != family.dim() {
        return Err(Error::DimensionMismatch { expected: family.dim(), found: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) || !t.is_finite() {
        return Err(Error::NonFinite("evaluation point".into()));
    }
    Ok(crate::sum::ordered_sum(family.atoms.iter().map(|a| a.eval(t, x))))
}

/// Atom probabilities `w e^{-pi <A(x-vt),(x-vt)>} / f(t,x)` for one family.
pub fn atom_probabilities(family: &GaussianFamily, t: f64, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != family.dim() {
        return Err(Error::DimensionMismatch { expected: family.dim(), found: x.len() });
    }
    let expo: Vec<f64> = family
        .atoms
        .iter()
        .map(|a| {
            let y: Vec<f64> = x.iter().zip(&a.velocity).map(|(xi, vi)| xi - vi * t).collect();
            a.weight.ln() - PI * a.matrix.quad_form(&y)
        })
        .collect();
    let m = expo.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = expo.iter().map(|e| (e - m).exp()).sum();
    Ok(expo.iter().map(|e| (e - m).exp() / z).collect())
}

#[derive(Clone)]
struct PreparedAtom {
    /// Upper triangle of `A`, row-major, off-diagonal entries doubled.
    tri: [f64; MAX_DIM * (MAX_DIM + 1) / 2],
    center: [f64; MAX_DIM],
    v: [f64; MAX_DIM],
    av: [f64; MAX_DIM],
    avv: f64,
    ln_w: f64,
}

/// A system frozen at one time `t`, laid out for grid evaluation.
pub(crate) struct Prepared {
    dim: usize,
    t: f64,
    p: Vec<f64>,
    atoms: Vec<PreparedAtom>,
    /// `offsets[j]..offsets[j+1]` are the atoms of family `j`.
    offsets: Vec<usize>,
}

/// Scratch buffers; after [`Prepared::fill`] `prob` holds per-family atom
/// probabilities and `log_f` the per-family log densities.
pub(crate) struct Scratch {
    pub prob: Vec<f64>,
    pub log_f: Vec<f64>,
}

impl Prepared {
    pub fn new(system: &FlowSystem, t: f64) -> Self {
        let d = system.dim;
        let mut atoms = Vec::new();
        let mut offsets = vec![0];
        for fam in &system.families {
            for a in &fam.atoms {
                let mut center = [0.0; MAX_DIM];
                let mut v = [0.0; MAX_DIM];
                let mut av = [0.0; MAX_DIM];
                for i in 0..d {
                    center[i] = a.velocity[i] * t;
                    v[i] = a.velocity[i];
                }
                let avv_vec = a.matrix.mul_vec(&a.velocity);
                av[..d].copy_from_slice(&avv_vec);
                let mut tri = [0.0; MAX_DIM * (MAX_DIM + 1) / 2];
                let mut k = 0;
                for i in 0..d {
                    for j in i..d {
                        tri[k] = if i == j { a.matrix.get(i, i) } else { 2.0 * a.matrix.get(i, j) };
                        k += 1;
                    }
                }
                atoms.push(PreparedAtom {
                    tri,
                    center,
                    v,
                    av,
                    avv: dot(&avv_vec, &a.velocity),
                    ln_w: a.weight.ln(),
                });
            }
            offsets.push(atoms.len());
        }
        Self { dim: d, t, p: system.p.values().to_vec(), atoms, offsets }
    }

    pub fn scratch(&self) -> Scratch {
        Scratch { prob: vec![0.0; self.atoms.len()], log_f: vec![0.0; self.p.len()] }
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn family_range(&self, j: usize) -> std::ops::Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    /// Fills probabilities and log densities; returns the log integrand
    /// `sum_j p_j log f_j(t, x)`.
    #[inline]
    pub fn fill(&self, x: &[f64], s: &mut Scratch) -> f64 {
        match self.dim {
            1 => self.fill_dim::<1>(x, s),
            2 => self.fill_dim::<2>(x, s),
            3 => self.fill_dim::<3>(x, s),
            _ => self.fill_dim::<0>(x, s),
        }
    }

    /// `log(w) - pi <A(x - c), x - c>` for one atom; `D = 0` reads the
    /// dimension at run time.
    #[inline(always)]
    fn log_atom<const D: usize>(&self, at: &PreparedAtom, x: &[f64]) -> f64 {
        let d = if D == 0 { self.dim } else { D };
        let mut y = [0.0; MAX_DIM];
        for i in 0..d {
            y[i] = x[i] - at.center[i];
        }
        let mut q = 0.0;
        let mut k = 0;
        for i in 0..d {
            let mut row = 0.0;
            for j in i..d {
                row += at.tri[k] * y[j];
                k += 1;
            }
            q += row * y[i];
        }
        at.ln_w - PI * q
    }

    #[inline(always)]
    fn fill_dim<const D: usize>(&self, x: &[f64], s: &mut Scratch) -> f64 {
        let mut total = 0.0;
        for j in 0..self.p.len() {
            let range = self.family_range(j);
            if range.len() == 1 {
                let lf = self.log_atom::<D>(&self.atoms[range.start], x);
                s.prob[range.start] = 1.0;
                s.log_f[j] = lf;
                total += self.p[j] * lf;
                continue;
            }
            let mut m = f64::NEG_INFINITY;
            for k in range.clone() {
                let e = self.log_atom::<D>(&self.atoms[k], x);
                s.prob[k] = e;
                m = m.max(e);
            }
            let mut z = 0.0;
            for k in range.clone() {
                let e = (s.prob[k] - m).exp();
                s.prob[k] = e;
                z += e;
            }
            let inv = 1.0 / z;
            for k in range {
                s.prob[k] *= inv;
            }
            let lf = m + z.ln();
            s.log_f[j] = lf;
            total += self.p[j] * lf;
        }
        total
    }

    /// `sum_k p_k E <A_k v_k, x - t v_k>` using the probabilities in `s`.
    #[inline]
    pub fn chain_factor(&self, x: &[f64], s: &Scratch) -> f64 {
        let d = self.dim;
        let mut total = 0.0;
        for j in 0..self.p.len() {
            let mut e = 0.0;
            for k in self.family_range(j) {
                let at = &self.atoms[k];
                let avx: f64 = (0..d).map(|i| at.av[i] * x[i]).sum();
                e += s.prob[k] * (avx - self.t * at.avv);
            }
            total += self.p[j] * e;
        }
        total
    }

    /// Probability-weighted mean velocity of family `j`.
    #[inline]
    pub fn mean_velocity(&self, j: usize, s: &Scratch, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for k in self.family_range(j) {
            let at = &self.atoms[k];
            for i in 0..self.dim {
                out[i] += s.prob[k] * at.v[i];
            }
        }
    }
}

/// Constants of the variance form of `G` for constant per-family matrices.
pub(crate) struct GForm {
    a: Vec<SymMatrix>,
    c: Vec<SymMatrix>,
    a_star_inv: SymMatrix,
}

impl GForm {
    pub fn new(system: &FlowSystem) -> Result<Self> {
        let a = system.constant_matrices()?;
        let a_star = weighted_sum(&a, &system.p)?;
        if a_star.is_singular() {
            return Err(Error::Singular { context: "G functional: A_*".into(), det: a_star.det() });
        }
        let a_star_inv = a_star.inverse()?;
        let c = a.iter().map(|aj| *aj - a_star_inv.sandwich(aj)).collect();
        Ok(Self { a, c, a_star_inv })
    }

    /// `G(p, t, x)` given filled scratch.
    pub fn eval(&self, prep: &Prepared, s: &Scratch) -> f64 {
        let d = prep.dim;
        let n = prep.n();
        let mut ev = [[0.0; MAX_DIM]; 16];
        let mut ev_heap;
        let means: &mut [[f64; MAX_DIM]] = if n <= ev.len() {
            &mut ev[..n]
        } else {
            ev_heap = vec![[0.0; MAX_DIM]; n];
            &mut ev_heap[..]
        };
        let mut var_term = 0.0;
        let mut diff = [0.0; MAX_DIM];
        for j in 0..n {
            prep.mean_velocity(j, s, &mut means[j][..d]);
            let mut acc = 0.0;
            for k in prep.family_range(j) {
                let at = &prep.atoms[k];
                for i in 0..d {
                    diff[i] = at.v[i] - means[j][i];
                }
                acc += s.prob[k] * self.c[j].quad_form(&diff[..d]);
            }
            var_term += prep.p[j] * acc;
        }
        // E v_bar = A_*^{-1} sum p_j A_j E v_j
        let mut moment = [0.0; MAX_DIM];
        for j in 0..n {
            let av = self.a[j].mul_vec(&means[j][..d]);
            for i in 0..d {
                moment[i] += prep.p[j] * av[i];
            }
        }
        let vbar = self.a_star_inv.mul_vec(&moment[..d]);
        let mut mean_term = 0.0;
        for j in 0..n {
            for i in 0..d {
                diff[i] = means[j][i] - vbar[i];
            }
            mean_term += prep.p[j] * self.a[j].quad_form(&diff[..d]);
        }
        var_term + mean_term
    }
}

fn check_point(system: &FlowSystem, x: &[f64]) -> Result<()> {
    if x.len() != system.dim {
        return Err(Error::DimensionMismatch { expected: system.dim, found: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("evaluation point".into()));
    }
    Ok(())
}

/// The variance form of `G(p, t, x)`. Requires one matrix per family and a
/// nonsingular `A_*`.
pub fn g_function(system: &FlowSystem, t: f64, x: &[f64]) -> Result<f64> {
    check_point(system, x)?;
    let form = GForm::new(system)?;
    let prep = Prepared::new(system, t);
    let mut s = prep.scratch();
    prep.fill(x, &mut s);
    Ok(form.eval(&prep, &s))
}

fn check_grid(system: &FlowSystem, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    grid.require_odd()?;
    if grid.dim() != system.dim {
        return Err(Error::DimensionMismatch { expected: system.dim, found: grid.dim() });
    }
    Ok(())
}

/// Midpoint-rule value of `Q_p(t)` on `grid`.
pub fn q_quadrature(system: &FlowSystem, t: f64, grid: &GridSpec) -> Result<f64> {
    check_grid(system, grid)?;
    let prep = Prepared::new(system, t);
    grid.integrate(|| prep.scratch(), |s, x| prep.fill(x, s).exp())
}

/// `Q'_p(t) = -2 pi t int G prod f_j^{p_j}`.
pub fn qprime_formula(system: &FlowSystem, t: f64, grid: &GridSpec) -> Result<f64> {
    check_grid(system, grid)?;
    let form = GForm::new(system)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let prep = Prepared::new(system, t);
    let integral = grid.integrate(
        || prep.scratch(),
        |s, x| {
            let w = prep.fill(x, s).exp();
            if w == 0.0 {
                return 0.0;
            }
            form.eval(&prep, s) * w
        },
    )?;
    Ok(-2.0 * PI * t * integral)
}

/// `Q'_p(t) = 2 pi int (sum_k p_k E <A_k v_k, x - t v_k>) prod f_j^{p_j}`.
pub fn qprime_chainrule(system: &FlowSystem, t: f64, grid: &GridSpec) -> Result<f64> {
    check_grid(system, grid)?;
    let prep = Prepared::new(system, t);
    let integral = grid.integrate(
        || prep.scratch(),
        |s, x| {
            let w = prep.fill(x, s).exp();
            if w == 0.0 {
                return 0.0;
            }
            prep.chain_factor(x, s) * w
        },
    )?;
    Ok(2.0 * PI * integral)
}

/// Every atom velocity replaced by `v - v0`.
pub fn galilean_shift(system: &FlowSystem, v0: &[f64]) -> Result<FlowSystem> {
    if v0.len() != system.dim {
        return Err(Error::DimensionMismatch { expected: system.dim, found: v0.len() });
    }
    system.map_families(|_, fam| {
        fam.map_atoms(|a| a.with_velocity(a.velocity.iter().zip(v0).map(|(v, s)| v - s).collect()))
    })
}

/// Knobs of the automatic quadrature box.
#[derive(Clone, Debug)]
pub struct GridPolicy {
    /// Relative integrand bound required at the box boundary.
    pub tail: f64,
    /// Spacing as a multiple of the gaussian width `1 / sqrt(lambda_max)`.
    pub spacing_factor: f64,
    /// Target relative error for the branch-point limited spacing of
    /// fractional powers of multi-atom families.
    pub branch_tol: f64,
    /// Upper bound on total nodes; the spacing is coarsened to respect it.
    pub max_nodes: f64,
}

impl Default for GridPolicy {
    fn default() -> Self {
        Self { tail: 1e-18, spacing_factor: 0.35, branch_tol: 1e-11, max_nodes: 4e6 }
    }
}

/// Default nodes per axis by dimension.
pub fn default_points(d: usize) -> usize {
    match d {
        1 => 401,
        2 => 201,
        3 => 101,
        4 => 41,
        5 => 21,
        _ => 13,
    }
}

/// Automatic quadrature grid covering `Q_p(t)` for all `t` in
/// `[t_lo, t_hi]`, using the default policy.
pub fn auto_grid(system: &FlowSystem, t_lo: f64, t_hi: f64) -> Result<GridSpec> {
    auto_grid_with(system, t_lo, t_hi, &GridPolicy::default())
}

fn family_mean_matrix(fam: &GaussianFamily) -> SymMatrix {
    let mass = fam.mass();
    fam.atoms
        .iter()
        .fold(SymMatrix::zeros(fam.dim()), |acc, a| acc + a.matrix.scale(a.weight / mass))
}

fn family_sharpest_matrix(fam: &GaussianFamily) -> SymMatrix {
    *fam.atoms
        .iter()
        .map(|a| (a.matrix.norm(), &a.matrix))
        .max_by(|x, y| x.0.total_cmp(&y.0))
        .map(|(_, m)| m)
        .expect("nonempty family")
}

/// Box centered at the weighted centroid of the atom centers with a
/// half-width that puts the integrand below `policy.tail` (relative) at the
/// boundary; spacing resolves both the gaussian widths and, for fractional
/// exponents, the branch points between separated atoms.
pub fn auto_grid_with(system: &FlowSystem, t_lo: f64, t_hi: f64, policy: &GridPolicy) -> Result<GridSpec> {
    if !(t_lo.is_finite() && t_hi.is_finite() && t_lo <= t_hi) {
        return Err(invalid(format!("bad time range [{t_lo}, {t_hi}]")));
    }
    let d = system.dim;
    let p = system.p.values();
    let decay = system
        .families
        .iter()
        .zip(p)
        .fold(SymMatrix::zeros(d), |acc, (f, &pj)| acc + family_mean_matrix(f).scale(pj));
    let decay_eigs = decay.eigenvalues();
    let lam_min = decay_eigs[0];
    let lam_top = decay_eigs[d - 1];
    if lam_min <= 1e-10 * (1.0 + lam_top) {
        return Err(Error::Domain(format!(
            "integrand does not decay in some direction (smallest eigenvalue of sum p_j A_j is {lam_min:e})"
        )));
    }
    let sharp = system
        .families
        .iter()
        .zip(p)
        .fold(SymMatrix::zeros(d), |acc, (f, &pj)| acc + family_sharpest_matrix(f).scale(pj))
        .norm()
        .max(lam_top);

    // weighted centroid of centers at the middle of the range
    let t_mid = 0.5 * (t_lo + t_hi);
    let mut centroid = vec![0.0; d];
    let mut wsum = 0.0;
    for fam in &system.families {
        for a in &fam.atoms {
            for i in 0..d {
                centroid[i] += a.weight * a.velocity[i] * t_mid;
            }
            wsum += a.weight;
        }
    }
    centroid.iter_mut().for_each(|c| *c /= wsum);
    let mut spread: f64 = 0.0;
    for fam in &system.families {
        for a in &fam.atoms {
            for t in [t_lo, t_hi] {
                for i in 0..d {
                    spread = spread.max((a.velocity[i] * t - centroid[i]).abs());
                }
            }
        }
    }
    let radius = ((1.0 / policy.tail).ln() / (PI * lam_min)).sqrt();

    // spacing: gaussian width, then branch points for fractional exponents
    let mut h = policy.spacing_factor / sharp.sqrt();
    let t_abs = t_lo.abs().max(t_hi.abs());
    let log_tol = (1.0 / policy.branch_tol).ln();
    for (fam, &pj) in system.families.iter().zip(p) {
        if pj.fract() == 0.0 || fam.atoms.len() < 2 {
            continue;
        }
        let lam = family_sharpest_matrix(fam).norm();
        let mut sep: f64 = 0.0;
        for (k, a) in fam.atoms.iter().enumerate() {
            for b in &fam.atoms[k + 1..] {
                let dv: Vec<f64> = a.velocity.iter().zip(&b.velocity).map(|(x, y)| x - y).collect();
                sep = sep.max(norm2(&dv) * t_abs);
            }
        }
        if sep == 0.0 || lam == 0.0 {
            continue;
        }
        // worst half-separation for exp(-2 pi s / h) exp(-pi lam p a^2) with s = 1/(4 a lam)
        let a_star = (log_tol / (3.0 * PI * lam * pj)).sqrt().min(0.5 * sep);
        let budget = log_tol - PI * lam * pj * a_star * a_star;
        if budget > 0.0 {
            h = h.min(PI / (2.0 * a_star * lam * budget));
        }
    }

    let mut half_width = spread + radius;
    let probe_times: Vec<f64> = if t_lo == t_hi { vec![t_lo] } else { vec![t_lo, t_hi] };
    for _attempt in 0..12 {
        let mut points = ((2.0 * half_width / h).ceil() as usize).max(default_points(d));
        let max_pts = policy.max_nodes.powf(1.0 / d as f64).floor() as usize;
        if points > max_pts {
            log::info!("quadrature spacing coarsened to respect the node budget ({points} -> {max_pts} per axis)");
            points = max_pts;
        }
        if points % 2 == 0 {
            points = points.saturating_sub(1).max(3);
        }
        let grid = GridSpec::new(centroid.clone(), half_width, points)?;
        if probe_times.iter().all(|&t| boundary_is_negligible(system, t, &grid, policy.tail)) {
            return Ok(grid);
        }
        half_width *= 1.25;
    }
    Err(Error::Domain("could not find a quadrature box with negligible boundary values".into()))
}

/// Compares the largest log-integrand on the box faces with the largest at
/// the atom centers and box center.
fn boundary_is_negligible(system: &FlowSystem, t: f64, grid: &GridSpec, tail: f64) -> bool {
    let prep = Prepared::new(system, t);
    let mut s = prep.scratch();
    let d = system.dim;
    let mut peak = prep.fill(&grid.center, &mut s);
    for fam in &system.families {
        for a in &fam.atoms {
            let c: Vec<f64> = a.velocity.iter().map(|v| v * t).collect();
            peak = peak.max(prep.fill(&c, &mut s));
        }
    }
    let n = grid.points_per_axis;
    let mut face_max = f64::NEG_INFINITY;
    let mut x = vec![0.0; d];
    // enumerate face nodes of the outer layer
    let faces = n.pow(d as u32 - 1);
    for axis in 0..d {
        for &edge in &[grid.lower(axis), grid.upper(axis)] {
            for k in 0..faces {
                let mut rem = k;
                for a in (0..d).rev() {
                    if a == axis {
                        continue;
                    }
                    x[a] = grid.coord(a, rem % n);
                    rem /= n;
                }
                x[axis] = edge;
                face_max = face_max.max(prep.fill(&x, &mut s));
            }
        }
    }
    face_max <= peak + tail.ln()
}

/// Mode of [`monotonicity_scan`].
#[derive(Clone, Debug)]
pub enum ScanMode {
    /// Closed form; integer exponents only.
    Exact,
    /// Quadrature on the given grid, or one automatic grid for the whole scan.
    Quadrature(Option<GridSpec>),
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScanRow {
    pub t: f64,
    pub q: f64,
    pub dq: f64,
    pub violation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    pub max_violation: f64,
    pub slack: f64,
    pub pass: bool,
}

impl ScanReport {
    /// CSV with columns `t,Q,dQ,violation`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["t", "Q", "dQ", "violation"])?;
        for r in &self.rows {
            w.write_record([r.t.to_string(), r.q.to_string(), r.dq.to_string(), r.violation.to_string()])?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?)
            .map_err(|e| invalid(e.to_string()))
    }
}

/// Evaluates `Q` on `t_grid` and reports the largest increase between
/// successive nodes. `slack` defaults to `1e-9 Q(t_0)`.
pub fn monotonicity_scan(
    system: &FlowSystem,
    t_grid: &[f64],
    mode: &ScanMode,
    slack: Option<f64>,
) -> Result<ScanReport> {
    let (&t0, &t_last) = match (t_grid.first(), t_grid.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(invalid("empty time grid")),
    };
    if t0 < 0.0 || t_grid.windows(2).any(|w| !(w[1] > w[0])) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(invalid("time grid must be finite, non-negative and strictly increasing"));
    }
    let values: Vec<f64> = match mode {
        ScanMode::Exact => t_grid.iter().map(|&t| q_exact_integer(system, t)).collect::<Result<_>>()?,
        ScanMode::Quadrature(grid) => {
            let grid = match grid {
                Some(g) => g.clone(),
                None => auto_grid(system, t0, t_last)?,
            };
            t_grid.iter().map(|&t| q_quadrature(system, t, &grid)).collect::<Result<_>>()?
        }
    };
    let slack = slack.unwrap_or(1e-9 * values[0]);
    let mut rows = Vec::with_capacity(values.len());
    let mut max_violation: f64 = 0.0;
    for (k, (&t, &q)) in t_grid.iter().zip(&values).enumerate() {
        let dq = if k == 0 { 0.0 } else { q - values[k - 1] };
        let violation = dq.max(0.0);
        max_violation = max_violation.max(violation);
        rows.push(ScanRow { t, q, dq, violation });
    }
    Ok(ScanReport { rows, max_violation, slack, pass: max_violation <= slack })
}

/// `n` equally spaced nodes on `[a, b]`.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}
