//! Dense symmetric-matrix kernel for small dimension (`d <= 6`).
//!
//! Matrices are stored in a fixed `6 x 6` row-major buffer so they are `Copy`
//! and allocation-free in the quadrature hot loops. Every constructor of
//! [`SymMatrix`] writes the upper triangle and mirrors it, so transposes are
//! bit-identical.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

pub const MAX_DIM: usize = 6;
const STRIDE: usize = MAX_DIM;

/// Default relative tolerance for PSD classification.
pub const DEFAULT_PSD_TOL: f64 = 1e-12;

/// Scale factor in the singularity threshold `|det| < 1e-12 (1 + ||A||)^d`.
pub const SINGULAR_REL_TOL: f64 = 1e-12;

const JACOBI_REL_TOL: f64 = 1e-14;
const JACOBI_MAX_SWEEPS: usize = 50;

#[inline]
fn idx(i: usize, j: usize) -> usize {
    i * STRIDE + j
}

/// Real symmetric `d x d` matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: [f64; MAX_DIM * MAX_DIM],
}

/// General (not necessarily symmetric) square matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct SquareMatrix {
    dim: usize,
    data: [f64; MAX_DIM * MAX_DIM],
}

/// Eigen-decomposition of a [`SymMatrix`]. Eigenvalues are ascending;
/// `vectors` holds the matching unit eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: SquareMatrix,
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(invalid(format!(
            "matrix dimension {dim} outside supported range 1..={MAX_DIM}"
        )));
    }
    Ok(())
}

fn parse_rows(rows: &[Vec<f64>]) -> Result<(usize, [f64; MAX_DIM * MAX_DIM])> {
    let dim = rows.len();
    check_dim(dim)?;
    let mut data = [0.0; MAX_DIM * MAX_DIM];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(invalid(format!(
                "row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        for (j, &x) in row.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite(format!("matrix entry ({i}, {j})")));
            }
            data[idx(i, j)] = x;
        }
    }
    Ok((dim, data))
}

impl SymMatrix {
    /// Builds a symmetric matrix from row-major nested rows. The input is
    /// symmetrized as `(A + A^T) / 2`.
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let (dim, raw) = parse_rows(rows)?;
        Ok(Self::from_fn(dim, |i, j| 0.5 * (raw[idx(i, j)] + raw[idx(j, i)])))
    }

    /// Builds from `f(i, j)` evaluated on the upper triangle only.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        let mut data = [0.0; MAX_DIM * MAX_DIM];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[idx(i, j)] = v;
                data[idx(j, i)] = v;
            }
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_fn(dim, |_, _| 0.0)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diag(values: &[f64]) -> Self {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    /// `v v^T`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_fn(v.len(), |i, j| v[i] * v[j])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[idx(i, j)]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.get(i, j).is_finite()))
    }

    /// Exact transpose equality (always true for values built by this type).
    pub fn is_exactly_symmetric(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.get(i, j).to_bits() == self.get(j, i).to_bits()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_fn(self.dim, |i, j| s * self.get(i, j))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data[..].iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// `<A x, x>`.
    #[inline]
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.data[idx(i, j)] * x[j];
            }
            s += row * x[i];
        }
        s
    }

    /// `B A B` for symmetric `B`.
    pub fn sandwich(&self, b: &SymMatrix) -> SymMatrix {
        let ab = self.product(b);
        let bab = b.product_general(&ab);
        SymMatrix::from_fn(self.dim, |i, j| bab.get(i, j))
    }

    /// `D^T A D`.
    pub fn congruence(&self, d: &SquareMatrix) -> SymMatrix {
        let ad = self.to_square().matmul(d);
        let dtad = d.transpose().matmul(&ad);
        SymMatrix::from_fn(self.dim, |i, j| dtad.get(i, j))
    }

    pub fn product(&self, other: &SymMatrix) -> SquareMatrix {
        self.to_square().matmul(&other.to_square())
    }

    fn product_general(&self, other: &SquareMatrix) -> SquareMatrix {
        self.to_square().matmul(other)
    }

    pub fn to_square(&self) -> SquareMatrix {
        SquareMatrix { dim: self.dim, data: self.data }
    }

    /// Cyclic Jacobi eigen-decomposition.
    pub fn eigen(&self) -> Eigen {
        let d = self.dim;
        let mut a = self.data;
        let mut v = SquareMatrix::identity(d).data;
        let scale = self.frobenius();
        if scale > 0.0 {
            for _ in 0..JACOBI_MAX_SWEEPS {
                let off: f64 = (0..d)
                    .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
                    .map(|(i, j)| a[idx(i, j)] * a[idx(i, j)])
                    .sum::<f64>()
                    .sqrt();
                if off < JACOBI_REL_TOL * scale {
                    break;
                }
                for p in 0..d {
                    for q in p + 1..d {
                        let apq = a[idx(p, q)];
                        if apq == 0.0 {
                            continue;
                        }
                        let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                        let t = if theta == 0.0 { 1.0 } else { t };
                        let c = 1.0 / (t * t + 1.0).sqrt();
                        let s = t * c;
                        for k in 0..d {
                            let akp = a[idx(k, p)];
                            let akq = a[idx(k, q)];
                            a[idx(k, p)] = c * akp - s * akq;
                            a[idx(k, q)] = s * akp + c * akq;
                        }
                        for k in 0..d {
                            let apk = a[idx(p, k)];
                            let aqk = a[idx(q, k)];
                            a[idx(p, k)] = c * apk - s * aqk;
                            a[idx(q, k)] = s * apk + c * aqk;
                        }
                        for k in 0..d {
                            let vkp = v[idx(k, p)];
                            let vkq = v[idx(k, q)];
                            v[idx(k, p)] = c * vkp - s * vkq;
                            v[idx(k, q)] = s * vkp + c * vkq;
                        }
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&i, &j| a[idx(i, i)].total_cmp(&a[idx(j, j)]));
        let values = order.iter().map(|&i| a[idx(i, i)]).collect();
        let mut vectors = SquareMatrix::zeros(d);
        for (col, &src) in order.iter().enumerate() {
            for k in 0..d {
                vectors.data[idx(k, col)] = v[idx(k, src)];
            }
        }
        Eigen { values, vectors }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().values
    }

    /// Operator (spectral) norm.
    pub fn norm(&self) -> f64 {
        let ev = self.eigenvalues();
        ev.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn det(&self) -> f64 {
        self.to_square().det()
    }

    /// Scale-aware singularity test `|det| < 1e-12 (1 + ||A||)^d`.
    pub fn is_singular(&self) -> bool {
        let thresh = SINGULAR_REL_TOL * (1.0 + self.norm()).powi(self.dim as i32);
        self.det().abs() < thresh
    }

    pub fn inverse(&self) -> Result<SymMatrix> {
        if self.is_singular() {
            return Err(Error::Singular { context: "inverse".into(), det: self.det() });
        }
        let inv = self.to_square().inverse_unchecked();
        Ok(SymMatrix::from_fn(self.dim, |i, j| 0.5 * (inv.get(i, j) + inv.get(j, i))))
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.is_singular() {
            return Err(Error::Singular { context: "solve".into(), det: self.det() });
        }
        self.to_square().solve(b)
    }

    /// Applies `f` to the eigenvalues: `V f(L) V^T`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let e = self.eigen();
        let fl: Vec<f64> = e.values.iter().map(|&l| f(l)).collect();
        SymMatrix::from_fn(self.dim, |i, j| {
            (0..self.dim)
                .map(|k| e.vectors.get(i, k) * fl[k] * e.vectors.get(j, k))
                .sum()
        })
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{:?}", self.rows())
    }
}

impl Add for SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix sum");
        SymMatrix::from_fn(self.dim, |i, j| self.get(i, j) + rhs.get(i, j))
    }
}

impl Sub for SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: SymMatrix) -> SymMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix difference");
        SymMatrix::from_fn(self.dim, |i, j| self.get(i, j) - rhs.get(i, j))
    }
}

impl Mul<f64> for SymMatrix {
    type Output = SymMatrix;
    fn mul(self, s: f64) -> SymMatrix {
        self.scale(s)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::new(&rows).map_err(serde::de::Error::custom)
    }
}

impl SquareMatrix {
    pub fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let (dim, data) = parse_rows(rows)?;
        Ok(Self { dim, data })
    }

    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self { dim, data: [0.0; MAX_DIM * MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[idx(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.data[idx(i, j)] = f(i, j);
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[idx(i, j)] = v;
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> SquareMatrix {
        Self::from_fn(self.dim, |i, j| self.get(j, i))
    }

    pub fn matmul(&self, other: &SquareMatrix) -> SquareMatrix {
        assert_eq!(self.dim, other.dim, "dimension mismatch in matrix product");
        let d = self.dim;
        Self::from_fn(d, |i, j| (0..d).map(|k| self.get(i, k) * other.get(k, j)).sum())
    }

    pub fn add(&self, other: &SquareMatrix) -> SquareMatrix {
        Self::from_fn(self.dim, |i, j| self.get(i, j) + other.get(i, j))
    }

    pub fn scale(&self, s: f64) -> SquareMatrix {
        Self::from_fn(self.dim, |i, j| s * self.get(i, j))
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    /// `M^T M`.
    pub fn gram(&self) -> SymMatrix {
        let d = self.dim;
        SymMatrix::from_fn(d, |i, j| (0..d).map(|k| self.get(k, i) * self.get(k, j)).sum())
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.gram().eigenvalues().into_iter().map(|l| l.max(0.0).sqrt()).collect()
    }

    /// LU factorization with partial pivoting. Returns the packed factors,
    /// the row permutation and the permutation sign.
    fn lu(&self) -> ([f64; MAX_DIM * MAX_DIM], [usize; MAX_DIM], f64) {
        let d = self.dim;
        let mut a = self.data;
        let mut perm = [0usize; MAX_DIM];
        for (i, p) in perm.iter_mut().enumerate().take(d) {
            *p = i;
        }
        let mut sign = 1.0;
        for k in 0..d {
            let mut piv = k;
            for r in k + 1..d {
                if a[idx(r, k)].abs() > a[idx(piv, k)].abs() {
                    piv = r;
                }
            }
            if piv != k {
                for c in 0..d {
                    a.swap(idx(k, c), idx(piv, c));
                }
                perm.swap(k, piv);
                sign = -sign;
            }
            let pv = a[idx(k, k)];
            if pv == 0.0 {
                continue;
            }
            for r in k + 1..d {
                let f = a[idx(r, k)] / pv;
                a[idx(r, k)] = f;
                for c in k + 1..d {
                    a[idx(r, c)] -= f * a[idx(k, c)];
                }
            }
        }
        (a, perm, sign)
    }

    pub fn det(&self) -> f64 {
        let (a, _, sign) = self.lu();
        (0..self.dim).map(|i| a[idx(i, i)]).product::<f64>() * sign
    }

    /// Solves `M x = b` by pivoted LU. Fails when a pivot vanishes exactly.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim;
        if b.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: b.len() });
        }
        let (a, perm, _) = self.lu();
        if (0..d).any(|i| a[idx(i, i)] == 0.0) {
            return Err(Error::Singular { context: "solve".into(), det: 0.0 });
        }
        let mut y: Vec<f64> = (0..d).map(|i| b[perm[i]]).collect();
        for i in 0..d {
            for k in 0..i {
                y[i] -= a[idx(i, k)] * y[k];
            }
        }
        for i in (0..d).rev() {
            for k in i + 1..d {
                y[i] -= a[idx(i, k)] * y[k];
            }
            y[i] /= a[idx(i, i)];
        }
        Ok(y)
    }

    fn inverse_unchecked(&self) -> SquareMatrix {
        let d = self.dim;
        let mut inv = SquareMatrix::zeros(d);
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            let col = self.solve(&e).unwrap_or_else(|_| vec![f64::NAN; d]);
            for i in 0..d {
                inv.data[idx(i, j)] = col[i];
            }
        }
        inv
    }

    pub fn inverse(&self) -> Result<SquareMatrix> {
        let sv = self.singular_values();
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        if smin <= SINGULAR_REL_TOL * (1.0 + smax) {
            return Err(Error::Singular { context: "inverse".into(), det: self.det() });
        }
        Ok(self.inverse_unchecked())
    }

    /// Determinant of the minor with row `r` and column `c` removed.
    fn minor_det(&self, r: usize, c: usize) -> f64 {
        let d = self.dim;
        if d == 1 {
            return 1.0;
        }
        let m = SquareMatrix::from_fn(d - 1, |i, j| {
            let si = if i < r { i } else { i + 1 };
            let sj = if j < c { j } else { j + 1 };
            self.get(si, sj)
        });
        m.det()
    }
}

impl fmt::Debug for SquareMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SquareMatrix{:?}", self.rows())
    }
}

/// Exponent vector `p` with strictly positive finite entries.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ExponentVector(Vec<f64>);

impl ExponentVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("exponent vector must be nonempty"));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(format!("exponent p[{i}] = {v} must be finite and > 0")));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; n])
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The exponents as integers, when every entry is a positive integer.
    pub fn as_integers(&self) -> Option<Vec<usize>> {
        self.0
            .iter()
            .map(|&p| (p.fract() == 0.0 && p < 1e9).then_some(p as usize))
            .collect()
    }
}

impl<'de> Deserialize<'de> for ExponentVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ExponentVector::new(Vec::<f64>::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

fn psd_threshold(eigs: &[f64], tol: f64) -> f64 {
    let norm = eigs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    -tol * (1.0 + norm)
}

/// True iff every eigenvalue of `a` is at least `-tol (1 + ||a||)`.
pub fn is_psd(a: &SymMatrix, tol: f64) -> Result<bool> {
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(invalid(format!("tolerance {tol} must be finite and >= 0")));
    }
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix passed to is_psd".into()));
    }
    let eigs = a.eigenvalues();
    Ok(eigs[0] >= psd_threshold(&eigs, tol))
}

/// Loewner order `a <= b`, i.e. `b - a` is PSD within `tol`.
pub fn loewner_leq(a: &SymMatrix, b: &SymMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    is_psd(&(*b - *a), tol)
}

/// Unique PSD square root.
pub fn psd_sqrt(a: &SymMatrix) -> Result<SymMatrix> {
    if !a.is_finite() {
        return Err(Error::NonFinite("matrix passed to psd_sqrt".into()));
    }
    let e = a.eigen();
    if e.values[0] < psd_threshold(&e.values, DEFAULT_PSD_TOL) {
        return Err(Error::Domain(format!(
            "psd_sqrt of a matrix with eigenvalue {:e}",
            e.values[0]
        )));
    }
    let d = a.dim();
    let roots: Vec<f64> = e.values.iter().map(|l| l.max(0.0).sqrt()).collect();
    Ok(SymMatrix::from_fn(d, |i, j| {
        (0..d)
            .map(|k| e.vectors.get(i, k) * roots[k] * e.vectors.get(j, k))
            .sum()
    }))
}

/// Adjugate by cofactors; well defined for singular input.
pub fn adjugate(a: &SymMatrix) -> SymMatrix {
    let sq = a.to_square();
    SymMatrix::from_fn(a.dim(), |i, j| {
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        // adj = C^T, and C is symmetric for symmetric input
        sign * sq.minor_det(j, i)
    })
}

/// The `j`-th Loomis-Whitney matrix (1-based `j`): identity with entry `j`
/// zeroed.
pub fn lw_matrix(d: usize, j: usize) -> Result<SymMatrix> {
    check_dim(d)?;
    if j == 0 || j > d {
        return Err(invalid(format!("Loomis-Whitney index {j} outside 1..={d}")));
    }
    Ok(SymMatrix::from_fn(d, |r, c| if r == c && r != j - 1 { 1.0 } else { 0.0 }))
}

/// All `d` Loomis-Whitney matrices.
pub fn lw_matrices(d: usize) -> Result<Vec<SymMatrix>> {
    (1..=d).map(|j| lw_matrix(d, j)).collect()
}

/// `sum_j p_j A_j`.
pub fn weighted_sum(matrices: &[SymMatrix], p: &ExponentVector) -> Result<SymMatrix> {
    if matrices.is_empty() {
        return Err(invalid("empty matrix list"));
    }
    if matrices.len() != p.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: matrices.len() });
    }
    let d = matrices[0].dim();
    let mut acc = SymMatrix::zeros(d);
    for (m, &pj) in matrices.iter().zip(p.values()) {
        if m.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: m.dim() });
        }
        acc = acc + m.scale(pj);
    }
    Ok(acc)
}

/// `A_* = sum p_j A_j` nonsingular and `A_j <= A_*` for every `j`.
pub fn check_condition_ajab(matrices: &[SymMatrix], p: &ExponentVector, tol: f64) -> Result<bool> {
    let a_star = weighted_sum(matrices, p)?;
    if a_star.is_singular() {
        return Ok(false);
    }
    for a in matrices {
        if !loewner_leq(a, &a_star, tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Smallest eigenvalue over `j` of `I - M_j^{1/2} M_*^{-1} M_j^{1/2}`.
/// The strict gap condition holds iff the result is positive.
pub fn gap_margin(base: &[SymMatrix], p: &ExponentVector) -> Result<f64> {
    let m_star = weighted_sum(base, p)?;
    if m_star.is_singular() {
        return Err(Error::Singular { context: "gap margin: M_*".into(), det: m_star.det() });
    }
    let m_inv = m_star.inverse()?;
    let id = SymMatrix::identity(m_star.dim());
    let mut margin = f64::INFINITY;
    for m in base {
        let root = psd_sqrt(m)?;
        let c = id - m_inv.sandwich(&root);
        margin = margin.min(c.min_eigenvalue());
    }
    Ok(margin)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
