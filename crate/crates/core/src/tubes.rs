//! Tube families, overlap fields on grids and multilinear Kakeya ratios.
//!
//! A tube is a box with one long side along `axis` and a `width x ... x
//! width` cross-section in a fixed orthonormal frame; membership is
//! half-open on every face so that parallel partitions tile exactly.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::gaussflow::{FlowSystem, GaussianAtom, GaussianFamily};
use crate::grid::GridSpec;
use crate::matcore::{dot, norm2, ExponentVector, SquareMatrix, SymMatrix, MAX_DIM};
use crate::sum::{reduce_partitions, KahanSum};
pub use crate::sum::loglog_slope;

/// Exhaustive transversality enumeration cap; larger products are sampled.
pub const MAX_EXACT_TUPLES: f64 = 1e6;
/// Sample count used when enumeration is too large.
pub const NU_SAMPLES: usize = 100_000;

fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("direction".into()));
    }
    let n = norm2(v);
    if n == 0.0 {
        return Err(invalid("zero direction vector"));
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Orthonormal completion of `axis`: drop the standard basis vector most
/// aligned with the axis, then Gram-Schmidt the rest in index order.
fn cross_frame(axis: &[f64]) -> Vec<Vec<f64>> {
    let d = axis.len();
    let skip = (0..d).max_by(|&a, &b| axis[a].abs().total_cmp(&axis[b].abs())).unwrap_or(0);
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(d.saturating_sub(1));
    for i in (0..d).filter(|&i| i != skip) {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        for _ in 0..2 {
            let c = dot(&v, axis);
            v.iter_mut().zip(axis).for_each(|(x, a)| *x -= c * a);
            for f in &frame {
                let c = dot(&v, f);
                v.iter_mut().zip(f).for_each(|(x, a)| *x -= c * a);
            }
        }
        let n = norm2(&v);
        frame.push(v.into_iter().map(|x| x / n).collect());
    }
    frame
}

/// A `width`-tube; `half_length: None` is an infinite slab-like tube.
#[derive(Clone, Debug, PartialEq)]
pub struct Tube {
    center: Vec<f64>,
    axis: Vec<f64>,
    width: f64,
    half_length: Option<f64>,
    frame: Vec<Vec<f64>>,
}

impl Tube {
    /// The axis is normalized; it must be nonzero.
    pub fn new(center: Vec<f64>, axis: &[f64], width: f64, half_length: Option<f64>) -> Result<Self> {
        if center.len() != axis.len() {
            return Err(Error::DimensionMismatch { expected: axis.len(), found: center.len() });
        }
        if center.is_empty() || center.len() > MAX_DIM {
            return Err(invalid(format!("tube dimension {} outside 1..={MAX_DIM}", center.len())));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("tube center".into()));
        }
        if !(width > 0.0 && width.is_finite()) {
            return Err(invalid(format!("tube width {width} must be > 0")));
        }
        if let Some(h) = half_length {
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid(format!("tube half-length {h} must be > 0")));
            }
            if width > 2.0 * h {
                return Err(invalid(format!("tube width {width} exceeds its length {}", 2.0 * h)));
            }
        }
        let axis = normalize(axis)?;
        let frame = cross_frame(&axis);
        Ok(Self { center, axis, width, half_length, frame })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn half_length(&self) -> Option<f64> {
        self.half_length
    }

    /// Cross-section frame.
    pub fn frame(&self) -> &[Vec<f64>] {
        &self.frame
    }

    #[inline]
    pub fn contains(&self, x: &[f64]) -> bool {
        let d = self.dim();
        let mut y = [0.0; MAX_DIM];
        for i in 0..d {
            y[i] = x[i] - self.center[i];
        }
        if let Some(h) = self.half_length {
            let s = dot(&y[..d], &self.axis);
            if !(-h <= s && s < h) {
                return false;
            }
        }
        let hw = 0.5 * self.width;
        self.frame.iter().all(|f| {
            let u = dot(&y[..d], f);
            -hw <= u && u < hw
        })
    }

    /// Half-extent of the tube's bounding box along each coordinate
    /// (`inf` for infinite tubes with a nonzero axis component).
    fn extent(&self, k: usize) -> f64 {
        let cross: f64 = 0.5 * self.width * self.frame.iter().map(|f| f[k].abs()).sum::<f64>();
        match self.half_length {
            Some(h) => h * self.axis[k].abs() + cross,
            None if self.axis[k] == 0.0 => cross,
            None => f64::INFINITY,
        }
    }

    /// All geometry scaled by `factor` about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Tube::new(
            self.center.iter().map(|c| c * factor).collect(),
            &self.axis,
            self.width * factor,
            self.half_length.map(|h| h * factor),
        )
    }
}

/// Same-width tubes with directions near `nominal`.
#[derive(Clone, Debug, PartialEq)]
pub struct TubeFamily {
    tubes: Vec<Tube>,
    nominal: Vec<f64>,
    radius: f64,
}

impl TubeFamily {
    /// Every axis must lie within angle `arcsin(radius)` of the nominal
    /// direction (tubes are unoriented).
    pub fn new(tubes: Vec<Tube>, nominal: &[f64], radius: f64) -> Result<Self> {
        let first = tubes.first().ok_or_else(|| invalid("tube family must contain at least one tube"))?;
        let d = first.dim();
        let w = first.width;
        if nominal.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: nominal.len() });
        }
        if !(radius >= 0.0 && radius.is_finite()) {
            return Err(invalid(format!("direction radius {radius} must be >= 0")));
        }
        let nominal = normalize(nominal)?;
        let min_cos = if radius >= 1.0 { 0.0 } else { (1.0 - radius * radius).sqrt() };
        for (k, t) in tubes.iter().enumerate() {
            if t.dim() != d {
                return Err(invalid(format!("tube {k}: dimension {} differs from {d}", t.dim())));
            }
            if t.width != w {
                return Err(invalid(format!("tube {k}: width {} differs from {w}", t.width)));
            }
            if dot(&t.axis, &nominal).abs() < min_cos - 1e-12 {
                return Err(invalid(format!("tube {k}: axis outside the direction neighbourhood")));
            }
        }
        Ok(Self { tubes, nominal, radius })
    }

    pub fn tubes(&self) -> &[Tube] {
        &self.tubes
    }

    pub fn nominal(&self) -> &[f64] {
        &self.nominal
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn width(&self) -> f64 {
        self.tubes[0].width
    }

    pub fn dim(&self) -> usize {
        self.tubes[0].dim()
    }

    pub fn len(&self) -> usize {
        self.tubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tubes.is_empty()
    }

    /// Every tube repeated `times` times.
    pub fn repeated(&self, times: usize) -> Result<Self> {
        let tubes = self.tubes.iter().flat_map(|t| std::iter::repeat_n(t.clone(), times)).collect();
        TubeFamily::new(tubes, &self.nominal, self.radius)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str::<RawTubeFamily>(s)?.build()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RawTubeFamily::from(self))?)
    }
}

/// `"inf"` or a positive number.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfLength(pub Option<f64>);

impl Serialize for HalfLength {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(h) => s.serialize_f64(h),
            None => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for HalfLength {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(h) => Ok(HalfLength(Some(h))),
            Raw::Text(s) if s == "inf" => Ok(HalfLength(None)),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("half_length must be a number or \"inf\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTube {
    pub center: Vec<f64>,
    pub axis: Vec<f64>,
    pub half_length: HalfLength,
}

/// On-disk tube family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTubeFamily {
    pub dim: usize,
    pub width: f64,
    pub nominal: Vec<f64>,
    pub radius: f64,
    pub tubes: Vec<RawTube>,
}

impl RawTubeFamily {
    pub fn build(self) -> Result<TubeFamily> {
        if self.tubes.is_empty() {
            return Err(invalid("tube family must contain at least one tube"));
        }
        let tubes = self
            .tubes
            .into_iter()
            .enumerate()
            .map(|(k, t)| {
                if t.center.len() != self.dim {
                    return Err(invalid(format!("tube {k}: center has dimension {}, expected {}", t.center.len(), self.dim)));
                }
                Tube::new(t.center, &t.axis, self.width, t.half_length.0).map_err(|e| invalid(format!("tube {k}: {e}")))
            })
            .collect::<Result<_>>()?;
        TubeFamily::new(tubes, &self.nominal, self.radius)
    }
}

impl From<&TubeFamily> for RawTubeFamily {
    fn from(f: &TubeFamily) -> Self {
        Self {
            dim: f.dim(),
            width: f.width(),
            nominal: f.nominal.clone(),
            radius: f.radius,
            tubes: f
                .tubes
                .iter()
                .map(|t| RawTube { center: t.center.clone(), axis: t.axis.clone(), half_length: HalfLength(t.half_length) })
                .collect(),
        }
    }
}

/// Parses either one family object or an array of families.
pub fn families_from_json_str(s: &str) -> Result<Vec<TubeFamily>> {
    let v: serde_json::Value = serde_json::from_str(s)?;
    let raws: Vec<RawTubeFamily> = if v.is_array() { serde_json::from_value(v)? } else { vec![serde_json::from_value(v)?] };
    raws.into_iter()
        .enumerate()
        .map(|(j, r)| r.build().map_err(|e| invalid(format!("family {j}: {e}"))))
        .collect()
}

pub fn families_to_json_string(families: &[TubeFamily]) -> Result<String> {
    let raws: Vec<RawTubeFamily> = families.iter().map(RawTubeFamily::from).collect();
    Ok(serde_json::to_string_pretty(&raws)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransversalityCert {
    pub nu: f64,
    pub exact: bool,
    /// Number of axis tuples evaluated.
    pub samples: usize,
}

impl TransversalityCert {
    pub fn is_valid(&self) -> bool {
        self.nu > 0.0
    }
}

/// Orthonormal basis of the span of the nominal directions, or `None` when
/// they are dependent.
fn nominal_basis(families: &[TubeFamily]) -> Option<Vec<Vec<f64>>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for f in families {
        let mut v = f.nominal.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&v, b);
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
        }
        let n = norm2(&v);
        if n < 1e-9 {
            return None;
        }
        basis.push(v.into_iter().map(|x| x / n).collect());
    }
    Some(basis)
}

/// Smallest volume spanned by one axis per family, measured in the span of
/// the nominal directions.
pub fn transversality_nu(families: &[TubeFamily]) -> Result<TransversalityCert> {
    let first = families.first().ok_or_else(|| invalid("no tube families"))?;
    let d = first.dim();
    let n = families.len();
    if n > d {
        return Err(invalid(format!("{n} families exceed dimension {d}")));
    }
    if let Some(f) = families.iter().find(|f| f.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: f.dim() });
    }
    let Some(basis) = nominal_basis(families) else {
        return Ok(TransversalityCert { nu: 0.0, exact: true, samples: 0 });
    };
    // projected axis coordinates per family
    let coords: Vec<Vec<Vec<f64>>> = families
        .iter()
        .map(|f| f.tubes.iter().map(|t| basis.iter().map(|b| dot(b, &t.axis)).collect()).collect())
        .collect();
    let volume = |choice: &[usize]| -> f64 {
        SquareMatrix::from_fn(n, |i, j| coords[j][choice[j]][i]).det().abs()
    };
    let total: f64 = families.iter().map(|f| f.len() as f64).product();
    if total <= MAX_EXACT_TUPLES {
        let mut nu = f64::INFINITY;
        let mut choice = vec![0usize; n];
        let mut count = 0usize;
        loop {
            nu = nu.min(volume(&choice));
            count += 1;
            let mut k = n;
            loop {
                if k == 0 {
                    return Ok(TransversalityCert { nu, exact: true, samples: count });
                }
                k -= 1;
                choice[k] += 1;
                if choice[k] < families[k].len() {
                    break;
                }
                choice[k] = 0;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x7475_6265);
    let mut nu = f64::INFINITY;
    let mut choice = vec![0usize; n];
    for _ in 0..NU_SAMPLES {
        for (c, f) in choice.iter_mut().zip(families) {
            *c = rng.random_range(0..f.len());
        }
        nu = nu.min(volume(&choice));
    }
    Ok(TransversalityCert { nu, exact: false, samples: NU_SAMPLES })
}

/// Values on the nodes of a grid, in flat row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

/// Number of tubes of `family` containing each grid node.
pub fn overlap_field(family: &TubeFamily, grid: &GridSpec) -> Result<ScalarField> {
    grid.validate()?;
    let d = grid.dim();
    if family.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: family.dim() });
    }
    let n = grid.points_per_axis;
    let h = grid.spacing();
    // node index ranges of each tube's bounding box
    let ranges: Vec<Vec<(usize, usize)>> = family
        .tubes
        .iter()
        .map(|t| {
            (0..d)
                .map(|k| {
                    let e = t.extent(k);
                    let lo = ((t.center[k] - e - grid.lower(k)) / h - 0.5).floor() - 1.0;
                    let hi = ((t.center[k] + e - grid.lower(k)) / h - 0.5).ceil() + 1.0;
                    let lo = lo.max(0.0).min(n as f64) as usize;
                    let hi = if hi < 0.0 { 0 } else { (hi as usize + 1).min(n) };
                    (lo, hi)
                })
                .collect()
        })
        .collect();
    let per_slab = n.pow(d as u32 - 1);
    let mut values = vec![0.0; grid.node_count()];
    values.par_chunks_mut(per_slab).enumerate().for_each(|(slab, chunk)| {
        let mut x = [0.0; MAX_DIM];
        x[0] = grid.coord(0, slab);
        let mut idx = [0usize; MAX_DIM];
        for (t, r) in family.tubes.iter().zip(&ranges) {
            if slab < r[0].0 || slab >= r[0].1 || r[1..].iter().any(|(lo, hi)| lo >= hi) {
                continue;
            }
            for a in 1..d {
                idx[a] = r[a].0;
                x[a] = grid.coord(a, idx[a]);
            }
            'nodes: loop {
                if t.contains(&x[..d]) {
                    let off = (1..d).fold(0, |acc, a| acc * n + idx[a]);
                    chunk[off] += 1.0;
                }
                let mut a = d - 1;
                loop {
                    if a == 0 {
                        break 'nodes;
                    }
                    idx[a] += 1;
                    if idx[a] < r[a].1 {
                        x[a] = grid.coord(a, idx[a]);
                        break;
                    }
                    idx[a] = r[a].0;
                    x[a] = grid.coord(a, idx[a]);
                    a -= 1;
                }
            }
        }
    });
    Ok(ScalarField { grid: grid.clone(), values })
}

/// `(int (prod_j F_j)^{q/n})^{n/q}` on the shared grid; `q = inf` gives the
/// maximum of the product field.
pub fn product_lq_norm(fields: &[ScalarField], q: f64) -> Result<f64> {
    let first = fields.first().ok_or_else(|| invalid("no fields"))?;
    if let Some(f) = fields.iter().find(|f| f.grid != first.grid || f.values.len() != first.values.len()) {
        return Err(invalid(format!("fields live on different grids ({:?} vs {:?})", first.grid, f.grid)));
    }
    if !(q > 0.0) {
        return Err(invalid(format!("exponent q = {q} must be > 0")));
    }
    let n = fields.len() as f64;
    let grid = &first.grid;
    let per_slab = first.values.len() / grid.points_per_axis;
    let product = |i: usize| fields.iter().map(|f| f.values[i]).product::<f64>();
    if q.is_infinite() {
        return Ok((0..first.values.len()).map(product).fold(0.0, f64::max));
    }
    let e = q / n;
    let total = reduce_partitions(grid.points_per_axis, |slab| {
        let mut acc = KahanSum::new();
        for i in slab * per_slab..(slab + 1) * per_slab {
            let v = product(i);
            if v > 0.0 {
                acc.add(v.powf(e));
            }
        }
        Ok(acc.value())
    })?;
    Ok((total * grid.cell_volume()).powf(n / q))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KakeyaRatio {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub nu: f64,
}

/// `||prod_j sum chi_T||_{L^{q/n}} / prod_j (delta_j^{d/q} #T_j)`.
pub fn kakeya_ratio(families: &[TubeFamily], q: f64, grid: &GridSpec) -> Result<KakeyaRatio> {
    let cert = transversality_nu(families)?;
    if !cert.is_valid() {
        return Err(Error::Domain(format!(
            "families are not transversal: nu = {} (exact: {}, samples: {})",
            cert.nu, cert.exact, cert.samples
        )));
    }
    let fields = families.iter().map(|f| overlap_field(f, grid)).collect::<Result<Vec<_>>>()?;
    let lhs = product_lq_norm(&fields, q)?;
    let d = grid.dim() as f64;
    let rhs: f64 = families
        .iter()
        .map(|f| {
            let wpow = if q.is_infinite() { 1.0 } else { f.width().powf(d / q) };
            wpow * f.len() as f64
        })
        .product();
    Ok(KakeyaRatio { lhs, rhs, ratio: lhs / rhs, nu: cert.nu })
}

/// Geometry scaled by `1 / width`, so the width becomes one.
pub fn rescale_to_width_one(family: &TubeFamily) -> Result<TubeFamily> {
    let s = 1.0 / family.width();
    let tubes = family.tubes.iter().map(|t| t.scaled(s)).collect::<Result<_>>()?;
    TubeFamily::new(tubes, &family.nominal, family.radius)
}

fn unit(d: usize, j: usize) -> Vec<f64> {
    let mut e = vec![0.0; d];
    e[j] = 1.0;
    e
}

/// Families `j = 0..n` partitioning the unit cube of `span{e_1..e_n}`
/// (thickened by `delta` around `1/2` in the remaining coordinates) into
/// parallel `delta`-tubes along `e_j`. Requires `1/delta` to be an integer
/// up to rounding; each family has `delta^{1-n}` tubes.
pub fn sharpness_family(n: usize, d: usize, delta: f64) -> Result<Vec<TubeFamily>> {
    if !(2 <= n && n <= d && d <= MAX_DIM) {
        return Err(invalid(format!("need 2 <= n <= d <= {MAX_DIM}, got n = {n}, d = {d}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    let m = (1.0 / delta).round() as usize;
    if ((m as f64) * delta - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("1/delta = {} is not an integer", 1.0 / delta)));
    }
    (0..n)
        .map(|j| {
            let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
            let count = m.pow(others.len() as u32);
            let tubes = (0..count)
                .map(|mut idx| {
                    let mut c = vec![0.5; d];
                    for &k in &others {
                        c[k] = ((idx % m) as f64 + 0.5) * delta;
                        idx /= m;
                    }
                    Tube::new(c, &unit(d, j), delta, Some(0.5))
                })
                .collect::<Result<_>>()?;
            TubeFamily::new(tubes, &unit(d, j), 0.0)
        })
        .collect()
}

/// Random transversal families near the coordinate directions. Each family
/// has `ceil(1/delta)` unit-length tubes centered at `1/2` along their own
/// axis; every fourth tube passes through the cube center and the others
/// have transverse center coordinates uniform in `[0.3, 0.7]`. Axes tilt by
/// at most `arcsin(radius)` from `e_j`.
pub fn random_transversal_families(d: usize, delta: f64, radius: f64, seed: u64) -> Result<Vec<TubeFamily>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid(format!("delta = {delta} must lie in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = (1.0 / delta).ceil() as usize;
    (0..d)
        .map(|j| {
            let tubes = (0..count)
                .map(|k| {
                    // tilt of norm <= radius perpendicular to e_j
                    let mut tilt: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                    tilt[j] = 0.0;
                    let tn = norm2(&tilt);
                    let r: f64 = radius * rng.random::<f64>().powf(1.0 / (d as f64 - 1.0));
                    let mut axis: Vec<f64> = tilt.iter().map(|t| if tn > 0.0 { r * t / tn } else { 0.0 }).collect();
                    axis[j] = 1.0;
                    let mut center: Vec<f64> =
                        if k % 4 == 0 { vec![0.5; d] } else { (0..d).map(|_| rng.random_range(0.3..0.7)).collect() };
                    center[j] = 0.5;
                    Tube::new(center, &axis, delta, Some(0.5))
                })
                .collect::<Result<_>>()?;
            TubeFamily::new(tubes, &unit(d, j), radius)
        })
        .collect()
}

/// Gaussian majorant of width-one tube families.
#[derive(Clone, Debug)]
pub struct Majorant {
    pub system: FlowSystem,
    /// `chi_T <= constant * exp(-pi <A(x - c), x - c>)` for every tube.
    pub constant: f64,
    /// Nominal Loomis-Whitney-type base matrices `I - e e^T`.
    pub base: Vec<SymMatrix>,
}

/// One gaussian family per tube family: matrix `I - a a^T` for axis `a`,
/// velocity equal to the tube center and unit weight, so that at time one
/// `f_j >= constant^{-1} sum chi_T`. The cross-section lies in a ball of
/// radius `sqrt(d-1)/2`, giving `constant = exp(pi (d-1)/4)`.
pub fn gaussian_majorant_system(families: &[TubeFamily], p: &ExponentVector) -> Result<Majorant> {
    let first = families.first().ok_or_else(|| invalid("no tube families"))?;
    let d = first.dim();
    for (j, f) in families.iter().enumerate() {
        if (f.width() - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("family {j} has width {}, rescale to width one first", f.width())));
        }
    }
    let fams = families
        .iter()
        .map(|f| {
            GaussianFamily::new(
                f.tubes
                    .iter()
                    .map(|t| {
                        let a = SymMatrix::identity(d) - SymMatrix::outer(&t.axis);
                        GaussianAtom::new(a, t.center.clone(), 1.0)
                    })
                    .collect::<Result<_>>()?,
            )
        })
        .collect::<Result<_>>()?;
    let base = families.iter().map(|f| SymMatrix::identity(d) - SymMatrix::outer(&f.nominal)).collect();
    Ok(Majorant {
        system: FlowSystem::new(fams, p.clone())?,
        constant: (PI * (d as f64 - 1.0) / 4.0).exp(),
        base,
    })
}

/// `constant^n det(M_*)^{-n/(2q)}` with `p_j = q/n` and `M_j` the nominal
/// bases: the Kakeya constant obtained from the endpoint bound
/// `Q_p(1) <= det(M_*)^{-1/2} prod #T_j^{p_j}` applied to the majorant.
pub fn majorant_kakeya_constant(families: &[TubeFamily], q: f64) -> Result<f64> {
    let n = families.len();
    let p = ExponentVector::uniform(n, q / n as f64)?;
    let maj = gaussian_majorant_system(families, &p)?;
    let m_star = crate::matcore::weighted_sum(&maj.base, &p)?;
    if m_star.is_singular() {
        return Err(Error::Singular { context: "majorant M_*".into(), det: m_star.det() });
    }
    Ok(maj.constant.powi(n as i32) * m_star.det().powf(-(n as f64) / (2.0 * q)))
}

/// One row of a Kakeya sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub delta: f64,
    pub q: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub nu: f64,
    pub grid_error: f64,
}

pub const SWEEP_HEADER: [&str; 7] = ["delta", "q", "lhs", "rhs", "ratio", "nu", "grid_error"];

impl SweepRow {
    pub fn record(&self) -> [String; 7] {
        [
            self.delta.to_string(),
            self.q.to_string(),
            self.lhs.to_string(),
            self.rhs.to_string(),
            self.ratio.to_string(),
            self.nu.to_string(),
            self.grid_error.to_string(),
        ]
    }
}

/// Grid used for the random transversal families.
pub fn transversal_grid(d: usize, points_per_axis: usize) -> Result<GridSpec> {
    GridSpec::new(vec![0.5; d], 0.55, points_per_axis)
}

/// Ratios for every `q` on `grid`; the grid error is the relative change of
/// the ratio on a 1.5x refined grid (skipped when `refine` is false).
pub fn sweep_rows(families: &[TubeFamily], qs: &[f64], grid: &GridSpec, refine: bool) -> Result<Vec<SweepRow>> {
    let cert = transversality_nu(families)?;
    if !cert.is_valid() {
        return Err(Error::Domain(format!("families are not transversal: nu = {}", cert.nu)));
    }
    let fields = families.iter().map(|f| overlap_field(f, grid)).collect::<Result<Vec<_>>>()?;
    let fine = if refine {
        let g = grid.refined(1.5)?;
        Some(families.iter().map(|f| overlap_field(f, &g)).collect::<Result<Vec<_>>>()?)
    } else {
        None
    };
    let d = grid.dim() as f64;
    let delta = families[0].width();
    qs.iter()
        .map(|&q| {
            let lhs = product_lq_norm(&fields, q)?;
            let rhs: f64 = families
                .iter()
                .map(|f| if q.is_infinite() { 1.0 } else { f.width().powf(d / q) } * f.len() as f64)
                .product();
            let ratio = lhs / rhs;
            let grid_error = match &fine {
                Some(ff) => {
                    let r2 = product_lq_norm(ff, q)? / rhs;
                    if ratio > 0.0 { (r2 / ratio - 1.0).abs() } else { 0.0 }
                }
                None => 0.0,
            };
            Ok(SweepRow { delta, q, lhs, rhs, ratio, nu: cert.nu, grid_error })
        })
        .collect()
}
