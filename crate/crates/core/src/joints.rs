//! Joints of line configurations in three dimensions.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matcore::{dot, norm2};
use crate::sum::loglog_slope;

pub type Vec3 = [f64; 3];

/// Largest configuration accepted by [`find_joints`].
pub const MAX_LINES: usize = 2000;
pub const DEFAULT_TOL_COPLANAR: f64 = 1e-12;
/// Relative to the bounding-box diameter of the line base points.
pub const DEFAULT_TOL_MEET_REL: f64 = 1e-9;
const PARALLEL_TOL: f64 = 1e-12;

fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    norm2(&sub(a, b))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line3 {
    point: Vec3,
    direction: Vec3,
}

impl Line3 {
    /// Normalizes the direction and flips it so its first nonzero
    /// component is positive.
    pub fn new(point: Vec3, direction: Vec3) -> Result<Self> {
        if point.iter().chain(&direction).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("line".into()));
        }
        let n = norm2(&direction);
        if n == 0.0 {
            return Err(invalid("line has zero direction"));
        }
        let mut d = direction.map(|x| x / n);
        if d.iter().find(|x| **x != 0.0).is_some_and(|x| *x < 0.0) {
            d = d.map(|x| -x);
        }
        Ok(Self { point, direction: d })
    }

    pub fn point(&self) -> &Vec3 {
        &self.point
    }

    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }

    /// Closest points on `self` and `other`, or `None` for parallel lines.
    pub fn closest_points(&self, other: &Line3) -> Option<(Vec3, Vec3)> {
        let (u, v) = (&self.direction, &other.direction);
        let b = dot(u, v);
        let den = 1.0 - b * b;
        if norm2(&cross(u, v)) <= PARALLEL_TOL {
            return None;
        }
        let w = sub(&self.point, &other.point);
        let (d, e) = (dot(u, &w), dot(v, &w));
        let s = (b * e - d) / den;
        let t = (e - b * d) / den;
        let p = [0, 1, 2].map(|k| self.point[k] + s * u[k]);
        let q = [0, 1, 2].map(|k| other.point[k] + t * v[k]);
        Some((p, q))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LineConfig {
    pub lines: Vec<Line3>,
}

pub const LINES_HEADER: [&str; 6] = ["px", "py", "pz", "dx", "dy", "dz"];

impl LineConfig {
    pub fn new(lines: Vec<Line3>) -> Self {
        Self { lines }
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(s.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
        if header != LINES_HEADER {
            return Err(invalid(format!("lines CSV header must be {}, got {}", LINES_HEADER.join(","), header.join(","))));
        }
        let mut lines = Vec::new();
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| invalid(format!("line {k}: {f:?}: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            if vals.len() != 6 {
                return Err(invalid(format!("line {k}: expected 6 fields")));
            }
            let line = Line3::new([vals[0], vals[1], vals[2]], [vals[3], vals[4], vals[5]])
                .map_err(|e| invalid(format!("line {k}: {e}")))?;
            lines.push(line);
        }
        Ok(Self { lines })
    }

    pub fn to_csv_string(&self) -> Result<String> {
        crate::io::csv_string(
            &LINES_HEADER,
            self.lines.iter().map(|l| l.point.iter().chain(&l.direction).map(|x| x.to_string()).collect::<Vec<_>>()),
        )
    }

    /// `tol_meet` default: `1e-9` times the base-point bounding-box diameter
    /// (at least one).
    pub fn default_tol_meet(&self) -> f64 {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for l in &self.lines {
            for k in 0..3 {
                lo[k] = lo[k].min(l.point[k]);
                hi[k] = hi[k].max(l.point[k]);
            }
        }
        let diam = if self.lines.is_empty() { 0.0 } else { dist(&lo, &hi) };
        DEFAULT_TOL_MEET_REL * diam.max(1.0)
    }

    /// Applies `x -> r x + shift` to every line.
    pub fn transformed(&self, r: &[[f64; 3]; 3], shift: &Vec3) -> Result<Self> {
        let apply = |x: &Vec3| [0, 1, 2].map(|i| dot(&r[i], x));
        let lines = self
            .lines
            .iter()
            .map(|l| {
                let p = apply(&l.point);
                Line3::new([p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]], apply(&l.direction))
            })
            .collect::<Result<_>>()?;
        Ok(Self { lines })
    }

    pub fn dilated(&self, factor: f64) -> Result<Self> {
        let lines = self.lines.iter().map(|l| Line3::new(l.point.map(|x| x * factor), l.direction)).collect::<Result<_>>()?;
        Ok(Self { lines })
    }
}

pub fn theta_of_triple(d1: &Vec3, d2: &Vec3, d3: &Vec3) -> f64 {
    dot(&cross(d1, d2), d3).abs()
}

/// Angle between two unoriented lines, in `[0, pi/2]`.
pub fn line_angle(u: &Vec3, v: &Vec3) -> f64 {
    norm2(&cross(u, v)).atan2(dot(u, v).abs())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    pub alpha: f64,
    pub beta: f64,
    /// Positions of `(l, l', l'')` within the input triple.
    pub order: [usize; 3],
    pub coplanar: bool,
}

/// `alpha` is the largest pairwise angle, attained by `(l, l')`; `beta` is
/// the angle between `l''` and the plane of `l, l'`.
pub fn alpha_beta_of_triple(d: [&Vec3; 3]) -> AlphaBeta {
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let (a, b, c) = pairs
        .into_iter()
        .max_by(|x, y| line_angle(d[x.0], d[x.1]).total_cmp(&line_angle(d[y.0], d[y.1])))
        .unwrap_or((0, 1, 2));
    let alpha = line_angle(d[a], d[b]);
    let nrm = cross(d[a], d[b]);
    let nn = norm2(&nrm);
    if nn <= PARALLEL_TOL {
        return AlphaBeta { alpha, beta: 0.0, order: [a, b, c], coplanar: true };
    }
    let n = nrm.map(|x| x / nn);
    let w = d[c];
    let h = dot(&n, w);
    let in_plane = norm2(&[0, 1, 2].map(|k| w[k] - h * n[k]));
    let beta = h.abs().atan2(in_plane);
    AlphaBeta { alpha, beta, order: [a, b, c], coplanar: h.abs() <= DEFAULT_TOL_COPLANAR }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub point: Vec3,
    pub theta: f64,
    /// Sorted line index triples meeting here.
    pub triples: Vec<[usize; 3]>,
    pub alpha_beta: Vec<AlphaBeta>,
}

impl Joint {
    pub fn alpha_max(&self) -> f64 {
        self.alpha_beta.iter().map(|a| a.alpha).fold(0.0, f64::max)
    }

    pub fn beta_max(&self) -> f64 {
        self.alpha_beta.iter().map(|a| a.beta).fold(0.0, f64::max)
    }
}

pub const JOINTS_HEADER: [&str; 7] = ["x", "y", "z", "theta", "num_triples", "alpha_max", "beta_max"];

pub fn joints_csv(joints: &[Joint]) -> Result<String> {
    crate::io::csv_string(
        &JOINTS_HEADER,
        joints.iter().map(|j| {
            vec![
                j.point[0].to_string(),
                j.point[1].to_string(),
                j.point[2].to_string(),
                j.theta.to_string(),
                j.triples.len().to_string(),
                j.alpha_max().to_string(),
                j.beta_max().to_string(),
            ]
        }),
    )
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a.max(b)] = a.min(b);
        }
    }
}

/// Joints of `config`: points where three pairwise non-parallel,
/// non-coplanar lines meet within `tol_meet`. Candidates within
/// `10 tol_meet` of each other are merged into one joint at their centroid.
pub fn find_joints(config: &LineConfig, tol_meet: f64, tol_coplanar: f64) -> Result<Vec<Joint>> {
    let n = config.len();
    if n > MAX_LINES {
        return Err(Error::GuardExceeded { what: "lines", count: n as f64, limit: MAX_LINES as f64 });
    }
    if !(tol_meet > 0.0) || !(tol_coplanar >= 0.0) {
        return Err(invalid("tolerances must be positive"));
    }
    let lines = &config.lines;
    // pairwise meeting points
    let pairs: Vec<(usize, usize, Vec3)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).filter_map(move |j| {
                let (p, q) = lines[i].closest_points(&lines[j])?;
                (dist(&p, &q) <= tol_meet).then(|| (i, j, [0, 1, 2].map(|k| 0.5 * (p[k] + q[k]))))
            })
        })
        .collect();
    let cell = 10.0 * tol_meet;
    let key = |p: &Vec3| p.map(|x| (x / cell).floor() as i64);
    let mut buckets: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (k, (_, _, p)) in pairs.iter().enumerate() {
        buckets.entry(key(p)).or_default().push(k);
    }
    let mut uf = UnionFind((0..pairs.len()).collect());
    for (k, (_, _, p)) in pairs.iter().enumerate() {
        let c = key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(b) = buckets.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &m in b {
                            if m > k && dist(p, &pairs[m].2) <= cell {
                                uf.union(k, m);
                            }
                        }
                    }
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..pairs.len() {
        let r = uf.find(k);
        clusters.entry(r).or_default().push(k);
    }
    let clusters: Vec<Vec<usize>> = clusters.into_values().collect();
    let mut joints: Vec<Joint> = clusters
        .par_iter()
        .filter_map(|members| {
            let meet: HashMap<(usize, usize), Vec3> = members.iter().map(|&k| ((pairs[k].0, pairs[k].1), pairs[k].2)).collect();
            let mut ls: Vec<usize> = members.iter().flat_map(|&k| [pairs[k].0, pairs[k].1]).collect();
            ls.sort_unstable();
            ls.dedup();
            let mut triples = Vec::new();
            let mut alpha_beta = Vec::new();
            let mut theta = 0.0f64;
            let mut used: BTreeMap<(usize, usize), Vec3> = BTreeMap::new();
            for (x, &a) in ls.iter().enumerate() {
                for (y, &b) in ls.iter().enumerate().skip(x + 1) {
                    let Some(pab) = meet.get(&(a, b)) else { continue };
                    for &c in &ls[y + 1..] {
                        let (Some(pac), Some(pbc)) = (meet.get(&(a, c)), meet.get(&(b, c))) else { continue };
                        if dist(pab, pac) > tol_meet || dist(pab, pbc) > tol_meet || dist(pac, pbc) > tol_meet {
                            continue;
                        }
                        let (da, db, dc) = (&lines[a].direction, &lines[b].direction, &lines[c].direction);
                        let th = theta_of_triple(da, db, dc);
                        if th <= tol_coplanar {
                            continue;
                        }
                        theta = theta.max(th);
                        triples.push([a, b, c]);
                        alpha_beta.push(alpha_beta_of_triple([da, db, dc]));
                        used.insert((a, b), *pab);
                        used.insert((a, c), *pac);
                        used.insert((b, c), *pbc);
                    }
                }
            }
            if triples.is_empty() {
                return None;
            }
            let m = used.len() as f64;
            let point = used.values().fold([0.0; 3], |acc, p| [0, 1, 2].map(|k| acc[k] + p[k] / m));
            Some(Joint { point: clear_negative_zero(point), theta: theta.min(1.0), triples, alpha_beta })
        })
        .collect();
    joints.sort_by(|a, b| {
        a.point[0].total_cmp(&b.point[0]).then(a.point[1].total_cmp(&b.point[1])).then(a.point[2].total_cmp(&b.point[2]))
    });
    Ok(joints)
}

/// Clears negative zeros so CSV output does not print `-0`.
fn clear_negative_zero(p: Vec3) -> Vec3 {
    p.map(|x| if x == 0.0 { 0.0 } else { x })
}

/// Joints with the default tolerances.
pub fn find_joints_default(config: &LineConfig) -> Result<Vec<Joint>> {
    find_joints(config, config.default_tol_meet(), DEFAULT_TOL_COPLANAR)
}

/// `3 m^2` axis-parallel lines through the integer lattice `{1..m}^2` of
/// each coordinate plane; the joints are exactly `{1..m}^3`.
pub fn lattice_config(m: usize) -> Result<LineConfig> {
    if m == 0 {
        return Err(invalid("lattice size must be >= 1"));
    }
    let mut lines = Vec::with_capacity(3 * m * m);
    for axis in 0..3 {
        for i in 1..=m {
            for j in 1..=m {
                let mut p = [0.0; 3];
                let mut d = [0.0; 3];
                d[axis] = 1.0;
                p[(axis + 1) % 3] = i as f64;
                p[(axis + 2) % 3] = j as f64;
                lines.push(Line3::new(p, d)?);
            }
        }
    }
    Ok(LineConfig::new(lines))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaBin {
    /// Joints with `theta` in `(theta_lo, theta_hi]`.
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub count: usize,
    /// `n^{3/2+eps} theta_lo^{-1/2-eps}`.
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrilinearShape {
    pub counts: [usize; 3],
    /// Joints with one line from each subfamily.
    pub joints: usize,
    /// `(#L_1 #L_2 #L_3)^{1/2+eps}`.
    pub bound: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointsBoundReport {
    pub lines: usize,
    pub joints: usize,
    pub epsilon: f64,
    pub bins: Vec<ThetaBin>,
    pub trilinear: Option<TrilinearShape>,
}

/// Dyadic `theta` bins compared with the joints bound; `subfamilies`
/// assigns each line to one of three direction caps (or none).
pub fn bound_report(
    config: &LineConfig,
    joints: &[Joint],
    epsilon: f64,
    subfamilies: Option<&[Option<usize>]>,
) -> Result<JointsBoundReport> {
    if !(epsilon > 0.0) {
        return Err(invalid(format!("epsilon = {epsilon} must be > 0")));
    }
    let n = config.len() as f64;
    let mut counts: BTreeMap<i32, usize> = BTreeMap::new();
    for j in joints {
        // theta in (2^{-k-1}, 2^{-k}]
        let k = (-j.theta.log2()).ceil().max(1.0) as i32 - 1;
        let k = if j.theta >= 1.0 { 0 } else { k.max(0) };
        *counts.entry(k).or_default() += 1;
    }
    let bins = counts
        .into_iter()
        .map(|(k, count)| {
            let theta_hi = 2f64.powi(-k);
            let theta_lo = 0.5 * theta_hi;
            let bound = n.powf(1.5 + epsilon) * theta_lo.powf(-0.5 - epsilon);
            ThetaBin { theta_lo, theta_hi, count, bound, ratio: count as f64 / bound }
        })
        .collect();
    let trilinear = match subfamilies {
        None => None,
        Some(s) => {
            if s.len() != config.len() {
                return Err(Error::DimensionMismatch { expected: config.len(), found: s.len() });
            }
            let mut c = [0usize; 3];
            for f in s.iter().flatten() {
                if *f > 2 {
                    return Err(invalid(format!("subfamily index {f} must be 0, 1 or 2")));
                }
                c[*f] += 1;
            }
            let hits = joints
                .iter()
                .filter(|j| {
                    j.triples.iter().any(|t| {
                        let mut f: Vec<Option<usize>> = t.iter().map(|&i| s[i]).collect();
                        f.sort();
                        f == [Some(0), Some(1), Some(2)]
                    })
                })
                .count();
            let bound = ((c[0] * c[1] * c[2]) as f64).powf(0.5 + epsilon);
            Some(TrilinearShape { counts: c, joints: hits, bound, ratio: if bound > 0.0 { hits as f64 / bound } else { 0.0 } })
        }
    };
    Ok(JointsBoundReport { lines: config.len(), joints: joints.len(), epsilon, bins, trilinear })
}

/// Least-squares exponent of joint count against line count.
pub fn fit_exponent(lines: &[usize], joints: &[usize]) -> Result<f64> {
    let x: Vec<f64> = lines.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = joints.iter().map(|&v| v as f64).collect();
    loglog_slope(&x, &y)
}

/// Joints of the lattice configurations `m = 1..=max_m`: rows of
/// `(m, lines, joints)`.
pub fn lattice_sweep(ms: &[usize]) -> Result<Vec<(usize, usize, usize)>> {
    ms.iter()
        .map(|&m| {
            let c = lattice_config(m)?;
            Ok((m, c.len(), find_joints_default(&c)?.len()))
        })
        .collect()
}

/// Direction-cap assignment: each line goes to the coordinate axis its
/// direction is within `cap` radians of, if any.
pub fn coordinate_caps(config: &LineConfig, cap: f64) -> Vec<Option<usize>> {
    config
        .lines
        .iter()
        .map(|l| (0..3).find(|&k| l.direction[k].abs().acos() <= cap))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn l(p: Vec3, d: Vec3) -> Line3 {
        Line3::new(p, d).unwrap()
    }

    #[test]
    fn canonical_direction() {
        let a = l([0.0; 3], [-2.0, 1.0, 0.0]);
        assert!(a.direction()[0] > 0.0);
        assert!((norm2(a.direction()) - 1.0).abs() < 1e-15);
        let b = l([0.0; 3], [0.0, -1.0, 0.0]);
        assert_eq!(b.direction(), &[0.0, 1.0, 0.0]);
        assert!(Line3::new([0.0; 3], [0.0; 3]).is_err());
    }

    #[test]
    fn coordinate_axes() {
        let c = LineConfig::new(vec![l([0.0; 3], [1.0, 0.0, 0.0]), l([0.0; 3], [0.0, 1.0, 0.0]), l([0.0; 3], [0.0, 0.0, 1.0])]);
        let j = find_joints_default(&c).unwrap();
        assert_eq!(j.len(), 1);
        assert_eq!(j[0].point, [0.0; 3]);
        assert_eq!(j[0].theta, 1.0);
    }

    #[test]
    fn coplanar_lines_make_no_joint() {
        let c = LineConfig::new(vec![l([0.0; 3], [1.0, 0.0, 0.0]), l([0.0; 3], [0.0, 1.0, 0.0]), l([0.0; 3], [1.0, 1.0, 0.0])]);
        assert!(find_joints_default(&c).unwrap().is_empty());
    }

    #[test]
    fn lattice_two() {
        let c = lattice_config(2).unwrap();
        assert_eq!(c.len(), 12);
        let j = find_joints_default(&c).unwrap();
        assert_eq!(j.len(), 8);
        assert!(j.iter().all(|x| x.theta == 1.0));
    }

    #[test]
    fn theta_examples() {
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let e3 = [0.0, 0.0, 1.0];
        let s = 1.0 / 3f64.sqrt();
        assert_eq!(theta_of_triple(&e1, &e2, &e3), 1.0);
        assert!((theta_of_triple(&e1, &e2, &[s, s, s]) - s).abs() < 1e-15);
        assert_eq!(theta_of_triple(&e1, &e2, &[s, s, 0.0]), 0.0);
    }

    #[test]
    fn alpha_beta_examples() {
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        let e3 = [0.0, 0.0, 1.0];
        let ab = alpha_beta_of_triple([&e1, &e2, &e3]);
        assert!((ab.alpha - FRAC_PI_2).abs() < 1e-15 && (ab.beta - FRAC_PI_2).abs() < 1e-15);
        let s = 1.0 / 3f64.sqrt();
        let w = [s, s, s];
        let ab = alpha_beta_of_triple([&e1, &e2, &w]);
        assert!((ab.alpha - FRAC_PI_2).abs() < 1e-15);
        assert!((ab.beta - s.asin()).abs() < 1e-14);
        let th = theta_of_triple(&e1, &e2, &w);
        assert!((th - ab.alpha.sin() * ab.beta.sin()).abs() < 1e-12);
        let flat = alpha_beta_of_triple([&e1, &e2, &[s, s, 0.0]]);
        assert!(flat.coplanar && flat.beta == 0.0);
    }

    #[test]
    fn lattice_report_single_bin() {
        let c = lattice_config(3).unwrap();
        let j = find_joints_default(&c).unwrap();
        let r = bound_report(&c, &j, 0.01, Some(&coordinate_caps(&c, 0.1))).unwrap();
        assert_eq!(r.bins.len(), 1);
        assert_eq!(r.bins[0].theta_hi, 1.0);
        assert_eq!(r.bins[0].count, 27);
        let t = r.trilinear.unwrap();
        assert_eq!(t.counts, [9, 9, 9]);
        assert_eq!(t.joints, 27);
    }

    #[test]
    fn generic_lines_have_no_joints() {
        let c = LineConfig::new(vec![
            l([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
            l([0.0, 0.0, 1.0], [0.0, 1.0, 0.0]),
            l([0.3, 2.0, 0.0], [0.0, 0.0, 1.0]),
        ]);
        let j = find_joints_default(&c).unwrap();
        assert!(j.is_empty());
        let r = bound_report(&c, &j, 0.1, None).unwrap();
        assert!(r.bins.is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let c = lattice_config(2).unwrap();
        let back = LineConfig::from_csv_str(&c.to_csv_string().unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(LineConfig::from_csv_str("px,py,pz,dx,dy,dz\n0,0,0,0,0,0\n").is_err());
        let csv = joints_csv(&find_joints_default(&c).unwrap()).unwrap();
        assert!(csv.starts_with("x,y,z,theta,num_triples,alpha_max,beta_max\n"));
        assert_eq!(csv.lines().count(), 9);
    }
}
