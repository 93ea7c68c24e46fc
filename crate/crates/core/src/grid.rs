//! Tensor grids of cell midpoints over an axis-aligned cube.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matcore::MAX_DIM;
use crate::sum::{reduce_partitions, KahanSum};

/// Hard cap on the number of grid nodes.
pub const MAX_NODES: f64 = 1e8;

/// Cube `center +- half_width` split into `points_per_axis` cells per axis;
/// nodes sit at cell midpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub center: Vec<f64>,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(center: Vec<f64>, half_width: f64, points_per_axis: usize) -> Result<Self> {
        let g = Self { center, half_width, points_per_axis };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.center.len();
        if d == 0 || d > MAX_DIM {
            return Err(invalid(format!("grid dimension {d} outside 1..={MAX_DIM}")));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("grid center".into()));
        }
        if !(self.half_width > 0.0 && self.half_width.is_finite()) {
            return Err(invalid(format!("grid half-width {} must be > 0", self.half_width)));
        }
        if self.points_per_axis < 2 {
            return Err(invalid("grid needs at least 2 points per axis"));
        }
        let nodes = self.node_count_f64();
        if nodes > MAX_NODES {
            return Err(Error::GuardExceeded { what: "grid node", count: nodes, limit: MAX_NODES });
        }
        Ok(())
    }

    /// Grids used for gaussian quadrature must have a node at the center.
    pub fn require_odd(&self) -> Result<()> {
        if self.points_per_axis % 2 == 0 {
            return Err(invalid(format!(
                "quadrature grid needs an odd node count per axis, got {}",
                self.points_per_axis
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim() as i32)
    }

    fn node_count_f64(&self) -> f64 {
        (self.points_per_axis as f64).powi(self.dim() as i32)
    }

    pub fn node_count(&self) -> usize {
        self.points_per_axis.pow(self.dim() as u32)
    }

    /// Coordinate of node `k` along `axis`.
    #[inline]
    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        self.center[axis] - self.half_width + (k as f64 + 0.5) * self.spacing()
    }

    /// Lower corner of the box.
    pub fn lower(&self, axis: usize) -> f64 {
        self.center[axis] - self.half_width
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.center[axis] + self.half_width
    }

    /// Same box, `factor` times as many points per axis (rounded; kept odd
    /// when the original count is odd).
    pub fn refined(&self, factor: f64) -> Result<Self> {
        let mut n = (self.points_per_axis as f64 * factor).round() as usize;
        if self.points_per_axis % 2 == 1 && n % 2 == 0 {
            n += 1;
        }
        Self::new(self.center.clone(), self.half_width, n.max(2))
    }

    /// Geometry scaled about the origin.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.center.iter().map(|c| c * factor).collect(),
            self.half_width * factor,
            self.points_per_axis,
        )
    }

    /// Flat row-major node index (axis 0 slowest).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &k| acc * self.points_per_axis + k)
    }

    /// Calls `f(flat_index, x)` for every node in the slab with axis-0
    /// index `slab`, in flat-index order.
    pub fn for_each_in_slab(&self, slab: usize, mut f: impl FnMut(usize, &[f64])) {
        let d = self.dim();
        let n = self.points_per_axis;
        let mut multi = [0usize; MAX_DIM];
        let mut x = [0.0f64; MAX_DIM];
        multi[0] = slab;
        x[0] = self.coord(0, slab);
        for a in 1..d {
            x[a] = self.coord(a, 0);
        }
        let per_slab = n.pow(d as u32 - 1);
        let base = slab * per_slab;
        for offset in 0..per_slab {
            f(base + offset, &x[..d]);
            // odometer over axes 1..d, last axis fastest
            let mut a = d - 1;
            while a >= 1 {
                multi[a] += 1;
                if multi[a] < n {
                    x[a] = self.coord(a, multi[a]);
                    break;
                }
                multi[a] = 0;
                x[a] = self.coord(a, 0);
                a -= 1;
            }
        }
    }

    /// Midpoint-rule integral of `f`. `init` builds per-partition scratch
    /// state. Non-finite integrand values are an error.
    pub fn integrate<S, I, F>(&self, init: I, f: F) -> Result<f64>
    where
        I: Fn() -> S + Sync + Send,
        F: Fn(&mut S, &[f64]) -> f64 + Sync + Send,
    {
        self.validate()?;
        let total = reduce_partitions(self.points_per_axis, |slab| {
            let mut state = init();
            let mut acc = KahanSum::new();
            let mut bad = None;
            self.for_each_in_slab(slab, |_, x| {
                let v = f(&mut state, x);
                if !v.is_finite() && bad.is_none() {
                    bad = Some(x.to_vec());
                }
                acc.add(v);
            });
            match bad {
                Some(x) => Err(Error::NonFinite(format!("integrand at {x:?}"))),
                None => Ok(acc.value()),
            }
        })?;
        Ok(total * self.cell_volume())
    }
}
