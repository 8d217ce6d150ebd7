//! Piecewise-constant `R^n`-valued functions on a uniform standard-dyadic grid.
//!
//! A [`GridSpec`] refines a standard dyadic root cube `depth` times; its
//! `2^{depth*d}` cells are indexed row-major with axis 0 most significant.
//! Cell measures are exact rationals, and every integral over a rational box
//! is the exact overlap-weighted sum of cell values (the function is extended
//! by zero outside the root).

use std::ops::Range;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dyadic_grid::{DyadicCube, RationalBox};
use crate::rational::{ceil_int, floor_int, pow2, to_f64, Rational};
use crate::{Error, Result};

/// Comparison slack for floating-point inequalities. Measure comparisons
/// never use it.
pub const FLOAT_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    pub root: DyadicCube,
    pub depth: u32,
}

impl GridSpec {
    pub fn new(root: DyadicCube, depth: u32) -> Result<Self> {
        if !root.is_standard() {
            return Err(Error::Parameter("grid root must be a standard dyadic cube".into()));
        }
        if depth > 24 || root.dim() as u32 * depth > 30 {
            return Err(Error::Parameter(format!("grid depth {depth} too large")));
        }
        Ok(Self { root, depth })
    }

    /// Grid on the unit cube `[0,1)^d`.
    pub fn unit(d: usize, depth: u32) -> Self {
        Self::new(DyadicCube::standard(0, vec![0; d]), depth).expect("unit grid")
    }

    pub fn dim(&self) -> usize {
        self.root.dim()
    }

    pub fn per_axis(&self) -> usize {
        1usize << self.depth
    }

    pub fn num_cells(&self) -> usize {
        self.per_axis().pow(self.dim() as u32)
    }

    pub fn cell_level(&self) -> i32 {
        self.root.j + self.depth as i32
    }

    pub fn cell_side(&self) -> Rational {
        pow2(-self.cell_level())
    }

    pub fn cell_measure(&self) -> Rational {
        self.root.measure() * pow2(-((self.depth as usize * self.dim()) as i32))
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        let n = self.per_axis();
        let d = self.dim();
        let mut out = vec![0; d];
        let mut rest = idx;
        for i in (0..d).rev() {
            out[i] = rest % n;
            rest /= n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let n = self.per_axis();
        multi.iter().fold(0, |acc, &i| acc * n + i)
    }

    pub fn cell_cube(&self, idx: usize) -> DyadicCube {
        let scale = 1i64 << self.depth;
        let m = self
            .multi_index(idx)
            .iter()
            .zip(&self.root.m)
            .map(|(&i, &r)| r * scale + i as i64)
            .collect();
        DyadicCube::standard(self.cell_level(), m)
    }

    pub fn cell_center(&self, idx: usize) -> Vec<Rational> {
        let h = self.cell_side();
        let lower = self.root.lower();
        self.multi_index(idx)
            .iter()
            .zip(lower)
            .map(|(&i, l)| l + h * Rational::new(2 * i as i64 + 1, 2))
            .collect()
    }

    pub fn cell_center_f64(&self, idx: usize) -> Vec<f64> {
        self.cell_center(idx).into_iter().map(to_f64).collect()
    }

    /// Cell indices along `axis` whose center coordinate lies in `[lo, hi)`.
    pub fn axis_center_range(&self, lo: Rational, hi: Rational, axis: usize) -> Range<usize> {
        let h = self.cell_side();
        let origin = self.root.lower()[axis];
        let half = Rational::new(1, 2);
        let clamp = |v: i64| v.clamp(0, self.per_axis() as i64) as usize;
        let start = clamp(ceil_int((lo - origin) / h - half));
        let end = clamp(ceil_int((hi - origin) / h - half));
        start..end.max(start)
    }

    /// Cells whose center lies in the box, in increasing index order.
    pub fn cells_with_center_in(&self, b: &RationalBox) -> Vec<usize> {
        let ranges: Vec<Range<usize>> = (0..self.dim())
            .map(|i| self.axis_center_range(b.lower[i], b.upper[i], i))
            .collect();
        self.cells_in_ranges(&ranges)
    }

    pub(crate) fn cells_in_ranges(&self, ranges: &[Range<usize>]) -> Vec<usize> {
        if ranges.iter().any(|r| r.is_empty()) {
            return Vec::new();
        }
        let mut out = vec![0usize];
        let n = self.per_axis();
        for r in ranges {
            out = out
                .into_iter()
                .flat_map(|base| r.clone().map(move |i| base * n + i))
                .collect();
        }
        out
    }

    /// Per-axis list of `(cell index, overlap length)` for cells meeting the box.
    pub fn axis_overlaps(&self, b: &RationalBox) -> Vec<Vec<(usize, Rational)>> {
        let h = self.cell_side();
        let lower = self.root.lower();
        (0..self.dim())
            .map(|axis| {
                let origin = lower[axis];
                let lo = b.lower[axis];
                let hi = b.upper[axis];
                let first = floor_int((lo - origin) / h).max(0);
                let last = (ceil_int((hi - origin) / h)).min(self.per_axis() as i64);
                (first..last)
                    .filter_map(|i| {
                        let cl = origin + h * i;
                        let ch = cl + h;
                        let len = ch.min(hi) - cl.max(lo);
                        (len > Rational::from_integer(0)).then_some((i as usize, len))
                    })
                    .collect()
            })
            .collect()
    }

    /// Index of the cell containing `x`, if `x` lies in the root.
    pub fn cell_of_point(&self, x: &[Rational]) -> Option<usize> {
        if !self.root.to_box().contains_point(x) {
            return None;
        }
        let h = self.cell_side();
        let lower = self.root.lower();
        let multi: Vec<usize> = x
            .iter()
            .zip(lower)
            .map(|(xi, l)| floor_int((*xi - l) / h) as usize)
            .collect();
        Some(self.flat_index(&multi))
    }

    /// Offset (in cells, per axis) and edge length (in cells) of a standard
    /// dyadic subcube of the root no finer than a cell.
    pub fn subcube_extent(&self, q: &DyadicCube) -> Result<(Vec<usize>, usize)> {
        if !q.is_standard() || q.dim() != self.dim() {
            return Err(Error::Parameter("expected a standard dyadic cube of the grid's dimension".into()));
        }
        if q.j > self.cell_level() || !self.root.contains(q) {
            return Err(Error::Parameter("cube is not a resolved subcube of the grid root".into()));
        }
        let shift = (self.cell_level() - q.j) as u32;
        let root_shift = self.depth;
        let offset = q
            .m
            .iter()
            .zip(&self.root.m)
            .map(|(&qm, &rm)| ((qm << shift) - (rm << root_shift)) as usize)
            .collect();
        Ok((offset, 1usize << shift))
    }

    /// Cells of a standard dyadic subcube, in increasing index order.
    pub fn subcube_cells(&self, q: &DyadicCube) -> Result<Vec<usize>> {
        let (offset, len) = self.subcube_extent(q)?;
        let ranges: Vec<Range<usize>> = offset.iter().map(|&o| o..o + len).collect();
        Ok(self.cells_in_ranges(&ranges))
    }
}

/// Exponent `q ∈ [1, ∞]` of the `ℓ^q` norm on `R^n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormExponent {
    Finite(f64),
    Infinity,
}

impl NormExponent {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_infinite() && q > 0.0 {
            Ok(Self::Infinity)
        } else if q >= 1.0 {
            Ok(Self::Finite(q))
        } else {
            Err(Error::Parameter(format!("norm exponent {q} below 1")))
        }
    }

    pub fn norm(&self, v: &[f64]) -> f64 {
        match *self {
            Self::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Self::Finite(1.0) => v.iter().map(|x| x.abs()).sum(),
            Self::Finite(2.0) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::Finite(q) => v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(1.0 / q),
        }
    }

    /// `‖a - b‖` without allocating.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match *self {
            Self::Infinity => diffs.fold(0.0, f64::max),
            Self::Finite(1.0) => diffs.sum(),
            Self::Finite(2.0) => diffs.map(|x| x * x).sum::<f64>().sqrt(),
            Self::Finite(q) => diffs.map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q),
        }
    }
}

impl Serialize for NormExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(q) => s.serialize_f64(*q),
            Self::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(q) => NormExponent::new(q).map_err(D::Error::custom),
            Raw::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(NormExponent::Infinity)
            }
            Raw::Str(s) => s
                .parse::<f64>()
                .map_err(D::Error::custom)
                .and_then(|q| NormExponent::new(q).map_err(D::Error::custom)),
        }
    }
}

/// A piecewise-constant function from the grid's root to `(R^n, ℓ^q)`,
/// zero outside the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub grid: GridSpec,
    pub n: usize,
    pub q: NormExponent,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: GridSpec, n: usize, q: NormExponent, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != grid.num_cells() * n {
            return Err(Error::Dimension(format!(
                "expected {} values, got {}",
                grid.num_cells() * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("field values must be finite".into()));
        }
        Ok(Self { grid, n, q, values })
    }

    pub fn scalar(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, 1, NormExponent::Finite(1.0), values)
    }

    pub fn zeros(grid: GridSpec, n: usize, q: NormExponent) -> Self {
        let len = grid.num_cells() * n;
        Self { grid, n, q, values: vec![0.0; len] }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn num_cells(&self) -> usize {
        self.grid.num_cells()
    }

    pub fn value(&self, cell: usize) -> &[f64] {
        &self.values[cell * self.n..(cell + 1) * self.n]
    }

    pub fn norm_at(&self, cell: usize) -> f64 {
        self.q.norm(self.value(cell))
    }

    /// Cellwise `ℓ^q` norm as a scalar field.
    pub fn norm_field(&self) -> SampledFunction {
        let values = (0..self.num_cells()).map(|c| self.norm_at(c)).collect();
        SampledFunction {
            grid: self.grid.clone(),
            n: 1,
            q: self.q,
            values,
        }
    }

    fn require_scalar(&self) -> Result<()> {
        if self.n == 1 {
            Ok(())
        } else {
            Err(Error::Dimension(format!("expected a scalar field, got n = {}", self.n)))
        }
    }

    /// `∫_B g` for a scalar field, exact up to the final floating-point sum.
    pub fn box_integral(&self, b: &RationalBox) -> Result<f64> {
        self.require_scalar()?;
        if b.dim() != self.grid.dim() {
            return Err(Error::Dimension("box dimension differs from grid".into()));
        }
        let overlaps = self.grid.axis_overlaps(b);
        let n = self.grid.per_axis();
        // Iterate the tensor product of per-axis overlaps.
        fn walk(
            axis: usize,
            base: usize,
            weight: f64,
            overlaps: &[Vec<(usize, f64)>],
            n: usize,
            values: &[f64],
        ) -> f64 {
            if axis == overlaps.len() {
                return weight * values[base];
            }
            overlaps[axis]
                .iter()
                .map(|&(i, w)| walk(axis + 1, base * n + i, weight * w, overlaps, n, values))
                .sum()
        }
        let overlaps: Vec<Vec<(usize, f64)>> = overlaps
            .into_iter()
            .map(|v| v.into_iter().map(|(i, len)| (i, to_f64(len))).collect())
            .collect();
        Ok(walk(0, 0, 1.0, &overlaps, n, &self.values))
    }

    /// `⨍_B g`, with `g` extended by zero outside the root.
    pub fn box_average(&self, b: &RationalBox) -> Result<f64> {
        Ok(self.box_integral(b)? / to_f64(b.measure()))
    }

    /// Cells with center in `b` and value strictly above `r`.
    pub fn superlevel_set(&self, b: &RationalBox, r: f64) -> Result<CellSet> {
        self.require_scalar()?;
        let members = self
            .grid
            .cells_with_center_in(b)
            .into_iter()
            .filter(|&c| self.values[c] > r)
            .collect();
        Ok(CellSet::from_sorted(self.grid.clone(), members))
    }

    /// `‖f‖*(t) = min { r ≥ 0 : |{‖f‖ > r}| ≤ t }`.
    pub fn decreasing_rearrangement(&self, t: Rational) -> Result<f64> {
        if t < Rational::from_integer(0) {
            return Err(Error::Parameter("rearrangement argument must be nonnegative".into()));
        }
        let allowed = floor_int(t / self.grid.cell_measure());
        let mut norms: Vec<f64> = (0..self.num_cells()).map(|c| self.norm_at(c)).collect();
        if allowed >= norms.len() as i64 {
            return Ok(0.0);
        }
        let k = allowed as usize;
        let (_, kth, _) = norms.select_nth_unstable_by(k, |a, b| b.total_cmp(a));
        Ok(kth.max(0.0))
    }

    /// `f·1_B`: zero on cells whose center is outside `b`.
    pub fn restricted(&self, b: &RationalBox) -> SampledFunction {
        let mut out = SampledFunction::zeros(self.grid.clone(), self.n, self.q);
        for c in self.grid.cells_with_center_in(b) {
            out.values[c * self.n..(c + 1) * self.n].copy_from_slice(self.value(c));
        }
        out
    }

    /// `f + v` for a constant vector `v`.
    pub fn translated(&self, v: &[f64]) -> Result<SampledFunction> {
        if v.len() != self.n {
            return Err(Error::Dimension("offset vector length differs from n".into()));
        }
        let mut out = self.clone();
        for (i, x) in out.values.iter_mut().enumerate() {
            *x += v[i % self.n];
        }
        Ok(out)
    }

    pub fn scaled(&self, s: f64) -> SampledFunction {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|x| *x *= s);
        out
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.num_cells()).map(|c| self.norm_at(c)).fold(0.0, f64::max)
    }
}

/// A set of grid cells; measure is the exact cell count times the cell measure.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSet {
    pub grid: GridSpec,
    members: Vec<usize>,
}

impl CellSet {
    pub fn new(grid: GridSpec, mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Self { grid, members }
    }

    pub(crate) fn from_sorted(grid: GridSpec, members: Vec<usize>) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        Self { grid, members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, cell: usize) -> bool {
        self.members.binary_search(&cell).is_ok()
    }

    pub fn measure(&self) -> Rational {
        self.grid.cell_measure() * Rational::from_integer(self.members.len() as i64)
    }

    pub fn is_disjoint(&self, other: &CellSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.members.len() && j < other.members.len() {
            match self.members[i].cmp(&other.members[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn difference(&self, other: &CellSet) -> CellSet {
        let members = self
            .members
            .iter()
            .copied()
            .filter(|c| !other.contains(*c))
            .collect();
        CellSet::from_sorted(self.grid.clone(), members)
    }
}
