//! Weights, dual weights, the maximal function and Muckenhoupt-type
//! characteristics over a declared finite cube family.
//!
//! Family in `d = 1`: every interval that is a union of consecutive grid
//! cells. Family in `d ≥ 2`: every cube of the `3^d` translated dyadic systems
//! lying inside the root, from the root level down to the cell level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_grid::{translations, DyadicCube, RationalBox};
use crate::rational::{ceil_int, floor_int, pow2, to_f64, Rational};
use crate::sampled_field::{CellSet, GridSpec, NormExponent, SampledFunction};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weight {
    w: SampledFunction,
}

impl Weight {
    pub fn new(w: SampledFunction) -> Result<Self> {
        if w.n != 1 {
            return Err(Error::Dimension("a weight is a scalar field".into()));
        }
        if w.values().iter().any(|&v| v <= 0.0) {
            return Err(Error::Parameter("weights must be strictly positive".into()));
        }
        Ok(Self { w })
    }

    pub fn field(&self) -> &SampledFunction {
        &self.w
    }

    pub fn grid(&self) -> &GridSpec {
        &self.w.grid
    }

    pub fn values(&self) -> &[f64] {
        self.w.values()
    }

    /// `w(A)` for a set of cells.
    pub fn measure_of(&self, a: &CellSet) -> f64 {
        let mu = to_f64(self.w.grid.cell_measure());
        a.members().iter().map(|&c| self.w.values()[c]).sum::<f64>() * mu
    }

    /// `w(B)` with exact overlap weights.
    pub fn box_mass(&self, b: &RationalBox) -> Result<f64> {
        self.w.box_integral(b)
    }
}

fn check_p(p: f64) -> Result<()> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("exponent p = {p} must lie in (1, ∞)")))
    }
}

/// `σ_{w,p} = w^{-1/(p-1)}`.
pub fn dual_weight(w: &Weight, p: f64) -> Result<Weight> {
    check_p(p)?;
    let e = -1.0 / (p - 1.0);
    let vals = w.values().iter().map(|v| v.powf(e)).collect();
    Weight::new(SampledFunction::scalar(w.grid().clone(), vals)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CubeFamily {
    GridIntervals,
    ShiftedDyadic,
}

impl CubeFamily {
    pub fn for_grid(grid: &GridSpec) -> Self {
        if grid.dim() == 1 {
            CubeFamily::GridIntervals
        } else {
            CubeFamily::ShiftedDyadic
        }
    }

    pub fn describe(&self) -> &'static str {
        match self {
            CubeFamily::GridIntervals => "all unions of consecutive grid cells",
            CubeFamily::ShiftedDyadic => "cubes of the 3^d translated dyadic systems inside the root, down to cell size",
        }
    }
}

/// Cubes of the `d ≥ 2` family, ordered by translation, level, then position.
pub fn shifted_family(grid: &GridSpec) -> Vec<DyadicCube> {
    let d = grid.dim();
    let root = grid.root.to_box();
    let mut out = Vec::new();
    for u in translations(d) {
        for j in grid.root.j..=grid.cell_level() {
            let scale = pow2(j);
            let sign = if j.rem_euclid(2) == 0 { 1 } else { -1 };
            let ranges: Vec<(i64, i64)> = (0..d)
                .map(|i| {
                    let shift = u[i] * sign;
                    let lo = ceil_int(root.lower[i] * scale - shift);
                    let hi = floor_int(root.upper[i] * scale - shift) - 1;
                    (lo, hi)
                })
                .collect();
            if ranges.iter().any(|(lo, hi)| lo > hi) {
                continue;
            }
            let mut ms: Vec<Vec<i64>> = vec![Vec::new()];
            for &(lo, hi) in &ranges {
                ms = ms
                    .into_iter()
                    .flat_map(|p| {
                        (lo..=hi).map(move |m| {
                            let mut v = p.clone();
                            v.push(m);
                            v
                        })
                    })
                    .collect();
            }
            out.extend(ms.into_iter().map(|m| DyadicCube { u: u.clone(), j, m }));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub p: NormExponent,
    pub value: f64,
    /// Smallest per-cube value over the family.
    pub min_value: f64,
    pub argmax_cube: RationalBox,
    pub cube_family_size: usize,
    pub family: CubeFamily,
}

fn prefix(values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len() + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

fn interval_box(grid: &GridSpec, a: usize, b: usize) -> RationalBox {
    let lo = grid.root.lower()[0];
    let h = grid.cell_side();
    RationalBox {
        lower: vec![lo + h * a as i64],
        upper: vec![lo + h * b as i64],
    }
}

/// Larger value wins; ties go to the earlier family member.
fn better(x: (f64, usize, usize), y: (f64, usize, usize)) -> (f64, usize, usize) {
    if y.0 > x.0 || (y.0 == x.0 && (y.1, y.2) < (x.1, x.2)) {
        y
    } else {
        x
    }
}

type Extremes = ((f64, usize, usize), f64);

fn merge(x: Extremes, y: Extremes) -> Extremes {
    (better(x.0, y.0), x.1.min(y.1))
}

/// `sup_Q ⟨u⟩_Q ⟨v⟩_Q^e` over the family.
fn product_sup(u: &Weight, v: &Weight, e: f64, p: NormExponent) -> Result<ApReport> {
    let grid = u.grid();
    if grid != v.grid() {
        return Err(Error::Dimension("weights live on different grids".into()));
    }
    let family = CubeFamily::for_grid(grid);
    match family {
        CubeFamily::GridIntervals => {
            let n = grid.per_axis();
            let pu = prefix(u.values());
            let pv = prefix(v.values());
            let best = (0..n)
                .into_par_iter()
                .map(|a| {
                    let mut best = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
                    let mut min = f64::INFINITY;
                    for b in a + 1..=n {
                        let len = (b - a) as f64;
                        let val = (pu[b] - pu[a]) / len * ((pv[b] - pv[a]) / len).powf(e);
                        best = better(best, (val, a, b));
                        min = min.min(val);
                    }
                    (best, min)
                })
                .reduce(|| ((f64::NEG_INFINITY, usize::MAX, usize::MAX), f64::INFINITY), merge);
            let (best, min_value) = best;
            Ok(ApReport {
                p,
                value: best.0,
                min_value,
                argmax_cube: interval_box(grid, best.1, best.2),
                cube_family_size: n * (n + 1) / 2,
                family,
            })
        }
        CubeFamily::ShiftedDyadic => {
            let cubes = shifted_family(grid);
            let best = cubes
                .par_iter()
                .enumerate()
                .map(|(i, q)| -> Result<Extremes> {
                    let b = q.to_box();
                    let val = u.field().box_average(&b)? * v.field().box_average(&b)?.powf(e);
                    Ok(((val, i, 0), val))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(((f64::NEG_INFINITY, usize::MAX, usize::MAX), f64::INFINITY), merge);
            let (best, min_value) = best;
            Ok(ApReport {
                p,
                value: best.0,
                min_value,
                argmax_cube: cubes[best.1].to_box(),
                cube_family_size: cubes.len(),
                family,
            })
        }
    }
}

/// `[w]_{A_p} = sup_Q ⟨w⟩_Q ⟨σ_{w,p}⟩_Q^{p-1}`.
pub fn ap_characteristic(w: &Weight, p: f64) -> Result<ApReport> {
    let sigma = dual_weight(w, p)?;
    product_sup(w, &sigma, p - 1.0, NormExponent::Finite(p))
}

/// `[w,σ]_{A_p} = sup_Q ⟨w⟩_Q ⟨σ⟩_Q^{p-1}`.
pub fn two_weight_characteristic(w: &Weight, sigma: &Weight, p: f64) -> Result<f64> {
    check_p(p)?;
    Ok(product_sup(w, sigma, p - 1.0, NormExponent::Finite(p))?.value)
}

/// Maximal function over the family, evaluated at cell centers.
pub fn maximal_function(g: &SampledFunction) -> Result<SampledFunction> {
    if g.n != 1 {
        return Err(Error::Dimension("maximal function of a scalar field".into()));
    }
    if g.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Parameter("maximal function expects g ≥ 0".into()));
    }
    let grid = &g.grid;
    let out = match CubeFamily::for_grid(grid) {
        CubeFamily::GridIntervals => {
            let n = grid.per_axis();
            let pg = prefix(g.values());
            (0..n)
                .into_par_iter()
                .map(|a| {
                    // best[i - a] = max_{b > i} ⟨g⟩_{[a,b)}
                    let mut best = vec![f64::NEG_INFINITY; n - a];
                    let mut run = f64::NEG_INFINITY;
                    for b in (a + 1..=n).rev() {
                        run = run.max((pg[b] - pg[a]) / (b - a) as f64);
                        best[b - 1 - a] = run;
                    }
                    best
                })
                .collect::<Vec<_>>()
                .into_iter()
                .enumerate()
                .fold(vec![f64::NEG_INFINITY; n], |mut m, (a, best)| {
                    for (off, v) in best.into_iter().enumerate() {
                        m[a + off] = m[a + off].max(v);
                    }
                    m
                })
        }
        CubeFamily::ShiftedDyadic => {
            let per_cube = shifted_family(grid)
                .par_iter()
                .map(|q| {
                    let b = q.to_box();
                    Ok((grid.cells_with_center_in(&b), g.box_average(&b)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut m = vec![0.0f64; grid.num_cells()];
            for (cells, avg) in per_cube {
                for c in cells {
                    m[c] = m[c].max(avg);
                }
            }
            m
        }
    };
    SampledFunction::scalar(grid.clone(), out)
}

/// Fujii–Wilson `[w]_{A_∞} = sup_Q w(Q)^{-1} ∫_Q M(w 1_Q)` with `M` over the
/// same family. `O(N^3)` in `d = 1`; quadratic in the family size otherwise.
pub fn a_infty_characteristic(w: &Weight) -> Result<ApReport> {
    let grid = w.grid();
    let family = CubeFamily::for_grid(grid);
    match family {
        CubeFamily::GridIntervals => {
            let n = grid.per_axis();
            let pw = prefix(w.values());
            let best = (0..n)
                .into_par_iter()
                .map(|s| {
                    // m[i - s] = max over [a,b) ⊂ [s,e) with a ≤ i < b of ⟨w⟩_{[a,b)}
                    let mut m: Vec<f64> = Vec::with_capacity(n - s);
                    let mut best = (f64::NEG_INFINITY, usize::MAX, usize::MAX);
                    let mut min = f64::INFINITY;
                    for e in s + 1..=n {
                        m.push(0.0);
                        let mut run = f64::NEG_INFINITY;
                        let mut total = 0.0;
                        for a in s..e {
                            run = run.max((pw[e] - pw[a]) / (e - a) as f64);
                            let slot = &mut m[a - s];
                            if run > *slot {
                                *slot = run;
                            }
                            total += *slot;
                        }
                        let val = total / (pw[e] - pw[s]);
                        best = better(best, (val, s, e));
                        min = min.min(val);
                    }
                    (best, min)
                })
                .reduce(|| ((f64::NEG_INFINITY, usize::MAX, usize::MAX), f64::INFINITY), merge);
            let (best, min_value) = best;
            Ok(ApReport {
                p: NormExponent::Infinity,
                value: best.0,
                min_value,
                argmax_cube: interval_box(grid, best.1, best.2),
                cube_family_size: n * (n + 1) / 2,
                family,
            })
        }
        CubeFamily::ShiftedDyadic => {
            let cubes = shifted_family(grid);
            let boxes: Vec<RationalBox> = cubes.iter().map(|q| q.to_box()).collect();
            let field = w.field();
            let best = boxes
                .par_iter()
                .enumerate()
                .map(|(i, qb)| -> Result<Extremes> {
                    let mass = field.box_integral(qb)?;
                    let overlaps = grid.axis_overlaps(qb);
                    let mut integral = 0.0;
                    let mut cells: Vec<(usize, Rational)> = vec![(0, Rational::from_integer(1))];
                    for axis in &overlaps {
                        cells = cells
                            .into_iter()
                            .flat_map(|(base, wgt)| axis.iter().map(move |&(k, len)| (base * grid.per_axis() + k, wgt * len)))
                            .collect();
                    }
                    for (c, ov) in cells {
                        let x = grid.cell_center(c);
                        let mut mx = 0.0f64;
                        for pb in &boxes {
                            if !pb.contains_point(&x) {
                                continue;
                            }
                            if let Some(inter) = pb.intersection(qb) {
                                mx = mx.max(field.box_integral(&inter)? / to_f64(pb.measure()));
                            }
                        }
                        integral += mx * to_f64(ov);
                    }
                    Ok(((integral / mass, i, 0), integral / mass))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold(((f64::NEG_INFINITY, usize::MAX, usize::MAX), f64::INFINITY), merge);
            let (best, min_value) = best;
            Ok(ApReport {
                p: NormExponent::Infinity,
                value: best.0,
                min_value,
                argmax_cube: boxes[best.1].clone(),
                cube_family_size: boxes.len(),
                family,
            })
        }
    }
}

/// `(∫ ‖f‖^p w)^{1/p}` by cellwise quadrature.
pub fn weighted_norm(f: &SampledFunction, w: &Weight, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Parameter(format!("exponent p = {p} must lie in [1, ∞)")));
    }
    if &f.grid != w.grid() {
        return Err(Error::Dimension("field and weight live on different grids".into()));
    }
    let mu = to_f64(f.grid.cell_measure());
    let s: f64 = (0..f.num_cells())
        .map(|c| f.norm_at(c).powf(p) * w.values()[c])
        .sum();
    Ok((s * mu).powf(1.0 / p))
}

/// Power weight `|x - c|^a` on a `d = 1` grid, `c` the root's midpoint. The two
/// cells touching `c` carry the exact average `h^a / (a + 1)`; other cells
/// take the value at their center.
pub fn power_weight(grid: &GridSpec, a: f64) -> Result<Weight> {
    if grid.dim() != 1 {
        return Err(Error::Dimension("power weights are implemented for d = 1".into()));
    }
    if a <= -1.0 || !a.is_finite() {
        return Err(Error::Parameter(format!("|x|^{a} is not locally integrable")));
    }
    if grid.depth == 0 {
        return Err(Error::Parameter("power weights need depth ≥ 1".into()));
    }
    let c = to_f64(grid.root.center()[0]);
    let h = to_f64(grid.cell_side());
    let mid = grid.per_axis() / 2;
    let vals = (0..grid.per_axis())
        .map(|i| {
            if i + 1 == mid || i == mid {
                h.powf(a) / (a + 1.0)
            } else {
                (grid.cell_center_f64(i)[0] - c).abs().powf(a)
            }
        })
        .collect();
    Weight::new(SampledFunction::scalar(grid.clone(), vals)?)
}

/// Accepts `|a| < p - 1` with `a > -1`, a symmetric subrange of the
/// `A_p` range `-1 < a < p - 1` of `|x|^a`.
pub fn check_power_admissible(a: f64, p: f64) -> Result<()> {
    if a > -1.0 && a.abs() < p - 1.0 {
        Ok(())
    } else {
        Err(Error::InadmissibleExponent { a, p })
    }
}

/// Parsed form of `"power a=0.6 domain=[-1,1] J=10"`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerWeightSpec {
    pub a: f64,
    /// Half-width `L` of the symmetric domain `[-L, L]`, a power of two.
    pub half_width: Rational,
    pub depth: u32,
}

impl PowerWeightSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = |why: &str| Error::Parameter(format!("weight generator '{s}': {why}"));
        let mut words = s.split_whitespace();
        if words.next() != Some("power") {
            return Err(bad("only 'power' generators are known"));
        }
        let (mut a, mut half, mut depth) = (None, None, None);
        for w in words {
            let (key, val) = w.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            match key {
                "a" => a = Some(val.parse::<f64>().map_err(|_| bad("bad a"))?),
                "J" => depth = Some(val.parse::<u32>().map_err(|_| bad("bad J"))?),
                "domain" => {
                    let inner = val
                        .strip_prefix('[')
                        .and_then(|v| v.strip_suffix(']'))
                        .ok_or_else(|| bad("domain must look like [-L,L]"))?;
                    let (lo, hi) = inner.split_once(',').ok_or_else(|| bad("domain must look like [-L,L]"))?;
                    let lo = crate::rational::parse(lo.trim())?;
                    let hi = crate::rational::parse(hi.trim())?;
                    if lo != -hi || hi <= Rational::from_integer(0) {
                        return Err(bad("domain must be symmetric about 0"));
                    }
                    half = Some(hi);
                }
                _ => return Err(bad("unknown key")),
            }
        }
        Ok(Self {
            a: a.ok_or_else(|| bad("missing a"))?,
            half_width: half.unwrap_or_else(|| Rational::from_integer(1)),
            depth: depth.ok_or_else(|| bad("missing J"))?,
        })
    }

    /// The domain `[-L, L]` is represented by the root `[0, 2L)` with the
    /// singularity at its midpoint.
    pub fn grid(&self) -> Result<GridSpec> {
        let side = self.half_width * 2;
        let mut j = 0i32;
        while pow2(-j) < side {
            j -= 1;
        }
        while pow2(-j) > side {
            j += 1;
        }
        if pow2(-j) != side {
            return Err(Error::Parameter("domain width must be a power of two".into()));
        }
        GridSpec::new(DyadicCube::standard(j, vec![0]), self.depth)
    }

    pub fn build(&self) -> Result<Weight> {
        power_weight(&self.grid()?, self.a)
    }
}
