//! Pointwise sparse domination of `‖Tf‖` and weighted-norm experiments.
//!
//! `dominate` decomposes `Tf` on `Q0`, replaces each stopping cube `Q` and
//! complexity `k ≤ K` by its shifted cover `R(Q,k)`, groups the covers by
//! translation into collections `S^u_k`, and compares
//! `‖Tf‖ 1_{Q0}` with `Σ_u Σ_k 2^{-αk} A_{S^u_k,k} ‖f‖` cell by cell.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cz_operator::{apply_t, KernelSpec};
use crate::dyadic_grid::{shifted_cover, translations, DyadicCube, RationalBox};
use crate::generate::{FieldGenerator, FieldSpec};
use crate::lerner::{decompose, SparseCollection};
use crate::oscillation::pseudomedian;
use crate::rational::{self, to_f64, Rational};
use crate::sampled_field::{GridSpec, NormExponent, SampledFunction};
use crate::shift_ops::{apply_a, ShiftSpec};
use crate::weights::{ap_characteristic, check_power_admissible, dual_weight, power_weight, weighted_norm};
use crate::{Error, Result};

/// One collection `S^u_k`: distinct covers `R`, each with the witness set
/// `E(Q)` of the first stopping cube that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftCollection {
    #[serde(with = "rational::serde_rational_vec")]
    pub u: Vec<Rational>,
    pub k: u32,
    pub cubes: Vec<DyadicCube>,
    pub witnesses: Vec<Vec<usize>>,
    /// Number of stopping cubes mapped to each cover.
    pub multiplicity: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominationReport {
    pub grid: GridSpec,
    pub q0: DyadicCube,
    #[serde(with = "rational::serde_rational")]
    pub nu: Rational,
    pub alpha: f64,
    pub k_max: u32,
    pub stopping_cubes: usize,
    pub collections: Vec<ShiftCollection>,
    pub rhs_field: Vec<f64>,
    pub lhs_field: Vec<f64>,
    pub c_emp: f64,
    pub argmax_cell: Option<usize>,
    pub per_k_mass: Vec<f64>,
    /// `sup‖f‖ Σ_{k>K} 2^{-αk}`, a bound for every dropped average term.
    pub tail_bound: f64,
}

/// Covers of every stopping cube for `k = 0..=K`, grouped by translation.
/// Collections are ordered by `k`, then translation in lexicographic order.
pub fn group_covers(s: &SparseCollection, k_max: u32) -> Result<Vec<ShiftCollection>> {
    let d = s.grid.dim();
    let mut out = Vec::new();
    for k in 0..=k_max {
        let mut groups: Vec<ShiftCollection> = translations(d)
            .into_iter()
            .map(|u| ShiftCollection { u, k, cubes: Vec::new(), witnesses: Vec::new(), multiplicity: Vec::new() })
            .collect();
        let mut seen: HashMap<DyadicCube, (usize, usize)> = HashMap::new();
        for e in &s.entries {
            let (r, u) = shifted_cover(&e.cube, k)?;
            if let Some(&(g, i)) = seen.get(&r) {
                groups[g].multiplicity[i] += 1;
                continue;
            }
            let g = groups
                .iter()
                .position(|c| c.u == u)
                .ok_or_else(|| Error::Parameter("cover translation outside the 3^d grid list".into()))?;
            seen.insert(r.clone(), (g, groups[g].cubes.len()));
            groups[g].cubes.push(r);
            groups[g].witnesses.push(e.witness.clone());
            groups[g].multiplicity.push(1);
        }
        out.extend(groups.into_iter().filter(|c| !c.cubes.is_empty()));
    }
    Ok(out)
}

/// `Σ_u 2^{-αk} A_{S^u_k,k} g` for a fixed `k`.
fn k_term(collections: &[ShiftCollection], k: u32, alpha: f64, g: &SampledFunction) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; g.num_cells()];
    let factor = 2f64.powf(-alpha * k as f64);
    for c in collections.iter().filter(|c| c.k == k) {
        let a = apply_a(&ShiftSpec { cubes: c.cubes.clone(), k }, g)?;
        for (x, v) in acc.iter_mut().zip(a.values()) {
            *x += factor * v;
        }
    }
    Ok(acc)
}

pub fn dominate(spec: &KernelSpec, f: &SampledFunction, q0: &DyadicCube, nu: Rational, k_max: u32) -> Result<DominationReport> {
    let grid = &f.grid;
    let inside = grid.subcube_cells(q0)?;
    let mut in_q0 = vec![false; f.num_cells()];
    for &c in &inside {
        in_q0[c] = true;
    }
    if (0..f.num_cells()).any(|c| !in_q0[c] && f.norm_at(c) != 0.0) {
        return Err(Error::Parameter("f must vanish outside Q0".into()));
    }
    let tf = apply_t(spec, f)?;
    let s = decompose(&tf, q0, nu)?;
    let collections = group_covers(&s, k_max)?;

    let g = f.norm_field();
    let mu = to_f64(grid.cell_measure());
    let mut rhs = vec![0.0; f.num_cells()];
    let mut per_k_mass = Vec::with_capacity(k_max as usize + 1);
    for k in 0..=k_max {
        let term = k_term(&collections, k, spec.alpha, &g)?;
        per_k_mass.push(term.iter().sum::<f64>() * mu);
        for (r, t) in rhs.iter_mut().zip(&term) {
            *r += t;
        }
    }
    let lhs: Vec<f64> = (0..f.num_cells())
        .map(|c| if in_q0[c] { tf.norm_at(c) } else { 0.0 })
        .collect();
    let mut c_emp = 0.0f64;
    let mut argmax_cell = None;
    for c in 0..f.num_cells() {
        let ratio = if lhs[c] == 0.0 { 0.0 } else { lhs[c] / rhs[c] };
        if ratio > c_emp {
            c_emp = ratio;
            argmax_cell = Some(c);
        }
    }
    let decay = 2f64.powf(-spec.alpha);
    let tail_bound = f.max_norm() * decay.powi(k_max as i32 + 1) / (1.0 - decay);
    Ok(DominationReport {
        grid: grid.clone(),
        q0: q0.clone(),
        nu,
        alpha: spec.alpha,
        k_max,
        stopping_cubes: s.entries.len(),
        collections,
        rhs_field: rhs,
        lhs_field: lhs,
        c_emp,
        argmax_cell,
        per_k_mass,
        tail_bound,
    })
}

fn cell_box_inside(grid: &GridSpec, cell: usize, b: &RationalBox) -> bool {
    b.contains_box(&grid.cell_cube(cell).to_box())
}

/// Exact check that every `S^u_k` is pairwise nearly disjoint with parameter
/// `ν / 6^d`: witness sets inside their cube, pairwise disjoint, and of
/// measure at least `ν 6^{-d} |R|`.
pub fn check_sparseness(report: &DominationReport) -> Vec<String> {
    let grid = &report.grid;
    let d = grid.dim() as i32;
    let eta = report.nu / Rational::from_integer(6i64.pow(d as u32));
    let mu = grid.cell_measure();
    let mut out = Vec::new();
    for c in &report.collections {
        let label = format!("S^u_k (u = {:?}, k = {})", c.u.iter().map(rational::format).collect::<Vec<_>>(), c.k);
        let mut owner: HashMap<usize, usize> = HashMap::new();
        for (i, (r, w)) in c.cubes.iter().zip(&c.witnesses).enumerate() {
            let rb = r.to_box();
            if let Some(cell) = w.iter().find(|&&cell| !cell_box_inside(grid, cell, &rb)) {
                out.push(format!("{label}: witness cell {cell} outside cube {i}"));
            }
            for &cell in w {
                if let Some(j) = owner.insert(cell, i) {
                    out.push(format!("{label}: witnesses of cubes {j} and {i} share cell {cell}"));
                }
            }
            if mu * Rational::from_integer(w.len() as i64) < eta * r.measure() {
                out.push(format!("{label}: cube {i} has |E| below ν 6^-d |R|"));
            }
        }
    }
    out
}

/// `⋃_u S^u_k = {R(Q,k)}`, each cover in exactly one group, all groups of
/// one translation.
pub fn check_grouping(s: &SparseCollection, report: &DominationReport) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for k in 0..=report.k_max {
        let mut expected: Vec<DyadicCube> = s
            .entries
            .iter()
            .map(|e| shifted_cover(&e.cube, k).map(|(r, _)| r))
            .collect::<Result<_>>()?;
        expected.sort_by(|a, b| (&a.u, &a.m).cmp(&(&b.u, &b.m)));
        expected.dedup();
        let mut got: Vec<DyadicCube> = Vec::new();
        for c in report.collections.iter().filter(|c| c.k == k) {
            if c.cubes.iter().any(|r| r.u != c.u) {
                out.push(format!("k = {k}: a group mixes translations"));
            }
            got.extend(c.cubes.iter().cloned());
        }
        let total = got.len();
        got.sort_by(|a, b| (&a.u, &a.m).cmp(&(&b.u, &b.m)));
        got.dedup();
        if got.len() != total {
            out.push(format!("k = {k}: a cover appears in more than one group"));
        }
        if got != expected {
            out.push(format!("k = {k}: grouped covers differ from {{R(Q,k)}}"));
        }
    }
    Ok(out)
}

/// Max over cells and `k` of `Σ_{Q} 1_{R(Q,k)} / Σ_{R∈S_k} 1_R` (zero where
/// no cover is present). The bound from the construction is `4^d`.
pub fn overlap_ratio(report: &DominationReport) -> f64 {
    let grid = &report.grid;
    let mut worst = 0.0f64;
    for k in 0..=report.k_max {
        let mut with_mult = vec![0usize; grid.num_cells()];
        let mut plain = vec![0usize; grid.num_cells()];
        for c in report.collections.iter().filter(|c| c.k == k) {
            for (r, &m) in c.cubes.iter().zip(&c.multiplicity) {
                for cell in grid.cells_with_center_in(&r.to_box()) {
                    with_mult[cell] += m;
                    plain[cell] += 1;
                }
            }
        }
        for (a, b) in with_mult.iter().zip(&plain) {
            if *b > 0 {
                worst = worst.max(*a as f64 / *b as f64);
            }
        }
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2Row {
    pub a: f64,
    pub characteristic: f64,
    pub ratio: f64,
    /// Index into the test bank of the maximizing function.
    pub argmax_function: usize,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct A2Experiment {
    pub rows: Vec<A2Row>,
    pub fitted_slope: f64,
    pub bank: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
enum BankEntry {
    Fixed(String, SampledFunction),
    /// `σ_{w,p} 1_{[lo,hi)}`, rebuilt per weight.
    DualIndicator(String, RationalBox),
}

fn bank_label(e: &BankEntry) -> &str {
    match e {
        BankEntry::Fixed(l, _) | BankEntry::DualIndicator(l, _) => l,
    }
}

/// Twelve test functions on the root `[0, 2)`, singularity at `x = 1`.
fn test_bank(grid: &GridSpec) -> Result<Vec<BankEntry>> {
    let r = |p: i64, q: i64| Rational::new(p, q);
    let interval = |lo: Rational, hi: Rational| RationalBox::new(vec![lo], vec![hi]);
    let build = |generator: FieldGenerator| {
        FieldSpec { grid: grid.clone(), n: 1, q: NormExponent::Finite(1.0), generator }.build()
    };
    let indicator = |lo: Rational, hi: Rational| -> Result<SampledFunction> {
        build(FieldGenerator::Indicator { region: interval(lo, hi)?, value: vec![1.0] })
    };
    let mut bank = vec![
        BankEntry::Fixed("1[1/2,1)".into(), indicator(r(1, 2), r(1, 1))?),
        BankEntry::Fixed("1[1,3/2)".into(), indicator(r(1, 1), r(3, 2))?),
        BankEntry::Fixed("1[3/4,5/4)".into(), indicator(r(3, 4), r(5, 4))?),
        BankEntry::Fixed("1[1,65/64)".into(), indicator(r(1, 1), r(65, 64))?),
        BankEntry::Fixed("1[63/64,1)".into(), indicator(r(63, 64), r(1, 1))?),
        BankEntry::Fixed(
            "bump(1, 1/4)".into(),
            build(FieldGenerator::Bump { center: vec![1.0], radius: 0.25, value: vec![1.0] })?,
        ),
        BankEntry::Fixed(
            "bump(2/5, 1/5)".into(),
            build(FieldGenerator::Bump { center: vec![0.4], radius: 0.2, value: vec![1.0] })?,
        ),
    ];
    for seed in 1..=3u64 {
        bank.push(BankEntry::Fixed(
            format!("random-piecewise seed {seed}"),
            build(FieldGenerator::RandomPiecewise { seed, pieces_depth: Some(4), amplitude: 1.0, support: None })?,
        ));
    }
    bank.push(BankEntry::DualIndicator("σ·1[7/8,1)".into(), interval(r(7, 8), r(1, 1))?));
    bank.push(BankEntry::DualIndicator("σ·1[1,9/8)".into(), interval(r(1, 1), r(9, 8))?));
    Ok(bank)
}

/// Least-squares slope of `log ratio` against `log characteristic`.
pub fn fit_log_slope(rows: &[A2Row]) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.characteristic.ln(), r.ratio.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// For each exponent `a`, the power weight `|x - 1|^a` on `[0, 2)` at depth
/// `depth`, its `[w]_{A_p}`, and `max ‖Tf‖_{L^p_w} / ‖f‖_{L^p_w}` over the
/// test bank.
pub fn a2_experiment(spec: &KernelSpec, p: f64, exponents: &[f64], depth: u32) -> Result<A2Experiment> {
    if spec.n != 1 {
        return Err(Error::Kernel("the weighted experiment uses scalar kernels".into()));
    }
    if exponents.is_empty() {
        return Err(Error::Parameter("no exponents given".into()));
    }
    for &a in exponents {
        check_power_admissible(a, p)?;
    }
    let grid = GridSpec::new(DyadicCube::standard(-1, vec![0]), depth)?;
    let bank = test_bank(&grid)?;
    let fixed_images: Vec<Option<SampledFunction>> = bank
        .iter()
        .map(|e| match e {
            BankEntry::Fixed(_, f) => apply_t(spec, f).map(Some),
            BankEntry::DualIndicator(..) => Ok(None),
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(exponents.len());
    for &a in exponents {
        let w = power_weight(&grid, a)?;
        let characteristic = ap_characteristic(&w, p)?.value;
        let sigma = dual_weight(&w, p)?;
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, entry) in bank.iter().enumerate() {
            let (f, tf) = match entry {
                BankEntry::Fixed(_, f) => (f.clone(), fixed_images[i].clone().expect("fixed image")),
                BankEntry::DualIndicator(_, b) => {
                    let mut vals = vec![0.0; grid.num_cells()];
                    for c in grid.cells_with_center_in(b) {
                        vals[c] = sigma.values()[c];
                    }
                    let f = SampledFunction::scalar(grid.clone(), vals)?;
                    let tf = apply_t(spec, &f)?;
                    (f, tf)
                }
            };
            let ratio = weighted_norm(&tf, &w, p)? / weighted_norm(&f, &w, p)?;
            if ratio > best.0 {
                best = (ratio, i);
            }
        }
        rows.push(A2Row { a, characteristic, ratio: best.0, argmax_function: best.1, p });
    }
    rows.sort_by(|x, y| x.characteristic.total_cmp(&y.characteristic).then(x.a.total_cmp(&y.a)));
    let fitted_slope = fit_log_slope(&rows);
    Ok(A2Experiment { rows, fitted_slope, bank: bank.iter().map(|e| bank_label(e).to_string()).collect() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationKernelRow {
    pub cube: DyadicCube,
    /// Pseudomedian radius, an upper bound for `ω_λ(Tf; Q)`.
    pub omega_upper: f64,
    /// `Σ_{k≤K} 2^{-αk} ⨍_{2^k Q} ‖f‖` plus the tail bound.
    pub series: f64,
    pub ratio: f64,
}

/// Compares the local oscillation of `Tf` on each cube with the dilated
/// average series of `‖f‖`, truncated at `K` with a `sup‖f‖` tail.
pub fn oscillation_kernel_report(
    spec: &KernelSpec,
    f: &SampledFunction,
    cubes: &[DyadicCube],
    lambda: Rational,
    k_max: u32,
) -> Result<Vec<OscillationKernelRow>> {
    let tf = apply_t(spec, f)?;
    let g = f.norm_field();
    let decay = 2f64.powf(-spec.alpha);
    let tail = f.max_norm() * decay.powi(k_max as i32 + 1) / (1.0 - decay);
    cubes
        .iter()
        .map(|q| {
            let cert = pseudomedian(&tf, &q.to_box(), lambda)?;
            let mut series = tail;
            for k in 0..=k_max {
                series += decay.powi(k as i32) * g.box_average(&q.dilate(k))?;
            }
            let ratio = if cert.radius == 0.0 { 0.0 } else { cert.radius / series };
            Ok(OscillationKernelRow { cube: q.clone(), omega_upper: cert.radius, series, ratio })
        })
        .collect()
}

/// `‖c_λ(Tf; Q0)‖ / ⨍_{Q0} ‖f‖`, with `0/0 = 0`.
pub fn center_ratio(spec: &KernelSpec, f: &SampledFunction, q0: &DyadicCube, lambda: Rational) -> Result<f64> {
    let tf = apply_t(spec, f)?;
    let cert = pseudomedian(&tf, &q0.to_box(), lambda)?;
    let num = f.q.norm(&cert.center);
    let den = f.norm_field().box_average(&q0.to_box())?;
    Ok(if num == 0.0 { 0.0 } else { num / den })
}
