//! Stopping-time decomposition into a sparse family of dyadic cubes.
//!
//! One step: on a cube `Q` take the pseudomedian `c = c_κ(f;Q)` and the least
//! bound `ρ = ρ_λ(f - c; Q)`, then select the maximal dyadic subcubes of `Q`
//! having a child on which `‖f - c‖ > ρ` holds on more than a `κ` portion.
//! Iterating with `λ = (1-ν) 2^{-d-2}` and `κ = 1/4` gives a collection whose
//! generations shrink by a factor `1-ν` and which certifies, at every cell,
//! `‖f(x) - c_κ(f;Q^0)‖ ≤ Σ_{Q ∋ x} 3ρ_Q`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_grid::DyadicCube;
use crate::oscillation::{dense_center_grid, least_bound_on_cells, optimal_bound_oracle, pseudomedian_on_cells};
use crate::rational::{self, pow2, Rational};
use crate::sampled_field::{CellSet, GridSpec, SampledFunction, FLOAT_SLACK};
use crate::{Error, Result};

/// Scalar instances with at most this many cells also get the brute-force
/// check of the `12 Σ ω` form.
pub const OMEGA_CHECK_MAX_CELLS: usize = 64;

/// Tolerance of the `12 Σ ω` comparison.
pub const OMEGA_FORM_TOLERANCE: f64 = 1e-6;

pub fn kappa() -> Rational {
    Rational::new(1, 4)
}

/// `λ = (1 - ν) 2^{-d-2}`.
pub fn lambda_for(nu: Rational, d: usize) -> Rational {
    (Rational::from_integer(1) - nu) * pow2(-(d as i32) - 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseEntry {
    pub cube: DyadicCube,
    pub generation: usize,
    /// Index of the entry whose stopping step selected this cube.
    pub parent: Option<usize>,
    /// Cells of `E(Q) = Q \ ⋃ {Q' ∈ S : Q' ⊊ Q}`.
    pub witness: Vec<usize>,
    /// `c_κ(f; Q)`.
    pub center: Vec<f64>,
    /// `ρ_λ(f - c_κ(f;Q); Q)`.
    pub rho: f64,
    /// `3ρ`, the certified oscillation bound on `Q`.
    pub omega_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseCollection {
    pub grid: GridSpec,
    #[serde(with = "rational::serde_rational")]
    pub nu: Rational,
    #[serde(with = "rational::serde_rational")]
    pub lambda: Rational,
    #[serde(with = "rational::serde_rational")]
    pub kappa: Rational,
    /// Ordered by generation, then by cube position.
    pub entries: Vec<SparseEntry>,
}

fn check_step_parameters(lambda: Rational, kappa: Rational) -> Result<()> {
    let zero = Rational::from_integer(0);
    if zero < lambda && lambda <= kappa && kappa < Rational::new(1, 2) {
        Ok(())
    } else {
        Err(Error::Parameter("stopping step needs 0 < λ ≤ κ < 1/2".into()))
    }
}

/// Maximal dyadic subcubes of `q` (possibly `q` itself) having at least one
/// child `C` with `|C ∩ {‖f - c‖ > ρ}| > κ|C|`. Single cells have no
/// children and are never selected. Output is sorted by lower corner, then level.
pub fn stopping_children(
    f: &SampledFunction,
    q: &DyadicCube,
    lambda: Rational,
    kappa: Rational,
    c: &[f64],
    rho: f64,
) -> Result<Vec<DyadicCube>> {
    check_step_parameters(lambda, kappa)?;
    if c.len() != f.n {
        return Err(Error::Dimension("center length differs from n".into()));
    }
    select_maximal(f, q, kappa, c, rho)
}

fn select_maximal(
    f: &SampledFunction,
    q: &DyadicCube,
    kappa: Rational,
    c: &[f64],
    rho: f64,
) -> Result<Vec<DyadicCube>> {
    let grid = &f.grid;
    let d = grid.dim();
    let (offset, len) = grid.subcube_extent(q)?;
    let levels = len.trailing_zeros() as usize;

    // counts[r] holds exceedance counts of the (2^r)^d subcubes at relative level r.
    let mut counts: Vec<Vec<u32>> = vec![Vec::new(); levels + 1];
    let mut finest = vec![0u32; len.pow(d as u32)];
    for (local, slot) in finest.iter_mut().enumerate() {
        let mut rest = local;
        let mut multi = vec![0usize; d];
        for i in (0..d).rev() {
            multi[i] = offset[i] + rest % len;
            rest /= len;
        }
        let cell = grid.flat_index(&multi);
        *slot = u32::from(f.q.distance(f.value(cell), c) > rho);
    }
    counts[levels] = finest;
    for r in (0..levels).rev() {
        let side = 1usize << r;
        let fine_side = side << 1;
        let mut agg = vec![0u32; side.pow(d as u32)];
        for (fine_idx, &v) in counts[r + 1].iter().enumerate() {
            let mut rest = fine_idx;
            let mut coarse = 0usize;
            let mut stride = 1usize;
            for _ in 0..d {
                coarse += ((rest % fine_side) >> 1) * stride;
                rest /= fine_side;
                stride *= side;
            }
            agg[coarse] += v;
        }
        counts[r] = agg;
    }

    let index_at = |r: usize, pos: &[usize]| -> usize {
        let side = 1usize << r;
        pos.iter().fold(0, |acc, &p| acc * side + p)
    };
    let mut selected = Vec::new();
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, vec![0; d])];
    while let Some((r, pos)) = stack.pop() {
        if r == levels {
            continue;
        }
        let child_cells = Rational::from_integer(((len >> (r + 1)).pow(d as u32)) as i64);
        let children: Vec<Vec<usize>> = (0..1usize << d)
            .map(|bits| (0..d).map(|i| 2 * pos[i] + ((bits >> (d - 1 - i)) & 1)).collect())
            .collect();
        let triggers = children.iter().any(|ch| {
            let cnt = Rational::from_integer(counts[r + 1][index_at(r + 1, ch)] as i64);
            cnt > kappa * child_cells
        });
        if triggers {
            let m = q
                .m
                .iter()
                .zip(&pos)
                .map(|(&qm, &p)| (qm << r) + p as i64)
                .collect();
            selected.push(DyadicCube::standard(q.j + r as i32, m));
        } else {
            stack.extend(children.into_iter().map(|ch| (r + 1, ch)));
        }
    }
    sort_by_position(&mut selected);
    Ok(selected)
}

fn position_key(q: &DyadicCube) -> (Vec<Rational>, i32) {
    (q.lower(), q.j)
}

/// Orders cubes by lower corner, then level (coarser first).
pub fn sort_by_position(cubes: &mut [DyadicCube]) {
    cubes.sort_by_cached_key(position_key);
}

struct StepOutcome {
    center: Vec<f64>,
    rho: f64,
    children: Vec<DyadicCube>,
}

fn step(f: &SampledFunction, q: &DyadicCube, lambda: Rational, kappa: Rational) -> Result<StepOutcome> {
    let cells = f.grid.subcube_cells(q)?;
    if cells.is_empty() {
        return Err(Error::EmptyCube);
    }
    let (center, _) = pseudomedian_on_cells(f, &cells, kappa);
    let rho = least_bound_on_cells(f, &cells, lambda, &center, &mut Vec::with_capacity(cells.len()));
    let children = select_maximal(f, q, kappa, &center, rho)?;
    Ok(StepOutcome { center, rho, children })
}

/// Iterates the stopping step from `q0` with `λ = (1-ν)2^{-d-2}`, `κ = 1/4`
/// until no cube is selected.
pub fn decompose(f: &SampledFunction, q0: &DyadicCube, nu: Rational) -> Result<SparseCollection> {
    let zero = Rational::from_integer(0);
    if !(zero < nu && nu < Rational::from_integer(1)) {
        return Err(Error::Parameter("ν must lie in (0, 1)".into()));
    }
    let d = f.grid.dim();
    let lambda = lambda_for(nu, d);
    let kappa = kappa();
    let max_generations = (f.grid.cell_level() - q0.j).max(0) as usize + 1;

    let mut entries: Vec<SparseEntry> = Vec::new();
    let mut children_of: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<(DyadicCube, Option<usize>)> = vec![(q0.clone(), None)];
    let mut generation = 0;
    while !current.is_empty() {
        if generation > max_generations {
            return Err(Error::Parameter("stopping recursion failed to refine".into()));
        }
        current.sort_by_key(|a| position_key(&a.0));
        let outcomes: Vec<Result<StepOutcome>> = current
            .par_iter()
            .map(|(q, _)| step(f, q, lambda, kappa))
            .collect();
        let mut next = Vec::new();
        for ((cube, parent), outcome) in current.into_iter().zip(outcomes) {
            let outcome = outcome?;
            let idx = entries.len();
            if let Some(p) = parent {
                children_of[p].push(idx);
            }
            next.extend(outcome.children.into_iter().map(|c| (c, Some(idx))));
            entries.push(SparseEntry {
                cube,
                generation,
                parent,
                witness: Vec::new(),
                center: outcome.center,
                rho: outcome.rho,
                omega_bound: 3.0 * outcome.rho,
            });
            children_of.push(Vec::new());
        }
        current = next;
        generation += 1;
    }

    for i in 0..entries.len() {
        let own = CellSet::new(f.grid.clone(), f.grid.subcube_cells(&entries[i].cube)?);
        let mut covered = Vec::new();
        for &ch in &children_of[i] {
            covered.extend(f.grid.subcube_cells(&entries[ch].cube)?);
        }
        entries[i].witness = own
            .difference(&CellSet::new(f.grid.clone(), covered))
            .members()
            .to_vec();
    }

    Ok(SparseCollection {
        grid: f.grid.clone(),
        nu,
        lambda,
        kappa,
        entries,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub entry: Option<usize>,
    pub cell: Option<usize>,
    pub message: String,
}

impl SparseCollection {
    pub fn root(&self) -> Option<&SparseEntry> {
        self.entries.first()
    }

    pub fn witness_set(&self, i: usize) -> CellSet {
        CellSet::new(self.grid.clone(), self.entries[i].witness.clone())
    }

    pub fn generations(&self) -> usize {
        self.entries.iter().map(|e| e.generation + 1).max().unwrap_or(0)
    }

    /// `|Ω^k|`, the measure of the union of generation-`k` cubes.
    pub fn generation_measure(&self, k: usize) -> Rational {
        self.entries
            .iter()
            .filter(|e| e.generation == k)
            .map(|e| e.cube.measure())
            .sum()
    }

    /// Exact checks of the sparseness structure: witness sets inside their
    /// cubes, pairwise disjoint and of measure at least `ν|Q|`; witness sets
    /// equal to the cube minus strictly smaller entries; nested, disjoint
    /// generations; the per-step measure bound `Σ|Q'| ≤ 2^d (λ/κ)|Q|`; and
    /// generation decay `|Ω^k| ≤ (1-ν)^k |Q^0|`.
    pub fn check_invariants(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |entry: Option<usize>, cell: Option<usize>, message: String| {
            out.push(Violation { entry, cell, message })
        };
        let grid = &self.grid;
        let d = grid.dim();
        let mut cube_cells = Vec::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            match grid.subcube_cells(&e.cube) {
                Ok(cells) => cube_cells.push(cells),
                Err(err) => {
                    push(Some(i), None, format!("cube not resolved by grid: {err}"));
                    return out;
                }
            }
        }

        let mut owner: Vec<Option<usize>> = vec![None; grid.num_cells()];
        for (i, e) in self.entries.iter().enumerate() {
            let own = &cube_cells[i];
            for &cell in &e.witness {
                if own.binary_search(&cell).is_err() {
                    push(Some(i), Some(cell), "witness cell outside its cube".into());
                }
                match owner.get(cell) {
                    None => push(Some(i), Some(cell), "witness cell index out of range".into()),
                    Some(Some(j)) => push(Some(i), Some(cell), format!("witness sets of entries {j} and {i} overlap")),
                    Some(None) => owner[cell] = Some(i),
                }
            }
            let witness_measure = grid.cell_measure() * Rational::from_integer(e.witness.len() as i64);
            if witness_measure < self.nu * e.cube.measure() {
                push(Some(i), None, format!(
                    "|E(Q)| = {} below ν|Q| = {}",
                    rational::format(&witness_measure),
                    rational::format(&(self.nu * e.cube.measure()))
                ));
            }
            let mut expected: Vec<usize> = own.clone();
            for (j, other) in self.entries.iter().enumerate() {
                if j != i && e.cube.contains(&other.cube) && other.cube != e.cube {
                    let strict = &cube_cells[j];
                    expected.retain(|c| strict.binary_search(c).is_err());
                }
            }
            let mut witness = e.witness.clone();
            witness.sort_unstable();
            if witness != expected {
                push(Some(i), None, "witness set differs from Q minus its strict subcubes".into());
            }
        }

        for (i, e) in self.entries.iter().enumerate() {
            match e.parent {
                None if e.generation != 0 => push(Some(i), None, "non-root entry without parent".into()),
                Some(p) => {
                    let parent = &self.entries[p];
                    if parent.generation + 1 != e.generation || !parent.cube.contains(&e.cube) {
                        push(Some(i), None, format!("not nested in its generation-{} parent {p}", parent.generation));
                    }
                }
                None => {}
            }
            for (j, other) in self.entries.iter().enumerate().skip(i + 1) {
                if other.generation == e.generation && !e.cube.is_disjoint(&other.cube) {
                    push(Some(i), None, format!("generation-{} cubes {i} and {j} intersect", e.generation));
                }
            }
            let children_measure: Rational = self
                .entries
                .iter()
                .filter(|c| c.parent == Some(i))
                .map(|c| c.cube.measure())
                .sum();
            let bound = pow2(d as i32) * (self.lambda / self.kappa) * e.cube.measure();
            if children_measure > bound {
                push(Some(i), None, format!(
                    "selected measure {} exceeds 2^d(λ/κ)|Q| = {}",
                    rational::format(&children_measure),
                    rational::format(&bound)
                ));
            }
        }

        if let Some(root) = self.root() {
            let q0 = root.cube.measure();
            let ratio = Rational::from_integer(1) - self.nu;
            let mut bound = q0;
            for k in 0..self.generations() {
                let m = self.generation_measure(k);
                if m > bound {
                    push(None, None, format!("|Ω^{k}| = {} exceeds (1-ν)^k|Q0|", rational::format(&m)));
                }
                bound *= ratio;
            }
        }
        out
    }

    /// One CSV row per entry: `cube, generation, rho, |E(Q)|/|Q|`.
    pub fn csv_rows(&self) -> Vec<[String; 4]> {
        self.entries
            .iter()
            .map(|e| {
                let ratio = self.grid.cell_measure() * Rational::from_integer(e.witness.len() as i64)
                    / e.cube.measure();
                [
                    serde_json::to_string(&e.cube).unwrap_or_default(),
                    e.generation.to_string(),
                    format!("{:?}", e.rho),
                    rational::format(&ratio),
                ]
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaFormReport {
    /// Brute-force `ω̂_λ` per entry.
    pub omega_hat: Vec<f64>,
    pub max_violation: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `max_x (‖f(x) - c_0‖ - Σ_{Q∋x} 3ρ_Q)`, clipped below at zero.
    pub max_violation: f64,
    pub worst_cell: Option<usize>,
    pub holds: bool,
    pub omega_form: Option<OmegaFormReport>,
}

fn check_grid(f: &SampledFunction, s: &SparseCollection) -> Result<()> {
    if f.grid != s.grid {
        return Err(Error::MismatchedCollection("collection grid differs from the field's grid".into()));
    }
    let root = s.root().ok_or_else(|| Error::MismatchedCollection("empty collection".into()))?;
    if root.center.len() != f.n || s.entries.iter().any(|e| e.center.len() != f.n) {
        return Err(Error::MismatchedCollection("center dimension differs from n".into()));
    }
    for e in &s.entries {
        f.grid
            .subcube_cells(&e.cube)
            .map_err(|err| Error::MismatchedCollection(err.to_string()))?;
    }
    Ok(())
}

/// Sums `weight(entry)` over the entries containing each cell.
fn stacked(f: &SampledFunction, s: &SparseCollection, weight: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    let mut rhs = vec![0.0; f.num_cells()];
    for (i, e) in s.entries.iter().enumerate() {
        let w = weight(i);
        for c in f.grid.subcube_cells(&e.cube)? {
            rhs[c] += w;
        }
    }
    Ok(rhs)
}

/// Checks `‖f(x) - c_κ(f;Q^0)‖ ≤ Σ_{Q∈S, Q∋x} 3ρ_Q` at every cell of `Q^0`.
/// Small scalar instances also get the `12 Σ ω̂` form against the
/// brute-force oscillation oracle.
pub fn verify_decomposition(f: &SampledFunction, s: &SparseCollection) -> Result<VerificationReport> {
    check_grid(f, s)?;
    let root = &s.entries[0];
    let rhs = stacked(f, s, |i| 3.0 * s.entries[i].rho)?;
    let mut max_violation = 0.0f64;
    let mut worst_cell = None;
    for c in f.grid.subcube_cells(&root.cube)? {
        let lhs = f.q.distance(f.value(c), &root.center);
        let excess = lhs - rhs[c];
        if excess > max_violation {
            max_violation = excess;
            worst_cell = Some(c);
        }
    }
    let q0_cells = f.grid.subcube_cells(&root.cube)?.len();
    let omega_form = if f.n == 1 && q0_cells <= OMEGA_CHECK_MAX_CELLS {
        Some(verify_omega_form(f, s, 10)?)
    } else {
        None
    };
    Ok(VerificationReport {
        max_violation,
        worst_cell,
        holds: max_violation <= FLOAT_SLACK,
        omega_form,
    })
}

/// `‖f(x) - c_κ(f;Q^0)‖ ≤ 12 Σ_{Q∋x} ω̂_λ(f;Q)` with `ω̂` from a dense
/// center grid of the given resolution.
pub fn verify_omega_form(f: &SampledFunction, s: &SparseCollection, resolution: usize) -> Result<OmegaFormReport> {
    check_grid(f, s)?;
    let omega_hat = s
        .entries
        .iter()
        .map(|e| {
            let b = e.cube.to_box();
            let centers = dense_center_grid(f, &b, resolution)?;
            optimal_bound_oracle(f, &b, s.lambda, &centers)
        })
        .collect::<Result<Vec<f64>>>()?;
    let rhs = stacked(f, s, |i| 12.0 * omega_hat[i])?;
    let root = &s.entries[0];
    let max_violation = f
        .grid
        .subcube_cells(&root.cube)?
        .into_iter()
        .map(|c| f.q.distance(f.value(c), &root.center) - rhs[c])
        .fold(0.0, f64::max);
    Ok(OmegaFormReport {
        omega_hat,
        max_violation,
        holds: max_violation <= OMEGA_FORM_TOLERANCE,
    })
}
