//! Least bounds, local oscillations and pseudomedians on finite cell data.
//!
//! On a cube `Q` covering `N` equal cells, the least bound about `c` is the
//! smallest `r` such that at most `floor(λN)` cells have `‖f - c‖ > r`, i.e.
//! the `(N - floor(λN))`-th smallest distance. The pseudomedian is the
//! sample value (medoid) minimizing that bound; any sample inside an optimal
//! ball is within `ω` of its center, so the medoid radius is at most `2ω`.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_grid::RationalBox;
use crate::rational::{self, floor_int, Rational};
use crate::sampled_field::{CellSet, SampledFunction};
use crate::{Error, Result};

const PARALLEL_THRESHOLD: usize = 256;

/// A pseudomedian `c` of `f` on a cube with its least bound `ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct OscillationCertificate {
    pub cube: RationalBox,
    pub lambda: Rational,
    pub center: Vec<f64>,
    pub radius: f64,
    /// Cells of the cube with `‖f - c‖ > ρ`.
    pub witness_excess: CellSet,
}

/// Serialized form of an [`OscillationCertificate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRecord {
    pub cube: RationalBox,
    #[serde(with = "rational::serde_rational")]
    pub lambda: Rational,
    pub center: Vec<f64>,
    pub radius: f64,
    pub excess_cells: usize,
}

impl OscillationCertificate {
    pub fn record(&self) -> CertificateRecord {
        CertificateRecord {
            cube: self.cube.clone(),
            lambda: self.lambda,
            center: self.center.clone(),
            radius: self.radius,
            excess_cells: self.witness_excess.len(),
        }
    }

    /// `|excess| ≤ λ|Q|`, compared exactly in cell counts.
    pub fn excess_within_budget(&self, cells_in_cube: usize) -> bool {
        self.witness_excess.len() as i64 <= excess_budget(cells_in_cube, self.lambda)
    }
}

/// `floor(λN)`: how many of `N` equal cells may lie outside the ball.
pub fn excess_budget(cells: usize, lambda: Rational) -> i64 {
    floor_int(lambda * Rational::from_integer(cells as i64))
}

pub(crate) fn cells_of(f: &SampledFunction, q: &RationalBox) -> Result<Vec<usize>> {
    let cells = f.grid.cells_with_center_in(q);
    if cells.is_empty() {
        Err(Error::EmptyCube)
    } else {
        Ok(cells)
    }
}

/// Least bound about `c` over an explicit cell list; `scratch` is reused.
pub(crate) fn least_bound_on_cells(
    f: &SampledFunction,
    cells: &[usize],
    lambda: Rational,
    c: &[f64],
    scratch: &mut Vec<f64>,
) -> f64 {
    scratch.clear();
    scratch.extend(cells.iter().map(|&x| f.q.distance(f.value(x), c)));
    let n = cells.len();
    let k = n - excess_budget(n, lambda) as usize;
    let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    *kth
}

fn check_lambda(lambda: Rational, open_at_zero: bool, upper: Rational) -> Result<()> {
    let zero = Rational::from_integer(0);
    let ok_low = if open_at_zero { lambda > zero } else { lambda >= zero };
    if ok_low && lambda < upper {
        Ok(())
    } else {
        Err(Error::Parameter(format!("lambda = {} out of range", rational::format(&lambda))))
    }
}

/// `ρ_λ(f - c; Q)`: the minimal `r` with `|Q ∩ {‖f - c‖ > r}| ≤ λ|Q|`.
pub fn least_bound(f: &SampledFunction, q: &RationalBox, lambda: Rational, c: &[f64]) -> Result<f64> {
    check_lambda(lambda, false, Rational::from_integer(1))?;
    if c.len() != f.n {
        return Err(Error::Dimension("center length differs from n".into()));
    }
    let cells = cells_of(f, q)?;
    Ok(least_bound_on_cells(f, &cells, lambda, c, &mut Vec::with_capacity(cells.len())))
}

/// Minimum of the least bound over a finite set of centers. With a dense set
/// this brackets `ω_λ(f; Q)` from above.
pub fn optimal_bound_oracle(
    f: &SampledFunction,
    q: &RationalBox,
    lambda: Rational,
    centers: &[Vec<f64>],
) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::Parameter("center grid is empty".into()));
    }
    check_lambda(lambda, false, Rational::from_integer(1))?;
    let cells = cells_of(f, q)?;
    let mut scratch = Vec::with_capacity(cells.len());
    Ok(centers
        .iter()
        .map(|c| least_bound_on_cells(f, &cells, lambda, c, &mut scratch))
        .fold(f64::INFINITY, f64::min))
}

/// Brute-force center set for [`optimal_bound_oracle`].
///
/// Always contains every sample value on `Q` and every pairwise midpoint of
/// sample values. For `n = 1` it adds `resolution * N + 1` equispaced points
/// over the value range (with the midpoints this makes the scalar oracle
/// exact); for `n ≤ 3` it adds a tensor grid with `resolution` points per
/// axis over the bounding box of the values.
pub fn dense_center_grid(f: &SampledFunction, q: &RationalBox, resolution: usize) -> Result<Vec<Vec<f64>>> {
    let cells = cells_of(f, q)?;
    let samples: Vec<&[f64]> = cells.iter().map(|&c| f.value(c)).collect();
    let n = f.n;
    let mut out: Vec<Vec<f64>> = samples.iter().map(|s| s.to_vec()).collect();
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            out.push(a.iter().zip(b.iter()).map(|(x, y)| 0.5 * (x + y)).collect());
        }
    }
    let lo: Vec<f64> = (0..n).map(|k| samples.iter().map(|s| s[k]).fold(f64::INFINITY, f64::min)).collect();
    let hi: Vec<f64> = (0..n).map(|k| samples.iter().map(|s| s[k]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let axis_points = |k: usize, count: usize| -> Vec<f64> {
        if count <= 1 || hi[k] == lo[k] {
            return vec![lo[k]];
        }
        (0..count)
            .map(|i| lo[k] + (hi[k] - lo[k]) * i as f64 / (count - 1) as f64)
            .collect()
    };
    if n == 1 {
        out.extend(axis_points(0, resolution * cells.len() + 1).into_iter().map(|x| vec![x]));
    } else if n <= 3 {
        let mut grid = vec![Vec::new()];
        for k in 0..n {
            let pts = axis_points(k, resolution);
            grid = grid
                .into_iter()
                .flat_map(|prefix: Vec<f64>| {
                    pts.iter().map(move |&x| {
                        let mut v = prefix.clone();
                        v.push(x);
                        v
                    })
                })
                .collect();
        }
        out.extend(grid);
    }
    Ok(out)
}

/// Medoid pseudomedian over an explicit cell list.
pub(crate) fn pseudomedian_on_cells(
    f: &SampledFunction,
    cells: &[usize],
    lambda: Rational,
) -> (Vec<f64>, f64) {
    // Identical sample vectors give identical bounds; keep the first.
    let mut seen = HashSet::with_capacity(cells.len());
    let candidates: Vec<usize> = cells
        .iter()
        .copied()
        .filter(|&c| seen.insert(f.value(c).iter().map(|v| v.to_bits()).collect::<Vec<u64>>()))
        .collect();
    let bounds: Vec<f64> = if candidates.len() * cells.len() >= PARALLEL_THRESHOLD * PARALLEL_THRESHOLD {
        candidates
            .par_iter()
            .map_init(
                || Vec::with_capacity(cells.len()),
                |scratch, &c| least_bound_on_cells(f, cells, lambda, f.value(c), scratch),
            )
            .collect()
    } else {
        let mut scratch = Vec::with_capacity(cells.len());
        candidates
            .iter()
            .map(|&c| least_bound_on_cells(f, cells, lambda, f.value(c), &mut scratch))
            .collect()
    };
    let mut best = 0;
    for (i, b) in bounds.iter().enumerate() {
        if *b < bounds[best] {
            best = i;
        }
    }
    (f.value(candidates[best]).to_vec(), bounds[best])
}

/// A `λ`-pseudomedian of `f` on `Q`: the sample value minimizing the least
/// bound, ties broken by the smallest cell index. Requires `0 < λ < 1/2`.
pub fn pseudomedian(f: &SampledFunction, q: &RationalBox, lambda: Rational) -> Result<OscillationCertificate> {
    check_lambda(lambda, true, Rational::new(1, 2))?;
    let cells = cells_of(f, q)?;
    let (center, radius) = pseudomedian_on_cells(f, &cells, lambda);
    let excess = cells
        .iter()
        .copied()
        .filter(|&c| f.q.distance(f.value(c), &center) > radius)
        .collect();
    Ok(OscillationCertificate {
        cube: q.clone(),
        lambda,
        center,
        radius,
        witness_excess: CellSet::new(f.grid.clone(), excess),
    })
}

/// Lower median of a scalar field on `Q`: the smallest sample value `m` with
/// `|{g > m}| ≤ |Q|/2` and `|{g < m}| ≤ |Q|/2`.
pub fn scalar_median(g: &SampledFunction, q: &RationalBox) -> Result<f64> {
    if g.n != 1 {
        return Err(Error::Dimension("scalar median needs n = 1".into()));
    }
    let cells = cells_of(g, q)?;
    let mut v: Vec<f64> = cells.iter().map(|&c| g.values()[c]).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut i = 0;
    while i < n {
        let below = i;
        let mut j = i;
        while j < n && v[j] == v[i] {
            j += 1;
        }
        let above = n - j;
        if 2 * below <= n && 2 * above <= n {
            return Ok(v[i]);
        }
        i = j;
    }
    unreachable!("a median always exists among the samples")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampled_field::{GridSpec, NormExponent};

    fn r(p: i64, q: i64) -> Rational {
        Rational::new(p, q)
    }

    fn scalar(vals: &[f64]) -> SampledFunction {
        let depth = vals.len().trailing_zeros();
        SampledFunction::scalar(GridSpec::unit(1, depth), vals.to_vec()).unwrap()
    }

    fn root(f: &SampledFunction) -> RationalBox {
        f.grid.root.to_box()
    }

    #[test]
    fn least_bound_examples() {
        let f = scalar(&[0.0, 1.0, 2.0, 10.0]);
        assert_eq!(least_bound(&f, &root(&f), r(1, 4), &[0.0]).unwrap(), 2.0);
        assert_eq!(least_bound(&f, &root(&f), r(0, 1), &[0.0]).unwrap(), 10.0);
        let c = scalar(&[3.5; 4]);
        assert_eq!(least_bound(&c, &root(&c), r(1, 3), &[3.5]).unwrap(), 0.0);
    }

    #[test]
    fn least_bound_rejects_empty_cube() {
        let f = scalar(&[0.0, 1.0, 2.0, 10.0]);
        let outside = RationalBox::new(vec![r(2, 1)], vec![r(3, 1)]).unwrap();
        assert_eq!(least_bound(&f, &outside, r(1, 4), &[0.0]), Err(Error::EmptyCube));
        assert!(least_bound(&f, &root(&f), r(1, 1), &[0.0]).is_err());
    }

    #[test]
    fn oracle_examples() {
        let f = scalar(&[1.0, 2.0, 3.0, 100.0]);
        let grid = dense_center_grid(&f, &root(&f), 10).unwrap();
        assert_eq!(optimal_bound_oracle(&f, &root(&f), r(1, 4), &grid).unwrap(), 1.0);
        // λ ≥ (N-1)/N: one cell suffices
        assert_eq!(optimal_bound_oracle(&f, &root(&f), r(3, 4), &[vec![3.0]]).unwrap(), 0.0);
        let c = scalar(&[2.0; 4]);
        let grid = dense_center_grid(&c, &root(&c), 10).unwrap();
        assert_eq!(optimal_bound_oracle(&c, &root(&c), r(1, 4), &grid).unwrap(), 0.0);
        assert!(optimal_bound_oracle(&c, &root(&c), r(1, 4), &[]).is_err());
    }

    #[test]
    fn pseudomedian_examples() {
        let f = scalar(&[1.0, 2.0, 3.0, 100.0]);
        let cert = pseudomedian(&f, &root(&f), r(1, 4)).unwrap();
        assert_eq!(cert.center, vec![2.0]);
        assert_eq!(cert.radius, 1.0);
        assert_eq!(cert.witness_excess.members(), &[3]);
        assert!(cert.excess_within_budget(4));

        let single = RationalBox::new(vec![r(1, 2)], vec![r(3, 4)]).unwrap();
        let cert = pseudomedian(&f, &single, r(1, 4)).unwrap();
        assert_eq!((cert.center, cert.radius), (vec![3.0], 0.0));

        assert!(pseudomedian(&f, &root(&f), r(1, 2)).is_err());
        assert!(pseudomedian(&f, &root(&f), r(0, 1)).is_err());
    }

    #[test]
    fn pseudomedian_of_constant_vector_field() {
        let grid = GridSpec::unit(2, 2);
        let vals: Vec<f64> = (0..16).flat_map(|_| [1.0, -2.0, 0.5]).collect();
        let f = SampledFunction::new(grid, 3, NormExponent::Infinity, vals).unwrap();
        let cert = pseudomedian(&f, &f.grid.root.to_box(), r(1, 4)).unwrap();
        assert_eq!(cert.center, vec![1.0, -2.0, 0.5]);
        assert_eq!(cert.radius, 0.0);
    }

    #[test]
    fn certificate_record_json() {
        let f = scalar(&[1.0, 2.0, 3.0, 100.0]);
        let cert = pseudomedian(&f, &root(&f), r(1, 4)).unwrap();
        let json = serde_json::to_value(cert.record()).unwrap();
        assert_eq!(json["lambda"], "1/4");
        assert_eq!(json["excess_cells"], 1);
        assert_eq!(json["cube"]["lower"][0], "0/1");
    }

    #[test]
    fn median_examples() {
        let f = scalar(&[1.0, 2.0, 3.0, 100.0]);
        assert_eq!(scalar_median(&f, &root(&f)).unwrap(), 2.0);
        let f = scalar(&[100.0, 3.0, 1.0, 2.0]);
        assert_eq!(scalar_median(&f, &root(&f)).unwrap(), 2.0);
        let f = scalar(&[1.0, 0.0]);
        assert_eq!(scalar_median(&f, &root(&f)).unwrap(), 0.0);
        let f = scalar(&[4.0; 8]);
        assert_eq!(scalar_median(&f, &root(&f)).unwrap(), 4.0);
    }
}
