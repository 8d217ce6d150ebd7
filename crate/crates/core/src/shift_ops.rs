//! Positive dyadic shifts: `A_{S,k} g = Σ_{Q∈S} 1_Q ⨍_{Q^{(k)}} g` and the
//! general form `Σ_Q Σ_{R,S⊂Q} a_{QRS} 1_R ⨍_S g`.
//!
//! Outputs live on the cell centers of `g`'s grid; cubes may come from a
//! shifted system, in which case indicators are evaluated exactly at the
//! rational centers and averages use exact overlap lengths.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic_grid::DyadicCube;
use crate::rational::{pow2, Rational};
use crate::sampled_field::SampledFunction;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub cubes: Vec<DyadicCube>,
    pub k: u32,
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(first) = self.cubes.first() {
            if self.cubes.iter().any(|q| q.u != first.u) {
                return Err(Error::Shift("cubes of a shift must share one translation".into()));
            }
            if self.cubes.iter().any(|q| q.dim() != first.dim()) {
                return Err(Error::Dimension("cubes of a shift must share one dimension".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftTerm {
    pub q: DyadicCube,
    pub r: DyadicCube,
    pub s: DyadicCube,
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralShiftSpec {
    pub terms: Vec<ShiftTerm>,
    pub m: u32,
    pub n: u32,
}

impl GeneralShiftSpec {
    /// Encodes `A_{S,k}` with `a_{QRS} = 1` exactly for `(R, S) = (R, R^{(k)})`,
    /// `Q = R^{(k)}`.
    pub fn from_model(spec: &ShiftSpec) -> Result<Self> {
        spec.validate()?;
        let terms = spec
            .cubes
            .iter()
            .map(|r| {
                let top = r.ancestor(spec.k);
                ShiftTerm { q: top.clone(), r: r.clone(), s: top, a: 1.0 }
            })
            .collect();
        Ok(GeneralShiftSpec { terms, m: spec.k, n: 0 })
    }

    pub fn complexity(&self) -> u32 {
        self.m.max(self.n).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let ratio_r = pow2(-(self.m as i32));
        let ratio_s = pow2(-(self.n as i32));
        for (i, t) in self.terms.iter().enumerate() {
            let bad = |what: &str| Err(Error::Shift(format!("term {i}: {what}")));
            if !(0.0..=1.0).contains(&t.a) {
                return bad("coefficient outside [0, 1]");
            }
            if !t.q.contains(&t.r) || !t.q.contains(&t.s) {
                return bad("R and S must lie in Q");
            }
            if t.r.side() != t.q.side() * ratio_r {
                return bad("side(R) must be 2^{-m} side(Q)");
            }
            if t.s.side() != t.q.side() * ratio_s {
                return bad("side(S) must be 2^{-n} side(Q)");
            }
        }
        Ok(())
    }
}

fn require_nonnegative(g: &SampledFunction) -> Result<()> {
    if g.n != 1 {
        return Err(Error::Dimension("shifts act on scalar fields".into()));
    }
    if g.values().iter().any(|&v| v < 0.0) {
        return Err(Error::Parameter("shifts act on nonnegative fields".into()));
    }
    Ok(())
}

/// `Σ_t a_t 1_{R_t}(x) ⨍_{S_t} g` for `(R, S, a)` triples.
fn accumulate(g: &SampledFunction, terms: &[(&DyadicCube, &DyadicCube, f64)]) -> Result<SampledFunction> {
    let contributions: Vec<(Vec<usize>, f64)> = terms
        .par_iter()
        .map(|(r, s, a)| {
            if r.dim() != g.grid.dim() || s.dim() != g.grid.dim() {
                return Err(Error::Dimension("cube dimension differs from grid".into()));
            }
            let avg = if *a == 0.0 { 0.0 } else { a * g.box_average(&s.to_box())? };
            Ok((g.grid.cells_with_center_in(&r.to_box()), avg))
        })
        .collect::<Result<_>>()?;
    let mut out = SampledFunction::zeros(g.grid.clone(), 1, g.q);
    let values = out.values_mut();
    for (cells, avg) in contributions {
        for c in cells {
            values[c] += avg;
        }
    }
    Ok(out)
}

pub fn apply_a(spec: &ShiftSpec, g: &SampledFunction) -> Result<SampledFunction> {
    spec.validate()?;
    require_nonnegative(g)?;
    let tops: Vec<DyadicCube> = spec.cubes.iter().map(|q| q.ancestor(spec.k)).collect();
    let terms: Vec<_> = spec.cubes.iter().zip(&tops).map(|(q, t)| (q, t, 1.0)).collect();
    accumulate(g, &terms)
}

pub fn apply_general(spec: &GeneralShiftSpec, g: &SampledFunction) -> Result<SampledFunction> {
    spec.validate()?;
    require_nonnegative(g)?;
    let terms: Vec<_> = spec.terms.iter().map(|t| (&t.r, &t.s, t.a)).collect();
    accumulate(g, &terms)
}

/// `(⟨A g, h⟩, ⟨g, A h⟩)` for `k = 0`, by cellwise quadrature. The two agree
/// when every cube of `S` is a union of grid cells.
pub fn adjoint_pairing_check(spec: &ShiftSpec, g: &SampledFunction, h: &SampledFunction) -> Result<(f64, f64)> {
    if spec.k != 0 {
        return Err(Error::Shift("adjoint pairing needs k = 0".into()));
    }
    if g.grid != h.grid {
        return Err(Error::Dimension("g and h live on different grids".into()));
    }
    let ag = apply_a(spec, g)?;
    let ah = apply_a(spec, h)?;
    let mu = crate::rational::to_f64(g.grid.cell_measure());
    let pair = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * mu;
    Ok((pair(ag.values(), h.values()), pair(g.values(), ah.values())))
}

/// Exact `Σ_{Q∈S} |Q|`, handy for overlap comparisons.
pub fn total_measure(cubes: &[DyadicCube]) -> Rational {
    cubes.iter().map(|q| q.measure()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampled_field::GridSpec;

    fn field(vals: Vec<f64>) -> SampledFunction {
        let depth = vals.len().trailing_zeros();
        SampledFunction::scalar(GridSpec::new(DyadicCube::standard(-1, vec![0]), depth).unwrap(), vals).unwrap()
    }

    #[test]
    fn unit_cube_average() {
        // root [0,2), 8 cells of side 1/4
        let g = field(vec![1.0; 8]);
        let spec = ShiftSpec { cubes: vec![DyadicCube::standard(0, vec![0])], k: 0 };
        let out = apply_a(&spec, &g).unwrap();
        assert_eq!(out.values(), &[1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn parent_average() {
        let g = field(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let spec = ShiftSpec { cubes: vec![DyadicCube::standard(1, vec![0])], k: 1 };
        let out = apply_a(&spec, &g).unwrap();
        assert_eq!(&out.values()[..2], &[0.5, 0.5]);
        assert!(out.values()[2..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn empty_and_zero_coefficient() {
        let g = field(vec![3.0; 8]);
        let out = apply_a(&ShiftSpec { cubes: vec![], k: 2 }, &g).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
        let q = DyadicCube::standard(0, vec![0]);
        let spec = GeneralShiftSpec {
            terms: vec![ShiftTerm { q: q.clone(), r: q.clone(), s: q, a: 0.0 }],
            m: 0,
            n: 0,
        };
        assert!(apply_general(&spec, &g).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn general_matches_model() {
        let g = field((0..8).map(|i| i as f64).collect());
        let spec = ShiftSpec {
            cubes: vec![DyadicCube::standard(2, vec![1]), DyadicCube::standard(1, vec![2])],
            k: 2,
        };
        let a = apply_a(&spec, &g).unwrap();
        let b = apply_general(&GeneralShiftSpec::from_model(&spec).unwrap(), &g).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        let third = Rational::new(1, 3);
        let mixed = ShiftSpec {
            cubes: vec![DyadicCube::standard(0, vec![0]), DyadicCube::new(vec![third], 0, vec![0]).unwrap()],
            k: 0,
        };
        assert!(mixed.validate().is_err());
        let q = DyadicCube::standard(0, vec![0]);
        let bad = GeneralShiftSpec {
            terms: vec![ShiftTerm { q: q.clone(), r: q.children()[0].clone(), s: q.clone(), a: 1.0 }],
            m: 0,
            n: 0,
        };
        assert!(bad.validate().is_err());
        assert!(adjoint_pairing_check(&ShiftSpec { cubes: vec![], k: 1 }, &field(vec![1.0; 2]), &field(vec![1.0; 2])).is_err());
    }

    #[test]
    fn adjoint_pairing_on_aligned_cubes() {
        let g = field(vec![1.0, 2.0, 0.5, 0.0, 4.0, 1.0, 0.0, 2.0]);
        let h = field(vec![0.0, 1.0, 3.0, 1.0, 0.5, 0.5, 2.0, 1.0]);
        let spec = ShiftSpec {
            cubes: vec![DyadicCube::standard(0, vec![0]), DyadicCube::standard(1, vec![3]), DyadicCube::standard(-1, vec![0])],
            k: 0,
        };
        let (a, b) = adjoint_pairing_check(&spec, &g, &h).unwrap();
        assert!((a - b).abs() <= 1e-12);
        assert_eq!(adjoint_pairing_check(&ShiftSpec { cubes: vec![], k: 0 }, &g, &h).unwrap(), (0.0, 0.0));
    }
}
