//! Named field generators: `constant`, `indicator`, `random-piecewise`, `bump`.
//!
//! Randomness always comes from `ChaCha8Rng::seed_from_u64(seed)`, so the same
//! spec produces bit-identical fields on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dyadic_grid::RationalBox;
use crate::sampled_field::{GridSpec, NormExponent, SampledFunction};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "kebab-case")]
pub enum FieldGenerator {
    /// The same vector on every cell.
    Constant { value: Vec<f64> },
    /// `value` on cells whose center lies in `region`, zero elsewhere.
    Indicator { region: RationalBox, value: Vec<f64> },
    /// Independent uniform `[-amplitude, amplitude]` components, constant on
    /// the dyadic subcubes `pieces_depth` levels below the root.
    RandomPiecewise {
        seed: u64,
        #[serde(default)]
        pieces_depth: Option<u32>,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        support: Option<RationalBox>,
    },
    /// `value * exp(1 - 1/(1 - |x-c|^2/r^2))` inside the ball, zero outside.
    Bump { center: Vec<f64>, radius: f64, value: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub grid: GridSpec,
    pub n: usize,
    pub q: NormExponent,
    #[serde(flatten)]
    pub generator: FieldGenerator,
}

impl FieldSpec {
    pub fn build(&self) -> Result<SampledFunction> {
        let grid = &self.grid;
        let n = self.n;
        let cells = grid.num_cells();
        let check_len = |v: &[f64]| {
            if v.len() == n {
                Ok(())
            } else {
                Err(Error::Dimension(format!("generator vector has length {}, expected {n}", v.len())))
            }
        };
        let values = match &self.generator {
            FieldGenerator::Constant { value } => {
                check_len(value)?;
                (0..cells).flat_map(|_| value.iter().copied()).collect()
            }
            FieldGenerator::Indicator { region, value } => {
                check_len(value)?;
                let mut v = vec![0.0; cells * n];
                for c in grid.cells_with_center_in(region) {
                    v[c * n..(c + 1) * n].copy_from_slice(value);
                }
                v
            }
            FieldGenerator::RandomPiecewise { seed, pieces_depth, amplitude, support } => {
                let depth = pieces_depth.unwrap_or(grid.depth).min(grid.depth);
                let coarse = GridSpec::new(grid.root.clone(), depth)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let pieces: Vec<f64> = (0..coarse.num_cells() * n)
                    .map(|_| rng.gen_range(-*amplitude..=*amplitude))
                    .collect();
                let shift = grid.depth - depth;
                let inside: Option<Vec<bool>> = support.as_ref().map(|b| {
                    let mut mask = vec![false; cells];
                    for c in grid.cells_with_center_in(b) {
                        mask[c] = true;
                    }
                    mask
                });
                let mut v = vec![0.0; cells * n];
                for c in 0..cells {
                    if inside.as_ref().is_some_and(|m| !m[c]) {
                        continue;
                    }
                    let multi: Vec<usize> = grid.multi_index(c).iter().map(|i| i >> shift).collect();
                    let p = coarse.flat_index(&multi);
                    v[c * n..(c + 1) * n].copy_from_slice(&pieces[p * n..(p + 1) * n]);
                }
                v
            }
            FieldGenerator::Bump { center, radius, value } => {
                check_len(value)?;
                if center.len() != grid.dim() || *radius <= 0.0 {
                    return Err(Error::Parameter("bump needs a d-dimensional center and positive radius".into()));
                }
                let mut v = vec![0.0; cells * n];
                for c in 0..cells {
                    let x = grid.cell_center_f64(c);
                    let s: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                        / (radius * radius);
                    if s < 1.0 {
                        let amp = (1.0 - 1.0 / (1.0 - s)).exp();
                        for k in 0..n {
                            v[c * n + k] = amp * value[k];
                        }
                    }
                }
                v
            }
        };
        SampledFunction::new(grid.clone(), n, self.q, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::Rational;

    #[test]
    fn random_piecewise_is_seeded_and_blockwise() {
        let spec = FieldSpec {
            grid: GridSpec::unit(1, 4),
            n: 2,
            q: NormExponent::Finite(2.0),
            generator: FieldGenerator::RandomPiecewise {
                seed: 7,
                pieces_depth: Some(2),
                amplitude: 1.0,
                support: None,
            },
        };
        let a = spec.build().unwrap();
        let b = spec.build().unwrap();
        assert_eq!(a, b);
        // 16 cells, 4 pieces of 4 cells
        for block in 0..4 {
            for c in 1..4 {
                assert_eq!(a.value(4 * block), a.value(4 * block + c));
            }
        }
        assert!(a.values().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn indicator_and_bump() {
        let grid = GridSpec::unit(1, 3);
        let region = RationalBox::new(vec![Rational::new(1, 4)], vec![Rational::new(1, 2)]).unwrap();
        let spec = FieldSpec {
            grid: grid.clone(),
            n: 1,
            q: NormExponent::Finite(1.0),
            generator: FieldGenerator::Indicator { region, value: vec![3.0] },
        };
        let f = spec.build().unwrap();
        assert_eq!(f.values(), &[0.0, 0.0, 3.0, 3.0, 0.0, 0.0, 0.0, 0.0]);

        let bump = FieldSpec {
            grid,
            n: 1,
            q: NormExponent::Finite(1.0),
            generator: FieldGenerator::Bump { center: vec![0.5], radius: 0.3, value: vec![1.0] },
        }
        .build()
        .unwrap();
        assert_eq!(bump.values()[0], 0.0);
        assert!(bump.values()[3] > 0.5 && bump.values()[3] <= 1.0);
    }

    #[test]
    fn generator_json_shape() {
        let json = r#"{"grid":{"root":{"u":["0/1"],"j":0,"m":[0]},"depth":2},"n":1,"q":2,
                       "generator":"constant","value":[1.5]}"#;
        let spec: FieldSpec = serde_json::from_str(json).unwrap();
        let f = spec.build().unwrap();
        assert_eq!(f.values(), &[1.5; 4]);
    }
}
