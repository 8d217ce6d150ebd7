#![allow(dead_code)]

use sparse_dyadic::dyadic_grid::DyadicCube;
use sparse_dyadic::generate::{FieldGenerator, FieldSpec};
use sparse_dyadic::rational::Rational;
use sparse_dyadic::sampled_field::{GridSpec, NormExponent, SampledFunction};

pub const QS: [NormExponent; 3] = [NormExponent::Finite(1.0), NormExponent::Finite(2.0), NormExponent::Infinity];

pub fn r(p: i64, q: i64) -> Rational {
    Rational::new(p, q)
}

pub fn random_field(grid: GridSpec, n: usize, q: NormExponent, seed: u64, pieces_depth: Option<u32>) -> SampledFunction {
    FieldSpec {
        grid,
        n,
        q,
        generator: FieldGenerator::RandomPiecewise { seed, pieces_depth, amplitude: 1.0, support: None },
    }
    .build()
    .unwrap()
}

/// Random field whose values repeat often, so ties and plateaus appear.
pub fn quantized_field(grid: GridSpec, n: usize, q: NormExponent, seed: u64) -> SampledFunction {
    let f = random_field(grid.clone(), n, q, seed, None);
    let vals = f.values().iter().map(|v| (v * 3.0).round()).collect();
    SampledFunction::new(grid, n, q, vals).unwrap()
}

pub fn unit_interval_grid(depth: u32) -> GridSpec {
    GridSpec::new(DyadicCube::standard(0, vec![0]), depth).unwrap()
}
