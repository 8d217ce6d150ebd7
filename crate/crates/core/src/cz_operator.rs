//! Truncated singular integral operators with matrix-valued kernels.
//!
//! Every kernel is a finite sum `K(x,y) = Σ_t k_t(x - y) G_t` of scalar
//! odd kernels times fixed `n × n` matrices, applied by midpoint quadrature
//! with the pairs `|x - y|_∞ < ε` dropped. Distances use the max metric.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rational::to_f64;
use crate::sampled_field::{GridSpec, SampledFunction};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalarKernel {
    /// `1 / (π (x - y))`, `d = 1` only.
    Hilbert,
    /// `(x - y)_axis / |x - y|_∞^{d+1}`.
    Power { axis: usize },
}

impl ScalarKernel {
    fn eval(&self, z: &[f64], dist: f64) -> f64 {
        match self {
            ScalarKernel::Hilbert => 1.0 / (PI * z[0]),
            ScalarKernel::Power { axis } => z[*axis] / dist.powi(z.len() as i32 + 1),
        }
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            ScalarKernel::Hilbert if d != 1 => Err(Error::Kernel("the Hilbert kernel needs d = 1".into())),
            ScalarKernel::Power { axis } if *axis >= d => Err(Error::Kernel(format!("axis {axis} out of range for d = {d}"))),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// Hilbert kernel times the identity.
    HilbertTruncated,
    /// `(x - y)_axis / |x - y|_∞^{d+1}` times the identity.
    PowerTruncated { axis: usize },
    /// A scalar kernel times a fixed matrix `G` with `‖G‖_op ≤ 1`, row-major.
    MatrixComposed { scalar: ScalarKernel, g: Vec<Vec<f64>> },
    /// `diag(k_1, ..., k_n)`.
    DiagonalFamily { components: Vec<ScalarKernel> },
}

fn default_alpha() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub kind: KernelKind,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Truncation radius; one cell side when absent.
    #[serde(default)]
    pub eps_trunc: Option<f64>,
    pub n: usize,
}

const OP_NORM_SLACK: f64 = 1e-12;
const TRUNCATION_SLACK: f64 = 1e-9;

pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

impl KernelSpec {
    pub fn hilbert(n: usize) -> Self {
        KernelSpec { kind: KernelKind::HilbertTruncated, alpha: 1.0, eps_trunc: None, n }
    }

    /// `(scalar kernel, matrix)` terms of the kernel.
    pub fn terms(&self) -> Result<Vec<(ScalarKernel, DMatrix<f64>)>> {
        let n = self.n;
        Ok(match &self.kind {
            KernelKind::HilbertTruncated => vec![(ScalarKernel::Hilbert, DMatrix::identity(n, n))],
            KernelKind::PowerTruncated { axis } => vec![(ScalarKernel::Power { axis: *axis }, DMatrix::identity(n, n))],
            KernelKind::MatrixComposed { scalar, g } => {
                if g.len() != n || g.iter().any(|row| row.len() != n) {
                    return Err(Error::Kernel(format!("G must be {n} × {n}")));
                }
                let m = DMatrix::from_fn(n, n, |i, j| g[i][j]);
                vec![(scalar.clone(), m)]
            }
            KernelKind::DiagonalFamily { components } => {
                if components.len() != n {
                    return Err(Error::Kernel(format!("need {n} diagonal components")));
                }
                components
                    .iter()
                    .enumerate()
                    .map(|(i, k)| {
                        let mut m = DMatrix::zeros(n, n);
                        m[(i, i)] = 1.0;
                        (k.clone(), m)
                    })
                    .collect()
            }
        })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Kernel("target dimension n must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Kernel("α must lie in (0, 1]".into()));
        }
        if let Some(eps) = self.eps_trunc {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Kernel("truncation radius must be positive".into()));
            }
        }
        for (k, g) in self.terms()? {
            k.check_dim(d)?;
            if let KernelKind::MatrixComposed { .. } = self.kind {
                if op_norm(&g) > 1.0 + OP_NORM_SLACK {
                    return Err(Error::Kernel("‖G‖_op exceeds 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn truncation(&self, grid: &GridSpec) -> f64 {
        self.eps_trunc.unwrap_or_else(|| to_f64(grid.cell_side()))
    }
}

fn max_dist(z: &[f64]) -> f64 {
    z.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `K(x, y)`, or the zero matrix when `|x - y|_∞ < ε`.
pub fn kernel_eval(spec: &KernelSpec, eps: f64, x: &[f64], y: &[f64]) -> Result<DMatrix<f64>> {
    if x.len() != y.len() {
        return Err(Error::Dimension("points of different dimension".into()));
    }
    spec.validate(x.len())?;
    let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let dist = max_dist(&z);
    let mut out = DMatrix::zeros(spec.n, spec.n);
    if dist < eps * (1.0 - TRUNCATION_SLACK) {
        return Ok(out);
    }
    for (k, g) in spec.terms()? {
        out += g * k.eval(&z, dist);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderSample {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBounds {
    pub decay_const: f64,
    pub holder_const: f64,
}

/// Empirical `sup ‖K(x,y)‖ |x-y|^d` and
/// `sup ‖K(x,y) - K(x',y)‖ |x-y|^d (|x-y|/|x-x'|)^α` over the samples, with
/// `ε = 0`. Pairs violating `0 < |x-x'| < |x-y|/2` are rejected.
pub fn kernel_bounds_check(spec: &KernelSpec, samples: &[HolderSample]) -> Result<KernelBounds> {
    let mut bounds = KernelBounds { decay_const: 0.0, holder_const: 0.0 };
    for s in samples {
        let d = s.x.len();
        let dist = |a: &[f64], b: &[f64]| max_dist(&a.iter().zip(b).map(|(p, q)| p - q).collect::<Vec<_>>());
        let r = dist(&s.x, &s.y);
        let h = dist(&s.x, &s.x_prime);
        if !(h > 0.0 && h < r / 2.0) {
            return Err(Error::Parameter("Hölder samples need 0 < |x-x'| < |x-y|/2".into()));
        }
        let kxy = kernel_eval(spec, 0.0, &s.x, &s.y)?;
        let kpy = kernel_eval(spec, 0.0, &s.x_prime, &s.y)?;
        let rd = r.powi(d as i32);
        bounds.decay_const = bounds.decay_const.max(op_norm(&kxy) * rd);
        bounds.holder_const = bounds.holder_const.max(op_norm(&(kxy - kpy)) * rd * (r / h).powf(spec.alpha));
    }
    Ok(bounds)
}

/// Seeded Hölder samples in `[-1, 1]^d` with `|x - x'| ≤ |x - y| / 4`.
pub fn random_holder_samples(d: usize, count: usize, seed: u64) -> Vec<HolderSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = max_dist(&x.iter().zip(&y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if r < 1e-3 {
            continue;
        }
        let scale = rng.gen_range(0.01..0.25) * r;
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = max_dist(&dir).max(1e-12);
        let x_prime = x.iter().zip(&dir).map(|(a, v)| a + scale * v / norm).collect();
        out.push(HolderSample { x, x_prime, y });
    }
    out
}

/// `Tf` on the cells of `f`'s grid.
pub fn apply_t(spec: &KernelSpec, f: &SampledFunction) -> Result<SampledFunction> {
    apply_t_on(spec, f, &f.grid)
}

/// `(Tf)(x) = Σ_{y} K(x, y) f(y) |cell|` at the cell centers `x` of `out`,
/// over the cells `y` of `f`'s grid with `|x - y|_∞ ≥ ε`.
pub fn apply_t_on(spec: &KernelSpec, f: &SampledFunction, out: &GridSpec) -> Result<SampledFunction> {
    let d = f.grid.dim();
    if out.dim() != d {
        return Err(Error::Dimension("output grid dimension differs".into()));
    }
    if spec.n != f.n {
        return Err(Error::Dimension(format!("kernel acts on R^{}, field is R^{}", spec.n, f.n)));
    }
    spec.validate(d)?;
    let terms = spec.terms()?;
    let eps = spec.truncation(&f.grid) * (1.0 - TRUNCATION_SLACK);
    let n = f.n;
    let mu = to_f64(f.grid.cell_measure());
    let sources: Vec<(Vec<f64>, &[f64])> = (0..f.num_cells())
        .filter(|&c| f.value(c).iter().any(|&v| v != 0.0))
        .map(|c| (f.grid.cell_center_f64(c), f.value(c)))
        .collect();
    let values: Vec<f64> = (0..out.num_cells())
        .into_par_iter()
        .flat_map_iter(|c| {
            let x = out.cell_center_f64(c);
            let mut acc = vec![vec![0.0; n]; terms.len()];
            let mut z = vec![0.0; d];
            for (y, fy) in &sources {
                for i in 0..d {
                    z[i] = x[i] - y[i];
                }
                let dist = max_dist(&z);
                if dist < eps {
                    continue;
                }
                for (t, (k, _)) in terms.iter().enumerate() {
                    let kv = k.eval(&z, dist);
                    for (a, v) in acc[t].iter_mut().zip(fy.iter()) {
                        *a += kv * v;
                    }
                }
            }
            let mut cell = vec![0.0; n];
            for (t, (_, g)) in terms.iter().enumerate() {
                for i in 0..n {
                    for j in 0..n {
                        cell[i] += g[(i, j)] * acc[t][j] * mu;
                    }
                }
            }
            cell
        })
        .collect();
    SampledFunction::new(out.clone(), n, f.q, values)
}
