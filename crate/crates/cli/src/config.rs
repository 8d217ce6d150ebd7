//! Run configuration read from `--config <path>` (JSON).
//!
//! Every field is optional; command-line flags override the file. Relative
//! paths in the file are resolved against the file's directory.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use sparse_dyadic::cz_operator::KernelSpec;
use sparse_dyadic::dyadic_grid::DyadicCube;
use sparse_dyadic::generate::{FieldGenerator, FieldSpec};
use sparse_dyadic::rational::{self, Rational};
use sparse_dyadic::sampled_field::{GridSpec, SampledFunction};
use sparse_dyadic::shift_ops::{GeneralShiftSpec, ShiftSpec};

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for `random-piecewise` field generators; replaces the seed in `field`.
    pub seed: Option<u64>,
    /// Field header file (see `field_io`).
    pub input: Option<PathBuf>,
    /// Generated field, used when no input file is given.
    pub field: Option<FieldSpec>,
    /// Sparse collection JSON for `verify`.
    pub collection: Option<PathBuf>,
    pub kernel: Option<KernelSpec>,
    /// Sparseness `ν` as `"p/q"`.
    pub nu: Option<String>,
    /// Top cube of the decomposition; the grid root when absent.
    pub q0: Option<DyadicCube>,
    pub k_max: Option<u32>,
    pub p: Option<f64>,
    pub exponents: Option<Vec<f64>>,
    pub depth: Option<u32>,
    /// Weight generator such as `"power a=0.6 domain=[-1,1] J=10"`.
    pub weight: Option<String>,
    pub shift: Option<ShiftSpec>,
    pub general_shift: Option<GeneralShiftSpec>,
    /// Output grid for `apply-t`; the input grid when absent.
    pub out_grid: Option<GridSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.input, &mut cfg.collection].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// The input field: `--input`, then `input`, then the `field` generator.
    pub fn field(&self, input: Option<&Path>, seed: Option<u64>) -> Result<SampledFunction> {
        if let Some(path) = input.or(self.input.as_deref()) {
            return sparse_dyadic::field_io::read_field(path)
                .with_context(|| format!("reading field {}", path.display()));
        }
        let Some(spec) = &self.field else {
            bail!("no input field: pass --input or set `input` or `field` in the config");
        };
        let mut spec = spec.clone();
        if let (Some(s), FieldGenerator::RandomPiecewise { seed, .. }) = (seed.or(self.seed), &mut spec.generator) {
            *seed = s;
        }
        Ok(spec.build()?)
    }

    pub fn nu(&self, flag: Option<&str>) -> Result<Rational> {
        let text = flag.or(self.nu.as_deref()).unwrap_or("1/2");
        let nu = rational::parse(text)?;
        if nu <= Rational::from_integer(0) || nu >= Rational::from_integer(1) {
            bail!("ν = {text} must lie in (0, 1)");
        }
        Ok(nu)
    }

    pub fn kernel(&self, n: usize) -> KernelSpec {
        self.kernel.clone().unwrap_or_else(|| KernelSpec::hilbert(n))
    }
}
