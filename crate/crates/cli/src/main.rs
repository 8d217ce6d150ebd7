//! `sparse-dyadic`: command-line front end for the sparse-dyadic library.
//!
//! Exit status: 0 on success, 1 on invalid configuration or unreadable input,
//! 2 when `verify` finds an invariant violation.

mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sparse_dyadic::cz_operator::{apply_t, apply_t_on};
use sparse_dyadic::domination::{a2_experiment, check_sparseness, dominate, overlap_ratio};
use sparse_dyadic::dyadic_grid::DyadicCube;
use sparse_dyadic::field_io::{write_field, PayloadFormat};
use sparse_dyadic::lerner::{decompose, verify_decomposition, SparseCollection, VerificationReport};
use sparse_dyadic::rational;
use sparse_dyadic::sampled_field::SampledFunction;
use sparse_dyadic::shift_ops::{apply_a, apply_general};
use sparse_dyadic::weights::{
    a_infty_characteristic, ap_characteristic, check_power_admissible, dual_weight, ApReport, PowerWeightSpec, Weight,
};

use crate::config::RunConfig;

const THREADS_VAR: &str = "SPARSE_DYADIC_THREADS";

#[derive(Parser, Debug)]
#[command(name = "sparse-dyadic", version, about = "Sparse decompositions, dyadic shifts and weight experiments on sampled fields")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for random field generators.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct FieldArgs {
    /// Field header file.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sparse decomposition of a field; writes collection.json and a report.
    Decompose {
        #[command(flatten)]
        field: FieldArgs,
        /// Sparseness ν as p/q.
        #[arg(long)]
        nu: Option<String>,
    },
    /// Checks a stored collection, and the pointwise bound when a field is given.
    Verify {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        collection: Option<PathBuf>,
    },
    /// Pointwise domination of ‖Tf‖ by dyadic shifts.
    Dominate {
        #[command(flatten)]
        field: FieldArgs,
        #[arg(long)]
        nu: Option<String>,
        #[arg(long)]
        k_max: Option<u32>,
    },
    /// Weighted-norm ratios against [w]_{A_p} for power weights.
    A2 {
        #[arg(long)]
        p: Option<f64>,
        /// Power exponents a, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        exponents: Option<Vec<f64>>,
        /// Grid depth J.
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Characteristics of a weight and its dual.
    Weights {
        /// Weight generator, e.g. "power a=0.6 domain=[-1,1] J=10".
        #[arg(long)]
        weight: Option<String>,
        /// Weight field header file, used when no generator is given.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        p: Option<f64>,
        /// Also compute the Fujii–Wilson A_∞ characteristics.
        #[arg(long)]
        a_infty: bool,
    },
    /// Applies the configured dyadic shift to a nonnegative field.
    ShiftApply {
        #[command(flatten)]
        field: FieldArgs,
        /// Complexity k of the model shift.
        #[arg(long)]
        k: Option<u32>,
    },
    /// Applies the configured truncated kernel operator.
    ApplyT {
        #[command(flatten)]
        field: FieldArgs,
    },
}

struct Ctx {
    cfg: RunConfig,
    format: Format,
    out: PathBuf,
    seed: Option<u64>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    fn write_csv(&self, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    fn write_report<T: Serialize>(
        &self,
        stem: &str,
        value: &T,
        header: &[&str],
        rows: impl FnOnce() -> Vec<Vec<String>>,
    ) -> Result<()> {
        match self.format {
            Format::Json => self.write_json(&format!("{stem}.json"), value),
            Format::Csv => self.write_csv(&format!("{stem}.csv"), header, rows()),
        }
    }

    fn write_field(&self, stem: &str, f: &SampledFunction) -> Result<()> {
        let payload = match self.format {
            Format::Json => PayloadFormat::F64le,
            Format::Csv => PayloadFormat::Csv,
        };
        Ok(write_field(&self.path(&format!("{stem}.json")), f, payload)?)
    }

    fn field(&self, args: &FieldArgs) -> Result<SampledFunction> {
        self.cfg.field(args.input.as_deref(), self.seed)
    }

    fn q0(&self, f: &SampledFunction) -> DyadicCube {
        self.cfg.q0.clone().unwrap_or_else(|| f.grid.root.clone())
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Serialize)]
struct DecomposeReport<'a> {
    nu: String,
    lambda: String,
    kappa: String,
    entries: usize,
    generations: usize,
    verification: &'a VerificationReport,
}

#[derive(Serialize)]
struct ViolationRow {
    entry: Option<usize>,
    cube: Option<DyadicCube>,
    cell: Option<usize>,
    message: String,
}

#[derive(Serialize)]
struct VerifyReport {
    entries: usize,
    violations: Vec<ViolationRow>,
    decomposition: Option<VerificationReport>,
    ok: bool,
}

#[derive(Serialize)]
struct DominateSummary<'a> {
    c_emp: f64,
    overlap_ratio: f64,
    sparseness_violations: Vec<String>,
    report: &'a sparse_dyadic::domination::DominationReport,
}

#[derive(Serialize)]
struct WeightsReport {
    p: f64,
    weight: ApReport,
    dual: ApReport,
    a_infty: Option<ApReport>,
    a_infty_dual: Option<ApReport>,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    let ctx = Ctx { cfg, format: cli.format, out: cli.out, seed: cli.seed };

    match &cli.command {
        Command::Decompose { field, nu } => {
            let f = ctx.field(field)?;
            let nu = ctx.cfg.nu(nu.as_deref())?;
            let s = decompose(&f, &ctx.q0(&f), nu)?;
            let v = verify_decomposition(&f, &s)?;
            ctx.write_json("collection.json", &s)?;
            let report = DecomposeReport {
                nu: rational::format(&s.nu),
                lambda: rational::format(&s.lambda),
                kappa: rational::format(&s.kappa),
                entries: s.entries.len(),
                generations: s.generations(),
                verification: &v,
            };
            ctx.write_report("decompose", &report, &["cube", "generation", "rho", "witness_fraction"], || {
                s.csv_rows().into_iter().map(Vec::from).collect()
            })?;
            println!(
                "decompose: {} entries, {} generations, max violation {:e}",
                s.entries.len(),
                s.generations(),
                v.max_violation
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { field, collection } => {
            let path = collection
                .clone()
                .or_else(|| ctx.cfg.collection.clone())
                .context("no collection: pass --collection or set `collection` in the config")?;
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let s: SparseCollection =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let violations: Vec<ViolationRow> = s
                .check_invariants()
                .into_iter()
                .map(|v| ViolationRow {
                    entry: v.entry,
                    cube: v.entry.and_then(|i| s.entries.get(i)).map(|e| e.cube.clone()),
                    cell: v.cell,
                    message: v.message,
                })
                .collect();
            let has_field = field.input.is_some() || ctx.cfg.input.is_some() || ctx.cfg.field.is_some();
            let decomposition = if has_field {
                Some(verify_decomposition(&ctx.field(field)?, &s)?)
            } else {
                None
            };
            let ok = violations.is_empty() && decomposition.as_ref().is_none_or(|d| d.holds);
            let report = VerifyReport { entries: s.entries.len(), violations, decomposition, ok };
            ctx.write_report("verify", &report, &["entry", "cube", "cell", "message"], || {
                report
                    .violations
                    .iter()
                    .map(|v| {
                        vec![
                            v.entry.map(|e| e.to_string()).unwrap_or_default(),
                            v.cube.as_ref().map(|c| serde_json::to_string(c).unwrap_or_default()).unwrap_or_default(),
                            v.cell.map(|c| c.to_string()).unwrap_or_default(),
                            v.message.clone(),
                        ]
                    })
                    .collect()
            })?;
            if report.ok {
                println!("verify: {} entries, ok", report.entries);
                Ok(ExitCode::SUCCESS)
            } else {
                for v in &report.violations {
                    eprintln!("violation: entry {:?} cell {:?}: {}", v.entry, v.cell, v.message);
                }
                if let Some(d) = report.decomposition.as_ref().filter(|d| !d.holds) {
                    eprintln!("violation: pointwise bound fails by {:e} at cell {:?}", d.max_violation, d.worst_cell);
                }
                Ok(ExitCode::from(2))
            }
        }
        Command::Dominate { field, nu, k_max } => {
            let f = ctx.field(field)?;
            let nu = ctx.cfg.nu(nu.as_deref())?;
            let k_max = k_max.or(ctx.cfg.k_max).unwrap_or(8);
            let spec = ctx.cfg.kernel(f.n);
            let rep = dominate(&spec, &f, &ctx.q0(&f), nu, k_max)?;
            let summary = DominateSummary {
                c_emp: rep.c_emp,
                overlap_ratio: overlap_ratio(&rep),
                sparseness_violations: check_sparseness(&rep),
                report: &rep,
            };
            ctx.write_report("dominate", &summary, &["cell", "center", "lhs", "rhs"], || {
                (0..rep.lhs_field.len())
                    .map(|c| {
                        let x: Vec<String> = rep.grid.cell_center_f64(c).into_iter().map(num).collect();
                        vec![c.to_string(), x.join(";"), num(rep.lhs_field[c]), num(rep.rhs_field[c])]
                    })
                    .collect()
            })?;
            println!(
                "dominate: C_emp {:.6}, {} stopping cubes, {} collections",
                rep.c_emp,
                rep.stopping_cubes,
                rep.collections.len()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::A2 { p, exponents, depth } => {
            let p = p.or(ctx.cfg.p).unwrap_or(2.0);
            let exponents = exponents
                .clone()
                .or_else(|| ctx.cfg.exponents.clone())
                .unwrap_or_else(|| vec![0.0, 0.3, -0.3, 0.6, -0.6, 0.9, -0.9]);
            let depth = depth.or(ctx.cfg.depth).unwrap_or(10);
            let exp = a2_experiment(&ctx.cfg.kernel(1), p, &exponents, depth)?;
            ctx.write_report(
                "a2",
                &exp,
                &["a", "characteristic", "ratio", "argmax_function", "p", "fitted_slope"],
                || {
                    exp.rows
                        .iter()
                        .map(|r| {
                            vec![
                                num(r.a),
                                num(r.characteristic),
                                num(r.ratio),
                                r.argmax_function.to_string(),
                                num(r.p),
                                num(exp.fitted_slope),
                            ]
                        })
                        .collect()
                },
            )?;
            println!("a2: {} rows, fitted slope {:.4}", exp.rows.len(), exp.fitted_slope);
            Ok(ExitCode::SUCCESS)
        }
        Command::Weights { weight, input, p, a_infty } => {
            let p = p.or(ctx.cfg.p).unwrap_or(2.0);
            let w = match weight.as_deref().or(ctx.cfg.weight.as_deref()) {
                Some(spec) => {
                    let spec = PowerWeightSpec::parse(spec)?;
                    check_power_admissible(spec.a, p)?;
                    spec.build()?
                }
                None => Weight::new(ctx.cfg.field(input.as_deref(), ctx.seed)?)?,
            };
            let sigma = dual_weight(&w, p)?;
            let report = WeightsReport {
                p,
                weight: ap_characteristic(&w, p)?,
                dual: ap_characteristic(&sigma, p / (p - 1.0))?,
                a_infty: a_infty.then(|| a_infty_characteristic(&w)).transpose()?,
                a_infty_dual: a_infty.then(|| a_infty_characteristic(&sigma)).transpose()?,
            };
            ctx.write_report("weights", &report, &["quantity", "value", "min_value", "cube_family_size"], || {
                let mut rows = vec![("A_p", &report.weight), ("A_p' dual", &report.dual)];
                rows.extend(report.a_infty.iter().map(|r| ("A_infty", r)));
                rows.extend(report.a_infty_dual.iter().map(|r| ("A_infty dual", r)));
                rows.into_iter()
                    .map(|(name, r)| vec![name.to_string(), num(r.value), num(r.min_value), r.cube_family_size.to_string()])
                    .collect()
            })?;
            println!("weights: [w]_A_p {:.6}, dual {:.6}", report.weight.value, report.dual.value);
            Ok(ExitCode::SUCCESS)
        }
        Command::ShiftApply { field, k } => {
            let g = ctx.field(field)?;
            let out = match (&ctx.cfg.shift, &ctx.cfg.general_shift) {
                (Some(spec), None) => {
                    let mut spec = spec.clone();
                    if let Some(k) = k {
                        spec.k = *k;
                    }
                    apply_a(&spec, &g)?
                }
                (None, Some(spec)) => apply_general(spec, &g)?,
                _ => bail!("set exactly one of `shift` and `general_shift` in the config"),
            };
            ctx.write_field("shift_apply", &out)?;
            println!("shift-apply: wrote {}", ctx.path("shift_apply.json").display());
            Ok(ExitCode::SUCCESS)
        }
        Command::ApplyT { field } => {
            let f = ctx.field(field)?;
            let spec = ctx.cfg.kernel(f.n);
            let tf = match &ctx.cfg.out_grid {
                Some(grid) => apply_t_on(&spec, &f, grid)?,
                None => apply_t(&spec, &f)?,
            };
            ctx.write_field("apply_t", &tf)?;
            println!("apply-t: wrote {}", ctx.path("apply_t.json").display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_VAR) {
        let n: usize = v.trim().parse().with_context(|| format!("{THREADS_VAR}={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match configure_threads().and_then(|_| run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use std::path::Path;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn negative_exponents_parse() {
        let cli = Cli::parse_from(["sparse-dyadic", "a2", "--exponents", "-0.3,0,0.6"]);
        match cli.command {
            Command::A2 { exponents, .. } => assert_eq!(exponents, Some(vec![-0.3, 0.0, 0.6])),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn path_helper_is_relative_to_out() {
        let ctx = Ctx { cfg: RunConfig::default(), format: Format::Csv, out: PathBuf::from("o"), seed: None };
        assert_eq!(ctx.path("a.csv"), Path::new("o").join("a.csv"));
    }
}
