//! `gmmcs`: experiment runner for compressive reconstruction of Gaussian and
//! Gaussian-mixture sources.
//!
//! Exit status: 0 on success, 2 for invalid arguments or input files, 3 for
//! filesystem errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmmcs::experiment::{
    design_compare, design_table, fit_em, gen_model, load_patches, phase_scan, phase_table,
    pipeline_table, read_pgm, run_image_pipeline, run_sweep, sweep_table, write_pgm,
    DesignCompareSpec, EmSpec, GenModelSpec, ModelKind, PhaseScanSpec, PipelineSpec, SweepSpec,
    Table,
};
use gmmcs::model::file::{load_model, model_to_string};
use gmmcs::model::GmmSource;
use gmmcs::{Error, Result};

#[derive(Parser)]
#[command(name = "gmmcs", version, about = "MMSE analysis and reconstruction for Gaussian mixture sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a random Wishart model file.
    GenModel(GenModelArgs),
    /// Evaluate MMSE quantities over an (ℓ, σ²) grid.
    Sweep(SweepArgs),
    /// Locate the measurement count where the error floor vanishes.
    PhaseScan(PhaseScanArgs),
    /// Compare the water-filling kernel with random kernels.
    DesignCompare(DesignCompareArgs),
    /// Reconstruct image patches from compressive measurements.
    ImagePipeline(ImagePipelineArgs),
    /// Fit a mixture prior to patches with EM.
    FitEm(FitEmArgs),
}

#[derive(Args)]
struct GenModelArgs {
    /// `gaussian` or `gmm-wishart`.
    #[arg(long, default_value = "gmm-wishart")]
    kind: String,
    #[arg(long)]
    n: usize,
    /// Number of classes; ignored for `gaussian`.
    #[arg(long, short = 'k', default_value_t = 1)]
    classes: usize,
    #[arg(long)]
    dof: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma list or inclusive range, e.g. `2,3,4` or `1-5`.
    #[arg(long)]
    ell: String,
    /// Comma list or `log:START:END:COUNT`.
    #[arg(long)]
    sigma2_grid: String,
    #[arg(long, value_delimiter = ',', default_value = "closed_form")]
    quantities: Vec<String>,
    #[arg(long, default_value_t = 10_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `random`, `designed` or `fixed:PATH`.
    #[arg(long, default_value = "random")]
    kernel: String,
    #[arg(long, default_value_t = gmmcs::analysis::DEFAULT_WORKERS)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PhaseScanArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    ell: String,
    #[arg(long, default_value_t = 1e-8)]
    sigma2_probe: f64,
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[arg(long, default_value_t = 10_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = gmmcs::analysis::DEFAULT_WORKERS)]
    workers: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DesignCompareArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    ell: String,
    #[arg(long)]
    sigma2_grid: String,
    #[arg(long, default_value_t = 50)]
    random_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ImagePipelineArgs {
    /// 8-bit grayscale PGM (P2 or P5).
    #[arg(long)]
    image: PathBuf,
    /// Prior model with dimension `patch_size²`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 8)]
    patch_size: usize,
    #[arg(long)]
    s_max: usize,
    #[arg(long)]
    ell: String,
    #[arg(long)]
    sigma2_grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the projected and reconstructed images.
    #[arg(long)]
    image_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitEmArgs {
    /// A PGM image (cut into patches) or a CSV file with one sample per row.
    #[arg(long)]
    patches: PathBuf,
    #[arg(long, default_value_t = 8)]
    patch_size: usize,
    #[arg(long, short = 'k')]
    classes: usize,
    #[arg(long)]
    s_max: usize,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional CSV of the per-iteration log-likelihood.
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn parse_ells(s: &str) -> std::result::Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|e| format!("`{part}`: {e}"))?;
                let b: usize = b.trim().parse().map_err(|e| format!("`{part}`: {e}"))?;
                if a > b {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|e| format!("`{part}`: {e}"))?),
        }
    }
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn parse_grid(s: &str) -> std::result::Result<Vec<f64>, String> {
    let values: Vec<f64> = if let Some(rest) = s.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err("expected log:START:END:COUNT".into());
        };
        let a: f64 = a.parse().map_err(|e| format!("{e}"))?;
        let b: f64 = b.parse().map_err(|e| format!("{e}"))?;
        let n: usize = n.parse().map_err(|e| format!("{e}"))?;
        if !(a > 0.0 && b > 0.0) || n == 0 {
            return Err("log grid needs positive endpoints and COUNT ≥ 1".into());
        }
        if n == 1 {
            vec![a]
        } else {
            let (la, lb) = (a.log10(), b.log10());
            (0..n).map(|i| 10f64.powf(la + (lb - la) * i as f64 / (n - 1) as f64)).collect()
        }
    } else {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
            .collect::<std::result::Result<_, _>>()?
    };
    if values.is_empty() {
        return Err("empty grid".into());
    }
    if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(format!("σ² must be positive and finite, got {bad}"));
    }
    Ok(values)
}

fn ells(s: &str) -> Result<Vec<usize>> {
    parse_ells(s).map_err(|e| Error::InvalidArgument(format!("--ell: {e}")))
}

fn grid(s: &str) -> Result<Vec<f64>> {
    parse_grid(s).map_err(|e| Error::InvalidArgument(format!("--sigma2-grid: {e}")))
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn emit_table(table: &Table, out: Option<&Path>) -> Result<()> {
    emit(&table.to_csv(), out)
}

fn model_arg(path: &Path) -> Result<(GmmSource, String)> {
    Ok((load_model(path)?, path.display().to_string()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenModel(a) => {
            let spec = GenModelSpec {
                kind: a.kind.parse::<ModelKind>()?,
                n: a.n,
                classes: a.classes,
                dof: a.dof,
                seed: a.seed,
            };
            emit(&model_to_string(&gen_model(&spec)?), a.out.as_deref())
        }
        Command::Sweep(a) => {
            let (gmm, label) = model_arg(&a.model)?;
            let mut spec = SweepSpec::new(ells(&a.ell)?, grid(&a.sigma2_grid)?, a.quantities);
            spec.mc_samples = a.mc_samples;
            spec.seed = a.seed;
            spec.kernel = a.kernel;
            spec.workers = a.workers.max(1);
            let rows = run_sweep(&gmm, &spec)?;
            emit_table(&sweep_table(&spec, &label, &rows), a.out.as_deref())
        }
        Command::PhaseScan(a) => {
            let (gmm, label) = model_arg(&a.model)?;
            let spec = PhaseScanSpec {
                ells: ells(&a.ell)?,
                sigma2_probe: a.sigma2_probe,
                trials: a.trials,
                mc_samples: a.mc_samples,
                seed: a.seed,
                workers: a.workers.max(1),
            };
            let rows = phase_scan(&gmm, &spec)?;
            emit_table(&phase_table(&spec, &label, &rows), a.out.as_deref())
        }
        Command::DesignCompare(a) => {
            let (gmm, label) = model_arg(&a.model)?;
            let spec = DesignCompareSpec {
                ells: ells(&a.ell)?,
                sigma2_grid: grid(&a.sigma2_grid)?,
                random_trials: a.random_trials,
                seed: a.seed,
            };
            let rows = design_compare(&gmm, &spec)?;
            emit_table(&design_table(&spec, &label, &rows), a.out.as_deref())
        }
        Command::ImagePipeline(a) => {
            let (prior, _) = model_arg(&a.model)?;
            let image = read_pgm(&a.image)?;
            let spec = PipelineSpec {
                patch_size: a.patch_size,
                s_max: a.s_max,
                ells: ells(&a.ell)?,
                sigma2_grid: grid(&a.sigma2_grid)?,
                seed: a.seed,
            };
            let result = run_image_pipeline(&image, &prior, &spec)?;
            if let Some(dir) = &a.image_dir {
                fs::create_dir_all(dir).map_err(|e| Error::Io {
                    path: dir.display().to_string(),
                    source: e,
                })?;
                write_pgm(&result.projected, &dir.join("projected.pgm"))?;
                for (ell, s2, img) in &result.reconstructions {
                    write_pgm(img, &dir.join(format!("recon_ell{ell}_sigma2_{s2:e}.pgm")))?;
                }
            }
            let label = a.image.display().to_string();
            emit_table(&pipeline_table(&spec, &label, &result), a.out.as_deref())
        }
        Command::FitEm(a) => {
            let data = load_patches(&a.patches, a.patch_size)?;
            let spec = EmSpec {
                classes: a.classes,
                s_max: a.s_max,
                iterations: a.iterations,
                seed: a.seed,
                tolerance: a.tolerance,
            };
            let fit = fit_em(&data, &spec)?;
            if let Some(path) = &a.trace {
                let mut t = Table::new(vec!["iteration", "log_likelihood"]);
                t.meta("seed", a.seed);
                for (i, ll) in fit.log_likelihood.iter().enumerate() {
                    t.push(vec![i.into(), (*ll).into()]);
                }
                t.write(path)?;
            }
            emit(&model_to_string(&fit.model), a.out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 3 } else { 2 })
        }
    }
}
