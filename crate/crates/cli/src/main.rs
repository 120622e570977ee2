use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use hetblas_core::bench::{
    benchmark_operands, calibrate, emit, run_sweep, CalibrationTargets, FixedParams, OutputFormat, DEFAULT_SEED,
};
use hetblas_core::blas::{gemm_reference, max_relative_error, save_matrix};
use hetblas_core::runtime::{breakdown_to_seconds, CostModelParams, OffloadPath, OffloadSession};
use hetblas_core::{ClusterConfig, GemmProblem, Matrix};

/// Relative per-element tolerance for `gemm-verify`.
const VERIFY_TOLERANCE: f64 = 1e-12;

#[derive(Parser)]
#[command(name = "hetblas", version, about = "Simulated host/accelerator GEMM offload harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep square GEMM sizes across offload paths and emit the breakdown table.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [32usize, 64, 128])]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "host,copy,zerocopy")]
        paths: Vec<OffloadPath>,
        /// Cost model parameters (JSON). Calibrated from --targets when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Calibration targets (JSON); ignored when --config is given.
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: OutputFormat,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Solve the cost model for the given targets and write it as JSON.
    Calibrate {
        #[arg(long)]
        targets: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one seeded square GEMM on a path and check it against the host reference.
    GemmVerify {
        #[arg(long)]
        size: usize,
        #[arg(long, default_value = "copy")]
        path: OffloadPath,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the result matrix in the binary matrix format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_params(config: Option<&Path>, targets: Option<&Path>, cfg: &ClusterConfig) -> Result<CostModelParams> {
    if let Some(path) = config {
        let params: CostModelParams = read_json(path)?;
        params.validate()?;
        return Ok(params);
    }
    let targets = match targets {
        Some(path) => read_json(path)?,
        None => CalibrationTargets::default(),
    };
    Ok(calibrate(&targets, cfg, &FixedParams::default())?)
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(path) => fs::write(path, bytes).with_context(|| format!("writing {}", path.display())),
        None => Ok(io::stdout().lock().write_all(bytes)?),
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let cfg = ClusterConfig::default();
    match cli.command {
        Command::Bench {
            sizes,
            paths,
            config,
            targets,
            format,
            out,
            seed,
        } => {
            if sizes.contains(&0) {
                bail!("sizes must be >= 1");
            }
            let params = load_params(config.as_deref(), targets.as_deref(), &cfg)?;
            let results = run_sweep(&sizes, &paths, &params, &cfg, seed)?;
            write_output(out.as_deref(), &emit(&results, format))?;
        }
        Command::Calibrate { targets, out } => {
            let params = load_params(None, targets.as_deref(), &cfg)?;
            let mut json = serde_json::to_vec_pretty(&params)?;
            json.push(b'\n');
            write_output(out.as_deref(), &json)?;
        }
        Command::GemmVerify {
            size,
            path,
            seed,
            config,
            out,
        } => {
            if size == 0 {
                bail!("size must be >= 1");
            }
            let params = load_params(config.as_deref(), None, &cfg)?;
            let problem = GemmProblem::square(size);
            let (a, b) = benchmark_operands(size, seed);
            let c = Matrix::zeros(size, size);

            let mut session = OffloadSession::booted(cfg, params)?;
            let outcome = session.offload_gemm(&problem, &a, &b, &c, path)?;
            let expected = gemm_reference(&problem, &a, &b, &c)?;
            let err = max_relative_error(&outcome.result, &expected);

            if let Some(out) = &out {
                save_matrix(out, &outcome.result).with_context(|| format!("writing {}", out.display()))?;
            }
            let bd = outcome.breakdown;
            let secs = breakdown_to_seconds(&bd, &params);
            println!(
                "size={size} path={} executed={} max_rel_err={err:e} data_copy={} fork_join={} compute={} total={} seconds={}",
                path, outcome.executed_path, bd.data_copy_cycles, bd.fork_join_cycles, bd.compute_cycles, bd.total_cycles, secs.total
            );
            if err > VERIFY_TOLERANCE {
                eprintln!("mismatch: max relative error {err:e} exceeds {VERIFY_TOLERANCE:e}");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
