//! Command-line front end for the calibration toolkit.
//!
//! Exit codes: 0 success, 1 validation error, 2 runtime divergence or
//! non-convergence.

use clap::{Args, Parser, Subcommand};
use neurocal::error::Error;
use neurocal::hw::synthetic_system;
use neurocal::workbench::{
    log_log_slope, nu_phase_sweep, scaling_benchmark, write_nu_phase, write_scaling_csv, Workbench,
};
use std::path::PathBuf;
use std::process::ExitCode;

/// Calibrates ODE/SDE model parameters with a neural network and turns the
/// training loss landscape into posterior marginal densities.
#[derive(Parser)]
#[command(name = "neurocal", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Run configuration (YAML).
    #[arg(short, long)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured dataset and write it to the output directory.
    GenerateData(ConfigArgs),
    /// Train the configured seeds and write per-seed and merged sample files.
    Train(ConfigArgs),
    /// Estimate marginal densities and peak statistics from merged samples.
    Densities {
        #[command(flatten)]
        config: ConfigArgs,
        /// Also emit SVG density plots.
        #[arg(long)]
        plots: bool,
    },
    /// Calibrate the forward model at the maximum-likelihood estimates and
    /// score it against the observation.
    Forecast {
        #[command(flatten)]
        config: ConfigArgs,
        /// Forward-model replicas to average over.
        #[arg(long, default_value_t = 100)]
        replicas: usize,
        /// Seed of the replica noise streams.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Inequality phase diagram over (alpha, beta) on a synthetic network.
    SweepDemo {
        #[arg(long, default_value_t = 20)]
        n_origin: usize,
        #[arg(long, default_value_t = 8)]
        n_dest: usize,
        #[arg(long, default_value_t = 2.0)]
        kappa: f64,
        /// Grid points per axis.
        #[arg(long, default_value_t = 15)]
        grid: usize,
        /// Relaxation steps per cell.
        #[arg(long, default_value_t = 20000)]
        steps: usize,
        #[arg(long, default_value_t = 7)]
        network_seed: u64,
        #[arg(short, long)]
        out: PathBuf,
        /// Also emit an SVG heatmap.
        #[arg(long)]
        plots: bool,
    },
    /// Epoch-time scaling over growing synthetic network sizes.
    ScalingBenchmark {
        /// Comma-separated total sizes N+M.
        #[arg(long, value_delimiter = ',', default_values_t = [50usize, 100, 200, 400])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 6000)]
        epochs: u32,
        /// Number of seeds averaged per size.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Forward noise during the benchmark training runs.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(short, long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diverged { .. } | Error::NoConvergence { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_workbench(args: &ConfigArgs) -> Result<Workbench, Error> {
    let mut wb = Workbench::from_file(&args.config)?;
    if let Ok(root) = std::env::var("NEUROCAL_OUTPUT_ROOT") {
        if wb.cfg.output_dir.is_relative() {
            wb.cfg.output_dir = PathBuf::from(root).join(&wb.cfg.output_dir);
        }
    }
    Ok(wb)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenerateData(args) => {
            let wb = load_workbench(&args)?;
            let files = wb.generate_data()?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::Train(args) => {
            let wb = load_workbench(&args)?;
            let outcome = wb.train()?;
            println!(
                "recorded {} samples from {} seed(s) into {}",
                outcome.samples.len(),
                wb.cfg.seed_list().len(),
                wb.cfg.output_dir.display()
            );
            if !outcome.failures.is_empty() {
                for (seed, msg) in &outcome.failures {
                    eprintln!("seed {seed} failed: {msg}");
                }
                // Partial results are on disk; surface the divergence.
                return Err(Error::Diverged {
                    seed: outcome.failures[0].0,
                    epoch: 0,
                    step: 0,
                    last_lambda: vec![],
                });
            }
            Ok(())
        }
        Command::Densities { config, plots } => {
            let wb = load_workbench(&config)?;
            let summaries = wb.densities(plots)?;
            for s in &summaries {
                println!(
                    "{}: mle {:.4}, mean {:.4} ± {:.4}, {} peak(s), mean width {:.4}",
                    s.parameter,
                    s.mle,
                    s.mean,
                    s.std,
                    s.peaks.peaks.len(),
                    s.peaks.mean_width
                );
            }
            Ok(())
        }
        Command::Forecast {
            config,
            replicas,
            seed,
        } => {
            let wb = load_workbench(&config)?;
            let summary = wb.forecast(replicas, seed)?;
            println!("lambda_mle: {:?}", summary.lambda_mle);
            println!(
                "expected MSPE: {:.3e} ± {:.3e}",
                summary.mspe, summary.mspe_std
            );
            Ok(())
        }
        Command::SweepDemo {
            n_origin,
            n_dest,
            kappa,
            grid,
            steps,
            network_seed,
            out,
            plots,
        } => {
            let system = synthetic_system(n_origin, n_dest, 0.1, network_seed);
            let phase = nu_phase_sweep(&system, kappa, (0.5, 2.0), (0.0, 8.0), grid, steps)?;
            let provenance = vec![format!(
                "sweep-demo: n_origin {n_origin}, n_dest {n_dest}, kappa {kappa}, grid {grid}, \
                 steps {steps}, network_seed {network_seed}"
            )];
            let files = write_nu_phase(&out, &phase, &provenance, plots)?;
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
        Command::ScalingBenchmark {
            sizes,
            epochs,
            seeds,
            noise,
            out,
        } => {
            let seed_list: Vec<u64> = (0..seeds).collect();
            let rows = scaling_benchmark(&sizes, epochs, &seed_list, noise)?;
            for r in &rows {
                println!(
                    "N+M = {:4}: {:.3} ms/epoch, final loss {:.3e}",
                    r.size,
                    r.mean_epoch_seconds * 1e3,
                    r.mean_final_loss
                );
            }
            println!("log-log slope: {:.3}", log_log_slope(&rows));
            let provenance = vec![format!(
                "scaling-benchmark: sizes {sizes:?}, epochs {epochs}, seeds {seeds}, noise {noise}"
            )];
            write_scaling_csv(&out.join("scaling.csv"), &rows, &provenance)?;
            Ok(())
        }
    }
}
