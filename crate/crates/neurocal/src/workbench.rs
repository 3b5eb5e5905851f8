//! Pipeline stages behind the CLI: data preparation, training runs, density
//! estimation, calibrated forecasting, the inequality phase-diagram sweep
//! and the epoch-time scaling benchmark. Every emitted file carries the
//! originating configuration and seeds as `#` header comments.

use crate::config::{ModelKind, RunConfig};
use crate::data::{self, HwDataPaths};
use crate::density::{self, MarginalDensity, PeakStats};
use crate::error::{Error, Result};
use crate::hw::{generate_hw_dataset, synthetic_system, HwParams, HwSystem};
use crate::nn::NetSpec;
use crate::sir::abm::{generate_sir_dataset, AbmParams};
use crate::sir::flow::SirFlowParams;
use crate::tensor::Tensor;
use crate::train::{
    calibrated_forecast, run_multiseed, FlowModel, Forecast, HwModel, LossPotentialSample,
    RunOutcome, SirModel,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// A fully prepared problem: the forward model and the observed frames.
pub struct Problem {
    pub model: Box<dyn FlowModel>,
    pub series: Vec<Vec<f64>>,
}

/// One run configuration plus its raw text (for provenance headers).
pub struct Workbench {
    pub cfg: RunConfig,
    cfg_text: String,
}

impl Workbench {
    pub fn new(cfg_text: &str) -> Result<Self> {
        Ok(Workbench {
            cfg: RunConfig::from_yaml_str(cfg_text)?,
            cfg_text: cfg_text.to_string(),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::new(&data::read_to_string(path)?)
    }

    fn provenance(&self, extra: &[String]) -> Vec<String> {
        let mut lines = vec!["config:".to_string()];
        for line in self.cfg_text.lines() {
            lines.push(format!("  {line}"));
        }
        lines.extend(extra.iter().cloned());
        lines
    }

    fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    /// Build the forward model and observation series per the config,
    /// generating or loading as requested. Referenced files must exist and
    /// parse before any training starts.
    pub fn prepare(&self) -> Result<Problem> {
        match (&self.cfg.data.generate, &self.cfg.data.load_from_dir) {
            (Some(gen), None) => match self.cfg.model {
                ModelKind::Sir => {
                    let g = gen.sir.as_ref().expect("validated");
                    let params = AbmParams {
                        r_infect: g.r_infect,
                        p_infect: g.p_infect,
                        t_infectious: g.t_infectious,
                        diffusivity_s: g.diffusivity_s,
                        diffusivity_i: g.diffusivity_i,
                        diffusivity_r: g.diffusivity_r,
                        domain: g.domain,
                    };
                    let series = generate_sir_dataset(g.n_agents, params, g.n_steps, g.seed);
                    Ok(Problem {
                        model: Box::new(SirModel::new(SirFlowParams::default())),
                        series: series.as_state_frames(),
                    })
                }
                ModelKind::HarrisWilson => {
                    let g = gen.harris_wilson.as_ref().expect("validated");
                    let system = synthetic_system(g.n_origin, g.n_dest, g.dt, g.network_seed);
                    let truth = HwParams {
                        alpha: g.alpha,
                        beta: g.beta,
                        kappa: g.kappa,
                        sigma: 0.0,
                        epsilon: 1.0,
                    };
                    let obs = generate_hw_dataset(&system, &truth, g.sigma, g.frames, g.seed)?;
                    Ok(Problem {
                        model: Box::new(HwModel::new(system)),
                        series: obs.frames,
                    })
                }
            },
            (None, Some(load)) => match self.cfg.model {
                ModelKind::Sir => {
                    let path = match (&load.series, &load.dir) {
                        (Some(p), _) => p.clone(),
                        (None, Some(d)) => d.join("series.csv"),
                        (None, None) => unreachable!("validated"),
                    };
                    let series = data::load_density_series_csv(&path)?;
                    Ok(Problem {
                        model: Box::new(SirModel::new(SirFlowParams::default())),
                        series,
                    })
                }
                ModelKind::HarrisWilson => {
                    let paths = match &load.dir {
                        Some(d) => HwDataPaths::from_dir(d),
                        None => HwDataPaths {
                            network: load.network.clone().expect("validated"),
                            origin_zones: load.origin_zones.clone().expect("validated"),
                            destination_zones: load.destination_zones.clone().expect("validated"),
                        },
                    };
                    let ds = data::load_hw_dataset(&paths, load.raw_gla)?;
                    let system = HwSystem::new(ds.origin, ds.conv, load.dt)?;
                    Ok(Problem {
                        model: Box::new(HwModel::new(system)),
                        series: vec![ds.dest],
                    })
                }
            },
            _ => unreachable!("validated"),
        }
    }

    /// Write the configured dataset to the output directory.
    pub fn generate_data(&self) -> Result<Vec<PathBuf>> {
        let problem = self.prepare()?;
        let prov = self.provenance(&[]);
        let mut written = Vec::new();
        match self.cfg.model {
            ModelKind::Sir => {
                let frames: Vec<[f64; 3]> =
                    problem.series.iter().map(|f| [f[0], f[1], f[2]]).collect();
                let path = self.out("series.csv");
                data::write_density_series_csv(&path, &frames, &prov)?;
                written.push(path);
            }
            ModelKind::HarrisWilson => {
                // Re-derive the system so the network itself can be shipped
                // alongside the frames.
                let gen = self
                    .cfg
                    .data
                    .generate
                    .as_ref()
                    .and_then(|g| g.harris_wilson.as_ref())
                    .ok_or_else(|| {
                        Error::InvalidConfig(
                            "generate-data for harris_wilson needs data.generate".into(),
                        )
                    })?;
                let system = synthetic_system(gen.n_origin, gen.n_dest, gen.dt, gen.network_seed);
                let paths = HwDataPaths::from_dir(&self.cfg.output_dir);
                data::write_vector_csv(&paths.origin_zones, "origin_size", &system.origin, &prov)?;
                data::write_matrix_csv(&paths.network, &system.conv, &prov)?;
                let last = problem.series.last().expect("at least one frame");
                data::write_vector_csv(&paths.destination_zones, "dest_size", last, &prov)?;
                if problem.series.len() > 1 {
                    let frames_path = self.out("frames.csv");
                    let rows: Vec<Vec<f64>> = problem.series.clone();
                    let mut m = Vec::new();
                    for row in &rows {
                        m.extend(row.iter().copied());
                    }
                    data::write_matrix_csv(
                        &frames_path,
                        &Tensor::matrix(rows.len(), rows[0].len(), m),
                        &prov,
                    )?;
                    written.push(frames_path);
                }
                written.push(paths.origin_zones);
                written.push(paths.destination_zones);
                written.push(paths.network);
            }
        }
        Ok(written)
    }

    /// Train every configured seed and write per-seed and merged sample
    /// files. Failed seeds are reported, not fatal, as long as one succeeds.
    pub fn train(&self) -> Result<RunOutcome> {
        let problem = self.prepare()?;
        let spec = self.net_spec_for(&problem)?;
        let seeds = self.cfg.seed_list();
        let outcome = self.with_pool(|| {
            run_multiseed(
                &spec,
                problem.model.as_ref(),
                &problem.series,
                &self.cfg.training,
                &seeds,
            )
        })?;
        let names = &self.cfg.training.to_learn;
        for &seed in &seeds {
            let rows: Vec<&LossPotentialSample> =
                outcome.samples.iter().filter(|s| s.seed == seed).collect();
            if rows.is_empty() {
                continue;
            }
            let prov = self.provenance(&[format!("seed: {seed}")]);
            write_samples_csv(
                &self.out(&format!("samples_seed_{seed}.csv")),
                names,
                &rows,
                &prov,
            )?;
        }
        let prov = self.provenance(&[format!("seeds: {seeds:?}")]);
        let all: Vec<&LossPotentialSample> = outcome.samples.iter().collect();
        write_samples_csv(&self.out("samples_merged.csv"), names, &all, &prov)?;
        Ok(outcome)
    }

    pub fn net_spec_for(&self, problem: &Problem) -> Result<NetSpec> {
        self.cfg.net_spec(problem.model.state_dim())
    }

    fn with_pool<T: Send>(&self, f: impl FnOnce() -> T + Send) -> T {
        match self.cfg.workers {
            Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .expect("worker pool")
                .install(f),
            _ => f(),
        }
    }

    /// Marginal densities (one per learned parameter) from the merged
    /// samples, plus a peak-statistics summary.
    pub fn densities(&self, plots: bool) -> Result<Vec<ParameterSummary>> {
        let names = self.cfg.training.to_learn.clone();
        let samples = load_samples_csv(&self.out("samples_merged.csv"), names.len())?;
        let opts = self.cfg.density.options();
        let prov = self.provenance(&[format!("samples: {}", samples.len())]);
        let mut summaries = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let values: Vec<f64> = samples.iter().map(|s| s.lambda[i]).collect();
            let losses: Vec<f64> = samples.iter().map(|s| s.loss).collect();
            let marginal = density::marginal(name, &values, &losses, &opts)?;
            write_density_csv(&self.out(&format!("density_{name}.csv")), &marginal, &prov)?;
            if plots {
                let points: Vec<(f64, f64)> = marginal
                    .grid
                    .iter()
                    .zip(&marginal.density)
                    .map(|(&x, &y)| (x, y))
                    .collect();
                crate::plot::line_plot(
                    &self.out(&format!("density_{name}.svg")),
                    &format!("marginal density of {name}"),
                    &[(name.clone(), points)],
                )?;
            }
            summaries.push(summarize(&marginal, opts.prominence));
        }
        let json = serde_json::to_string_pretty(&summaries)
            .map_err(|e| Error::InvalidData(format!("peak stats serialization: {e}")))?;
        std::fs::create_dir_all(&self.cfg.output_dir).map_err(|source| Error::Io {
            path: self.cfg.output_dir.display().to_string(),
            source,
        })?;
        std::fs::write(self.out("peak_stats.json"), json).map_err(|source| Error::Io {
            path: "peak_stats.json".into(),
            source,
        })?;
        Ok(summaries)
    }

    /// Calibrate the forward model at the maximum-likelihood estimates and
    /// score it against the observation.
    pub fn forecast(&self, replicas: usize, seed: u64) -> Result<ForecastSummary> {
        let problem = self.prepare()?;
        let names = &self.cfg.training.to_learn;
        let samples = load_samples_csv(&self.out("samples_merged.csv"), names.len())?;
        let opts = self.cfg.density.options();

        let mut params: BTreeMap<String, f64> = self.cfg.training.true_parameters.clone();
        if let Some(noise) = self.cfg.training.forward_noise {
            params.insert("sigma".into(), noise);
        }
        let mut mle_map = BTreeMap::new();
        for (i, name) in names.iter().enumerate() {
            let values: Vec<f64> = samples.iter().map(|s| s.lambda[i]).collect();
            let losses: Vec<f64> = samples.iter().map(|s| s.loss).collect();
            let marginal = density::marginal(name, &values, &losses, &opts)?;
            let estimate = density::mle(&marginal);
            params.insert(name.clone(), estimate);
            mle_map.insert(name.clone(), estimate);
        }
        let forecast = calibrated_forecast(
            problem.model.as_ref(),
            &problem.series,
            &params,
            replicas,
            seed,
        )?;
        let prov = self.provenance(&[format!("replicas: {replicas}"), format!("seed: {seed}")]);
        write_forecast_csv(&self.out("forecast.csv"), &forecast, &prov)?;
        let summary = ForecastSummary {
            lambda_mle: mle_map,
            mspe: forecast.mspe,
            mspe_std: forecast.mspe_std,
            replicas,
        };
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| Error::InvalidData(format!("forecast serialization: {e}")))?;
        std::fs::write(self.out("forecast_summary.json"), json).map_err(|source| Error::Io {
            path: "forecast_summary.json".into(),
            source,
        })?;
        Ok(summary)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParameterSummary {
    pub parameter: String,
    pub mle: f64,
    pub mean: f64,
    pub std: f64,
    pub bandwidth: f64,
    #[serde(flatten)]
    pub peaks: PeakStats,
}

fn summarize(marginal: &MarginalDensity, prominence: f64) -> ParameterSummary {
    let (mean, std) = density::expectation_std(marginal);
    ParameterSummary {
        parameter: marginal.parameter.clone(),
        mle: density::mle(marginal),
        mean,
        std,
        bandwidth: marginal.bandwidth,
        peaks: density::peak_stats(marginal, prominence),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ForecastSummary {
    pub lambda_mle: BTreeMap<String, f64>,
    pub mspe: f64,
    pub mspe_std: f64,
    pub replicas: usize,
}

fn write_samples_csv(
    path: &Path,
    names: &[String],
    samples: &[&LossPotentialSample],
    provenance: &[String],
) -> Result<()> {
    let mut out = String::new();
    for line in provenance {
        for part in line.lines() {
            let _ = writeln!(out, "# {part}");
        }
    }
    let _ = writeln!(out, "seed,epoch,step,{},loss", names.join(","));
    for s in samples {
        let lambda: Vec<String> = s.lambda.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            s.seed,
            s.epoch,
            s.step,
            lambda.join(","),
            s.loss
        );
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Read a sample file written by [`write_samples_csv`].
pub fn load_samples_csv(path: &Path, n_params: usize) -> Result<Vec<LossPotentialSample>> {
    let label = path.display().to_string();
    let rows = data::parse_numeric_csv(&data::read_to_string(path)?, &label)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != n_params + 4 {
                return Err(Error::Parse {
                    path: label.clone(),
                    line: i + 1,
                    message: format!("expected {} columns, found {}", n_params + 4, row.len()),
                });
            }
            Ok(LossPotentialSample {
                seed: row[0] as u64,
                epoch: row[1] as u32,
                step: row[2] as u32,
                lambda: row[3..3 + n_params].to_vec(),
                loss: row[3 + n_params],
            })
        })
        .collect()
}

fn write_density_csv(path: &Path, marginal: &MarginalDensity, provenance: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in provenance {
        for part in line.lines() {
            let _ = writeln!(out, "# {part}");
        }
    }
    let _ = writeln!(out, "# bandwidth: {}", marginal.bandwidth);
    let _ = writeln!(out, "{},density", marginal.parameter);
    for (x, d) in marginal.grid.iter().zip(&marginal.density) {
        let _ = writeln!(out, "{x},{d}");
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write_forecast_csv(path: &Path, forecast: &Forecast, provenance: &[String]) -> Result<()> {
    let dim = forecast.mean.first().map(Vec::len).unwrap_or(0);
    let mut out = String::new();
    for line in provenance {
        for part in line.lines() {
            let _ = writeln!(out, "# {part}");
        }
    }
    let mean_cols: Vec<String> = (0..dim).map(|c| format!("mean_{c}")).collect();
    let std_cols: Vec<String> = (0..dim).map(|c| format!("std_{c}")).collect();
    let _ = writeln!(out, "t,{},{}", mean_cols.join(","), std_cols.join(","));
    for (t, (m, s)) in forecast.mean.iter().zip(&forecast.std).enumerate() {
        let mm: Vec<String> = m.iter().map(|x| x.to_string()).collect();
        let ss: Vec<String> = s.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{},{},{}", t + 1, mm.join(","), ss.join(","));
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Phase-diagram sweep
// ---------------------------------------------------------------------------

/// Inequality ν of the relaxed steady state over an (α, β) grid at fixed κ.
/// Cells that monopolise converge only algebraically, so the relaxation runs
/// a fixed step budget instead of a tolerance.
pub struct NuPhase {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `nu[beta_index][alpha_index]`
    pub nu: Vec<Vec<f64>>,
}

pub fn nu_phase_sweep(
    system: &HwSystem,
    kappa: f64,
    alpha_range: (f64, f64),
    beta_range: (f64, f64),
    grid: usize,
    relax_steps: usize,
) -> Result<NuPhase> {
    use rayon::prelude::*;
    if grid < 2 {
        return Err(Error::InvalidConfig(
            "phase grid needs at least 2 points per axis".into(),
        ));
    }
    let lin = |lo: f64, hi: f64| -> Vec<f64> {
        (0..grid)
            .map(|i| lo + (hi - lo) * i as f64 / (grid - 1) as f64)
            .collect()
    };
    let alphas = lin(alpha_range.0, alpha_range.1);
    let betas = lin(beta_range.0, beta_range.1);
    let nu: Result<Vec<Vec<f64>>> = betas
        .par_iter()
        .map(|&beta| {
            alphas
                .iter()
                .map(|&alpha| {
                    let pars = HwParams {
                        alpha,
                        beta,
                        kappa,
                        sigma: 0.0,
                        epsilon: 1.0,
                    };
                    let w = system.relax(&system.default_w0(&pars), &pars, relax_steps)?;
                    crate::hw::inequality_nu(&w)
                })
                .collect()
        })
        .collect();
    Ok(NuPhase {
        alphas,
        betas,
        nu: nu?,
    })
}

pub fn write_nu_phase(
    out_dir: &Path,
    phase: &NuPhase,
    provenance: &[String],
    plot: bool,
) -> Result<Vec<PathBuf>> {
    let mut out = String::new();
    for line in provenance {
        for part in line.lines() {
            let _ = writeln!(out, "# {part}");
        }
    }
    let _ = writeln!(out, "alpha,beta,nu");
    for (bi, beta) in phase.betas.iter().enumerate() {
        for (ai, alpha) in phase.alphas.iter().enumerate() {
            let _ = writeln!(out, "{alpha},{beta},{}", phase.nu[bi][ai]);
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let csv = out_dir.join("nu_phase.csv");
    std::fs::write(&csv, out).map_err(|source| Error::Io {
        path: csv.display().to_string(),
        source,
    })?;
    let mut written = vec![csv];
    if plot {
        let svg = out_dir.join("nu_phase.svg");
        crate::plot::heatmap(
            &svg,
            "inequality of the relaxed state",
            "alpha",
            "beta",
            &phase.alphas,
            &phase.betas,
            &phase.nu,
        )?;
        written.push(svg);
    }
    Ok(written)
}

// ---------------------------------------------------------------------------
// Scaling benchmark
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    /// Total network size N + M.
    pub size: usize,
    pub n_origin: usize,
    pub n_dest: usize,
    pub mean_epoch_seconds: f64,
    pub mean_final_loss: f64,
}

/// Mean epoch time and final training loss for a family of synthetic
/// networks of growing size (zones split evenly between origins and
/// destinations, which keeps the quadratic matrix work dominant even at the
/// smallest sizes). One epoch is a single gradient step on steady-state
/// data (L = 1, B = 1).
pub fn scaling_benchmark(
    sizes: &[usize],
    epochs: u32,
    seeds: &[u64],
    forward_noise: f64,
) -> Result<Vec<ScalingRow>> {
    let mut rows = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let n_dest = (size / 2).max(2);
        let n_origin = size - n_dest;
        let system = synthetic_system(n_origin, n_dest, 0.01, 97);
        let truth = HwParams {
            alpha: 0.7,
            beta: 1.2,
            kappa: 1.5,
            sigma: 0.0,
            epsilon: 1.0,
        };
        let obs = generate_hw_dataset(&system, &truth, 0.0, 1, 0)?;
        let model = HwModel::new(system);
        let cfg = crate::train::TrainingConfig {
            to_learn: vec!["alpha".into(), "beta".into(), "kappa".into()],
            true_parameters: [("sigma".to_string(), 0.0)].into(),
            batch_size: 1,
            epochs,
            forward_noise: if forward_noise > 0.0 {
                Some(forward_noise)
            } else {
                None
            },
            fixed_point: false,
        };
        let spec = NetSpec::shallow_abs(n_dest, 3, 20, 0.002, (0.0, 4.0));
        let mut epoch_seconds = Vec::with_capacity(seeds.len());
        let mut final_losses = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let start = Instant::now();
            let samples = crate::train::train_seed(&spec, &model, &obs.frames, &cfg, seed)?;
            epoch_seconds.push(start.elapsed().as_secs_f64() / epochs as f64);
            final_losses.push(samples.last().expect("at least one sample").loss);
        }
        rows.push(ScalingRow {
            size,
            n_origin,
            n_dest,
            mean_epoch_seconds: mean(&epoch_seconds),
            mean_final_loss: mean(&final_losses),
        });
    }
    Ok(rows)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Least-squares slope of log(epoch time) against log(size).
pub fn log_log_slope(rows: &[ScalingRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.size as f64).ln(), r.mean_epoch_seconds.ln()))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

pub fn write_scaling_csv(path: &Path, rows: &[ScalingRow], provenance: &[String]) -> Result<()> {
    let mut out = String::new();
    for line in provenance {
        for part in line.lines() {
            let _ = writeln!(out, "# {part}");
        }
    }
    let _ = writeln!(
        out,
        "size,n_origin,n_dest,mean_epoch_seconds,mean_final_loss"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.size, r.n_origin, r.n_dest, r.mean_epoch_seconds, r.mean_final_loss
        );
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.display().to_string(),
            source,
        })?;
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}
