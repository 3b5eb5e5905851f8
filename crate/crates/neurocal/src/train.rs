//! Training engine: batched forward-solve, batch-averaged squared-error
//! loss, backpropagation, epoch loops, multi-seed orchestration and
//! loss-potential sample recording.
//!
//! Each gradient step reads a start frame, asks the net for parameter
//! estimates, runs the forward model for one batch, and compares the
//! predicted frames against the observed ones. For single-frame
//! (steady-state) data the solver takes one step from the observed frame
//! and the loss compares against the same frame, a differentiable
//! fixed-point residual.

use crate::error::{Error, Result};
use crate::grad::{Tape, Var};
use crate::hw::{HwParamVars, HwParams, HwSystem};
use crate::nn::{Net, NetSpec, Optimizer};
use crate::sir::flow::{sir_flow_step, sir_flow_step_plain, SirFlowParams, SirStateVars};
use crate::tensor::Tensor;
use rand::rngs::StdRng;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Stream-splitting constant so the solver noise is independent of the
/// weight initialization for the same seed.
const NOISE_STREAM: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Names of the parameters the net estimates, in output order.
    pub to_learn: Vec<String>,
    /// Fixed values for the parameters that are not learned.
    #[serde(default)]
    pub true_parameters: BTreeMap<String, f64>,
    pub batch_size: usize,
    pub epochs: u32,
    /// Noise level used inside the solver during training when the noise
    /// amplitude is not a learned parameter.
    #[serde(default)]
    pub forward_noise: Option<f64>,
    /// Treat every observed frame as a steady-state fixed point: one solver
    /// step from each frame is compared against the frame itself. Implied
    /// for single-frame data; opt-in for multi-frame equilibrium
    /// observations, where every frame is its own successor.
    #[serde(default)]
    pub fixed_point: bool,
}

/// One record per gradient step: the estimate, its loss, and where it came
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossPotentialSample {
    pub seed: u64,
    pub epoch: u32,
    pub step: u32,
    /// Parameter estimates in `to_learn` order, on their physical scale.
    pub lambda: Vec<f64>,
    pub loss: f64,
}

/// Resolved per-pass parameter handles: every model parameter maps to a tape
/// value, with the fixed ones also known numerically.
pub struct ParamBinding {
    map: BTreeMap<String, (Var, Option<f64>)>,
}

impl ParamBinding {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.map
            .get(name)
            .map(|(v, _)| *v)
            .ok_or_else(|| Error::InvalidConfig(format!("model parameter `{name}` is unbound")))
    }

    /// Fixed numeric value, if this parameter is not learned.
    pub fn fixed(&self, name: &str) -> Option<f64> {
        self.map.get(name).and_then(|(_, f)| *f)
    }
}

/// A differentiable forward model pluggable into the training loop.
pub trait FlowModel: Sync {
    fn state_dim(&self) -> usize;
    /// Canonical parameter list; every entry must be learned or fixed.
    fn param_names(&self) -> &'static [&'static str];
    /// Parameters that may be omitted from the config, with their defaults.
    fn default_fixed(&self, _name: &str) -> Option<f64> {
        None
    }
    /// Solve `batch` frames forward from `start` (observed at time index
    /// `t_start`), recording everything on the tape.
    fn predict_batch(
        &self,
        tape: &mut Tape,
        start: &[f64],
        params: &ParamBinding,
        batch: usize,
        t_start: usize,
        rng: &mut StdRng,
    ) -> Result<Vec<Var>>;
    /// Rescale recorded estimates to their physical dimension.
    fn report(&self, _to_learn: &[String], _raw: &mut [f64]) {}
    /// Tape-free forward run for calibrated forecasting.
    fn simulate(
        &self,
        start: &[f64],
        params: &BTreeMap<String, f64>,
        n_frames: usize,
        t_start: usize,
        rng: &mut StdRng,
    ) -> Result<Vec<Vec<f64>>>;
}

/// Batch-averaged squared error: `J = (1/B)·Σ_b ‖φ̂_b − φ_b‖²`.
pub fn loss_mse(tape: &mut Tape, predicted: &[Var], observed: &[&[f64]]) -> Result<Var> {
    if predicted.len() != observed.len() || predicted.is_empty() {
        return Err(Error::InvalidData(format!(
            "loss needs equal non-empty frame counts, got {} predicted vs {} observed",
            predicted.len(),
            observed.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&p, &o) in predicted.iter().zip(observed) {
        let target = tape.constant(Tensor::vector(o.to_vec()));
        let diff = tape.sub(p, target)?;
        let sq = tape.mul(diff, diff)?;
        let frame_loss = tape.sum(sq);
        total = Some(match total {
            Some(t) => tape.add(t, frame_loss)?,
            None => frame_loss,
        });
    }
    Ok(tape.scale(
        total.expect("non-empty batch"),
        1.0 / predicted.len() as f64,
    ))
}

/// Check the training configuration against a model's parameter list.
pub fn validate_config(
    model: &dyn FlowModel,
    cfg: &TrainingConfig,
    series_len: usize,
) -> Result<()> {
    if cfg.to_learn.is_empty() {
        return Err(Error::InvalidConfig(
            "to_learn must name at least one parameter".into(),
        ));
    }
    let names = model.param_names();
    for name in &cfg.to_learn {
        if !names.contains(&name.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown parameter `{name}` in to_learn (model has {names:?})"
            )));
        }
        if cfg.true_parameters.contains_key(name) {
            return Err(Error::InvalidConfig(format!(
                "parameter `{name}` appears in both to_learn and true_parameters"
            )));
        }
    }
    for name in cfg.true_parameters.keys() {
        if !names.contains(&name.as_str()) {
            return Err(Error::InvalidConfig(format!(
                "unknown parameter `{name}` in true_parameters (model has {names:?})"
            )));
        }
    }
    for name in names {
        let covered = cfg.to_learn.iter().any(|n| n == name)
            || cfg.true_parameters.contains_key(*name)
            || self_default(model, name).is_some();
        if !covered {
            return Err(Error::InvalidConfig(format!(
                "model parameter `{name}` is neither learned nor fixed"
            )));
        }
    }
    if series_len == 0 {
        return Err(Error::InvalidData("observed series is empty".into()));
    }
    if series_len == 1 || cfg.fixed_point {
        if cfg.batch_size != 1 {
            return Err(Error::InvalidConfig(format!(
                "steady-state (fixed-point) data requires batch_size 1, got {}",
                cfg.batch_size
            )));
        }
    } else if cfg.batch_size < 1 || cfg.batch_size >= series_len {
        return Err(Error::InvalidConfig(format!(
            "batch_size {} must leave at least one target frame in a series of length {series_len}",
            cfg.batch_size
        )));
    }
    Ok(())
}

fn self_default(model: &dyn FlowModel, name: &str) -> Option<f64> {
    model.default_fixed(name)
}

/// Resolve every model parameter to a tape value: learned ones as
/// components of the net output, fixed ones as constants (with the
/// training-time forward-noise override applied to `sigma`).
pub fn bind_params(
    tape: &mut Tape,
    output: Var,
    model: &dyn FlowModel,
    cfg: &TrainingConfig,
) -> Result<ParamBinding> {
    let mut map = BTreeMap::new();
    for name in model.param_names() {
        if let Some(pos) = cfg.to_learn.iter().position(|n| n == name) {
            let var = tape.component(output, pos)?;
            map.insert((*name).to_string(), (var, None));
        } else {
            let mut value = cfg
                .true_parameters
                .get(*name)
                .copied()
                .or_else(|| model.default_fixed(name))
                .expect("validated");
            if *name == "sigma" {
                if let Some(noise) = cfg.forward_noise {
                    value = noise;
                }
            }
            let var = tape.scalar_const(value);
            map.insert((*name).to_string(), (var, Some(value)));
        }
    }
    Ok(ParamBinding { map })
}

/// One pass over the observed series: `max(L − B, 1)` gradient steps, one
/// recorded sample each.
pub fn train_epoch(
    net: &mut Net,
    opt: &mut Optimizer,
    model: &dyn FlowModel,
    series: &[Vec<f64>],
    cfg: &TrainingConfig,
    noise_rng: &mut StdRng,
    seed: u64,
    epoch: u32,
) -> Result<Vec<LossPotentialSample>> {
    let l = series.len();
    let fixed_point = l == 1 || cfg.fixed_point;
    let starts: Vec<usize> = if fixed_point {
        (0..l).collect()
    } else {
        (0..l - cfg.batch_size).collect()
    };
    let mut samples = Vec::with_capacity(starts.len());
    for t0 in starts {
        let mut tape = Tape::new();
        let input = Tensor::vector(series[t0].clone());
        let pass = net.forward(&mut tape, &input)?;
        let raw_lambda = tape.data(pass.output).data().to_vec();
        let reported = || {
            let mut lam = raw_lambda.clone();
            model.report(&cfg.to_learn, &mut lam);
            lam
        };
        let diverged = |step: usize| Error::Diverged {
            seed,
            epoch,
            step: step as u32,
            last_lambda: reported(),
        };
        if raw_lambda.iter().any(|x| !x.is_finite()) {
            return Err(diverged(t0));
        }

        let binding = bind_params(&mut tape, pass.output, model, cfg)?;
        let predicted = model.predict_batch(
            &mut tape,
            &series[t0],
            &binding,
            cfg.batch_size,
            t0,
            noise_rng,
        )?;
        for &frame in &predicted {
            if !tape.data(frame).is_finite() {
                return Err(diverged(t0));
            }
        }
        let observed: Vec<&[f64]> = if fixed_point {
            vec![series[t0].as_slice()]
        } else {
            series[t0 + 1..=t0 + cfg.batch_size]
                .iter()
                .map(|f| f.as_slice())
                .collect()
        };
        let j = loss_mse(&mut tape, &predicted, &observed)?;
        let j_value = tape.data(j).item();
        if !j_value.is_finite() {
            return Err(diverged(t0));
        }

        tape.backward(j)?;
        let grads = net.collect_grads(&tape, &pass)?;
        let mut params = net.parameters_mut();
        opt.step(&mut params, &grads)?;

        samples.push(LossPotentialSample {
            seed,
            epoch,
            step: t0 as u32,
            lambda: reported(),
            loss: j_value,
        });
    }
    Ok(samples)
}

/// Train one seed end to end.
pub fn train_seed(
    spec: &NetSpec,
    model: &dyn FlowModel,
    series: &[Vec<f64>],
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<Vec<LossPotentialSample>> {
    validate_config(model, cfg, series.len())?;
    let mut net = Net::init(spec.clone(), seed)?;
    let mut opt = Optimizer::for_net(&net);
    let mut noise_rng = StdRng::seed_from_u64(seed ^ NOISE_STREAM);
    let mut samples = Vec::new();
    for epoch in 0..cfg.epochs {
        samples.extend(train_epoch(
            &mut net,
            &mut opt,
            model,
            series,
            cfg,
            &mut noise_rng,
            seed,
            epoch,
        )?);
    }
    Ok(samples)
}

/// Merged multi-seed result. Failed seeds are recorded and do not affect
/// the others.
#[derive(Debug, Clone, Default)]
pub struct RunOutcome {
    pub samples: Vec<LossPotentialSample>,
    pub failures: Vec<(u64, String)>,
}

impl RunOutcome {
    pub fn lambda_column(&self, index: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s.lambda[index]).collect()
    }
}

/// Independent training runs for every seed, in parallel, merged in seed
/// order. Deterministic per seed.
pub fn run_multiseed(
    spec: &NetSpec,
    model: &dyn FlowModel,
    series: &[Vec<f64>],
    cfg: &TrainingConfig,
    seeds: &[u64],
) -> Result<RunOutcome> {
    if seeds.is_empty() {
        return Err(Error::InvalidConfig("need at least one seed".into()));
    }
    validate_config(model, cfg, series.len())?;
    let per_seed: Vec<(u64, Result<Vec<LossPotentialSample>>)> = seeds
        .par_iter()
        .map(|&seed| (seed, train_seed(spec, model, series, cfg, seed)))
        .collect();
    let mut outcome = RunOutcome::default();
    for (seed, result) in per_seed {
        match result {
            Ok(samples) => outcome.samples.extend(samples),
            Err(e) => outcome.failures.push((seed, e.to_string())),
        }
    }
    if outcome.samples.is_empty() {
        let (seed, msg) = outcome.failures.first().expect("at least one failure");
        return Err(Error::InvalidData(format!(
            "every seed failed; first (seed {seed}): {msg}"
        )));
    }
    Ok(outcome)
}

/// Pointwise forecast statistics and the expected mean squared prediction
/// error of the calibrated model against the observation.
#[derive(Debug, Clone)]
pub struct Forecast {
    /// Pointwise mean trajectory over replicas (length = compared frames).
    pub mean: Vec<Vec<f64>>,
    /// Pointwise standard deviation over replicas.
    pub std: Vec<Vec<f64>>,
    /// Mean over replicas of the per-element mean squared prediction error.
    pub mspe: f64,
    pub mspe_std: f64,
}

/// Run the (noisy) forward model `replicas` times at a fixed calibrated
/// parameter set. Single-frame observations are scored one solver step from
/// the frame; series are replayed from their first frame.
pub fn calibrated_forecast(
    model: &dyn FlowModel,
    series: &[Vec<f64>],
    params: &BTreeMap<String, f64>,
    replicas: usize,
    seed: u64,
) -> Result<Forecast> {
    if series.is_empty() || replicas == 0 {
        return Err(Error::InvalidData(
            "forecast needs observations and at least one replica".into(),
        ));
    }
    let (n_frames, targets): (usize, Vec<&[f64]>) = if series.len() == 1 {
        (1, vec![series[0].as_slice()])
    } else {
        (
            series.len() - 1,
            series[1..].iter().map(|f| f.as_slice()).collect(),
        )
    };
    let dim = series[0].len();
    let mut mean = vec![vec![0.0; dim]; n_frames];
    let mut m2 = vec![vec![0.0; dim]; n_frames];
    let mut mspe_values = Vec::with_capacity(replicas);
    for r in 0..replicas {
        let mut rng = StdRng::seed_from_u64(seed.wrapping_add(r as u64));
        let frames = model.simulate(&series[0], params, n_frames, 0, &mut rng)?;
        let mut err_sum = 0.0;
        for (b, frame) in frames.iter().enumerate() {
            for (c, &x) in frame.iter().enumerate() {
                let delta = x - mean[b][c];
                mean[b][c] += delta / (r as f64 + 1.0);
                m2[b][c] += delta * (x - mean[b][c]);
                let e = x - targets[b][c];
                err_sum += e * e;
            }
        }
        mspe_values.push(err_sum / (n_frames * dim) as f64);
    }
    let std = m2
        .iter()
        .map(|row| row.iter().map(|&v| (v / replicas as f64).sqrt()).collect())
        .collect();
    let mspe = mspe_values.iter().sum::<f64>() / replicas as f64;
    let var = mspe_values
        .iter()
        .map(|&x| (x - mspe) * (x - mspe))
        .sum::<f64>()
        / replicas as f64;
    Ok(Forecast {
        mean,
        std,
        mspe,
        mspe_std: var.sqrt(),
    })
}

// ---------------------------------------------------------------------------
// Model adapters
// ---------------------------------------------------------------------------

/// Reduced SIR solver as a trainable forward model. Parameters, in canonical
/// order: `p_infect` (β), `t_infectious` (τ, learned on the γ-scaled
/// internal axis), `sigma`.
pub struct SirModel {
    pub flow: SirFlowParams,
}

impl SirModel {
    pub fn new(flow: SirFlowParams) -> Self {
        SirModel { flow }
    }
}

impl FlowModel for SirModel {
    fn state_dim(&self) -> usize {
        3
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["p_infect", "t_infectious", "sigma"]
    }

    fn predict_batch(
        &self,
        tape: &mut Tape,
        start: &[f64],
        params: &ParamBinding,
        batch: usize,
        t_start: usize,
        rng: &mut StdRng,
    ) -> Result<Vec<Var>> {
        let beta = params.var("p_infect")?;
        let tau = params.var("t_infectious")?;
        let sigma = params.var("sigma")?;
        let mut state = SirStateVars::from_frame(tape, start)?;
        let mut frames = Vec::with_capacity(batch);
        for b in 0..batch {
            let x = self.flow.sample_noise(rng);
            state = sir_flow_step(tape, state, beta, tau, sigma, &self.flow, t_start + b, x)?;
            frames.push(tape.stack(&[state.s, state.i, state.r])?);
        }
        Ok(frames)
    }

    fn report(&self, to_learn: &[String], raw: &mut [f64]) {
        if let Some(pos) = to_learn.iter().position(|n| n == "t_infectious") {
            raw[pos] *= self.flow.gamma;
        }
    }

    fn simulate(
        &self,
        start: &[f64],
        params: &BTreeMap<String, f64>,
        n_frames: usize,
        t_start: usize,
        rng: &mut StdRng,
    ) -> Result<Vec<Vec<f64>>> {
        let get = |name: &str| -> Result<f64> {
            params
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidConfig(format!("missing parameter `{name}`")))
        };
        // Physical recovery time back onto the solver's internal axis.
        let beta = get("p_infect")?;
        let tau_internal = get("t_infectious")? / self.flow.gamma;
        let sigma = get("sigma")?;
        let mut state = [start[0], start[1], start[2]];
        let mut out = Vec::with_capacity(n_frames);
        for b in 0..n_frames {
            let x = self.flow.sample_noise(rng);
            state =
                sir_flow_step_plain(state, beta, tau_internal, sigma, &self.flow, t_start + b, x);
            out.push(state.to_vec());
        }
        Ok(out)
    }
}

/// Harris-Wilson dynamics as a trainable forward model. Parameters, in
/// canonical order: `alpha`, `beta`, `kappa`, `sigma`, `epsilon` (the
/// latter defaults to 1 and is never learnable at steady state).
pub struct HwModel {
    pub system: HwSystem,
}

impl HwModel {
    pub fn new(system: HwSystem) -> Self {
        HwModel { system }
    }

    fn draw_noise(&self, rng: &mut StdRng, active: bool) -> Vec<f64> {
        use rand_distr::Distribution;
        if active {
            let normal = rand_distr::Normal::new(0.0, self.system.dt.sqrt()).expect("positive dt");
            (0..self.system.n_dest())
                .map(|_| normal.sample(rng))
                .collect()
        } else {
            vec![0.0; self.system.n_dest()]
        }
    }
}

impl FlowModel for HwModel {
    fn state_dim(&self) -> usize {
        self.system.n_dest()
    }

    fn param_names(&self) -> &'static [&'static str] {
        &["alpha", "beta", "kappa", "sigma", "epsilon"]
    }

    fn default_fixed(&self, name: &str) -> Option<f64> {
        match name {
            "epsilon" => Some(1.0),
            _ => None,
        }
    }

    fn predict_batch(
        &self,
        tape: &mut Tape,
        start: &[f64],
        params: &ParamBinding,
        batch: usize,
        _t_start: usize,
        rng: &mut StdRng,
    ) -> Result<Vec<Var>> {
        let vars = HwParamVars {
            alpha: params.var("alpha")?,
            beta: params.var("beta")?,
            kappa: params.var("kappa")?,
            sigma: params.var("sigma")?,
            epsilon: params.fixed("epsilon").unwrap_or(1.0),
        };
        let noise_active = params.fixed("sigma") != Some(0.0);
        let sys_vars = self.system.on_tape(tape);
        let mut w = tape.constant(Tensor::vector(start.to_vec()));
        let mut frames = Vec::with_capacity(batch);
        for _ in 0..batch {
            let db = self.draw_noise(rng, noise_active);
            w = self.system.step_tape(tape, &sys_vars, w, &vars, &db)?;
            frames.push(w);
        }
        Ok(frames)
    }

    fn simulate(
        &self,
        start: &[f64],
        params: &BTreeMap<String, f64>,
        n_frames: usize,
        _t_start: usize,
        rng: &mut StdRng,
    ) -> Result<Vec<Vec<f64>>> {
        let get = |name: &str, default: Option<f64>| -> Result<f64> {
            params
                .get(name)
                .copied()
                .or(default)
                .ok_or_else(|| Error::InvalidConfig(format!("missing parameter `{name}`")))
        };
        let pars = HwParams {
            alpha: get("alpha", None)?,
            beta: get("beta", None)?,
            kappa: get("kappa", None)?,
            sigma: get("sigma", Some(0.0))?,
            epsilon: get("epsilon", Some(1.0))?,
        };
        let mut w = start.to_vec();
        let mut out = Vec::with_capacity(n_frames);
        for _ in 0..n_frames {
            w = self.system.step(&w, &pars, rng)?;
            out.push(w.clone());
        }
        Ok(out)
    }
}
