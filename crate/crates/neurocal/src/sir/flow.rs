//! Reduced three-compartment SIR solver used in the training forward pass:
//! explicit Euler steps of the stochastic system with learnable infection
//! rate β̂, recovery time τ̂ and noise amplitude σ̂, a smooth recovery
//! switch in place of the hard 1/τ onset, and a clamp keeping densities
//! non-negative.
//!
//! The recovery time is learned on an internal scale: the solver sees
//! `γ·τ̂` so that all three estimates are of comparable magnitude, and τ̂
//! is scaled back by γ when estimates are reported.

use crate::error::{Error, Result};
use crate::grad::{Tape, Var};
use crate::tensor::{sigmoid, Tensor};
use rand::rngs::StdRng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Fixed constants of the reduced solver.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SirFlowParams {
    /// Scaling applied to the learned recovery time.
    pub gamma: f64,
    /// Sharpness of the smooth recovery switch.
    pub k: f64,
    /// Variance of the per-step noise draw X.
    pub noise_variance: f64,
}

impl Default for SirFlowParams {
    fn default() -> Self {
        SirFlowParams {
            gamma: 10.0,
            k: 1000.0,
            noise_variance: 0.1,
        }
    }
}

impl SirFlowParams {
    pub fn noise_std(&self) -> f64 {
        self.noise_variance.sqrt()
    }

    pub fn sample_noise(&self, rng: &mut StdRng) -> f64 {
        Normal::new(0.0, self.noise_std())
            .expect("valid std")
            .sample(rng)
    }
}

/// Smooth step `f(s, t) = (1/s)·sigmoid(k·t/s)`: approximately 0 for t < 0
/// and 1/s for t ≥ 1, so recovery only begins once the epidemic has run for
/// a step.
pub fn smooth_step(s: f64, t: f64, k: f64) -> Result<f64> {
    if s == 0.0 {
        return Err(Error::DivisionByZero {
            context: "smooth_step with s = 0",
        });
    }
    Ok(sigmoid(k * t / s) / s)
}

/// Rescale an internal recovery-time estimate back to its physical
/// dimension.
pub fn rescale_tau(tau_internal: f64, gamma: f64) -> f64 {
    gamma * tau_internal
}

/// Differentiable state of the reduced solver.
#[derive(Debug, Clone, Copy)]
pub struct SirStateVars {
    pub s: Var,
    pub i: Var,
    pub r: Var,
}

impl SirStateVars {
    pub fn from_frame(tape: &mut Tape, frame: &[f64]) -> Result<SirStateVars> {
        if frame.len() != 3 {
            return Err(Error::InvalidData(format!(
                "SIR frame must have 3 components, got {}",
                frame.len()
            )));
        }
        Ok(SirStateVars {
            s: tape.constant(Tensor::scalar(frame[0])),
            i: tape.constant(Tensor::scalar(frame[1])),
            r: tape.constant(Tensor::scalar(frame[2])),
        })
    }

    pub fn values(&self, tape: &Tape) -> [f64; 3] {
        [
            tape.data(self.s).item(),
            tape.data(self.i).item(),
            tape.data(self.r).item(),
        ]
    }
}

/// One Euler step of the reduced system on the tape:
///
/// dS = −β̂·S·I − ŵ·I,  dI = β̂·S·I + ŵ·I − f(γτ̂, t)·I,  dR = f(γτ̂, t)·I
///
/// with ŵ = σ̂·X and X a frozen noise draw. The new state is clamped at
/// zero so densities cannot become negative; gradients flow to β̂, τ̂, σ̂.
pub fn sir_flow_step(
    tape: &mut Tape,
    state: SirStateVars,
    beta: Var,
    tau_internal: Var,
    sigma: Var,
    pars: &SirFlowParams,
    t: usize,
    x_draw: f64,
) -> Result<SirStateVars> {
    let si = tape.mul(state.s, state.i)?;
    let infection = tape.mul(beta, si)?;
    let w_hat = tape.scale(sigma, x_draw);
    let w_term = tape.mul(w_hat, state.i)?;
    // a = β̂·S·I + ŵ·I is shared between dS and dI so the noiseless budget
    // cancels exactly.
    let a = tape.add(infection, w_term)?;

    let s_scaled = tape.scale(tau_internal, pars.gamma);
    let kt = tape.scalar_const(pars.k * t as f64);
    let ratio = tape.div(kt, s_scaled)?;
    let sg = tape.sigmoid(ratio);
    let f = tape.div(sg, s_scaled)?;
    let recovery = tape.mul(f, state.i)?;

    let ds = tape.scale(a, -1.0);
    let di = tape.sub(a, recovery)?;

    let s_next = tape.add(state.s, ds)?;
    let i_next = tape.add(state.i, di)?;
    let r_next = tape.add(state.r, recovery)?;
    Ok(SirStateVars {
        s: tape.relu(s_next),
        i: tape.relu(i_next),
        r: tape.relu(r_next),
    })
}

/// Tape-free mirror of [`sir_flow_step`] for calibrated forecasting and
/// finite-difference oracles.
pub fn sir_flow_step_plain(
    state: [f64; 3],
    beta: f64,
    tau_internal: f64,
    sigma: f64,
    pars: &SirFlowParams,
    t: usize,
    x_draw: f64,
) -> [f64; 3] {
    let [s, i, r] = state;
    let a = beta * s * i + sigma * x_draw * i;
    let scaled = pars.gamma * tau_internal;
    let f = sigmoid(pars.k * t as f64 / scaled) / scaled;
    let recovery = f * i;
    [
        (s - a).max(0.0),
        (i + (a - recovery)).max(0.0),
        (r + recovery).max(0.0),
    ]
}
