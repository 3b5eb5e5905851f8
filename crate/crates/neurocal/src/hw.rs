//! Harris-Wilson model of economic activity on a complete bipartite
//! origin-destination network: demand computation in matrix form, coupled
//! logistic dynamics with Stratonovich multiplicative noise (realized by a
//! Heun predictor-corrector), steady-state detection, the inequality metric
//! ν, and dataset generation.
//!
//! Destination sizes are floored at a tiny positive value after every step:
//! multiplicative noise cannot cross zero in the continuum, but the
//! discretization can, and fractional powers need a positive base.

use crate::error::{Error, Result};
use crate::grad::{Tape, Var};
use crate::tensor::{Shape, Tensor};
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Positivity floor for destination sizes.
pub const W_FLOOR: f64 = 1e-12;

/// Model parameters of the Harris-Wilson dynamics.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HwParams {
    /// Relative importance of destination size.
    pub alpha: f64,
    /// Relative importance of travel convenience.
    pub beta: f64,
    /// Cost per unit floor space.
    pub kappa: f64,
    /// Noise amplitude of the multiplicative term.
    pub sigma: f64,
    /// Responsiveness; fixed to 1 unless explicitly overridden, since the
    /// steady state does not depend on it.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_epsilon() -> f64 {
    1.0
}

/// Static description of one network economy: origin sizes, convenience
/// matrix and the solver step size.
#[derive(Debug, Clone)]
pub struct HwSystem {
    /// Origin-zone sizes, length N, strictly positive.
    pub origin: Vec<f64>,
    /// Convenience matrix, N×M, entries in (0, 1].
    pub conv: Tensor,
    /// Solver step size.
    pub dt: f64,
}

/// Observed destination-size frames used for training, L×M.
#[derive(Debug, Clone, PartialEq)]
pub struct HwObservation {
    pub frames: Vec<Vec<f64>>,
}

impl HwSystem {
    pub fn new(origin: Vec<f64>, conv: Tensor, dt: f64) -> Result<Self> {
        let Shape::Matrix { rows, cols } = conv.shape() else {
            return Err(Error::BadShape {
                op: "convenience matrix",
                shape: conv.shape(),
            });
        };
        if rows != origin.len() {
            return Err(Error::InvalidData(format!(
                "network has {rows} rows but there are {} origin zones",
                origin.len()
            )));
        }
        if cols == 0 {
            return Err(Error::InvalidData(
                "network needs at least one destination".into(),
            ));
        }
        if let Some(i) = origin.iter().position(|&o| o <= 0.0) {
            return Err(Error::InvalidData(format!(
                "origin size {} at row {i} must be strictly positive",
                origin[i]
            )));
        }
        if let Some(i) = conv.data().iter().position(|&c| !(c > 0.0 && c <= 1.0)) {
            return Err(Error::InvalidData(format!(
                "convenience entry {} at flat index {i} outside (0, 1]",
                conv.data()[i]
            )));
        }
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::InvalidData(format!(
                "step size dt = {dt} must be positive"
            )));
        }
        Ok(HwSystem { origin, conv, dt })
    }

    pub fn n_origin(&self) -> usize {
        self.origin.len()
    }

    pub fn n_dest(&self) -> usize {
        match self.conv.shape() {
            Shape::Matrix { cols, .. } => cols,
            _ => unreachable!("validated at construction"),
        }
    }

    /// Cumulative demand per destination zone in matrix form:
    /// `D = W^α ⊙ [(C^β)ᵀ (O ⊙ Z)]` with row normalizers `Z⁻¹ = C^β W^α`.
    pub fn demand(&self, w: &[f64], alpha: f64, beta: f64) -> Result<Vec<f64>> {
        if w.len() != self.n_dest() {
            return Err(Error::ShapeMismatch {
                op: "demand",
                lhs: self.conv.shape(),
                rhs: Shape::Vector(w.len()),
            });
        }
        let w_t = Tensor::vector(w.to_vec());
        let w_alpha = w_t.powf_checked(alpha)?;
        let c_beta = self.conv.powf_checked(beta)?;
        let z_inv = c_beta.matvec(&w_alpha);
        let oz = Tensor::vector(
            self.origin
                .iter()
                .zip(z_inv.data())
                .map(|(&o, &z)| o / z)
                .collect(),
        );
        let flow = c_beta.matvec_t(&oz);
        Ok(w_alpha.zip(&flow, |a, f| a * f).data().to_vec())
    }

    /// Drift rate `ε·W ⊙ (D(W) − κW)` (independent of dt).
    pub fn drift(&self, w: &[f64], pars: &HwParams) -> Result<Vec<f64>> {
        let demand = self.demand(w, pars.alpha, pars.beta)?;
        Ok(w.iter()
            .zip(&demand)
            .map(|(&wj, &dj)| pars.epsilon * wj * (dj - pars.kappa * wj))
            .collect())
    }

    /// One Stratonovich-Heun step with explicit noise increments
    /// (`db[j] ~ N(0, dt)`). Predictor and corrector are floored at
    /// [`W_FLOOR`].
    pub fn step_with_noise(&self, w: &[f64], pars: &HwParams, db: &[f64]) -> Result<Vec<f64>> {
        let dt = self.dt;
        let a1 = self.drift(w, pars)?;
        let predictor: Vec<f64> = w
            .iter()
            .enumerate()
            .map(|(j, &wj)| (wj + a1[j] * dt + pars.sigma * wj * db[j]).max(W_FLOOR))
            .collect();
        let a2 = self.drift(&predictor, pars)?;
        Ok(w.iter()
            .enumerate()
            .map(|(j, &wj)| {
                let drift = 0.5 * (a1[j] + a2[j]) * dt;
                let noise = 0.5 * pars.sigma * (wj + predictor[j]) * db[j];
                (wj + drift + noise).max(W_FLOOR)
            })
            .collect())
    }

    /// One step with noise drawn from `rng`; noiseless systems draw nothing.
    pub fn step(&self, w: &[f64], pars: &HwParams, rng: &mut StdRng) -> Result<Vec<f64>> {
        let db = if pars.sigma == 0.0 {
            vec![0.0; w.len()]
        } else {
            let normal = Normal::new(0.0, self.dt.sqrt()).expect("positive dt");
            (0..w.len()).map(|_| normal.sample(rng)).collect()
        };
        self.step_with_noise(w, pars, &db)
    }

    /// Iterate the noiseless dynamics until the drift rate satisfies
    /// `sup_j |ε·W_j(D_j − κW_j)| < tol`. Returns the converged sizes and
    /// the number of steps taken.
    pub fn steady_state(
        &self,
        w0: &[f64],
        pars: &HwParams,
        tol: f64,
        max_iters: usize,
    ) -> Result<(Vec<f64>, usize)> {
        let pars = HwParams {
            sigma: 0.0,
            ..*pars
        };
        let mut w = w0.to_vec();
        let mut residual = f64::INFINITY;
        for iter in 0..=max_iters {
            let drift = self.drift(&w, &pars)?;
            residual = drift.iter().fold(0.0_f64, |m, d| m.max(d.abs()));
            if residual < tol {
                return Ok((w, iter));
            }
            w = w
                .iter()
                .zip(&drift)
                .map(|(&wj, &dj)| (wj + dj * self.dt).max(W_FLOOR))
                .collect();
        }
        Err(Error::NoConvergence {
            iterations: max_iters,
            residual,
        })
    }

    /// Run a fixed number of noiseless Euler steps without a convergence
    /// check. Monopolising regimes only relax algebraically; a step budget
    /// still yields a usable snapshot for phase diagrams.
    pub fn relax(&self, w0: &[f64], pars: &HwParams, steps: usize) -> Result<Vec<f64>> {
        let pars = HwParams {
            sigma: 0.0,
            ..*pars
        };
        let mut w = w0.to_vec();
        for _ in 0..steps {
            let drift = self.drift(&w, &pars)?;
            w = w
                .iter()
                .zip(&drift)
                .map(|(&wj, &dj)| (wj + dj * self.dt).max(W_FLOOR))
                .collect();
        }
        Ok(w)
    }

    /// Default initial condition: the implied total size split equally.
    pub fn default_w0(&self, pars: &HwParams) -> Vec<f64> {
        let total = self.origin.iter().sum::<f64>() / pars.kappa;
        vec![total / self.n_dest() as f64; self.n_dest()]
    }

    /// Record the system constants on a tape.
    pub fn on_tape(&self, tape: &mut Tape) -> HwTapeSystem {
        HwTapeSystem {
            c: tape.constant(self.conv.clone()),
            o: tape.constant(Tensor::vector(self.origin.clone())),
        }
    }

    /// Differentiable demand, mirroring [`HwSystem::demand`].
    pub fn demand_tape(
        &self,
        tape: &mut Tape,
        sys: &HwTapeSystem,
        w: Var,
        alpha: Var,
        beta: Var,
    ) -> Result<Var> {
        let w_alpha = tape.pow(w, alpha)?;
        let c_beta = tape.pow(sys.c, beta)?;
        let z_inv = tape.matvec(c_beta, w_alpha)?;
        let oz = tape.div(sys.o, z_inv)?;
        let ct = tape.transpose(c_beta)?;
        let flow = tape.matvec(ct, oz)?;
        tape.mul(w_alpha, flow)
    }

    /// Differentiable Heun step, mirroring [`HwSystem::step_with_noise`].
    /// Noise increments are frozen constants; gradients flow to
    /// (α, β, κ, σ).
    #[allow(clippy::too_many_arguments)]
    pub fn step_tape(
        &self,
        tape: &mut Tape,
        sys: &HwTapeSystem,
        w: Var,
        pars: &HwParamVars,
        db: &[f64],
    ) -> Result<Var> {
        let dt = self.dt;
        let drift = |tape: &mut Tape, w: Var, this: &Self| -> Result<Var> {
            let d = this.demand_tape(tape, sys, w, pars.alpha, pars.beta)?;
            let kw = tape.mul(pars.kappa, w)?;
            let net_capacity = tape.sub(d, kw)?;
            let raw = tape.mul(w, net_capacity)?;
            Ok(tape.scale(raw, pars.epsilon))
        };
        let db_var = tape.constant(Tensor::vector(db.to_vec()));

        let a1 = drift(tape, w, self)?;
        let b1 = tape.mul(pars.sigma, w)?;
        let a1_dt = tape.scale(a1, dt);
        let n1 = tape.mul(b1, db_var)?;
        let pre = tape.add(w, a1_dt)?;
        let pre = tape.add(pre, n1)?;
        let predictor = tape.clamp(pre, W_FLOOR, f64::INFINITY);

        let a2 = drift(tape, predictor, self)?;
        let b2 = tape.mul(pars.sigma, predictor)?;
        let a_sum = tape.add(a1, a2)?;
        let drift_term = tape.scale(a_sum, 0.5 * dt);
        let b_sum = tape.add(b1, b2)?;
        let b_half = tape.scale(b_sum, 0.5);
        let noise_term = tape.mul(b_half, db_var)?;
        let out = tape.add(w, drift_term)?;
        let out = tape.add(out, noise_term)?;
        Ok(tape.clamp(out, W_FLOOR, f64::INFINITY))
    }
}

/// System constants recorded once per tape.
#[derive(Debug, Clone, Copy)]
pub struct HwTapeSystem {
    pub c: Var,
    pub o: Var,
}

/// Parameter handles of a differentiable Harris-Wilson pass: learned ones
/// are net outputs, fixed ones are tape constants.
#[derive(Debug, Clone, Copy)]
pub struct HwParamVars {
    pub alpha: Var,
    pub beta: Var,
    pub kappa: Var,
    pub sigma: Var,
    pub epsilon: f64,
}

/// Market-concentration measure `ν = (max W − min W) / ΣW ∈ [0, 1]`.
/// ν = 1 is a completely monopolised market, ν = 0 perfect equality; both
/// regimes are unlearnable.
pub fn inequality_nu(w: &[f64]) -> Result<f64> {
    if w.len() < 2 {
        return Err(Error::InvalidData(format!(
            "inequality needs at least two zones, got {}",
            w.len()
        )));
    }
    let max = w.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let min = w.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let total: f64 = w.iter().sum();
    Ok((max - min) / total)
}

/// The unique cost parameter solving the steady state: `κ = ΣO / ΣW`.
pub fn kappa_truth(origin: &[f64], dest: &[f64]) -> f64 {
    origin.iter().sum::<f64>() / dest.iter().sum::<f64>()
}

/// Margin used to flag effectively monopolised / perfectly equal datasets.
const NU_MARGIN: f64 = 1e-3;

/// Generate an observation: converge to the noiseless steady state, then
/// (for positive data noise) record `n_frames` consecutive noisy frames.
/// Datasets landing at ν ∈ {0, 1} are rejected as unlearnable.
pub fn generate_hw_dataset(
    system: &HwSystem,
    truth: &HwParams,
    sigma_data: f64,
    n_frames: usize,
    seed: u64,
) -> Result<HwObservation> {
    let (w_star, _) = system.steady_state(&system.default_w0(truth), truth, 1e-8, 200_000)?;
    check_learnable(&w_star)?;
    if sigma_data == 0.0 {
        return Ok(HwObservation {
            frames: vec![w_star; n_frames.max(1)],
        });
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let noisy = HwParams {
        sigma: sigma_data,
        ..*truth
    };
    let mut frames = Vec::with_capacity(n_frames);
    let mut w = w_star;
    for _ in 0..n_frames.max(1) {
        w = system.step(&w, &noisy, &mut rng)?;
        frames.push(w.clone());
    }
    check_learnable(frames.last().expect("at least one frame"))?;
    Ok(HwObservation { frames })
}

fn check_learnable(w: &[f64]) -> Result<()> {
    let nu = inequality_nu(w)?;
    if !(NU_MARGIN..=1.0 - NU_MARGIN).contains(&nu) {
        return Err(Error::InvalidData(format!(
            "dataset has inequality ν = {nu:.9}; parameters cannot be learned for ν in {{0, 1}}"
        )));
    }
    Ok(())
}

/// Synthetic desk-scale network: convenience entries i.i.d. uniform on
/// (0.1, 1], origin sizes i.i.d. uniform on (0.5, 1.5].
pub fn synthetic_system(n_origin: usize, n_dest: usize, dt: f64, seed: u64) -> HwSystem {
    let mut rng = StdRng::seed_from_u64(seed);
    let conv: Vec<f64> = (0..n_origin * n_dest)
        .map(|_| 1.0 - rng.random_range(0.0..0.9))
        .collect();
    let origin: Vec<f64> = (0..n_origin)
        .map(|_| 1.5 - rng.random_range(0.0..1.0))
        .collect();
    HwSystem::new(origin, Tensor::matrix(n_origin, n_dest, conv), dt)
        .expect("generated system is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_params(alpha: f64, beta: f64, kappa: f64) -> HwParams {
        HwParams {
            alpha,
            beta,
            kappa,
            sigma: 0.0,
            epsilon: 1.0,
        }
    }

    /// Naive nested-loop oracle: D_j = Σ_i W_j^α c_ij^β O_i / Σ_k W_k^α c_ik^β.
    fn demand_loops(sys: &HwSystem, w: &[f64], alpha: f64, beta: f64) -> Vec<f64> {
        let (n, m) = (sys.n_origin(), sys.n_dest());
        let c = sys.conv.data();
        let mut d = vec![0.0; m];
        for i in 0..n {
            let norm: f64 = (0..m)
                .map(|k| w[k].powf(alpha) * c[i * m + k].powf(beta))
                .sum();
            for (j, dj) in d.iter_mut().enumerate() {
                *dj += w[j].powf(alpha) * c[i * m + j].powf(beta) * sys.origin[i] / norm;
            }
        }
        d
    }

    #[test]
    fn trivial_demand_collapses_to_size_shares() {
        // α = 1, β = 0: D_j = W_j · ΣO / ΣW for any convenience matrix
        let sys = synthetic_system(6, 4, 0.01, 1);
        let w = vec![0.5, 1.5, 2.0, 1.0];
        let d = sys.demand(&w, 1.0, 0.0).unwrap();
        let scale = sys.origin.iter().sum::<f64>() / w.iter().sum::<f64>();
        for (dj, wj) in d.iter().zip(&w) {
            assert!((dj - wj * scale).abs() < 1e-12, "{dj} vs {}", wj * scale);
        }
    }

    #[test]
    fn single_zone_receives_all_demand() {
        let sys = HwSystem::new(vec![3.5], Tensor::matrix(1, 1, vec![1.0]), 0.01).unwrap();
        let d = sys.demand(&[2.0], 1.7, 0.9).unwrap();
        assert!((d[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn matrix_demand_matches_loop_oracle() {
        let sys = synthetic_system(2, 2, 0.01, 3);
        let w = vec![1.3, 0.7];
        let d = sys.demand(&w, 1.2, 4.0).unwrap();
        let oracle = demand_loops(&sys, &w, 1.2, 4.0);
        for (a, b) in d.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }

        let mut rng = StdRng::seed_from_u64(17);
        for trial in 0..20 {
            let (n, m) = (rng.random_range(2..12), rng.random_range(2..7));
            let sys = synthetic_system(n, m, 0.01, 100 + trial);
            let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..3.0)).collect();
            let (alpha, beta) = (rng.random_range(0.1..2.0), rng.random_range(0.0..5.0));
            let d = sys.demand(&w, alpha, beta).unwrap();
            let oracle = demand_loops(&sys, &w, alpha, beta);
            for (a, b) in d.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12, "trial {trial}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn demand_conserves_total_origin_mass() {
        let sys = synthetic_system(9, 5, 0.01, 8);
        let w = vec![1.0, 2.0, 0.4, 0.9, 1.6];
        let d = sys.demand(&w, 1.4, 2.5).unwrap();
        let total_o: f64 = sys.origin.iter().sum();
        assert!((d.iter().sum::<f64>() - total_o).abs() < 1e-10);
    }

    #[test]
    fn demand_rejects_non_positive_sizes() {
        let sys = synthetic_system(3, 2, 0.01, 5);
        assert!(sys.demand(&[1.0, 0.0], 1.2, 2.0).is_err());
        assert!(sys.demand(&[1.0, -0.5], 1.2, 2.0).is_err());
    }

    #[test]
    fn fixed_point_is_preserved_by_noiseless_step() {
        let sys = synthetic_system(5, 3, 0.01, 11);
        let pars = toy_params(0.7, 1.2, 1.5);
        let (w_star, _) = sys
            .steady_state(&sys.default_w0(&pars), &pars, 1e-10, 100_000)
            .unwrap();
        let next = sys.step_with_noise(&w_star, &pars, &vec![0.0; 3]).unwrap();
        for (a, b) in next.iter().zip(&w_star) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn trivial_solution_drift_vanishes_for_any_sizes() {
        let sys = synthetic_system(10, 6, 0.01, 4);
        let kappa = kappa_truth(&sys.origin, &[1.0; 6]);
        let pars = toy_params(1.0, 0.0, kappa);
        let drift = sys.drift(&[1.0; 6], &pars).unwrap();
        for d in &drift {
            assert!(d.abs() < 1e-12, "drift {d}");
        }

        let mut rng = StdRng::seed_from_u64(23);
        for _ in 0..10 {
            let w: Vec<f64> = (0..6).map(|_| rng.random_range(0.05..4.0)).collect();
            let pars = toy_params(1.0, 0.0, kappa_truth(&sys.origin, &w));
            let drift = sys.drift(&w, &pars).unwrap();
            for d in &drift {
                assert!(d.abs() < 1e-12, "drift {d}");
            }
        }
    }

    #[test]
    fn heun_step_matches_scalar_loop_in_euler_limit() {
        // dt → 0: Heun ≈ Euler; compare one dt = 1e-3 step against a
        // per-zone scalar computation.
        let sys = {
            let mut s = synthetic_system(2, 2, 1e-3, 42);
            s.dt = 1e-3;
            s
        };
        let pars = toy_params(1.2, 4.0, 2.0);
        let w = vec![0.8, 1.1];
        let stepped = sys.step_with_noise(&w, &pars, &[0.0, 0.0]).unwrap();
        let d = demand_loops(&sys, &w, 1.2, 4.0);
        for j in 0..2 {
            let euler = w[j] + w[j] * (d[j] - 2.0 * w[j]) * 1e-3;
            assert!(
                (stepped[j] - euler).abs() < 1e-6,
                "{} vs {euler}",
                stepped[j]
            );
        }
    }

    #[test]
    fn steady_state_criteria() {
        let sys = synthetic_system(8, 4, 0.01, 7);
        let pars = toy_params(0.7, 1.2, 1.5);
        let tol = 1e-8;
        let (w_star, iters) = sys
            .steady_state(&sys.default_w0(&pars), &pars, tol, 100_000)
            .unwrap();
        assert!(iters > 0);
        let demand = sys.demand(&w_star, pars.alpha, pars.beta).unwrap();
        let residual = w_star
            .iter()
            .zip(&demand)
            .map(|(&w, &d)| (pars.kappa * w - d).abs())
            .fold(0.0_f64, f64::max);
        assert!(residual < 10.0 * tol, "fixed-point residual {residual}");

        // Restarting from the converged point finishes immediately.
        let (_, iters2) = sys.steady_state(&w_star, &pars, tol, 100).unwrap();
        assert!(iters2 <= 1, "already converged, took {iters2}");
    }

    #[test]
    fn steady_state_reports_nonconvergence() {
        let sys = synthetic_system(4, 3, 0.01, 2);
        let pars = toy_params(1.2, 4.0, 2.0);
        let err = sys
            .steady_state(&sys.default_w0(&pars), &pars, 1e-12, 3)
            .unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 3, .. }));
    }

    #[test]
    fn monopolised_market_under_high_alpha_low_beta() {
        // Dying zones decay algebraically, so this regime needs the larger
        // step to settle.
        let sys = synthetic_system(10, 5, 0.1, 19);
        let pars = toy_params(2.0, 0.5, 2.0);
        let (w_star, _) = sys
            .steady_state(&sys.default_w0(&pars), &pars, 1e-8, 200_000)
            .unwrap();
        let nu = inequality_nu(&w_star).unwrap();
        assert!(nu > 0.99, "super-centre should dominate, ν = {nu}");
    }

    #[test]
    fn inequality_examples() {
        assert_eq!(inequality_nu(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(inequality_nu(&[3.0, 1.0]).unwrap(), 0.5);
        let nu = inequality_nu(&[1.0, 1e-9, 1e-9]).unwrap();
        assert!((nu - 1.0).abs() < 1e-8, "monopoly limit");
        assert!(inequality_nu(&[1.0]).is_err());
    }

    #[test]
    fn kappa_truth_examples() {
        let o = vec![1.0, 2.0, 3.0];
        assert_eq!(kappa_truth(&o, &o), 1.0);
        let w = vec![0.5, 0.5, 2.0];
        let k = kappa_truth(&o, &w);
        assert!((k - 2.0).abs() < 1e-15);
        // Scaling origins scales κ linearly.
        let o_scaled: Vec<f64> = o.iter().map(|x| x * 3.0).collect();
        assert!((kappa_truth(&o_scaled, &w) - 3.0 * k).abs() < 1e-12);
    }

    #[test]
    fn scale_invariance_of_relative_steady_state() {
        let sys = synthetic_system(6, 4, 0.01, 31);
        let pars = toy_params(0.75, 1.4, 2.0);
        let (w1, _) = sys
            .steady_state(&sys.default_w0(&pars), &pars, 1e-10, 100_000)
            .unwrap();

        let scaled = HwSystem::new(
            sys.origin.iter().map(|o| o * 5.0).collect(),
            sys.conv.clone(),
            sys.dt,
        )
        .unwrap();
        let (w2, _) = scaled
            .steady_state(&scaled.default_w0(&pars), &pars, 1e-10, 100_000)
            .unwrap();

        let t1: f64 = w1.iter().sum();
        let t2: f64 = w2.iter().sum();
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a / t1 - b / t2).abs() < 1e-7, "relative sizes unchanged");
        }
        assert!((kappa_truth(&scaled.origin, &w2) - kappa_truth(&sys.origin, &w1)).abs() < 1e-9);
    }

    #[test]
    fn dataset_generation() {
        let sys = synthetic_system(8, 4, 0.1, 13);
        let pars = toy_params(1.2, 4.0, 2.0);

        let noiseless = generate_hw_dataset(&sys, &pars, 0.0, 1, 0).unwrap();
        assert_eq!(noiseless.frames.len(), 1);
        let (w_star, _) = sys
            .steady_state(&sys.default_w0(&pars), &pars, 1e-8, 200_000)
            .unwrap();
        assert_eq!(
            noiseless.frames[0], w_star,
            "single frame equal to the steady state"
        );

        let noisy_a = generate_hw_dataset(&sys, &pars, 1.5, 4, 5).unwrap();
        let noisy_b = generate_hw_dataset(&sys, &pars, 1.5, 4, 5).unwrap();
        assert_eq!(noisy_a, noisy_b, "same seed, same dataset");
        assert_eq!(noisy_a.frames.len(), 4);

        let spread: f64 = noisy_a.frames[3]
            .iter()
            .zip(&w_star)
            .map(|(a, b)| ((a - b) / b).abs())
            .fold(0.0, f64::max);
        assert!(
            spread > 0.01,
            "noisy frames move away from the steady state ({spread})"
        );
    }

    #[test]
    fn monopolised_dataset_is_rejected() {
        let sys = synthetic_system(10, 5, 0.1, 19);
        let pars = toy_params(2.0, 0.5, 2.0);
        let err = generate_hw_dataset(&sys, &pars, 0.0, 1, 0).unwrap_err();
        assert!(err.to_string().contains("cannot be learned"), "{err}");
    }

    #[test]
    fn tape_step_matches_plain_step() {
        let sys = synthetic_system(5, 3, 0.01, 37);
        let pars = HwParams {
            alpha: 1.2,
            beta: 4.0,
            kappa: 2.0,
            sigma: 0.3,
            epsilon: 1.0,
        };
        let w = vec![0.9, 1.4, 0.6];
        let db = vec![0.05, -0.12, 0.02];
        let plain = sys.step_with_noise(&w, &pars, &db).unwrap();

        let mut tape = Tape::new();
        let sys_vars = sys.on_tape(&mut tape);
        let w_var = tape.constant(Tensor::vector(w.clone()));
        let vars = HwParamVars {
            alpha: tape.leaf(Tensor::scalar(pars.alpha)),
            beta: tape.leaf(Tensor::scalar(pars.beta)),
            kappa: tape.leaf(Tensor::scalar(pars.kappa)),
            sigma: tape.leaf(Tensor::scalar(pars.sigma)),
            epsilon: 1.0,
        };
        let out = sys
            .step_tape(&mut tape, &sys_vars, w_var, &vars, &db)
            .unwrap();
        for (a, b) in tape.data(out).data().iter().zip(&plain) {
            assert!((a - b).abs() < 1e-14, "{a} vs {b}");
        }
    }

    #[test]
    fn tape_gradients_match_finite_differences() {
        let sys = synthetic_system(4, 3, 0.01, 53);
        let w0 = vec![0.8, 1.2, 1.0];
        let target = vec![0.9, 1.1, 1.0];
        let db: Vec<Vec<f64>> = vec![vec![0.03, -0.02, 0.05]; 3];

        let loss_plain = |p: &[f64]| -> f64 {
            let pars = HwParams {
                alpha: p[0],
                beta: p[1],
                kappa: p[2],
                sigma: p[3],
                epsilon: 1.0,
            };
            let mut w = w0.clone();
            for noise in &db {
                w = sys.step_with_noise(&w, &pars, noise).unwrap();
            }
            w.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum()
        };

        let point = [1.15, 3.2, 1.9, 0.25];
        let mut tape = Tape::new();
        let sys_vars = sys.on_tape(&mut tape);
        let leaves: Vec<Var> = point
            .iter()
            .map(|&x| tape.leaf(Tensor::scalar(x)))
            .collect();
        let vars = HwParamVars {
            alpha: leaves[0],
            beta: leaves[1],
            kappa: leaves[2],
            sigma: leaves[3],
            epsilon: 1.0,
        };
        let mut w_var = tape.constant(Tensor::vector(w0.clone()));
        for noise in &db {
            w_var = sys
                .step_tape(&mut tape, &sys_vars, w_var, &vars, noise)
                .unwrap();
        }
        let tgt = tape.constant(Tensor::vector(target.clone()));
        let diff = tape.sub(w_var, tgt).unwrap();
        let sq = tape.mul(diff, diff).unwrap();
        let j = tape.sum(sq);
        tape.backward(j).unwrap();

        let h = 1e-6;
        for (idx, leaf) in leaves.iter().enumerate() {
            let mut hi = point;
            let mut lo = point;
            hi[idx] += h;
            lo[idx] -= h;
            let fd = (loss_plain(&hi) - loss_plain(&lo)) / (2.0 * h);
            let ad = tape.grad(*leaf).unwrap().item();
            let rel = (ad - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-5, "param {idx}: ad={ad} fd={fd} rel={rel}");
        }
    }
}
