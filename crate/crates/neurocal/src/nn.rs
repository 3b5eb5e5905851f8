//! Configurable feed-forward network mapping observed state frames to
//! parameter estimates, plus the optimizers used for backpropagation
//! updates.
//!
//! A network with `num_hidden_layers` hidden layers consists of
//! `num_hidden_layers + 1` affine layers indexed `0..=num_hidden_layers`;
//! index `-1` aliases the output layer. Each affine layer applies
//! `σ_i(W_i x + b_i)` with an optional bias.

use crate::error::{Error, Result};
use crate::grad::{Tape, Var};
use crate::tensor::Tensor;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Linear,
    Abs,
    Sigmoid,
    Tanh,
    Relu,
    /// Clamp to `[min, max]`.
    Hardtanh(f64, f64),
}

/// Bias initialization for one affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BiasInit {
    /// No bias term.
    None,
    /// Symmetric uniform on `[-1/√fan_in, 1/√fan_in]`, same family as the
    /// weights.
    Default,
    /// Uniform on a custom interval `[a, b]`.
    Interval(f64, f64),
}

/// Per-layer setting with a default and sparse overrides. Override keys are
/// affine-layer indices; `-1` aliases the output layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerLayer<T> {
    pub default: T,
    #[serde(default = "BTreeMap::new")]
    pub layer_specific: BTreeMap<i64, T>,
}

impl<T: Clone> PerLayer<T> {
    pub fn uniform(default: T) -> Self {
        PerLayer {
            default,
            layer_specific: BTreeMap::new(),
        }
    }

    /// Value for affine layer `index` out of `n_affine` layers.
    fn resolve(&self, index: usize, n_affine: usize) -> T {
        let alias = index as i64 - n_affine as i64; // -1 for the output layer
        self.layer_specific
            .get(&(index as i64))
            .or_else(|| self.layer_specific.get(&alias))
            .cloned()
            .unwrap_or_else(|| self.default.clone())
    }

    fn check_indices(&self, what: &str, n_affine: usize) -> Result<()> {
        for &k in self.layer_specific.keys() {
            let ok = k == -1 || (0..n_affine as i64).contains(&k);
            if !ok {
                return Err(Error::InvalidConfig(format!(
                    "{what} override index {k} out of range (valid: 0..={}, or -1 for the output layer)",
                    n_affine - 1
                )));
            }
        }
        Ok(())
    }
}

/// Architecture and training hyperparameters of the network.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_dim: usize,
    pub num_hidden_layers: usize,
    pub nodes_per_layer: PerLayer<usize>,
    pub activations: PerLayer<Activation>,
    pub biases: PerLayer<BiasInit>,
    pub output_dim: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl NetSpec {
    /// The architecture both case studies share: one hidden layer of
    /// `hidden` linear nodes, an abs output so estimates stay positive, and
    /// biases drawn uniformly from `bias_interval`. Adam optimizer.
    pub fn shallow_abs(
        input_dim: usize,
        output_dim: usize,
        hidden: usize,
        learning_rate: f64,
        bias_interval: (f64, f64),
    ) -> NetSpec {
        NetSpec {
            input_dim,
            num_hidden_layers: 1,
            nodes_per_layer: PerLayer::uniform(hidden),
            activations: PerLayer {
                default: Activation::Linear,
                layer_specific: [(-1, Activation::Abs)].into(),
            },
            biases: PerLayer::uniform(BiasInit::Interval(bias_interval.0, bias_interval.1)),
            output_dim,
            learning_rate,
            optimizer: OptimizerKind::Adam,
        }
    }

    fn n_affine(&self) -> usize {
        self.num_hidden_layers + 1
    }

    /// Widths of the values flowing between affine layers, input first.
    fn layer_sizes(&self) -> Vec<usize> {
        let n_affine = self.n_affine();
        let mut sizes = Vec::with_capacity(n_affine + 1);
        sizes.push(self.input_dim);
        for i in 0..self.num_hidden_layers {
            sizes.push(self.nodes_per_layer.resolve(i, n_affine));
        }
        sizes.push(self.output_dim);
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidConfig(
                "network input/output dims must be positive".into(),
            ));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        let n_affine = self.n_affine();
        self.activations.check_indices("activation", n_affine)?;
        self.biases.check_indices("bias", n_affine)?;
        // Hidden widths are set by the layer whose output they are; the
        // output width is fixed by the number of learned parameters.
        for &k in self.nodes_per_layer.layer_specific.keys() {
            if k < 0 || k as usize >= self.num_hidden_layers {
                return Err(Error::InvalidConfig(format!(
                    "nodes_per_layer override {k} does not target a hidden layer (valid: 0..{})",
                    self.num_hidden_layers
                )));
            }
        }
        let check_interval = |init: &BiasInit| -> Result<()> {
            if let BiasInit::Interval(a, b) = init {
                if a > b {
                    return Err(Error::InvalidConfig(format!(
                        "bias interval [{a}, {b}] is empty (a > b)"
                    )));
                }
            }
            Ok(())
        };
        check_interval(&self.biases.default)?;
        for init in self.biases.layer_specific.values() {
            check_interval(init)?;
        }
        if self.layer_sizes().iter().any(|&s| s == 0) {
            return Err(Error::InvalidConfig("layer width must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable network state: one weight matrix and optional bias per affine
/// layer.
#[derive(Debug, Clone)]
pub struct Net {
    pub spec: NetSpec,
    weights: Vec<Tensor>,
    biases: Vec<Option<Tensor>>,
    activations: Vec<Activation>,
}

/// Tape handles of one forward pass: the output value and the leaves the
/// optimizer will update.
pub struct NetPass {
    pub output: Var,
    pub weight_vars: Vec<Var>,
    pub bias_vars: Vec<Option<Var>>,
}

impl Net {
    /// Deterministic initialization: weights (and `Default` biases) are
    /// symmetric uniform on `[-1/√fan_in, 1/√fan_in]`; interval biases are
    /// uniform on `[a, b]`.
    pub fn init(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = StdRng::seed_from_u64(seed);
        let sizes = spec.layer_sizes();
        let n_affine = spec.n_affine();
        let mut weights = Vec::with_capacity(n_affine);
        let mut biases = Vec::with_capacity(n_affine);
        let mut activations = Vec::with_capacity(n_affine);
        for i in 0..n_affine {
            let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            weights.push(Tensor::matrix(fan_out, fan_in, w));
            let bias = match spec.biases.resolve(i, n_affine) {
                BiasInit::None => None,
                BiasInit::Default => Some(Tensor::vector(
                    (0..fan_out)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect(),
                )),
                BiasInit::Interval(a, b) => Some(Tensor::vector(
                    (0..fan_out)
                        .map(|_| if a == b { a } else { rng.random_range(a..b) })
                        .collect(),
                )),
            };
            biases.push(bias);
            activations.push(spec.activations.resolve(i, n_affine));
        }
        Ok(Net {
            spec,
            weights,
            biases,
            activations,
        })
    }

    /// A net that outputs the fixed vector `values` for every input: zero
    /// weights, biases pinned to the values, abs output activation.
    pub fn pinned(
        input_dim: usize,
        values: &[f64],
        learning_rate: f64,
        optimizer: OptimizerKind,
    ) -> Self {
        let spec = NetSpec {
            input_dim,
            num_hidden_layers: 0,
            nodes_per_layer: PerLayer::uniform(1),
            activations: PerLayer::uniform(Activation::Abs),
            biases: PerLayer::uniform(BiasInit::Default),
            output_dim: values.len(),
            learning_rate,
            optimizer,
        };
        Net {
            spec,
            weights: vec![Tensor::matrix(
                values.len(),
                input_dim,
                vec![0.0; values.len() * input_dim],
            )],
            biases: vec![Some(Tensor::vector(values.to_vec()))],
            activations: vec![Activation::Abs],
        }
    }

    /// Record the forward pass `x ↦ λ̂` on the tape, exposing the parameter
    /// leaves for the optimizer.
    pub fn forward(&self, tape: &mut Tape, x: &Tensor) -> Result<NetPass> {
        if x.shape() != crate::tensor::Shape::Vector(self.spec.input_dim) {
            return Err(Error::ShapeMismatch {
                op: "net forward",
                lhs: crate::tensor::Shape::Vector(self.spec.input_dim),
                rhs: x.shape(),
            });
        }
        let mut weight_vars = Vec::with_capacity(self.weights.len());
        let mut bias_vars = Vec::with_capacity(self.weights.len());
        let mut h = tape.constant(x.clone());
        for (i, w) in self.weights.iter().enumerate() {
            let wv = tape.leaf(w.clone());
            weight_vars.push(wv);
            h = tape.matvec(wv, h)?;
            if let Some(b) = &self.biases[i] {
                let bv = tape.leaf(b.clone());
                h = tape.add(h, bv)?;
                bias_vars.push(Some(bv));
            } else {
                bias_vars.push(None);
            }
            h = match self.activations[i] {
                Activation::Linear => h,
                Activation::Abs => tape.abs(h),
                Activation::Sigmoid => tape.sigmoid(h),
                Activation::Tanh => tape.tanh(h),
                Activation::Relu => tape.relu(h),
                Activation::Hardtanh(lo, hi) => tape.clamp(h, lo, hi),
            };
        }
        Ok(NetPass {
            output: h,
            weight_vars,
            bias_vars,
        })
    }

    /// Flat list of all trainable tensors, weights and biases interleaved in
    /// layer order. Mirrors the leaf order of [`NetPass`].
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            out.push(w);
            if let Some(b) = b {
                out.push(b);
            }
        }
        out
    }

    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(self.biases.iter()) {
            out.push(w);
            if let Some(b) = b {
                out.push(b);
            }
        }
        out
    }

    /// Gradients of the current tape pass in [`Net::parameters`] order.
    pub fn collect_grads(&self, tape: &Tape, pass: &NetPass) -> Result<Vec<Tensor>> {
        let mut grads = Vec::new();
        let mut missing = Vec::new();
        for (i, (wv, bv)) in pass.weight_vars.iter().zip(&pass.bias_vars).enumerate() {
            match tape.grad(*wv) {
                Some(g) => grads.push(g.clone()),
                None => missing.push(format!("layer {i} weights")),
            }
            if let Some(bv) = bv {
                match tape.grad(*bv) {
                    Some(g) => grads.push(g.clone()),
                    None => missing.push(format!("layer {i} bias")),
                }
            }
        }
        if missing.is_empty() {
            Ok(grads)
        } else {
            Err(Error::MissingGradients {
                missing: missing.join(", "),
            })
        }
    }

    #[cfg(test)]
    pub(crate) fn set_layer(&mut self, i: usize, w: Tensor, b: Option<Tensor>) {
        self.weights[i] = w;
        self.biases[i] = b;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Gradient-descent state. Adam keeps bias-corrected first/second moment
/// accumulators shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    step_count: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        Optimizer {
            kind,
            learning_rate,
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn for_net(net: &Net) -> Self {
        Self::new(net.spec.optimizer, net.spec.learning_rate)
    }

    /// One update over parameters and their gradients (parallel slices).
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> Result<()> {
        if grads.is_empty() || grads.len() != params.len() {
            return Err(Error::MissingGradients {
                missing: format!(
                    "expected {} gradient tensors, got {}",
                    params.len(),
                    grads.len()
                ),
            });
        }
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    let lr = self.learning_rate;
                    for (pi, gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *pi -= lr * gi;
                    }
                }
                self.step_count += 1;
            }
            OptimizerKind::Adam => {
                if self.first_moment.is_empty() {
                    self.first_moment = params.iter().map(|p| Tensor::zeros_like(p)).collect();
                    self.second_moment = self.first_moment.clone();
                }
                self.step_count += 1;
                let t = self.step_count as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(
                    self.first_moment
                        .iter_mut()
                        .zip(self.second_moment.iter_mut()),
                ) {
                    for (((pi, gi), mi), vi) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut())
                        .zip(v.data_mut())
                    {
                        *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                        *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                        let m_hat = *mi / bc1;
                        let v_hat = *vi / bc2;
                        *pi -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}
