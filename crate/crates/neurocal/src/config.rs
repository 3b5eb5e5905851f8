//! Declarative run configuration. Parsing is strict: any unknown key
//! anywhere in the tree fails before any compute starts.

use crate::error::{Error, Result};
use crate::nn::{Activation, BiasInit, NetSpec, OptimizerKind, PerLayer};
use crate::train::TrainingConfig;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Sir,
    HarrisWilson,
}

/// Either a single seed or a contiguous sweep.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedSweep {
    pub start: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: Option<SeedSweep>,
    pub output_dir: PathBuf,
    /// Worker threads for seed sweeps; defaults to the number of cores.
    #[serde(default)]
    pub workers: Option<usize>,
    pub data: DataSection,
    pub neural_net: NeuralNetSection,
    pub training: TrainingConfig,
    #[serde(default)]
    pub density: DensitySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default)]
    pub generate: Option<GenerateSection>,
    #[serde(default)]
    pub load_from_dir: Option<LoadSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    #[serde(default)]
    pub sir: Option<SirGenerate>,
    #[serde(default)]
    pub harris_wilson: Option<HwGenerate>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SirGenerate {
    #[serde(default = "default_n_agents")]
    pub n_agents: usize,
    #[serde(default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_p_infect")]
    pub p_infect: f64,
    #[serde(default = "default_t_infectious")]
    pub t_infectious: u32,
    #[serde(default = "default_r_infect")]
    pub r_infect: f64,
    #[serde(default = "default_domain")]
    pub domain: f64,
    #[serde(default = "default_diffusivity")]
    pub diffusivity_s: f64,
    #[serde(default = "default_diffusivity")]
    pub diffusivity_i: f64,
    #[serde(default = "default_diffusivity")]
    pub diffusivity_r: f64,
}

fn default_n_agents() -> usize {
    3000
}
fn default_n_steps() -> usize {
    100
}
fn default_p_infect() -> f64 {
    0.2
}
fn default_t_infectious() -> u32 {
    14
}
fn default_r_infect() -> f64 {
    0.3
}
fn default_domain() -> f64 {
    10.0
}
fn default_diffusivity() -> f64 {
    0.03
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwGenerate {
    pub n_origin: usize,
    pub n_dest: usize,
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Noise level in the generated data.
    #[serde(default)]
    pub sigma: f64,
    /// Number of recorded frames (1 for steady-state data).
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Seed of the synthetic network itself (sizes and convenience matrix).
    #[serde(default)]
    pub network_seed: u64,
}

fn default_frames() -> usize {
    1
}
fn default_dt() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSection {
    /// Directory with the conventional file names (`origin_sizes.csv`,
    /// `dest_sizes.csv`, `network.csv`), or explicit paths below.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub network: Option<PathBuf>,
    #[serde(default)]
    pub origin_zones: Option<PathBuf>,
    #[serde(default)]
    pub destination_zones: Option<PathBuf>,
    /// Density time series for the SIR model.
    #[serde(default)]
    pub series: Option<PathBuf>,
    /// Inputs are raw GLA-style figures needing unit scaling.
    #[serde(default)]
    pub raw_gla: bool,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuralNetSection {
    pub num_layers: usize,
    pub nodes_per_layer: PerLayerValue<usize>,
    #[serde(default)]
    pub biases: Option<PerLayerValue<Option<BiasValue>>>,
    pub activation_funcs: PerLayerValue<ActivationValue>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
}

fn default_learning_rate() -> f64 {
    0.001
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerLayerValue<T> {
    pub default: T,
    #[serde(default = "BTreeMap::new")]
    pub layer_specific: BTreeMap<i64, T>,
}

/// Bias setting as written in the config: `~` disables the bias, the word
/// `default` selects the fan-based scheme, `[a, b]` a uniform interval.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BiasValue {
    Word(String),
    Interval([f64; 2]),
}

fn bias_init(value: &Option<BiasValue>) -> Result<BiasInit> {
    match value {
        None => Ok(BiasInit::None),
        Some(BiasValue::Word(w)) if w == "default" => Ok(BiasInit::Default),
        Some(BiasValue::Word(w)) => Err(Error::InvalidConfig(format!(
            "unknown bias scheme `{w}` (expected `default`)"
        ))),
        Some(BiasValue::Interval([a, b])) => Ok(BiasInit::Interval(*a, *b)),
    }
}

/// Activation as written in the config: a bare name, or a name with
/// positional arguments (`hardtanh` takes `[min, max]`).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ActivationValue {
    Name(String),
    WithArgs {
        name: String,
        #[serde(default)]
        args: Vec<f64>,
    },
}

fn activation(value: &ActivationValue) -> Result<Activation> {
    let (name, args): (&str, &[f64]) = match value {
        ActivationValue::Name(n) => (n.as_str(), &[]),
        ActivationValue::WithArgs { name, args } => (name.as_str(), args.as_slice()),
    };
    match (name.to_ascii_lowercase().as_str(), args) {
        ("linear", []) => Ok(Activation::Linear),
        ("abs", []) => Ok(Activation::Abs),
        ("sigmoid", []) => Ok(Activation::Sigmoid),
        ("tanh", []) => Ok(Activation::Tanh),
        ("relu", []) => Ok(Activation::Relu),
        ("hardtanh", [lo, hi]) => Ok(Activation::Hardtanh(*lo, *hi)),
        ("hardtanh", other) => Err(Error::InvalidConfig(format!(
            "hardtanh takes args [min, max], got {other:?}"
        ))),
        (other, _) => Err(Error::InvalidConfig(format!(
            "unknown activation `{other}`"
        ))),
    }
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    #[serde(default)]
    pub n_bins: Option<usize>,
    #[serde(default)]
    pub bandwidth: Option<f64>,
    #[serde(default)]
    pub prominence: Option<f64>,
}

impl DensitySection {
    pub fn options(&self) -> crate::density::DensityOptions {
        let mut opts = crate::density::DensityOptions::default();
        if let Some(n) = self.n_bins {
            opts.n_bins = n;
        }
        opts.bandwidth = self.bandwidth;
        if let Some(p) = self.prominence {
            opts.prominence = p;
        }
        opts
    }
}

impl RunConfig {
    /// Strict parse; unknown keys anywhere are rejected.
    pub fn from_yaml_str(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_yaml::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_yaml_file(path: &std::path::Path) -> Result<RunConfig> {
        Self::from_yaml_str(&crate::data::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.seed, &self.seeds) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "give either `seed` or `seeds`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "one of `seed` or `seeds` is required".into(),
                ))
            }
            (_, Some(s)) if s.count == 0 => {
                return Err(Error::InvalidConfig(
                    "seed sweep must have count >= 1".into(),
                ))
            }
            _ => {}
        }
        match (&self.data.generate, &self.data.load_from_dir) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidConfig(
                    "give exactly one data source: `generate` or `load_from_dir`".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidConfig(
                    "a data source (`generate` or `load_from_dir`) is required".into(),
                ))
            }
            (Some(gen), None) => match self.model {
                ModelKind::Sir if gen.sir.is_none() => {
                    return Err(Error::InvalidConfig(
                        "model is sir but data.generate.sir is missing".into(),
                    ))
                }
                ModelKind::HarrisWilson if gen.harris_wilson.is_none() => {
                    return Err(Error::InvalidConfig(
                        "model is harris_wilson but data.generate.harris_wilson is missing".into(),
                    ))
                }
                _ => {
                    if gen.sir.is_some() && gen.harris_wilson.is_some() {
                        return Err(Error::InvalidConfig(
                            "data.generate must describe exactly one model".into(),
                        ));
                    }
                }
            },
            (None, Some(load)) => match self.model {
                ModelKind::Sir => {
                    if load.series.is_none() && load.dir.is_none() {
                        return Err(Error::InvalidConfig(
                            "loading SIR data needs `series` (or `dir` with series.csv)".into(),
                        ));
                    }
                }
                ModelKind::HarrisWilson => {
                    let explicit = load.network.is_some()
                        && load.origin_zones.is_some()
                        && load.destination_zones.is_some();
                    if load.dir.is_none() && !explicit {
                        return Err(Error::InvalidConfig(
                            "loading Harris-Wilson data needs `dir` or all of `network`, \
                             `origin_zones`, `destination_zones`"
                                .into(),
                        ));
                    }
                }
            },
        }
        if self.training.to_learn.is_empty() {
            return Err(Error::InvalidConfig(
                "training.to_learn must not be empty".into(),
            ));
        }
        Ok(())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        match (&self.seed, &self.seeds) {
            (Some(s), None) => vec![*s],
            (None, Some(sweep)) => (sweep.start..sweep.start + sweep.count).collect(),
            _ => unreachable!("validated"),
        }
    }

    /// Resolve the network section into a concrete spec for a problem with
    /// the given state dimension. The output width equals the number of
    /// learned parameters.
    pub fn net_spec(&self, input_dim: usize) -> Result<NetSpec> {
        let nn = &self.neural_net;
        let biases = match &nn.biases {
            None => PerLayer::uniform(BiasInit::None),
            Some(per) => {
                // Entries are Option so a `~` in the config disables the
                // bias of that layer.
                let default = bias_init(&per.default)?;
                let mut layer_specific = BTreeMap::new();
                for (&k, v) in &per.layer_specific {
                    layer_specific.insert(k, bias_init(v)?);
                }
                PerLayer {
                    default,
                    layer_specific,
                }
            }
        };
        let mut activations = PerLayer::uniform(activation(&nn.activation_funcs.default)?);
        for (&k, v) in &nn.activation_funcs.layer_specific {
            activations.layer_specific.insert(k, activation(v)?);
        }
        let mut nodes = PerLayer::uniform(nn.nodes_per_layer.default);
        for (&k, &v) in &nn.nodes_per_layer.layer_specific {
            nodes.layer_specific.insert(k, v);
        }
        let spec = NetSpec {
            input_dim,
            num_hidden_layers: nn.num_layers,
            nodes_per_layer: nodes,
            activations,
            biases,
            output_dim: self.training.to_learn.len(),
            learning_rate: nn.learning_rate,
            optimizer: nn.optimizer,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SIR_YAML: &str = r#"
model: sir
seeds: { start: 0, count: 20 }
output_dir: out/sir
data:
  generate:
    sir:
      n_agents: 3000
      n_steps: 100
      seed: 1
neural_net:
  num_layers: 1
  nodes_per_layer: { default: 20 }
  activation_funcs:
    default: linear
    layer_specific:
      -1: abs
  biases:
    default: [0, 1]
  learning_rate: 0.002
  optimizer: adam
training:
  to_learn: [p_infect, t_infectious, sigma]
  batch_size: 90
  epochs: 70
"#;

    const HW_YAML: &str = r#"
model: harris_wilson
seed: 0
output_dir: out/hw
data:
  load_from_dir:
    network: data/london/exp_times.csv
    origin_zones: data/london/origin_sizes.csv
    destination_zones: data/london/dest_sizes.csv
neural_net:
  num_layers: 1
  nodes_per_layer: { default: 20 }
  activation_funcs:
    default: linear
    layer_specific:
      -1: abs
  biases:
    default: [0, 4]
  learning_rate: 0.002
training:
  to_learn: [alpha, beta, kappa]
  true_parameters: { sigma: 0.014 }
  batch_size: 1
  epochs: 10000
"#;

    #[test]
    fn parses_the_reference_configs() {
        let cfg = RunConfig::from_yaml_str(SIR_YAML).unwrap();
        assert_eq!(cfg.model, ModelKind::Sir);
        assert_eq!(cfg.seed_list().len(), 20);
        let spec = cfg.net_spec(3).unwrap();
        assert_eq!(spec.output_dim, 3);
        assert_eq!(spec.learning_rate, 0.002);

        let cfg = RunConfig::from_yaml_str(HW_YAML).unwrap();
        assert_eq!(cfg.model, ModelKind::HarrisWilson);
        assert_eq!(cfg.seed_list(), vec![0]);
        assert_eq!(cfg.training.true_parameters["sigma"], 0.014);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        let bad = SIR_YAML.replace("  epochs: 70", "  epochs: 70\n  typo_key: 1");
        assert!(RunConfig::from_yaml_str(&bad).is_err());
        let bad = SIR_YAML.replace("model: sir", "model: sir\nextra_top: true");
        assert!(RunConfig::from_yaml_str(&bad).is_err());
        let bad = SIR_YAML.replace("      seed: 1", "      seed: 1\n      agents: 2");
        assert!(RunConfig::from_yaml_str(&bad).is_err());
    }

    #[test]
    fn missing_to_learn_is_rejected() {
        let bad = SIR_YAML.replace("  to_learn: [p_infect, t_infectious, sigma]\n", "");
        let err = RunConfig::from_yaml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("to_learn"), "{err}");
    }

    #[test]
    fn exactly_one_data_source() {
        let bad = HW_YAML.replace(
            "data:\n  load_from_dir:",
            "data:\n  generate:\n    harris_wilson:\n      n_origin: 4\n      n_dest: 2\n      alpha: 1.0\n      beta: 1.0\n      kappa: 2.0\n  load_from_dir:",
        );
        let err = RunConfig::from_yaml_str(&bad).unwrap_err();
        assert!(err.to_string().contains("exactly one data source"), "{err}");
    }

    #[test]
    fn seed_and_sweep_are_mutually_exclusive() {
        let bad = HW_YAML.replace("seed: 0", "seed: 0\nseeds: { start: 0, count: 2 }");
        assert!(RunConfig::from_yaml_str(&bad).is_err());
    }

    #[test]
    fn hardtanh_args_resolve_to_a_clamp() {
        let yaml = SIR_YAML.replace(
            "      -1: abs",
            "      -1:\n        name: hardtanh\n        args: [-2, 2]",
        );
        let cfg = RunConfig::from_yaml_str(&yaml).unwrap();
        let spec = cfg.net_spec(3).unwrap();
        let out_act = spec.activations.layer_specific[&-1];
        assert_eq!(out_act, Activation::Hardtanh(-2.0, 2.0));
    }

    #[test]
    fn null_bias_disables_biases() {
        let yaml = SIR_YAML.replace("    default: [0, 1]", "    default: ~");
        let cfg = RunConfig::from_yaml_str(&yaml).unwrap();
        let spec = cfg.net_spec(3).unwrap();
        assert_eq!(spec.biases.default, BiasInit::None);
    }
}
