//! Experiment configuration: a TOML key-value tree with unknown keys
//! rejected, so replication configs stay faithful. All randomness flows from
//! the single `seed` through named substreams.

use anyhow::{anyhow, bail, Context};
use plateau_core::dynamics::Scheme;
use plateau_core::ActivationKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    pub model: ModelConfig,
    pub data: DataConfig,
    pub init: InitConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Activation kind tag: linear-fc, relu-fc, conv1d-linear, conv1d-relu,
    /// quadratic-fc, poly-fc, tanh-fc, sigmoid-fc, sin-fc, ztanh-fc,
    /// linear-attention.
    pub kind: String,
    pub h: usize,
    #[serde(default)]
    pub input_dim: Option<usize>,
    #[serde(default)]
    pub output_dim: Option<usize>,
    /// poly-fc degree.
    #[serde(default)]
    pub degree: Option<u32>,
    #[serde(default)]
    pub embed_dim: Option<usize>,
    #[serde(default)]
    pub context_len: Option<usize>,
    #[serde(default)]
    pub head_rank: Option<usize>,
    /// identity | chain | skip-none | skip-1 | skip-2
    #[serde(default = "default_out_map")]
    pub out_map: String,
    /// Extra chain matrices as [rows, cols], innermost first.
    #[serde(default)]
    pub chain_dims: Vec<[usize; 2]>,
    /// Final output dimension of skip networks (W4 rows).
    #[serde(default)]
    pub skip_out: Option<usize>,
}

fn default_out_map() -> String {
    "identity".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// linear-fc-teacher | linear-conv | relu-orthogonal | relu-conv |
    /// icl-regression | quadratic-teacher | generic-teacher |
    /// spectrum-linear | spectrum-quadratic | csv
    pub source: String,
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub path: Option<String>,
    /// Teacher units for generic-teacher.
    #[serde(default)]
    pub teacher: Vec<TeacherUnit>,
    /// Drive the dynamics from the prescribed statistics instead of samples
    /// (spectrum sources only).
    #[serde(default)]
    pub prescribed_stats: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherUnit {
    pub v: f64,
    pub u: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// isotropic | low-rank | manifold-adjacent
    pub scheme: String,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub delta: Option<f64>,
    /// Equal-unit constraints (pairs) for manifold-adjacent inits.
    #[serde(default)]
    pub equal_pairs: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub eta: f64,
    pub steps: u64,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    #[serde(default)]
    pub snapshot_every: Option<u64>,
    #[serde(default = "default_scheme")]
    pub scheme: String,
}

fn default_record_every() -> u64 {
    10
}

fn default_scheme() -> String {
    "euler".into()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// |d(log loss)/dt| threshold per unit training time.
    #[serde(default = "default_slope_tol")]
    pub slope_tol: f64,
    /// Minimum plateau length as a fraction of total training time.
    #[serde(default = "default_min_len_frac")]
    pub min_len_frac: f64,
    #[serde(default = "default_width_tol")]
    pub width_tol: f64,
    /// Emit predictions.json (escape times, t∞ ranking, saddle atlas).
    #[serde(default = "default_theory")]
    pub theory: bool,
}

fn default_slope_tol() -> f64 {
    1e-3
}
fn default_min_len_frac() -> f64 {
    0.05
}
fn default_width_tol() -> f64 {
    plateau_core::dynamics::DEFAULT_WIDTH_TOL
}
fn default_theory() -> bool {
    true
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            slope_tol: default_slope_tol(),
            min_len_frac: default_min_len_frac(),
            width_tol: default_width_tol(),
            theory: default_theory(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Dotted config path, e.g. `init.epsilon` or `model.h`.
    pub key: String,
    pub values: Vec<toml::Value>,
    /// Seed replicas per sweep value (seed ⊕ run index).
    #[serde(default = "default_sweep_seeds")]
    pub seeds: u64,
}

fn default_sweep_seeds() -> u64 {
    1
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| anyhow!("{e}"))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.activation_kind()?;
        if self.train.eta <= 0.0 {
            bail!("train.eta: step size must be positive");
        }
        match self.train.scheme.as_str() {
            "euler" | "rk4" => {}
            other => bail!("train.scheme: unknown scheme `{other}`"),
        }
        match self.init.scheme.as_str() {
            "isotropic" | "low-rank" | "manifold-adjacent" => {}
            other => bail!("init.scheme: unknown scheme `{other}`"),
        }
        Ok(())
    }

    pub fn activation_kind(&self) -> anyhow::Result<ActivationKind> {
        let m = &self.model;
        let input = |what: &str| {
            m.input_dim
                .ok_or_else(|| anyhow!("model.input_dim: required for {what}"))
        };
        Ok(match m.kind.as_str() {
            "linear-fc" => ActivationKind::LinearFc {
                input_dim: input("linear-fc")?,
                output_dim: m.output_dim.unwrap_or(1),
            },
            "relu-fc" => ActivationKind::ReluFc {
                input_dim: input("relu-fc")?,
                output_dim: m.output_dim.unwrap_or(1),
            },
            "conv1d-linear" => ActivationKind::Conv1dLinear { input_dim: input("conv1d-linear")? },
            "conv1d-relu" => ActivationKind::Conv1dRelu { input_dim: input("conv1d-relu")? },
            "quadratic-fc" => ActivationKind::QuadraticFc { input_dim: input("quadratic-fc")? },
            "poly-fc" => ActivationKind::PolyFc {
                input_dim: input("poly-fc")?,
                degree: m.degree.ok_or_else(|| anyhow!("model.degree: required for poly-fc"))?,
            },
            "tanh-fc" => ActivationKind::TanhFc { input_dim: input("tanh-fc")? },
            "sigmoid-fc" => ActivationKind::SigmoidFc { input_dim: input("sigmoid-fc")? },
            "sin-fc" => ActivationKind::SinFc { input_dim: input("sin-fc")? },
            "ztanh-fc" => ActivationKind::ZTanhFc { input_dim: input("ztanh-fc")? },
            "linear-attention" => ActivationKind::LinearAttention {
                embed_dim: m.embed_dim.ok_or_else(|| anyhow!("model.embed_dim: required"))?,
                context_len: m.context_len.ok_or_else(|| anyhow!("model.context_len: required"))?,
                head_rank: m.head_rank.unwrap_or(1),
            },
            other => bail!("model.kind: unknown activation kind `{other}`"),
        })
    }

    pub fn scheme(&self) -> Scheme {
        match self.train.scheme.as_str() {
            "rk4" => Scheme::Rk4,
            _ => Scheme::Euler,
        }
    }
}

/// Apply `key=value` overrides (dotted paths) onto a TOML tree, then
/// re-deserialize so unknown keys still fail closed.
pub fn apply_overrides(base: &str, overrides: &[String]) -> anyhow::Result<ExperimentConfig> {
    let mut tree: toml::Value = toml::from_str(base).context("parsing config")?;
    for ov in overrides {
        let (key, raw) = ov
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, got `{ov}`"))?;
        let value: toml::Value =
            toml::from_str(&format!("x = {raw}"))
                .map(|v: toml::Value| v["x"].clone())
                .or_else(|_| {
                    toml::from_str(&format!("x = \"{raw}\"")).map(|v: toml::Value| v["x"].clone())
                })
                .map_err(|e| anyhow!("{key}: cannot parse value `{raw}`: {e}"))?;
        set_path(&mut tree, key, value)?;
    }
    let cfg: ExperimentConfig = tree.try_into().map_err(|e| anyhow!("{e}"))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Filesystem-safe label for a sweep value.
pub fn mask_label(value: &toml::Value) -> String {
    let raw = match value {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    raw.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

pub fn set_path(tree: &mut toml::Value, key: &str, value: toml::Value) -> anyhow::Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_table_mut()
            .ok_or_else(|| anyhow!("{key}: not a table"))?
            .entry(part.to_string())
            .or_insert(toml::Value::Table(Default::default()));
    }
    node.as_table_mut()
        .ok_or_else(|| anyhow!("{key}: not a table"))?
        .insert(parts.last().unwrap().to_string(), value);
    Ok(())
}
