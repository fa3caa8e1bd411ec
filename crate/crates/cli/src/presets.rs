//! Named experiment presets at desk scale. Training-set sizes are reduced to
//! 2048 samples where the original runs used 8192; every other number is
//! spelled out here so a run is reproducible from the preset name and seed
//! alone.

use crate::config::ExperimentConfig;
use anyhow::{anyhow, Result};

pub const PRESET_NAMES: &[&str] = &[
    "fig1b",
    "fig1c",
    "fig1d",
    "fig1e",
    "fig1f",
    "fig1g",
    "fig2a-linear",
    "fig2a-attention",
    "fig2b-linear",
    "fig2b-quadratic",
    "fig2c-lowrank",
    "fig2c-isotropic",
    "fig2d-sweep",
    "fig5a-deep-linear",
    "fig6-linear-skip",
];

pub fn preset_toml(name: &str) -> Result<&'static str> {
    Ok(match name {
        // two-layer linear network, identity teacher on correlated inputs
        "fig1b" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 50
input_dim = 2
output_dim = 2
[data]
source = "linear-fc-teacher"
p = 2048
[init]
scheme = "isotropic"
epsilon = 1e-6
[train]
eta = 0.01
steps = 6000
record_every = 5
snapshot_every = 60
[analysis]
min_len_frac = 0.02
"#,
        // linear convolutional network (kernel 2, stride 2) on a scalar teacher
        "fig1c" => r#"
seed = 1
[model]
kind = "conv1d-linear"
h = 50
input_dim = 4
[data]
source = "linear-conv"
p = 2048
[init]
scheme = "isotropic"
epsilon = 1e-6
[train]
eta = 0.01
steps = 7000
record_every = 5
snapshot_every = 70
[analysis]
slope_tol = 0.02
min_len_frac = 0.02
"#,
        // ReLU network on the two-point orthogonal dataset
        "fig1d" => r#"
seed = 1
[model]
kind = "relu-fc"
h = 50
input_dim = 2
output_dim = 1
[data]
source = "relu-orthogonal"
[init]
scheme = "isotropic"
epsilon = 1e-6
[train]
eta = 0.01
steps = 10000
record_every = 5
snapshot_every = 100
[analysis]
slope_tol = 5e-3
min_len_frac = 0.02
"#,
        // ReLU convolutional network on the four block points
        "fig1e" => r#"
seed = 1
[model]
kind = "conv1d-relu"
h = 50
input_dim = 4
[data]
source = "relu-conv"
[init]
scheme = "isotropic"
epsilon = 1e-6
[train]
eta = 0.01
steps = 10000
record_every = 5
snapshot_every = 100
[analysis]
slope_tol = 0.05
min_len_frac = 0.02
"#,
        // linear self-attention on in-context linear regression; the seed
        // picks a run whose two fastest heads are well separated
        "fig1f" => r#"
seed = 9
[model]
kind = "linear-attention"
h = 10
embed_dim = 2
context_len = 32
head_rank = 1
[data]
source = "icl-regression"
d = 2
n = 32
p = 2048
[init]
scheme = "isotropic"
epsilon = 0.005
[train]
eta = 0.02
steps = 2000
record_every = 2
snapshot_every = 20
[analysis]
slope_tol = 5e-3
min_len_frac = 0.02
width_tol = 0.2
"#,
        // quadratic network on the two-direction quadratic teacher; the seed
        // picks a run whose two largest unit initializations are well separated
        "fig1g" => r#"
seed = 3
[model]
kind = "quadratic-fc"
h = 10
input_dim = 2
[data]
source = "quadratic-teacher"
p = 2048
[init]
scheme = "isotropic"
epsilon = 0.005
[train]
eta = 0.04
steps = 6000
record_every = 5
snapshot_every = 60
[analysis]
min_len_frac = 0.02
"#,
        // width sweep, linear family: plateau transitions barely move with H
        "fig2a-linear" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 4
input_dim = 3
output_dim = 3
[data]
source = "spectrum-linear"
kappa = 1.0
d = 3
p = 2048
prescribed_stats = true
[init]
scheme = "isotropic"
epsilon = 1e-8
[train]
eta = 0.01
steps = 26000
record_every = 20
snapshot_every = 260
[sweep]
key = "model.h"
values = [4, 16, 64]
seeds = 3
"#,
        // width sweep, attention family: more heads shorten the plateaus
        "fig2a-attention" => r#"
seed = 1
[model]
kind = "linear-attention"
h = 5
embed_dim = 2
context_len = 32
head_rank = 1
[data]
source = "icl-regression"
d = 2
n = 32
p = 1024
[init]
scheme = "isotropic"
epsilon = 0.005
[train]
eta = 0.02
steps = 4000
record_every = 4
snapshot_every = 40
[sweep]
key = "model.h"
values = [5, 10, 25]
seeds = 5
"#,
        // power-law exponent sweep, linear family: κ = 0 removes plateaus
        "fig2b-linear" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 30
input_dim = 3
output_dim = 3
[data]
source = "spectrum-linear"
kappa = 1.0
d = 3
p = 2048
prescribed_stats = true
[init]
scheme = "isotropic"
epsilon = 1e-8
[train]
eta = 0.01
steps = 26000
record_every = 20
snapshot_every = 260
[sweep]
key = "data.kappa"
values = [1.0, 0.5, 0.0]
"#,
        // equal positive spectrum keeps plateaus in the quadratic family
        "fig2b-quadratic" => r#"
seed = 1
[model]
kind = "quadratic-fc"
h = 5
input_dim = 4
[data]
source = "spectrum-quadratic"
kappa = 1.0
d = 3
p = 4096
prescribed_stats = true
[init]
scheme = "isotropic"
epsilon = 0.005
[train]
eta = 0.02
steps = 60000
record_every = 50
snapshot_every = 600
[sweep]
key = "data.kappa"
values = [1.0, 0.0]
"#,
        // large low-rank initialization: saddle-to-saddle without the initial plateau
        "fig2c-lowrank" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 16
input_dim = 2
output_dim = 2
[data]
source = "linear-fc-teacher"
p = 2048
[init]
scheme = "low-rank"
rank = 1
sigma = 1.0
delta = 1e-6
[train]
eta = 0.01
steps = 6000
record_every = 5
snapshot_every = 60
"#,
        // small isotropic baseline for the same data
        "fig2c-isotropic" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 16
input_dim = 2
output_dim = 2
[data]
source = "linear-fc-teacher"
p = 2048
[init]
scheme = "isotropic"
epsilon = 1e-6
[train]
eta = 0.01
steps = 6000
record_every = 5
snapshot_every = 60
"#,
        // isotropic scale sweep: larger ε shortens total plateau time
        "fig2d-sweep" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 16
input_dim = 3
output_dim = 3
[data]
source = "spectrum-linear"
kappa = 1.0
d = 3
p = 2048
prescribed_stats = true
[init]
scheme = "isotropic"
epsilon = 1e-8
[train]
eta = 0.01
steps = 26000
record_every = 20
snapshot_every = 260
[sweep]
key = "init.epsilon"
values = [1e-8, 1e-5, 1e-2]
seeds = 5
"#,
        // three-layer linear chain on the identity-teacher data
        "fig5a-deep-linear" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 16
input_dim = 2
output_dim = 16
out_map = "chain"
chain_dims = [[2, 16]]
[data]
source = "linear-fc-teacher"
p = 2048
[init]
scheme = "isotropic"
epsilon = 0.005
[train]
eta = 0.02
steps = 30000
record_every = 25
snapshot_every = 300
"#,
        // four-layer linear networks with skip connections
        "fig6-linear-skip" => r#"
seed = 1
[model]
kind = "linear-fc"
h = 16
input_dim = 2
output_dim = 16
out_map = "skip-none"
skip_out = 2
[data]
source = "linear-fc-teacher"
p = 2048
[init]
scheme = "isotropic"
epsilon = 1e-4
[train]
eta = 0.02
steps = 60000
record_every = 50
snapshot_every = 600
[sweep]
key = "model.out_map"
values = ["skip-none", "skip-1", "skip-2"]
"#,
        other => return Err(anyhow!("unknown preset `{other}`")),
    })
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::from_toml_str(preset_toml(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_presets_parse_and_validate() {
        for name in PRESET_NAMES {
            let cfg = preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            cfg.activation_kind().unwrap();
        }
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(preset("fig9z").is_err());
    }

    #[test]
    fn fig1b_matches_reference_values() {
        let cfg = preset("fig1b").unwrap();
        assert_eq!(cfg.model.h, 50);
        assert_eq!(cfg.init.epsilon, Some(1e-6));
        assert_eq!(cfg.train.eta, 0.01);
    }

    #[test]
    fn fig1g_matches_reference_values() {
        let cfg = preset("fig1g").unwrap();
        assert_eq!(cfg.model.h, 10);
        assert_eq!(cfg.init.epsilon, Some(0.005));
        assert_eq!(cfg.train.eta, 0.04);
    }
}
