//! Turns a validated config into artifacts on disk: trajectory.csv,
//! plateaus.json, snapshots/*.csv, predictions.json and summary.json, plus
//! saddle_atlas.csv for plain linear networks. Sweep points run in an
//! isolated output directory each, with seeds derived from the config seed
//! and the run index.

use crate::config::{mask_label, ExperimentConfig};
use anyhow::{anyhow, bail, Context, Result};
use plateau_core::data::{
    compute_stats, gen_dataset, gen_spectrum_dataset, init_matrices, substream_seed, DataStats,
    Dataset, GenKind, SpectrumMode,
};
use plateau_core::dynamics::{
    detect_plateaus_with, integrate, IntegrateOpts, PlateauClass, PlateauReport, Trajectory,
};
use plateau_core::landscape::{enumerate_linear_saddles, write_saddle_atlas_csv, SaddleSelector};
use plateau_core::theory::{
    self, quad_coords, spectral, t_infinity, unit_order_prediction, SpectralCase,
};
use plateau_core::{
    ActivationKind, InitScheme, InitSpec, LossModel, OutMap, SkipPattern, UnitLayerNet,
};
use rayon::prelude::*;
use std::path::{Path, PathBuf};

pub struct PreparedRun {
    pub kind: ActivationKind,
    pub dataset: Dataset,
    pub prescribed: Option<DataStats>,
    pub net: UnitLayerNet,
}

/// Build dataset, statistics and the initialized network for one run.
pub fn prepare(cfg: &ExperimentConfig) -> Result<PreparedRun> {
    let kind = cfg.activation_kind()?;
    let data_seed = substream_seed(cfg.seed, "data");
    let p = cfg.data.p.unwrap_or(2048);
    let (dataset, prescribed) = match cfg.data.source.as_str() {
        "linear-fc-teacher" => (gen_dataset(&GenKind::LinearFcTeacher { p }, data_seed)?, None),
        "linear-conv" => (gen_dataset(&GenKind::LinearConv { p }, data_seed)?, None),
        "relu-orthogonal" => (gen_dataset(&GenKind::ReluOrthogonal, data_seed)?, None),
        "relu-conv" => (gen_dataset(&GenKind::ReluConv, data_seed)?, None),
        "icl-regression" => {
            let d = cfg.data.d.ok_or_else(|| anyhow!("data.d: required for icl-regression"))?;
            let n = cfg.data.n.ok_or_else(|| anyhow!("data.n: required for icl-regression"))?;
            (gen_dataset(&GenKind::IclRegression { d, n, p }, data_seed)?, None)
        }
        "quadratic-teacher" => (gen_dataset(&GenKind::QuadraticTeacher { p }, data_seed)?, None),
        "generic-teacher" => {
            let units = cfg
                .data
                .teacher
                .iter()
                .map(|t| (t.v, t.u.clone()))
                .collect::<Vec<_>>();
            if units.is_empty() {
                bail!("data.teacher: generic-teacher needs teacher units");
            }
            (
                gen_dataset(
                    &GenKind::GenericTeacher { activation: kind.clone(), units, p },
                    data_seed,
                )?,
                None,
            )
        }
        "spectrum-linear" | "spectrum-quadratic" => {
            let kappa = cfg.data.kappa.ok_or_else(|| anyhow!("data.kappa: required"))?;
            let d = cfg.data.d.ok_or_else(|| anyhow!("data.d: required"))?;
            let mode = if cfg.data.source == "spectrum-linear" {
                SpectrumMode::Linear
            } else {
                SpectrumMode::Quadratic
            };
            let (ds, stats) = gen_spectrum_dataset(kappa, d, mode, p, data_seed)?;
            (ds, Some(stats))
        }
        "csv" => {
            let path = cfg.data.path.as_ref().ok_or_else(|| anyhow!("data.path: required"))?;
            (Dataset::read_csv(path)?, None)
        }
        other => bail!("data.source: unknown source `{other}`"),
    };

    let init_seed = substream_seed(cfg.seed, "init");
    let scheme = match cfg.init.scheme.as_str() {
        "isotropic" => InitScheme::Isotropic {
            eps: cfg.init.epsilon.ok_or_else(|| anyhow!("init.epsilon: required"))?,
        },
        "low-rank" => InitScheme::LowRank {
            rank: cfg.init.rank.ok_or_else(|| anyhow!("init.rank: required"))?,
            sigma: cfg.init.sigma.ok_or_else(|| anyhow!("init.sigma: required"))?,
            delta: cfg.init.delta.unwrap_or(0.0),
        },
        "manifold-adjacent" => InitScheme::ManifoldAdjacent {
            constraints: cfg
                .init
                .equal_pairs
                .iter()
                .map(|&[i, j]| plateau_core::manifold::ManifoldConstraint::Equal { i, j })
                .collect(),
            delta: cfg.init.delta.unwrap_or(0.0),
        },
        other => bail!("init.scheme: unknown scheme `{other}`"),
    };
    let mut net = plateau_core::data::init_weights(&kind, cfg.model.h, &InitSpec { scheme, seed: init_seed })?;

    // attach the out map, its matrices drawn from the outmap substream
    let out_seed = substream_seed(cfg.seed, "outmap");
    let eps = cfg.init.epsilon.unwrap_or(0.005);
    net = match cfg.model.out_map.as_str() {
        "identity" => net,
        "chain" => {
            if cfg.model.chain_dims.is_empty() {
                bail!("model.chain_dims: required for chain out maps");
            }
            let dims: Vec<(usize, usize)> =
                cfg.model.chain_dims.iter().map(|&[r, c]| (r, c)).collect();
            let mats = init_matrices(&dims, eps, out_seed);
            UnitLayerNet::new(kind.clone(), net.units, OutMap::LinearChain { mats })?
        }
        skip @ ("skip-none" | "skip-1" | "skip-2") => {
            let h = cfg.model.h;
            let out = cfg.model.skip_out.ok_or_else(|| anyhow!("model.skip_out: required"))?;
            let mats = init_matrices(&[(h, h), (out, h)], eps, out_seed);
            let pattern = match skip {
                "skip-1" => SkipPattern::Skip1,
                "skip-2" => SkipPattern::Skip2,
                _ => SkipPattern::None,
            };
            UnitLayerNet::new(
                kind.clone(),
                net.units,
                OutMap::SkipLinear { w3: mats[0].clone(), w4: mats[1].clone(), pattern },
            )?
        }
        other => bail!("model.out_map: unknown out map `{other}`"),
    };

    Ok(PreparedRun { kind, dataset, prescribed, net })
}

/// The loss model a run trains on: prescribed statistics when requested and
/// available, the sampled dataset otherwise.
pub fn loss_model<'a>(cfg: &ExperimentConfig, run: &'a PreparedRun) -> Result<LossModel<'a>> {
    if cfg.data.prescribed_stats {
        let stats = run
            .prescribed
            .as_ref()
            .ok_or_else(|| anyhow!("data.prescribed_stats: source has no prescribed statistics"))?;
        return Ok(match run.kind {
            ActivationKind::LinearFc { .. } => LossModel::LinearStats(stats),
            ActivationKind::QuadraticFc { .. } => LossModel::QuadStats(stats),
            _ => bail!("data.prescribed_stats: statistics-driven dynamics needs a plain linear or quadratic model"),
        });
    }
    Ok(LossModel::Data(&run.dataset))
}

pub struct RunOutput {
    pub trajectory: Trajectory,
    pub report: PlateauReport,
    pub summary: serde_json::Value,
}

/// Execute one config and write its artifact bundle under `out_dir`.
pub fn run_single(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.resolved.toml"), cfg.to_toml_string())?;

    let run = prepare(cfg)?;
    let model = loss_model(cfg, &run)?;
    let opts = IntegrateOpts {
        eta: cfg.train.eta,
        steps: cfg.train.steps,
        record_every: cfg.train.record_every,
        snapshot_every: cfg.train.snapshot_every,
        scheme: cfg.scheme(),
    };
    let traj = integrate(&run.net, &model, &opts).context("integration")?;
    traj.write_csv(out_dir.join("trajectory.csv"))?;

    let snap_dir = out_dir.join("snapshots");
    std::fs::create_dir_all(&snap_dir)?;
    for (step, net) in &traj.snapshots {
        plateau_core::dynamics::write_snapshot_csv(
            snap_dir.join(format!("step_{step:08}.csv")),
            *step,
            net,
        )?;
    }

    let min_len = cfg.analysis.min_len_frac * traj.total_time();
    let report = detect_plateaus_with(&traj, cfg.analysis.slope_tol, min_len, cfg.analysis.width_tol)?;
    let plateaus_json = report_json(&report);
    std::fs::write(
        out_dir.join("plateaus.json"),
        serde_json::to_string_pretty(&plateaus_json)?,
    )?;

    let predictions = if cfg.analysis.theory {
        let p = predictions_json(cfg, &run, out_dir)?;
        std::fs::write(out_dir.join("predictions.json"), serde_json::to_string_pretty(&p)?)?;
        Some(p)
    } else {
        None
    };

    let summary = summary_json(cfg, &traj, &report, predictions.as_ref());
    std::fs::write(out_dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(RunOutput { trajectory: traj, report, summary })
}

pub fn report_json(report: &PlateauReport) -> serde_json::Value {
    serde_json::json!({
        "segments": report.segments.iter().map(|s| serde_json::json!({
            "t_start": s.t_start,
            "t_end": s.t_end,
            "mean_loss": s.mean_loss,
            "effective_width": s.effective_width,
            "class": match s.class {
                PlateauClass::Initial => "initial",
                PlateauClass::Intermediate => "intermediate",
                PlateauClass::Final => "final",
            },
        })).collect::<Vec<_>>(),
        "transitions": report.transitions.iter().map(|t| serde_json::json!({
            "t_mid": t.t_mid,
            "loss_drop": t.loss_drop,
        })).collect::<Vec<_>>(),
    })
}

fn predictions_json(
    _cfg: &ExperimentConfig,
    run: &PreparedRun,
    out_dir: &Path,
) -> Result<serde_json::Value> {
    let stats = match &run.prescribed {
        Some(s) => s.clone(),
        None => compute_stats(&run.dataset, &run.kind)?,
    };
    match &run.kind {
        ActivationKind::LinearFc { .. } | ActivationKind::Conv1dLinear { .. }
        | ActivationKind::ReluFc { .. } | ActivationKind::Conv1dRelu { .. } => {
            let decomp = spectral(&stats, SpectralCase::LinearSvd)?;
            let escape = theory::escape_time(&decomp, &run.net);
            // the full saddle atlas exists for the plain linear network
            if matches!(run.kind, ActivationKind::LinearFc { .. })
                && matches!(run.net.out_map, OutMap::Identity)
            {
                if let Ok(saddles) = enumerate_linear_saddles(&stats, &SaddleSelector::All) {
                    write_saddle_atlas_csv(out_dir.join("saddle_atlas.csv"), &saddles)?;
                }
            }
            Ok(theory::prediction_report_json(&[escape], None, &decomp.s))
        }
        ActivationKind::QuadraticFc { .. } => {
            let decomp = spectral(&stats, SpectralCase::QuadEig)?;
            let coords: Vec<_> = run
                .net
                .units
                .iter()
                .map(|u| quad_coords(u, &decomp))
                .collect::<plateau_core::Result<_>>()?;
            let pred = unit_order_prediction(&coords, &decomp)?;
            Ok(theory::prediction_report_json(&[], Some(&pred), &decomp.s))
        }
        ActivationKind::LinearAttention { embed_dim, .. } => {
            let decomp = spectral(&stats, SpectralCase::QuadEig)?;
            // scalar readout proxy: the label→label entry of each head's V
            let d1 = embed_dim + 1;
            let coords: Vec<_> = run
                .net
                .units
                .iter()
                .map(|unit| {
                    let mut c = quad_coords(
                        &plateau_core::UnitParams::new(
                            nalgebra::DVector::from_element(1, unit.v[(d1 - 1) * d1 + (d1 - 1)]),
                            unit.u.clone(),
                        ),
                        &decomp,
                    )?;
                    c.v = unit.v[(d1 - 1) * d1 + (d1 - 1)];
                    Ok(c)
                })
                .collect::<plateau_core::Result<_>>()?;
            let t_inf: Vec<f64> = coords
                .iter()
                .map(|c| t_infinity(c, &decomp))
                .collect::<plateau_core::Result<_>>()?;
            Ok(serde_json::json!({
                "escape_times": [],
                "t_infinity_per_unit": t_inf,
                "predicted_order": null,
                "spectrum": decomp.s,
            }))
        }
        _ => Ok(serde_json::json!({
            "escape_times": [],
            "t_infinity_per_unit": null,
            "predicted_order": null,
            "spectrum": [],
        })),
    }
}

fn summary_json(
    cfg: &ExperimentConfig,
    traj: &Trajectory,
    report: &PlateauReport,
    predictions: Option<&serde_json::Value>,
) -> serde_json::Value {
    let widths: Vec<Option<usize>> = report.segments.iter().map(|s| s.effective_width).collect();
    serde_json::json!({
        "seed": cfg.seed,
        "initial_loss": traj.losses.first(),
        "final_loss": traj.final_loss(),
        "total_time": traj.total_time(),
        "plateau_count": report.segments.len(),
        "intermediate_plateau_count": report.intermediate_count(),
        "total_plateau_time": report.total_plateau_time(),
        "effective_widths_per_plateau": widths,
        "plateaus": report_json(report)["segments"],
        "transitions": report_json(report)["transitions"],
        "predictions": predictions,
    })
}

/// Execute a config, expanding its sweep axis if present. Sweep points run
/// in parallel, each in `point_<label>/`, and an aggregate
/// `sweep_summary.json` is written at the root.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<(String, serde_json::Value)>> {
    match &cfg.sweep {
        None => {
            let out = run_single(cfg, out_dir)?;
            Ok(vec![("run".to_string(), out.summary)])
        }
        Some(sweep) => {
            let base_toml = cfg.to_toml_string();
            let mut points = Vec::new();
            let mut run_index: u64 = 0;
            for value in &sweep.values {
                for replica in 0..sweep.seeds.max(1) {
                    let label = format!("{}={}_seed{replica}", sweep.key, mask_label(value));
                    points.push((label, sweep.key.clone(), value.clone(), run_index));
                    run_index += 1;
                }
            }
            let results: Result<Vec<(String, serde_json::Value)>> = points
                .par_iter()
                .map(|(label, key, value, idx)| {
                    let mut tree: toml::Value = toml::from_str(&base_toml)?;
                    crate::config::set_path(&mut tree, key, value.clone())?;
                    // each point owns an isolated seed substream
                    crate::config::set_path(
                        &mut tree,
                        "seed",
                        toml::Value::Integer((cfg.seed ^ idx) as i64),
                    )?;
                    let table = tree.as_table_mut().unwrap();
                    table.remove("sweep");
                    let point_cfg: ExperimentConfig =
                        tree.try_into().map_err(|e| anyhow!("{e}"))?;
                    point_cfg.validate()?;
                    let dir = out_dir.join(format!("point_{label}"));
                    let out = run_single(&point_cfg, &dir)?;
                    Ok((label.clone(), out.summary))
                })
                .collect();
            let results = results?;
            std::fs::create_dir_all(out_dir)?;
            let agg: Vec<serde_json::Value> = results
                .iter()
                .map(|(label, summary)| serde_json::json!({ "point": label, "summary": summary }))
                .collect();
            std::fs::write(
                out_dir.join("sweep_summary.json"),
                serde_json::to_string_pretty(&serde_json::Value::Array(agg))?,
            )?;
            Ok(results)
        }
    }
}

pub fn default_out_dir(cfg: &ExperimentConfig, fallback: &str) -> PathBuf {
    PathBuf::from(cfg.output_dir.clone().unwrap_or_else(|| fallback.to_string()))
}
