//! Gradient flow integrated as small-step gradient descent, trajectory
//! recording, loss-plateau detection, and effective-width estimates.

use crate::data::LossModel;
use crate::error::{CoreError, Result};
use crate::net::{ActivationKind, Gradient, OutMap, UnitLayerNet};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

#[derive(Clone, Debug)]
pub struct IntegrateOpts {
    pub eta: f64,
    pub steps: u64,
    pub record_every: u64,
    /// Snapshot cadence; `None` keeps roughly 100 evenly spaced snapshots.
    pub snapshot_every: Option<u64>,
    pub scheme: Scheme,
}

impl IntegrateOpts {
    pub fn euler(eta: f64, steps: u64, record_every: u64) -> Self {
        Self { eta, steps, record_every, snapshot_every: None, scheme: Scheme::Euler }
    }
}

/// Recorded loss/metric series and sparse parameter snapshots of one run.
/// Times are training-time units t = step·η so gradient-flow predictions
/// apply without rescaling.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub steps: Vec<u64>,
    pub times: Vec<f64>,
    pub losses: Vec<f64>,
    pub metrics: BTreeMap<String, Vec<f64>>,
    pub snapshots: Vec<(u64, UnitLayerNet)>,
    pub final_net: UnitLayerNet,
    pub eta: f64,
}

impl Trajectory {
    pub fn total_time(&self) -> f64 {
        *self.times.last().unwrap_or(&0.0)
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap_or(&f64::NAN)
    }

    /// Snapshot whose step is closest to time t.
    pub fn snapshot_near(&self, t: f64) -> Option<&(u64, UnitLayerNet)> {
        self.snapshots.iter().min_by(|a, b| {
            let da = (a.0 as f64 * self.eta - t).abs();
            let db = (b.0 as f64 * self.eta - t).abs();
            da.partial_cmp(&db).unwrap()
        })
    }

    /// CSV export with header `step,time,loss,metric:*`.
    pub fn write_csv<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        use std::io::Write;
        let mut f = std::fs::File::create(path)?;
        let names: Vec<&String> = self.metrics.keys().collect();
        let mut header = String::from("step,time,loss");
        for n in &names {
            header.push_str(&format!(",metric:{n}"));
        }
        writeln!(f, "{header}")?;
        for k in 0..self.steps.len() {
            let mut row = format!("{},{:.12e},{:.12e}", self.steps[k], self.times[k], self.losses[k]);
            for n in &names {
                row.push_str(&format!(",{:.12e}", self.metrics[*n][k]));
            }
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// Flat CSV of one parameter snapshot keyed by (step, unit, role, index).
/// Out-map matrices use roles `w0`, `w1`, ... with row-major flat indices.
pub fn write_snapshot_csv<P: AsRef<std::path::Path>>(
    path: P,
    step: u64,
    net: &UnitLayerNet,
) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "step,unit,role,index,value")?;
    for (i, unit) in net.units.iter().enumerate() {
        for (k, v) in unit.v.iter().enumerate() {
            writeln!(f, "{step},{i},v,{k},{v:.17e}")?;
        }
        for (k, u) in unit.u.iter().enumerate() {
            writeln!(f, "{step},{i},u,{k},{u:.17e}")?;
        }
    }
    let mats: Vec<&nalgebra::DMatrix<f64>> = match &net.out_map {
        OutMap::Identity => vec![],
        OutMap::LinearChain { mats } => mats.iter().collect(),
        OutMap::SkipLinear { w3, w4, .. } => vec![w3, w4],
    };
    for (l, m) in mats.iter().enumerate() {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                writeln!(f, "{step},0,w{l},{},{:.17e}", r * m.ncols() + c, m[(r, c)])?;
            }
        }
    }
    Ok(())
}

fn apply_step(net: &mut UnitLayerNet, g: &Gradient, scale: f64) {
    for (unit, gu) in net.units.iter_mut().zip(g.units.iter()) {
        unit.v.axpy(scale, &gu.v, 1.0);
        unit.u.axpy(scale, &gu.u, 1.0);
    }
    match &mut net.out_map {
        OutMap::Identity => {}
        OutMap::LinearChain { mats } => {
            for (m, gm) in mats.iter_mut().zip(g.out.iter()) {
                *m += scale * gm;
            }
        }
        OutMap::SkipLinear { w3, w4, .. } => {
            *w3 += scale * &g.out[0];
            *w4 += scale * &g.out[1];
        }
    }
}

fn rk4_step(net: &UnitLayerNet, model: &LossModel, eta: f64) -> Result<UnitLayerNet> {
    // classical 4-stage integration of θ' = -∇L
    let k1 = crate::grad(net, model)?;
    let mut mid1 = net.clone();
    apply_step(&mut mid1, &k1, -0.5 * eta);
    let k2 = crate::grad(&mid1, model)?;
    let mut mid2 = net.clone();
    apply_step(&mut mid2, &k2, -0.5 * eta);
    let k3 = crate::grad(&mid2, model)?;
    let mut end = net.clone();
    apply_step(&mut end, &k3, -eta);
    let k4 = crate::grad(&end, model)?;
    let mut out = net.clone();
    apply_step(&mut out, &k1, -eta / 6.0);
    apply_step(&mut out, &k2, -eta / 3.0);
    apply_step(&mut out, &k3, -eta / 3.0);
    apply_step(&mut out, &k4, -eta / 6.0);
    Ok(out)
}

/// Integrate gradient flow, calling `observe(step, state)` after every step
/// (and once at step 0).
pub fn integrate_with_observer<F: FnMut(u64, &UnitLayerNet)>(
    net: &UnitLayerNet,
    model: &LossModel,
    opts: &IntegrateOpts,
    mut observe: F,
) -> Result<Trajectory> {
    if opts.eta <= 0.0 {
        return Err(CoreError::InvalidInput("step size must be positive".into()));
    }
    if opts.scheme == Scheme::Rk4 && !net.activation.is_smooth() {
        return Err(CoreError::Unsupported(
            "rk4 is permitted only for smooth activation kinds".into(),
        ));
    }
    let record_every = opts.record_every.max(1);
    let snapshot_every = opts
        .snapshot_every
        .unwrap_or_else(|| (opts.steps / 100).max(1));

    let mut state = net.clone();
    let mut traj = Trajectory {
        steps: Vec::new(),
        times: Vec::new(),
        losses: Vec::new(),
        metrics: BTreeMap::new(),
        snapshots: Vec::new(),
        final_net: net.clone(),
        eta: opts.eta,
    };
    for name in ["sv1", "sv2", "sv3", "unit_norm_max"] {
        traj.metrics.insert(name.to_string(), Vec::new());
    }

    let mut last_finite = state.clone();
    let mut last_loss = f64::NAN;
    observe(0, &state);
    for step in 0..=opts.steps {
        let record = step % record_every == 0 || step == opts.steps;
        let snapshot = step % snapshot_every == 0 || step == opts.steps;
        if record {
            let l = crate::loss(&state, model)?;
            if !l.is_finite() {
                return Err(CoreError::Diverged { step, last: Box::new(last_finite) });
            }
            last_loss = l;
            last_finite = state.clone();
            traj.steps.push(step);
            traj.times.push(step as f64 * opts.eta);
            traj.losses.push(l);
            record_metrics(&state, &mut traj.metrics);
        }
        if snapshot {
            traj.snapshots.push((step, state.clone()));
        }
        if step == opts.steps {
            break;
        }
        match opts.scheme {
            Scheme::Euler => {
                let g = crate::grad(&state, model)?;
                if !g.norm_squared().is_finite() {
                    return Err(CoreError::Diverged { step, last: Box::new(last_finite) });
                }
                apply_step(&mut state, &g, -opts.eta);
            }
            Scheme::Rk4 => {
                state = rk4_step(&state, model, opts.eta)?;
            }
        }
        observe(step + 1, &state);
    }
    let _ = last_loss;
    traj.final_net = state;
    Ok(traj)
}

/// Integrate gradient flow as θ ← θ − η∇L (euler) or classical four-stage
/// integration (rk4), recording losses every `record_every` steps.
pub fn integrate(net: &UnitLayerNet, model: &LossModel, opts: &IntegrateOpts) -> Result<Trajectory> {
    integrate_with_observer(net, model, opts, |_, _| {})
}

fn record_metrics(net: &UnitLayerNet, metrics: &mut BTreeMap<String, Vec<f64>>) {
    let u = net.first_layer_matrix();
    let mut sv: Vec<f64> = u.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (k, name) in ["sv1", "sv2", "sv3"].iter().enumerate() {
        metrics.get_mut(*name).unwrap().push(sv.get(k).copied().unwrap_or(0.0));
    }
    let max_norm = net.units.iter().map(|u| u.norm()).fold(0.0, f64::max);
    metrics.get_mut("unit_norm_max").unwrap().push(max_norm);
}

/// How a plateau sits inside the trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlateauClass {
    Initial,
    Intermediate,
    Final,
}

#[derive(Clone, Debug)]
pub struct PlateauSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub mean_loss: f64,
    pub effective_width: Option<usize>,
    pub class: PlateauClass,
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub t_mid: f64,
    pub loss_drop: f64,
}

#[derive(Clone, Debug, Default)]
pub struct PlateauReport {
    pub segments: Vec<PlateauSegment>,
    pub transitions: Vec<Transition>,
}

impl PlateauReport {
    pub fn intermediate_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.class == PlateauClass::Intermediate)
            .count()
    }

    pub fn total_plateau_time(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.class != PlateauClass::Final)
            .map(|s| s.t_end - s.t_start)
            .sum()
    }
}

/// Maximal intervals where |d(log loss)/dt| (central differences on the
/// recorded grid) stays below `slope_tol` for at least `min_len` time units.
pub fn detect_plateau_segments(
    times: &[f64],
    losses: &[f64],
    slope_tol: f64,
    min_len: f64,
) -> Vec<(usize, usize)> {
    let n = times.len();
    if n < 2 {
        return Vec::new();
    }
    let logl: Vec<f64> = losses.iter().map(|l| l.max(1e-300).ln()).collect();
    let slope = |k: usize| -> f64 {
        let (a, b) = if k == 0 {
            (0, 1)
        } else if k == n - 1 {
            (n - 2, n - 1)
        } else {
            (k - 1, k + 1)
        };
        (logl[b] - logl[a]) / (times[b] - times[a])
    };
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    for k in 0..n {
        if slope(k).abs() < slope_tol {
            if start.is_none() {
                start = Some(k);
            }
        } else if let Some(s) = start.take() {
            runs.push((s, k - 1));
        }
    }
    if let Some(s) = start {
        runs.push((s, n - 1));
    }
    runs.into_iter()
        .filter(|&(s, e)| times[e] - times[s] >= min_len)
        .collect()
}

/// Detect plateaus and classify them as initial / intermediate / final.
/// Effective widths are measured at the snapshot nearest each segment's
/// midpoint using the default mode for the activation kind.
pub fn detect_plateaus(traj: &Trajectory, slope_tol: f64, min_len: f64) -> Result<PlateauReport> {
    detect_plateaus_with(traj, slope_tol, min_len, DEFAULT_WIDTH_TOL)
}

/// As [`detect_plateaus`], with an explicit effective-width tolerance.
pub fn detect_plateaus_with(
    traj: &Trajectory,
    slope_tol: f64,
    min_len: f64,
    width_tol: f64,
) -> Result<PlateauReport> {
    if traj.times.len() < 2 {
        return Err(CoreError::InvalidInput("trajectory has fewer than 2 points".into()));
    }
    // raw flat runs first; floor-level noise can fragment one plateau, so
    // adjacent runs at the same loss level are merged before the length cut
    let mut runs = detect_plateau_segments(&traj.times, &traj.losses, slope_tol, 0.0);
    let level = |&(s, e): &(usize, usize)| -> f64 {
        (traj.losses[s..=e].iter().sum::<f64>() / (e - s + 1) as f64).max(1e-300).ln()
    };
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs.drain(..) {
        match merged.last_mut() {
            Some(prev) if (level(prev) - level(&run)).abs() < 0.1 => prev.1 = run.1,
            _ => merged.push(run),
        }
    }
    let runs: Vec<(usize, usize)> = merged
        .into_iter()
        .filter(|&(s, e)| traj.times[e] - traj.times[s] >= min_len)
        .collect();
    let t_total = traj.total_time();
    let slack = (min_len * 0.5).max(traj.times[1] - traj.times[0]);
    let width_mode = default_width_mode(&traj.final_net.activation);
    let mut segments = Vec::with_capacity(runs.len());
    for &(s, e) in &runs {
        let t_start = traj.times[s];
        let t_end = traj.times[e];
        let mean_loss = traj.losses[s..=e].iter().sum::<f64>() / (e - s + 1) as f64;
        let class = if t_start <= slack {
            PlateauClass::Initial
        } else if t_end >= t_total - slack {
            PlateauClass::Final
        } else {
            PlateauClass::Intermediate
        };
        // sample early in the segment: the next mode is already growing by
        // the back half of a plateau
        let probe_t = t_start + 0.25 * (t_end - t_start);
        let effective_width = match (&width_mode, traj.snapshot_near(probe_t)) {
            (Some(mode), Some((_, net))) => effective_width(net, *mode, width_tol).ok(),
            _ => None,
        };
        segments.push(PlateauSegment { t_start, t_end, mean_loss, effective_width, class });
    }
    let mut transitions = Vec::new();
    for w in segments.windows(2) {
        transitions.push(Transition {
            t_mid: 0.5 * (w[0].t_end + w[1].t_start),
            loss_drop: w[0].mean_loss - w[1].mean_loss,
        });
    }
    Ok(PlateauReport { segments, transitions })
}

pub const DEFAULT_WIDTH_TOL: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WidthMode {
    /// Numerical rank of the stacked first-layer weights.
    Rank,
    /// Direction clusters of unit vectors θ_i/‖θ_i‖ (greedy leader
    /// clustering in cosine distance, deterministic in unit order).
    Rays,
    /// Units with ‖θ_i‖ above tolerance.
    ActiveUnits,
}

/// The width mode matching the activation family, if any.
pub fn default_width_mode(kind: &ActivationKind) -> Option<WidthMode> {
    if kind.is_linear_in_u() {
        Some(WidthMode::Rank)
    } else if kind.homogeneity().is_some() {
        Some(WidthMode::Rays)
    } else if kind.has_u_zero() {
        Some(WidthMode::ActiveUnits)
    } else {
        None
    }
}

/// Minimal number of units needed to express the network's current map,
/// per the family-appropriate operationalization:
///   rank         – singular values of the stacked first-layer weights above
///                  tol·s_max (0 when s_max itself is below tol)
///   rays         – direction clusters with pairwise cosine > 1−tol among
///                  units with ‖θ_i‖ > tol
///   active-units – count of ‖θ_i‖ > tol
pub fn effective_width(net: &UnitLayerNet, mode: WidthMode, tol: f64) -> Result<usize> {
    match mode {
        WidthMode::Rank => {
            if !net.activation.is_linear_in_u() {
                return Err(CoreError::InvalidInput(format!(
                    "rank mode applies to linear kinds, not {}",
                    net.activation.name()
                )));
            }
            let u = net.first_layer_matrix();
            let mut sv: Vec<f64> = u.svd(false, false).singular_values.iter().copied().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if sv.is_empty() || sv[0] <= tol {
                return Ok(0);
            }
            Ok(sv.iter().filter(|&&s| s > tol * sv[0]).count())
        }
        WidthMode::Rays => {
            if net.activation.homogeneity().is_none() {
                return Err(CoreError::InvalidInput(format!(
                    "rays mode applies to positively homogeneous kinds, not {}",
                    net.activation.name()
                )));
            }
            let mut leaders: Vec<nalgebra::DVector<f64>> = Vec::new();
            for unit in &net.units {
                let t = unit.theta();
                let n = t.norm();
                if n <= tol {
                    continue;
                }
                let dir = t / n;
                if !leaders.iter().any(|l| l.dot(&dir) > 1.0 - tol) {
                    leaders.push(dir);
                }
            }
            Ok(leaders.len())
        }
        WidthMode::ActiveUnits => {
            if !net.activation.has_u_zero() {
                return Err(CoreError::InvalidInput(format!(
                    "active-units mode needs φ(z; 0) = 0, which {} lacks",
                    net.activation.name()
                )));
            }
            // coincident units merge into one (an equal-weights pair is
            // expressible by a single unit with doubled v)
            let mut leaders: Vec<nalgebra::DVector<f64>> = Vec::new();
            for unit in &net.units {
                let t = unit.theta();
                if t.norm() <= tol {
                    continue;
                }
                if !leaders
                    .iter()
                    .any(|l| (l - &t).norm() <= tol * l.norm().max(t.norm()))
                {
                    leaders.push(t);
                }
            }
            Ok(leaders.len())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, LossModel};
    use crate::net::{OutMap, UnitParams};
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn scalar_linear_data() -> Dataset {
        Dataset::from_vectors(
            vec![DVector::from_element(1, 1.0)],
            vec![DVector::from_element(1, 1.0)],
            "t",
        )
    }

    #[test]
    fn scalar_factorized_regression_converges_monotonically() {
        let kind = ActivationKind::LinearFc { input_dim: 1, output_dim: 1 };
        let net = UnitLayerNet::new(
            kind,
            vec![UnitParams::new(DVector::from_element(1, 0.01), DVector::from_element(1, 0.01))],
            OutMap::Identity,
        )
        .unwrap();
        let data = scalar_linear_data();
        let traj = integrate(
            &net,
            &LossModel::Data(&data),
            &IntegrateOpts::euler(0.05, 2000, 10),
        )
        .unwrap();
        for w in traj.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        assert!(traj.final_loss() < 1e-10);
    }

    #[test]
    fn fixed_point_stays_exactly_fixed_under_euler() {
        // zero net with φ(z;0)=0 has exactly zero gradient
        let kind = ActivationKind::QuadraticFc { input_dim: 2 };
        let net = UnitLayerNet::zeros(kind, 3).unwrap();
        let data = Dataset::from_vectors(
            vec![DVector::from_vec(vec![1.0, 2.0])],
            vec![DVector::from_element(1, 1.5)],
            "t",
        );
        let traj = integrate(
            &net,
            &LossModel::Data(&data),
            &IntegrateOpts::euler(0.1, 100, 10),
        )
        .unwrap();
        for (a, b) in traj.final_net.units.iter().zip(net.units.iter()) {
            assert_eq!(a.theta(), b.theta());
        }
    }

    #[test]
    fn rk4_rejected_for_relu() {
        let kind = ActivationKind::ReluFc { input_dim: 2, output_dim: 1 };
        let net = UnitLayerNet::zeros(kind, 1).unwrap();
        let data = Dataset::from_vectors(
            vec![DVector::from_vec(vec![1.0, 0.0])],
            vec![DVector::from_element(1, 1.0)],
            "t",
        );
        let mut opts = IntegrateOpts::euler(0.01, 10, 1);
        opts.scheme = Scheme::Rk4;
        assert!(integrate(&net, &LossModel::Data(&data), &opts).is_err());
    }

    #[test]
    fn divergence_carries_last_finite_state() {
        let kind = ActivationKind::LinearFc { input_dim: 1, output_dim: 1 };
        let net = UnitLayerNet::new(
            kind,
            vec![UnitParams::new(DVector::from_element(1, 2.0), DVector::from_element(1, 1.5))],
            OutMap::Identity,
        )
        .unwrap();
        let data = scalar_linear_data();
        // η far beyond stability
        let r = integrate(&net, &LossModel::Data(&data), &IntegrateOpts::euler(50.0, 500, 1));
        match r {
            Err(CoreError::Diverged { step, last }) => {
                assert!(step > 0);
                assert!(last.units[0].theta().iter().all(|x| x.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn synthetic_piecewise_loss_has_two_segments_one_transition() {
        let mut times = Vec::new();
        let mut losses = Vec::new();
        for k in 0..=200 {
            let t = k as f64 * 0.1;
            times.push(t);
            losses.push(if t < 10.0 { 1.0 } else { 0.1 });
        }
        let runs = detect_plateau_segments(&times, &losses, 1e-3, 2.0);
        assert_eq!(runs.len(), 2);
        // the transition sits near t = 10
        let gap_mid = 0.5 * (times[runs[0].1] + times[runs[1].0]);
        assert!((gap_mid - 10.0).abs() < 0.5, "gap at {gap_mid}");
    }

    #[test]
    fn pure_exponential_has_no_plateau() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let losses: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let runs = detect_plateau_segments(&times, &losses, 1e-3, 0.5);
        assert!(runs.is_empty());
    }

    #[test]
    fn plateau_detection_invariant_under_time_rescaling() {
        let times: Vec<f64> = (0..=300).map(|k| k as f64 * 0.05).collect();
        let losses: Vec<f64> = times
            .iter()
            .map(|&t| if t < 5.0 { 1.0 } else { (5.0 - t).exp().max(0.01) })
            .collect();
        let base = detect_plateau_segments(&times, &losses, 1e-2, 1.0);
        let scaled_times: Vec<f64> = times.iter().map(|t| t * 10.0).collect();
        let scaled = detect_plateau_segments(&scaled_times, &losses, 1e-3, 10.0);
        assert_eq!(base, scaled);
    }

    #[test]
    fn identical_units_have_width_one_in_every_mode() {
        let unit = UnitParams::new(DVector::from_element(1, 1.0), DVector::from_vec(vec![1.0, 2.0]));
        for (kind, mode) in [
            (
                ActivationKind::LinearFc { input_dim: 2, output_dim: 1 },
                WidthMode::Rank,
            ),
            (
                ActivationKind::ReluFc { input_dim: 2, output_dim: 1 },
                WidthMode::Rays,
            ),
            (ActivationKind::QuadraticFc { input_dim: 2 }, WidthMode::ActiveUnits),
        ] {
            let net = UnitLayerNet::new(kind, vec![unit.clone(); 4], OutMap::Identity).unwrap();
            assert_eq!(effective_width(&net, mode, 0.05).unwrap(), 1);
        }
    }

    #[test]
    fn generic_rank_saturates_at_input_dim() {
        use rand::SeedableRng;
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let kind = ActivationKind::LinearFc { input_dim: 2, output_dim: 2 };
        let units: Vec<UnitParams> = (0..10)
            .map(|_| {
                UnitParams::new(
                    DVector::from_fn(2, |_, _| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)),
                    DVector::from_fn(2, |_, _| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)),
                )
            })
            .collect();
        let net = UnitLayerNet::new(kind, units, OutMap::Identity).unwrap();
        assert_eq!(effective_width(&net, WidthMode::Rank, 0.05).unwrap(), 2);
    }

    #[test]
    fn zero_net_has_width_zero() {
        let kind = ActivationKind::LinearFc { input_dim: 2, output_dim: 2 };
        let net = UnitLayerNet::zeros(kind, 5).unwrap();
        assert_eq!(effective_width(&net, WidthMode::Rank, 0.05).unwrap(), 0);
    }

    #[test]
    fn euler_is_first_order_in_eta() {
        // halving η at fixed total time changes final loss by O(η)
        let data = crate::data::gen_dataset(&crate::data::GenKind::LinearFcTeacher { p: 64 }, 7).unwrap();
        let kind = ActivationKind::LinearFc { input_dim: 2, output_dim: 2 };
        let init = crate::data::init_weights(
            &kind,
            8,
            &crate::data::InitSpec {
                scheme: crate::data::InitScheme::Isotropic { eps: 0.3 },
                seed: 3,
            },
        )
        .unwrap();
        let model = LossModel::Data(&data);
        let total_time = 2.0;
        let run = |eta: f64| {
            let opts = IntegrateOpts::euler(eta, (total_time / eta) as u64, 1000000);
            integrate(&init, &model, &opts).unwrap().final_loss()
        };
        let l1 = run(0.02);
        let l2 = run(0.01);
        let l4 = run(0.005);
        let d12 = (l1 - l2).abs();
        let d24 = (l2 - l4).abs();
        assert!(d24 < d12, "first-order convergence: {d12} then {d24}");
        assert!(d12 / d24 > 1.5 && d12 / d24 < 3.0, "ratio {}", d12 / d24);
    }
}
