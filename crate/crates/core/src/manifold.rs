//! Invariant-manifold constraints between units: equal, zero, proportional,
//! and linearly dependent weights. Gradient flow preserves each of these on
//! the activation kinds where they are legal, which is what `drift_test`
//! checks numerically.

use crate::data::LossModel;
use crate::dynamics::{self, IntegrateOpts};
use crate::error::{CoreError, Result};
use crate::net::{HomogeneityField, UnitLayerNet, UnitParams};
use nalgebra::{DMatrix, DVector};

/// A constraint relating units of one network. `Proportional` with
/// `gamma: None` and `LinDep` with `coeffs: None` use the closed-form
/// optimal coefficients at evaluation time.
#[derive(Clone, Debug, PartialEq)]
pub enum ManifoldConstraint {
    Equal { i: usize, j: usize },
    Zero { i: usize },
    Proportional { i: usize, j: usize, gamma: Option<f64> },
    LinDep { i: usize, coeffs: Option<Vec<f64>> },
}

impl ManifoldConstraint {
    fn check_legal(&self, net: &UnitLayerNet) -> Result<()> {
        let h = net.width();
        let check_idx = |i: usize| -> Result<()> {
            if i >= h {
                Err(CoreError::InvalidInput(format!("unit index {i} out of range (H = {h})")))
            } else {
                Ok(())
            }
        };
        match self {
            ManifoldConstraint::Equal { i, j } => {
                check_idx(*i)?;
                check_idx(*j)?;
                if i == j {
                    return Err(CoreError::InvalidInput("equal constraint needs distinct units".into()));
                }
            }
            ManifoldConstraint::Zero { i } => {
                check_idx(*i)?;
                if !net.activation.has_u_zero() {
                    return Err(CoreError::Unsupported(format!(
                        "zero constraint needs φ(z; u_zero) = 0, which {} lacks",
                        net.activation.name()
                    )));
                }
            }
            ManifoldConstraint::Proportional { i, j, gamma } => {
                check_idx(*i)?;
                check_idx(*j)?;
                if i == j {
                    return Err(CoreError::InvalidInput("proportional constraint needs distinct units".into()));
                }
                let field = net.activation.homogeneity().ok_or_else(|| {
                    CoreError::Unsupported(format!(
                        "proportional constraint needs a degree-1 homogeneous kind, got {}",
                        net.activation.name()
                    ))
                })?;
                if let Some(g) = gamma {
                    if !field.contains(*g) {
                        return Err(CoreError::InvalidInput(format!(
                            "γ = {g} is outside the homogeneity field of {}",
                            net.activation.name()
                        )));
                    }
                }
            }
            ManifoldConstraint::LinDep { i, coeffs } => {
                check_idx(*i)?;
                if !net.activation.is_linear_in_u() {
                    return Err(CoreError::Unsupported(format!(
                        "linear-dependence constraint needs a kind linear in u, got {}",
                        net.activation.name()
                    )));
                }
                if let Some(c) = coeffs {
                    if c.len() != h - 1 {
                        return Err(CoreError::Shape(format!(
                            "expected {} coefficients, got {}",
                            h - 1,
                            c.len()
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolve optional coefficients to concrete values on a given net, so a
    /// drift test can monitor a fixed constraint.
    pub fn resolve(&self, net: &UnitLayerNet) -> Result<ManifoldConstraint> {
        self.check_legal(net)?;
        Ok(match self {
            ManifoldConstraint::Proportional { i, j, gamma: None } => ManifoldConstraint::Proportional {
                i: *i,
                j: *j,
                gamma: Some(optimal_gamma(net, *i, *j)),
            },
            ManifoldConstraint::LinDep { i, coeffs: None } => ManifoldConstraint::LinDep {
                i: *i,
                coeffs: Some(least_squares_coeffs(net, *i)?),
            },
            other => other.clone(),
        })
    }
}

/// Closed-form proportionality: γ = ⟨θ_i, θ_j⟩ / ‖θ_j‖², clamped to the
/// homogeneity field of the activation kind.
pub fn optimal_gamma(net: &UnitLayerNet, i: usize, j: usize) -> f64 {
    let ti = net.units[i].theta();
    let tj = net.units[j].theta();
    let denom = tj.norm_squared();
    let g = if denom == 0.0 { 0.0 } else { ti.dot(&tj) / denom };
    match net.activation.homogeneity() {
        Some(HomogeneityField::NonNegative) => g.max(0.0),
        _ => g,
    }
}

/// Least-squares coefficients expressing θ_i in span of the other units.
fn least_squares_coeffs(net: &UnitLayerNet, i: usize) -> Result<Vec<f64>> {
    let others: Vec<usize> = (0..net.width()).filter(|k| *k != i).collect();
    let dim = net.units[0].v.len() + net.units[0].u.len();
    let mut a = DMatrix::zeros(dim, others.len());
    for (col, &j) in others.iter().enumerate() {
        a.column_mut(col).copy_from(&net.units[j].theta());
    }
    let b = net.units[i].theta();
    let svd = a.svd(true, true);
    let sol = svd
        .solve(&b, 1e-12)
        .map_err(|e| CoreError::InvalidInput(format!("least squares failed: {e}")))?;
    Ok(sol.iter().copied().collect())
}

/// Constraint residual (Euclidean norm of the constraint violation).
pub fn residual(net: &UnitLayerNet, c: &ManifoldConstraint) -> Result<f64> {
    c.check_legal(net)?;
    Ok(match c {
        ManifoldConstraint::Equal { i, j } => (net.units[*i].theta() - net.units[*j].theta()).norm(),
        ManifoldConstraint::Zero { i } => net.units[*i].theta().norm(),
        ManifoldConstraint::Proportional { i, j, gamma } => {
            let g = gamma.unwrap_or_else(|| optimal_gamma(net, *i, *j));
            (net.units[*i].theta() - g * net.units[*j].theta()).norm()
        }
        ManifoldConstraint::LinDep { i, coeffs } => {
            let coeffs = match coeffs {
                Some(c) => c.clone(),
                None => least_squares_coeffs(net, *i)?,
            };
            let mut target = DVector::zeros(net.units[0].v.len() + net.units[0].u.len());
            for (col, j) in (0..net.width()).filter(|k| k != i).enumerate() {
                target.axpy(coeffs[col], &net.units[j].theta(), 1.0);
            }
            (net.units[*i].theta() - target).norm()
        }
    })
}

/// Minimal perturbation of the involved units that satisfies the constraint
/// exactly. Projection is idempotent.
pub fn project(net: &UnitLayerNet, c: &ManifoldConstraint) -> Result<UnitLayerNet> {
    c.check_legal(net)?;
    let mut out = net.clone();
    match c {
        ManifoldConstraint::Equal { i, j } => {
            let mean_v = (&net.units[*i].v + &net.units[*j].v) * 0.5;
            let mean_u = (&net.units[*i].u + &net.units[*j].u) * 0.5;
            out.units[*i] = UnitParams::new(mean_v.clone(), mean_u.clone());
            out.units[*j] = UnitParams::new(mean_v, mean_u);
        }
        ManifoldConstraint::Zero { i } => {
            out.units[*i] = UnitParams::zeros(net.units[*i].v.len(), net.units[*i].u.len());
        }
        ManifoldConstraint::Proportional { i, j, gamma } => {
            let g = gamma.unwrap_or_else(|| optimal_gamma(net, *i, *j));
            // closest pair (θ_i, θ_j) with θ_i = γ θ_j:
            // θ_j ← (θ_j + γ θ_i) / (1 + γ²), θ_i ← γ θ_j
            let ti = net.units[*i].theta();
            let tj = net.units[*j].theta();
            let new_j = (tj + g * ti) / (1.0 + g * g);
            let new_i = g * &new_j;
            let n_v = net.units[*i].v.len();
            out.units[*i] = UnitParams::from_theta(&new_i, n_v);
            out.units[*j] = UnitParams::from_theta(&new_j, n_v);
        }
        ManifoldConstraint::LinDep { i, coeffs } => {
            let n_v = net.units[0].v.len();
            match coeffs {
                Some(cs) => {
                    let mut target = DVector::zeros(n_v + net.units[0].u.len());
                    for (col, j) in (0..net.width()).filter(|k| k != i).enumerate() {
                        target.axpy(cs[col], &net.units[j].theta(), 1.0);
                    }
                    out.units[*i] = UnitParams::from_theta(&target, n_v);
                }
                None => {
                    let cs = least_squares_coeffs(net, *i)?;
                    let mut target = DVector::zeros(n_v + net.units[0].u.len());
                    for (col, j) in (0..net.width()).filter(|k| k != i).enumerate() {
                        target.axpy(cs[col], &net.units[j].theta(), 1.0);
                    }
                    out.units[*i] = UnitParams::from_theta(&target, n_v);
                }
            }
        }
    }
    Ok(out)
}

/// Variants of embedded fixed points that lie on invariant manifolds.
#[derive(Clone, Debug)]
pub enum ManifoldFpVariant {
    /// γ_v = 1/2 split of a donor unit; lands on the equal-weights manifold.
    Generic { donor: usize },
    /// Appended zero unit; lands on the zero-unit manifold.
    Zero,
    /// γ_v = γ_u/(1+γ_u²); lands on the proportional manifold with ratio γ_u.
    Homogeneous { donor: usize, gamma_u: f64 },
    /// γ_{v_i} = γ_{u_i}/(1+Σ γ_{u_j}²); lands on the linear-dependence manifold.
    Linear { gamma_u: Vec<f64> },
}

/// Embed a fixed point so that the result lies exactly on an invariant
/// manifold; returns the wider network together with the constraint it
/// satisfies. The appended unit is built directly from the modified donor
/// weights so the constraint residual is exactly zero in floating point,
/// not just algebraically.
pub fn manifold_fixed_point(
    base: &UnitLayerNet,
    variant: &ManifoldFpVariant,
) -> Result<(UnitLayerNet, ManifoldConstraint)> {
    use crate::landscape::{embed_unit, EmbeddingSpec};
    let h = base.width();
    match variant {
        // γ_v = ½: both the donor and the new unit carry v*/2
        ManifoldFpVariant::Generic { donor } => {
            let net = embed_unit(base, &EmbeddingSpec::Generic { donor: *donor, gamma_v: 0.5 })?;
            Ok((net, ManifoldConstraint::Equal { i: h, j: *donor }))
        }
        ManifoldFpVariant::Zero => {
            let net = embed_unit(base, &EmbeddingSpec::Zero)?;
            Ok((net, ManifoldConstraint::Zero { i: h }))
        }
        // γ_v = γ_u/(1+γ_u²): the donor keeps v*/(1+γ_u²) and the new unit
        // is exactly γ_u times the modified donor
        ManifoldFpVariant::Homogeneous { donor, gamma_u } => {
            let field = base.activation.homogeneity().ok_or_else(|| {
                CoreError::Unsupported(format!(
                    "homogeneous embedding needs a degree-1 homogeneous kind, got {}",
                    base.activation.name()
                ))
            })?;
            if !field.contains(*gamma_u) {
                return Err(CoreError::InvalidInput(format!(
                    "γ_u = {gamma_u} is outside the homogeneity field"
                )));
            }
            let mut units = base.units.clone();
            units[*donor].v /= 1.0 + gamma_u * gamma_u;
            let new = UnitParams::new(*gamma_u * &units[*donor].v, *gamma_u * &units[*donor].u);
            units.push(new);
            let net = UnitLayerNet::new(base.activation.clone(), units, base.out_map.clone())?;
            Ok((
                net,
                ManifoldConstraint::Proportional { i: h, j: *donor, gamma: Some(*gamma_u) },
            ))
        }
        // γ_{v_i} = γ_{u_i}/(1+Σγ_{u_j}²): the new unit is exactly the
        // γ_u-combination of the modified donors
        ManifoldFpVariant::Linear { gamma_u } => {
            if !base.activation.is_linear_in_u() {
                return Err(CoreError::Unsupported(format!(
                    "linear embedding needs a kind linear in u, got {}",
                    base.activation.name()
                )));
            }
            if gamma_u.len() != h {
                return Err(CoreError::Shape(format!("need {h} coefficients")));
            }
            let sum_sq: f64 = gamma_u.iter().map(|g| g * g).sum();
            let (n_v, n_u) = (base.activation.n_v(), base.activation.n_u());
            // v_H* = Σ γ_{v_i} v_i* with γ_{v_i} = γ_{u_i}/(1+Σγ²)
            let mut v_mix = DVector::zeros(n_v);
            for (unit, g) in base.units.iter().zip(gamma_u.iter()) {
                v_mix.axpy(g / (1.0 + sum_sq), &unit.v, 1.0);
            }
            let mut units = base.units.clone();
            for (unit, g) in units.iter_mut().zip(gamma_u.iter()) {
                unit.v.axpy(-*g, &v_mix, 1.0);
            }
            // rebuild the new unit from the modified donors so the
            // linear-dependence constraint holds bitwise
            let mut new_v = DVector::zeros(n_v);
            let mut new_u = DVector::zeros(n_u);
            for (unit, g) in units.iter().zip(gamma_u.iter()) {
                new_v.axpy(*g, &unit.v, 1.0);
                new_u.axpy(*g, &unit.u, 1.0);
            }
            units.push(UnitParams::new(new_v, new_u));
            let net = UnitLayerNet::new(base.activation.clone(), units, base.out_map.clone())?;
            Ok((net, ManifoldConstraint::LinDep { i: h, coeffs: Some(gamma_u.clone()) }))
        }
    }
}

/// Integrate while monitoring the constraint residual each step; returns the
/// residual time series (step, time, residual).
pub fn drift_series(
    net: &UnitLayerNet,
    c: &ManifoldConstraint,
    model: &LossModel,
    opts: &IntegrateOpts,
) -> Result<Vec<(u64, f64, f64)>> {
    let c = c.resolve(net)?;
    let mut series = Vec::with_capacity(opts.steps as usize + 1);
    let mut err = None;
    dynamics::integrate_with_observer(net, model, opts, |step, state| {
        if err.is_none() {
            match residual(state, &c) {
                Ok(r) => series.push((step, step as f64 * opts.eta, r)),
                Err(e) => err = Some(e),
            }
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(series)
}

/// Maximum constraint residual along a trajectory started exactly on the
/// manifold.
pub fn drift_test(
    net: &UnitLayerNet,
    c: &ManifoldConstraint,
    model: &LossModel,
    opts: &IntegrateOpts,
) -> Result<f64> {
    let resolved = c.resolve(net)?;
    let start = residual(net, &resolved)?;
    let scale = net.units.iter().map(|u| u.norm().powi(2)).sum::<f64>().sqrt();
    if start > 1e-9 * (1.0 + scale) {
        return Err(CoreError::NotOnManifold { residual: start, tol: 1e-9 * (1.0 + scale) });
    }
    let series = drift_series(net, &resolved, model, opts)?;
    Ok(series.iter().map(|(_, _, r)| *r).fold(0.0, f64::max))
}

/// Write a residual series as CSV (step, time, residual).
pub fn write_residual_csv<P: AsRef<std::path::Path>>(
    path: P,
    series: &[(u64, f64, f64)],
) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "step,time,residual")?;
    for (s, t, r) in series {
        writeln!(f, "{s},{t:.12e},{r:.12e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ActivationKind;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn net_h3() -> UnitLayerNet {
        let kind = ActivationKind::LinearFc { input_dim: 2, output_dim: 2 };
        let units = vec![
            UnitParams::new(DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.5, 1.0])),
            UnitParams::new(DVector::from_vec(vec![0.0, 2.0]), DVector::from_vec(vec![1.0, -1.0])),
            UnitParams::new(DVector::from_vec(vec![0.5, 1.0]), DVector::from_vec(vec![0.75, 0.0])),
        ];
        UnitLayerNet::new(kind, units, crate::net::OutMap::Identity).unwrap()
    }

    #[test]
    fn equal_residual_zero_on_equal_units() {
        let mut net = net_h3();
        net.units[1] = net.units[0].clone();
        let r = residual(&net, &ManifoldConstraint::Equal { i: 0, j: 1 }).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn proportional_residual_norm_arithmetic() {
        let mut net = net_h3();
        let t = net.units[1].theta() * 2.0;
        net.units[0] = UnitParams::from_theta(&t, 2);
        let r2 = residual(&net, &ManifoldConstraint::Proportional { i: 0, j: 1, gamma: Some(2.0) }).unwrap();
        assert_relative_eq!(r2, 0.0, epsilon = 1e-15);
        let r1 = residual(&net, &ManifoldConstraint::Proportional { i: 0, j: 1, gamma: Some(1.0) }).unwrap();
        assert_relative_eq!(r1, net.units[1].theta().norm(), epsilon = 1e-12);
    }

    #[test]
    fn lindep_residual_matches_least_squares_oracle() {
        // independent solve via normal equations
        let net = net_h3();
        let t0 = net.units[0].theta();
        let a = DMatrix::from_columns(&[net.units[1].theta(), net.units[2].theta()]);
        let gram = a.transpose() * &a;
        let rhs = a.transpose() * &t0;
        let sol = gram.lu().solve(&rhs).unwrap();
        let expected = (t0 - &a * sol).norm();
        let r = residual(&net, &ManifoldConstraint::LinDep { i: 0, coeffs: None }).unwrap();
        assert_relative_eq!(r, expected, epsilon = 1e-10);
    }

    #[test]
    fn project_equal_takes_mean() {
        let kind = ActivationKind::LinearFc { input_dim: 1, output_dim: 1 };
        let units = vec![
            UnitParams::new(DVector::from_element(1, 1.0), DVector::from_element(1, 0.0)),
            UnitParams::new(DVector::from_element(1, 0.0), DVector::from_element(1, 1.0)),
        ];
        let net = UnitLayerNet::new(kind, units, crate::net::OutMap::Identity).unwrap();
        let p = project(&net, &ManifoldConstraint::Equal { i: 0, j: 1 }).unwrap();
        for i in 0..2 {
            assert_relative_eq!(p.units[i].v[0], 0.5);
            assert_relative_eq!(p.units[i].u[0], 0.5);
        }
    }

    #[test]
    fn project_is_idempotent_and_satisfied_exactly() {
        let net = net_h3();
        for c in [
            ManifoldConstraint::Equal { i: 0, j: 1 },
            ManifoldConstraint::Zero { i: 2 },
            ManifoldConstraint::Proportional { i: 0, j: 2, gamma: Some(1.5) },
            ManifoldConstraint::Proportional { i: 1, j: 0, gamma: None },
            ManifoldConstraint::LinDep { i: 0, coeffs: None },
            ManifoldConstraint::LinDep { i: 1, coeffs: Some(vec![0.5, -0.25]) },
        ] {
            let p1 = project(&net, &c).unwrap();
            let resolved = c.resolve(&p1).unwrap();
            assert!(residual(&p1, &resolved).unwrap() < 1e-12, "{c:?}");
            let p2 = project(&p1, &c).unwrap();
            for (a, b) in p1.units.iter().zip(p2.units.iter()) {
                assert_relative_eq!(a.theta(), b.theta(), epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn proportional_projection_beats_random_manifold_points() {
        use rand::SeedableRng;
        use rand_distr::StandardNormal;
        let net = net_h3();
        let c = ManifoldConstraint::Proportional { i: 0, j: 1, gamma: Some(2.0) };
        let p = project(&net, &c).unwrap();
        let cost = |cand: &UnitLayerNet| -> f64 {
            (cand.units[0].theta() - net.units[0].theta()).norm_squared()
                + (cand.units[1].theta() - net.units[1].theta()).norm_squared()
        };
        let best = cost(&p);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let mut cand = p.clone();
            let noise = DVector::from_fn(4, |_, _| {
                0.3 * rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)
            });
            let tj = cand.units[1].theta() + noise;
            cand.units[1] = UnitParams::from_theta(&tj, 2);
            let ti = 2.0 * cand.units[1].theta();
            cand.units[0] = UnitParams::from_theta(&ti, 2);
            assert!(cost(&cand) >= best - 1e-12);
        }
    }

    #[test]
    fn relu_rejects_negative_gamma() {
        let kind = ActivationKind::ReluFc { input_dim: 2, output_dim: 1 };
        let units = vec![
            UnitParams::new(DVector::from_element(1, 1.0), DVector::from_vec(vec![1.0, 0.0])),
            UnitParams::new(DVector::from_element(1, -1.0), DVector::from_vec(vec![0.0, 1.0])),
        ];
        let net = UnitLayerNet::new(kind, units, crate::net::OutMap::Identity).unwrap();
        let r = residual(&net, &ManifoldConstraint::Proportional { i: 0, j: 1, gamma: Some(-2.0) });
        assert!(matches!(r, Err(CoreError::InvalidInput(_))));
    }

    #[test]
    fn lindep_rejected_on_nonlinear_kind() {
        let kind = ActivationKind::QuadraticFc { input_dim: 2 };
        let net = UnitLayerNet::zeros(kind, 3).unwrap();
        let r = residual(&net, &ManifoldConstraint::LinDep { i: 0, coeffs: None });
        assert!(matches!(r, Err(CoreError::Unsupported(_))));
    }
}
