//! Width reduction: a network whose weights satisfy an invariant-manifold
//! constraint is expressible with one fewer unit; these transforms produce
//! that narrower network with an identical input-output map.

use super::UnitLayerNet;
use crate::error::{CoreError, Result};
use crate::manifold::{residual, ManifoldConstraint};

/// Remove one unit, preserving the input-output map exactly:
///   equal(i,j)         → drop i, double v_j
///   zero(i)            → drop i
///   proportional(i,j,γ)→ drop i, scale v_j by (1+γ²)
///   lindep(i, γ)       → drop i, v_j += γ_j Σ_{j'≠i} γ_{j'} v_{j'}
///
/// The constraint must hold on `net` within `tau`.
pub fn reduce_width(
    net: &UnitLayerNet,
    constraint: &ManifoldConstraint,
    tau: f64,
) -> Result<UnitLayerNet> {
    let res = residual(net, constraint)?;
    if res > tau {
        return Err(CoreError::NotOnManifold { residual: res, tol: tau });
    }
    let mut units = net.units.clone();
    match constraint {
        ManifoldConstraint::Equal { i, j } => {
            units[*j].v *= 2.0;
            units.remove(*i);
        }
        ManifoldConstraint::Zero { i } => {
            units.remove(*i);
        }
        ManifoldConstraint::Proportional { i, j, gamma } => {
            let gamma = gamma.ok_or_else(|| {
                CoreError::InvalidInput("width reduction needs an explicit proportionality γ".into())
            })?;
            units[*j].v *= 1.0 + gamma * gamma;
            units.remove(*i);
        }
        ManifoldConstraint::LinDep { i, coeffs } => {
            let coeffs = coeffs.as_ref().ok_or_else(|| {
                CoreError::InvalidInput("width reduction needs explicit dependence coefficients".into())
            })?;
            if coeffs.len() != units.len() - 1 {
                return Err(CoreError::Shape(format!(
                    "expected {} coefficients, got {}",
                    units.len() - 1,
                    coeffs.len()
                )));
            }
            // correction = Σ_{j'≠i} γ_{j'} v_{j'}
            let others: Vec<usize> = (0..units.len()).filter(|k| k != i).collect();
            let mut correction = nalgebra::DVector::zeros(units[0].v.len());
            for (&j, &gj) in others.iter().zip(coeffs.iter()) {
                correction.axpy(gj, &units[j].v, 1.0);
            }
            for (&j, &gj) in others.iter().zip(coeffs.iter()) {
                units[j].v.axpy(gj, &correction, 1.0);
            }
            units.remove(*i);
        }
    }
    UnitLayerNet::new(net.activation.clone(), units, net.out_map.clone())
}
