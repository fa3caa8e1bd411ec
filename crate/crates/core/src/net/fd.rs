//! Finite-difference gradient oracle: central differences of the loss over
//! every parameter, used to certify the hand-derived gradients.

use super::{Gradient, OutMap, UnitLayerNet};
use crate::data::LossModel;
use crate::error::{CoreError, Result};

/// Central finite differences with step `h` over every parameter, including
/// out-map matrices.
pub fn grad_fd(net: &UnitLayerNet, model: &LossModel, h: f64) -> Result<Gradient> {
    if h <= 0.0 {
        return Err(CoreError::InvalidInput("finite-difference step must be positive".into()));
    }
    let mut g = Gradient::zeros_like(net);
    let mut work = net.clone();
    for i in 0..net.units.len() {
        for j in 0..net.units[i].v.len() {
            g.units[i].v[j] = central(&mut work, model, h, |n, val| n.units[i].v[j] = val, net.units[i].v[j])?;
        }
        for j in 0..net.units[i].u.len() {
            g.units[i].u[j] = central(&mut work, model, h, |n, val| n.units[i].u[j] = val, net.units[i].u[j])?;
        }
    }
    match &net.out_map {
        OutMap::Identity => {}
        OutMap::LinearChain { mats } => {
            for (l, m) in mats.iter().enumerate() {
                for idx in 0..m.len() {
                    let base = m.as_slice()[idx];
                    g.out[l].as_mut_slice()[idx] = central(
                        &mut work,
                        model,
                        h,
                        |n, val| {
                            if let OutMap::LinearChain { mats } = &mut n.out_map {
                                mats[l].as_mut_slice()[idx] = val;
                            }
                        },
                        base,
                    )?;
                }
            }
        }
        OutMap::SkipLinear { w3, w4, .. } => {
            for idx in 0..w3.len() {
                let base = w3.as_slice()[idx];
                g.out[0].as_mut_slice()[idx] = central(
                    &mut work,
                    model,
                    h,
                    |n, val| {
                        if let OutMap::SkipLinear { w3, .. } = &mut n.out_map {
                            w3.as_mut_slice()[idx] = val;
                        }
                    },
                    base,
                )?;
            }
            for idx in 0..w4.len() {
                let base = w4.as_slice()[idx];
                g.out[1].as_mut_slice()[idx] = central(
                    &mut work,
                    model,
                    h,
                    |n, val| {
                        if let OutMap::SkipLinear { w4, .. } = &mut n.out_map {
                            w4.as_mut_slice()[idx] = val;
                        }
                    },
                    base,
                )?;
            }
        }
    }
    Ok(g)
}

fn central<F: Fn(&mut UnitLayerNet, f64)>(
    work: &mut UnitLayerNet,
    model: &LossModel,
    h: f64,
    set: F,
    base: f64,
) -> Result<f64> {
    set(work, base + h);
    let plus = super::grad::loss(work, model)?;
    set(work, base - h);
    let minus = super::grad::loss(work, model)?;
    set(work, base);
    Ok((plus - minus) / (2.0 * h))
}
