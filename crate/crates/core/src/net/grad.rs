//! Hand-derived gradients of the squared loss for every activation kind,
//! plus the statistics-driven forms for the linear and quadratic families.
//!
//! `grad` returns ∂L/∂θ; gradient flow and descent negate it.

use super::{attention_features, conv_windows, ActivationKind, AttentionHead, OutMap, SkipPattern, UnitLayerNet, UnitParams};
use crate::data::{DataStats, Dataset, LossModel};
use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, DVector};

/// Per-parameter gradients, mirroring the network's shapes exactly.
#[derive(Clone, Debug)]
pub struct Gradient {
    /// (∂L/∂v_i, ∂L/∂u_i) per unit.
    pub units: Vec<UnitParams>,
    /// Gradients of out-map matrices, in the out map's storage order.
    pub out: Vec<DMatrix<f64>>,
}

impl Gradient {
    pub fn zeros_like(net: &UnitLayerNet) -> Self {
        let units = net
            .units
            .iter()
            .map(|u| UnitParams::zeros(u.v.len(), u.u.len()))
            .collect();
        let out = match &net.out_map {
            OutMap::Identity => Vec::new(),
            OutMap::LinearChain { mats } => mats
                .iter()
                .map(|m| DMatrix::zeros(m.nrows(), m.ncols()))
                .collect(),
            OutMap::SkipLinear { w3, w4, .. } => vec![
                DMatrix::zeros(w3.nrows(), w3.ncols()),
                DMatrix::zeros(w4.nrows(), w4.ncols()),
            ],
        };
        Self { units, out }
    }

    pub fn norm_squared(&self) -> f64 {
        let mut n = 0.0;
        for g in &self.units {
            n += g.v.norm_squared() + g.u.norm_squared();
        }
        for m in &self.out {
            n += m.norm_squared();
        }
        n
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn scale(&mut self, a: f64) {
        for g in &mut self.units {
            g.v *= a;
            g.u *= a;
        }
        for m in &mut self.out {
            *m *= a;
        }
    }
}

/// Average squared loss: (1/P) Σ_μ ½‖y_μ − f(x_μ)‖².
pub fn loss(net: &UnitLayerNet, model: &LossModel) -> Result<f64> {
    match model {
        LossModel::Data(data) => loss_data(net, data),
        LossModel::LinearStats(stats) => loss_linear_stats(net, stats),
        LossModel::QuadStats(stats) => loss_quad_stats(net, stats),
    }
}

fn loss_data(net: &UnitLayerNet, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(CoreError::InvalidInput("empty dataset".into()));
    }
    let mut total = 0.0;
    for (x, y) in data.iter() {
        let f = net.forward(x)?;
        if f.len() != y.len() {
            return Err(CoreError::Shape(format!(
                "target length {} does not match output length {}",
                y.len(),
                f.len()
            )));
        }
        total += 0.5 * (y - f).norm_squared();
    }
    Ok(total / data.len() as f64)
}

fn linear_stats_parts<'a>(
    net: &UnitLayerNet,
    stats: &'a DataStats,
) -> Result<(&'a DMatrix<f64>, &'a DMatrix<f64>)> {
    if !matches!(net.activation, ActivationKind::LinearFc { .. })
        || !matches!(net.out_map, OutMap::Identity)
    {
        return Err(CoreError::Unsupported(
            "statistics-driven linear loss applies to plain linear-fc networks".into(),
        ));
    }
    match (&stats.sigma_yz, &stats.sigma_zz) {
        (Some(yz), Some(zz)) => Ok((yz, zz)),
        _ => Err(CoreError::InvalidInput(
            "stats lack the linear block (Σ_yz, Σ_zz)".into(),
        )),
    }
}

fn loss_linear_stats(net: &UnitLayerNet, stats: &DataStats) -> Result<f64> {
    let (syz, szz) = linear_stats_parts(net, stats)?;
    let syy = stats.sigma_yy.as_ref().ok_or_else(|| {
        CoreError::InvalidInput("stats-driven loss needs Σ_yy".into())
    })?;
    let w = net.weight_matrix();
    let wz = &w * szz;
    Ok((0.5 * (syy.trace() - 2.0 * w.dot(syz) + wz.dot(&w))).max(0.0))
}

fn quad_stats_parts<'a>(
    net: &UnitLayerNet,
    stats: &'a DataStats,
) -> Result<(&'a DMatrix<f64>, &'a DMatrix<f64>)> {
    if !matches!(
        net.activation,
        ActivationKind::QuadraticFc { .. } | ActivationKind::PolyFc { degree: 2, .. }
    ) || !matches!(net.out_map, OutMap::Identity)
    {
        return Err(CoreError::Unsupported(
            "statistics-driven quadratic loss applies to plain quadratic networks".into(),
        ));
    }
    match (&stats.sigma_yzq, &stats.sigma_zzq) {
        (Some(yz), Some(zz)) => Ok((yz, zz)),
        _ => Err(CoreError::InvalidInput(
            "stats lack the quadratic block (Σ_yZ, Σ_ZZ)".into(),
        )),
    }
}

/// B_j = unvec(Σ_ZZ vec(u_j u_jᵀ)); the residual moment is
/// R = Σ_yZ − Σ_j v_j B_j and the gradients contract with R.
fn quad_residual_moment(
    net: &UnitLayerNet,
    syzq: &DMatrix<f64>,
    szzq: &DMatrix<f64>,
) -> DMatrix<f64> {
    let d = syzq.nrows();
    let mut r = syzq.clone();
    for unit in &net.units {
        let outer = &unit.u * unit.u.transpose();
        let b = szzq * DVector::from_column_slice(outer.as_slice());
        let b = DMatrix::from_column_slice(d, d, b.as_slice());
        r -= unit.v[0] * b;
    }
    r
}

fn loss_quad_stats(net: &UnitLayerNet, stats: &DataStats) -> Result<f64> {
    let (syzq, szzq) = quad_stats_parts(net, stats)?;
    let y_sq = stats
        .y_sq
        .ok_or_else(|| CoreError::InvalidInput("stats-driven loss needs E[y²]".into()))?;
    let d = syzq.nrows();
    let mut total = y_sq;
    for (i, ui) in net.units.iter().enumerate() {
        let oi = &ui.u * ui.u.transpose();
        total -= 2.0 * ui.v[0] * oi.dot(syzq);
        let bi = szzq * DVector::from_column_slice(oi.as_slice());
        let bi = DMatrix::from_column_slice(d, d, bi.as_slice());
        for uj in net.units.iter().skip(i) {
            let oj = &uj.u * uj.u.transpose();
            let term = ui.v[0] * uj.v[0] * bi.dot(&oj);
            // off-diagonal pairs appear twice
            total += if std::ptr::eq(ui, uj) { term } else { 2.0 * term };
        }
    }
    Ok((0.5 * total).max(0.0))
}

/// Analytic gradient ∂L/∂θ.
pub fn grad(net: &UnitLayerNet, model: &LossModel) -> Result<Gradient> {
    match model {
        LossModel::Data(data) => grad_data(net, data),
        LossModel::LinearStats(stats) => grad_linear_stats(net, stats),
        LossModel::QuadStats(stats) => grad_quad_stats(net, stats),
    }
}

fn grad_linear_stats(net: &UnitLayerNet, stats: &DataStats) -> Result<Gradient> {
    let (syz, szz) = linear_stats_parts(net, stats)?;
    let w = net.weight_matrix();
    let r = syz - &w * szz;
    let mut g = Gradient::zeros_like(net);
    for (unit, gu) in net.units.iter().zip(g.units.iter_mut()) {
        gu.v = -(&r * &unit.u);
        gu.u = -(r.transpose() * &unit.v);
    }
    Ok(g)
}

fn grad_quad_stats(net: &UnitLayerNet, stats: &DataStats) -> Result<Gradient> {
    let (syzq, szzq) = quad_stats_parts(net, stats)?;
    let r = quad_residual_moment(net, syzq, szzq);
    let mut g = Gradient::zeros_like(net);
    for (unit, gu) in net.units.iter().zip(g.units.iter_mut()) {
        let ru = &r * &unit.u;
        gu.v[0] = -unit.u.dot(&ru);
        gu.u = -2.0 * unit.v[0] * ru;
    }
    Ok(g)
}

fn grad_data(net: &UnitLayerNet, data: &Dataset) -> Result<Gradient> {
    if data.is_empty() {
        return Err(CoreError::InvalidInput("empty dataset".into()));
    }
    let probe = net.forward(&data.inputs[0])?;
    if probe.len() != data.targets[0].len() {
        return Err(CoreError::Shape(format!(
            "target length {} does not match output length {}",
            data.targets[0].len(),
            probe.len()
        )));
    }
    let mut g = Gradient::zeros_like(net);
    match &net.activation {
        ActivationKind::LinearAttention {
            embed_dim,
            head_rank,
            ..
        } => {
            let d1 = embed_dim + 1;
            for (x, y) in data.iter() {
                let x = x.as_tokens()?;
                let (a, xq) = attention_features(x);
                let mut pred = 0.0;
                let heads: Vec<AttentionHead> = net
                    .units
                    .iter()
                    .map(|u| AttentionHead::from_unit(u, *embed_dim, *head_rank))
                    .collect();
                for head in &heads {
                    pred += head.predict(&a, &xq);
                }
                let rho = pred - y[0];
                for (head, gu) in heads.iter().zip(g.units.iter_mut()) {
                    let v_row = head.v_mat.row(d1 - 1).transpose();
                    let av = &a * v_row; // a = A ṽ
                    let c = &head.q_mat * &xq; // c = Q x_q
                    let d_vec = &head.k_mat * &av; // d = K A ṽ
                    let b = &a * (head.k_mat.transpose() * &c); // b = A Kᵀ c
                    // dV = ρ e bᵀ (only the label row is touched)
                    let mut dv = DMatrix::zeros(d1, d1);
                    for col in 0..d1 {
                        dv[(d1 - 1, col)] = rho * b[col];
                    }
                    let dk = rho * &c * av.transpose();
                    let dq = rho * &d_vec * xq.transpose();
                    let scratch = AttentionHead {
                        v_mat: dv,
                        k_mat: dk,
                        q_mat: dq,
                    };
                    let mut packed = UnitParams::zeros(gu.v.len(), gu.u.len());
                    scratch.pack(&mut packed);
                    gu.v += packed.v;
                    gu.u += packed.u;
                }
            }
        }
        kind if kind.is_conv() => {
            let sigma = kind.sigma().unwrap();
            for (x, y) in data.iter() {
                let x = x.as_vector()?;
                let f = net.forward(&super::SampleInput::Vector(x.clone()))?;
                let rho = f[0] - y[0];
                for (unit, gu) in net.units.iter().zip(g.units.iter_mut()) {
                    for (w, xw) in conv_windows(x).enumerate() {
                        let z = unit.u.dot(&xw);
                        gu.v[w] += rho * sigma.eval(z);
                        gu.u.axpy(rho * unit.v[w] * sigma.deriv(z), &xw, 1.0);
                    }
                }
            }
        }
        kind => {
            let sigma = kind.sigma().unwrap();
            for (x, y) in data.iter() {
                let x = x.as_vector()?;
                let h = net.preactivations(x);
                let phis = DVector::from_iterator(h.len(), h.iter().map(|&z| sigma.eval(z)));
                let zeta = {
                    let mut z = DVector::zeros(kind.n_v());
                    for (unit, &p) in net.units.iter().zip(phis.iter()) {
                        z.axpy(p, &unit.v, 1.0);
                    }
                    z
                };
                match &net.out_map {
                    OutMap::Identity => {
                        let rho = &zeta - y;
                        accumulate_unit_grads(net, sigma, x, &h, &phis, &rho, &mut g);
                    }
                    OutMap::LinearChain { mats } => {
                        // forward intermediates z_0 = ζ, z_l = W_l z_{l-1}
                        let mut zs = vec![zeta.clone()];
                        for m in mats {
                            let next = m * zs.last().unwrap();
                            zs.push(next);
                        }
                        let mut gback = zs.last().unwrap() - y;
                        for (l, m) in mats.iter().enumerate().rev() {
                            g.out[l] += &gback * zs[l].transpose();
                            gback = m.transpose() * gback;
                        }
                        accumulate_unit_grads(net, sigma, x, &h, &phis, &gback, &mut g);
                    }
                    OutMap::SkipLinear { w3, w4, pattern } => {
                        let (f, rho_zeta, rho_h_extra, d3, d4) = match pattern {
                            SkipPattern::None => {
                                let inner = w3 * &zeta;
                                let f = w4 * &inner;
                                let rho = &f - y;
                                let rz = w3.transpose() * (w4.transpose() * &rho);
                                let d4 = &rho * inner.transpose();
                                let d3 = (w4.transpose() * &rho) * zeta.transpose();
                                (f, rz, None, d3, d4)
                            }
                            SkipPattern::Skip1 => {
                                let gsum = &zeta + &h;
                                let inner = w3 * &gsum;
                                let f = w4 * &inner;
                                let rho = &f - y;
                                let rg = w3.transpose() * (w4.transpose() * &rho);
                                let d4 = &rho * inner.transpose();
                                let d3 = (w4.transpose() * &rho) * gsum.transpose();
                                (f, rg.clone(), Some(rg), d3, d4)
                            }
                            SkipPattern::Skip2 => {
                                let inner = w3 * &zeta + &h;
                                let f = w4 * &inner;
                                let rho = &f - y;
                                let rin = w4.transpose() * &rho;
                                let rz = w3.transpose() * &rin;
                                let d4 = &rho * inner.transpose();
                                let d3 = &rin * zeta.transpose();
                                (f, rz, Some(rin), d3, d4)
                            }
                        };
                        let _ = f;
                        g.out[0] += d3;
                        g.out[1] += d4;
                        // units: dv_i = ρ_ζ h_i; du_i = (v_i·ρ_ζ + skip term) x
                        for (i, (unit, gu)) in
                            net.units.iter().zip(g.units.iter_mut()).enumerate()
                        {
                            gu.v.axpy(h[i], &rho_zeta, 1.0);
                            let mut dh = unit.v.dot(&rho_zeta);
                            if let Some(extra) = &rho_h_extra {
                                dh += extra[i];
                            }
                            gu.u.axpy(dh, x, 1.0);
                        }
                    }
                }
            }
        }
    }
    g.scale(1.0 / data.len() as f64);
    Ok(g)
}

/// Identity/chain unit gradients for scalar-σ kinds:
/// ∂ℓ/∂v_i = σ(h_i) ρ_ζ and ∂ℓ/∂u_i = (v_i·ρ_ζ) σ'(h_i) x.
fn accumulate_unit_grads(
    net: &UnitLayerNet,
    sigma: super::Sigma,
    x: &DVector<f64>,
    h: &DVector<f64>,
    phis: &DVector<f64>,
    rho_zeta: &DVector<f64>,
    g: &mut Gradient,
) {
    for (i, (unit, gu)) in net.units.iter().zip(g.units.iter_mut()).enumerate() {
        gu.v.axpy(phis[i], rho_zeta, 1.0);
        gu.u
            .axpy(unit.v.dot(rho_zeta) * sigma.deriv(h[i]), x, 1.0);
    }
}
