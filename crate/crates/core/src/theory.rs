//! Analytic machinery for the two timescale-separation mechanisms.
//!
//! Linear case: the early dynamics near zero is the linear system
//! v̇_i = Σ_yz u_i, u̇_i = Σ_yzᵀ v_i, solved exactly by expansion in the
//! singular vectors of Σ_yz. Weights grow as e^{s_k t} per direction, so the
//! top singular direction dominates; `escape_time` and `alignment_residual`
//! quantify that.
//!
//! Quadratic case: the early dynamics v̇ = uᵀ Σ_yZ u, u̇ = 2 v Σ_yZ u is
//! reduced, in eigencoordinates a_k = r_kᵀu/√2 and with time rescaled by
//! one half, to a separable one-dimensional ODE for the growth ratio
//! π_m = a_m(t)/a_m(0), with the conserved quantity v² − Σ a_k². Quantities
//! in this case (reduced-ODE time, t∞) are reported in the rescaled units;
//! multiply by [`FLOW_TIME_PER_REDUCED_TIME`] to compare with trajectories of
//! the unrescaled system.

use crate::data::DataStats;
use crate::error::{CoreError, Result};
use crate::linalg::{adaptive_simpson, multiplicity_of_first, sorted_svd, sorted_symmetric_eigen};
use crate::net::{UnitLayerNet, UnitParams};
use nalgebra::{DMatrix, DVector};

/// One unit of reduced time equals this many units of unrescaled
/// (gradient-flow) time.
pub const FLOW_TIME_PER_REDUCED_TIME: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectralCase {
    /// SVD of Σ_yz.
    LinearSvd,
    /// Eigendecomposition of the symmetric Σ_yZ.
    QuadEig,
    /// Eigendecomposition of Σ_yz Σ_zz⁻¹ Σ_yzᵀ (the saddle-lattice modes).
    LinFpEig,
}

/// Ordered spectral data with the top-multiplicity projector on the stacked
/// (v, u) space.
#[derive(Clone, Debug)]
pub struct SpectralDecomp {
    pub case: SpectralCase,
    /// Descending singular values (or eigenvalues).
    pub s: Vec<f64>,
    /// Left vectors q_k (length N_v); equal to r_k for eigen cases.
    pub q: Vec<DVector<f64>>,
    /// Right vectors r_k (length N_u).
    pub r: Vec<DVector<f64>>,
    /// Multiplicity of s_1 at relative gap 1e-9.
    pub multiplicity: usize,
    /// P = ½ Σ_{k≤r} [q_k; r_k][q_kᵀ r_kᵀ].
    pub projector: DMatrix<f64>,
}

pub const MULTIPLICITY_REL_TOL: f64 = 1e-9;
pub const SYMMETRY_TOL: f64 = 1e-10;

fn stacked(q: &DVector<f64>, r: &DVector<f64>, flip_r: bool) -> DVector<f64> {
    let mut t = DVector::zeros(q.len() + r.len());
    t.rows_mut(0, q.len()).copy_from(q);
    t.rows_mut(q.len(), r.len()).copy_from(r);
    if flip_r {
        for k in q.len()..t.len() {
            t[k] = -t[k];
        }
    }
    t
}

fn build_projector(s: &[f64], q: &[DVector<f64>], r: &[DVector<f64>], mult: usize) -> DMatrix<f64> {
    let dim = q[0].len() + r[0].len();
    let mut p = DMatrix::zeros(dim, dim);
    for k in 0..mult {
        let t = stacked(&q[k], &r[k], false);
        p += 0.5 * &t * t.transpose();
    }
    let _ = s;
    p
}

/// Spectral decomposition of the statistics for the requested case, with
/// deterministic ordering and sign convention and multiplicity detection.
pub fn spectral(stats: &DataStats, case: SpectralCase) -> Result<SpectralDecomp> {
    match case {
        SpectralCase::LinearSvd => {
            let syz = stats
                .sigma_yz
                .as_ref()
                .ok_or_else(|| CoreError::InvalidInput("stats lack Σ_yz".into()))?;
            let svd = sorted_svd(syz);
            let d = syz.nrows().min(syz.ncols());
            let s = svd.s[..d].to_vec();
            let mult = multiplicity_of_first(&s, MULTIPLICITY_REL_TOL);
            let q = svd.q[..d].to_vec();
            let r = svd.r[..d].to_vec();
            let projector = build_projector(&s, &q, &r, mult);
            Ok(SpectralDecomp { case, s, q, r, multiplicity: mult, projector })
        }
        SpectralCase::QuadEig => {
            let syzq = stats
                .sigma_yzq
                .as_ref()
                .ok_or_else(|| CoreError::InvalidInput("stats lack Σ_yZ".into()))?;
            let asym = (syzq - syzq.transpose()).norm();
            if asym > SYMMETRY_TOL * syzq.norm().max(1.0) {
                return Err(CoreError::InvalidInput(format!(
                    "Σ_yZ is asymmetric beyond tolerance (‖A−Aᵀ‖ = {asym:.3e})"
                )));
            }
            let sym = 0.5 * (syzq + syzq.transpose());
            let eig = sorted_symmetric_eigen(&sym);
            let mult = multiplicity_of_first(&eig.values, MULTIPLICITY_REL_TOL);
            let projector = build_projector(&eig.values, &eig.vectors, &eig.vectors, mult);
            Ok(SpectralDecomp {
                case,
                s: eig.values,
                q: eig.vectors.clone(),
                r: eig.vectors,
                multiplicity: mult,
                projector,
            })
        }
        SpectralCase::LinFpEig => {
            let syz = stats
                .sigma_yz
                .as_ref()
                .ok_or_else(|| CoreError::InvalidInput("stats lack Σ_yz".into()))?;
            let szz = stats
                .sigma_zz
                .as_ref()
                .ok_or_else(|| CoreError::InvalidInput("stats lack Σ_zz".into()))?;
            let inv = szz
                .clone()
                .try_inverse()
                .ok_or_else(|| CoreError::IllConditioned("Σ_zz is singular".into()))?;
            let g = syz * inv * syz.transpose();
            let eig = sorted_symmetric_eigen(&g);
            let mult = multiplicity_of_first(&eig.values, MULTIPLICITY_REL_TOL);
            let projector = build_projector(&eig.values, &eig.vectors, &eig.vectors, mult);
            Ok(SpectralDecomp {
                case,
                s: eig.values,
                q: eig.vectors.clone(),
                r: eig.vectors,
                multiplicity: mult,
                projector,
            })
        }
    }
}

/// Exact solution of the early linear system at time t:
/// θ_i(t) = Σ_k ( c_k e^{s_k t} [q_k; r_k] + b_k e^{−s_k t} [q_k; −r_k] ) + ξ_i
/// with c_k = ½(q_k·v(0) + r_k·u(0)), b_k = ½(q_k·v(0) − r_k·u(0)).
pub fn linear_closed_form(init: &UnitParams, decomp: &SpectralDecomp, t: f64) -> UnitParams {
    let n_v = init.v.len();
    let mut theta = DVector::zeros(n_v + init.u.len());
    let mut xi = init.theta();
    for k in 0..decomp.s.len() {
        let c = 0.5 * (decomp.q[k].dot(&init.v) + decomp.r[k].dot(&init.u));
        let b = 0.5 * (decomp.q[k].dot(&init.v) - decomp.r[k].dot(&init.u));
        let plus = stacked(&decomp.q[k], &decomp.r[k], false);
        let minus = stacked(&decomp.q[k], &decomp.r[k], true);
        xi.axpy(-c, &plus, 1.0);
        xi.axpy(-b, &minus, 1.0);
        theta.axpy(c * (decomp.s[k] * t).exp(), &plus, 1.0);
        theta.axpy(b * (-decomp.s[k] * t).exp(), &minus, 1.0);
    }
    theta += xi;
    UnitParams::from_theta(&theta, n_v)
}

/// (‖Pθ‖, ‖(I−P)θ‖) for one unit.
pub fn alignment_residual(unit: &UnitParams, decomp: &SpectralDecomp) -> (f64, f64) {
    let theta = unit.theta();
    let p = &decomp.projector * &theta;
    let rest = &theta - &p;
    (p.norm(), rest.norm())
}

/// Escape time T = (1/s₁) ln(1/‖Pθ(0)‖) from the projection norm.
pub fn escape_time_from_norm(s1: f64, p_norm: f64) -> f64 {
    if p_norm <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 / s1) * (1.0 / p_norm).ln()
}

/// Escape time of a network: ‖Pθ(0)‖ is aggregated over all units.
pub fn escape_time(decomp: &SpectralDecomp, net: &UnitLayerNet) -> f64 {
    let mut norm_sq = 0.0;
    for unit in &net.units {
        let (p, _) = alignment_residual(unit, decomp);
        norm_sq += p * p;
    }
    escape_time_from_norm(decomp.s[0], norm_sq.sqrt())
}

/// Mode coordinates of one unit in the quadratic case: a_k = r_kᵀ u / √2.
#[derive(Clone, Debug)]
pub struct QuadCoords {
    pub v: f64,
    pub a: DVector<f64>,
}

pub fn quad_coords(unit: &UnitParams, decomp: &SpectralDecomp) -> Result<QuadCoords> {
    if decomp.case != SpectralCase::QuadEig {
        return Err(CoreError::InvalidInput("quad coordinates need a quad-eig decomposition".into()));
    }
    let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
    let a = DVector::from_iterator(
        decomp.r.len(),
        decomp.r.iter().map(|rk| inv_sqrt2 * rk.dot(&unit.u)),
    );
    Ok(QuadCoords { v: unit.v[0], a })
}

/// Reconstruct u = √2 Σ_k a_k r_k.
pub fn quad_coords_to_u(coords: &QuadCoords, decomp: &SpectralDecomp) -> DVector<f64> {
    let mut u = DVector::zeros(decomp.r[0].len());
    let sqrt2 = 2.0_f64.sqrt();
    for (k, rk) in decomp.r.iter().enumerate() {
        u.axpy(sqrt2 * coords.a[k], rk, 1.0);
    }
    u
}

/// The conserved quantity v² − Σ_k a_k².
pub fn conservation(coords: &QuadCoords) -> f64 {
    coords.v * coords.v - coords.a.norm_squared()
}

/// Effective sign of v(0); for v(0) = 0 the sign of the initial v̇.
fn effective_sign(coords: &QuadCoords, s: &[f64]) -> f64 {
    if coords.v != 0.0 {
        coords.v.signum()
    } else {
        let dv: f64 = s.iter().zip(coords.a.iter()).map(|(sk, ak)| sk * ak * ak).sum();
        if dv == 0.0 {
            0.0
        } else {
            dv.signum()
        }
    }
}

/// The dominant mode m maximizing sign(v(0))·s_k over modes with a_k(0) ≠ 0.
fn dominant_mode(coords: &QuadCoords, s: &[f64]) -> Option<(usize, f64)> {
    let sign = effective_sign(coords, s);
    if sign == 0.0 {
        return None;
    }
    let mut best: Option<(usize, f64)> = None;
    for (k, &sk) in s.iter().enumerate() {
        if coords.a[k] == 0.0 {
            continue;
        }
        let score = sign * sk;
        if best.map_or(true, |(_, b)| score > b) {
            best = Some((k, score));
        }
    }
    // a mode that decays can never blow up
    best.filter(|&(_, score)| score > 0.0).map(|(k, _)| (k, sign))
}

/// Radicand v(0)² + Σ_k a_k(0)² (π^{2 s_k/s_m} − 1), evaluated in log space
/// for the fractional exponents.
fn radicand(coords: &QuadCoords, s: &[f64], m: usize, pi: f64) -> f64 {
    let ln_pi = pi.ln();
    let mut g = coords.v * coords.v;
    for (k, &sk) in s.iter().enumerate() {
        let ak = coords.a[k];
        if ak == 0.0 {
            continue;
        }
        g += ak * ak * (((2.0 * sk / s[m]) * ln_pi).exp() - 1.0);
    }
    g
}

/// Solution of the reduced growth ODE on a reduced-time grid.
#[derive(Clone, Debug)]
pub struct ReducedSolution {
    /// Dominant mode index.
    pub m: usize,
    /// sign(v(0)).
    pub sign: f64,
    /// Reduced times (half the flow time).
    pub times: Vec<f64>,
    /// π_m(t) = a_m(t)/a_m(0).
    pub pi: Vec<f64>,
    /// Whether the radicand was clamped at zero (roundoff near the start).
    pub clamped: bool,
}

impl ReducedSolution {
    /// a_k(t) = a_k(0) π_m(t)^{s_k/s_m}.
    pub fn mode_series(&self, coords0: &QuadCoords, s: &[f64], k: usize) -> Vec<f64> {
        self.pi
            .iter()
            .map(|&pi| coords0.a[k] * ((s[k] / s[self.m]) * pi.ln()).exp())
            .collect()
    }

    /// v(t) from the conservation relation.
    pub fn v_series(&self, coords0: &QuadCoords, s: &[f64]) -> Vec<f64> {
        self.pi
            .iter()
            .map(|&pi| self.sign * radicand(coords0, s, self.m, pi).max(0.0).sqrt())
            .collect()
    }
}

/// Integrate π̇_m = sign(v(0)) s_m π_m √(v(0)² + Σ a_k(0)²(π^{2s_k/s_m}−1))
/// from π_m(0) = 1 over the given reduced-time grid (which must start at 0
/// and increase). Negative radicands from roundoff are clamped at zero.
pub fn reduced_ode(
    coords0: &QuadCoords,
    decomp: &SpectralDecomp,
    grid: &[f64],
) -> Result<ReducedSolution> {
    if decomp.case != SpectralCase::QuadEig {
        return Err(CoreError::InvalidInput("reduced ODE needs a quad-eig decomposition".into()));
    }
    if grid.first() != Some(&0.0) {
        return Err(CoreError::InvalidInput("grid must start at reduced time 0".into()));
    }
    let s = &decomp.s;
    let (m, sign) = dominant_mode(coords0, s).ok_or_else(|| {
        CoreError::InvalidInput("no growing mode: the unit never escapes".into())
    })?;
    let mut clamped = false;
    let rhs = |pi: f64, clamped: &mut bool| -> f64 {
        let g = radicand(coords0, s, m, pi);
        if g < 0.0 {
            *clamped = true;
        }
        sign * s[m] * pi * g.max(0.0).sqrt()
    };
    let mut pi = 1.0;
    let mut out = Vec::with_capacity(grid.len());
    out.push(pi);
    for w in grid.windows(2) {
        let mut t = w[0];
        let t_end = w[1];
        while t < t_end {
            // cap the relative growth per substep at 1%
            let rate = (rhs(pi, &mut clamped) / pi).abs().max(1e-12);
            let h = (0.01 / rate).min(t_end - t);
            let k1 = rhs(pi, &mut clamped);
            let k2 = rhs(pi + 0.5 * h * k1, &mut clamped);
            let k3 = rhs(pi + 0.5 * h * k2, &mut clamped);
            let k4 = rhs(pi + h * k3, &mut clamped);
            pi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if !pi.is_finite() || pi > 1e12 {
                pi = f64::INFINITY;
                break;
            }
            t += h;
        }
        out.push(pi);
    }
    Ok(ReducedSolution { m, sign, times: grid.to_vec(), pi: out, clamped })
}

/// Upper bound on a unit's blow-up, in reduced time:
/// t∞ = (1/|s_m|) ∫_1^∞ dπ / (π √(v(0)² + Σ a_k(0)²(π^{2s_k/s_m}−1))),
/// evaluated by adaptive quadrature after compactifying with w = 1/π.
/// Units that can never blow up (no growing mode, or zero weights) report
/// infinity.
pub fn t_infinity(coords0: &QuadCoords, decomp: &SpectralDecomp) -> Result<f64> {
    if decomp.case != SpectralCase::QuadEig {
        return Err(CoreError::InvalidInput("t∞ needs a quad-eig decomposition".into()));
    }
    let s = &decomp.s;
    let Some((m, _sign)) = dominant_mode(coords0, s) else {
        return Ok(f64::INFINITY);
    };
    // a radicand that turns genuinely negative on the way up means v crosses
    // zero before the blow-up: the reduced coordinate stalls and the unit
    // never escapes along this parametrization
    let scale = coords0.v * coords0.v + coords0.a.norm_squared();
    let ln_max = (1e8_f64).ln();
    for k in 1..=400 {
        let pi = ((k as f64 / 400.0) * ln_max).exp();
        if radicand(coords0, s, m, pi) < -1e-12 * scale {
            return Ok(f64::INFINITY);
        }
    }
    // w = 1/π: t∞ = (1/|s_m|) ∫_0^1 dw / (w √(g(1/w)))
    let integrand = |w: f64| -> f64 {
        let g = radicand(coords0, s, m, 1.0 / w).max(0.0);
        if g == 0.0 {
            return 0.0; // measure-zero endpoint; the √ singularity is integrable
        }
        1.0 / (w * g.sqrt())
    };
    // the integrand is bounded on (0, 1−δ] and has at worst an integrable
    // 1/√(1−w) singularity at w = 1, resolved by the ξ = √(1−w) substitution
    let delta = 1e-3;
    let main = adaptive_simpson(&integrand, 1e-14, 1.0 - delta, 1e-9);
    let tail = adaptive_simpson(
        &|xi: f64| {
            let w = 1.0 - xi * xi;
            2.0 * xi * integrand(w)
        },
        1e-14,
        delta.sqrt(),
        1e-9,
    );
    Ok((main + tail) / s[m].abs())
}

/// Units ranked by ascending blow-up time. The first unit to grow in a full
/// simulation is predicted to be the argmin.
#[derive(Clone, Debug)]
pub struct UnitOrderPrediction {
    /// Unit indices sorted by ascending t∞.
    pub order: Vec<usize>,
    /// t∞ per unit (reduced time), aligned with the unit indices of the net.
    pub t_infinity: Vec<f64>,
    /// Pairs of units whose t∞ coincide to relative 1e-12.
    pub ties: Vec<(usize, usize)>,
}

pub fn unit_order_prediction(
    units: &[QuadCoords],
    decomp: &SpectralDecomp,
) -> Result<UnitOrderPrediction> {
    if units.len() < 2 {
        return Err(CoreError::InvalidInput("ranking needs at least two units".into()));
    }
    let t_inf: Vec<f64> = units
        .iter()
        .map(|c| t_infinity(c, decomp))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..units.len()).collect();
    order.sort_by(|&a, &b| t_inf[a].partial_cmp(&t_inf[b]).unwrap());
    let mut ties = Vec::new();
    for w in order.windows(2) {
        let (a, b) = (w[0], w[1]);
        let scale = t_inf[a].abs().max(t_inf[b].abs()).max(1e-300);
        if ((t_inf[a] - t_inf[b]).abs() / scale) < 1e-12 {
            ties.push((a, b));
        }
    }
    Ok(UnitOrderPrediction { order, t_infinity: t_inf, ties })
}

/// JSON prediction report: escape time, per-unit t∞ ranking, spectrum.
pub fn prediction_report_json(
    escape_times: &[f64],
    prediction: Option<&UnitOrderPrediction>,
    spectrum: &[f64],
) -> serde_json::Value {
    serde_json::json!({
        "escape_times": escape_times,
        "t_infinity_per_unit": prediction.map(|p| p.t_infinity.clone()),
        "predicted_order": prediction.map(|p| p.order.clone()),
        "spectrum": spectrum,
    })
}
