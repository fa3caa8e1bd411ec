//! Embedded fixed points: lifting a fixed point of a narrow network into a
//! wider one by the four constructions (generic split, zero unit,
//! homogeneous rescale, linear combination), their composition across the
//! layers of deep linear chains, fixed-point certification, and the complete
//! fixed-point lattice of linear networks.

use crate::data::{DataStats, LossModel};
use crate::error::{CoreError, Result};
use crate::linalg::{condition_number, has_near_degeneracy, sorted_symmetric_eigen};
use crate::net::{ActivationKind, OutMap, UnitLayerNet, UnitParams};
use nalgebra::{DMatrix, DVector};

/// One application of the embedding theorem: how the appended unit is built
/// from the donor unit(s) of the narrow network.
#[derive(Clone, Debug)]
pub enum EmbeddingSpec {
    /// u_H = u_i, v_H = γ_v v_i, donor v_i ← (1−γ_v) v_i. Valid for any φ.
    Generic { donor: usize, gamma_v: f64 },
    /// u_H = u_zero (= 0), v_H = 0. Needs φ(z; u_zero) = 0.
    Zero,
    /// u_H = γ_u u_i, v_H = γ_v v_i, donor v_i ← (1−γ_u γ_v) v_i.
    /// Needs degree-1 homogeneity; γ_u restricted to the kind's field.
    Homogeneous { donor: usize, gamma_u: f64, gamma_v: f64 },
    /// u_H = Σ γ_{u_i} u_i, v_H = Σ γ_{v_i} v_i,
    /// v_i ← v_i − γ_{u_i} Σ_j γ_{v_j} v_j. Needs φ linear in u.
    Linear { gamma_u: Vec<f64>, gamma_v: Vec<f64> },
}

impl EmbeddingSpec {
    fn check_legal(&self, net: &UnitLayerNet) -> Result<()> {
        let h = net.width();
        match self {
            EmbeddingSpec::Generic { donor, .. } => {
                if *donor >= h {
                    return Err(CoreError::InvalidInput(format!("donor {donor} out of range")));
                }
            }
            EmbeddingSpec::Zero => {
                if !net.activation.has_u_zero() {
                    return Err(CoreError::Unsupported(format!(
                        "zero embedding needs φ(z; u_zero) = 0, which {} lacks",
                        net.activation.name()
                    )));
                }
            }
            EmbeddingSpec::Homogeneous { donor, gamma_u, .. } => {
                if *donor >= h {
                    return Err(CoreError::InvalidInput(format!("donor {donor} out of range")));
                }
                let field = net.activation.homogeneity().ok_or_else(|| {
                    CoreError::Unsupported(format!(
                        "homogeneous embedding needs a degree-1 homogeneous kind, got {}",
                        net.activation.name()
                    ))
                })?;
                if !field.contains(*gamma_u) {
                    return Err(CoreError::InvalidInput(format!(
                        "γ_u = {gamma_u} is outside the homogeneity field of {}",
                        net.activation.name()
                    )));
                }
            }
            EmbeddingSpec::Linear { gamma_u, gamma_v } => {
                if !net.activation.is_linear_in_u() {
                    return Err(CoreError::Unsupported(format!(
                        "linear embedding needs a kind linear in u, got {}",
                        net.activation.name()
                    )));
                }
                if gamma_u.len() != h || gamma_v.len() != h {
                    return Err(CoreError::Shape(format!(
                        "coefficient lists must have length {h}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lift a width-(H−1) network to width H. When the base is a fixed point the
/// output is one too, and the forward map is preserved pointwise for any
/// base.
pub fn embed_unit(base: &UnitLayerNet, spec: &EmbeddingSpec) -> Result<UnitLayerNet> {
    if matches!(base.out_map, OutMap::SkipLinear { .. }) {
        return Err(CoreError::Unsupported(
            "unit embedding on skip networks is not supported".into(),
        ));
    }
    spec.check_legal(base)?;
    let mut units = base.units.clone();
    match spec {
        EmbeddingSpec::Generic { donor, gamma_v } => {
            let new = UnitParams::new(*gamma_v * &base.units[*donor].v, base.units[*donor].u.clone());
            units[*donor].v *= 1.0 - gamma_v;
            units.push(new);
        }
        EmbeddingSpec::Zero => {
            units.push(UnitParams::zeros(base.activation.n_v(), base.activation.n_u()));
        }
        EmbeddingSpec::Homogeneous { donor, gamma_u, gamma_v } => {
            let new = UnitParams::new(
                *gamma_v * &base.units[*donor].v,
                *gamma_u * &base.units[*donor].u,
            );
            units[*donor].v *= 1.0 - gamma_u * gamma_v;
            units.push(new);
        }
        EmbeddingSpec::Linear { gamma_u, gamma_v } => {
            let n_v = base.activation.n_v();
            let n_u = base.activation.n_u();
            let mut new_u = DVector::zeros(n_u);
            let mut new_v = DVector::zeros(n_v);
            for (i, unit) in base.units.iter().enumerate() {
                new_u.axpy(gamma_u[i], &unit.u, 1.0);
                new_v.axpy(gamma_v[i], &unit.v, 1.0);
            }
            for (i, unit) in units.iter_mut().enumerate() {
                unit.v.axpy(-gamma_u[i], &new_v, 1.0);
            }
            units.push(UnitParams::new(new_v, new_u));
        }
    }
    UnitLayerNet::new(base.activation.clone(), units, base.out_map.clone())
}

/// Certify a fixed point: ‖∇L‖₂ over all parameters against a tolerance.
pub fn verify_fixed_point(net: &UnitLayerNet, model: &LossModel, tau: f64) -> Result<(bool, f64)> {
    let g = crate::grad(net, model)?;
    let norm = g.norm();
    Ok((norm <= tau, norm))
}

/// A deep linear chain as its raw weight matrices W_1, ..., W_{L}
/// (innermost first: f = W_L ··· W_1 x). Hidden layer l has
/// width = rows(W_l) = cols(W_{l+1}).
pub fn chain_matrices(net: &UnitLayerNet) -> Result<Vec<DMatrix<f64>>> {
    if !matches!(net.activation, ActivationKind::LinearFc { .. }) {
        return Err(CoreError::Unsupported("chains apply to linear-fc networks".into()));
    }
    let w1 = net.first_layer_matrix().transpose();
    let mut v = DMatrix::zeros(net.activation.n_v(), net.width());
    for (i, unit) in net.units.iter().enumerate() {
        v.column_mut(i).copy_from(&unit.v);
    }
    let mut mats = vec![w1, v];
    if let OutMap::LinearChain { mats: extra } = &net.out_map {
        mats.extend(extra.iter().cloned());
    }
    Ok(mats)
}

/// Rebuild a unit-layer view (unit layer = hidden layer 1) from raw chain
/// matrices.
pub fn chain_from_matrices(mats: &[DMatrix<f64>]) -> Result<UnitLayerNet> {
    if mats.len() < 2 {
        return Err(CoreError::InvalidInput("a chain needs at least two matrices".into()));
    }
    let w1 = &mats[0];
    let v = &mats[1];
    let h = w1.nrows();
    if v.ncols() != h {
        return Err(CoreError::Shape("W2 columns must match W1 rows".into()));
    }
    let kind = ActivationKind::LinearFc { input_dim: w1.ncols(), output_dim: v.nrows() };
    let units = (0..h)
        .map(|i| UnitParams::new(v.column(i).into_owned(), w1.row(i).transpose()))
        .collect();
    let out_map = if mats.len() == 2 {
        OutMap::Identity
    } else {
        OutMap::LinearChain { mats: mats[2..].to_vec() }
    };
    UnitLayerNet::new(kind, units, out_map)
}

/// Widen hidden layer `l` (1-based) of a chain by one unit using the given
/// construction, mutating W_l (new row) and W_{l+1} (new column).
fn widen_chain_layer(mats: &mut [DMatrix<f64>], l: usize, spec: &EmbeddingSpec) -> Result<()> {
    if l == 0 || l >= mats.len() {
        return Err(CoreError::InvalidInput(format!("no hidden layer {l}")));
    }
    let h = mats[l - 1].nrows();
    let (new_row, new_col) = match spec {
        EmbeddingSpec::Generic { donor, gamma_v } => {
            if *donor >= h {
                return Err(CoreError::InvalidInput(format!("donor {donor} out of range")));
            }
            let row = mats[l - 1].row(*donor).into_owned();
            let col = *gamma_v * mats[l].column(*donor).into_owned();
            let donor_col = (1.0 - gamma_v) * mats[l].column(*donor).into_owned();
            mats[l].set_column(*donor, &donor_col);
            (row, col)
        }
        EmbeddingSpec::Zero => (
            nalgebra::RowDVector::zeros(mats[l - 1].ncols()),
            DVector::zeros(mats[l].nrows()),
        ),
        EmbeddingSpec::Homogeneous { donor, gamma_u, gamma_v } => {
            if *donor >= h {
                return Err(CoreError::InvalidInput(format!("donor {donor} out of range")));
            }
            let row = *gamma_u * mats[l - 1].row(*donor).into_owned();
            let col = *gamma_v * mats[l].column(*donor).into_owned();
            let donor_col = (1.0 - gamma_u * gamma_v) * mats[l].column(*donor).into_owned();
            mats[l].set_column(*donor, &donor_col);
            (row, col)
        }
        EmbeddingSpec::Linear { gamma_u, gamma_v } => {
            if gamma_u.len() != h || gamma_v.len() != h {
                return Err(CoreError::Shape(format!("coefficient lists must have length {h}")));
            }
            let mut row = nalgebra::RowDVector::zeros(mats[l - 1].ncols());
            let mut col = DVector::zeros(mats[l].nrows());
            for i in 0..h {
                row += gamma_u[i] * mats[l - 1].row(i);
                col.axpy(gamma_v[i], &mats[l].column(i).into_owned(), 1.0);
            }
            for i in 0..h {
                let c = mats[l].column(i).into_owned() - gamma_u[i] * &col;
                mats[l].set_column(i, &c);
            }
            (row, col)
        }
    };
    mats[l - 1] = mats[l - 1].clone().insert_row(h, 0.0);
    mats[l - 1].row_mut(h).copy_from(&new_row);
    mats[l] = mats[l].clone().insert_column(h, 0.0);
    mats[l].column_mut(h).copy_from(&new_col);
    Ok(())
}

/// Repeatedly embed units layer by layer until a deep linear chain reaches
/// the target hidden widths (Corollary of the embedding theorem). `specs[l]`
/// is the construction used for every widening of hidden layer l+1; it must
/// reference donor units of the base network.
pub fn embed_deep(
    base: &UnitLayerNet,
    target_widths: &[usize],
    specs: &[EmbeddingSpec],
) -> Result<UnitLayerNet> {
    let mut mats = chain_matrices(base)?;
    let n_hidden = mats.len() - 1;
    if target_widths.len() != n_hidden || specs.len() != n_hidden {
        return Err(CoreError::InvalidInput(format!(
            "expected {n_hidden} target widths and specs (one per hidden layer)"
        )));
    }
    for (l, (&target, spec)) in target_widths.iter().zip(specs.iter()).enumerate() {
        let current = mats[l].nrows();
        if target < current {
            return Err(CoreError::InvalidInput(format!(
                "cannot shrink hidden layer {} from {current} to {target}",
                l + 1
            )));
        }
        for _ in current..target {
            widen_chain_layer(&mut mats, l + 1, spec)?;
        }
    }
    chain_from_matrices(&mats)
}

/// A rank-r fixed point of the linear-network dynamics.
#[derive(Clone, Debug)]
pub struct LinearSaddleSpec {
    /// Zero-based mode indices A_r.
    pub index_set: Vec<usize>,
    pub bitmask: u64,
    /// W* = Σ_{k∈A} e_k e_kᵀ Σ_yz Σ_zz⁻¹.
    pub w_star: DMatrix<f64>,
    /// The modes e_k spanning the fitted subspace.
    pub modes: Vec<DVector<f64>>,
    pub saddle_loss: f64,
    /// Canonical width-r factorization: one mode per unit, balanced norms.
    pub units: Vec<UnitParams>,
    /// Attached when the spectrum is degenerate beyond tolerance.
    pub degenerate: bool,
}

/// Which subsets of modes to enumerate.
#[derive(Clone, Debug)]
pub enum SaddleSelector {
    /// All 2^D subsets.
    All,
    /// All subsets of the given rank.
    Rank(usize),
    /// One specific subset of mode indices.
    Subset(Vec<usize>),
}

pub const DEGENERACY_REL_TOL: f64 = 1e-9;
pub const CONDITION_BOUND: f64 = 1e12;

struct LinearLattice {
    eigvals: Vec<f64>,
    eigvecs: Vec<DVector<f64>>,
    w_full: DMatrix<f64>, // Σ_yz Σ_zz⁻¹
    szz_inv_syz_t: DMatrix<f64>,
    trace_syy: f64,
    d: usize,
    degenerate: bool,
}

fn lattice(stats: &DataStats) -> Result<LinearLattice> {
    let syz = stats
        .sigma_yz
        .as_ref()
        .ok_or_else(|| CoreError::InvalidInput("stats lack Σ_yz".into()))?;
    let szz = stats
        .sigma_zz
        .as_ref()
        .ok_or_else(|| CoreError::InvalidInput("stats lack Σ_zz".into()))?;
    let syy = stats
        .sigma_yy
        .as_ref()
        .ok_or_else(|| CoreError::InvalidInput("saddle losses need Σ_yy".into()))?;
    let cond = condition_number(szz);
    if !cond.is_finite() || cond > CONDITION_BOUND {
        return Err(CoreError::IllConditioned(format!(
            "Σ_zz condition number {cond:.3e} exceeds bound {CONDITION_BOUND:.1e}"
        )));
    }
    let szz_inv = szz
        .clone()
        .try_inverse()
        .ok_or_else(|| CoreError::IllConditioned("Σ_zz is singular".into()))?;
    let g = syz * &szz_inv * syz.transpose();
    let eig = sorted_symmetric_eigen(&g);
    let d = syz.nrows().min(syz.ncols());
    let degenerate = has_near_degeneracy(&eig.values[..d], DEGENERACY_REL_TOL);
    Ok(LinearLattice {
        eigvals: eig.values,
        eigvecs: eig.vectors,
        w_full: syz * &szz_inv,
        szz_inv_syz_t: szz_inv * syz.transpose(),
        trace_syy: syy.trace(),
        d,
        degenerate,
    })
}

fn saddle_for_subset(lat: &LinearLattice, subset: &[usize]) -> LinearSaddleSpec {
    let n_v = lat.eigvecs[0].len();
    let n_u = lat.w_full.ncols();
    let mut w_star = DMatrix::zeros(n_v, n_u);
    let mut units = Vec::with_capacity(subset.len());
    let mut modes = Vec::with_capacity(subset.len());
    let mut loss = lat.trace_syy;
    let mut bitmask = 0u64;
    for &k in subset {
        let e_k = &lat.eigvecs[k];
        let g_k = &lat.szz_inv_syz_t * e_k;
        w_star += e_k * (e_k.transpose() * &lat.w_full);
        loss -= lat.eigvals[k];
        let scale = g_k.norm().sqrt();
        // balanced factorization v uᵀ = e_k g_kᵀ
        if scale > 0.0 {
            units.push(UnitParams::new(scale * e_k, &g_k / scale));
        } else {
            units.push(UnitParams::new(0.0 * e_k, g_k));
        }
        modes.push(e_k.clone());
        bitmask |= 1 << k;
    }
    LinearSaddleSpec {
        index_set: subset.to_vec(),
        bitmask,
        w_star,
        modes,
        saddle_loss: 0.5 * loss,
        units,
        degenerate: lat.degenerate,
    }
}

/// Enumerate the embedded fixed points of the linear dynamics: for each mode
/// subset A_r, the map W* = Σ_{k∈A} e_k e_kᵀ Σ_yz Σ_zz⁻¹, its loss, and a
/// canonical width-r factorization. The full lattice has 2^D members.
pub fn enumerate_linear_saddles(
    stats: &DataStats,
    selector: &SaddleSelector,
) -> Result<Vec<LinearSaddleSpec>> {
    let lat = lattice(stats)?;
    if lat.d >= 63 {
        return Err(CoreError::InvalidInput("lattice enumeration is limited to D < 63".into()));
    }
    let mut out = Vec::new();
    match selector {
        SaddleSelector::All => {
            for mask in 0u64..(1 << lat.d) {
                let subset: Vec<usize> = (0..lat.d).filter(|k| mask & (1 << k) != 0).collect();
                out.push(saddle_for_subset(&lat, &subset));
            }
        }
        SaddleSelector::Rank(r) => {
            if *r > lat.d {
                return Err(CoreError::InvalidInput(format!("rank {r} exceeds D = {}", lat.d)));
            }
            for mask in 0u64..(1 << lat.d) {
                if (mask.count_ones() as usize) == *r {
                    let subset: Vec<usize> = (0..lat.d).filter(|k| mask & (1 << k) != 0).collect();
                    out.push(saddle_for_subset(&lat, &subset));
                }
            }
        }
        SaddleSelector::Subset(subset) => {
            for &k in subset {
                if k >= lat.d {
                    return Err(CoreError::InvalidInput(format!("mode {k} exceeds D = {}", lat.d)));
                }
            }
            out.push(saddle_for_subset(&lat, subset));
        }
    }
    Ok(out)
}

/// Σ_yz projected off the fitted modes: Σ̃_yz = (I − Σ_{k∈A} e_k e_kᵀ) Σ_yz.
/// This drives the post-saddle escape direction and plateau duration.
pub fn projected_stats(stats: &DataStats, index_set: &[usize]) -> Result<DMatrix<f64>> {
    let lat = lattice(stats)?;
    let syz = stats.sigma_yz.as_ref().unwrap();
    let n_v = syz.nrows();
    let mut proj = DMatrix::identity(n_v, n_v);
    for &k in index_set {
        if k >= lat.eigvecs.len() {
            return Err(CoreError::InvalidInput(format!("mode {k} out of range")));
        }
        proj -= &lat.eigvecs[k] * lat.eigvecs[k].transpose();
    }
    Ok(proj * syz)
}

/// Width-H network sitting exactly at a linear saddle: the canonical units
/// followed by zero units.
pub fn saddle_net(spec: &LinearSaddleSpec, kind: &ActivationKind, h: usize) -> Result<UnitLayerNet> {
    if !matches!(kind, ActivationKind::LinearFc { .. }) {
        return Err(CoreError::Unsupported("saddle nets are linear-fc".into()));
    }
    if h < spec.units.len() {
        return Err(CoreError::InvalidInput(format!(
            "width {h} is below the saddle rank {}",
            spec.units.len()
        )));
    }
    let mut units = spec.units.clone();
    while units.len() < h {
        units.push(UnitParams::zeros(kind.n_v(), kind.n_u()));
    }
    UnitLayerNet::new(kind.clone(), units, OutMap::Identity)
}

/// Saddle atlas CSV export: rows (index_set bitmask, rank, saddle_loss).
pub fn write_saddle_atlas_csv<P: AsRef<std::path::Path>>(
    path: P,
    saddles: &[LinearSaddleSpec],
) -> Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "bitmask,rank,saddle_loss")?;
    for s in saddles {
        writeln!(f, "{},{},{:.12e}", s.bitmask, s.index_set.len(), s.saddle_loss)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::DataStats;
    use approx::assert_relative_eq;

    fn diag_stats() -> DataStats {
        // Σ_zz = I, Σ_yz = diag(2,1), realizable teacher
        let syz = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let syy = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        DataStats::prescribed_linear(syz, DMatrix::identity(2, 2), syy)
    }

    #[test]
    fn scalar_generic_embedding_matches_hand_algebra() {
        // base (v*, u*) = (2, 3), γ_v = 0.3 → units {(1.4, 3), (0.6, 3)}
        let kind = ActivationKind::LinearFc { input_dim: 1, output_dim: 1 };
        let base = UnitLayerNet::new(
            kind,
            vec![UnitParams::new(
                DVector::from_element(1, 2.0),
                DVector::from_element(1, 3.0),
            )],
            OutMap::Identity,
        )
        .unwrap();
        let wide = embed_unit(&base, &EmbeddingSpec::Generic { donor: 0, gamma_v: 0.3 }).unwrap();
        assert_relative_eq!(wide.units[0].v[0], 1.4, epsilon = 1e-15);
        assert_relative_eq!(wide.units[1].v[0], 0.6, epsilon = 1e-15);
        assert_relative_eq!(wide.units[1].u[0], 3.0, epsilon = 1e-15);
        let x = crate::net::SampleInput::Vector(DVector::from_element(1, 1.0));
        assert_relative_eq!(wide.forward(&x).unwrap()[0], 6.0, epsilon = 1e-14);
        assert_relative_eq!(base.forward(&x).unwrap()[0], 6.0, epsilon = 1e-14);
    }

    #[test]
    fn homogeneous_embedding_on_relu_base() {
        // base (v*, u*) = (1, [1,0]), γ_u = 2, γ_v = 0.25 → donor v = 0.5
        let kind = ActivationKind::ReluFc { input_dim: 2, output_dim: 1 };
        let base = UnitLayerNet::new(
            kind,
            vec![UnitParams::new(
                DVector::from_element(1, 1.0),
                DVector::from_vec(vec![1.0, 0.0]),
            )],
            OutMap::Identity,
        )
        .unwrap();
        let wide = embed_unit(
            &base,
            &EmbeddingSpec::Homogeneous { donor: 0, gamma_u: 2.0, gamma_v: 0.25 },
        )
        .unwrap();
        assert_relative_eq!(wide.units[0].v[0], 0.5, epsilon = 1e-15);
        assert_relative_eq!(wide.units[1].v[0], 0.25, epsilon = 1e-15);
        assert_relative_eq!(wide.units[1].u[0], 2.0, epsilon = 1e-15);
        // forward equality on random probes
        use rand::SeedableRng;
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = DVector::from_fn(2, |_, _| rand::Rng::sample::<f64, _>(&mut rng, StandardNormal));
            let probe = crate::net::SampleInput::Vector(x);
            assert_relative_eq!(
                base.forward(&probe).unwrap()[0],
                wide.forward(&probe).unwrap()[0],
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn negative_gamma_u_rejected_on_relu() {
        let kind = ActivationKind::ReluFc { input_dim: 2, output_dim: 1 };
        let base = UnitLayerNet::zeros(kind, 1).unwrap();
        let r = embed_unit(
            &base,
            &EmbeddingSpec::Homogeneous { donor: 0, gamma_u: -1.0, gamma_v: 0.5 },
        );
        assert!(matches!(r, Err(CoreError::InvalidInput(_))));
    }

    #[test]
    fn lattice_counts_two_to_the_d() {
        let stats = diag_stats();
        let all = enumerate_linear_saddles(&stats, &SaddleSelector::All).unwrap();
        assert_eq!(all.len(), 4);
        let rank1 = enumerate_linear_saddles(&stats, &SaddleSelector::Rank(1)).unwrap();
        assert_eq!(rank1.len(), 2);
    }

    #[test]
    fn diag_saddle_values_match_hand_evaluation() {
        let stats = diag_stats();
        let top = enumerate_linear_saddles(&stats, &SaddleSelector::Subset(vec![0])).unwrap();
        let s = &top[0];
        let expect_w = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        assert_relative_eq!(s.w_star, expect_w, epsilon = 1e-12);
        // residual along mode 2: ½·1²
        assert_relative_eq!(s.saddle_loss, 0.5, epsilon = 1e-12);
        // empty set: the origin saddle
        let origin = enumerate_linear_saddles(&stats, &SaddleSelector::Subset(vec![])).unwrap();
        assert_eq!(origin[0].w_star, DMatrix::zeros(2, 2));
        assert_relative_eq!(origin[0].saddle_loss, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn canonical_factorization_satisfies_fixed_point_conditions() {
        let stats = diag_stats();
        let saddles = enumerate_linear_saddles(&stats, &SaddleSelector::All).unwrap();
        let syz = stats.sigma_yz.as_ref().unwrap();
        let szz = stats.sigma_zz.as_ref().unwrap();
        for s in &saddles {
            let residual = syz - &s.w_star * szz;
            for unit in &s.units {
                assert!((&residual * &unit.u).norm() < 1e-10);
                assert!((residual.transpose() * &unit.v).norm() < 1e-10);
            }
            // the factorization reproduces W*
            let mut w = DMatrix::zeros(2, 2);
            for unit in &s.units {
                w += &unit.v * unit.u.transpose();
            }
            assert_relative_eq!(w, s.w_star, epsilon = 1e-12);
        }
    }

    #[test]
    fn projected_stats_formula() {
        let stats = diag_stats();
        let tilde = projected_stats(&stats, &[0]).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(tilde, expect, epsilon = 1e-12);
        let full = projected_stats(&stats, &[0, 1]).unwrap();
        assert!(full.norm() < 1e-12);
        let none = projected_stats(&stats, &[]).unwrap();
        assert_relative_eq!(none, *stats.sigma_yz.as_ref().unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn singular_sigma_zz_rejected() {
        let syz = DMatrix::identity(2, 2);
        let szz = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let stats = DataStats::prescribed_linear(syz, szz, DMatrix::identity(2, 2));
        assert!(matches!(
            enumerate_linear_saddles(&stats, &SaddleSelector::All),
            Err(CoreError::IllConditioned(_))
        ));
    }

    #[test]
    fn saddle_losses_decrease_along_greedy_chain() {
        let syz = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        let syy = &syz * syz.transpose();
        let stats = DataStats::prescribed_linear(syz, DMatrix::identity(3, 3), syy);
        let mut prev = f64::INFINITY;
        for subset in [vec![], vec![0], vec![0, 1], vec![0, 1, 2]] {
            let s = enumerate_linear_saddles(&stats, &SaddleSelector::Subset(subset)).unwrap();
            assert!(s[0].saddle_loss < prev);
            prev = s[0].saddle_loss;
        }
        assert_relative_eq!(prev, 0.0, epsilon = 1e-12);
    }
}
