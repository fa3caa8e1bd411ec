//! The unit-layer network family: one layer of H units with trainable
//! parameters θ_i = [v_i; u_i], an activation kind, and an optional linear
//! output composition. The forward map is
//!
//!   f(x) = g_out( Σ_i φ(x; u_i) v_i )
//!
//! where φ is scalar for fully-connected kinds, a window-row for the conv
//! kinds, and the head map for linear self-attention.

mod activation;
mod fd;
pub(crate) mod grad;
mod reduce;

pub use activation::{ActivationKind, HomogeneityField, Sigma, CONV_KERNEL, CONV_STRIDE};
pub use fd::grad_fd;
pub use grad::Gradient;
pub use reduce::reduce_width;

use crate::error::{CoreError, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Parameters of one unit: second-layer weights v and first-layer weights u.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitParams {
    pub v: DVector<f64>,
    pub u: DVector<f64>,
}

impl UnitParams {
    pub fn new(v: DVector<f64>, u: DVector<f64>) -> Self {
        Self { v, u }
    }

    pub fn zeros(n_v: usize, n_u: usize) -> Self {
        Self {
            v: DVector::zeros(n_v),
            u: DVector::zeros(n_u),
        }
    }

    /// Stacked θ = [v; u].
    pub fn theta(&self) -> DVector<f64> {
        let mut t = DVector::zeros(self.v.len() + self.u.len());
        t.rows_mut(0, self.v.len()).copy_from(&self.v);
        t.rows_mut(self.v.len(), self.u.len()).copy_from(&self.u);
        t
    }

    pub fn from_theta(theta: &DVector<f64>, n_v: usize) -> Self {
        Self {
            v: theta.rows(0, n_v).into_owned(),
            u: theta.rows(n_v, theta.len() - n_v).into_owned(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.v.norm_squared() + self.u.norm_squared()).sqrt()
    }
}

/// Linear processing applied after the unit layer. Chains and skip patterns
/// are restricted to linear activation kinds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OutMap {
    Identity,
    /// f = W_L ··· W_1 ζ, with the matrices listed innermost first.
    LinearChain { mats: Vec<DMatrix<f64>> },
    /// Four-layer linear network built on the unit layer (W1 rows = u_i,
    /// W2 columns = v_i), with an optional skip connection around W2 (skip1)
    /// or around W3∘W2 (skip2).
    SkipLinear {
        w3: DMatrix<f64>,
        w4: DMatrix<f64>,
        pattern: SkipPattern,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SkipPattern {
    None,
    Skip1,
    Skip2,
}

/// One sample input: a vector, or a token matrix for attention.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleInput {
    Vector(DVector<f64>),
    Tokens(DMatrix<f64>),
}

impl SampleInput {
    pub fn as_vector(&self) -> Result<&DVector<f64>> {
        match self {
            SampleInput::Vector(x) => Ok(x),
            SampleInput::Tokens(_) => Err(CoreError::Shape(
                "expected a vector input, got a token matrix".into(),
            )),
        }
    }

    pub fn as_tokens(&self) -> Result<&DMatrix<f64>> {
        match self {
            SampleInput::Tokens(x) => Ok(x),
            SampleInput::Vector(_) => Err(CoreError::Shape(
                "expected a token matrix, got a vector".into(),
            )),
        }
    }
}

/// A width-H network in the unit-layer family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitLayerNet {
    pub activation: ActivationKind,
    pub units: Vec<UnitParams>,
    pub out_map: OutMap,
}

impl UnitLayerNet {
    pub fn new(
        activation: ActivationKind,
        units: Vec<UnitParams>,
        out_map: OutMap,
    ) -> Result<Self> {
        if let ActivationKind::PolyFc { degree, .. } = activation {
            if degree < 2 {
                return Err(CoreError::InvalidInput(
                    "poly-fc degree must be at least 2".into(),
                ));
            }
        }
        if activation.is_conv() && activation.input_dim() % CONV_STRIDE != 0 {
            return Err(CoreError::InvalidInput(
                "conv input dimension must be divisible by the stride".into(),
            ));
        }
        let (n_u, n_v) = (activation.n_u(), activation.n_v());
        for (i, unit) in units.iter().enumerate() {
            if unit.u.len() != n_u || unit.v.len() != n_v {
                return Err(CoreError::Shape(format!(
                    "unit {i}: expected (n_v, n_u) = ({n_v}, {n_u}), got ({}, {})",
                    unit.v.len(),
                    unit.u.len()
                )));
            }
        }
        match &out_map {
            OutMap::Identity => {}
            OutMap::LinearChain { mats } => {
                if !matches!(activation, ActivationKind::LinearFc { .. }) {
                    return Err(CoreError::Unsupported(
                        "linear chains apply only to linear activation kinds".into(),
                    ));
                }
                let mut dim = n_v;
                for (l, m) in mats.iter().enumerate() {
                    if m.ncols() != dim {
                        return Err(CoreError::Shape(format!(
                            "chain matrix {l} has {} columns, expected {dim}",
                            m.ncols()
                        )));
                    }
                    dim = m.nrows();
                }
            }
            OutMap::SkipLinear { w3, w4, .. } => {
                if !matches!(activation, ActivationKind::LinearFc { .. }) {
                    return Err(CoreError::Unsupported(
                        "skip networks apply only to linear activation kinds".into(),
                    ));
                }
                // the skip adds the per-unit preactivation vector h ∈ R^H to ζ ∈ R^{N_v}
                if n_v != units.len() {
                    return Err(CoreError::Shape(
                        "skip networks require n_v equal to the unit count".into(),
                    ));
                }
                if w3.ncols() != n_v || w4.ncols() != w3.nrows() {
                    return Err(CoreError::Shape("skip matrices do not conform".into()));
                }
            }
        }
        Ok(Self {
            activation,
            units,
            out_map,
        })
    }

    pub fn width(&self) -> usize {
        self.units.len()
    }

    /// Zero network of the given width.
    pub fn zeros(activation: ActivationKind, width: usize) -> Result<Self> {
        let (n_u, n_v) = (activation.n_u(), activation.n_v());
        let units = (0..width).map(|_| UnitParams::zeros(n_v, n_u)).collect();
        Self::new(activation, units, OutMap::Identity)
    }

    /// Derived linear map W = Σ_i v_i u_iᵀ.
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let (n_u, n_v) = (self.activation.n_u(), self.activation.n_v());
        let mut w = DMatrix::zeros(n_v, n_u);
        for unit in &self.units {
            w += &unit.v * unit.u.transpose();
        }
        w
    }

    /// Stacked first-layer weight matrix U = [u_1 ··· u_H] (n_u × H).
    pub fn first_layer_matrix(&self) -> DMatrix<f64> {
        let n_u = self.activation.n_u();
        let mut m = DMatrix::zeros(n_u, self.units.len());
        for (i, unit) in self.units.iter().enumerate() {
            m.column_mut(i).copy_from(&unit.u);
        }
        m
    }

    /// Per-unit preactivations h_i = u_i·x for scalar-σ kinds.
    pub(crate) fn preactivations(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.units.len(), self.units.iter().map(|u| u.u.dot(x)))
    }

    /// Unit-layer output ζ = Σ_i φ(x; u_i) v_i before the out map.
    pub fn zeta(&self, input: &SampleInput) -> Result<DVector<f64>> {
        let n_v = self.activation.n_v();
        match &self.activation {
            ActivationKind::LinearAttention {
                embed_dim,
                context_len,
                head_rank,
            } => {
                let x = input.as_tokens()?;
                check_token_shape(x, *embed_dim, *context_len)?;
                let (a, xq) = attention_features(x);
                let mut y = 0.0;
                for unit in &self.units {
                    let head = AttentionHead::from_unit(unit, *embed_dim, *head_rank);
                    y += head.predict(&a, &xq);
                }
                Ok(DVector::from_element(1, y))
            }
            kind if kind.is_conv() => {
                let x = input.as_vector()?;
                check_vec_len(x, kind.input_dim())?;
                let sigma = kind.sigma().unwrap();
                let mut y = 0.0;
                for unit in &self.units {
                    for (w, xw) in conv_windows(x).enumerate() {
                        y += unit.v[w] * sigma.eval(unit.u.dot(&xw));
                    }
                }
                Ok(DVector::from_element(1, y))
            }
            kind => {
                let x = input.as_vector()?;
                check_vec_len(x, kind.input_dim())?;
                let sigma = kind.sigma().unwrap();
                let mut zeta = DVector::zeros(n_v);
                for unit in &self.units {
                    zeta.axpy(sigma.eval(unit.u.dot(x)), &unit.v, 1.0);
                }
                Ok(zeta)
            }
        }
    }

    /// Forward map. The output is a vector; scalar-output kinds return a
    /// length-1 vector. For attention the returned scalar is the prediction
    /// read from the label coordinate of the query token.
    pub fn forward(&self, input: &SampleInput) -> Result<DVector<f64>> {
        let zeta = self.zeta(input)?;
        match &self.out_map {
            OutMap::Identity => Ok(zeta),
            OutMap::LinearChain { mats } => {
                let mut out = zeta;
                for m in mats {
                    out = m * out;
                }
                Ok(out)
            }
            OutMap::SkipLinear { w3, w4, pattern } => {
                let x = input.as_vector()?;
                let h = self.preactivations(x);
                Ok(match pattern {
                    SkipPattern::None => w4 * (w3 * zeta),
                    SkipPattern::Skip1 => w4 * (w3 * (zeta + h)),
                    SkipPattern::Skip2 => w4 * (w3 * zeta + h),
                })
            }
        }
    }
}

pub(crate) fn check_vec_len(x: &DVector<f64>, expected: usize) -> Result<()> {
    if x.len() != expected {
        return Err(CoreError::Shape(format!(
            "input length {} does not match network input dimension {expected}",
            x.len()
        )));
    }
    Ok(())
}

pub(crate) fn check_token_shape(x: &DMatrix<f64>, embed_dim: usize, context_len: usize) -> Result<()> {
    if x.nrows() != embed_dim + 1 || x.ncols() != context_len + 1 {
        return Err(CoreError::Shape(format!(
            "token matrix is {}×{}, expected {}×{}",
            x.nrows(),
            x.ncols(),
            embed_dim + 1,
            context_len + 1
        )));
    }
    Ok(())
}

/// Iterator over the stride-2 windows of a conv input.
pub(crate) fn conv_windows(x: &DVector<f64>) -> impl Iterator<Item = DVector<f64>> + '_ {
    (0..x.len() / CONV_STRIDE).map(move |w| x.rows(w * CONV_STRIDE, CONV_KERNEL).into_owned())
}

/// Token-matrix features shared by attention forward and gradients:
/// A = XXᵀ and the query token x_q (last column).
pub(crate) fn attention_features(x: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let a = x * x.transpose();
    let xq = x.column(x.ncols() - 1).into_owned();
    (a, xq)
}

/// One attention head unpacked from a unit's flat parameter vectors.
/// v = vec(V) column-major with V (D+1)×(D+1); u = [vec(K); vec(Q)] with
/// K, Q each R×(D+1).
pub(crate) struct AttentionHead {
    pub v_mat: DMatrix<f64>,
    pub k_mat: DMatrix<f64>,
    pub q_mat: DMatrix<f64>,
}

impl AttentionHead {
    pub fn from_unit(unit: &UnitParams, embed_dim: usize, head_rank: usize) -> Self {
        let d1 = embed_dim + 1;
        let v_mat = DMatrix::from_column_slice(d1, d1, unit.v.as_slice());
        let kq = head_rank * d1;
        let k_mat = DMatrix::from_column_slice(head_rank, d1, &unit.u.as_slice()[..kq]);
        let q_mat = DMatrix::from_column_slice(head_rank, d1, &unit.u.as_slice()[kq..]);
        Self {
            v_mat,
            k_mat,
            q_mat,
        }
    }

    pub fn pack(&self, unit: &mut UnitParams) {
        unit.v.copy_from_slice(self.v_mat.as_slice());
        let kq = self.k_mat.len();
        unit.u.as_mut_slice()[..kq].copy_from_slice(self.k_mat.as_slice());
        unit.u.as_mut_slice()[kq..].copy_from_slice(self.q_mat.as_slice());
    }

    /// Head contribution to the prediction: eᵀ V A Kᵀ Q x_q with e the label
    /// coordinate. The residual-stream term contributes zero because the
    /// query label slot is zero.
    pub fn predict(&self, a: &DMatrix<f64>, xq: &DVector<f64>) -> f64 {
        let d1 = a.nrows();
        let v_row = self.v_mat.row(d1 - 1).transpose(); // ṽ = Vᵀe
        let av = a * v_row;
        let d = &self.k_mat * av;
        let c = &self.q_mat * xq;
        d.dot(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar_net(kind: ActivationKind, units: Vec<(f64, Vec<f64>)>) -> UnitLayerNet {
        let units = units
            .into_iter()
            .map(|(v, u)| UnitParams::new(DVector::from_element(1, v), DVector::from_vec(u)))
            .collect();
        UnitLayerNet::new(kind, units, OutMap::Identity).unwrap()
    }

    #[test]
    fn linear_fc_forward_sums_units() {
        // 1.4·3 + 0.6·3 = 6 on input 1
        let net = scalar_net(
            ActivationKind::LinearFc {
                input_dim: 1,
                output_dim: 1,
            },
            vec![(1.4, vec![3.0]), (0.6, vec![3.0])],
        );
        let y = net
            .forward(&SampleInput::Vector(DVector::from_element(1, 1.0)))
            .unwrap();
        assert_relative_eq!(y[0], 6.0, epsilon = 1e-14);
    }

    #[test]
    fn relu_clips_negative_preactivation() {
        let net = scalar_net(
            ActivationKind::ReluFc {
                input_dim: 2,
                output_dim: 1,
            },
            vec![(1.0, vec![1.0, 0.0])],
        );
        let y = net
            .forward(&SampleInput::Vector(DVector::from_vec(vec![-2.0, 5.0])))
            .unwrap();
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn quadratic_zero_on_null_direction() {
        let net = scalar_net(
            ActivationKind::QuadraticFc { input_dim: 2 },
            vec![(2.0, vec![1.0, 1.0])],
        );
        let y = net
            .forward(&SampleInput::Vector(DVector::from_vec(vec![1.0, -1.0])))
            .unwrap();
        assert_eq!(y[0], 0.0);
    }

    #[test]
    fn conv_matches_structured_matrix() {
        // f = [v1 v2] [[u1,u2,0,0],[0,0,u1,u2]] x
        let kind = ActivationKind::Conv1dLinear { input_dim: 4 };
        let unit = UnitParams::new(
            DVector::from_vec(vec![0.5, -1.5]),
            DVector::from_vec(vec![2.0, 3.0]),
        );
        let net = UnitLayerNet::new(kind, vec![unit], OutMap::Identity).unwrap();
        let x = DVector::from_vec(vec![1.0, -1.0, 2.0, 0.5]);
        let y = net.forward(&SampleInput::Vector(x)).unwrap();
        let expect = 0.5 * (2.0 - 3.0) + (-1.5) * (4.0 + 1.5);
        assert_relative_eq!(y[0], expect, epsilon = 1e-14);
    }

    #[test]
    fn attention_prediction_reads_label_slot() {
        let kind = ActivationKind::LinearAttention {
            embed_dim: 1,
            context_len: 2,
            head_rank: 1,
        };
        // X is 2×3: rows (x, label), query label zeroed
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, 3.0, 6.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]); // V = e2 e2ᵀ
        let u = DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]); // K = Q = [1 0]
        let net = UnitLayerNet::new(kind, vec![UnitParams::new(v, u)], OutMap::Identity).unwrap();
        // ŷ = eᵀ V A Kᵀ Q x_q with A = XXᵀ:
        // row2(A) = (1·3+2·6, 3²+6²) = (15, 45); Kᵀ Q x_q picks x-coords: 0.5
        // ŷ = [15, 45]·K ᵀ... = 15·0.5 = 7.5
        let y = net
            .forward(&SampleInput::Tokens(x))
            .unwrap();
        assert_relative_eq!(y[0], 7.5, epsilon = 1e-12);
    }

    #[test]
    fn loss_is_permutation_invariant() {
        use crate::data::Dataset;
        let net = scalar_net(
            ActivationKind::TanhFc { input_dim: 2 },
            vec![(1.0, vec![0.3, -0.2]), (-0.5, vec![0.1, 0.9])],
        );
        let mut swapped = net.clone();
        swapped.units.swap(0, 1);
        let data = Dataset::from_vectors(
            vec![
                DVector::from_vec(vec![0.2, 0.4]),
                DVector::from_vec(vec![-1.0, 0.7]),
            ],
            vec![
                DVector::from_element(1, 0.3),
                DVector::from_element(1, -0.1),
            ],
            "test",
        );
        let model = crate::LossModel::Data(&data);
        assert_relative_eq!(
            crate::loss(&net, &model).unwrap(),
            crate::loss(&swapped, &model).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn poly_degree_below_two_rejected() {
        let r = UnitLayerNet::zeros(
            ActivationKind::PolyFc {
                input_dim: 2,
                degree: 1,
            },
            1,
        );
        assert!(r.is_err());
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let net = scalar_net(
            ActivationKind::LinearFc {
                input_dim: 2,
                output_dim: 1,
            },
            vec![(1.0, vec![1.0, 2.0])],
        );
        let r = net.forward(&SampleInput::Vector(DVector::from_vec(vec![1.0])));
        assert!(matches!(r, Err(CoreError::Shape(_))));
    }
}
