//! Activation kinds for the unit layer and their scalar nonlinearities.

use serde::{Deserialize, Serialize};

/// Scalar nonlinearity applied to a preactivation `z = u·x` in the
/// fully-connected and convolutional families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sigma {
    Linear,
    Relu,
    Quadratic,
    Poly(u32),
    Tanh,
    Sigmoid,
    Sin,
    ZTanh,
}

impl Sigma {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Sigma::Linear => z,
            // subgradient at 0 is defined as 0
            Sigma::Relu => {
                if z > 0.0 {
                    z
                } else {
                    0.0
                }
            }
            Sigma::Quadratic => z * z,
            Sigma::Poly(p) => z.powi(p as i32),
            Sigma::Tanh => z.tanh(),
            Sigma::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Sigma::Sin => z.sin(),
            Sigma::ZTanh => z * z.tanh(),
        }
    }

    pub fn deriv(self, z: f64) -> f64 {
        match self {
            Sigma::Linear => 1.0,
            Sigma::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Sigma::Quadratic => 2.0 * z,
            Sigma::Poly(p) => f64::from(p) * z.powi(p as i32 - 1),
            Sigma::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Sigma::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Sigma::Sin => z.cos(),
            Sigma::ZTanh => {
                let t = z.tanh();
                t + z * (1.0 - t * t)
            }
        }
    }
}

/// The architecture of one unit layer. Convolutional variants are
/// one-dimensional with kernel size 2, stride 2 and no padding, materialized
/// as structured weight matrices over the input windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ActivationKind {
    LinearFc {
        input_dim: usize,
        output_dim: usize,
    },
    ReluFc {
        input_dim: usize,
        output_dim: usize,
    },
    Conv1dLinear {
        input_dim: usize,
    },
    Conv1dRelu {
        input_dim: usize,
    },
    QuadraticFc {
        input_dim: usize,
    },
    PolyFc {
        input_dim: usize,
        degree: u32,
    },
    TanhFc {
        input_dim: usize,
    },
    SigmoidFc {
        input_dim: usize,
    },
    SinFc {
        input_dim: usize,
    },
    ZTanhFc {
        input_dim: usize,
    },
    /// One linear self-attention layer with a residual stream. Heads have
    /// rank-`head_rank` key/query maps; the prediction is read from the label
    /// coordinate of the query token.
    LinearAttention {
        embed_dim: usize,
        context_len: usize,
        head_rank: usize,
    },
}

pub const CONV_KERNEL: usize = 2;
pub const CONV_STRIDE: usize = 2;

impl ActivationKind {
    /// Dimension of the first-layer weight vector u of one unit.
    pub fn n_u(&self) -> usize {
        match self {
            ActivationKind::LinearFc { input_dim, .. }
            | ActivationKind::ReluFc { input_dim, .. }
            | ActivationKind::QuadraticFc { input_dim }
            | ActivationKind::PolyFc { input_dim, .. }
            | ActivationKind::TanhFc { input_dim }
            | ActivationKind::SigmoidFc { input_dim }
            | ActivationKind::SinFc { input_dim }
            | ActivationKind::ZTanhFc { input_dim } => *input_dim,
            ActivationKind::Conv1dLinear { .. } | ActivationKind::Conv1dRelu { .. } => CONV_KERNEL,
            ActivationKind::LinearAttention {
                embed_dim,
                head_rank,
                ..
            } => 2 * head_rank * (embed_dim + 1),
        }
    }

    /// Dimension of the second-layer weight vector v of one unit.
    pub fn n_v(&self) -> usize {
        match self {
            ActivationKind::LinearFc { output_dim, .. }
            | ActivationKind::ReluFc { output_dim, .. } => *output_dim,
            ActivationKind::Conv1dLinear { input_dim }
            | ActivationKind::Conv1dRelu { input_dim } => input_dim / CONV_STRIDE,
            ActivationKind::QuadraticFc { .. }
            | ActivationKind::PolyFc { .. }
            | ActivationKind::TanhFc { .. }
            | ActivationKind::SigmoidFc { .. }
            | ActivationKind::SinFc { .. }
            | ActivationKind::ZTanhFc { .. } => 1,
            ActivationKind::LinearAttention { embed_dim, .. } => (embed_dim + 1) * (embed_dim + 1),
        }
    }

    /// Dimension of the network output.
    pub fn output_dim(&self) -> usize {
        match self {
            ActivationKind::LinearFc { output_dim, .. }
            | ActivationKind::ReluFc { output_dim, .. } => *output_dim,
            _ => 1,
        }
    }

    /// Expected input: vector length, or token-matrix shape for attention.
    pub fn input_dim(&self) -> usize {
        match self {
            ActivationKind::LinearFc { input_dim, .. }
            | ActivationKind::ReluFc { input_dim, .. }
            | ActivationKind::Conv1dLinear { input_dim }
            | ActivationKind::Conv1dRelu { input_dim }
            | ActivationKind::QuadraticFc { input_dim }
            | ActivationKind::PolyFc { input_dim, .. }
            | ActivationKind::TanhFc { input_dim }
            | ActivationKind::SigmoidFc { input_dim }
            | ActivationKind::SinFc { input_dim }
            | ActivationKind::ZTanhFc { input_dim } => *input_dim,
            ActivationKind::LinearAttention { embed_dim, .. } => embed_dim + 1,
        }
    }

    pub fn sigma(&self) -> Option<Sigma> {
        match self {
            ActivationKind::LinearFc { .. } => Some(Sigma::Linear),
            ActivationKind::ReluFc { .. } => Some(Sigma::Relu),
            ActivationKind::Conv1dLinear { .. } => Some(Sigma::Linear),
            ActivationKind::Conv1dRelu { .. } => Some(Sigma::Relu),
            ActivationKind::QuadraticFc { .. } => Some(Sigma::Quadratic),
            ActivationKind::PolyFc { degree, .. } => Some(Sigma::Poly(*degree)),
            ActivationKind::TanhFc { .. } => Some(Sigma::Tanh),
            ActivationKind::SigmoidFc { .. } => Some(Sigma::Sigmoid),
            ActivationKind::SinFc { .. } => Some(Sigma::Sin),
            ActivationKind::ZTanhFc { .. } => Some(Sigma::ZTanh),
            ActivationKind::LinearAttention { .. } => None,
        }
    }

    pub fn is_conv(&self) -> bool {
        matches!(
            self,
            ActivationKind::Conv1dLinear { .. } | ActivationKind::Conv1dRelu { .. }
        )
    }

    /// φ is linear in u (degree-1 homogeneous and additive).
    pub fn is_linear_in_u(&self) -> bool {
        matches!(
            self,
            ActivationKind::LinearFc { .. } | ActivationKind::Conv1dLinear { .. }
        )
    }

    /// φ is degree-1 homogeneous in u; returns the scalar field restriction.
    pub fn homogeneity(&self) -> Option<HomogeneityField> {
        match self {
            ActivationKind::LinearFc { .. } | ActivationKind::Conv1dLinear { .. } => {
                Some(HomogeneityField::Reals)
            }
            ActivationKind::ReluFc { .. } | ActivationKind::Conv1dRelu { .. } => {
                Some(HomogeneityField::NonNegative)
            }
            _ => None,
        }
    }

    /// φ(z; 0) = 0 for all z, i.e. the zero weight vector is a valid u_zero.
    pub fn has_u_zero(&self) -> bool {
        !matches!(self, ActivationKind::SigmoidFc { .. })
    }

    /// Smooth in the parameters (rk4 integration permitted).
    pub fn is_smooth(&self) -> bool {
        !matches!(
            self,
            ActivationKind::ReluFc { .. } | ActivationKind::Conv1dRelu { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActivationKind::LinearFc { .. } => "linear-fc",
            ActivationKind::ReluFc { .. } => "relu-fc",
            ActivationKind::Conv1dLinear { .. } => "conv1d-linear",
            ActivationKind::Conv1dRelu { .. } => "conv1d-relu",
            ActivationKind::QuadraticFc { .. } => "quadratic-fc",
            ActivationKind::PolyFc { .. } => "poly-fc",
            ActivationKind::TanhFc { .. } => "tanh-fc",
            ActivationKind::SigmoidFc { .. } => "sigmoid-fc",
            ActivationKind::SinFc { .. } => "sin-fc",
            ActivationKind::ZTanhFc { .. } => "ztanh-fc",
            ActivationKind::LinearAttention { .. } => "linear-attention",
        }
    }
}

/// Field over which degree-1 homogeneity holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HomogeneityField {
    Reals,
    NonNegative,
}

impl HomogeneityField {
    pub fn contains(self, gamma: f64) -> bool {
        match self {
            HomogeneityField::Reals => true,
            HomogeneityField::NonNegative => gamma >= 0.0,
        }
    }
}
