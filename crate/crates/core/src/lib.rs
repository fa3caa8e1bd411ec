//! A numerical laboratory for saddle-to-saddle gradient-flow dynamics in
//! networks built from H interchangeable units (hidden neurons,
//! convolutional kernels, or attention heads).
//!
//! The crate provides:
//! - the unit-layer network family with hand-derived gradients ([`net`])
//! - gradient-flow integration, plateau detection and effective-width
//!   estimates ([`dynamics`])
//! - embedded fixed points and the linear-network saddle lattice
//!   ([`landscape`])
//! - invariant-manifold constraints, projections and drift tests
//!   ([`manifold`])
//! - closed-form early dynamics, escape times, the quadratic conservation
//!   law and blow-up time quadrature ([`theory`])
//! - dataset generators, second-moment statistics and structured
//!   initializations ([`data`])

pub mod data;
pub mod dynamics;
mod error;
pub mod landscape;
pub mod linalg;
pub mod manifold;
pub mod net;
pub mod theory;

pub use data::{DataStats, Dataset, InitScheme, InitSpec, LossModel};
pub use error::{CoreError, Result};
pub use net::grad::{grad, loss, Gradient};
pub use net::{ActivationKind, OutMap, SampleInput, SkipPattern, UnitLayerNet, UnitParams};
