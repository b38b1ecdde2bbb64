//! Cyclic convolutional networks with pooling: block-circulant spectral
//! analysis, representation-cost bounds and explicit constructions.

pub mod error;
pub mod bounds;
pub mod fourier;
pub mod linalg;
pub mod network;
pub mod constructions;
pub mod harness;

pub use error::{Error, Result};
pub use fourier::{DftPlan, Grid};
pub use linalg::{ConvFilter, FreqSvd, PoolingKind, PoolingSpec, Signal, TeMatrix};
pub use network::{ForwardTrace, NetworkParams, Targets, TrainConfig};

/// Relative threshold below which singular values count as zero.
pub const TAU_RANK: f64 = 1e-6;
/// Distance to a ReLU kink that flags a Jacobian as unreliable.
pub const EPS_KINK: f64 = 1e-8;
