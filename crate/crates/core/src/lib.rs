//! Functional simulator and analytical model of a tiled multi-head attention
//! accelerator with an 8-bit fixed-point datapath.
//!
//! - [`config`]: design envelope, runtime parameters, and the reconfiguration command stream.
//! - [`fxp`]: fixed-point formats, quantization, and wide accumulation.
//! - [`tiling`]: column tiling of weights and input buffers.
//! - [`engine`]: bit-exact datapath model plus a floating-point reference.
//! - [`perf`]: cycle, latency, throughput, and resource model with design-space sweeps.
//!
//! The analytical model is generic over [`scalar::Scalar`]; use [`Rational`]
//! for exact identities and `f64` for quick estimates. The reference engine is
//! generic over [`num_traits::Float`].

pub mod config;
pub mod corpus;
pub mod engine;
pub mod fxp;
pub mod perf;
pub mod scalar;
pub mod tensor_file;
pub mod tiling;

/// Exact rational used for clocks, latencies, and throughput.
pub type Rational = num_rational::Ratio<i128>;

/// Performance report with exact arithmetic.
pub type ExactPerfReport = perf::PerfReport<Rational>;
/// Performance report in double precision.
pub type FloatPerfReport = perf::PerfReport<f64>;

/// Reference-engine matrices.
pub type RefMatrix = engine::reference::Matrix<f64>;
pub type RefMatrix32 = engine::reference::Matrix<f32>;
pub type RefHeadWeights = engine::reference::RefHeadWeights<f64>;

pub use config::{DesignParams, ResourceVector, RunParams};
pub use fxp::{QFormat, QTensor};
