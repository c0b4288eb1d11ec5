//! Conversion engine for quantized ANNs and spiking networks.
//!
//! The crate trains (or loads) small networks that use the clip-quantized
//! ReLU activation, converts them into spiking networks with the same
//! topology, and simulates those under several regimes:
//!
//! - `baseline-if`: plain integrate-and-fire neurons, input applied every step
//! - `cif-only`: consistent IF neurons (negative spikes retract overshoot)
//! - `wsc-only`: IF neurons under a wake-sleep schedule
//! - `casc`: consistent IF neurons plus wake-sleep scheduling; the combination
//!   makes the cumulative input-to-output mapping of every hidden neuron equal
//!   to the ANN activation, so decoded spike counts reproduce the ANN exactly.
//!
//! [`oracle`] holds independent brute-force re-implementations used as ground
//! truth by the test suites; [`diagnostics`] turns simulation traces into the
//! error analyses (stable points, bound violations, mismatch ratios, firing
//! curves) and CSV exports.

pub mod diagnostics;
pub mod error;
pub mod oracle;
pub mod qann;
pub mod rng;
pub mod snn;
pub mod tensor;

pub use error::CascError;
pub use tensor::Tensor;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CascError>;
