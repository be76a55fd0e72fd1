//! Phase-constrained low-rank k-space reconstruction for EPI with
//! Nyquist ghost correction.

pub mod container;
pub mod error;
pub mod fft;
pub mod kspace;
pub mod lifting;
pub mod metrics;
pub mod sim;
pub mod solver;
pub mod subspace;

pub use error::{Error, Result};
pub use kspace::{Dataset, KSpaceGrid, LineState, PartialFourier, Polarity, SamplingPattern};
pub use lifting::{LiftKind, Lifter, LoraksMatrix, Neighborhood};
