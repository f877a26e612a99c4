//! Analysis of in-place linear algorithms built from rotation and constant
//! gates: quasi-entropy potential along the trajectory, ill-conditioned
//! bottleneck scans, orthonormal overflow/underflow direction systems and
//! fixed-precision execution.

pub mod bottleneck;
pub mod builders;
pub mod directions;
pub mod entropy;
pub mod error;
pub mod format;
pub mod gate;
pub mod linalg;
pub mod quantized;

pub use error::{Error, Result};
pub use gate::{Gate, LinearAlgorithm, TrajectoryState, Touched};
