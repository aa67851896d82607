//! Environment-independent representation of an agent's spatial configuration
//! discovered from sensorimotor redundancy.
//!
//! A redundant planar arm carries a pinhole retina. For each explored motor
//! configuration the set of configurations giving the same sensory input (its
//! kernel manifold) is traced, the manifolds are compared with a
//! periodicity-aware Hausdorff distance, and the resulting distance matrix is
//! embedded and checked against the retina's external pose.

pub mod analysis;
pub mod embedding;
pub mod error;
pub mod kernel;
pub mod kinematics;
pub mod manifold_set;
pub mod metric;
pub mod parallel;
pub mod seed;
pub mod sensor;

pub use error::{Error, Result};
pub use kernel::{ContinuationParams, KernelManifold};
pub use kinematics::{MotorConfig, RetinaPose, WorkingSpace};
pub use metric::DistanceMatrix;
