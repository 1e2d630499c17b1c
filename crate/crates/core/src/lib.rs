//! Multi-precision dense linear algebra (half, single and double) with an
//! explicit promotion controller and kernel dispatcher, plus the statistical
//! workloads built on it.
//!
//! Half precision is emulated in software: storage is binary16 and kernels
//! compute in single, rounding once on output. Mixed-precision operations
//! return the wider of their input precisions.

pub mod array;
pub mod dispatch;
pub mod error;
pub mod io;
pub mod linalg;
pub mod parallel;
pub mod precision;
pub mod scalar;
pub mod stats;

pub use array::{Axis, BinaryOp, MPArray, Placement, ReduceOp, Shape, UnaryOp};
pub use dispatch::{registry, KernelKey};
pub use error::{Error, Result};
pub use linalg::{GemmParams, Side, SvdResult};
pub use precision::{promote, Half16Bits, Precision};
