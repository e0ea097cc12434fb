//! Compression of black-box functions `f: [n]^d -> R` into the tensor-ring format.
//!
//! A tensor ring represents `f(x) ~ Tr(H1[x1] H2[x2] ... Hd[xd])` with `r x r`
//! slices. The pipeline here samples only `O(d)` entries of `f`:
//!
//! 1. [`skeleton`] selects per-core environment sets with a hierarchical
//!    upward/downward pass of column-pivoted QR selections.
//! 2. [`init`] builds every core from a local three-site SVD and fixes the bond
//!    gauges with small least-squares fits.
//! 3. [`als`] refines the cores with ridge-regularised alternating least squares
//!    restricted to the per-core sample sets.
//!
//! Multi-index *values* are 1-based at the public boundary ([`MultiIndex`]);
//! everything below that works with 0-based `&[usize]` slices. Axis labels
//! (dimension numbers) are 0-based throughout.

pub mod als;
pub mod diagnostics;
mod error;
pub mod init;
pub mod linalg;
pub mod oracle;
pub mod ring;
pub mod skeleton;
pub mod tensor;

pub use error::{Result, TrError};
pub use oracle::{BlackBox, Function};
pub use ring::{TensorRing, TrCore};
pub use tensor::{DenseTensor, MultiIndex};

/// Dense real matrix type used across the crate.
pub type Matrix = nalgebra::DMatrix<f64>;
