//! Numerical laboratory for a Fourier-side sufficient condition of the local
//! limit theorem: moment and tail checks on a density, the dominating function
//! used in the dominated-convergence argument, N-fold scaled self-convolutions
//! computed several independent ways, and convergence metrics against the
//! Gaussian limit.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod density;
pub mod error;
pub mod grid;
pub mod spectrum;
pub mod condition;
pub mod convolution;
pub mod metrics;

pub use density::{make_density, Density, DensitySpec, Family, MomentReport};
pub use error::{Error, Result};
pub use grid::{Grid, GridFunction};
