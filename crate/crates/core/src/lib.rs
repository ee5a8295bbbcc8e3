#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod denoise;
pub mod density;
pub mod dude;
pub mod error;
pub mod grid;
pub mod harness;
pub mod io;
pub mod inversion;
pub mod rng;

pub use channels::{ChannelKind, ChannelMatrix, ChannelModel, ChannelSpec, OutputQuantizer};
pub use density::{DensityEstimate, Kernel, KernelKind};
pub use error::{Error, Result};
pub use grid::UniformAxis;
pub use inversion::{LpSolution, QuantizedPmf, SupportGrid};
