//! Attention-guided dilated temporal convolution networks for dense,
//! multi-label activity detection in untrimmed video.
//!
//! The crate covers the numeric kernels and reverse-mode differentiation the
//! network needs, the network itself and its ablations, training, frame- and
//! event-level evaluation, the on-disk data formats, and a synthetic dataset
//! generator.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod io_util;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, FormatFault, Result};
pub use model::{AgnetConfig, ForwardTrace, ModelKind, ModelState};
pub use tensor::{ConvKernel, TimeMatrix};
