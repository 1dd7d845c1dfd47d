//! Facial keypoint detection and disguised-face identification.
//!
//! The pipeline: a seedable generator of schematic annotated faces
//! ([`synth`]), Gaussian-heatmap targets and decoding ([`heatmap`]),
//! a small convolutional regressor trained from scratch ([`net`]),
//! nose-referenced star-net angle matching ([`starnet`]), and a
//! PCK-style evaluation harness ([`eval`]).

pub mod error;
pub mod geom;

pub use error::{Error, Result};
