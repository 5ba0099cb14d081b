//! Lossless codec for screen-content RGB images.
//!
//! Each pixel is coded by the first of three stages that can express it:
//! a context distribution built from six causal neighbors, the adaptive
//! palette of colors seen so far, and a per-channel residual against a
//! median edge predictor. Three independent options remove redundancy
//! between the stages; see [`CodecOptions`].

pub mod container;
mod digest;
pub mod entropy;
pub mod error;
pub mod image;
pub mod model;
pub mod pipeline;
pub mod ppm;
pub mod stage1;
pub mod stage2;
pub mod stage3;
pub mod synth;

pub use container::{CodecOptions, Header};
pub use error::{Error, Result};
pub use image::{count_unique_colors, PixelSource, RgbImage};
pub use model::Color;
pub use pipeline::{
    decode_image, decode_image_with, encode_image, encode_image_with, CodingStats, Decoded,
    Encoded, Instrument, PixelRecord, ReductionAudit, Session,
};
pub use synth::{generate, ImageKind, SynthSpec};
