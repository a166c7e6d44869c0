//! Table recognition as image-to-sequence decoding, at desk scale.
//!
//! The crate covers the whole pipeline: a logical [`Table`] model, a unified
//! token vocabulary with discrete coordinates, dense structure-prior targets,
//! key-biased attention with a small autodiff engine, blockwise multi-token
//! decoding, synthetic data generation, image enhancement and evaluation.

pub mod decode;
pub mod error;
pub mod image;
pub mod imgproc;
pub mod keybias;
pub mod metrics;
pub mod nn;
pub mod quant;
pub mod table;
pub mod synth;
pub mod targets;
pub mod tokenize;

pub use error::{Error, ErrorClass, Result};
pub use image::Image;
pub use quant::QuantSpec;
pub use table::{BBox, Cell, OwnerGrid, Table};
pub use tokenize::{TokenSeq, Vocab};
