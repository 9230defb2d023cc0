//! Interest-region style inversion: a toy style generator, a residual encoder
//! refined over several iterations, region-aware losses, synthetic scenes and
//! latent-space evaluation.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x >= 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod encoder;
pub mod error;
pub mod evalkit;
pub mod graph;
pub mod image;
pub mod latent;
pub mod nn;
pub mod objective;
pub mod optim;
pub mod region;
pub mod scene;
pub mod synthgen;
pub mod tensor;
pub mod trainloop;

pub use error::{Error, Result};
pub use image::{ImageBuffer, RegionMask};
pub use latent::{MapperLatent, StyleLatent};
pub use tensor::Tensor;
