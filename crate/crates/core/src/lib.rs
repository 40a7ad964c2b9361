//! Out-of-core direct volume rendering of large bricked volumes.

// `!(x > 0.0)` style checks are there to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cache;
pub mod camera;
pub mod compositor;
pub mod config;
pub mod container;
pub mod dvr;
pub mod error;
pub mod geometry;
pub mod image;
pub mod imposter;
pub mod movie;
pub mod pipeline;
pub mod octree;
pub mod stack;
pub mod synth;
pub mod volume;
pub mod warp;

pub use error::{Error, Result};
