//! Software direct volume rendering.

pub mod field;
pub mod integrate;
pub mod render;
pub mod transfer;

pub use field::{gradient, BlockField, DenseField, Field, Sample, MAX_CHANNELS};
pub use integrate::{integrate_ray, march, segment_after, MarchParams, OpticalModel, RayState, Span};
pub use render::{render_block_pass, render_dense, render_frame, FrameSetup, FrameStats, RenderOptions, WrappedFramebuffer};
pub use transfer::{default_channel_colors, Palette, TfVariant, TransferFunction};
