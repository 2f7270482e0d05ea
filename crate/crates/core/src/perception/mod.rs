//! Exteroception: scandots for the privileged teacher, rendered depth for the student.

pub mod depth;
pub mod noise;
pub mod scandots;

pub use depth::{
    downsample_depth, downsample_to, render_depth, CameraExtrinsics, DepthImage, RenderConfig, DEPTH_COLS,
    DEPTH_ROWS,
};
pub use noise::{preprocess_real_depth, simulate_depth_noise, DepthNoiseConfig, PreprocessConfig};
pub use scandots::{sample_scandots, ScandotGrid, ScandotLayout, SCANDOT_COUNT};
