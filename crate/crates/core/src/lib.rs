//! Motion-based point cloud sequence prediction.
//!
//! Given `T` observed frames, the network encodes per-frame content and
//! frame-to-frame motion at several sampled resolutions, tracks them with
//! recurrent cells whose states stay attached to sampled points, and decodes
//! a per-point scene flow for each future frame.
//!
//! Everything runs in `f64` on the CPU and every learnable operation has an
//! exact reverse pass, so the whole pipeline can be checked against finite
//! differences.

pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use geom::{PointCloud, Point};
pub use model::{Ablation, ModelConfig, Monet, Variant};
pub use nn::ParamStore;
