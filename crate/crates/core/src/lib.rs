//! Learning-free segmentation of dynamic Gaussian scenes.
//!
//! Per-frame 2D instance masks are lifted onto an explicit dynamic Gaussian
//! scene in two iterative stages:
//!
//! 1. [`igit`] traces instance weights through the compositing equation,
//!    extracts the target's Gaussians and re-traces on the extracted subset
//!    until the mask stops changing. [`temporal`] runs this per temporal
//!    segment and merges adjacent segments whose masks agree.
//! 2. [`rrc`] truncates every extracted Gaussian's screen-space kernel to a
//!    central level set, refining per-frame thresholds multiplicatively.
//!
//! [`rasterizer`] is the shared compositing engine (tiled and parallel, with
//! a naive oracle), [`synth`] generates test scenes with ground truth, and
//! [`pipeline`] wires the stages into the `segment`/`eval`/`synth` commands.

pub mod error;
pub mod evalsuite;
pub mod igit;
pub mod pipeline;
pub mod projection;
pub mod rasterizer;
pub mod rrc;
pub mod scene_model;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
