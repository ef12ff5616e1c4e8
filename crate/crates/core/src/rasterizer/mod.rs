//! Front-to-back alpha compositing of projected Gaussians.
//!
//! One compositing loop serves three passes:
//!
//! * [`trace_view`] accumulates each Gaussian's compositing weight into the
//!   column of the instance label under every pixel it touches.
//! * [`render_view`] produces color and accumulated opacity.
//! * [`dominant_view`] reports, per pixel, the Gaussian with the largest
//!   single contribution.
//!
//! The image is split into 16×16 tiles processed in parallel. Per-tile
//! partial results are reduced in tile-index order, so output is bitwise
//! independent of the thread count. [`oracle`] holds a naive single-threaded
//! reference implementation of the same passes.

pub mod oracle;
mod tiled;

use crate::scene_model::{CameraView, DynamicScene, InstanceMask};
use crate::{Error, Result};

pub const DEFAULT_ALPHA_CUTOFF: f64 = 1.0 / 255.0;
pub const DEFAULT_TRANSMITTANCE_FLOOR: f64 = 1e-4;

/// Filters and compositing switches shared by every pass.
///
/// A Gaussian contributes `alpha = o·g` at a pixel only if it is in
/// `subset_mask`, the pixel lies inside its footprint, `alpha >= alpha_cutoff`
/// and, with range control, `g > 1 - r`. Filtered-out terms take no part in
/// transmittance either.
#[derive(Debug, Clone, Copy)]
pub struct TraceConfig<'a> {
    pub subset_mask: Option<&'a [bool]>,
    /// Whether contributions are attenuated by the transmittance of the
    /// Gaussians in front. Without it, every contribution is `o·g` and the
    /// pixel loop never exits early.
    pub use_occlusion: bool,
    pub range_thresholds: Option<&'a [f32]>,
    pub alpha_cutoff: f64,
    pub transmittance_floor: f64,
}

impl Default for TraceConfig<'_> {
    fn default() -> Self {
        Self {
            subset_mask: None,
            use_occlusion: true,
            range_thresholds: None,
            alpha_cutoff: DEFAULT_ALPHA_CUTOFF,
            transmittance_floor: DEFAULT_TRANSMITTANCE_FLOOR,
        }
    }
}

impl TraceConfig<'_> {
    pub fn validate(&self, gaussian_count: usize) -> Result<()> {
        if !(self.alpha_cutoff > 0.0 && self.alpha_cutoff < 1.0) {
            return Err(Error::Validation(format!(
                "alpha_cutoff {} outside (0,1)",
                self.alpha_cutoff
            )));
        }
        if !(self.transmittance_floor > 0.0 && self.transmittance_floor < 1.0) {
            return Err(Error::Validation(format!(
                "transmittance_floor {} outside (0,1)",
                self.transmittance_floor
            )));
        }
        if let Some(s) = self.subset_mask {
            if s.len() != gaussian_count {
                return Err(Error::Validation(format!(
                    "subset mask has {} entries for {gaussian_count} gaussians",
                    s.len()
                )));
            }
        }
        if let Some(r) = self.range_thresholds {
            if r.len() != gaussian_count {
                return Err(Error::Validation(format!(
                    "range thresholds have {} entries for {gaussian_count} gaussians",
                    r.len()
                )));
            }
            if let Some(bad) = r.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::Validation(format!("range threshold {bad} outside [0,1]")));
            }
        }
        Ok(())
    }
}

/// Dense `N × (K+1)` accumulator; column 0 is the background.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl WeightMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.cols + k]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn add_at(&mut self, i: usize, k: usize, v: f64) {
        self.values[i * self.cols + k] += v;
    }

    /// Element-wise `self += other`.
    pub fn accumulate(&mut self, other: &WeightMatrix) -> Result<()> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Validation(format!(
                "weight matrix shapes differ: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
        Ok(())
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// `max |self - other|`.
    pub fn max_abs_diff(&self, other: &WeightMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    pub rgb: Vec<[f32; 3]>,
    pub alpha: Vec<f32>,
}

impl RenderOutput {
    /// Foreground where accumulated opacity exceeds one half.
    pub fn binary_mask(&self) -> Vec<bool> {
        self.alpha.iter().map(|&a| a > 0.5).collect()
    }
}

fn check_camera(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Result<()> {
    cam.validate(Some(scene.timestamp_count()))?;
    cfg.validate(scene.gaussian_count())
}

fn check_mask(cam: &CameraView, mask: &InstanceMask, max_label: u16) -> Result<()> {
    if mask.timestamp != cam.timestamp {
        return Err(Error::Validation(format!(
            "mask timestamp {} differs from camera timestamp {}",
            mask.timestamp, cam.timestamp
        )));
    }
    if (mask.width, mask.height) != (cam.width, cam.height) {
        return Err(Error::Validation(format!(
            "mask {}x{} does not match camera {}x{}",
            mask.width, mask.height, cam.width, cam.height
        )));
    }
    if let Some(l) = mask.labels.iter().find(|&&l| l > max_label) {
        return Err(Error::Validation(format!(
            "mask label {l} exceeds the label count {max_label}"
        )));
    }
    Ok(())
}

/// Per-Gaussian instance weights for one view, `N × (max_label + 1)`.
pub fn trace_view(
    scene: &DynamicScene,
    cam: &CameraView,
    mask: &InstanceMask,
    max_label: u16,
    cfg: &TraceConfig,
) -> Result<WeightMatrix> {
    check_camera(scene, cam, cfg)?;
    check_mask(cam, mask, max_label)?;
    Ok(tiled::trace(scene, cam, mask, max_label, cfg))
}

/// Color and opacity. Always composites with transmittance; the
/// `use_occlusion` switch only affects tracing.
pub fn render_view(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Result<RenderOutput> {
    check_camera(scene, cam, cfg)?;
    Ok(tiled::render(scene, cam, cfg))
}

/// Index of the Gaussian with the largest `o·g·T` at each pixel.
pub fn dominant_view(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Result<Vec<Option<u32>>> {
    check_camera(scene, cam, cfg)?;
    Ok(tiled::dominant(scene, cam, cfg))
}
