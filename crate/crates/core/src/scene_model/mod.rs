//! Dynamic Gaussian scenes, camera views and instance masks.
//!
//! A [`DynamicScene`] stores explicit per-frame parameters for every Gaussian
//! instead of a deformation field. Frames are stored contiguously so that
//! `scene.frame(t)` is a plain slice of `N` parameter sets.

mod io;

pub use io::{
    load_cameras, load_mask, load_scene, read_pointcloud, save_cameras, save_pointcloud, save_scene, write_mask,
    write_ppm, PointCloudVertex,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Instance id reserved for unlabeled pixels.
pub const BACKGROUND: u16 = 0;

const UNIT_TOLERANCE: f32 = 1e-5;

/// State of one Gaussian at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianFrameParams {
    pub mean: [f32; 3],
    /// Unit quaternion, `(w, x, y, z)`.
    pub rotation: [f32; 4],
    pub scale: [f32; 3],
    pub opacity: f32,
    pub color: [f32; 3],
}

impl GaussianFrameParams {
    /// Number of `f32` values in the on-disk record.
    pub const FLOATS: usize = 14;

    fn check(&self) -> std::result::Result<(), String> {
        let all = self.to_floats();
        if let Some(pos) = all.iter().position(|v| !v.is_finite()) {
            return Err(format!("non-finite value in field slot {pos}"));
        }
        let norm = self.rotation.iter().map(|q| q * q).sum::<f32>().sqrt();
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(format!("quaternion norm {norm} is not 1"));
        }
        if self.scale.iter().any(|&s| s <= 0.0) {
            return Err(format!("scale {:?} must be strictly positive", self.scale));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(format!("opacity {} outside [0,1]", self.opacity));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(format!("color {:?} outside [0,1]", self.color));
        }
        Ok(())
    }

    pub fn to_floats(&self) -> [f32; Self::FLOATS] {
        let mut out = [0.0; Self::FLOATS];
        out[0..3].copy_from_slice(&self.mean);
        out[3..7].copy_from_slice(&self.rotation);
        out[7..10].copy_from_slice(&self.scale);
        out[10] = self.opacity;
        out[11..14].copy_from_slice(&self.color);
        out
    }

    pub fn from_floats(v: &[f32; Self::FLOATS]) -> Self {
        Self {
            mean: [v[0], v[1], v[2]],
            rotation: [v[3], v[4], v[5], v[6]],
            scale: [v[7], v[8], v[9]],
            opacity: v[10],
            color: [v[11], v[12], v[13]],
        }
    }
}

/// `N` Gaussians observed over `T` timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicScene {
    gaussian_count: usize,
    timestamp_count: usize,
    // frame-major: params[t * N + i]
    params: Vec<GaussianFrameParams>,
}

impl DynamicScene {
    /// Builds a scene from frame-major parameters (`params[t * n + i]`),
    /// validating every slot.
    pub fn new(gaussian_count: usize, timestamp_count: usize, params: Vec<GaussianFrameParams>) -> Result<Self> {
        if gaussian_count == 0 || timestamp_count == 0 {
            return Err(Error::Validation(format!(
                "scene needs N > 0 and T > 0, got N={gaussian_count} T={timestamp_count}"
            )));
        }
        if params.len() != gaussian_count * timestamp_count {
            return Err(Error::Validation(format!(
                "expected {} parameter sets for N={gaussian_count} T={timestamp_count}, got {}",
                gaussian_count * timestamp_count,
                params.len()
            )));
        }
        for (slot, p) in params.iter().enumerate() {
            p.check().map_err(|reason| Error::InvalidGaussian {
                index: slot % gaussian_count,
                timestamp: slot / gaussian_count,
                reason,
            })?;
        }
        Ok(Self {
            gaussian_count,
            timestamp_count,
            params,
        })
    }

    /// Same parameters at every timestamp.
    pub fn constant(frame: Vec<GaussianFrameParams>, timestamp_count: usize) -> Result<Self> {
        let n = frame.len();
        let mut params = Vec::with_capacity(n * timestamp_count);
        for _ in 0..timestamp_count {
            params.extend_from_slice(&frame);
        }
        Self::new(n, timestamp_count, params)
    }

    pub fn gaussian_count(&self) -> usize {
        self.gaussian_count
    }

    pub fn timestamp_count(&self) -> usize {
        self.timestamp_count
    }

    pub fn frame(&self, t: usize) -> &[GaussianFrameParams] {
        let n = self.gaussian_count;
        &self.params[t * n..(t + 1) * n]
    }

    pub fn get(&self, i: usize, t: usize) -> &GaussianFrameParams {
        &self.params[t * self.gaussian_count + i]
    }

    pub fn params(&self) -> &[GaussianFrameParams] {
        &self.params
    }
}

/// Pinhole camera at one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major rigid transform.
    pub world_to_camera: [f64; 16],
    pub timestamp: u32,
}

impl CameraView {
    pub fn rotation(&self) -> [[f64; 3]; 3] {
        let m = &self.world_to_camera;
        [[m[0], m[1], m[2]], [m[4], m[5], m[6]], [m[8], m[9], m[10]]]
    }

    pub fn translation(&self) -> [f64; 3] {
        let m = &self.world_to_camera;
        [m[3], m[7], m[11]]
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Checks intrinsics, image size and the rotation block. `timestamp_count`
    /// bounds the timestamp when given.
    pub fn validate(&self, timestamp_count: Option<usize>) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Validation(format!(
                "camera image size {}x{} must be positive",
                self.width, self.height
            )));
        }
        let intr = [self.fx, self.fy, self.cx, self.cy];
        if intr.iter().any(|v| !v.is_finite()) || self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::Validation(format!("camera intrinsics {intr:?} invalid")));
        }
        if self.world_to_camera.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite world_to_camera".into()));
        }
        let m = &self.world_to_camera;
        if m[12].abs() > 1e-9 || m[13].abs() > 1e-9 || m[14].abs() > 1e-9 || (m[15] - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!(
                "world_to_camera bottom row {:?} is not [0,0,0,1]",
                &m[12..16]
            )));
        }
        let r = self.rotation();
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = (0..3).map(|k| r[a][k] * r[b][k]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                if (dot - want).abs() > UNIT_TOLERANCE as f64 {
                    return Err(Error::Validation(
                        "world_to_camera rotation block is not orthonormal".into(),
                    ));
                }
            }
        }
        if let Some(t) = timestamp_count {
            if self.timestamp as usize >= t {
                return Err(Error::Validation(format!(
                    "camera timestamp {} outside [0,{t})",
                    self.timestamp
                )));
            }
        }
        Ok(())
    }
}

/// Per-pixel instance ids for one view. Row-major, `labels[y * width + x]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceMask {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u16>,
    pub timestamp: u32,
}

impl InstanceMask {
    pub fn new(width: u32, height: u32, labels: Vec<u16>, timestamp: u32) -> Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(Error::Validation(format!(
                "mask of {width}x{height} has {} labels",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
            timestamp,
        })
    }

    pub fn filled(width: u32, height: u32, label: u16, timestamp: u32) -> Self {
        Self {
            width,
            height,
            labels: vec![label; width as usize * height as usize],
            timestamp,
        }
    }

    pub fn max_label(&self) -> u16 {
        self.labels.iter().copied().max().unwrap_or(BACKGROUND)
    }

    pub fn binary(&self, k: u16) -> Vec<bool> {
        self.labels.iter().map(|&l| l == k).collect()
    }
}

/// A camera paired with its instance mask.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub camera: CameraView,
    pub mask: InstanceMask,
}

impl View {
    pub fn timestamp(&self) -> u32 {
        self.camera.timestamp
    }
}

/// The target instance to extract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSelection(u16);

impl TargetSelection {
    /// Accepts `k0` only if it is a non-background id present in some mask.
    pub fn new<'a>(k0: u16, masks: impl IntoIterator<Item = &'a InstanceMask>) -> Result<Self> {
        if k0 == BACKGROUND {
            return Err(Error::Validation("target id 0 is the background".into()));
        }
        if masks.into_iter().any(|m| m.labels.contains(&k0)) {
            Ok(Self(k0))
        } else {
            Err(Error::Validation(format!("target id {k0} does not appear in any mask")))
        }
    }

    pub fn id(self) -> u16 {
        self.0
    }
}

/// Scene plus all of its views, checked for mutual consistency.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scene: DynamicScene,
    pub views: Vec<View>,
    max_label: u16,
}

impl Dataset {
    pub fn new(scene: DynamicScene, views: Vec<View>) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::Validation("dataset has no views".into()));
        }
        for (v, view) in views.iter().enumerate() {
            view.camera
                .validate(Some(scene.timestamp_count()))
                .map_err(|e| Error::Validation(format!("view {v}: {e}")))?;
            let (c, m) = (&view.camera, &view.mask);
            if c.width != m.width || c.height != m.height {
                return Err(Error::Validation(format!(
                    "view {v}: mask {}x{} does not match camera {}x{}",
                    m.width, m.height, c.width, c.height
                )));
            }
            if c.timestamp != m.timestamp {
                return Err(Error::Validation(format!(
                    "view {v}: mask timestamp {} differs from camera timestamp {}",
                    m.timestamp, c.timestamp
                )));
            }
        }
        let max_label = views.iter().map(|v| v.mask.max_label()).max().unwrap_or(0);
        Ok(Self {
            scene,
            views,
            max_label,
        })
    }

    /// `K`: the largest instance id over the whole mask set.
    pub fn max_label(&self) -> u16 {
        self.max_label
    }

    pub fn view_refs(&self) -> Vec<&View> {
        self.views.iter().collect()
    }

    pub fn target(&self, k0: u16) -> Result<TargetSelection> {
        TargetSelection::new(k0, self.views.iter().map(|v| &v.mask))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit_gaussian() -> GaussianFrameParams {
        GaussianFrameParams {
            mean: [0.0, 0.0, 0.0],
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale: [1.0, 1.0, 1.0],
            opacity: 0.5,
            color: [0.5, 0.5, 0.5],
        }
    }

    #[test]
    fn rejects_bad_opacity_with_location() {
        let mut frame = vec![unit_gaussian(), unit_gaussian()];
        frame[1].opacity = 1.2;
        let err = DynamicScene::constant(frame, 3).unwrap_err();
        match err {
            Error::InvalidGaussian { index, timestamp, .. } => assert_eq!((index, timestamp), (1, 0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_each_field_corruption() {
        let corruptions: Vec<fn(&mut GaussianFrameParams)> = vec![
            |g| g.mean[1] = f32::NAN,
            |g| g.rotation = [1.0, 0.1, 0.0, 0.0],
            |g| g.scale[2] = 0.0,
            |g| g.scale[0] = -1.0,
            |g| g.opacity = -0.01,
            |g| g.color[0] = 1.5,
            |g| g.color[2] = f32::INFINITY,
        ];
        for corrupt in corruptions {
            let mut params = vec![unit_gaussian(); 6];
            corrupt(&mut params[4]);
            match DynamicScene::new(2, 3, params).unwrap_err() {
                Error::InvalidGaussian { index, timestamp, .. } => assert_eq!((index, timestamp), (0, 2)),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn camera_validation() {
        let mut cam = CameraView {
            fx: 10.0,
            fy: 10.0,
            cx: 5.0,
            cy: 5.0,
            width: 10,
            height: 10,
            world_to_camera: [
                1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0,
            ],
            timestamp: 2,
        };
        assert!(cam.validate(Some(3)).is_ok());
        assert!(cam.validate(Some(2)).is_err());
        cam.world_to_camera[0] = 1.1;
        assert!(cam.validate(None).is_err());
    }

    #[test]
    fn target_must_appear() {
        let m = InstanceMask::new(2, 1, vec![0, 3], 0).unwrap();
        assert!(TargetSelection::new(3, [&m]).is_ok());
        assert!(TargetSelection::new(2, [&m]).is_err());
        assert!(TargetSelection::new(0, [&m]).is_err());
    }
}
