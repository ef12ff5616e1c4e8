//! Synthetic dynamic scenes with known Gaussian-to-instance assignments.
//!
//! Every scenario is built from volumetric balls of small Gaussians in
//! front of an opaque wall of flat Gaussians, seen by pinhole cameras at the
//! origin looking down `+z` with `y` pointing down. Pixel ground truth is the
//! instance of the Gaussian with the largest single compositing contribution.
//!
//! * `static_two_objects`: two balls (ids 1 and 2) drifting slightly.
//! * `occluder`: one ball in front of a wall with a hole cut to the ball's
//!   silhouette. Large background Gaussians sit behind the hole and are seen
//!   only through the ball; the wall hides the rest of them.
//! * `boundary_stress`: a ball seen through a window in a wall in front of
//!   it, with oversized object Gaussians straddling the window edge.
//! * `identity_flip`: a core ball (id 1) and a neighboring group that is id 2
//!   for the first half of the frames and id 1 afterwards.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::projection::project;
use crate::rasterizer::{dominant_view, TraceConfig};
use crate::scene_model::{
    save_cameras, save_scene, write_mask, CameraView, Dataset, DynamicScene, GaussianFrameParams, InstanceMask, View,
    BACKGROUND,
};
use crate::{Error, Result};

/// Instance id of the object every scenario is built around.
pub const TARGET_ID: u16 = 1;

const OBJECT_DEPTH: f32 = 4.0;
const WALL_DEPTH: f32 = 5.0;
/// Optical depth through the center of a ball; sets `σ` from the count.
const BALL_OPTICAL_DEPTH: f32 = 5.4;
const BALL_OPACITY: f32 = 0.7;
const WALL_OPACITY: f32 = 0.99;
/// Camera baseline between neighboring views of one frame.
const VIEW_BASELINE: f64 = 0.12;
/// Camera drift per frame.
const FRAME_DRIFT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    StaticTwoObjects,
    Occluder,
    IdentityFlip,
    BoundaryStress,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Scenario::StaticTwoObjects,
        Scenario::Occluder,
        Scenario::IdentityFlip,
        Scenario::BoundaryStress,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::StaticTwoObjects => "static_two_objects",
            Scenario::Occluder => "occluder",
            Scenario::IdentityFlip => "identity_flip",
            Scenario::BoundaryStress => "boundary_stress",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub scenario: Scenario,
    /// Gaussians in the main object ball; other groups scale from it.
    pub n_per_object: usize,
    pub frames: usize,
    pub views_per_frame: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    /// Wall grid spacing in pixels.
    pub wall_spacing_px: f32,
    /// Randomly grow or shrink every instance region by one pixel in the
    /// input masks. Ground-truth masks stay clean.
    pub mask_noise: bool,
}

impl SynthSpec {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            n_per_object: 4000,
            frames: 8,
            views_per_frame: 1,
            width: 128,
            height: 128,
            seed: 7,
            wall_spacing_px: 1.5,
            mask_noise: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Validation(m));
        if self.n_per_object < 10 {
            return fail(format!("n_per_object {} below 10", self.n_per_object));
        }
        if self.frames == 0 || self.views_per_frame == 0 {
            return fail("frames and views_per_frame must be positive".into());
        }
        if self.width < 16 || self.height < 16 {
            return fail(format!("image {}x{} below 16x16", self.width, self.height));
        }
        if !(self.wall_spacing_px >= 0.5 && self.wall_spacing_px.is_finite()) {
            return fail(format!("wall spacing {} below 0.5 px", self.wall_spacing_px));
        }
        if self.scenario == Scenario::IdentityFlip && self.frames < 2 {
            return fail("identity_flip needs at least two frames".into());
        }
        Ok(())
    }

    fn focal(&self) -> f32 {
        self.width as f32
    }

    /// World units per pixel at depth `z`.
    fn world_per_px(&self, z: f32) -> f32 {
        z / self.focal()
    }
}

/// Ground-truth instance id of every Gaussian at every frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GtAssignment {
    pub gaussian_count: usize,
    pub timestamp_count: usize,
    // frame-major, like the scene
    labels: Vec<u16>,
}

#[derive(Serialize, Deserialize)]
struct GtFile {
    gaussian_count: usize,
    timestamp_count: usize,
    /// `[gaussian, first frame, end frame (exclusive), label]`.
    runs: Vec<[u32; 4]>,
}

impl GtAssignment {
    pub fn new(gaussian_count: usize, timestamp_count: usize, labels: Vec<u16>) -> Result<Self> {
        if labels.len() != gaussian_count * timestamp_count {
            return Err(Error::Validation(format!(
                "{} labels for {gaussian_count} gaussians over {timestamp_count} frames",
                labels.len()
            )));
        }
        Ok(Self {
            gaussian_count,
            timestamp_count,
            labels,
        })
    }

    pub fn label(&self, i: usize, t: usize) -> u16 {
        self.labels[t * self.gaussian_count + i]
    }

    pub fn frame(&self, t: usize) -> &[u16] {
        &self.labels[t * self.gaussian_count..(t + 1) * self.gaussian_count]
    }

    /// Gaussians with label `k` at frame `t`.
    pub fn members(&self, k: u16, t: usize) -> Vec<bool> {
        self.frame(t).iter().map(|&l| l == k).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut runs = Vec::new();
        for i in 0..self.gaussian_count {
            let mut start = 0;
            for t in 1..=self.timestamp_count {
                if t == self.timestamp_count || self.label(i, t) != self.label(i, start) {
                    runs.push([i as u32, start as u32, t as u32, self.label(i, start) as u32]);
                    start = t;
                }
            }
        }
        let file = GtFile {
            gaussian_count: self.gaussian_count,
            timestamp_count: self.timestamp_count,
            runs,
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: GtFile = serde_json::from_str(text)?;
        let (n, t) = (file.gaussian_count, file.timestamp_count);
        let mut labels = vec![None; n * t];
        for [i, start, end, label] in file.runs {
            let (i, start, end) = (i as usize, start as usize, end as usize);
            if i >= n || start >= end || end > t || label > u16::MAX as u32 {
                return Err(Error::Format(format!("bad run [{i}, {start}, {end}, {label}]")));
            }
            for f in start..end {
                labels[f * n + i] = Some(label as u16);
            }
        }
        let labels = labels
            .into_iter()
            .enumerate()
            .map(|(slot, l)| {
                l.ok_or_else(|| Error::Format(format!("no label for gaussian {} at frame {}", slot % n, slot / n)))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n, t, labels)
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub spec: SynthSpec,
    pub scene: DynamicScene,
    /// Frame-major: view `t * views_per_frame + v`.
    pub cameras: Vec<CameraView>,
    /// Input masks, possibly noisy.
    pub masks: Vec<InstanceMask>,
    pub gt: GtAssignment,
    pub gt_masks: Vec<InstanceMask>,
}

impl SynthOutput {
    /// Scene plus input masks as a segmentation dataset.
    pub fn dataset(&self) -> Result<Dataset> {
        let views = self
            .cameras
            .iter()
            .zip(&self.masks)
            .map(|(c, m)| View {
                camera: c.clone(),
                mask: m.clone(),
            })
            .collect();
        Dataset::new(self.scene.clone(), views)
    }
}

/// One Gaussian group with its own motion and label schedule.
struct Group {
    base: Vec<GaussianFrameParams>,
    /// World offset of the whole group at frame `t`.
    motion: Box<dyn Fn(usize) -> [f32; 3]>,
    label: Box<dyn Fn(usize) -> u16>,
}

fn unit_quaternion(rng: &mut ChaCha8Rng) -> [f32; 4] {
    loop {
        let q: [f32; 4] = std::array::from_fn(|_| rng.random_range(-1.0f32..1.0));
        let n = q.iter().map(|v| v * v).sum::<f32>().sqrt();
        if n > 0.1 && n <= 1.0 {
            let q = q.map(|v| v / n);
            // renormalize in f32 so validation always passes
            let n2 = q.iter().map(|v| v * v).sum::<f32>().sqrt();
            return q.map(|v| v / n2);
        }
    }
}

fn jitter_color(base: [f32; 3], rng: &mut ChaCha8Rng) -> [f32; 3] {
    base.map(|c| (c + rng.random_range(-0.05f32..0.05)).clamp(0.0, 1.0))
}

/// `n` Gaussians uniformly filling a ball. `σ` is chosen so the optical depth
/// through the center stays near [`BALL_OPTICAL_DEPTH`] for any `n`.
fn ball(center: [f32; 3], radius: f32, n: usize, color: [f32; 3], rng: &mut ChaCha8Rng) -> Vec<GaussianFrameParams> {
    let sigma = radius * (BALL_OPTICAL_DEPTH / (3.0 * n as f32 * BALL_OPACITY)).sqrt();
    (0..n)
        .map(|_| {
            let offset = loop {
                let p: [f32; 3] = std::array::from_fn(|_| rng.random_range(-1.0f32..1.0));
                if p.iter().map(|v| v * v).sum::<f32>() <= 1.0 {
                    break p;
                }
            };
            GaussianFrameParams {
                mean: std::array::from_fn(|a| center[a] + radius * offset[a]),
                rotation: unit_quaternion(rng),
                scale: std::array::from_fn(|_| sigma * rng.random_range(0.8f32..1.2)),
                opacity: rng.random_range(BALL_OPACITY - 0.1..BALL_OPACITY + 0.1),
                color: jitter_color(color, rng),
            }
        })
        .collect()
}

/// Flat square grid of Gaussians at depth `z` covering every camera's view.
/// `keep(x, y)` decides which grid points exist.
fn wall(spec: &SynthSpec, z: f32, rng: &mut ChaCha8Rng, keep: impl Fn(f32, f32) -> bool) -> Vec<GaussianFrameParams> {
    let spacing = spec.wall_spacing_px * spec.world_per_px(z);
    let sigma = 0.8 * spacing;
    let travel = VIEW_BASELINE as f32 * spec.views_per_frame as f32 + FRAME_DRIFT as f32 * spec.frames as f32;
    let half_x = z * spec.width as f32 / (2.0 * spec.focal()) + travel + 3.0 * sigma;
    let half_y = z * spec.height as f32 / (2.0 * spec.focal()) + 3.0 * sigma;
    let (nx, ny) = (
        (2.0 * half_x / spacing).ceil() as usize,
        (2.0 * half_y / spacing).ceil() as usize,
    );
    let mut out = Vec::new();
    for yi in 0..=ny {
        for xi in 0..=nx {
            let x = -half_x + xi as f32 * spacing;
            let y = -half_y + yi as f32 * spacing;
            if !keep(x, y) {
                continue;
            }
            out.push(GaussianFrameParams {
                mean: [
                    x + rng.random_range(-0.1f32..0.1) * spacing,
                    y + rng.random_range(-0.1f32..0.1) * spacing,
                    z + rng.random_range(-0.05f32..0.05) * spacing,
                ],
                rotation: [1.0, 0.0, 0.0, 0.0],
                scale: [sigma, sigma, 0.1 * sigma],
                opacity: WALL_OPACITY,
                color: jitter_color([0.45, 0.45, 0.5], rng),
            });
        }
    }
    out
}

fn still() -> Box<dyn Fn(usize) -> [f32; 3]> {
    Box::new(|_| [0.0; 3])
}

fn fixed_label(k: u16) -> Box<dyn Fn(usize) -> u16> {
    Box::new(move |_| k)
}

/// Horizontal sway with amplitude `amp` over the whole sequence.
fn sway(amp: f32, frames: usize) -> Box<dyn Fn(usize) -> [f32; 3]> {
    let period = frames.max(2) as f32;
    Box::new(move |t| [amp * (std::f32::consts::TAU * t as f32 / period).sin(), 0.0, 0.0])
}

pub fn cameras(spec: &SynthSpec) -> Vec<CameraView> {
    let mut out = Vec::with_capacity(spec.frames * spec.views_per_frame);
    for t in 0..spec.frames {
        for v in 0..spec.views_per_frame {
            let cx = VIEW_BASELINE * (v as f64 - (spec.views_per_frame - 1) as f64 / 2.0) + FRAME_DRIFT * t as f64;
            let mut w2c = [0.0; 16];
            w2c[0] = 1.0;
            w2c[5] = 1.0;
            w2c[10] = 1.0;
            w2c[15] = 1.0;
            w2c[3] = -cx;
            out.push(CameraView {
                fx: spec.focal() as f64,
                fy: spec.focal() as f64,
                cx: spec.width as f64 / 2.0,
                cy: spec.height as f64 / 2.0,
                width: spec.width,
                height: spec.height,
                world_to_camera: w2c,
                timestamp: t as u32,
            });
        }
    }
    out
}

fn groups(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Group>> {
    let n = spec.n_per_object;
    let frames = spec.frames;
    let red = [0.85, 0.25, 0.2];
    let blue = [0.2, 0.35, 0.85];
    Ok(match spec.scenario {
        Scenario::StaticTwoObjects => {
            let a = ball([-0.7, 0.0, OBJECT_DEPTH], 0.75, n, red, rng);
            let b = ball([0.9, 0.2, OBJECT_DEPTH + 0.2], 0.55, n * 2 / 3, blue, rng);
            let w = wall(spec, WALL_DEPTH, rng, |_, _| true);
            vec![
                Group {
                    base: a,
                    motion: sway(0.05, frames),
                    label: fixed_label(TARGET_ID),
                },
                Group {
                    base: b,
                    motion: sway(-0.04, frames),
                    label: fixed_label(2),
                },
                Group {
                    base: w,
                    motion: still(),
                    label: fixed_label(BACKGROUND),
                },
            ]
        }
        Scenario::IdentityFlip => {
            let core_r = 0.6;
            // the flip group holds 1.5x the core's Gaussians at equal density
            let flip_r = core_r * 1.5f32.cbrt();
            let core = ball([-0.45, 0.0, OBJECT_DEPTH], core_r, n, red, rng);
            let flip = ball(
                [-0.45 + core_r + flip_r * 0.95, 0.05, OBJECT_DEPTH + 0.1],
                flip_r,
                n * 3 / 2,
                blue,
                rng,
            );
            let w = wall(spec, WALL_DEPTH, rng, |_, _| true);
            let half = frames / 2;
            vec![
                Group {
                    base: core,
                    motion: sway(0.04, frames),
                    label: fixed_label(TARGET_ID),
                },
                Group {
                    base: flip,
                    motion: sway(0.04, frames),
                    label: Box::new(move |t| if t < half { 2 } else { TARGET_ID }),
                },
                Group {
                    base: w,
                    motion: still(),
                    label: fixed_label(BACKGROUND),
                },
            ]
        }
        Scenario::Occluder => occluder_groups(spec, rng)?,
        Scenario::BoundaryStress => {
            let radius = 0.75;
            let object = ball([0.0, 0.0, OBJECT_DEPTH], radius, n, red, rng);
            let front_z = 3.0f32;
            // window radius at the wall, 80% of the ball's silhouette
            let window = 0.8 * radius * front_z / OBJECT_DEPTH;
            let front = wall(spec, front_z, rng, move |x, y| x * x + y * y > window * window);
            let straddle_z = 3.15f32;
            let ring = window * straddle_z / front_z;
            let count = (n / 250).max(8);
            let straddlers: Vec<GaussianFrameParams> = (0..count)
                .map(|k| {
                    let angle = std::f32::consts::TAU * (k as f32 + rng.random_range(0.0f32..0.5)) / count as f32;
                    let rho = ring * rng.random_range(0.8f32..0.9);
                    let s = rng.random_range(0.15f32..0.25) * straddle_z / OBJECT_DEPTH;
                    GaussianFrameParams {
                        mean: [rho * angle.cos(), rho * angle.sin(), straddle_z],
                        rotation: [1.0, 0.0, 0.0, 0.0],
                        scale: [s, s, 0.2 * s],
                        opacity: rng.random_range(0.5f32..0.7),
                        color: jitter_color(red, rng),
                    }
                })
                .collect();
            let back = wall(spec, WALL_DEPTH, rng, |_, _| true);
            vec![
                Group {
                    base: object,
                    motion: still(),
                    label: fixed_label(TARGET_ID),
                },
                Group {
                    base: straddlers,
                    motion: still(),
                    label: fixed_label(TARGET_ID),
                },
                Group {
                    base: front,
                    motion: still(),
                    label: fixed_label(BACKGROUND),
                },
                Group {
                    base: back,
                    motion: still(),
                    label: fixed_label(BACKGROUND),
                },
            ]
        }
    })
}

/// Ball in front of a wall whose hole matches the ball's mask, with large
/// background Gaussians behind the hole.
fn occluder_groups(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Result<Vec<Group>> {
    let radius = 0.75f32;
    let object = ball(
        [0.0, 0.0, OBJECT_DEPTH],
        radius,
        spec.n_per_object,
        [0.85, 0.25, 0.2],
        rng,
    );
    let full_wall = wall(spec, WALL_DEPTH, rng, |_, _| true);

    // Measure where the ball stops dominating the wall in the first view.
    let cam = &cameras(spec)[0];
    let mut probe = object.clone();
    probe.extend_from_slice(&full_wall);
    let probe_scene = DynamicScene::constant(probe, 1)?;
    let dominant = dominant_view(&probe_scene, cam, &TraceConfig::default())?;
    let object_px = dominant
        .iter()
        .filter(|d| d.is_some_and(|i| (i as usize) < object.len()))
        .count();
    let mask_radius_px = (object_px as f32 / std::f32::consts::PI).sqrt();
    let wall_sigma_px = 0.8 * spec.wall_spacing_px;
    let hole_px = mask_radius_px - 0.25 * wall_sigma_px;
    let hole = hole_px * spec.world_per_px(WALL_DEPTH);

    let mut kept = Vec::with_capacity(full_wall.len());
    for g in full_wall {
        let p = project(&g, cam, 0);
        let inside = p.is_some_and(|p| {
            let dx = p.mean2d[0] - cam.cx;
            let dy = p.mean2d[1] - cam.cy;
            dx * dx + dy * dy < (hole_px * hole_px) as f64
        });
        if !inside {
            kept.push(g);
        }
    }

    let floater_z = 5.6f32;
    let silhouette = radius * floater_z / OBJECT_DEPTH;
    let s = 0.6 * silhouette;
    let offsets = [[0.0, 0.0], [0.35, 0.2], [-0.3, 0.25], [0.05, -0.35]];
    let floaters = offsets
        .iter()
        .map(|o| GaussianFrameParams {
            mean: [o[0] * hole, o[1] * hole, floater_z + rng.random_range(0.0f32..0.2)],
            rotation: [1.0, 0.0, 0.0, 0.0],
            scale: [s, s, 0.1 * s],
            opacity: 0.9,
            color: [0.2, 0.8, 0.3],
        })
        .collect();
    Ok(vec![
        Group {
            base: object,
            motion: still(),
            label: fixed_label(TARGET_ID),
        },
        Group {
            base: floaters,
            motion: still(),
            label: fixed_label(BACKGROUND),
        },
        Group {
            base: kept,
            motion: still(),
            label: fixed_label(BACKGROUND),
        },
    ])
}

/// Generates the scene, cameras, gt assignment and masks for `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let groups = groups(spec, &mut rng)?;
    let n: usize = groups.iter().map(|g| g.base.len()).sum();
    let mut params = Vec::with_capacity(n * spec.frames);
    let mut labels = Vec::with_capacity(n * spec.frames);
    for t in 0..spec.frames {
        for g in &groups {
            let d = (g.motion)(t);
            let k = (g.label)(t);
            params.extend(g.base.iter().map(|p| GaussianFrameParams {
                mean: std::array::from_fn(|a| p.mean[a] + d[a]),
                ..*p
            }));
            labels.extend(std::iter::repeat_n(k, g.base.len()));
        }
    }
    let scene = DynamicScene::new(n, spec.frames, params)?;
    let gt = GtAssignment::new(n, spec.frames, labels)?;
    let cams = cameras(spec);
    let gt_masks = perfect_masks_from_gt(&scene, &cams, &gt)?;
    let masks = if spec.mask_noise {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x6d61_736b);
        gt_masks.iter().map(|m| perturb_mask(m, &mut noise_rng)).collect()
    } else {
        gt_masks.clone()
    };
    Ok(SynthOutput {
        spec: spec.clone(),
        scene,
        cameras: cams,
        masks,
        gt,
        gt_masks,
    })
}

/// Labels every pixel with the gt instance of its dominant Gaussian.
pub fn perfect_masks_from_gt(
    scene: &DynamicScene,
    cameras: &[CameraView],
    gt: &GtAssignment,
) -> Result<Vec<InstanceMask>> {
    if (gt.gaussian_count, gt.timestamp_count) != (scene.gaussian_count(), scene.timestamp_count()) {
        return Err(Error::Validation("gt assignment does not match the scene".into()));
    }
    cameras
        .par_iter()
        .map(|cam| {
            let t = cam.timestamp as usize;
            let dominant = dominant_view(scene, cam, &TraceConfig::default())?;
            let labels = dominant
                .into_iter()
                .map(|d| d.map_or(BACKGROUND, |i| gt.label(i as usize, t)))
                .collect();
            InstanceMask::new(cam.width, cam.height, labels, cam.timestamp)
        })
        .collect()
}

/// Grows or shrinks every non-background region of `mask` by one pixel
/// (4-neighborhood), chosen at random per mask.
pub fn perturb_mask(mask: &InstanceMask, rng: &mut impl Rng) -> InstanceMask {
    let grow = rng.random_bool(0.5);
    let (w, h) = (mask.width as usize, mask.height as usize);
    let at = |x: usize, y: usize| mask.labels[y * w + x];
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            let here = at(x, y);
            let mut neighbors = Vec::with_capacity(4);
            if x > 0 {
                neighbors.push(at(x - 1, y));
            }
            if x + 1 < w {
                neighbors.push(at(x + 1, y));
            }
            if y > 0 {
                neighbors.push(at(x, y - 1));
            }
            if y + 1 < h {
                neighbors.push(at(x, y + 1));
            }
            let label = if grow {
                if here == BACKGROUND {
                    neighbors
                        .into_iter()
                        .filter(|&l| l != BACKGROUND)
                        .min()
                        .unwrap_or(BACKGROUND)
                } else {
                    here
                }
            } else if here != BACKGROUND && neighbors.iter().any(|&l| l != here) {
                BACKGROUND
            } else {
                here
            };
            out.labels[y * w + x] = label;
        }
    }
    out
}

/// Writes `scene.g4ds`, `cameras.json`, `masks/`, `gt_masks/`,
/// `gt_assignment.json` and `synth.json` under `dir`. Masks are named by
/// view index.
pub fn write_dataset(out: &SynthOutput, dir: &Path) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    mkdir(dir)?;
    mkdir(&dir.join("masks"))?;
    mkdir(&dir.join("gt_masks"))?;
    save_scene(&out.scene, &dir.join("scene.g4ds"))?;
    save_cameras(&out.cameras, &dir.join("cameras.json"))?;
    for (v, (m, g)) in out.masks.iter().zip(&out.gt_masks).enumerate() {
        write_mask(m, &dir.join("masks").join(mask_file_name(v)))?;
        write_mask(g, &dir.join("gt_masks").join(mask_file_name(v)))?;
    }
    let gt_path = dir.join("gt_assignment.json");
    std::fs::write(&gt_path, out.gt.to_json()?).map_err(|e| Error::io(&gt_path, e))?;
    let spec_path = dir.join("synth.json");
    let text = serde_json::to_string_pretty(&out.spec)?;
    std::fs::write(&spec_path, text).map_err(|e| Error::io(&spec_path, e))
}

/// File name of view `v`'s mask.
pub fn mask_file_name(v: usize) -> String {
    format!("{v:04}.pgm")
}
