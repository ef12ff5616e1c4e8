#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tibr4d::scene_model::{CameraView, DynamicScene, GaussianFrameParams, InstanceMask, View};
use tibr4d::synth::{generate, Scenario, SynthOutput, SynthSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Camera at the origin looking down +z.
pub fn camera(width: u32, height: u32, timestamp: u32) -> CameraView {
    let mut w2c = [0.0; 16];
    for d in [0, 5, 10, 15] {
        w2c[d] = 1.0;
    }
    CameraView {
        fx: width as f64,
        fy: width as f64,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
        world_to_camera: w2c,
        timestamp,
    }
}

pub fn unit_quaternion(rng: &mut impl Rng) -> [f32; 4] {
    loop {
        let q: [f32; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f32>().sqrt();
        if n > 0.1 {
            return q.map(|v| v / n);
        }
    }
}

/// Isotropic Gaussian at `mean` with world-space sigma `s`.
pub fn ball(mean: [f32; 3], s: f32, opacity: f32) -> GaussianFrameParams {
    GaussianFrameParams {
        mean,
        rotation: [1.0, 0.0, 0.0, 0.0],
        scale: [s; 3],
        opacity,
        color: [0.5, 0.5, 0.5],
    }
}

/// Random Gaussians in front of [`camera`], independently drawn per frame.
pub fn random_scene(rng: &mut impl Rng, n: usize, frames: usize) -> DynamicScene {
    let params = (0..n * frames)
        .map(|_| {
            let z = rng.random_range(2.0..6.0f32);
            GaussianFrameParams {
                mean: [rng.random_range(-0.6..0.6) * z, rng.random_range(-0.6..0.6) * z, z],
                rotation: unit_quaternion(rng),
                scale: std::array::from_fn(|_| rng.random_range(0.02..0.4)),
                opacity: rng.random_range(0.05..1.0),
                color: std::array::from_fn(|_| rng.random_range(0.0..1.0)),
            }
        })
        .collect();
    DynamicScene::new(n, frames, params).unwrap()
}

/// Blocky random instance mask with labels `0..=max_label`.
pub fn random_mask(rng: &mut impl Rng, w: u32, h: u32, max_label: u16, timestamp: u32) -> InstanceMask {
    let block = 8;
    let bw = w.div_ceil(block);
    let cells: Vec<u16> = (0..bw * h.div_ceil(block))
        .map(|_| rng.random_range(0..=max_label))
        .collect();
    let labels = (0..w * h)
        .map(|p| cells[((p / w) / block * bw + (p % w) / block) as usize])
        .collect();
    InstanceMask::new(w, h, labels, timestamp).unwrap()
}

pub fn views(cams: &[CameraView], masks: &[InstanceMask]) -> Vec<View> {
    cams.iter()
        .zip(masks)
        .map(|(c, m)| View {
            camera: c.clone(),
            mask: m.clone(),
        })
        .collect()
}

/// Relative disagreement, 0 when both are zero.
pub fn rel_diff(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// A synthetic scenario at reduced size for quick tests.
pub fn small(scenario: Scenario, n: usize, frames: usize, size: u32) -> SynthOutput {
    let mut spec = SynthSpec::new(scenario);
    spec.n_per_object = n;
    spec.frames = frames;
    spec.width = size;
    spec.height = size;
    generate(&spec).unwrap()
}
