//! Reference rasterizer: one thread, no tiling, every pixel walks the whole
//! depth-sorted list. Slow, but simple enough to check by eye.

use super::{check_camera, check_mask, RenderOutput, TraceConfig, WeightMatrix};
use crate::projection::{depth_sort, kernel_value, project, Projected2D};
use crate::scene_model::{CameraView, DynamicScene, InstanceMask};
use crate::Result;

fn sorted(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Vec<Projected2D> {
    let frame = scene.frame(cam.timestamp as usize);
    let mut all = Vec::new();
    for (i, g) in frame.iter().enumerate() {
        if let Some(s) = cfg.subset_mask {
            if !s[i] {
                continue;
            }
        }
        if let Some(r) = cfg.range_thresholds {
            if r[i] <= 0.0 {
                continue;
            }
        }
        if let Some(p) = project(g, cam, i) {
            all.push(p);
        }
    }
    depth_sort(all)
}

/// Opacity term of Gaussian `p` at pixel `(x, y)`, or `None` if filtered out.
fn alpha_at(scene: &DynamicScene, t: usize, p: &Projected2D, cfg: &TraceConfig, x: u32, y: u32) -> Option<f64> {
    let pixel = [x as f64 + 0.5, y as f64 + 0.5];
    let d = [pixel[0] - p.mean2d[0], pixel[1] - p.mean2d[1]];
    if (d[0] * d[0] + d[1] * d[1]).sqrt() > p.footprint_radius {
        return None;
    }
    let g = kernel_value(p, pixel);
    if let Some(r) = cfg.range_thresholds {
        if g <= 1.0 - r[p.source_index] as f64 {
            return None;
        }
    }
    let alpha = scene.get(p.source_index, t).opacity as f64 * g;
    (alpha >= cfg.alpha_cutoff).then_some(alpha)
}

/// One view's depth-sorted list together with what is needed to walk it.
struct Walker<'a> {
    scene: &'a DynamicScene,
    cfg: &'a TraceConfig<'a>,
    t_index: usize,
    list: Vec<Projected2D>,
}

impl<'a> Walker<'a> {
    fn new(scene: &'a DynamicScene, cam: &CameraView, cfg: &'a TraceConfig<'a>) -> Self {
        Self {
            scene,
            cfg,
            t_index: cam.timestamp as usize,
            list: sorted(scene, cam, cfg),
        }
    }

    /// Visits `(source_index, weight)` pairs at one pixel in compositing
    /// order and returns the remaining transmittance.
    fn walk(&self, occlusion: bool, x: u32, y: u32, mut visit: impl FnMut(usize, f64)) -> f64 {
        let mut transmittance = 1.0;
        for p in &self.list {
            let Some(alpha) = alpha_at(self.scene, self.t_index, p, self.cfg, x, y) else {
                continue;
            };
            if !occlusion {
                visit(p.source_index, alpha);
                continue;
            }
            visit(p.source_index, alpha * transmittance);
            transmittance *= 1.0 - alpha;
            if transmittance < self.cfg.transmittance_floor {
                break;
            }
        }
        transmittance
    }
}

pub fn oracle_trace_view(
    scene: &DynamicScene,
    cam: &CameraView,
    mask: &InstanceMask,
    max_label: u16,
    cfg: &TraceConfig,
) -> Result<WeightMatrix> {
    check_camera(scene, cam, cfg)?;
    check_mask(cam, mask, max_label)?;
    let walker = Walker::new(scene, cam, cfg);
    let mut w = WeightMatrix::zeros(scene.gaussian_count(), max_label as usize + 1);
    for y in 0..cam.height {
        for x in 0..cam.width {
            let label = mask.labels[(y * cam.width + x) as usize] as usize;
            walker.walk(cfg.use_occlusion, x, y, |i, v| w.add_at(i, label, v));
        }
    }
    Ok(w)
}

pub fn oracle_render_view(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Result<RenderOutput> {
    check_camera(scene, cam, cfg)?;
    let walker = Walker::new(scene, cam, cfg);
    let t_index = cam.timestamp as usize;
    let mut rgb = Vec::new();
    let mut alpha = Vec::new();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let mut c = [0.0f64; 3];
            let t = walker.walk(true, x, y, |i, v| {
                let col = scene.get(i, t_index).color;
                for k in 0..3 {
                    c[k] += v * col[k] as f64;
                }
            });
            rgb.push([c[0] as f32, c[1] as f32, c[2] as f32]);
            alpha.push((1.0 - t) as f32);
        }
    }
    Ok(RenderOutput {
        width: cam.width,
        height: cam.height,
        rgb,
        alpha,
    })
}

pub fn oracle_dominant_view(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Result<Vec<Option<u32>>> {
    check_camera(scene, cam, cfg)?;
    let walker = Walker::new(scene, cam, cfg);
    let mut out = Vec::new();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let mut best: Option<(usize, f64)> = None;
            walker.walk(true, x, y, |i, v| match best {
                Some((_, bv)) if bv >= v => {}
                _ => best = Some((i, v)),
            });
            out.push(best.map(|(i, _)| i as u32));
        }
    }
    Ok(out)
}
