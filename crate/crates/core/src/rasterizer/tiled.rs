use rayon::prelude::*;

use super::{RenderOutput, TraceConfig, WeightMatrix};
use crate::projection::{depth_sort, project, Sym2};
use crate::scene_model::{CameraView, DynamicScene, InstanceMask};

pub(crate) const TILE: usize = 16;

/// A projected Gaussian that passed the per-Gaussian filters.
struct Splat {
    index: u32,
    mean: [f64; 2],
    conic: Sym2,
    radius2: f64,
    opacity: f64,
    /// Contributions need `g > g_floor`; `-inf` without range control.
    g_floor: f64,
    color: [f32; 3],
}

struct Frame {
    splats: Vec<Splat>,
    tiles: Vec<Vec<u32>>,
    tiles_x: usize,
    width: usize,
    height: usize,
}

struct TileRect {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Frame {
    fn build(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Frame {
        let frame = scene.frame(cam.timestamp as usize);
        let projected: Vec<_> = frame
            .iter()
            .enumerate()
            .filter(|(i, _)| cfg.subset_mask.is_none_or(|s| s[*i]))
            .filter(|(i, _)| cfg.range_thresholds.is_none_or(|r| r[*i] > 0.0))
            .filter_map(|(i, g)| project(g, cam, i))
            .collect();
        let splats: Vec<Splat> = depth_sort(projected)
            .into_iter()
            .map(|p| {
                let i = p.source_index;
                let g = &frame[i];
                Splat {
                    index: i as u32,
                    mean: p.mean2d,
                    conic: p.conic,
                    radius2: p.footprint_radius * p.footprint_radius,
                    opacity: g.opacity as f64,
                    g_floor: cfg.range_thresholds.map_or(f64::NEG_INFINITY, |r| 1.0 - r[i] as f64),
                    color: g.color,
                }
            })
            .collect();

        let width = cam.width as usize;
        let height = cam.height as usize;
        let tiles_x = width.div_ceil(TILE);
        let tiles_y = height.div_ceil(TILE);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (si, s) in splats.iter().enumerate() {
            let r = s.radius2.sqrt();
            // pixel x is sampled at x + 0.5
            let lo = |m: f64| (m - r - 0.5).ceil().max(0.0);
            let hi = |m: f64, n: usize| (m + r - 0.5).floor().min(n as f64 - 1.0);
            let (px0, px1) = (lo(s.mean[0]), hi(s.mean[0], width));
            let (py0, py1) = (lo(s.mean[1]), hi(s.mean[1], height));
            if px0 > px1 || py0 > py1 {
                continue;
            }
            let (tx0, tx1) = (px0 as usize / TILE, px1 as usize / TILE);
            let (ty0, ty1) = (py0 as usize / TILE, py1 as usize / TILE);
            for ty in ty0..=ty1 {
                for tx in tx0..=tx1 {
                    tiles[ty * tiles_x + tx].push(si as u32);
                }
            }
        }
        Frame {
            splats,
            tiles,
            tiles_x,
            width,
            height,
        }
    }

    fn rect(&self, tile: usize) -> TileRect {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        TileRect {
            x0: tx * TILE,
            y0: ty * TILE,
            x1: ((tx + 1) * TILE).min(self.width),
            y1: ((ty + 1) * TILE).min(self.height),
        }
    }

    /// Walks one pixel front to back, calling `visit(list_position, weight)`
    /// for every contributing Gaussian. Returns the final transmittance.
    #[inline]
    fn composite(
        &self,
        list: &[u32],
        px: usize,
        py: usize,
        occlusion: bool,
        cfg: &TraceConfig,
        mut visit: impl FnMut(usize, f64),
    ) -> f64 {
        let x = px as f64 + 0.5;
        let y = py as f64 + 0.5;
        let mut t = 1.0f64;
        for (pos, &si) in list.iter().enumerate() {
            let s = &self.splats[si as usize];
            let dx = x - s.mean[0];
            let dy = y - s.mean[1];
            if dx * dx + dy * dy > s.radius2 {
                continue;
            }
            let g = (-0.5 * s.conic.quad(dx, dy)).exp();
            if g <= s.g_floor {
                continue;
            }
            let alpha = s.opacity * g;
            if alpha < cfg.alpha_cutoff {
                continue;
            }
            if occlusion {
                visit(pos, alpha * t);
                t *= 1.0 - alpha;
                if t < cfg.transmittance_floor {
                    break;
                }
            } else {
                visit(pos, alpha);
            }
        }
        t
    }
}

pub(crate) fn trace(
    scene: &DynamicScene,
    cam: &CameraView,
    mask: &InstanceMask,
    max_label: u16,
    cfg: &TraceConfig,
) -> WeightMatrix {
    let frame = Frame::build(scene, cam, cfg);
    let labels = &mask.labels;
    let partials: Vec<Vec<(u32, u16, f64)>> = (0..frame.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &frame.tiles[tile];
            if list.is_empty() {
                return Vec::new();
            }
            let rect = frame.rect(tile);
            let mut slots: Vec<u16> = Vec::new();
            for py in rect.y0..rect.y1 {
                for px in rect.x0..rect.x1 {
                    let l = labels[py * frame.width + px];
                    if !slots.contains(&l) {
                        slots.push(l);
                    }
                }
            }
            let ns = slots.len();
            let mut acc = vec![0.0f64; list.len() * ns];
            for py in rect.y0..rect.y1 {
                for px in rect.x0..rect.x1 {
                    let l = labels[py * frame.width + px];
                    let slot = slots.iter().position(|&s| s == l).unwrap();
                    frame.composite(list, px, py, cfg.use_occlusion, cfg, |pos, w| {
                        acc[pos * ns + slot] += w;
                    });
                }
            }
            let mut out = Vec::new();
            for (pos, &si) in list.iter().enumerate() {
                for (slot, &label) in slots.iter().enumerate() {
                    let v = acc[pos * ns + slot];
                    if v != 0.0 {
                        out.push((frame.splats[si as usize].index, label, v));
                    }
                }
            }
            out
        })
        .collect();

    let mut w = WeightMatrix::zeros(scene.gaussian_count(), max_label as usize + 1);
    for part in &partials {
        for &(i, label, v) in part {
            w.add_at(i as usize, label as usize, v);
        }
    }
    w
}

pub(crate) fn render(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> RenderOutput {
    let frame = Frame::build(scene, cam, cfg);
    let tiles: Vec<(Vec<[f32; 3]>, Vec<f32>)> = (0..frame.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &frame.tiles[tile];
            let rect = frame.rect(tile);
            let n = (rect.x1 - rect.x0) * (rect.y1 - rect.y0);
            let mut rgb = Vec::with_capacity(n);
            let mut alpha = Vec::with_capacity(n);
            for py in rect.y0..rect.y1 {
                for px in rect.x0..rect.x1 {
                    let mut c = [0.0f64; 3];
                    let t = frame.composite(list, px, py, true, cfg, |pos, w| {
                        let col = frame.splats[list[pos] as usize].color;
                        for k in 0..3 {
                            c[k] += col[k] as f64 * w;
                        }
                    });
                    rgb.push(c.map(|v| v as f32));
                    alpha.push((1.0 - t) as f32);
                }
            }
            (rgb, alpha)
        })
        .collect();

    let mut out = RenderOutput {
        width: cam.width,
        height: cam.height,
        rgb: vec![[0.0; 3]; frame.width * frame.height],
        alpha: vec![0.0; frame.width * frame.height],
    };
    for (tile, (rgb, alpha)) in tiles.into_iter().enumerate() {
        let rect = frame.rect(tile);
        let tw = rect.x1 - rect.x0;
        for py in rect.y0..rect.y1 {
            let src = (py - rect.y0) * tw;
            let dst = py * frame.width + rect.x0;
            out.rgb[dst..dst + tw].copy_from_slice(&rgb[src..src + tw]);
            out.alpha[dst..dst + tw].copy_from_slice(&alpha[src..src + tw]);
        }
    }
    out
}

pub(crate) fn dominant(scene: &DynamicScene, cam: &CameraView, cfg: &TraceConfig) -> Vec<Option<u32>> {
    let frame = Frame::build(scene, cam, cfg);
    let tiles: Vec<Vec<Option<u32>>> = (0..frame.tiles.len())
        .into_par_iter()
        .map(|tile| {
            let list = &frame.tiles[tile];
            let rect = frame.rect(tile);
            let mut out = Vec::with_capacity((rect.x1 - rect.x0) * (rect.y1 - rect.y0));
            for py in rect.y0..rect.y1 {
                for px in rect.x0..rect.x1 {
                    let mut best: Option<(usize, f64)> = None;
                    frame.composite(list, px, py, true, cfg, |pos, w| {
                        // strict comparison: the front-most wins ties
                        if best.is_none_or(|(_, bw)| w > bw) {
                            best = Some((pos, w));
                        }
                    });
                    out.push(best.map(|(pos, _)| frame.splats[list[pos] as usize].index));
                }
            }
            out
        })
        .collect();

    let mut out = vec![None; frame.width * frame.height];
    for (tile, vals) in tiles.into_iter().enumerate() {
        let rect = frame.rect(tile);
        let tw = rect.x1 - rect.x0;
        for py in rect.y0..rect.y1 {
            let src = (py - rect.y0) * tw;
            let dst = py * frame.width + rect.x0;
            out[dst..dst + tw].copy_from_slice(&vals[src..src + tw]);
        }
    }
    out
}
