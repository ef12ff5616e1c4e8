//! Rendering range control.
//!
//! Each extracted Gaussian gets a per-frame threshold `r` in `[0, 1]`; at that
//! frame only the central level set `{g > 1 - r}` of its screen-space kernel
//! is drawn, which holds exactly fraction `r` of the kernel's mass. `r` starts
//! at the Gaussian's target probability from occlusion-free tracing and is
//! repeatedly multiplied by the probability measured over the truncated
//! support, so Gaussians straddling the object boundary shrink toward the
//! part that sits on the object.

use std::io::{Read, Write};
use std::path::Path;

use crate::igit::{accumulate_segment, label_count, IterationControl};
use crate::rasterizer::{render_view, RenderOutput, TraceConfig};
use crate::scene_model::{CameraView, DynamicScene, TargetSelection, View};
use crate::temporal::TemporalSegments;
use crate::{Error, Result};

/// Probabilities at or above this count as exactly one, so in-object
/// Gaussians do not decay geometrically through rounding noise.
pub const P_SNAP: f64 = 0.999;
/// Early-stop tolerance on `max |Δr|`.
pub const DELTA_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_MAX_ITERS: usize = 20;

const MAGIC: &[u8; 4] = b"G4DR";

/// Sparse per-frame values keyed by Gaussian index, sorted by index.
///
/// Only Gaussians in the frame's segment mask have entries. Frames without
/// any view have no entries at all.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameValues {
    pub frames: Vec<Vec<(u32, f32)>>,
}

pub type RangeThresholds = FrameValues;
pub type FrameProbabilities = FrameValues;

impl FrameValues {
    pub fn timestamp_count(&self) -> usize {
        self.frames.len()
    }

    pub fn entry_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn get(&self, i: u32, t: usize) -> Option<f32> {
        let f = self.frames.get(t)?;
        f.binary_search_by_key(&i, |e| e.0).ok().map(|k| f[k].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32, f32)> + '_ {
        self.frames
            .iter()
            .enumerate()
            .flat_map(|(t, f)| f.iter().map(move |&(i, r)| (i, t as u32, r)))
    }

    /// Dense length-`n` vector for frame `t`. Missing entries are 1, which
    /// leaves the kernel untruncated.
    pub fn dense_frame(&self, t: usize, n: usize) -> Vec<f32> {
        let mut out = vec![1.0; n];
        if let Some(f) = self.frames.get(t) {
            for &(i, r) in f {
                out[i as usize] = r;
            }
        }
        out
    }

    /// `max |self - other|` over shared keys; entries present in only one
    /// side count as infinitely different.
    pub fn max_abs_diff(&self, other: &FrameValues) -> f64 {
        if self.frames.len() != other.frames.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for (a, b) in self.frames.iter().zip(&other.frames) {
            if a.len() != b.len() {
                return f64::INFINITY;
            }
            for (x, y) in a.iter().zip(b) {
                if x.0 != y.0 {
                    return f64::INFINITY;
                }
                worst = worst.max((x.1 as f64 - y.1 as f64).abs());
            }
        }
        worst
    }

    /// Fraction of entries below `lo` or above `hi`.
    pub fn decided_fraction(&self, lo: f32, hi: f32) -> f64 {
        let total = self.entry_count();
        if total == 0 {
            return 1.0;
        }
        let decided = self.iter().filter(|&(_, _, r)| r < lo || r > hi).count();
        decided as f64 / total as f64
    }
}

fn views_at<'a>(views: &[&'a View], t: u32) -> Vec<&'a View> {
    views.iter().copied().filter(|v| v.timestamp() == t).collect()
}

/// Target probability per in-mask Gaussian at every frame, tracing without
/// occlusion and with optional truncation.
fn frame_probabilities(
    scene: &DynamicScene,
    views: &[&View],
    segments: &TemporalSegments,
    target: TargetSelection,
    r: Option<&RangeThresholds>,
    base: &TraceConfig,
) -> Result<FrameProbabilities> {
    let n = scene.gaussian_count();
    let k0 = target.id();
    let cols = label_count(views, k0);
    let mut frames = Vec::with_capacity(scene.timestamp_count());
    for t in 0..scene.timestamp_count() {
        let at_t = views_at(views, t as u32);
        if at_t.is_empty() {
            frames.push(Vec::new());
            continue;
        }
        let mask = segments.mask_at(t as u32)?;
        let dense_r = r.map(|r| r.dense_frame(t, n));
        let cfg = TraceConfig {
            subset_mask: Some(&mask.member),
            use_occlusion: false,
            range_thresholds: dense_r.as_deref(),
            ..*base
        };
        let w = accumulate_segment(scene, &at_t, cols, &cfg)?;
        let frame = mask
            .indices()
            .map(|i| {
                let row = w.row(i);
                let sum: f64 = row.iter().sum();
                let p = if sum > 0.0 { row[k0 as usize] / sum } else { 0.0 };
                let p = if p >= P_SNAP { 1.0 } else { p };
                (i as u32, p as f32)
            })
            .collect();
        frames.push(frame);
    }
    Ok(FrameValues { frames })
}

/// Initial thresholds: the untruncated target probability.
pub fn rrc_init(
    scene: &DynamicScene,
    views: &[&View],
    segments: &TemporalSegments,
    target: TargetSelection,
    base: &TraceConfig,
) -> Result<RangeThresholds> {
    segments.validate(scene.gaussian_count())?;
    frame_probabilities(scene, views, segments, target, None, base)
}

/// One refinement sweep: `r ← r · p` with `p` measured under truncation `r`.
/// Every frame reads the previous `r`.
pub fn rrc_step(
    scene: &DynamicScene,
    views: &[&View],
    segments: &TemporalSegments,
    r: &RangeThresholds,
    target: TargetSelection,
    base: &TraceConfig,
) -> Result<(RangeThresholds, FrameProbabilities)> {
    let p = frame_probabilities(scene, views, segments, target, Some(r), base)?;
    let mut next = r.clone();
    for (rf, pf) in next.frames.iter_mut().zip(&p.frames) {
        if rf.len() != pf.len() {
            return Err(Error::Validation(
                "range thresholds do not match the segment masks".into(),
            ));
        }
        for (re, pe) in rf.iter_mut().zip(pf) {
            re.1 *= pe.1;
        }
    }
    Ok((next, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrcOutcome {
    pub thresholds: RangeThresholds,
    /// Refinement sweeps performed after initialization.
    pub steps: usize,
    /// `max |Δr|` after every sweep.
    pub deltas: Vec<f64>,
}

/// Initialization followed by up to `control.max_iters` sweeps.
pub fn rrc_run(
    scene: &DynamicScene,
    views: &[&View],
    segments: &TemporalSegments,
    target: TargetSelection,
    control: IterationControl,
    base: &TraceConfig,
) -> Result<RrcOutcome> {
    control.validate()?;
    let mut r = rrc_init(scene, views, segments, target, base)?;
    let mut deltas = Vec::new();
    for _ in 0..control.max_iters {
        let (next, _) = rrc_step(scene, views, segments, &r, target, base)?;
        let delta = next.max_abs_diff(&r);
        deltas.push(delta);
        r = next;
        if control.stop_at_convergence && delta < DELTA_TOLERANCE {
            break;
        }
    }
    Ok(RrcOutcome {
        thresholds: r,
        steps: deltas.len(),
        deltas,
    })
}

/// Renders the segmented object at `cam`'s timestamp with truncation `r`
/// (`None` draws full kernels).
pub fn render_segmented(
    scene: &DynamicScene,
    cam: &CameraView,
    segments: &TemporalSegments,
    r: Option<&RangeThresholds>,
    base: &TraceConfig,
) -> Result<RenderOutput> {
    let mask = segments.mask_at(cam.timestamp)?;
    let dense_r = r.map(|r| r.dense_frame(cam.timestamp as usize, scene.gaussian_count()));
    let cfg = TraceConfig {
        subset_mask: Some(&mask.member),
        use_occlusion: true,
        range_thresholds: dense_r.as_deref(),
        ..*base
    };
    render_view(scene, cam, &cfg)
}

/// Writes `G4DR`, a u32 entry count and `(i, t, r)` triples, little-endian,
/// ordered by `t` then `i`.
pub fn save_ranges(r: &RangeThresholds, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 12 * r.entry_count());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(r.entry_count() as u32).to_le_bytes());
    for (i, t, v) in r.iter() {
        buf.extend_from_slice(&i.to_le_bytes());
        buf.extend_from_slice(&t.to_le_bytes());
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_ranges(path: &Path, timestamp_count: usize) -> Result<RangeThresholds> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format(format!("{}: not a G4DR file", path.display())));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let count = word(4) as usize;
    if bytes.len() != 8 + 12 * count {
        return Err(Error::Format(format!(
            "{}: {} entries need {} bytes, found {}",
            path.display(),
            count,
            8 + 12 * count,
            bytes.len()
        )));
    }
    let mut frames = vec![Vec::new(); timestamp_count];
    for e in 0..count {
        let at = 8 + 12 * e;
        let (i, t) = (word(at), word(at + 4) as usize);
        let v = f32::from_bits(word(at + 8));
        if t >= timestamp_count {
            return Err(Error::Format(format!("entry {e}: timestamp {t} out of range")));
        }
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Format(format!("entry {e}: threshold {v} outside [0,1]")));
        }
        let frame: &mut Vec<(u32, f32)> = &mut frames[t];
        if frame.last().is_some_and(|&(last, _)| last >= i) {
            return Err(Error::Format(format!("entry {e}: indices not increasing")));
        }
        frame.push((i, v));
    }
    Ok(FrameValues { frames })
}
