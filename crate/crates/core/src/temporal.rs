//! Temporal segments: contiguous timestamp ranges sharing one mask.
//!
//! Every distinct view timestamp starts as its own segment. Each outer
//! iteration refines every segment's mask with one tracing sweep over that
//! segment's views, then merges neighbors whose masks overlap by more than
//! `tau` (IoU over Gaussian index sets).

use crate::igit::{igit_sweep, IterationControl, SegmentMask};
use crate::rasterizer::TraceConfig;
use crate::scene_model::{DynamicScene, TargetSelection, View};
use crate::{Error, Result};

pub const DEFAULT_TAU: f64 = 0.5;

/// Partition of `[0, timestamp_count)` into segments.
///
/// Segment `s` covers `starts[s]..starts[s + 1]` (the last one runs to
/// `timestamp_count`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemporalSegments {
    pub timestamp_count: usize,
    pub starts: Vec<u32>,
    pub masks: Vec<SegmentMask>,
}

impl TemporalSegments {
    /// Single segment covering every timestamp.
    pub fn single(timestamp_count: usize, mask: SegmentMask) -> Self {
        Self {
            timestamp_count,
            starts: vec![0],
            masks: vec![mask],
        }
    }

    /// One segment per distinct timestamp in `views`, all masks full. The
    /// first segment is stretched to start at 0 so the cover is complete.
    pub fn per_timestamp(views: &[&View], timestamp_count: usize, gaussian_count: usize) -> Self {
        let mut starts: Vec<u32> = views.iter().map(|v| v.timestamp()).collect();
        starts.sort_unstable();
        starts.dedup();
        if starts.is_empty() {
            starts.push(0);
        }
        starts[0] = 0;
        let masks = vec![SegmentMask::full(gaussian_count); starts.len()];
        Self {
            timestamp_count,
            starts,
            masks,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    /// Half-open timestamp range of segment `s`.
    pub fn range(&self, s: usize) -> std::ops::Range<u32> {
        let end = self.starts.get(s + 1).copied().unwrap_or(self.timestamp_count as u32);
        self.starts[s]..end
    }

    /// Segment containing timestamp `t`.
    pub fn segment_of(&self, t: u32) -> Result<usize> {
        if t as usize >= self.timestamp_count {
            return Err(Error::Validation(format!(
                "timestamp {t} outside [0, {})",
                self.timestamp_count
            )));
        }
        Ok(self.starts.partition_point(|&s| s <= t) - 1)
    }

    pub fn mask_at(&self, t: u32) -> Result<&SegmentMask> {
        Ok(&self.masks[self.segment_of(t)?])
    }

    pub fn views_of<'a>(&self, s: usize, views: &[&'a View]) -> Vec<&'a View> {
        let r = self.range(s);
        views.iter().copied().filter(|v| r.contains(&v.timestamp())).collect()
    }

    pub fn validate(&self, gaussian_count: usize) -> Result<()> {
        let ok = !self.starts.is_empty()
            && self.starts[0] == 0
            && self.starts.windows(2).all(|w| w[0] < w[1])
            && (*self.starts.last().unwrap() as usize) < self.timestamp_count.max(1)
            && self.masks.len() == self.starts.len()
            && self.masks.iter().all(|m| m.len() == gaussian_count);
        if ok {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "segments {:?} do not partition [0, {}) with {} masks of {gaussian_count}",
                self.starts,
                self.timestamp_count,
                self.masks.len()
            )))
        }
    }
}

/// `|a ∩ b| / |a ∪ b|`, 1 when both are empty.
pub fn segment_iou(a: &SegmentMask, b: &SegmentMask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.member.iter().zip(&b.member) {
        inter += usize::from(x && y);
        union += usize::from(x || y);
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Greedy left-to-right merge of neighbors with IoU above `tau`.
///
/// Each pair is compared on the masks as they entered the pass, so a chain
/// of merges is decided by consecutive original masks. A merged segment
/// carries the union of its members' masks.
pub fn merge_pass(segs: &TemporalSegments, tau: f64) -> TemporalSegments {
    let mut starts = vec![segs.starts[0]];
    let mut masks = vec![segs.masks[0].clone()];
    for s in 1..segs.len() {
        if segment_iou(&segs.masks[s - 1], &segs.masks[s]) > tau {
            let last = masks.last_mut().unwrap();
            *last = last.union(&segs.masks[s]);
        } else {
            starts.push(segs.starts[s]);
            masks.push(segs.masks[s].clone());
        }
    }
    TemporalSegments {
        timestamp_count: segs.timestamp_count,
        starts,
        masks,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalOutcome {
    pub segments: TemporalSegments,
    pub iterations: usize,
    pub converged: bool,
    /// Segment count after every outer iteration.
    pub segment_history: Vec<usize>,
}

pub(crate) fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Validation(format!("tau {tau} outside (0,1)")))
    }
}

/// Alternates one sweep per segment with one merge pass, from one segment
/// per timestamp.
pub fn temporal_igit_run(
    scene: &DynamicScene,
    views: &[&View],
    target: TargetSelection,
    tau: f64,
    control: IterationControl,
    base: &TraceConfig,
) -> Result<TemporalOutcome> {
    let initial = TemporalSegments::per_timestamp(views, scene.timestamp_count(), scene.gaussian_count());
    temporal_igit_run_from(scene, views, target, initial, tau, control, base)
}

/// [`temporal_igit_run`] from a caller-supplied partition. Full masks in
/// `initial` mean "trace everything" on the first sweep.
pub fn temporal_igit_run_from(
    scene: &DynamicScene,
    views: &[&View],
    target: TargetSelection,
    initial: TemporalSegments,
    tau: f64,
    control: IterationControl,
    base: &TraceConfig,
) -> Result<TemporalOutcome> {
    control.validate()?;
    check_tau(tau)?;
    if views.is_empty() {
        return Err(Error::Validation("no views to segment".into()));
    }
    initial.validate(scene.gaussian_count())?;
    let n = scene.gaussian_count();
    let mut segs = initial;
    let mut iterations = 0;
    let mut converged = false;
    let mut segment_history = Vec::new();
    while iterations < control.max_iters {
        let mut masks = Vec::with_capacity(segs.len());
        for s in 0..segs.len() {
            let seg_views = segs.views_of(s, views);
            let mask = if seg_views.is_empty() {
                // nothing observes this range; keep the current mask
                segs.masks[s].clone()
            } else {
                let prev = &segs.masks[s];
                let subset = (prev.count() < n).then_some(prev);
                igit_sweep(scene, &seg_views, target, subset, base)?
            };
            masks.push(mask);
        }
        let swept = TemporalSegments { masks, ..segs.clone() };
        let merged = merge_pass(&swept, tau);
        iterations += 1;
        segment_history.push(merged.len());
        converged = merged == segs;
        segs = merged;
        if converged && control.stop_at_convergence {
            break;
        }
    }
    Ok(TemporalOutcome {
        segments: segs,
        iterations,
        converged,
        segment_history,
    })
}
