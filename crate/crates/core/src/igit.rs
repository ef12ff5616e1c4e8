//! Iterative Gaussian instance tracing.
//!
//! One sweep traces every view of a segment, normalizes the summed weights
//! into per-Gaussian label probabilities and keeps the Gaussians whose argmax
//! is the target. The next sweep re-traces with only the kept Gaussians, so
//! Gaussians that were hidden behind removed ones become visible and can be
//! rejected in turn.

use std::cmp::Ordering;

use crate::rasterizer::{trace_view, TraceConfig, WeightMatrix};
use crate::scene_model::{DynamicScene, TargetSelection, View};
use crate::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 20;

/// Row-normalized weights; each row sums to one or is all zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ProbabilityMatrix {
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
}

/// Target membership of every Gaussian within one temporal segment.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SegmentMask {
    pub member: Vec<bool>,
}

impl SegmentMask {
    pub fn full(n: usize) -> Self {
        Self { member: vec![true; n] }
    }

    pub fn empty(n: usize) -> Self {
        Self { member: vec![false; n] }
    }

    pub fn len(&self) -> usize {
        self.member.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member.is_empty()
    }

    pub fn count(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.member.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i)
    }

    pub fn union(&self, other: &SegmentMask) -> SegmentMask {
        SegmentMask {
            member: self.member.iter().zip(&other.member).map(|(a, b)| *a || *b).collect(),
        }
    }
}

/// How many sweeps to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IterationControl {
    pub max_iters: usize,
    /// Stop as soon as the mask repeats. Turning this off runs exactly
    /// `max_iters` sweeps, which is what runtime measurements want.
    pub stop_at_convergence: bool,
}

impl IterationControl {
    pub fn new(max_iters: usize) -> Self {
        Self {
            max_iters,
            stop_at_convergence: true,
        }
    }

    pub fn fixed(max_iters: usize) -> Self {
        Self {
            max_iters,
            stop_at_convergence: false,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for IterationControl {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_ITERS)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IgitOutcome {
    pub mask: SegmentMask,
    /// Sweeps actually performed.
    pub iterations: usize,
    /// Whether the final sweep reproduced the previous mask.
    pub converged: bool,
}

/// Canonical view order: timestamp, then camera parameters, then mask
/// contents. Summing in this order makes the result independent of how the
/// caller ordered the views.
pub(crate) fn canonical_order<'a>(views: &[&'a View]) -> Vec<&'a View> {
    let key = |v: &View| {
        let c = &v.camera;
        let mut k = vec![c.fx.to_bits(), c.fy.to_bits(), c.cx.to_bits(), c.cy.to_bits()];
        k.extend(c.world_to_camera.iter().map(|x| x.to_bits()));
        k
    };
    let mut sorted = views.to_vec();
    sorted.sort_by(|a, b| {
        a.timestamp()
            .cmp(&b.timestamp())
            .then_with(|| key(a).cmp(&key(b)))
            .then_with(|| (a.camera.width, a.camera.height).cmp(&(b.camera.width, b.camera.height)))
            .then_with(|| a.mask.labels.cmp(&b.mask.labels))
    });
    sorted
}

/// Label columns needed for `views` and target `k0`.
pub(crate) fn label_count(views: &[&View], k0: u16) -> u16 {
    views.iter().map(|v| v.mask.max_label()).max().unwrap_or(0).max(k0)
}

/// Sum of per-view weight matrices with `max_label + 1` columns.
pub fn accumulate_segment(
    scene: &DynamicScene,
    views: &[&View],
    max_label: u16,
    cfg: &TraceConfig,
) -> Result<WeightMatrix> {
    if views.is_empty() {
        return Err(Error::Validation("segment has no views".into()));
    }
    let mut total = WeightMatrix::zeros(scene.gaussian_count(), max_label as usize + 1);
    for view in canonical_order(views) {
        let w = trace_view(scene, &view.camera, &view.mask, max_label, cfg)?;
        total.accumulate(&w)?;
    }
    Ok(total)
}

/// L1 row normalization; zero rows stay zero.
pub fn normalize(w: &WeightMatrix) -> ProbabilityMatrix {
    let cols = w.cols();
    let mut values = Vec::with_capacity(w.values().len());
    for i in 0..w.rows() {
        let row = w.row(i);
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            values.extend(row.iter().map(|v| v / sum));
        } else {
            values.extend(std::iter::repeat_n(0.0, cols));
        }
    }
    ProbabilityMatrix {
        rows: w.rows(),
        cols,
        values,
    }
}

/// Gaussians whose most probable label is `k0`. Ties go to the lowest column
/// and all-zero rows are never members.
pub fn extract(p: &ProbabilityMatrix, k0: u16) -> SegmentMask {
    let k0 = k0 as usize;
    let member = (0..p.rows())
        .map(|i| {
            let row = p.row(i);
            if k0 >= row.len() || row[k0] <= 0.0 {
                return false;
            }
            let best = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal).then(b.0.cmp(&a.0)))
                .map(|(k, _)| k);
            best == Some(k0)
        })
        .collect();
    SegmentMask { member }
}

/// One tracing sweep restricted to `subset` (`None` traces everything).
pub fn igit_sweep(
    scene: &DynamicScene,
    views: &[&View],
    target: TargetSelection,
    subset: Option<&SegmentMask>,
    base: &TraceConfig,
) -> Result<SegmentMask> {
    let k0 = target.id();
    let cfg = TraceConfig {
        subset_mask: subset.map(|s| s.member.as_slice()),
        ..*base
    };
    let w = accumulate_segment(scene, views, label_count(views, k0), &cfg)?;
    Ok(extract(&normalize(&w), k0))
}

/// Repeats [`igit_sweep`] from the full scene until the mask repeats.
pub fn igit_run(
    scene: &DynamicScene,
    views: &[&View],
    target: TargetSelection,
    control: IterationControl,
    base: &TraceConfig,
) -> Result<IgitOutcome> {
    igit_run_from(scene, views, target, None, control, base)
}

/// [`igit_run`] whose first sweep is restricted to `start`.
pub fn igit_run_from(
    scene: &DynamicScene,
    views: &[&View],
    target: TargetSelection,
    start: Option<&SegmentMask>,
    control: IterationControl,
    base: &TraceConfig,
) -> Result<IgitOutcome> {
    control.validate()?;
    let mut prev = start.cloned();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < control.max_iters {
        let next = igit_sweep(scene, views, target, prev.as_ref(), base)?;
        iterations += 1;
        converged = prev.as_ref() == Some(&next);
        prev = Some(next);
        if converged && control.stop_at_convergence {
            break;
        }
    }
    Ok(IgitOutcome {
        mask: prev.expect("at least one sweep ran"),
        iterations,
        converged,
    })
}
