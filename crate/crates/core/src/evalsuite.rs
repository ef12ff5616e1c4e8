//! Binary mask metrics against ground truth.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// What `acc` measures.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyMode {
    /// Agreement over every pixel.
    #[default]
    AllPixels,
    /// Fraction of ground-truth foreground pixels that are predicted.
    Foreground,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub timestamp: u32,
    pub iou: f64,
    pub acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_frame: Vec<FrameMetrics>,
    pub miou: f64,
    pub macc: f64,
}

fn same_len(pred: &[bool], gt: &[bool]) -> Result<()> {
    if pred.len() == gt.len() {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "prediction has {} pixels, ground truth {}",
            pred.len(),
            gt.len()
        )))
    }
}

/// `|pred ∧ gt| / |pred ∨ gt|`, 1 when both are empty.
pub fn frame_iou(pred: &[bool], gt: &[bool]) -> Result<f64> {
    same_len(pred, gt)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        inter += usize::from(p && g);
        union += usize::from(p || g);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn frame_acc(pred: &[bool], gt: &[bool]) -> Result<f64> {
    frame_acc_with(pred, gt, AccuracyMode::AllPixels)
}

/// Foreground accuracy is 1 when the ground truth has no foreground.
pub fn frame_acc_with(pred: &[bool], gt: &[bool], mode: AccuracyMode) -> Result<f64> {
    same_len(pred, gt)?;
    if pred.is_empty() {
        return Ok(1.0);
    }
    Ok(match mode {
        AccuracyMode::AllPixels => pred.iter().zip(gt).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64,
        AccuracyMode::Foreground => {
            let fg = gt.iter().filter(|&&g| g).count();
            if fg == 0 {
                1.0
            } else {
                pred.iter().zip(gt).filter(|(&p, &g)| p && g).count() as f64 / fg as f64
            }
        }
    })
}

/// Scores every ground-truth frame. The key sets must match exactly.
pub fn evaluate_run(
    pred: &BTreeMap<u32, Vec<bool>>,
    gt: &BTreeMap<u32, Vec<bool>>,
    mode: AccuracyMode,
) -> Result<MetricsReport> {
    let mut missing: Vec<u32> = gt.keys().filter(|t| !pred.contains_key(t)).copied().collect();
    missing.extend(pred.keys().filter(|t| !gt.contains_key(t)));
    missing.sort_unstable();
    if !missing.is_empty() {
        return Err(Error::MissingFrames(missing));
    }
    let mut per_frame = Vec::with_capacity(gt.len());
    for (&t, g) in gt {
        let p = &pred[&t];
        let iou = frame_iou(p, g).map_err(|e| Error::Validation(format!("frame {t}: {e}")))?;
        let acc = frame_acc_with(p, g, mode)?;
        per_frame.push(FrameMetrics { timestamp: t, iou, acc });
    }
    let count = per_frame.len().max(1) as f64;
    let miou = per_frame.iter().map(|f| f.iou).sum::<f64>() / count;
    let macc = per_frame.iter().map(|f| f.acc).sum::<f64>() / count;
    Ok(MetricsReport { per_frame, miou, macc })
}

impl MetricsReport {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["timestamp", "iou", "acc"])?;
        for f in &self.per_frame {
            w.write_record([f.timestamp.to_string(), f.iou.to_string(), f.acc.to_string()])?;
        }
        w.write_record(["mean".to_string(), self.miou.to_string(), self.macc.to_string()])?;
        let bytes = w.into_inner().map_err(|e| Error::Format(format!("csv flush: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["timestamp", "iou", "acc"] {
            return Err(Error::Format(format!("unexpected csv header {header:?}")));
        }
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::Format(format!("bad number {s:?}"))) };
        let mut per_frame = Vec::new();
        let mut means = None;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Format(format!("row {rec:?} needs three fields")));
            }
            if &rec[0] == "mean" {
                means = Some((num(&rec[1])?, num(&rec[2])?));
            } else {
                let timestamp = rec[0]
                    .parse()
                    .map_err(|_| Error::Format(format!("bad timestamp {:?}", &rec[0])))?;
                per_frame.push(FrameMetrics {
                    timestamp,
                    iou: num(&rec[1])?,
                    acc: num(&rec[2])?,
                });
            }
        }
        let (miou, macc) = means.ok_or_else(|| Error::Format("csv has no mean row".into()))?;
        Ok(Self { per_frame, miou, macc })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()?).map_err(|e| Error::io(path, e))
    }
}
