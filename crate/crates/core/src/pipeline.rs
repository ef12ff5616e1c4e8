//! Stage orchestration and artifact I/O behind the command-line tool.
//!
//! [`run_pipeline`] works purely in memory; the `cmd_*` functions add file
//! loading and artifact emission around it.
//!
//! `segment` writes, under the output directory:
//!
//! ```text
//! segments.json          segment ranges and member indices
//! pointclouds/seg_S.ply  members of segment S at its first frame
//! ranges.g4dr            range thresholds (absent with disable_rrc)
//! masks/VVVV.pgm         rendered object mask per view (0 or the target id)
//! rgb/VVVV.ppm           rendered object color per view
//! manifest.json          run summary, deterministic
//! timings.json           per-stage wall-clock seconds and thread count
//! metrics.csv            only when ground-truth masks are configured
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::StageExt;
use crate::evalsuite::{evaluate_run, AccuracyMode, MetricsReport};
use crate::igit::{accumulate_segment, igit_run, label_count, normalize, IterationControl, SegmentMask};
use crate::rasterizer::{RenderOutput, TraceConfig};
use crate::rrc::{load_ranges, render_segmented, rrc_run, save_ranges, RangeThresholds, RrcOutcome};
use crate::scene_model::{
    load_cameras, load_mask, load_scene, save_pointcloud, write_mask, write_ppm, Dataset, InstanceMask,
    TargetSelection, View, BACKGROUND,
};
use crate::synth::{generate, mask_file_name, write_dataset, SynthSpec};
use crate::temporal::{check_tau, temporal_igit_run, TemporalSegments, DEFAULT_TAU};
use crate::{Error, Result};

/// Environment variable read for the default worker thread count.
pub const THREADS_ENV: &str = "TIBR4D_THREADS";

fn default_iters() -> usize {
    20
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

/// Everything a `segment` run needs, loadable from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub scene: PathBuf,
    pub cameras: PathBuf,
    /// Directory of per-view instance masks named `VVVV.pgm`.
    pub masks: PathBuf,
    /// Optional ground-truth masks, same naming, for `metrics.csv`.
    #[serde(default)]
    pub gt_masks: Option<PathBuf>,
    pub target: u16,
    #[serde(default = "default_iters")]
    pub igit_max_iters: usize,
    #[serde(default = "default_iters")]
    pub rrc_max_iters: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub disable_temporal: bool,
    #[serde(default)]
    pub disable_rrc: bool,
    /// Run exactly the configured iteration counts without early stopping.
    #[serde(default)]
    pub fixed_iterations: bool,
    pub output: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl PipelineConfig {
    /// Defaults for everything except the paths and the target.
    pub fn new(dataset_dir: &Path, target: u16, output: &Path) -> Self {
        Self {
            scene: dataset_dir.join("scene.g4ds"),
            cameras: dataset_dir.join("cameras.json"),
            masks: dataset_dir.join("masks"),
            gt_masks: None,
            target,
            igit_max_iters: default_iters(),
            rrc_max_iters: default_iters(),
            tau: DEFAULT_TAU,
            disable_temporal: false,
            disable_rrc: false,
            fixed_iterations: false,
            output: output.to_path_buf(),
            threads: None,
        }
    }

    /// Reads `.toml` or `.json`; relative paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
            Some("json") => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?,
            other => {
                return Err(Error::Config(format!(
                    "unsupported config extension {other:?}; use .toml or .json"
                )))
            }
        };
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.scene);
        resolve(&mut cfg.cameras);
        resolve(&mut cfg.masks);
        resolve(&mut cfg.output);
        if let Some(g) = cfg.gt_masks.as_mut() {
            resolve(g);
        }
        Ok(cfg)
    }

    pub fn params(&self) -> RunParams {
        RunParams {
            target: self.target,
            igit_max_iters: self.igit_max_iters,
            rrc_max_iters: self.rrc_max_iters,
            tau: self.tau,
            disable_temporal: self.disable_temporal,
            disable_rrc: self.disable_rrc,
            fixed_iterations: self.fixed_iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        for (what, p) in [
            ("scene", &self.scene),
            ("cameras", &self.cameras),
            ("masks", &self.masks),
        ] {
            if !p.exists() {
                return Err(Error::Config(format!("{what} path {} does not exist", p.display())));
            }
        }
        if let Some(g) = &self.gt_masks {
            if !g.exists() {
                return Err(Error::Config(format!("gt_masks path {} does not exist", g.display())));
            }
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Run-level hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    pub target: u16,
    pub igit_max_iters: usize,
    pub rrc_max_iters: usize,
    pub tau: f64,
    pub disable_temporal: bool,
    pub disable_rrc: bool,
    pub fixed_iterations: bool,
}

impl RunParams {
    pub fn new(target: u16) -> Self {
        Self {
            target,
            igit_max_iters: default_iters(),
            rrc_max_iters: default_iters(),
            tau: DEFAULT_TAU,
            disable_temporal: false,
            disable_rrc: false,
            fixed_iterations: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.igit_max_iters == 0 || self.rrc_max_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        check_tau(self.tau).map_err(|e| Error::Config(e.to_string()))
    }

    fn control(&self, max_iters: usize) -> IterationControl {
        if self.fixed_iterations {
            IterationControl::fixed(max_iters)
        } else {
            IterationControl::new(max_iters)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub load: f64,
    pub igit: f64,
    pub rrc: f64,
    pub render: f64,
    pub write: f64,
    pub total: f64,
    pub threads: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub segments: TemporalSegments,
    pub igit_iterations: usize,
    pub igit_converged: bool,
    pub segment_history: Vec<usize>,
    pub rrc: Option<RrcOutcome>,
    /// One per dataset view, in dataset order.
    pub renders: Vec<RenderOutput>,
    pub timings: StageTimings,
}

impl RunResult {
    pub fn ranges(&self) -> Option<&RangeThresholds> {
        self.rrc.as_ref().map(|r| &r.thresholds)
    }

    /// Rendered binary masks keyed by view index.
    pub fn predicted_masks(&self) -> BTreeMap<u32, Vec<bool>> {
        self.renders
            .iter()
            .enumerate()
            .map(|(v, r)| (v as u32, r.binary_mask()))
            .collect()
    }
}

/// Target-id foreground of `masks`, keyed by view index.
pub fn binary_gt(masks: &[InstanceMask], target: u16) -> BTreeMap<u32, Vec<bool>> {
    masks
        .iter()
        .enumerate()
        .map(|(v, m)| (v as u32, m.binary(target)))
        .collect()
}

/// Both stages plus per-view rendering, in memory.
pub fn run_pipeline(dataset: &Dataset, params: &RunParams) -> Result<RunResult> {
    params.validate()?;
    let target = dataset.target(params.target).stage("target")?;
    let scene = &dataset.scene;
    let views = dataset.view_refs();
    let base = TraceConfig::default();

    let clock = Instant::now();
    let igit_control = params.control(params.igit_max_iters);
    let (segments, igit_iterations, igit_converged, segment_history) = if params.disable_temporal {
        let out = igit_run(scene, &views, target, igit_control, &base).stage("igit")?;
        let segs = TemporalSegments::single(scene.timestamp_count(), out.mask);
        (segs, out.iterations, out.converged, vec![1; out.iterations])
    } else {
        let out = temporal_igit_run(scene, &views, target, params.tau, igit_control, &base).stage("igit")?;
        (out.segments, out.iterations, out.converged, out.segment_history)
    };
    let igit_time = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let rrc = if params.disable_rrc {
        None
    } else {
        Some(
            rrc_run(
                scene,
                &views,
                &segments,
                target,
                params.control(params.rrc_max_iters),
                &base,
            )
            .stage("rrc")?,
        )
    };
    let rrc_time = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let ranges = rrc.as_ref().map(|r| &r.thresholds);
    let renders = views
        .iter()
        .map(|v| render_segmented(scene, &v.camera, &segments, ranges, &base))
        .collect::<Result<Vec<_>>>()
        .stage("render")?;
    let render_time = clock.elapsed().as_secs_f64();

    Ok(RunResult {
        segments,
        igit_iterations,
        igit_converged,
        segment_history,
        rrc,
        renders,
        timings: StageTimings {
            igit: igit_time,
            rrc: rrc_time,
            render: render_time,
            threads: rayon::current_num_threads(),
            ..Default::default()
        },
    })
}

/// Scene, cameras and the per-view masks in `mask_dir`.
pub fn load_dataset(scene: &Path, cameras: &Path, mask_dir: &Path) -> Result<Dataset> {
    let scene = load_scene(scene)?;
    let cams = load_cameras(cameras)?;
    let views = cams
        .into_iter()
        .enumerate()
        .map(|(v, camera)| {
            let mask = load_mask(&mask_dir.join(mask_file_name(v)), camera.timestamp)?;
            Ok(View { camera, mask })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(scene, views)
}

fn load_masks_for(dir: &Path, dataset: &Dataset) -> Result<Vec<InstanceMask>> {
    dataset
        .views
        .iter()
        .enumerate()
        .map(|(v, view)| load_mask(&dir.join(mask_file_name(v)), view.timestamp()))
        .collect()
}

/// Runs `f` on a pool of `threads` workers, or the global pool when `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f),
        None => f(),
    }
}

#[derive(Serialize, Deserialize)]
struct SegmentFile {
    timestamp_count: usize,
    gaussian_count: usize,
    segments: Vec<SegmentRecord>,
}

#[derive(Serialize, Deserialize)]
struct SegmentRecord {
    index: usize,
    start: u32,
    end: u32,
    count: usize,
    members: Vec<usize>,
}

pub fn save_segments(segs: &TemporalSegments, path: &Path) -> Result<()> {
    let file = SegmentFile {
        timestamp_count: segs.timestamp_count,
        gaussian_count: segs.masks.first().map_or(0, SegmentMask::len),
        segments: (0..segs.len())
            .map(|s| {
                let r = segs.range(s);
                SegmentRecord {
                    index: s,
                    start: r.start,
                    end: r.end,
                    count: segs.masks[s].count(),
                    members: segs.masks[s].indices().collect(),
                }
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_segments(path: &Path) -> Result<TemporalSegments> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SegmentFile = serde_json::from_str(&text)?;
    let mut starts = Vec::new();
    let mut masks = Vec::new();
    for rec in &file.segments {
        let mut m = SegmentMask::empty(file.gaussian_count);
        for &i in &rec.members {
            if i >= file.gaussian_count {
                return Err(Error::Format(format!("segment {} member {i} out of range", rec.index)));
            }
            m.member[i] = true;
        }
        starts.push(rec.start);
        masks.push(m);
    }
    let segs = TemporalSegments {
        timestamp_count: file.timestamp_count,
        starts,
        masks,
    };
    segs.validate(file.gaussian_count)?;
    Ok(segs)
}

#[derive(Serialize)]
struct Manifest<'a> {
    gaussian_count: usize,
    timestamp_count: usize,
    view_count: usize,
    params: &'a RunParams,
    igit_iterations: usize,
    igit_converged: bool,
    segment_count: usize,
    segment_history: &'a [usize],
    segment_sizes: Vec<usize>,
    rrc: Option<RrcSummary>,
    metrics: Option<MetricsSummary>,
}

#[derive(Serialize)]
struct RrcSummary {
    steps: usize,
    entries: usize,
    decided_fraction: f64,
}

#[derive(Serialize)]
struct MetricsSummary {
    miou: f64,
    macc: f64,
}

/// What `segment` reports back to the caller.
#[derive(Debug, Clone)]
pub struct SegmentSummary {
    pub segment_count: usize,
    pub igit_iterations: usize,
    pub igit_converged: bool,
    pub metrics: Option<MetricsReport>,
    pub timings: StageTimings,
}

fn write_artifacts(
    dataset: &Dataset,
    result: &RunResult,
    params: &RunParams,
    metrics: Option<&MetricsReport>,
    out: &Path,
) -> Result<()> {
    let mkdir = |p: &Path| std::fs::create_dir_all(p).map_err(|e| Error::io(p, e));
    for sub in ["pointclouds", "masks", "rgb"] {
        mkdir(&out.join(sub))?;
    }
    save_segments(&result.segments, &out.join("segments.json"))?;
    for s in 0..result.segments.len() {
        let t = result.segments.range(s).start as usize;
        let path = out.join("pointclouds").join(format!("seg_{s}.ply"));
        save_pointcloud(&dataset.scene, &result.segments.masks[s].member, t, &path)?;
    }
    let ranges_path = out.join("ranges.g4dr");
    match result.ranges() {
        Some(r) => save_ranges(r, &ranges_path)?,
        None => {
            if ranges_path.exists() {
                std::fs::remove_file(&ranges_path).map_err(|e| Error::io(&ranges_path, e))?;
            }
        }
    }
    for (v, (view, render)) in dataset.views.iter().zip(&result.renders).enumerate() {
        let labels = render
            .binary_mask()
            .into_iter()
            .map(|m| if m { params.target } else { BACKGROUND })
            .collect();
        let mask = InstanceMask::new(render.width, render.height, labels, view.timestamp())?;
        write_mask(&mask, &out.join("masks").join(mask_file_name(v)))?;
        write_ppm(
            &render.rgb,
            render.width,
            render.height,
            &out.join("rgb").join(format!("{v:04}.ppm")),
        )?;
    }
    if let Some(m) = metrics {
        m.write_csv(&out.join("metrics.csv"))?;
    }
    let manifest = Manifest {
        gaussian_count: dataset.scene.gaussian_count(),
        timestamp_count: dataset.scene.timestamp_count(),
        view_count: dataset.views.len(),
        params,
        igit_iterations: result.igit_iterations,
        igit_converged: result.igit_converged,
        segment_count: result.segments.len(),
        segment_history: &result.segment_history,
        segment_sizes: result.segments.masks.iter().map(SegmentMask::count).collect(),
        rrc: result.rrc.as_ref().map(|r| RrcSummary {
            steps: r.steps,
            entries: r.thresholds.entry_count(),
            decided_fraction: r.thresholds.decided_fraction(0.05, 0.95),
        }),
        metrics: metrics.map(|m| MetricsSummary {
            miou: m.miou,
            macc: m.macc,
        }),
    };
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
}

/// Full `segment` command: load, run, evaluate if possible, write.
pub fn cmd_segment(cfg: &PipelineConfig) -> Result<SegmentSummary> {
    cfg.validate()?;
    with_threads(cfg.threads, || {
        let wall = Instant::now();
        let clock = Instant::now();
        let dataset = load_dataset(&cfg.scene, &cfg.cameras, &cfg.masks).stage("load")?;
        let gt = match &cfg.gt_masks {
            Some(dir) => Some(load_masks_for(dir, &dataset).stage("load")?),
            None => None,
        };
        let load_time = clock.elapsed().as_secs_f64();

        let params = cfg.params();
        let mut result = run_pipeline(&dataset, &params)?;

        let clock = Instant::now();
        let metrics = match &gt {
            Some(gt) => Some(
                evaluate_run(
                    &result.predicted_masks(),
                    &binary_gt(gt, params.target),
                    AccuracyMode::AllPixels,
                )
                .stage("eval")?,
            ),
            None => None,
        };
        write_artifacts(&dataset, &result, &params, metrics.as_ref(), &cfg.output).stage("write")?;
        let write_time = clock.elapsed().as_secs_f64();

        result.timings.load = load_time;
        result.timings.write = write_time;
        result.timings.total = wall.elapsed().as_secs_f64();
        let path = cfg.output.join("timings.json");
        std::fs::write(&path, serde_json::to_string_pretty(&result.timings)?)
            .map_err(|e| Error::io(&path, e))
            .stage("write")?;
        Ok(SegmentSummary {
            segment_count: result.segments.len(),
            igit_iterations: result.igit_iterations,
            igit_converged: result.igit_converged,
            metrics,
            timings: result.timings,
        })
    })
}

fn view_index(path: &Path) -> Option<u32> {
    if path.extension()? != "pgm" {
        return None;
    }
    path.file_stem()?.to_str()?.parse().ok()
}

/// Binarized masks keyed by view index, with their dimensions.
type MaskDir = BTreeMap<u32, (u32, u32, Vec<bool>)>;

fn read_mask_dir(dir: &Path, keep: impl Fn(u16) -> bool) -> Result<MaskDir> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if let Some(v) = view_index(&path) {
            let m = load_mask(&path, 0)?;
            out.insert(v, (m.width, m.height, m.labels.iter().map(|&l| keep(l)).collect()));
        }
    }
    Ok(out)
}

/// Scores `pred_dir` against `gt_dir`; both hold `VVVV.pgm` masks. Any
/// nonzero predicted pixel is foreground; ground truth is foreground where it
/// equals `target`, or anywhere nonzero without one.
pub fn cmd_eval(pred_dir: &Path, gt_dir: &Path, target: Option<u16>, mode: AccuracyMode) -> Result<MetricsReport> {
    let pred = read_mask_dir(pred_dir, |l| l != BACKGROUND)?;
    let gt = read_mask_dir(gt_dir, |l| match target {
        Some(k) => l == k,
        None => l != BACKGROUND,
    })?;
    for (v, (w, h, _)) in &gt {
        if let Some((pw, ph, _)) = pred.get(v) {
            if (pw, ph) != (w, h) {
                return Err(Error::Validation(format!(
                    "view {v}: prediction {pw}x{ph} vs ground truth {w}x{h}"
                )));
            }
        }
    }
    let strip = |m: MaskDir| m.into_iter().map(|(k, v)| (k, v.2)).collect();
    evaluate_run(&strip(pred), &strip(gt), mode)
}

pub fn cmd_synth(spec: &SynthSpec, dir: &Path) -> Result<()> {
    let out = generate(spec).stage("synth")?;
    write_dataset(&out, dir).stage("write")
}

/// Re-renders segmented views from saved `segments.json` and optional
/// `ranges.g4dr`.
pub fn cmd_render(scene: &Path, cameras: &Path, segments: &Path, ranges: Option<&Path>, out: &Path) -> Result<()> {
    let scene = load_scene(scene).stage("load")?;
    let cams = load_cameras(cameras).stage("load")?;
    let segs = load_segments(segments).stage("load")?;
    if segs.timestamp_count != scene.timestamp_count() {
        return Err(Error::Validation("segments do not match the scene".into()).at_stage("load"));
    }
    let ranges = match ranges {
        Some(p) => Some(load_ranges(p, scene.timestamp_count()).stage("load")?),
        None => None,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (v, cam) in cams.iter().enumerate() {
        let r = render_segmented(&scene, cam, &segs, ranges.as_ref(), &TraceConfig::default()).stage("render")?;
        let labels = r.binary_mask().into_iter().map(u16::from).collect();
        let mask = InstanceMask::new(r.width, r.height, labels, cam.timestamp)?;
        write_mask(&mask, &out.join(mask_file_name(v)))?;
        write_ppm(&r.rgb, r.width, r.height, &out.join(format!("{v:04}.ppm")))?;
    }
    Ok(())
}

/// One full-scene tracing pass over every view, dumped as `weights.csv` and
/// `probabilities.csv` (one row per Gaussian, one column per label).
pub fn cmd_trace(dataset: &Dataset, target: u16, out: &Path) -> Result<()> {
    let target = dataset.target(target)?;
    let views = dataset.view_refs();
    let cols = label_count(&views, TargetSelection::id(target));
    let w = accumulate_segment(&dataset.scene, &views, cols, &TraceConfig::default()).stage("trace")?;
    let p = normalize(&w);
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let header: Vec<String> = std::iter::once("gaussian".to_string())
        .chain((0..w.cols()).map(|k| format!("label_{k}")))
        .collect();
    for (name, rows) in [
        (
            "weights.csv",
            (0..w.rows()).map(|i| w.row(i).to_vec()).collect::<Vec<_>>(),
        ),
        ("probabilities.csv", (0..p.rows()).map(|i| p.row(i).to_vec()).collect()),
    ] {
        let path = out.join(name);
        let mut wr = csv::Writer::from_path(&path)?;
        wr.write_record(&header)?;
        for (i, row) in rows.iter().enumerate() {
            let rec: Vec<String> = std::iter::once(i.to_string())
                .chain(row.iter().map(|v| v.to_string()))
                .collect();
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_from_toml() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "scene = \"s.g4ds\"\ncameras = \"c.json\"\nmasks = \"m\"\ntarget = 1\noutput = \"out\"\n",
        )
        .unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.igit_max_iters, 20);
        assert_eq!(cfg.rrc_max_iters, 20);
        assert_eq!(cfg.tau, 0.5);
        assert!(!cfg.disable_rrc && !cfg.disable_temporal);
        assert_eq!(cfg.scene, dir.path().join("s.g4ds"));
        // paths do not exist
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"scene":"s","cameras":"c","masks":"m","target":1,"output":"o","bogus":1}"#,
        )
        .unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(Error::Config(_))));
        let mut p = RunParams::new(1);
        p.tau = 1.0;
        assert!(p.validate().is_err());
        p.tau = 0.5;
        p.igit_max_iters = 0;
        assert!(p.validate().is_err());
    }
}
