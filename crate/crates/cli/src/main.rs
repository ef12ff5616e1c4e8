use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use tibr4d::evalsuite::{AccuracyMode, MetricsReport};
use tibr4d::pipeline::{self, PipelineConfig, THREADS_ENV};
use tibr4d::synth::{Scenario, SynthSpec};

#[derive(Parser)]
#[command(
    name = "tibr4d",
    version,
    about = "Segment dynamic Gaussian scenes from 2D instance masks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run tracing, temporal merging and range refinement, then write artifacts.
    Segment(SegmentArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Re-render object masks from saved segments and ranges.
    Render(RenderArgs),
    /// Dump one full-scene tracing pass as per-Gaussian weights and probabilities.
    Trace(TraceArgs),
}

/// Where scene, cameras and masks come from when no config file is given.
#[derive(Args)]
struct DatasetArgs {
    /// Dataset directory laid out as written by `synth`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    cameras: Option<PathBuf>,
    #[arg(long)]
    masks: Option<PathBuf>,
}

impl DatasetArgs {
    fn paths(&self) -> anyhow::Result<(PathBuf, PathBuf, PathBuf)> {
        let from_dir = |name: &str| self.dataset.as_ref().map(|d| d.join(name));
        let pick = |explicit: &Option<PathBuf>, name: &str| {
            explicit
                .clone()
                .or_else(|| from_dir(name))
                .with_context(|| format!("--{} or --dataset is required", name.split('.').next().unwrap()))
        };
        Ok((
            pick(&self.scene, "scene.g4ds")?,
            pick(&self.cameras, "cameras.json")?,
            pick(&self.masks, "masks")?,
        ))
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// TOML or JSON run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    gt_masks: Option<PathBuf>,
    #[arg(long)]
    target: Option<u16>,
    #[arg(long)]
    igit_max_iters: Option<usize>,
    #[arg(long)]
    rrc_max_iters: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    disable_temporal: bool,
    #[arg(long)]
    disable_rrc: bool,
    /// Run exactly the configured iteration counts.
    #[arg(long)]
    fixed_iterations: bool,
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

impl SegmentArgs {
    fn config(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => {
                let (Some(target), Some(output)) = (self.target, self.output.as_ref()) else {
                    bail!("without --config, --target and --output are required");
                };
                let (scene, cameras, masks) = self.data.paths()?;
                PipelineConfig {
                    scene,
                    cameras,
                    masks,
                    ..PipelineConfig::new(Path::new(""), target, output)
                }
            }
        };
        if let Some(p) = &self.data.dataset {
            cfg.scene = p.join("scene.g4ds");
            cfg.cameras = p.join("cameras.json");
            cfg.masks = p.join("masks");
        }
        if let Some(p) = &self.data.scene {
            cfg.scene = p.clone();
        }
        if let Some(p) = &self.data.cameras {
            cfg.cameras = p.clone();
        }
        if let Some(p) = &self.data.masks {
            cfg.masks = p.clone();
        }
        if let Some(p) = &self.gt_masks {
            cfg.gt_masks = Some(p.clone());
        }
        if let Some(k) = self.target {
            cfg.target = k;
        }
        if let Some(n) = self.igit_max_iters {
            cfg.igit_max_iters = n;
        }
        if let Some(n) = self.rrc_max_iters {
            cfg.rrc_max_iters = n;
        }
        if let Some(t) = self.tau {
            cfg.tau = t;
        }
        cfg.disable_temporal |= self.disable_temporal;
        cfg.disable_rrc |= self.disable_rrc;
        cfg.fixed_iterations |= self.fixed_iterations;
        if let Some(p) = &self.output {
            cfg.output = p.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Directory of predicted `VVVV.pgm` masks; any nonzero pixel is foreground.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Ground-truth label to score; defaults to any nonzero label.
    #[arg(long)]
    target: Option<u16>,
    /// Report accuracy over ground-truth foreground pixels only.
    #[arg(long)]
    foreground: bool,
    /// Where to write the per-frame CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_parser = parse_scenario)]
    scenario: Scenario,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long)]
    n_per_object: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    views_per_frame: Option<usize>,
    #[arg(long)]
    width: Option<u32>,
    #[arg(long)]
    height: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    wall_spacing_px: Option<f32>,
    /// Jitter instance boundaries in the input masks by one pixel.
    #[arg(long)]
    mask_noise: bool,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: tibr4d::Error| e.to_string())
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    /// `segments.json` from a `segment` run.
    #[arg(long)]
    segments: PathBuf,
    /// `ranges.g4dr`; without it kernels are untruncated.
    #[arg(long)]
    ranges: Option<PathBuf>,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct TraceArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    target: u16,
    #[arg(long, short)]
    output: PathBuf,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

fn print_report(report: &MetricsReport) {
    for f in &report.per_frame {
        println!("view {:>4}  iou {:.4}  acc {:.4}", f.timestamp, f.iou, f.acc);
    }
    println!("mIoU {:.4}  mAcc {:.4}", report.miou, report.macc);
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Segment(args) => {
            let cfg = args.config()?;
            let summary = pipeline::cmd_segment(&cfg)?;
            println!(
                "{} segment(s), {} tracing iteration(s), converged: {}",
                summary.segment_count, summary.igit_iterations, summary.igit_converged
            );
            if let Some(m) = &summary.metrics {
                println!("mIoU {:.4}  mAcc {:.4}", m.miou, m.macc);
            }
            let t = &summary.timings;
            println!(
                "load {:.2}s  igit {:.2}s  rrc {:.2}s  render {:.2}s  write {:.2}s  total {:.2}s on {} thread(s)",
                t.load, t.igit, t.rrc, t.render, t.write, t.total, t.threads
            );
            println!("wrote {}", cfg.output.display());
        }
        Command::Eval(args) => {
            let mode = if args.foreground {
                AccuracyMode::Foreground
            } else {
                AccuracyMode::AllPixels
            };
            let report = pipeline::cmd_eval(&args.pred, &args.gt, args.target, mode)?;
            print_report(&report);
            if let Some(path) = &args.csv {
                report.write_csv(path)?;
            }
        }
        Command::Synth(args) => {
            let mut spec = SynthSpec::new(args.scenario);
            spec.n_per_object = args.n_per_object.unwrap_or(spec.n_per_object);
            spec.frames = args.frames.unwrap_or(spec.frames);
            spec.views_per_frame = args.views_per_frame.unwrap_or(spec.views_per_frame);
            spec.width = args.width.unwrap_or(spec.width);
            spec.height = args.height.unwrap_or(spec.height);
            spec.seed = args.seed.unwrap_or(spec.seed);
            spec.wall_spacing_px = args.wall_spacing_px.unwrap_or(spec.wall_spacing_px);
            spec.mask_noise = args.mask_noise;
            pipeline::cmd_synth(&spec, &args.output)?;
            println!("wrote {} dataset to {}", spec.scenario, args.output.display());
        }
        Command::Render(args) => {
            pipeline::cmd_render(
                &args.scene,
                &args.cameras,
                &args.segments,
                args.ranges.as_deref(),
                &args.output,
            )?;
            println!("wrote {}", args.output.display());
        }
        Command::Trace(args) => {
            let (scene, cameras, masks) = args.data.paths()?;
            pipeline::with_threads(args.threads, || {
                let dataset = pipeline::load_dataset(&scene, &cameras, &masks)?;
                pipeline::cmd_trace(&dataset, args.target, &args.output)
            })?;
            println!("wrote {}", args.output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
