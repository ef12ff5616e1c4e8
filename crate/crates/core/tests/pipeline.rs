mod common;

use std::path::Path;

use tibr4d::evalsuite::{AccuracyMode, MetricsReport};
use tibr4d::pipeline::{
    cmd_eval, cmd_render, cmd_segment, cmd_synth, cmd_trace, load_dataset, load_segments, PipelineConfig, StageTimings,
};
use tibr4d::scene_model::{read_pointcloud, write_mask, InstanceMask};
use tibr4d::synth::{mask_file_name, Scenario, SynthSpec, TARGET_ID};
use tibr4d::Error;

fn synth(dir: &Path, scenario: Scenario) {
    let mut spec = SynthSpec::new(scenario);
    spec.n_per_object = 500;
    spec.frames = 4;
    spec.width = 48;
    spec.height = 48;
    cmd_synth(&spec, dir).unwrap();
}

fn manifest(out: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn segment_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, Scenario::Occluder);
    let out = dir.path().join("out");
    let mut cfg = PipelineConfig::new(&data, TARGET_ID, &out);
    cfg.gt_masks = Some(data.join("gt_masks"));
    let summary = cmd_segment(&cfg).unwrap();

    for f in [
        "segments.json",
        "ranges.g4dr",
        "manifest.json",
        "timings.json",
        "metrics.csv",
        "pointclouds/seg_0.ply",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    for v in 0..4 {
        assert!(out.join("masks").join(mask_file_name(v)).is_file());
        assert!(out.join("rgb").join(format!("{v:04}.ppm")).is_file());
    }
    let m = manifest(&out);
    assert!(m["igit_iterations"].as_u64().unwrap() <= 5);
    assert_eq!(m["igit_converged"], true);
    assert_eq!(m["segment_count"], 1);
    assert_eq!(summary.segment_count, 1);
    let segs = load_segments(&out.join("segments.json")).unwrap();
    let cloud = read_pointcloud(&out.join("pointclouds/seg_0.ply")).unwrap();
    assert_eq!(cloud.len(), segs.masks[0].count());

    let metrics = MetricsReport::from_csv_str(&std::fs::read_to_string(out.join("metrics.csv")).unwrap()).unwrap();
    assert_eq!(metrics.per_frame.len(), 4);
    assert!(metrics.miou > 0.9, "mIoU {}", metrics.miou);
    // the written masks score the same through the eval command
    let again = cmd_eval(
        &out.join("masks"),
        &data.join("gt_masks"),
        Some(TARGET_ID),
        AccuracyMode::AllPixels,
    )
    .unwrap();
    assert_eq!(again, metrics);
}

#[test]
fn stage_timings_add_up_to_the_total() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, Scenario::StaticTwoObjects);
    let out = dir.path().join("out");
    cmd_segment(&PipelineConfig::new(&data, TARGET_ID, &out)).unwrap();
    let t: StageTimings = serde_json::from_str(&std::fs::read_to_string(out.join("timings.json")).unwrap()).unwrap();
    let stages = t.load + t.igit + t.rrc + t.render + t.write;
    assert!((stages - t.total).abs() <= 0.05 * t.total, "{stages} vs {}", t.total);
    assert!(t.threads >= 1);
    assert_eq!(manifest(&out)["segment_count"], 1);
}

#[test]
fn disabling_rrc_skips_the_ranges_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, Scenario::BoundaryStress);
    let out = dir.path().join("out");
    let mut cfg = PipelineConfig::new(&data, TARGET_ID, &out);
    cmd_segment(&cfg).unwrap();
    assert!(out.join("ranges.g4dr").is_file());
    cfg.disable_rrc = true;
    cmd_segment(&cfg).unwrap();
    assert!(!out.join("ranges.g4dr").exists());
    assert!(manifest(&out)["rrc"].is_null());

    // untruncated re-rendering reproduces the masks of the w/o RRC run
    let rendered = dir.path().join("rendered");
    cmd_render(
        &data.join("scene.g4ds"),
        &data.join("cameras.json"),
        &out.join("segments.json"),
        None,
        &rendered,
    )
    .unwrap();
    for v in 0..4 {
        let name = mask_file_name(v);
        assert_eq!(
            std::fs::read(rendered.join(&name)).unwrap().len(),
            std::fs::read(out.join("masks").join(&name)).unwrap().len()
        );
        let a = tibr4d::scene_model::load_mask(&rendered.join(&name), 0).unwrap();
        let b = tibr4d::scene_model::load_mask(&out.join("masks").join(&name), 0).unwrap();
        assert_eq!(a.binary(1), b.binary(TARGET_ID));
    }
}

#[test]
fn render_with_ranges_matches_segment_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, Scenario::BoundaryStress);
    let out = dir.path().join("out");
    cmd_segment(&PipelineConfig::new(&data, TARGET_ID, &out)).unwrap();
    let rendered = dir.path().join("rendered");
    cmd_render(
        &data.join("scene.g4ds"),
        &data.join("cameras.json"),
        &out.join("segments.json"),
        Some(&out.join("ranges.g4dr")),
        &rendered,
    )
    .unwrap();
    for v in 0..4 {
        let name = format!("{v:04}.ppm");
        assert_eq!(
            std::fs::read(rendered.join(&name)).unwrap(),
            std::fs::read(out.join("rgb").join(&name)).unwrap()
        );
    }
}

#[test]
fn trace_dumps_one_row_per_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, Scenario::StaticTwoObjects);
    let ds = load_dataset(
        &data.join("scene.g4ds"),
        &data.join("cameras.json"),
        &data.join("masks"),
    )
    .unwrap();
    let out = dir.path().join("trace");
    cmd_trace(&ds, TARGET_ID, &out).unwrap();
    let probs = std::fs::read_to_string(out.join("probabilities.csv")).unwrap();
    let mut lines = probs.lines();
    assert_eq!(lines.next().unwrap(), "gaussian,label_0,label_1,label_2");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), ds.scene.gaussian_count());
    for row in rows {
        let sum: f64 = row.split(',').skip(1).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!(sum == 0.0 || (sum - 1.0).abs() < 1e-9);
    }
    assert!(out.join("weights.csv").is_file());
}

#[test]
fn errors_carry_their_stage() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, Scenario::Occluder);
    std::fs::remove_file(data.join("masks").join(mask_file_name(2))).unwrap();
    let cfg = PipelineConfig::new(&data, TARGET_ID, &dir.path().join("out"));
    let err = cmd_segment(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "load", .. }), "{err}");

    let cfg = PipelineConfig::new(&dir.path().join("nowhere"), TARGET_ID, &dir.path().join("out"));
    assert!(matches!(cmd_segment(&cfg), Err(Error::Config(_))));

    synth(&data, Scenario::Occluder);
    let cfg = PipelineConfig::new(&data, 9, &dir.path().join("out"));
    let err = cmd_segment(&cfg).unwrap_err();
    assert!(err.to_string().starts_with("target"), "{err}");
}

#[test]
fn config_files_load_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("run.json");
    std::fs::write(
        &json,
        r#"{"scene": "d/scene.g4ds", "cameras": "d/cameras.json", "masks": "d/masks", "target": 2,
            "output": "/abs/out", "tau": 0.7, "disable_temporal": true, "threads": 3}"#,
    )
    .unwrap();
    let cfg = PipelineConfig::load(&json).unwrap();
    assert_eq!(cfg.masks, dir.path().join("d/masks"));
    assert_eq!(cfg.output, Path::new("/abs/out"));
    assert_eq!((cfg.target, cfg.tau, cfg.threads), (2, 0.7, Some(3)));
    assert!(cfg.disable_temporal && !cfg.disable_rrc);

    let typo = dir.path().join("typo.toml");
    std::fs::write(
        &typo,
        "scene = \"s\"\ncameras = \"c\"\nmasks = \"m\"\ntarget = 1\noutput = \"o\"\ntua = 0.5\n",
    )
    .unwrap();
    assert!(matches!(PipelineConfig::load(&typo), Err(Error::Config(_))));
    assert!(PipelineConfig::load(&dir.path().join("run.yaml")).is_err());

    let data = dir.path().join("data");
    synth(&data, Scenario::Occluder);
    let mut cfg = PipelineConfig::new(&data, TARGET_ID, &dir.path().join("out"));
    cfg.validate().unwrap();
    cfg.tau = 1.0;
    assert!(cfg.validate().is_err());
    cfg.tau = 0.5;
    cfg.igit_max_iters = 0;
    assert!(cfg.validate().is_err());
    cfg.igit_max_iters = 20;
    cfg.threads = Some(0);
    assert!(cfg.validate().is_err());
}

fn mask_dir(dir: &Path, masks: &[Vec<u16>]) {
    std::fs::create_dir_all(dir).unwrap();
    for (v, labels) in masks.iter().enumerate() {
        let m = InstanceMask::new(2, 2, labels.clone(), 0).unwrap();
        write_mask(&m, &dir.join(mask_file_name(v))).unwrap();
    }
}

#[test]
fn eval_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let gt = dir.path().join("gt");
    mask_dir(&gt, &[vec![1, 1, 0, 0], vec![1, 1, 2, 0]]);
    let report = cmd_eval(&gt, &gt, None, AccuracyMode::AllPixels).unwrap();
    assert_eq!((report.miou, report.macc), (1.0, 1.0));

    let half = dir.path().join("half");
    mask_dir(&half, &[vec![1, 0, 0, 0], vec![1, 0, 0, 0]]);
    let report = cmd_eval(&half, &gt, Some(1), AccuracyMode::AllPixels).unwrap();
    assert_eq!(report.miou, 0.5);
    assert_eq!(report.macc, 0.75);
    let fg = cmd_eval(&half, &gt, Some(1), AccuracyMode::Foreground).unwrap();
    assert_eq!(fg.macc, 0.5);

    let empty = dir.path().join("empty");
    std::fs::create_dir_all(&empty).unwrap();
    match cmd_eval(&empty, &gt, None, AccuracyMode::AllPixels) {
        Err(Error::MissingFrames(v)) => assert_eq!(v, vec![0, 1]),
        other => panic!("expected missing frames, got {other:?}"),
    }
}
