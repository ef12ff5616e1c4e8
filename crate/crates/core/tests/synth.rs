mod common;

use std::collections::BTreeMap;
use std::path::Path;

use sha2::{Digest, Sha256};
use tibr4d::scene_model::{load_cameras, load_mask, load_scene};
use tibr4d::synth::{
    generate, mask_file_name, perfect_masks_from_gt, write_dataset, GtAssignment, Scenario, SynthSpec, TARGET_ID,
};

/// Relative path to content hash for every file under `root`.
fn tree_hashes(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}

fn spec(scenario: Scenario, seed: u64) -> SynthSpec {
    let mut s = SynthSpec::new(scenario);
    s.n_per_object = 300;
    s.frames = 4;
    s.width = 48;
    s.height = 48;
    s.seed = seed;
    s
}

#[test]
fn same_seed_writes_identical_trees() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    write_dataset(&generate(&spec(Scenario::Occluder, 42)).unwrap(), &a).unwrap();
    write_dataset(&generate(&spec(Scenario::Occluder, 42)).unwrap(), &b).unwrap();
    write_dataset(&generate(&spec(Scenario::Occluder, 43)).unwrap(), &c).unwrap();
    let (ha, hb, hc) = (tree_hashes(&a), tree_hashes(&b), tree_hashes(&c));
    assert_eq!(ha, hb);
    assert_ne!(ha["scene.g4ds"], hc["scene.g4ds"]);
    assert!(ha.contains_key("gt_assignment.json") && ha.contains_key("synth.json"));
    assert_eq!(ha.keys().filter(|k| k.starts_with("masks")).count(), 4);
}

#[test]
fn identity_flip_relabels_at_half_time() {
    let s = spec(Scenario::IdentityFlip, 7);
    let out = generate(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&out, dir.path()).unwrap();
    let gt = GtAssignment::from_json(&std::fs::read_to_string(dir.path().join("gt_assignment.json")).unwrap()).unwrap();
    assert_eq!(gt, out.gt);
    let half = s.frames / 2;
    let flipped: Vec<usize> = (0..gt.gaussian_count)
        .filter(|&i| gt.label(i, 0) != gt.label(i, s.frames - 1))
        .collect();
    assert!(!flipped.is_empty());
    for &i in &flipped {
        for t in 0..s.frames {
            let want = if t < half { 2 } else { TARGET_ID };
            assert_eq!(gt.label(i, t), want, "gaussian {i} frame {t}");
        }
    }
}

#[test]
fn files_load_back_as_generated() {
    let out = generate(&spec(Scenario::BoundaryStress, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&out, dir.path()).unwrap();
    assert_eq!(load_scene(&dir.path().join("scene.g4ds")).unwrap(), out.scene);
    let cams = load_cameras(&dir.path().join("cameras.json")).unwrap();
    assert_eq!(cams, out.cameras);
    for (v, cam) in cams.iter().enumerate() {
        let m = load_mask(&dir.path().join("masks").join(mask_file_name(v)), cam.timestamp).unwrap();
        assert_eq!(m, out.masks[v]);
    }
}

#[test]
fn clean_masks_are_the_dominant_ground_truth() {
    let out = generate(&spec(Scenario::StaticTwoObjects, 5)).unwrap();
    let rebuilt = perfect_masks_from_gt(&out.scene, &out.cameras, &out.gt).unwrap();
    assert_eq!(rebuilt, out.gt_masks);
    assert_eq!(out.masks, out.gt_masks);
    for m in &out.gt_masks {
        assert!(m.labels.contains(&1) && m.labels.contains(&2) && m.labels.contains(&0));
    }
}

#[test]
fn noisy_masks_move_only_boundaries() {
    let mut s = spec(Scenario::Occluder, 5);
    s.mask_noise = true;
    let out = generate(&s).unwrap();
    let changed: usize = out
        .masks
        .iter()
        .zip(&out.gt_masks)
        .map(|(a, b)| a.labels.iter().zip(&b.labels).filter(|(x, y)| x != y).count())
        .sum();
    let fg: usize = out
        .gt_masks
        .iter()
        .map(|m| m.labels.iter().filter(|&&l| l != 0).count())
        .sum();
    assert!(changed > 0);
    assert!(changed < fg / 2);
}

#[test]
fn multiple_views_per_frame_share_a_timestamp() {
    let mut s = spec(Scenario::Occluder, 1);
    s.views_per_frame = 3;
    let out = generate(&s).unwrap();
    assert_eq!(out.cameras.len(), 12);
    for (v, cam) in out.cameras.iter().enumerate() {
        assert_eq!(cam.timestamp as usize, v / 3);
    }
    assert_ne!(out.cameras[0].world_to_camera, out.cameras[1].world_to_camera);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut s = spec(Scenario::IdentityFlip, 1);
    s.frames = 1;
    assert!(generate(&s).is_err());
    let mut s = spec(Scenario::Occluder, 1);
    s.width = 8;
    assert!(generate(&s).is_err());
    let mut s = spec(Scenario::Occluder, 1);
    s.wall_spacing_px = f32::NAN;
    assert!(generate(&s).is_err());
}
