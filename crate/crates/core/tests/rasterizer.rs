mod common;

use common::{ball, camera, random_mask, random_scene, rel_diff, rng};
use rand::Rng;
use tibr4d::rasterizer::oracle::{oracle_dominant_view, oracle_render_view, oracle_trace_view};
use tibr4d::rasterizer::{dominant_view, render_view, trace_view, TraceConfig};
use tibr4d::scene_model::{DynamicScene, InstanceMask};

fn worst_trace_diff(seed: u64, occlusion: bool) -> f64 {
    let mut rng = rng(seed);
    let n = rng.random_range(1..=120);
    let scene = random_scene(&mut rng, n, 2);
    let cam = camera(48, 40, rng.random_range(0..2));
    let mask = random_mask(&mut rng, 48, 40, 3, cam.timestamp);
    let subset: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let r: Vec<f32> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let cfg = TraceConfig {
        subset_mask: Some(&subset),
        range_thresholds: Some(&r),
        use_occlusion: occlusion,
        ..TraceConfig::default()
    };
    let fast = trace_view(&scene, &cam, &mask, 3, &cfg).unwrap();
    let slow = oracle_trace_view(&scene, &cam, &mask, 3, &cfg).unwrap();
    assert_eq!((fast.rows(), fast.cols()), (slow.rows(), slow.cols()));
    fast.values()
        .iter()
        .zip(slow.values())
        .map(|(&a, &b)| rel_diff(a, b))
        .fold(0.0, f64::max)
}

#[test]
fn tiled_trace_matches_oracle_with_and_without_occlusion() {
    for seed in 0..6 {
        assert!(worst_trace_diff(seed, true) <= 1e-9, "seed {seed}");
        assert!(worst_trace_diff(100 + seed, false) <= 1e-9, "seed {seed}");
    }
}

#[test]
fn tiled_render_and_dominant_match_oracle() {
    for seed in 0..4 {
        let mut rng = rng(seed);
        let scene = random_scene(&mut rng, 80, 1);
        let cam = camera(40, 56, 0);
        let cfg = TraceConfig::default();
        let fast = render_view(&scene, &cam, &cfg).unwrap();
        let slow = oracle_render_view(&scene, &cam, &cfg).unwrap();
        for (a, b) in fast.alpha.iter().zip(&slow.alpha) {
            assert!(rel_diff(*a as f64, *b as f64) <= 1e-6);
        }
        for (a, b) in fast.rgb.iter().zip(&slow.rgb) {
            for k in 0..3 {
                assert!(rel_diff(a[k] as f64, b[k] as f64) <= 1e-6);
            }
        }
        assert_eq!(
            dominant_view(&scene, &cam, &cfg).unwrap(),
            oracle_dominant_view(&scene, &cam, &cfg).unwrap()
        );
    }
}

#[test]
fn weights_sum_to_rendered_opacity() {
    let mut rng = rng(9);
    let scene = random_scene(&mut rng, 150, 1);
    let cam = camera(64, 64, 0);
    let mask = random_mask(&mut rng, 64, 64, 2, 0);
    let cfg = TraceConfig::default();
    let w = trace_view(&scene, &cam, &mask, 2, &cfg).unwrap();
    let img = render_view(&scene, &cam, &cfg).unwrap();
    let traced: f64 = w.values().iter().sum();
    let covered: f64 = img.alpha.iter().map(|&a| a as f64).sum();
    assert!(rel_diff(traced, covered) < 1e-5, "{traced} vs {covered}");
}

#[test]
fn opaque_front_gaussian_hides_the_back_one() {
    let front = ball([0.0, 0.0, 2.0], 1000.0, 1.0);
    let back = ball([0.0, 0.0, 4.0], 1.0, 1.0);
    let scene = DynamicScene::constant(vec![back, front], 1).unwrap();
    let cam = camera(16, 16, 0);
    let mask = InstanceMask::filled(16, 16, 1, 0);
    let w = trace_view(&scene, &cam, &mask, 1, &TraceConfig::default()).unwrap();
    assert_eq!(w.row(0), &[0.0, 0.0]);
    assert!(w.get(1, 1) > 0.0);

    let flat = TraceConfig {
        use_occlusion: false,
        ..TraceConfig::default()
    };
    let w = trace_view(&scene, &cam, &mask, 1, &flat).unwrap();
    assert!(w.get(0, 1) > 0.0);
}

#[test]
fn subset_and_zero_ranges_remove_contributions() {
    let mut rng = rng(3);
    let scene = random_scene(&mut rng, 40, 1);
    let cam = camera(32, 32, 0);
    let mask = InstanceMask::filled(32, 32, 1, 0);
    let none = vec![false; 40];
    let cfg = TraceConfig {
        subset_mask: Some(&none),
        ..TraceConfig::default()
    };
    assert_eq!(trace_view(&scene, &cam, &mask, 1, &cfg).unwrap().max_value(), 0.0);

    let zero = vec![0.0f32; 40];
    let cfg = TraceConfig {
        range_thresholds: Some(&zero),
        ..TraceConfig::default()
    };
    assert_eq!(trace_view(&scene, &cam, &mask, 1, &cfg).unwrap().max_value(), 0.0);
    let img = render_view(&scene, &cam, &cfg).unwrap();
    assert!(img.alpha.iter().all(|&a| a == 0.0));
}

#[test]
fn smaller_ranges_never_add_weight() {
    let mut rng = rng(5);
    let scene = random_scene(&mut rng, 60, 1);
    let cam = camera(32, 32, 0);
    let mask = InstanceMask::filled(32, 32, 1, 0);
    let flat = |r: &[f32]| {
        let cfg = TraceConfig {
            use_occlusion: false,
            range_thresholds: Some(r),
            ..TraceConfig::default()
        };
        trace_view(&scene, &cam, &mask, 1, &cfg).unwrap()
    };
    let wide = flat(&[0.9; 60]);
    let narrow = flat(&[0.3; 60]);
    for i in 0..60 {
        assert!(narrow.get(i, 1) <= wide.get(i, 1));
    }
}

#[test]
fn trace_is_identical_across_thread_counts() {
    let mut rng = rng(11);
    let scene = random_scene(&mut rng, 200, 1);
    let cam = camera(96, 80, 0);
    let mask = random_mask(&mut rng, 96, 80, 4, 0);
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| trace_view(&scene, &cam, &mask, 4, &TraceConfig::default()).unwrap())
    };
    let one = run(1);
    let bits = |w: &tibr4d::rasterizer::WeightMatrix| w.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    for threads in [2, 3, 4] {
        assert_eq!(bits(&one), bits(&run(threads)));
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let mut rng = rng(1);
    let scene = random_scene(&mut rng, 5, 1);
    let cam = camera(16, 16, 0);
    let wrong_size = InstanceMask::filled(8, 8, 1, 0);
    assert!(trace_view(&scene, &cam, &wrong_size, 1, &TraceConfig::default()).is_err());
    let too_many_labels = InstanceMask::filled(16, 16, 3, 0);
    assert!(trace_view(&scene, &cam, &too_many_labels, 1, &TraceConfig::default()).is_err());
    let late = camera(16, 16, 4);
    assert!(render_view(&scene, &late, &TraceConfig::default()).is_err());
    let short = vec![true; 3];
    let cfg = TraceConfig {
        subset_mask: Some(&short),
        ..TraceConfig::default()
    };
    assert!(render_view(&scene, &cam, &cfg).is_err());
}
