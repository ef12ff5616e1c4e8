mod common;

use proptest::prelude::*;
use tibr4d::evalsuite::{frame_acc, frame_iou};
use tibr4d::igit::SegmentMask;
use tibr4d::rasterizer::oracle::oracle_trace_view;
use tibr4d::rasterizer::{trace_view, TraceConfig};
use tibr4d::rrc::{load_ranges, save_ranges, FrameValues};
use tibr4d::temporal::{merge_pass, segment_iou, TemporalSegments};

fn masks(len: usize) -> impl Strategy<Value = (Vec<bool>, Vec<bool>)> {
    (
        proptest::collection::vec(any::<bool>(), len),
        proptest::collection::vec(any::<bool>(), len),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frame_metrics_are_bounded_and_symmetric((a, b) in (1usize..64).prop_flat_map(masks)) {
        let ab = frame_iou(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, frame_iou(&b, &a).unwrap());
        prop_assert_eq!(frame_iou(&a, &a).unwrap(), 1.0);
        let acc = frame_acc(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&acc));
        prop_assert_eq!(acc == 1.0, ab == 1.0);
    }

    #[test]
    fn merging_keeps_a_partition(
        members in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 12), 1..8),
        tau in 0.05f64..0.95,
    ) {
        let count = members.len();
        let segs = TemporalSegments {
            timestamp_count: count + 2,
            starts: std::iter::once(0).chain((1..count as u32).map(|s| s + 1)).collect(),
            masks: members.into_iter().map(|member| SegmentMask { member }).collect(),
        };
        segs.validate(12).unwrap();
        let merged = merge_pass(&segs, tau);
        merged.validate(12).unwrap();
        prop_assert!(merged.len() <= segs.len());
        for s in 0..segs.len() {
            let t = segs.starts[s];
            let into = merged.segment_of(t).unwrap();
            let m = &merged.masks[into];
            prop_assert!(segs.masks[s].indices().all(|i| m.member[i]));
        }
        for s in 1..segs.len() {
            let same = merged.segment_of(segs.starts[s - 1]).unwrap() == merged.segment_of(segs.starts[s]).unwrap();
            prop_assert_eq!(same, segment_iou(&segs.masks[s - 1], &segs.masks[s]) > tau);
        }
    }

    #[test]
    fn ranges_round_trip(frames in proptest::collection::vec(
        proptest::collection::btree_map(0u32..500, 0.0f32..=1.0, 0..20), 1..5)
    ) {
        let r = FrameValues { frames: frames.into_iter().map(|f| f.into_iter().collect()).collect() };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.g4dr");
        save_ranges(&r, &path).unwrap();
        prop_assert_eq!(load_ranges(&path, r.timestamp_count()).unwrap(), r);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tiled_trace_agrees_with_oracle(seed in any::<u64>(), n in 1usize..60, w in 16u32..50, h in 16u32..50) {
        let mut rng = common::rng(seed);
        let scene = common::random_scene(&mut rng, n, 1);
        let cam = common::camera(w, h, 0);
        let mask = common::random_mask(&mut rng, w, h, 2, 0);
        let fast = trace_view(&scene, &cam, &mask, 2, &TraceConfig::default()).unwrap();
        let slow = oracle_trace_view(&scene, &cam, &mask, 2, &TraceConfig::default()).unwrap();
        for (a, b) in fast.values().iter().zip(slow.values()) {
            prop_assert!(common::rel_diff(*a, *b) <= 1e-9);
        }
    }
}
