mod common;

use common::dataset_from;
use csod_core::metrics::{analyze, coverage_objective, entropy, kl_divergence, size_ratio, SizeThresholds};
use csod_core::synth::{generate, SynthSpec};
use proptest::prelude::*;

#[test]
fn closed_forms() {
    let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
    assert!((kl - (0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln())).abs() < 1e-12);
    assert!((kl - 0.1438).abs() < 1e-3);
    let h = entropy(&[3, 1]).unwrap();
    assert!((h - 0.5623).abs() < 1e-3);
    assert_eq!(entropy(&[5]).unwrap(), 0.0);
    assert!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).is_err());
    assert!(kl_divergence(&[0.5, 0.4], &[0.5, 0.5]).is_err());
}

#[test]
fn size_buckets_by_hand() {
    // Areas 100, 1024 | 1025, 9216 | 10000 under the default inclusive thresholds.
    let sides = [10.0, 32.0, 1025f64.sqrt(), 96.0, 100.0];
    let images = vec![sides.iter().map(|&s| (0, s, vec![1.0f32, 0.5])).collect::<Vec<_>>()];
    let ds = dataset_from(&images, 1);
    let r = size_ratio(&[0], &ds, SizeThresholds::default()).unwrap();
    assert_eq!(r.histogram, [2, 2, 1]);
    let r = size_ratio(&[0], &ds, SizeThresholds::new(99.0, 20000.0).unwrap()).unwrap();
    assert_eq!(r.histogram, [0, 5, 0]);
    assert!(SizeThresholds::new(10.0, 5.0).is_err());
}

#[test]
fn three_image_report_by_hand() {
    let images = vec![
        vec![(0, 10.0, vec![1.0f32, 0.0]), (1, 50.0, vec![0.0, 1.0])],
        vec![(0, 200.0, vec![1.0, 0.1])],
        vec![
            (1, 10.0, vec![0.1, 1.0]),
            (1, 10.0, vec![0.0, 1.0]),
            (0, 100.0, vec![1.0, 0.0]),
        ],
        vec![(0, 10.0, vec![1.0, 1.0])],
    ];
    let ds = dataset_from(&images, 2);
    let report = analyze(&[0, 1, 2], &ds, SizeThresholds::default()).unwrap();
    assert_eq!(report.image_count, 3);
    assert_eq!(report.annotation_count, 6);
    // small: 10,10,10 sides; medium: 50; large: 200, 100.
    assert_eq!(report.size_histogram, [3, 1, 2]);
    assert_eq!(report.per_class_annotation_counts, vec![3, 3]);
    assert!((report.class_ratio_entropy - 2f64.ln()).abs() < 1e-12);
    let p: [f64; 3] = [0.5, 1.0 / 6.0, 1.0 / 3.0];
    let q: [f64; 3] = [4.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0];
    let kl: f64 = p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum();
    assert!((report.kl_to_reference - kl).abs() < 1e-12);
    assert_eq!(report.units, "nats");
}

#[test]
fn full_dataset_report_matches_reference() {
    let ds = generate(&SynthSpec::gaussian_mixture(3, 50, 4, 2, 0.3, 8))
        .unwrap()
        .dataset;
    let all: Vec<usize> = (0..50).collect();
    let report = analyze(&all, &ds, SizeThresholds::default()).unwrap();
    assert!(report.kl_to_reference.abs() < 1e-12);
    assert!(report.class_kl_to_reference.abs() < 1e-12);
    assert_eq!(report.size_ratio, report.reference_size_ratio);
}

#[test]
fn coverage_grows_with_the_subset() {
    let ds = generate(&SynthSpec::gaussian_mixture(3, 60, 5, 2, 0.3, 9))
        .unwrap()
        .dataset;
    let mut last = f64::NEG_INFINITY;
    let mut subset = Vec::new();
    for id in [5, 17, 3, 40, 22, 59, 0, 11] {
        subset.push(id);
        let v = coverage_objective(&subset, &ds).unwrap();
        assert!(v >= last - 1e-12);
        assert!(v > -1.0 - 1e-12 && v <= 1.0 + 1e-12);
        last = v;
    }
    let all: Vec<usize> = (0..60).collect();
    assert!(coverage_objective(&all, &ds).unwrap() >= last);
    assert!(coverage_objective(&[], &ds).is_err());
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, 2..6).prop_map(|v| {
        let s: f64 = v.iter().sum();
        v.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn kl_is_nonnegative_and_zero_on_itself(p in distribution(), seed in 0u64..1000) {
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
        let mut q = p.clone();
        q.rotate_left((seed as usize) % p.len());
        prop_assert!(kl_divergence(&p, &q).unwrap() >= -1e-12);
    }
}
