//! Test-only instance generators and from-scratch oracles. Nothing here calls
//! into the selection engine; prototypes and scores are recomputed directly
//! from dataset rows.

#![allow(dead_code)]

use std::collections::BTreeMap;

use csod_core::csod::TIE_TOLERANCE;
use csod_core::model::{BoundingBox, DatasetManifest, FeatureStore, ImageRecord, ObjectRecord};
use csod_core::{cosine, Dataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Builds a dataset from per-image `(class, side, feature)` triples. Rows are
/// assigned in listing order.
pub fn dataset_from(images: &[Vec<(usize, f64, Vec<f32>)>], num_classes: usize) -> Dataset {
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (id, objs) in images.iter().enumerate() {
        let objects = objs
            .iter()
            .map(|(c, side, f)| {
                rows.push(f.clone());
                ObjectRecord {
                    image_id: id,
                    class_id: *c,
                    bbox: BoundingBox::new(0.0, 0.0, *side, *side),
                    feature_row: rows.len() - 1,
                }
            })
            .collect();
        records.push(ImageRecord { id, objects });
    }
    let names = (0..num_classes).map(|c| format!("class_{c}")).collect();
    Dataset::new(
        DatasetManifest::new(num_classes, names, records).unwrap(),
        FeatureStore::from_rows(&rows).unwrap(),
    )
    .unwrap()
}

/// Random small instance: up to `max_images` images, up to `max_classes`
/// classes, feature width in `2..=max_dim`, 1..=4 objects per image. With
/// `nonnegative`, entries are drawn from [0, 1) instead of [-1, 1).
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_images: usize,
    max_classes: usize,
    max_dim: usize,
    nonnegative: bool,
) -> Dataset {
    let d = rng.random_range(1..=max_images);
    let c = rng.random_range(1..=max_classes);
    let dim = rng.random_range(2..=max_dim);
    let images: Vec<Vec<(usize, f64, Vec<f32>)>> = (0..d)
        .map(|_| {
            let k = rng.random_range(1..=4);
            (0..k)
                .map(|_| {
                    let f: Vec<f32> = (0..dim)
                        .map(|_| {
                            if nonnegative {
                                rng.random_range(0.01f32..1.0)
                            } else {
                                rng.random_range(-1.0f32..1.0)
                            }
                        })
                        .collect();
                    (rng.random_range(0..c), rng.random_range(5.0..200.0), f)
                })
                .collect()
        })
        .collect();
    dataset_from(&images, c)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Per-(image, class) mean by direct summation in f64.
pub fn brute_means(ds: &Dataset) -> BTreeMap<(usize, usize), Vec<f64>> {
    let mut sums: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    for img in ds.manifest.images() {
        for obj in &img.objects {
            let e = sums
                .entry((img.id, obj.class_id))
                .or_insert_with(|| (vec![0.0; ds.dim()], 0));
            for (a, &v) in e.0.iter_mut().zip(ds.features.row(obj.feature_row)) {
                *a += v as f64;
            }
            e.1 += 1;
        }
    }
    sums.into_iter()
        .map(|(k, (s, n))| (k, s.into_iter().map(|x| x / n as f64).collect()))
        .collect()
}

#[derive(Clone)]
struct Candidate {
    image_id: usize,
    key: usize,
    vector: Vec<f64>,
}

fn oracle_candidates(ds: &Dataset, objectwise: bool) -> Vec<Vec<Candidate>> {
    let mut per_class: Vec<Vec<Candidate>> = vec![Vec::new(); ds.num_classes()];
    if objectwise {
        for obj in ds.manifest.objects() {
            per_class[obj.class_id].push(Candidate {
                image_id: obj.image_id,
                key: obj.feature_row,
                vector: ds.features.row(obj.feature_row).iter().map(|&v| v as f64).collect(),
            });
        }
    } else {
        for ((image_id, class_id), vector) in brute_means(ds) {
            per_class[class_id].push(Candidate {
                image_id,
                key: 0,
                vector,
            });
        }
    }
    for c in &mut per_class {
        c.sort_by_key(|x| (x.image_id, x.key));
    }
    per_class
}

pub struct OracleOptions<'a> {
    pub target: usize,
    pub lambda: &'a dyn Fn(usize) -> f64,
    pub objectwise: bool,
    pub include_self: bool,
    pub excluded: &'a [usize],
}

/// Stepwise greedy that recomputes every score from scratch at every step.
pub fn oracle_greedy(ds: &Dataset, opts: &OracleOptions<'_>) -> Vec<usize> {
    let cands = oracle_candidates(ds, opts.objectwise);
    let mut pool: Vec<Vec<bool>> = cands
        .iter()
        .map(|cs| cs.iter().map(|c| !opts.excluded.contains(&c.image_id)).collect())
        .collect();
    let mut chosen: Vec<Vec<bool>> = cands.iter().map(|cs| vec![false; cs.len()]).collect();
    let mut picks = Vec::new();
    loop {
        let mut progressed = false;
        for c in 0..ds.num_classes() {
            if picks.len() >= opts.target {
                return picks;
            }
            let lambda = (opts.lambda)(c);
            let mut scores = Vec::new();
            for i in 0..cands[c].len() {
                if !pool[c][i] {
                    continue;
                }
                let mut rep = 0.0;
                let mut div = 0.0;
                for j in 0..cands[c].len() {
                    let s = cosine(&cands[c][i].vector, &cands[c][j].vector).unwrap();
                    if pool[c][j] && (opts.include_self || j != i) {
                        rep += s;
                    }
                    if chosen[c][j] {
                        div += s;
                    }
                }
                scores.push((i, lambda * rep - div));
            }
            if scores.is_empty() {
                continue;
            }
            // Lowest id among everything within rounding distance of the max.
            let max = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
            let q = chosen[c].iter().filter(|&&b| b).count();
            let tol = TIE_TOLERANCE * (1.0 + lambda.abs() * scores.len() as f64 + q as f64);
            let i = scores.iter().find(|s| s.1 >= max - tol).unwrap().0;
            let image = cands[c][i].image_id;
            picks.push(image);
            for (cc, cs) in cands.iter().enumerate() {
                for (j, cand) in cs.iter().enumerate() {
                    if cand.image_id == image && pool[cc][j] {
                        pool[cc][j] = false;
                        chosen[cc][j] = true;
                    }
                }
            }
            progressed = true;
        }
        if !progressed {
            return picks;
        }
    }
}

/// Whole-image mean features by direct summation, indexed by image id.
pub fn brute_image_features(ds: &Dataset) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; ds.dim()]; ds.num_images()];
    let mut counts = vec![0usize; ds.num_images()];
    for obj in ds.manifest.objects() {
        for (a, &v) in out[obj.image_id].iter_mut().zip(ds.features.row(obj.feature_row)) {
            *a += v as f64;
        }
        counts[obj.image_id] += 1;
    }
    for (v, n) in out.iter_mut().zip(counts) {
        v.iter_mut().for_each(|x| *x /= n as f64);
    }
    out
}

/// Facility-location value with the empty set covering every point at -1.
pub fn brute_facility_value(features: &[Vec<f64>], set: &[usize]) -> f64 {
    features
        .iter()
        .map(|x| {
            set.iter()
                .map(|&j| cosine(x, &features[j]).unwrap())
                .fold(-1.0, f64::max)
        })
        .sum()
}
