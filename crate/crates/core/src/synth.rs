//! Seeded multi-object dataset generator with known cluster structure.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoundingBox, Dataset, DatasetManifest, FeatureStore, ImageRecord, ObjectRecord};

/// Side length of the square canvas boxes are placed on.
pub const CANVAS: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub num_images: usize,
    pub dim: usize,
    /// Inclusive range of objects per present class in an image.
    pub objects_per_class: (usize, usize),
    pub class_presence_prob: Vec<f64>,
    /// Per class, one or more unit-length cluster centers.
    pub cluster_centers: Vec<Vec<Vec<f64>>>,
    /// Per class cluster probabilities; uniform when `None`.
    pub cluster_weights: Option<Vec<Vec<f64>>>,
    /// Whether all objects of one class in one image share a cluster.
    pub shared_cluster_per_image: bool,
    pub cluster_spread: f64,
    /// Log-uniform box area range, inclusive.
    pub box_area_range: (f64, f64),
    pub seed: u64,
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl SynthSpec {
    /// Random unit cluster centers drawn from `seed`, uniform cluster weights,
    /// presence probability `min(1, 3 / num_classes)` for every class.
    pub fn gaussian_mixture(
        num_classes: usize,
        num_images: usize,
        dim: usize,
        clusters_per_class: usize,
        spread: f64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c3a7_e75e_ed00);
        let cluster_centers = (0..num_classes)
            .map(|_| (0..clusters_per_class).map(|_| random_unit(&mut rng, dim)).collect())
            .collect();
        let p = (3.0 / num_classes.max(1) as f64).min(1.0);
        Self {
            num_classes,
            num_images,
            dim,
            objects_per_class: (1, 3),
            class_presence_prob: vec![p; num_classes],
            cluster_centers,
            cluster_weights: None,
            shared_cluster_per_image: true,
            cluster_spread: spread,
            box_area_range: (64.0, 250_000.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_classes == 0 || self.num_images == 0 {
            return bad("need at least one class and one image".into());
        }
        if self.dim < 2 {
            return bad(format!("dim {} < 2", self.dim));
        }
        let (lo, hi) = self.objects_per_class;
        if lo == 0 || lo > hi {
            return bad(format!("objects per class range {lo}..={hi}"));
        }
        if self.class_presence_prob.len() != self.num_classes
            || self.class_presence_prob.iter().any(|p| !(0.0..=1.0).contains(p))
            || self.class_presence_prob.iter().all(|&p| p == 0.0)
        {
            return bad("presence probabilities must be in [0, 1], one per class, not all zero".into());
        }
        if self.cluster_centers.len() != self.num_classes {
            return bad("one center list per class".into());
        }
        for (c, centers) in self.cluster_centers.iter().enumerate() {
            if centers.is_empty() {
                return bad(format!("class {c} has no cluster center"));
            }
            if centers
                .iter()
                .any(|v| v.len() != self.dim || v.iter().all(|&x| x == 0.0))
            {
                return bad(format!("class {c} has a center of the wrong width or zero norm"));
            }
        }
        if let Some(w) = &self.cluster_weights {
            let ok = w.len() == self.num_classes
                && w.iter().zip(&self.cluster_centers).all(|(wc, cc)| {
                    wc.len() == cc.len() && wc.iter().all(|&x| x >= 0.0) && wc.iter().sum::<f64>() > 0.0
                });
            if !ok {
                return bad("cluster weights must match the centers and be non-negative".into());
            }
        }
        if !(self.cluster_spread.is_finite() && self.cluster_spread >= 0.0) {
            return bad(format!("spread {}", self.cluster_spread));
        }
        let (amin, amax) = self.box_area_range;
        if !(amin > 0.0 && amin <= amax && amax <= CANVAS * CANVAS) {
            return bad(format!("box area range {amin}..={amax}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub class: usize,
    pub cluster: usize,
    pub row: usize,
}

/// image id -> objects with their generating cluster.
pub type GroundTruth = BTreeMap<usize, Vec<TruthEntry>>;

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub truth: GroundTruth,
}

impl SynthOutput {
    pub fn write(
        &self,
        manifest_path: impl AsRef<Path>,
        feature_path: impl AsRef<Path>,
        truth_path: Option<&Path>,
    ) -> Result<()> {
        self.dataset.save(manifest_path, feature_path)?;
        if let Some(p) = truth_path {
            fs::write(p, serde_json::to_vec(&self.truth)?)?;
        }
        Ok(())
    }
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: Option<&[f64]>, n: usize) -> usize {
    match weights {
        None => rng.random_range(0..n),
        Some(w) => {
            let total: f64 = w.iter().sum();
            let mut u = rng.random::<f64>() * total;
            for (k, &x) in w.iter().enumerate() {
                if u < x {
                    return k;
                }
                u -= x;
            }
            w.iter().rposition(|&x| x > 0.0).unwrap_or(0)
        }
    }
}

fn random_box(rng: &mut ChaCha8Rng, (amin, amax): (f64, f64)) -> BoundingBox {
    let area = (rng.random_range(0.0..=1.0) * (amax.ln() - amin.ln()) + amin.ln()).exp();
    let aspect = (rng.random_range(-1.0..=1.0) * 2f64.ln()).exp();
    let w = (area * aspect).sqrt().clamp(1.0, CANVAS);
    let h = (area / w).clamp(1.0, CANVAS);
    let left = rng.random_range(0.0..=CANVAS - w);
    let top = rng.random_range(0.0..=CANVAS - h);
    BoundingBox::new(left, top, left + w, top + h)
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.cluster_spread.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rows: Vec<f32> = Vec::new();
    let mut images = Vec::with_capacity(spec.num_images);
    let mut truth = GroundTruth::new();
    let mut next_row = 0usize;
    for image_id in 0..spec.num_images {
        let present = loop {
            let set: Vec<usize> = (0..spec.num_classes)
                .filter(|&c| rng.random_bool(spec.class_presence_prob[c]))
                .collect();
            if !set.is_empty() {
                break set;
            }
        };
        let mut objects = Vec::new();
        let mut entries = Vec::new();
        for class in present {
            let centers = &spec.cluster_centers[class];
            let weights = spec.cluster_weights.as_ref().map(|w| w[class].as_slice());
            let count = rng.random_range(spec.objects_per_class.0..=spec.objects_per_class.1);
            let shared = pick_weighted(&mut rng, weights, centers.len());
            for _ in 0..count {
                let cluster = if spec.shared_cluster_per_image {
                    shared
                } else {
                    pick_weighted(&mut rng, weights, centers.len())
                };
                let feature = loop {
                    let f: Vec<f32> = centers[cluster]
                        .iter()
                        .map(|&x| {
                            let eps = if spec.cluster_spread > 0.0 {
                                noise.sample(&mut rng)
                            } else {
                                0.0
                            };
                            (x + eps) as f32
                        })
                        .collect();
                    if f.iter().any(|&v| v != 0.0) {
                        break f;
                    }
                };
                rows.extend_from_slice(&feature);
                objects.push(ObjectRecord {
                    image_id,
                    class_id: class,
                    bbox: random_box(&mut rng, spec.box_area_range),
                    feature_row: next_row,
                });
                entries.push(TruthEntry {
                    class,
                    cluster,
                    row: next_row,
                });
                next_row += 1;
            }
        }
        images.push(ImageRecord { id: image_id, objects });
        truth.insert(image_id, entries);
    }
    let names = (0..spec.num_classes).map(|c| format!("class_{c}")).collect();
    let manifest = DatasetManifest::new(spec.num_classes, names, images)?;
    let features = FeatureStore::new(spec.dim, rows)?;
    Ok(SynthOutput {
        dataset: Dataset::new(manifest, features)?,
        truth,
    })
}
