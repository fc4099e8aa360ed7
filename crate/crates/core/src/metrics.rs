//! Subset analysis: box-size distributions, KL divergence, class-ratio entropy
//! and the coverage proxy objective. Entropies and divergences are in nats.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dot, unit, Dataset};
use crate::prototypes::build_imagewise;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeBucket {
    Small,
    Medium,
    Large,
}

impl SizeBucket {
    pub const ALL: [SizeBucket; 3] = [SizeBucket::Small, SizeBucket::Medium, SizeBucket::Large];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        }
    }
}

/// Area cutoffs: `area <= small_max` is small, `area <= medium_max` medium,
/// anything larger is large.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeThresholds {
    pub small_max: f64,
    pub medium_max: f64,
}

impl Default for SizeThresholds {
    fn default() -> Self {
        Self {
            small_max: 32.0 * 32.0,
            medium_max: 96.0 * 96.0,
        }
    }
}

impl SizeThresholds {
    pub fn new(small_max: f64, medium_max: f64) -> Result<Self> {
        if !(small_max > 0.0 && small_max < medium_max && medium_max.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "size thresholds need 0 < small ({small_max}) < medium ({medium_max})"
            )));
        }
        Ok(Self { small_max, medium_max })
    }

    pub fn bucket(&self, area: f64) -> SizeBucket {
        if area <= self.small_max {
            SizeBucket::Small
        } else if area <= self.medium_max {
            SizeBucket::Medium
        } else {
            SizeBucket::Large
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeRatio {
    pub histogram: [usize; 3],
    pub ratio: [f64; 3],
}

fn resolve_subset(subset: &[usize], dataset: &Dataset) -> Result<BTreeSet<usize>> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut out = BTreeSet::new();
    for &id in subset {
        if dataset.manifest.image(id).is_none() {
            return Err(Error::UnknownImage(id));
        }
        out.insert(id);
    }
    Ok(out)
}

fn normalize(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

pub fn size_ratio(subset: &[usize], dataset: &Dataset, thresholds: SizeThresholds) -> Result<SizeRatio> {
    let ids = resolve_subset(subset, dataset)?;
    let mut histogram = [0usize; 3];
    for &id in &ids {
        for obj in &dataset.manifest.image(id).unwrap().objects {
            histogram[thresholds.bucket(obj.bbox.area()).index()] += 1;
        }
    }
    let r = normalize(&histogram);
    Ok(SizeRatio {
        histogram,
        ratio: [r[0], r[1], r[2]],
    })
}

fn check_distribution(p: &[f64], name: &str) -> Result<()> {
    if p.iter().any(|&v| !v.is_finite() || v < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution(format!("{name} sums to {s}")));
    }
    Ok(())
}

/// `sum p_i ln(p_i / q_i)` with `0 ln(0/q) = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(p.len(), q.len()));
    }
    check_distribution(p, "p")?;
    check_distribution(q, "q")?;
    let mut kl = 0.0;
    for (i, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Err(Error::KlUndefined(i));
        }
        kl += pi * (pi / qi).ln();
    }
    Ok(kl.max(0.0))
}

/// Shannon entropy of normalized counts.
pub fn entropy(counts: &[usize]) -> Result<f64> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptySubset);
    }
    Ok(normalize(counts)
        .into_iter()
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum::<f64>()
        .max(0.0))
}

pub fn class_annotation_counts(subset: &[usize], dataset: &Dataset) -> Result<Vec<usize>> {
    let ids = resolve_subset(subset, dataset)?;
    let mut counts = vec![0usize; dataset.num_classes()];
    for &id in &ids {
        for obj in &dataset.manifest.image(id).unwrap().objects {
            counts[obj.class_id] += 1;
        }
    }
    Ok(counts)
}

pub fn class_ratio_entropy(subset: &[usize], dataset: &Dataset) -> Result<f64> {
    entropy(&class_annotation_counts(subset, dataset)?)
}

/// Precomputed unit vectors for repeated coverage evaluation on one dataset.
///
/// Coverage is a proxy for subset quality: the mean over every object in the
/// dataset of its best cosine to a same-class imagewise prototype drawn from
/// the subset. Objects of a class the subset does not contain score -1.
pub struct CoverageEvaluator {
    /// per class: unit object vectors
    objects: Vec<Vec<Vec<f64>>>,
    /// per image: (class, unit prototype)
    prototypes: Vec<Vec<(usize, Vec<f64>)>>,
    total_objects: usize,
}

impl CoverageEvaluator {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let mut objects = vec![Vec::new(); dataset.num_classes()];
        let mut rows: Vec<_> = dataset.manifest.objects().collect();
        rows.sort_by_key(|o| o.feature_row);
        for obj in rows {
            let v: Vec<f64> = dataset.feature(obj).iter().map(|&x| f64::from(x)).collect();
            objects[obj.class_id].push(unit(&v)?);
        }
        let index = build_imagewise(dataset);
        let mut prototypes = vec![Vec::new(); dataset.num_images()];
        for p in index.iter() {
            prototypes[p.image_id].push((p.class_id, unit(&p.vector)?));
        }
        Ok(Self {
            objects,
            prototypes,
            total_objects: dataset.num_objects(),
        })
    }

    pub fn evaluate(&self, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Err(Error::EmptySubset);
        }
        let mut per_class: Vec<Vec<&[f64]>> = vec![Vec::new(); self.objects.len()];
        let mut seen = BTreeSet::new();
        for &id in subset {
            let protos = self.prototypes.get(id).ok_or(Error::UnknownImage(id))?;
            if seen.insert(id) {
                for (c, v) in protos {
                    per_class[*c].push(v);
                }
            }
        }
        let mut total = 0.0;
        for (class_objects, chosen) in self.objects.iter().zip(&per_class) {
            for o in class_objects {
                let best = chosen.iter().map(|p| dot(o, p)).fold(-1.0f64, f64::max);
                total += best.clamp(-1.0, 1.0);
            }
        }
        Ok(total / self.total_objects as f64)
    }

    /// Coverage of one class's objects by a single image's prototype of that
    /// class, averaged over the class's objects.
    pub fn class_contribution(&self, image_id: usize, class_id: usize) -> Option<f64> {
        let (_, p) = self.prototypes.get(image_id)?.iter().find(|(c, _)| *c == class_id)?;
        let objs = &self.objects[class_id];
        Some(objs.iter().map(|o| dot(o, p)).sum::<f64>() / objs.len() as f64)
    }
}

pub fn coverage_objective(subset: &[usize], dataset: &Dataset) -> Result<f64> {
    CoverageEvaluator::new(dataset)?.evaluate(subset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetReport {
    pub image_count: usize,
    pub annotation_count: usize,
    pub size_histogram: [usize; 3],
    pub size_ratio: [f64; 3],
    pub reference_size_ratio: [f64; 3],
    pub per_class_annotation_counts: Vec<usize>,
    pub class_ratio_entropy: f64,
    /// KL(subset size ratio || whole-dataset size ratio)
    pub kl_to_reference: f64,
    /// KL(subset class ratio || whole-dataset class ratio)
    pub class_kl_to_reference: f64,
    pub coverage_objective: f64,
    pub units: String,
}

pub fn analyze(subset: &[usize], dataset: &Dataset, thresholds: SizeThresholds) -> Result<SubsetReport> {
    let ids: Vec<usize> = resolve_subset(subset, dataset)?.into_iter().collect();
    let all: Vec<usize> = (0..dataset.num_images()).collect();
    let sizes = size_ratio(&ids, dataset, thresholds)?;
    let reference = size_ratio(&all, dataset, thresholds)?;
    let class_counts = class_annotation_counts(&ids, dataset)?;
    let reference_classes = class_annotation_counts(&all, dataset)?;
    Ok(SubsetReport {
        image_count: ids.len(),
        annotation_count: sizes.histogram.iter().sum(),
        size_histogram: sizes.histogram,
        size_ratio: sizes.ratio,
        reference_size_ratio: reference.ratio,
        class_ratio_entropy: entropy(&class_counts)?,
        kl_to_reference: kl_divergence(&sizes.ratio, &reference.ratio)?,
        class_kl_to_reference: kl_divergence(&normalize(&class_counts), &normalize(&reference_classes))?,
        per_class_annotation_counts: class_counts,
        coverage_objective: coverage_objective(&ids, dataset)?,
        units: "nats".into(),
    })
}
