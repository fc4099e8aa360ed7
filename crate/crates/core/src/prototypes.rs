//! Candidate construction: imagewise-classwise mean features, the objectwise
//! passthrough, whole-class prototypes and per-image size-bucket means.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{SizeBucket, SizeThresholds};
use crate::model::{cosine, Dataset, ObjectRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateMode {
    #[default]
    Imagewise,
    Objectwise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prototype {
    pub image_id: usize,
    pub class_id: usize,
    pub vector: Vec<f64>,
    pub member_count: usize,
    /// Source feature rows, ascending.
    pub member_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct PrototypeIndex {
    mode: CandidateMode,
    by_class: Vec<Vec<Prototype>>,
    by_image: Vec<BTreeMap<usize, usize>>,
    members: Vec<Vec<(usize, usize)>>,
}

impl PrototypeIndex {
    fn from_groups(
        mode: CandidateMode,
        num_classes: usize,
        num_images: usize,
        mut by_class: Vec<Vec<Prototype>>,
    ) -> Self {
        for protos in &mut by_class {
            protos.sort_by_key(|p| (p.image_id, p.member_rows[0]));
        }
        let mut by_image = vec![BTreeMap::new(); num_images];
        let mut members = vec![Vec::new(); num_images];
        for (class_id, protos) in by_class.iter().enumerate() {
            for (pos, p) in protos.iter().enumerate() {
                by_image[p.image_id].entry(class_id).or_insert(pos);
                members[p.image_id].push((class_id, pos));
            }
        }
        debug_assert_eq!(by_class.len(), num_classes);
        Self {
            mode,
            by_class,
            by_image,
            members,
        }
    }

    pub fn mode(&self) -> CandidateMode {
        self.mode
    }

    pub fn num_classes(&self) -> usize {
        self.by_class.len()
    }

    pub fn num_images(&self) -> usize {
        self.by_image.len()
    }

    /// Prototypes of one class, sorted by image id.
    pub fn class(&self, class_id: usize) -> &[Prototype] {
        &self.by_class[class_id]
    }

    pub fn get(&self, image_id: usize, class_id: usize) -> Option<&Prototype> {
        let pos = *self.by_image.get(image_id)?.get(&class_id)?;
        Some(&self.by_class[class_id][pos])
    }

    /// Every `(class, position)` pair belonging to an image, ascending.
    pub fn image_members(&self, image_id: usize) -> &[(usize, usize)] {
        &self.members[image_id]
    }

    pub fn len(&self) -> usize {
        self.by_class.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Prototype> + '_ {
        self.by_class.iter().flatten()
    }
}

pub fn build(dataset: &Dataset, mode: CandidateMode) -> PrototypeIndex {
    match mode {
        CandidateMode::Imagewise => build_imagewise(dataset),
        CandidateMode::Objectwise => build_objectwise(dataset),
    }
}

fn mean_of_rows(dataset: &Dataset, rows: &[usize]) -> Vec<f64> {
    let mut acc = vec![0.0f64; dataset.dim()];
    for &r in rows {
        for (a, &v) in acc.iter_mut().zip(dataset.features.row(r)) {
            *a += f64::from(v);
        }
    }
    let n = rows.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

pub fn build_imagewise(dataset: &Dataset) -> PrototypeIndex {
    let mut by_class = vec![Vec::new(); dataset.num_classes()];
    for image in dataset.manifest.images_by_id() {
        let mut rows_by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for obj in &image.objects {
            rows_by_class.entry(obj.class_id).or_default().push(obj.feature_row);
        }
        for (class_id, mut rows) in rows_by_class {
            rows.sort_unstable();
            by_class[class_id].push(Prototype {
                image_id: image.id,
                class_id,
                vector: mean_of_rows(dataset, &rows),
                member_count: rows.len(),
                member_rows: rows,
            });
        }
    }
    PrototypeIndex::from_groups(
        CandidateMode::Imagewise,
        dataset.num_classes(),
        dataset.num_images(),
        by_class,
    )
}

pub fn build_objectwise(dataset: &Dataset) -> PrototypeIndex {
    let mut by_class = vec![Vec::new(); dataset.num_classes()];
    for obj in dataset.manifest.objects() {
        by_class[obj.class_id].push(Prototype {
            image_id: obj.image_id,
            class_id: obj.class_id,
            vector: dataset.feature(obj).iter().map(|&v| f64::from(v)).collect(),
            member_count: 1,
            member_rows: vec![obj.feature_row],
        });
    }
    PrototypeIndex::from_groups(
        CandidateMode::Objectwise,
        dataset.num_classes(),
        dataset.num_images(),
        by_class,
    )
}

/// Mean over every object of the class in the dataset, not a mean of
/// imagewise means.
pub fn class_prototype(dataset: &Dataset, class_id: usize) -> Result<Vec<f64>> {
    let mut rows: Vec<usize> = dataset
        .manifest
        .objects()
        .filter(|o| o.class_id == class_id)
        .map(|o| o.feature_row)
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyClass(class_id));
    }
    rows.sort_unstable();
    Ok(mean_of_rows(dataset, &rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizewisePrototype {
    pub image_id: usize,
    pub bucket: SizeBucket,
    pub vector: Vec<f64>,
    pub count: usize,
}

pub fn sizewise_prototypes(dataset: &Dataset, class_id: usize, thresholds: SizeThresholds) -> Vec<SizewisePrototype> {
    let mut out = Vec::new();
    for image in dataset.manifest.images_by_id() {
        let mut buckets: BTreeMap<SizeBucket, Vec<usize>> = BTreeMap::new();
        for obj in image.objects.iter().filter(|o| o.class_id == class_id) {
            buckets
                .entry(thresholds.bucket(obj.bbox.area()))
                .or_default()
                .push(obj.feature_row);
        }
        for (bucket, mut rows) in buckets {
            rows.sort_unstable();
            out.push(SizewisePrototype {
                image_id: image.id,
                bucket,
                vector: mean_of_rows(dataset, &rows),
                count: rows.len(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CountBin {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2-4")]
    TwoToFour,
    #[serde(rename = "5+")]
    FiveOrMore,
}

impl CountBin {
    pub fn of(count: usize) -> Self {
        match count {
            0 | 1 => Self::One,
            2..=4 => Self::TwoToFour,
            _ => Self::FiveOrMore,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizewiseGroup {
    pub size: SizeBucket,
    pub count_bin: CountBin,
    pub mean_cosine: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizewiseReport {
    pub class_id: usize,
    pub groups: Vec<SizewiseGroup>,
}

/// Cosine between the class prototype and each image's size-bucket prototype,
/// averaged per (bucket, object-count bin). `images` restricts which images
/// contribute; the class prototype always uses the whole dataset.
pub fn sizewise_report(
    dataset: &Dataset,
    class_id: usize,
    thresholds: SizeThresholds,
    images: Option<&[usize]>,
) -> Result<SizewiseReport> {
    let center = class_prototype(dataset, class_id)?;
    let keep: Option<std::collections::BTreeSet<usize>> = images.map(|ids| ids.iter().copied().collect());
    let mut groups: BTreeMap<(SizeBucket, CountBin), (f64, usize)> = BTreeMap::new();
    for sp in sizewise_prototypes(dataset, class_id, thresholds) {
        if keep.as_ref().is_some_and(|k| !k.contains(&sp.image_id)) {
            continue;
        }
        let c = cosine(&center, &sp.vector)?;
        let entry = groups.entry((sp.bucket, CountBin::of(sp.count))).or_default();
        entry.0 += c;
        entry.1 += 1;
    }
    Ok(SizewiseReport {
        class_id,
        groups: groups
            .into_iter()
            .map(|((size, count_bin), (sum, n))| SizewiseGroup {
                size,
                count_bin,
                mean_cosine: sum / n as f64,
                n,
            })
            .collect(),
    })
}

/// Mean of the whole image's object features, used by image-level baselines.
pub fn image_feature(dataset: &Dataset, objects: &[ObjectRecord]) -> Vec<f64> {
    let mut rows: Vec<usize> = objects.iter().map(|o| o.feature_row).collect();
    rows.sort_unstable();
    mean_of_rows(dataset, &rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, DatasetManifest, FeatureStore, ImageRecord};

    fn obj(image_id: usize, class_id: usize, side: f64, row: usize) -> ObjectRecord {
        ObjectRecord {
            image_id,
            class_id,
            bbox: BoundingBox::new(0.0, 0.0, side, side),
            feature_row: row,
        }
    }

    fn dataset(images: Vec<Vec<(usize, f64)>>, rows: Vec<Vec<f32>>, classes: usize) -> Dataset {
        let mut row = 0;
        let images = images
            .into_iter()
            .enumerate()
            .map(|(id, objs)| ImageRecord {
                id,
                objects: objs
                    .into_iter()
                    .map(|(c, side)| {
                        row += 1;
                        obj(id, c, side, row - 1)
                    })
                    .collect(),
            })
            .collect();
        let names = (0..classes).map(|c| format!("c{c}")).collect();
        Dataset::new(
            DatasetManifest::new(classes, names, images).unwrap(),
            FeatureStore::from_rows(&rows).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn single_object_prototype() {
        let ds = dataset(vec![vec![(0, 10.0)]], vec![vec![2.0, 4.0]], 1);
        let idx = build_imagewise(&ds);
        let p = idx.get(0, 0).unwrap();
        assert_eq!(p.vector, vec![2.0, 4.0]);
        assert_eq!(p.member_count, 1);
    }

    #[test]
    fn two_object_mean() {
        let ds = dataset(
            vec![vec![(0, 10.0), (0, 10.0)]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1,
        );
        let p = build_imagewise(&ds).get(0, 0).unwrap().clone();
        assert_eq!(p.vector, vec![0.5, 0.5]);
        assert_eq!(p.member_count, 2);
        assert_eq!(p.member_rows, vec![0, 1]);
    }

    #[test]
    fn objectwise_keeps_every_object() {
        let ds = dataset(
            vec![vec![(0, 10.0), (0, 10.0)], vec![(1, 5.0)]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            2,
        );
        let idx = build_objectwise(&ds);
        assert_eq!(idx.class(0).len(), 2);
        assert!(idx.class(0).iter().all(|p| p.image_id == 0));
        assert_eq!(idx.len(), ds.num_objects());
        assert_eq!(idx.image_members(0), &[(0, 0), (0, 1)]);
        assert_eq!(idx.get(0, 0).unwrap().member_rows, vec![0]);
    }

    #[test]
    fn objectwise_equals_imagewise_for_singletons() {
        let ds = dataset(
            vec![vec![(0, 10.0), (1, 10.0)], vec![(1, 5.0)]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            2,
        );
        let a = build_imagewise(&ds);
        let b = build_objectwise(&ds);
        for c in 0..2 {
            assert_eq!(a.class(c), b.class(c));
        }
    }

    #[test]
    fn class_prototype_is_objectwise_mean() {
        // image 0 has two objects, image 1 one; the mean is over three objects.
        let ds = dataset(
            vec![vec![(0, 10.0), (0, 10.0)], vec![(0, 5.0)]],
            vec![vec![3.0, 0.0], vec![3.0, 0.0], vec![0.0, 3.0]],
            1,
        );
        assert_eq!(class_prototype(&ds, 0).unwrap(), vec![2.0, 1.0]);
        let ds = dataset(
            vec![vec![(0, 1.0)], vec![(0, 1.0)]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            2,
        );
        assert_eq!(class_prototype(&ds, 0).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(class_prototype(&ds, 1), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn sizewise_bucketing() {
        // areas 100 and 10000 with default thresholds
        let ds = dataset(
            vec![vec![(0, 10.0), (0, 100.0)]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            1,
        );
        let sp = sizewise_prototypes(&ds, 0, SizeThresholds::default());
        assert_eq!(sp.len(), 2);
        assert_eq!(sp[0].bucket, SizeBucket::Small);
        assert_eq!(sp[0].vector, vec![1.0, 0.0]);
        assert_eq!(sp[1].bucket, SizeBucket::Large);
        assert_eq!(sp[1].count, 1);
    }

    #[test]
    fn count_bins() {
        assert_eq!(CountBin::of(1), CountBin::One);
        assert_eq!(CountBin::of(4), CountBin::TwoToFour);
        assert_eq!(CountBin::of(5), CountBin::FiveOrMore);
    }
}
