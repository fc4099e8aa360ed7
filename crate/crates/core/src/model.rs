//! Domain types and the two on-disk interchange formats: a JSON manifest of
//! annotations and a little-endian binary matrix of per-object features.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 8] = b"CSODFEAT";
pub const FEATURE_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub left: f64,
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
}

impl BoundingBox {
    pub fn new(left: f64, top: f64, right: f64, bottom: f64) -> Self {
        Self {
            left,
            top,
            right,
            bottom,
        }
    }

    pub fn from_array([left, top, right, bottom]: [f64; 4]) -> Self {
        Self::new(left, top, right, bottom)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.left, self.top, self.right, self.bottom]
    }

    pub fn is_valid(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite()) && self.left < self.right && self.top < self.bottom
    }

    pub fn width(&self) -> f64 {
        self.right - self.left
    }

    pub fn height(&self) -> f64 {
        self.bottom - self.top
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectRecord {
    pub image_id: usize,
    pub class_id: usize,
    pub bbox: BoundingBox,
    pub feature_row: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: usize,
    pub objects: Vec<ObjectRecord>,
}

impl ImageRecord {
    /// Distinct classes present in the image, ascending.
    pub fn classes(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.objects.iter().map(|o| o.class_id).collect();
        set.into_iter().collect()
    }

    pub fn contains_class(&self, class_id: usize) -> bool {
        self.objects.iter().any(|o| o.class_id == class_id)
    }
}

/// Annotation metadata. `images` keeps file order; `image(id)` resolves by id.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub num_classes: usize,
    pub class_names: Vec<String>,
    images: Vec<ImageRecord>,
    position: Vec<usize>,
}

impl DatasetManifest {
    /// Validates the manifest on its own (row references are checked against
    /// the feature store in [`Dataset::new`]).
    pub fn new(num_classes: usize, class_names: Vec<String>, images: Vec<ImageRecord>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Format("num_classes must be positive".into()));
        }
        if class_names.len() != num_classes {
            return Err(Error::Format(format!(
                "class_names has {} entries, num_classes is {}",
                class_names.len(),
                num_classes
            )));
        }
        let num_images = images.len();
        let mut position = vec![usize::MAX; num_images];
        for (pos, image) in images.iter().enumerate() {
            if image.id >= num_images || position[image.id] != usize::MAX {
                return Err(Error::BadImageId {
                    found: image.id,
                    num_images,
                });
            }
            position[image.id] = pos;
            if image.objects.is_empty() {
                return Err(Error::EmptyImage(image.id));
            }
            for obj in &image.objects {
                if obj.image_id != image.id {
                    return Err(Error::Format(format!(
                        "object listed under image {} claims image {}",
                        image.id, obj.image_id
                    )));
                }
                if obj.class_id >= num_classes {
                    return Err(Error::BadClass {
                        image_id: image.id,
                        class_id: obj.class_id,
                        num_classes,
                    });
                }
                if !obj.bbox.is_valid() {
                    return Err(Error::BadBox {
                        image_id: image.id,
                        bbox: obj.bbox.to_array(),
                    });
                }
            }
        }
        Ok(Self {
            num_classes,
            class_names,
            images,
            position,
        })
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_objects(&self) -> usize {
        self.images.iter().map(|i| i.objects.len()).sum()
    }

    /// Images in file order.
    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn image(&self, id: usize) -> Option<&ImageRecord> {
        self.position.get(id).map(|&p| &self.images[p])
    }

    /// Images in ascending id order.
    pub fn images_by_id(&self) -> impl Iterator<Item = &ImageRecord> + '_ {
        self.position.iter().map(move |&p| &self.images[p])
    }

    pub fn objects(&self) -> impl Iterator<Item = &ObjectRecord> + '_ {
        self.images.iter().flat_map(|i| i.objects.iter())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = fs::read(path)?;
        Self::from_json_slice(&bytes)
    }

    pub fn from_json_slice(bytes: &[u8]) -> Result<Self> {
        let file: ManifestFile = serde_json::from_slice(bytes)?;
        if file.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} (expected {MANIFEST_VERSION})",
                file.version
            )));
        }
        let images = file
            .images
            .into_iter()
            .map(|entry| ImageRecord {
                id: entry.id,
                objects: entry
                    .objects
                    .into_iter()
                    .map(|o| ObjectRecord {
                        image_id: entry.id,
                        class_id: o.class,
                        bbox: BoundingBox::from_array(o.bbox),
                        feature_row: o.row,
                    })
                    .collect(),
            })
            .collect();
        Self::new(file.num_classes, file.class_names, images)
    }

    pub fn to_json_vec(&self) -> Result<Vec<u8>> {
        let file = ManifestFile {
            version: MANIFEST_VERSION,
            num_classes: self.num_classes,
            class_names: self.class_names.clone(),
            images: self
                .images
                .iter()
                .map(|img| ImageEntry {
                    id: img.id,
                    objects: img
                        .objects
                        .iter()
                        .map(|o| ObjectEntry {
                            class: o.class_id,
                            bbox: o.bbox.to_array(),
                            row: o.feature_row,
                        })
                        .collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_vec(&file)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_vec()?)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestFile {
    version: u32,
    num_classes: usize,
    class_names: Vec<String>,
    images: Vec<ImageEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ImageEntry {
    id: usize,
    objects: Vec<ObjectEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectEntry {
    class: usize,
    #[serde(rename = "box")]
    bbox: [f64; 4],
    row: usize,
}

/// Dense row-major matrix of raw (unnormalized) f32 feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    data: Vec<f32>,
}

impl FeatureStore {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("feature dim must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Format(format!(
                "{} values do not form rows of width {dim}",
                data.len()
            )));
        }
        let store = Self { dim, data };
        for r in 0..store.num_rows() {
            let row = store.row(r);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteRow(r));
            }
            if row.iter().all(|&v| v == 0.0) {
                return Err(Error::ZeroRow(r));
            }
        }
        Ok(store)
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dim = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::DimensionMismatch(dim, r.len()));
            }
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "feature file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..8] != FEATURE_MAGIC {
            return Err(Error::Format("bad feature file magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FEATURE_VERSION {
            return Err(Error::Format(format!(
                "feature file version {version} (expected {FEATURE_VERSION})"
            )));
        }
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let rows = u64::from_le_bytes(bytes[16..24].try_into().unwrap());
        if dim == 0 {
            return Err(Error::Format("feature dim is zero".into()));
        }
        let expected = usize::try_from(rows)
            .ok()
            .and_then(|r| r.checked_mul(dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("feature header overflows".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::Format(format!(
                "feature body is {} bytes, header declares {rows}x{dim} (= {expected} bytes)",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(dim, data)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_rows() as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

/// A validated manifest paired with the features its objects reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub features: FeatureStore,
}

impl Dataset {
    pub fn new(manifest: DatasetManifest, features: FeatureStore) -> Result<Self> {
        let row_count = features.num_rows();
        let mut seen = vec![false; row_count];
        for obj in manifest.objects() {
            let row = obj.feature_row;
            if row >= row_count {
                return Err(Error::DanglingRow {
                    image_id: obj.image_id,
                    row,
                    row_count,
                });
            }
            if std::mem::replace(&mut seen[row], true) {
                return Err(Error::DuplicateRow(row));
            }
        }
        let objects = manifest.num_objects();
        if objects != row_count {
            return Err(Error::Format(format!(
                "manifest has {objects} objects, feature file has {row_count} rows"
            )));
        }
        Ok(Self { manifest, features })
    }

    pub fn load(manifest_path: impl AsRef<Path>, feature_path: impl AsRef<Path>) -> Result<Self> {
        let features = FeatureStore::read(feature_path)?;
        let manifest = DatasetManifest::read(manifest_path)?;
        Self::new(manifest, features)
    }

    pub fn save(&self, manifest_path: impl AsRef<Path>, feature_path: impl AsRef<Path>) -> Result<()> {
        self.manifest.write(manifest_path)?;
        self.features.write(feature_path)
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    pub fn num_images(&self) -> usize {
        self.manifest.num_images()
    }

    pub fn num_objects(&self) -> usize {
        self.features.num_rows()
    }

    pub fn dim(&self) -> usize {
        self.features.dim()
    }

    pub fn feature(&self, obj: &ObjectRecord) -> &[f32] {
        self.features.row(obj.feature_row)
    }
}

pub fn dot<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum()
}

pub fn norm<T: Copy + Into<f64>>(a: &[T]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity accumulated in f64.
pub fn cosine<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

pub(crate) fn unit(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroNorm);
    }
    Ok(v.iter().map(|x| x / n).collect())
}
