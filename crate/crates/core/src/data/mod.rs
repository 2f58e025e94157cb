//! Synthetic shape dataset, dataset directory I/O and training augmentation.

mod shapes;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use shapes::Shape;

use crate::corruptions::rotate;
use crate::error::{Error, Result};
use crate::geometry::{normalize_unit_sphere, Point, PointCloud};
use crate::io::{write_atomic, Reader};
use crate::rng::{child_seed, named_seed, stream, Stream};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCloud {
    pub cloud: PointCloud,
    pub label: usize,
    pub sample_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Number of shape classes, taken in order from [`Shape::ALL`].
    pub classes: usize,
    pub points_per_cloud: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { classes: 8, points_per_cloud: 256, train_size: 800, test_size: 200, seed: 0 }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=Shape::ALL.len()).contains(&self.classes) {
            return Err(Error::BadConfig(format!("classes must be in 2..=8, got {}", self.classes)));
        }
        if self.points_per_cloud < 64 {
            return Err(Error::BadConfig(format!("points_per_cloud must be at least 64, got {}", self.points_per_cloud)));
        }
        if self.train_size < self.classes || self.test_size < self.classes {
            return Err(Error::BadConfig("train_size and test_size must each be at least the class count".into()));
        }
        Ok(())
    }
}

/// Largest pose perturbation applied to generated shapes, in degrees.
pub const MAX_POSE_DEGREES: f64 = 10.0;

fn generate_sample(shape: Shape, n: usize, rng: &mut Stream) -> Result<PointCloud> {
    let pts = shape.sample(n, rng);
    let axis = {
        let v: Point = std::array::from_fn(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, rng));
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt().max(1e-12);
        v.map(|c| c / norm)
    };
    let angle = rng.random_range(0.0..=MAX_POSE_DEGREES.to_radians());
    let posed: Vec<Point> = pts.iter().map(|p| rotate(p, &axis, angle)).collect();
    normalize_unit_sphere(&PointCloud::new(posed)?)
}

fn generate_split(config: &DatasetConfig, split: &str, size: usize) -> Result<Vec<LabeledCloud>> {
    let seed = named_seed(config.seed, split);
    (0..size)
        .map(|i| {
            let label = i % config.classes;
            let mut rng = stream(child_seed(seed, i as u64));
            Ok(LabeledCloud {
                cloud: generate_sample(Shape::ALL[label], config.points_per_cloud, &mut rng)?,
                label,
                sample_id: format!("{split}_{i:05}"),
            })
        })
        .collect()
}

/// Class-balanced train and test splits; sample `i` has label `i % classes`.
pub fn generate_dataset(config: &DatasetConfig) -> Result<(Vec<LabeledCloud>, Vec<LabeledCloud>)> {
    config.validate()?;
    Ok((generate_split(config, "train", config.train_size)?, generate_split(config, "test", config.test_size)?))
}

pub const SCALE_RANGE: (f64, f64) = (2.0 / 3.0, 1.5);
pub const TRANSLATE_RANGE: (f64, f64) = (-0.2, 0.2);

/// Anisotropic scaling followed by translation, point order preserved.
pub fn augment_with(cloud: &PointCloud, scale: [f64; 3], translate: [f64; 3]) -> Result<PointCloud> {
    PointCloud::new(cloud.points().iter().map(|p| std::array::from_fn(|d| p[d] * scale[d] + translate[d])).collect())
}

/// Random per-axis scaling in `[2/3, 3/2]` and translation in `[-0.2, 0.2]`.
pub fn augment(cloud: &PointCloud, rng: &mut Stream) -> Result<PointCloud> {
    let scale = std::array::from_fn(|_| rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1));
    let translate = std::array::from_fn(|_| rng.random_range(TRANSLATE_RANGE.0..=TRANSLATE_RANGE.1));
    augment_with(cloud, scale, translate)
}

pub const CLOUD_MAGIC: &[u8; 4] = b"EPCD";
pub const CLOUD_VERSION: u32 = 1;
pub const LABELS_FILE: &str = "labels.csv";
pub const CLOUD_EXTENSION: &str = "epcd";

pub fn cloud_to_bytes(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 12 * cloud.len());
    out.extend_from_slice(CLOUD_MAGIC);
    out.extend_from_slice(&CLOUD_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    for p in cloud.points() {
        for &c in p {
            out.extend_from_slice(&(c as f32).to_le_bytes());
        }
    }
    out
}

pub fn cloud_from_bytes(bytes: &[u8], origin: &Path) -> Result<PointCloud> {
    let mut r = Reader::new(bytes, origin);
    let magic = r.take(4)?;
    if magic != CLOUD_MAGIC {
        return Err(Error::format(origin, 0, format!("unknown magic {:?}", String::from_utf8_lossy(magic))));
    }
    let version = r.u32()?;
    if version != CLOUD_VERSION {
        return Err(Error::format(origin, 4, format!("unsupported cloud version {version}")));
    }
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(Error::format(origin, 8, "empty cloud"));
    }
    let mut pts = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let at = r.offset();
        let p: Point = [f64::from(r.f32()?), f64::from(r.f32()?), f64::from(r.f32()?)];
        if p.iter().any(|c| !c.is_finite()) {
            return Err(Error::format(origin, at, "non-finite coordinate"));
        }
        pts.push(p);
    }
    r.finish()?;
    PointCloud::new(pts)
}

fn check_sample_id(id: &str) -> Result<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')) && id != "." && id != "..";
    if ok {
        Ok(())
    } else {
        Err(Error::BadConfig(format!("sample id {id:?} is not a safe file name")))
    }
}

/// Writes `labels.csv` and one `<sample_id>.epcd` file per sample.
pub fn save_dataset(dir: &Path, samples: &[LabeledCloud]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from("sample_id,label\n");
    for s in samples {
        check_sample_id(&s.sample_id)?;
        writeln!(csv, "{},{}", s.sample_id, s.label).unwrap();
        write_atomic(&dir.join(format!("{}.{CLOUD_EXTENSION}", s.sample_id)), &cloud_to_bytes(&s.cloud))?;
    }
    write_atomic(&dir.join(LABELS_FILE), csv.as_bytes())
}

/// Reads a dataset directory as written by [`save_dataset`]. Coordinates
/// are returned exactly as stored (32-bit values widened to 64-bit).
pub fn load_dataset(dir: &Path) -> Result<Vec<LabeledCloud>> {
    let labels_path = dir.join(LABELS_FILE);
    let text = std::fs::read_to_string(&labels_path).map_err(|e| Error::io(&labels_path, e))?;
    let mut lines = text.lines();
    let mut offset = 0u64;
    match lines.next() {
        Some(h) if h.trim() == "sample_id,label" => offset += h.len() as u64 + 1,
        _ => return Err(Error::format(&labels_path, 0, "expected header 'sample_id,label'")),
    }
    let mut out = Vec::new();
    for line in lines {
        let at = offset;
        offset += line.len() as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (id, label) = line
            .split_once(',')
            .ok_or_else(|| Error::format(&labels_path, at, format!("malformed row {line:?}")))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::format(&labels_path, at, format!("bad label {label:?}")))?;
        let id = id.trim();
        check_sample_id(id)?;
        let path = dir.join(format!("{id}.{CLOUD_EXTENSION}"));
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        out.push(LabeledCloud { cloud: cloud_from_bytes(&bytes, &path)?, label, sample_id: id.to_string() });
    }
    if out.is_empty() {
        return Err(Error::EmptyEval);
    }
    Ok(out)
}

/// Loads a dataset and normalizes every cloud to the unit sphere.
pub fn ingest_dataset(dir: &Path) -> Result<Vec<LabeledCloud>> {
    load_dataset(dir)?
        .into_iter()
        .map(|s| Ok(LabeledCloud { cloud: normalize_unit_sphere(&s.cloud)?, ..s }))
        .collect()
}

/// Number of classes implied by the labels (max label + 1).
pub fn class_count(samples: &[LabeledCloud]) -> usize {
    samples.iter().map(|s| s.label + 1).max().unwrap_or(0)
}
