//! Datasets: IDX (MNIST) and CIFAR-10 binary readers, and seeded Gaussian blobs.

use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_LEN: usize = 1 + 3072;
pub const CIFAR_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("{path}: truncated file ({found} bytes, expected {expected})")]
    TruncatedFile { path: PathBuf, expected: usize, found: usize },
    #[error("{path}: label {label} is outside 0..{classes}")]
    LabelOutOfRange { path: PathBuf, label: usize, classes: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Feature rows scaled to `[0, 1]` with class labels in `0..n_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
    ) -> Result<Self, DataError> {
        if features.nrows() != labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(DataError::Invalid(format!("label {y} >= n_classes {n_classes}")));
        }
        if features.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(DataError::Invalid("features must lie in [0, 1]".into()));
        }
        Ok(Dataset { features, labels, n_classes, split })
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Widens the label space, e.g. when a test subset misses a class.
    pub fn with_n_classes(mut self, n_classes: usize) -> Self {
        self.n_classes = self.n_classes.max(n_classes);
        self
    }

    /// The first `n` samples (all of them if `n >= len`).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            features: self.features.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            n_classes: self.n_classes,
            split: self.split,
        }
    }

    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<usize>) {
        (
            self.features.select(Axis(0), indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    let io_err = |source| DataError::Io { path: path.to_path_buf(), source };
    let mut file = File::open(path).map_err(io_err)?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes).map_err(io_err)?;
    } else {
        file.read_to_end(&mut bytes).map_err(io_err)?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn idx_header(bytes: &[u8], path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>, DataError> {
    let header_len = 4 + 4 * dims;
    let truncated = |expected| DataError::TruncatedFile {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(header_len));
    }
    let found = be_u32(bytes, 0);
    if found != magic {
        return Err(DataError::BadMagic { path: path.to_path_buf(), found, expected: magic });
    }
    if bytes.len() < header_len {
        return Err(truncated(header_len));
    }
    let shape: Vec<usize> = (0..dims).map(|i| be_u32(bytes, 4 + 4 * i) as usize).collect();
    let expected = header_len + shape.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(truncated(expected));
    }
    Ok(shape)
}

/// Reads an IDX image file (magic `0x00000803`) and label file (magic
/// `0x00000801`). Files ending in `.gz` are decompressed transparently.
/// Pixels are divided by 255; `n_classes` is one more than the largest label.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let (image_path, label_path) = (image_path.as_ref(), label_path.as_ref());
    let images = read_bytes(image_path)?;
    let labels = read_bytes(label_path)?;

    let shape = idx_header(&images, image_path, IDX_IMAGES_MAGIC, 3)?;
    let (n, d) = (shape[0], shape[1] * shape[2]);
    let label_shape = idx_header(&labels, label_path, IDX_LABELS_MAGIC, 1)?;
    if label_shape[0] != n {
        return Err(DataError::CountMismatch { images: n, labels: label_shape[0] });
    }

    let pixels = &images[16..16 + n * d];
    let features = Array2::from_shape_fn((n, d), |(i, j)| f64::from(pixels[i * d + j]) / 255.0);
    let labels: Vec<usize> = labels[8..8 + n].iter().map(|&b| usize::from(b)).collect();
    let n_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    Dataset::new(features, labels, n_classes, Split::Train)
}

/// Reads CIFAR-10 binary batches: records of one label byte followed by
/// 3072 pixel bytes (red, green, blue planes).
pub fn load_cifar_bin<P: AsRef<Path>>(paths: &[P]) -> Result<Dataset, DataError> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        if bytes.len() % CIFAR_RECORD_LEN != 0 {
            let records = bytes.len() / CIFAR_RECORD_LEN + 1;
            return Err(DataError::TruncatedFile {
                path: path.to_path_buf(),
                expected: records * CIFAR_RECORD_LEN,
                found: bytes.len(),
            });
        }
        for record in bytes.chunks_exact(CIFAR_RECORD_LEN) {
            let label = usize::from(record[0]);
            if label >= CIFAR_CLASSES {
                return Err(DataError::LabelOutOfRange {
                    path: path.to_path_buf(),
                    label,
                    classes: CIFAR_CLASSES,
                });
            }
            labels.push(label);
            pixels.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
        }
    }
    let features = Array2::from_shape_vec((labels.len(), CIFAR_RECORD_LEN - 1), pixels)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    Dataset::new(features, labels, CIFAR_CLASSES, Split::Train)
}

/// Seeded Gaussian clusters.
///
/// With `classes <= dim` the centers sit on a randomly rotated simplex of
/// orthogonal axes, so every pair of centers is exactly `separation` apart;
/// otherwise they lie in random directions at radius `separation / √2`.
/// Noise is unit-variance. Each class contributes 80 % of its samples to the
/// training split. Features are min-max scaled per column over both splits.
pub fn synth_blobs(
    seed: u64,
    n_per_class: usize,
    classes: usize,
    dim: usize,
    separation: f64,
) -> Result<(Dataset, Dataset), DataError> {
    if classes < 2 || dim < 2 || !(separation > 0.0) || n_per_class < 2 {
        return Err(DataError::Invalid(format!(
            "blobs need classes >= 2, dim >= 2, separation > 0, n_per_class >= 2 \
             (got {classes}, {dim}, {separation}, {n_per_class})"
        )));
    }
    let centers = blob_centers(seed, classes, dim, separation);

    let mut noise = rng::stream(seed, "blobs/noise");
    let n_train_per_class = (n_per_class * 4) / 5;
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (class, center) in centers.iter().enumerate() {
        for i in 0..n_per_class {
            let x: Vec<f64> = center
                .iter()
                .map(|&c| -> f64 { c + Distribution::<f64>::sample(&StandardNormal, &mut noise) })
                .collect();
            if i < n_train_per_class {
                train_rows.push((x, class));
            } else {
                test_rows.push((x, class));
            }
        }
    }
    train_rows.shuffle(&mut rng::stream(seed, "blobs/order/train"));
    test_rows.shuffle(&mut rng::stream(seed, "blobs/order/test"));

    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for (x, _) in train_rows.iter().chain(&test_rows) {
        for j in 0..dim {
            lo[j] = lo[j].min(x[j]);
            hi[j] = hi[j].max(x[j]);
        }
    }
    let build = |rows: Vec<(Vec<f64>, usize)>, split| {
        let n = rows.len();
        let mut features = Array2::zeros((n, dim));
        let mut labels = Vec::with_capacity(n);
        for (i, (x, y)) in rows.into_iter().enumerate() {
            for j in 0..dim {
                let span = hi[j] - lo[j];
                features[[i, j]] = if span > 0.0 { ((x[j] - lo[j]) / span).clamp(0.0, 1.0) } else { 0.0 };
            }
            labels.push(y);
        }
        Dataset::new(features, labels, classes, split)
    };
    Ok((build(train_rows, Split::Train)?, build(test_rows, Split::Test)?))
}

fn blob_centers(seed: u64, classes: usize, dim: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, "blobs/centers");
    let mut gaussian = |n: usize| -> Vec<f64> {
        (0..n).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect()
    };
    let radius = separation / std::f64::consts::SQRT_2;
    if classes > dim {
        return (0..classes)
            .map(|_| {
                let v = gaussian(dim);
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| radius * x / norm).collect()
            })
            .collect();
    }
    // Gram-Schmidt on random vectors gives `classes` orthonormal directions.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(classes);
    while basis.len() < classes {
        let mut v = gaussian(dim);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
        .into_iter()
        .map(|b| b.into_iter().map(|x| radius * x).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, n, rows, cols] {
            v.extend(x.to_be_bytes());
        }
        v.extend(pixels);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend(IDX_LABELS_MAGIC.to_be_bytes());
        v.extend((labels.len() as u32).to_be_bytes());
        v.extend(labels);
        v
    }

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    #[test]
    fn idx_fixture_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pixels: Vec<u8> = (0..4 * 784).map(|i| (i % 256) as u8).collect();
        let img = write(dir.path(), "img", &idx_images(4, 28, 28, &pixels));
        let lbl = write(dir.path(), "lbl", &idx_labels(&[3, 1, 4, 1]));
        let ds = load_idx(&img, &lbl).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.n_classes()), (4, 784, 5));
        assert_eq!(ds.features()[[0, 0]], 0.0);
        assert_eq!(ds.features()[[0, 255]], 1.0);
        assert_eq!(ds.labels(), &[3, 1, 4, 1]);
    }

    #[test]
    fn idx_gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let pixels = vec![255u8; 2 * 4];
        let mut gz = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        gz.write_all(&idx_images(2, 2, 2, &pixels)).unwrap();
        let img = write(dir.path(), "img.gz", &gz.finish().unwrap());
        let lbl = write(dir.path(), "lbl", &idx_labels(&[0, 1]));
        let ds = load_idx(&img, &lbl).unwrap();
        assert!(ds.features().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn idx_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "img", &idx_images(10, 1, 1, &[0; 10]));
        let lbl = write(dir.path(), "lbl", &idx_labels(&[0; 9]));
        assert!(matches!(
            load_idx(&img, &lbl),
            Err(DataError::CountMismatch { images: 10, labels: 9 })
        ));
    }

    #[test]
    fn idx_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let lbl = write(dir.path(), "lbl", &idx_labels(&[0, 1]));
        let img = write(dir.path(), "swapped", &idx_labels(&[0, 1]));
        assert!(matches!(load_idx(&img, &lbl), Err(DataError::BadMagic { found: 0x801, .. })));
        let img = write(dir.path(), "short", &idx_images(2, 2, 2, &[0; 7]));
        assert!(matches!(
            load_idx(&img, &lbl),
            Err(DataError::TruncatedFile { expected: 24, found: 23, .. })
        ));
        let img = write(dir.path(), "stub", &[0, 0, 8]);
        assert!(matches!(load_idx(&img, &lbl), Err(DataError::TruncatedFile { .. })));
    }

    #[test]
    fn cifar_single_record() {
        let dir = tempfile::tempdir().unwrap();
        let mut rec = vec![3u8];
        rec.extend(std::iter::repeat_n(255u8, 3072));
        let p = write(dir.path(), "b1.bin", &rec);
        let ds = load_cifar_bin(&[&p]).unwrap();
        assert_eq!((ds.len(), ds.dim(), ds.n_classes()), (1, 3072, 10));
        assert_eq!(ds.labels(), &[3]);
        assert!(ds.features().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn cifar_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "short.bin", &vec![0u8; CIFAR_RECORD_LEN + 5]);
        assert!(matches!(load_cifar_bin(&[&p]), Err(DataError::TruncatedFile { .. })));
        let mut rec = vec![10u8];
        rec.extend(vec![0u8; 3072]);
        let p = write(dir.path(), "label.bin", &rec);
        assert!(matches!(
            load_cifar_bin(&[&p]),
            Err(DataError::LabelOutOfRange { label: 10, .. })
        ));
    }

    #[test]
    fn blobs_are_deterministic_and_split_80_20() {
        let (a_train, a_test) = synth_blobs(11, 50, 3, 4, 2.0).unwrap();
        let (b_train, b_test) = synth_blobs(11, 50, 3, 4, 2.0).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        assert_eq!((a_train.len(), a_test.len()), (120, 30));
        for c in 0..3 {
            assert_eq!(a_train.labels().iter().filter(|&&y| y == c).count(), 40);
        }
        let (c_train, _) = synth_blobs(12, 50, 3, 4, 2.0).unwrap();
        assert_ne!(a_train, c_train);
    }

    #[test]
    fn blobs_reject_degenerate_input() {
        assert!(synth_blobs(1, 10, 1, 4, 1.0).is_err());
        assert!(synth_blobs(1, 10, 2, 1, 1.0).is_err());
        assert!(synth_blobs(1, 10, 2, 4, 0.0).is_err());
    }

    #[test]
    fn simplex_centers_are_separation_apart() {
        let c = blob_centers(5, 3, 6, 4.0);
        for i in 0..3 {
            for j in i + 1..3 {
                let d: f64 = c[i].iter().zip(&c[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!((d - 4.0).abs() < 1e-12);
            }
        }
    }
}
