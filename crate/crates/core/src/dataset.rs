//! MNIST ingestion from IDX files.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Environment variable naming the directory that holds the IDX files.
pub const DATA_DIR_ENV: &str = "SPINBAYES_MNIST_DIR";
/// Directory used when [`DATA_DIR_ENV`] is unset, relative to the working directory.
pub const DEFAULT_DATA_DIR: &str = "data/mnist";

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images as rows of 784 values in `[0, 1]` with labels `0..=9`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub split: Split,
}

impl Dataset {
    pub fn new(images: Array2<f64>, labels: Vec<u8>, split: Split) -> Result<Self> {
        crate::error::check_dims(images.nrows(), labels.len())?;
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.images.ncols()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Label-stratified subset of `n` items: every class gets `n·share` items
    /// up to rounding, so per-class counts differ from the exact proportion by
    /// less than one. Deterministic in `seed`; indices keep dataset order.
    pub fn stratified_subset(&self, n: usize, seed: u64) -> Result<Self> {
        if n > self.len() {
            return Err(Error::InvalidArgument(format!(
                "subset of {n} from {} items",
                self.len()
            )));
        }
        let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        // largest-remainder apportionment
        let total = self.len() as f64;
        let mut quota: Vec<(u8, usize, f64)> = by_class
            .iter()
            .map(|(&c, idx)| {
                let exact = n as f64 * idx.len() as f64 / total;
                (c, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = quota.iter().map(|q| q.1).sum();
        let mut order: Vec<usize> = (0..quota.len()).collect();
        order.sort_by(|&a, &b| quota[b].2.total_cmp(&quota[a].2).then(a.cmp(&b)));
        for &k in order.iter().take(n - assigned) {
            quota[k].1 += 1;
        }
        let mut rng = stream_rng(seed, 0);
        let mut picked = Vec::with_capacity(n);
        for (c, count, _) in quota {
            let mut idx = by_class[&c].clone();
            idx.shuffle(&mut rng);
            picked.extend_from_slice(&idx[..count]);
        }
        picked.sort_unstable();
        Ok(self.select(&picked))
    }

    pub fn class_counts(&self) -> [usize; 10] {
        let mut c = [0; 10];
        for &l in &self.labels {
            if let Some(slot) = c.get_mut(usize::from(l)) {
                *slot += 1;
            }
        }
        c
    }
}

/// Dataset directory: [`DATA_DIR_ENV`] if set, else [`DEFAULT_DATA_DIR`].
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Reads an IDX image file into rows of pixels scaled by 1/255.
pub fn read_idx_images(path: &Path) -> Result<Array2<f64>> {
    let mut r = open(path)?;
    let magic = read_u32(&mut r)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic}, expected {IMAGE_MAGIC}",
            path.display()
        )));
    }
    let n = read_u32(&mut r)? as usize;
    let rows = read_u32(&mut r)? as usize;
    let cols = read_u32(&mut r)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("{}: empty image dims", path.display())));
    }
    let mut buf = vec![0u8; n * rows * cols];
    r.read_exact(&mut buf)?;
    Array2::from_shape_vec((n, rows * cols), buf.into_iter().map(|p| f64::from(p) / 255.0).collect())
        .map_err(|e| Error::Format(e.to_string()))
}

/// Reads an IDX label file.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = open(path)?;
    let magic = read_u32(&mut r)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic}, expected {LABEL_MAGIC}",
            path.display()
        )));
    }
    let n = read_u32(&mut r)? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    if let Some(&bad) = buf.iter().find(|&&l| l > 9) {
        return Err(Error::Format(format!("{}: label {bad} out of range", path.display())));
    }
    Ok(buf)
}

/// Loads one split from the standard file names in `dir`.
pub fn load_mnist(dir: &Path, split: Split) -> Result<Dataset> {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    let images = read_idx_images(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
    let labels = read_idx_labels(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
    if images.nrows() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.nrows(),
            labels.len()
        )));
    }
    Dataset::new(images, labels, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(path: &Path, bytes: &[u8]) {
        File::create(path).unwrap().write_all(bytes).unwrap();
    }

    fn idx_images(n: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, n, 2, 2] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn parses_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("train-images-idx3-ubyte"), &idx_images(2, &[0, 255, 51, 102, 1, 2, 3, 4]));
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[7, 3]);
        write(&dir.path().join("train-labels-idx1-ubyte"), &labels);
        let d = load_mnist(dir.path(), Split::Train).unwrap();
        assert_eq!(d.images.dim(), (2, 4));
        assert_eq!(d.images[[0, 1]], 1.0);
        assert!((d.images[[0, 2]] - 0.2).abs() < 1e-15);
        assert_eq!(d.labels, vec![7, 3]);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels");
        write(&p, &idx_images(1, &[0, 0, 0, 0]));
        assert!(matches!(read_idx_labels(&p), Err(Error::Format(_))));
        let q = dir.path().join("images");
        write(&q, &idx_images(3, &[0, 0, 0, 0]));
        assert!(matches!(read_idx_images(&q), Err(Error::Io(_))));
    }

    #[test]
    fn stratified_subset_is_balanced_and_deterministic() {
        let labels: Vec<u8> = (0..1000u32).map(|i| ((i * i + 3 * i) % 10) as u8).collect();
        let d = Dataset::new(Array2::zeros((1000, 1)), labels, Split::Train).unwrap();
        let a = d.stratified_subset(137, 9).unwrap();
        assert_eq!(a, d.stratified_subset(137, 9).unwrap());
        assert_eq!(a.len(), 137);
        let full = d.class_counts();
        for (c, &k) in a.class_counts().iter().enumerate() {
            let exact = 137.0 * full[c] as f64 / 1000.0;
            assert!((k as f64 - exact).abs() < 1.0);
        }
        assert!(d.stratified_subset(2000, 0).is_err());
    }
}
