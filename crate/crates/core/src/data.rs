//! Labeled datasets: IDX (MNIST) and CSV loaders plus a Gaussian mixture with
//! closed-form posteriors.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::linalg::{softmax_in_place, DenseMatrix};
use crate::noise::NoiseMatrix;

/// Features with clean and noisy label channels side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DenseMatrix,
    clean_labels: Vec<usize>,
    noisy_labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(features: DenseMatrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {y} out of range for {class_count} classes"
            )));
        }
        Ok(Self {
            features,
            noisy_labels: labels.clone(),
            clean_labels: labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.clean_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn clean_labels(&self) -> &[usize] {
        &self.clean_labels
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn set_noisy_labels(&mut self, labels: Vec<usize>) -> Result<()> {
        if labels.len() != self.len() || labels.iter().any(|&y| y >= self.class_count) {
            return Err(Error::InvalidArgument("noisy label channel mismatch".into()));
        }
        self.noisy_labels = labels;
        Ok(())
    }

    /// Replaces the noisy channel by a corruption of the clean labels.
    pub fn corrupt(&mut self, noise: &NoiseMatrix, seed: u64) -> Result<()> {
        if noise.classes() != self.class_count {
            return Err(Error::Dimension(format!(
                "{}-class noise for a {}-class dataset",
                noise.classes(),
                self.class_count
            )));
        }
        self.noisy_labels = noise.corrupt(&self.clean_labels, seed)?;
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> LabeledDataset {
        let d = self.dim();
        let mut feats = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            feats.extend_from_slice(self.features.row(i));
        }
        LabeledDataset {
            features: DenseMatrix::from_vec_unchecked(indices.len(), d, feats),
            clean_labels: indices.iter().map(|&i| self.clean_labels[i]).collect(),
            noisy_labels: indices.iter().map(|&i| self.noisy_labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// First `n` examples after a seeded shuffle.
    pub fn shuffled_subset(&self, n: usize, seed: u64) -> LabeledDataset {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(n.min(self.len()));
        self.select(&idx)
    }

    /// SHA-256 of the clean labels, hex encoded.
    pub fn clean_label_checksum(&self) -> String {
        label_checksum(&self.clean_labels)
    }

    /// Writes `label,f1,…,fd` lines using the clean labels.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_labels(path, &self.clean_labels)
    }

    /// Same layout as [`write_csv`](Self::write_csv) with the noisy labels.
    pub fn write_noisy_csv(&self, path: &Path) -> Result<()> {
        self.write_csv_labels(path, &self.noisy_labels)
    }

    fn write_csv_labels(&self, path: &Path, labels: &[usize]) -> Result<()> {
        let mut out = String::new();
        for i in 0..self.len() {
            out.push_str(&labels[i].to_string());
            for &v in self.features.row(i) {
                out.push(',');
                out.push_str(&fmt_f64(v));
            }
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// Reads `label,f1,…,fd` lines. `class_count` defaults to `max label + 1`.
    pub fn read_csv(path: &Path, class_count: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut labels = Vec::new();
        let mut feats = Vec::new();
        let mut dim = None;
        let mut offset = 0u64;
        for line in text.split_inclusive('\n') {
            let start = offset;
            offset += line.len() as u64;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                offset: start,
                message,
            };
            let mut fields = line.split(',');
            let label: usize = fields
                .next()
                .unwrap_or_default()
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad label: {e}")))?;
            let row: Vec<f64> = fields
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(format!("bad feature: {e}")))?;
            match dim {
                None => dim = Some(row.len()),
                Some(d) if d != row.len() => {
                    return Err(parse_err(format!("expected {d} features, got {}", row.len())))
                }
                _ => {}
            }
            labels.push(label);
            feats.extend(row);
        }
        let d = dim.unwrap_or(0);
        let c = class_count.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        let features = DenseMatrix::from_row_major(labels.len(), d, feats)?;
        LabeledDataset::new(features, labels, c)
    }
}

pub fn label_checksum(labels: &[usize]) -> String {
    let mut h = Sha256::new();
    for &y in labels {
        h.update((y as u32).to_le_bytes());
    }
    hex::encode(h.finalize())
}

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Loads an IDX image/label pair; pixels are scaled to `[0, 1]`.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let img_bytes = std::fs::read(images).map_err(|e| Error::io(images, e))?;
    let lbl_bytes = std::fs::read(labels).map_err(|e| Error::io(labels, e))?;
    let (n, rows, cols) = parse_idx_images_header(&img_bytes, images)?;
    let m = parse_idx_labels_header(&lbl_bytes, labels)?;
    if n != m {
        return Err(Error::Parse {
            path: labels.to_path_buf(),
            offset: 4,
            message: format!("{n} images but {m} labels"),
        });
    }
    let d = rows * cols;
    let pixels = &img_bytes[16..16 + n * d];
    let features: Vec<f64> = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let raw = &lbl_bytes[8..8 + n];
    let class_count = 10;
    if let Some((i, &y)) = raw.iter().enumerate().find(|(_, &y)| usize::from(y) >= class_count) {
        return Err(Error::Parse {
            path: labels.to_path_buf(),
            offset: 8 + i as u64,
            message: format!("label {y} outside 0-9"),
        });
    }
    LabeledDataset::new(
        DenseMatrix::from_vec_unchecked(n, d, features),
        raw.iter().map(|&y| usize::from(y)).collect(),
        class_count,
    )
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn parse_idx_images_header(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize)> {
    let err = |offset: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if bytes.len() >= 4 && be_u32(bytes, 0) != IDX_IMAGES_MAGIC {
        let magic = be_u32(bytes, 0);
        return Err(err(0, format!("bad image magic {magic:#010x}")));
    }
    if bytes.len() < 16 {
        return Err(err(bytes.len() as u64, "truncated image header".into()));
    }
    let n = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let need = 16 + n * rows * cols;
    if bytes.len() < need {
        return Err(err(
            bytes.len() as u64,
            format!("truncated image data: need {need} bytes"),
        ));
    }
    Ok((n, rows, cols))
}

fn parse_idx_labels_header(bytes: &[u8], path: &Path) -> Result<usize> {
    let err = |offset: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        offset,
        message,
    };
    if bytes.len() >= 4 && be_u32(bytes, 0) != IDX_LABELS_MAGIC {
        let magic = be_u32(bytes, 0);
        return Err(err(0, format!("bad label magic {magic:#010x}")));
    }
    if bytes.len() < 8 {
        return Err(err(bytes.len() as u64, "truncated label header".into()));
    }
    let n = be_u32(bytes, 4) as usize;
    if bytes.len() < 8 + n {
        return Err(err(
            bytes.len() as u64,
            format!("truncated label data: need {} bytes", 8 + n),
        ));
    }
    Ok(n)
}

/// Equal-weight mixture of unit-variance Gaussians whose means sit on a regular
/// simplex with pairwise distance `separation`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    means: DenseMatrix,
}

impl GaussianMixture {
    pub fn simplex(classes: usize, dim: usize, separation: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidArgument("need at least two classes".into()));
        }
        if dim + 1 < classes {
            return Err(Error::InvalidArgument(format!(
                "a {classes}-vertex simplex needs dim ≥ {}",
                classes - 1
            )));
        }
        if !(separation >= 0.0 && separation.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "separation {separation} must be a finite non-negative number"
            )));
        }
        // Vertex i expressed in the Helmert basis of the sum-zero subspace; the
        // standard basis vectors are √2 apart, hence the scale.
        let scale = separation / std::f64::consts::SQRT_2;
        let mut means = DenseMatrix::zeros(classes, dim);
        for k in 1..classes {
            let norm = ((k * (k + 1)) as f64).sqrt();
            for i in 0..classes {
                let h = match i.cmp(&k) {
                    std::cmp::Ordering::Less => 1.0,
                    std::cmp::Ordering::Equal => -(k as f64),
                    std::cmp::Ordering::Greater => 0.0,
                };
                means.set(i, k - 1, scale * h / norm);
            }
        }
        Ok(Self { means })
    }

    pub fn classes(&self) -> usize {
        self.means.rows()
    }

    pub fn dim(&self) -> usize {
        self.means.cols()
    }

    pub fn means(&self) -> &DenseMatrix {
        &self.means
    }

    /// Exact `p(y | x)` under equal priors.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut logits: Vec<f64> = (0..self.classes())
            .map(|i| {
                -0.5 * self
                    .means
                    .row(i)
                    .iter()
                    .zip(x)
                    .map(|(m, v)| (v - m) * (v - m))
                    .sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut logits);
        logits
    }

    /// Exact noisy-label posterior `Tᵀ p(y | x)`.
    pub fn noisy_posterior(&self, x: &[f64], noise: &NoiseMatrix) -> Vec<f64> {
        let p = self.posterior(x);
        let c = self.classes();
        (0..c)
            .map(|j| (0..c).map(|i| noise.get(i, j) * p[i]).sum())
            .collect()
    }

    /// `per_class` draws per class, interleaved so sample `k` has label `k mod c`.
    pub fn sample(&self, per_class: usize, seed: u64) -> LabeledDataset {
        let c = self.classes();
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = per_class * c;
        let mut feats = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for k in 0..n {
            let y = k % c;
            labels.push(y);
            for &m in self.means.row(y) {
                let z: f64 = StandardNormal.sample(&mut rng);
                feats.push(m + z);
            }
        }
        LabeledDataset::new(DenseMatrix::from_vec_unchecked(n, d, feats), labels, c)
            .expect("labels in range")
    }

    /// Accuracy of the Bayes classifier on `data`'s clean labels.
    pub fn bayes_accuracy(&self, data: &LabeledDataset) -> f64 {
        let hits = (0..data.len())
            .filter(|&i| {
                let p = self.posterior(data.features().row(i));
                crate::linalg::argmax(&p) == data.clean_labels()[i]
            })
            .count();
        hits as f64 / data.len() as f64
    }
}

/// A sampled mixture together with the generator that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticGaussians {
    pub mixture: GaussianMixture,
    pub dataset: LabeledDataset,
}

pub fn synthetic_gaussians(
    classes: usize,
    per_class: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<SyntheticGaussians> {
    let mixture = GaussianMixture::simplex(classes, dim, separation)?;
    let dataset = mixture.sample(per_class, seed);
    Ok(SyntheticGaussians { mixture, dataset })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_idx(dir: &Path, n_images: u32, n_labels: u32, pixel: u8) -> (std::path::PathBuf, std::path::PathBuf) {
        let img = dir.join("img");
        let lbl = dir.join("lbl");
        let mut f = std::fs::File::create(&img).unwrap();
        f.write_all(&IDX_IMAGES_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&n_images.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        f.write_all(&2u32.to_be_bytes()).unwrap();
        for i in 0..n_images * 4 {
            f.write_all(&[if i == 0 { pixel } else { 0 }]).unwrap();
        }
        let mut f = std::fs::File::create(&lbl).unwrap();
        f.write_all(&IDX_LABELS_MAGIC.to_be_bytes()).unwrap();
        f.write_all(&n_labels.to_be_bytes()).unwrap();
        for i in 0..n_labels {
            f.write_all(&[(i % 10) as u8]).unwrap();
        }
        (img, lbl)
    }

    #[test]
    fn idx_round_trip_and_normalisation() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx(dir.path(), 3, 3, 255);
        let data = load_idx(&img, &lbl).unwrap();
        assert_eq!(data.len(), 3);
        assert_eq!(data.dim(), 4);
        assert_eq!(data.features().get(0, 0), 1.0);
        assert_eq!(data.clean_labels(), &[0, 1, 2]);
    }

    #[test]
    fn idx_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx(dir.path(), 3, 4, 1);
        assert!(matches!(load_idx(&img, &lbl), Err(Error::Parse { .. })));
    }

    #[test]
    fn idx_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = write_idx(dir.path(), 3, 3, 1);
        // swapped files: wrong magic on both
        match load_idx(&lbl, &img) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        let bytes = std::fs::read(&img).unwrap();
        std::fs::write(&img, &bytes[..bytes.len() - 1]).unwrap();
        match load_idx(&img, &lbl) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, bytes.len() as u64 - 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn simplex_means_are_equidistant() {
        for c in 2..7 {
            let g = GaussianMixture::simplex(c, c + 1, 3.0).unwrap();
            for i in 0..c {
                for j in 0..i {
                    let d: f64 = g
                        .means()
                        .row(i)
                        .iter()
                        .zip(g.means().row(j))
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    assert!((d - 3.0).abs() < 1e-12);
                }
            }
        }
        assert!(GaussianMixture::simplex(4, 2, 1.0).is_err());
    }

    #[test]
    fn well_separated_bayes_accuracy() {
        let s = synthetic_gaussians(3, 2000, 2, 10.0, 1).unwrap();
        assert!(s.mixture.bayes_accuracy(&s.dataset) >= 0.999);
    }

    #[test]
    fn zero_separation_posterior_is_uniform() {
        let s = synthetic_gaussians(4, 10, 3, 0.0, 1).unwrap();
        for i in 0..s.dataset.len() {
            for p in s.mixture.posterior(s.dataset.features().row(i)) {
                assert!((p - 0.25).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn posterior_matches_brute_force_density_ratio() {
        let g = GaussianMixture::simplex(3, 2, 2.0).unwrap();
        let x = [0.3, -0.7];
        let dens: Vec<f64> = (0..3)
            .map(|i| {
                let m = g.means().row(i);
                let d2 = (x[0] - m[0]).powi(2) + (x[1] - m[1]).powi(2);
                (-d2 / 2.0).exp() / (2.0 * std::f64::consts::PI)
            })
            .collect();
        let total: f64 = dens.iter().sum();
        for (p, d) in g.posterior(&x).iter().zip(&dens) {
            assert!((p - d / total).abs() < 1e-14);
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = synthetic_gaussians(3, 50, 4, 2.0, 9).unwrap();
        let b = synthetic_gaussians(3, 50, 4, 2.0, 9).unwrap();
        assert_eq!(a.dataset, b.dataset);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = synthetic_gaussians(3, 5, 2, 2.0, 3).unwrap();
        let path = dir.path().join("d.csv");
        s.dataset.write_csv(&path).unwrap();
        let back = LabeledDataset::read_csv(&path, Some(3)).unwrap();
        assert_eq!(back, s.dataset);
    }

    #[test]
    fn corruption_leaves_clean_channel() {
        let mut s = synthetic_gaussians(3, 100, 2, 2.0, 3).unwrap().dataset;
        let before = s.clean_label_checksum();
        let t = crate::noise::NoiseSpec::symmetric(0.5).build(3).unwrap();
        s.corrupt(&t, 1).unwrap();
        assert_eq!(s.clean_label_checksum(), before);
        assert_ne!(s.noisy_labels(), s.clean_labels());
    }
}
