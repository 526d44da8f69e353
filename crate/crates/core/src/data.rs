//! Dataset loading: IDX image files, header-less feature CSV, and seeded
//! Gaussian blobs. Every loader emits features in `[0, 1]`.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autoencoder::FeatureVector;
use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
    /// Number of examples of each class `0..n_classes`.
    pub per_class_counts: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: Vec<FeatureVector>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::contract(format!(
                "{} features but {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(first) = features.first() {
            if let Some(bad) = features.iter().position(|f| f.len() != first.len()) {
                return Err(Error::DimensionMismatch {
                    context: "dataset row",
                    expected: first.len(),
                    got: features[bad].len(),
                });
            }
        }
        let n = labels.iter().max().map_or(0, |m| m + 1);
        let mut per_class_counts = vec![0; n];
        for &l in &labels {
            per_class_counts[l] += 1;
        }
        Ok(LabeledDataset {
            features,
            labels,
            per_class_counts,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.per_class_counts.len()
    }

    pub fn dim(&self) -> Option<usize> {
        self.features.first().map(FeatureVector::len)
    }

    /// Keeps the first `limit` examples of every class, in order.
    pub fn take_per_class(&self, limit: usize) -> LabeledDataset {
        let mut seen = vec![0; self.n_classes()];
        let (features, labels) = self
            .features
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| {
                seen[l] += 1;
                seen[l] <= limit
            })
            .map(|(f, &l)| (f.clone(), l))
            .unzip();
        LabeledDataset::new(features, labels).expect("subset of a valid dataset")
    }

    /// Splits every class at `fraction` of its examples: the first part
    /// goes to the left dataset, the rest to the right.
    pub fn split_per_class(&self, fraction: f64) -> (LabeledDataset, LabeledDataset) {
        let cut: Vec<usize> = self
            .per_class_counts
            .iter()
            .map(|&c| (c as f64 * fraction).round() as usize)
            .collect();
        let mut seen = vec![0; self.n_classes()];
        let (mut lf, mut ll, mut rf, mut rl) = (vec![], vec![], vec![], vec![]);
        for (f, &l) in self.features.iter().zip(&self.labels) {
            if seen[l] < cut[l] {
                lf.push(f.clone());
                ll.push(l);
            } else {
                rf.push(f.clone());
                rl.push(l);
            }
            seen[l] += 1;
        }
        (
            LabeledDataset::new(lf, ll).expect("subset of a valid dataset"),
            LabeledDataset::new(rf, rl).expect("subset of a valid dataset"),
        )
    }

    /// Features of class `label` in dataset order.
    pub fn class_features(&self, label: usize) -> Vec<FeatureVector> {
        self.features
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l == label)
            .map(|(f, _)| f.clone())
            .collect()
    }
}

/// Per-user training sets, indexed by class label.
#[derive(Debug, Clone, PartialEq)]
pub struct UserSplit {
    pub per_user: Vec<Vec<FeatureVector>>,
}

impl UserSplit {
    /// Users whose set is empty (they cannot train a model).
    pub fn empty_users(&self) -> Vec<usize> {
        self.per_user
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_empty())
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn split_per_user(dataset: &LabeledDataset) -> UserSplit {
    let mut per_user = vec![Vec::new(); dataset.n_classes()];
    for (f, &l) in dataset.features.iter().zip(&dataset.labels) {
        per_user[l].push(f.clone());
    }
    UserSplit { per_user }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::format(path, format!("truncated header at offset {offset}")))
}

/// Parses an IDX image file; returns `(count, rows * cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &str) -> Result<(usize, usize, Vec<u8>)> {
    let magic = read_be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic 0x{magic:08x} at offset 0 (expected 0x{IDX_IMAGES_MAGIC:08x})"),
        ));
    }
    let count = read_be_u32(bytes, 4, path)? as usize;
    let rows = read_be_u32(bytes, 8, path)? as usize;
    let cols = read_be_u32(bytes, 12, path)? as usize;
    let dim = rows * cols;
    let payload = &bytes[16..];
    if payload.len() != count * dim {
        return Err(Error::format(
            path,
            format!(
                "payload has {} bytes, header promises {count} images of {rows}x{cols}",
                payload.len()
            ),
        ));
    }
    Ok((count, dim, payload.to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &str) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic 0x{magic:08x} at offset 0 (expected 0x{IDX_LABELS_MAGIC:08x})"),
        ));
    }
    let count = read_be_u32(bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::format(
            path,
            format!(
                "payload has {} bytes, header promises {count} labels",
                payload.len()
            ),
        ));
    }
    Ok(payload.to_vec())
}

/// Loads an IDX image/label pair, scaling pixels by `1/255`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<LabeledDataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ip_s = ip.display().to_string();
    let lp_s = lp.display().to_string();
    let (count, dim, pixels) = parse_idx_images(&std::fs::read(ip)?, &ip_s)?;
    let labels = parse_idx_labels(&std::fs::read(lp)?, &lp_s)?;
    if labels.len() != count {
        return Err(Error::format(
            lp_s,
            format!("{} labels for {count} images in {ip_s}", labels.len()),
        ));
    }
    let features = pixels
        .chunks_exact(dim.max(1))
        .take(count)
        .map(|img| FeatureVector::new(img.iter().map(|&p| f64::from(p) / 255.0).collect()))
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(features, labels.into_iter().map(usize::from).collect())
}

/// How feature-CSV values are brought into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CsvScaling {
    /// Per-column min-max; constant columns map to 0.
    #[default]
    MinMax,
    /// Values are taken verbatim and must already lie in `[0, 1]`.
    AsIs,
}

/// Loads `label,f1,...,fD` rows and min-max normalizes every column.
///
/// Constant columns map to 0.
pub fn load_feature_csv(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    load_feature_csv_with(path, CsvScaling::MinMax)
}

pub fn load_feature_csv_with(
    path: impl AsRef<Path>,
    scaling: CsvScaling,
) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::format(&p, e.to_string()))?;

    let mut raw: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::format(&p, format!("row {row}: {e}")))?;
        let mut cells = record.iter();
        let label = cells
            .next()
            .ok_or_else(|| Error::format(&p, format!("row {row}: empty row")))?;
        let label: usize = label.parse().map_err(|_| {
            Error::format(
                &p,
                format!("row {row}: label `{label}` is not a class index"),
            )
        })?;
        let values = cells
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::format(
                            &p,
                            format!("row {row}, column {}: `{cell}` is not a number", c + 2),
                        )
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = raw.first() {
            if values.len() != first.len() {
                return Err(Error::format(
                    &p,
                    format!(
                        "row {row}: {} features, expected {}",
                        values.len(),
                        first.len()
                    ),
                ));
            }
        } else if values.is_empty() {
            return Err(Error::format(&p, format!("row {row}: no feature columns")));
        }
        raw.push(values);
        labels.push(label);
    }

    if scaling == CsvScaling::AsIs {
        let features = raw
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                FeatureVector::new(row)
                    .map_err(|e| Error::format(&p, format!("row {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        return LabeledDataset::new(features, labels);
    }

    let dim = raw.first().map_or(0, Vec::len);
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for row in &raw {
        for (j, v) in row.iter().enumerate() {
            lo[j] = lo[j].min(*v);
            hi[j] = hi[j].max(*v);
        }
    }
    let features = raw
        .into_iter()
        .map(|row| {
            let scaled = row
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    let range = hi[j] - lo[j];
                    if range > 0.0 {
                        ((v - lo[j]) / range).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            FeatureVector::new(scaled)
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new(features, labels)
}

/// Parameters of a synthetic Gaussian-blob dataset.
///
/// A sample of class `k` is `center_k + noise_sigma * (e + style_gain * B_k z)`
/// clipped to `[0, 1]`, where `e ~ N(0, I_dim)`, `z ~ N(0, I_style_rank)` and
/// `B_k` is a random orthonormal `dim x style_rank` basis owned by class `k`.
/// With `style_rank = 0` the blobs are isotropic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub n_classes: usize,
    pub dim: usize,
    pub per_class_count: usize,
    /// Centers are `0.5 + center_spread * (u - 0.5)` with `u ~ U[0, 1)^dim`.
    pub center_spread: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub style_rank: usize,
    #[serde(default)]
    pub style_gain: f64,
}

impl Default for BlobSpec {
    fn default() -> Self {
        BlobSpec {
            n_classes: 4,
            dim: 32,
            per_class_count: 200,
            center_spread: 0.8,
            noise_sigma: 0.05,
            seed: 0,
            style_rank: 0,
            style_gain: 0.0,
        }
    }
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 || self.dim == 0 {
            return Err(Error::contract(
                "blob spec needs at least one class and dimension",
            ));
        }
        if !(0.0..=1.0).contains(&self.center_spread) {
            return Err(Error::contract("center_spread must be in [0, 1]"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::contract("noise_sigma must be finite and >= 0"));
        }
        if self.style_rank > self.dim || !(self.style_gain >= 0.0 && self.style_gain.is_finite()) {
            return Err(Error::contract(
                "style_rank must be <= dim and style_gain finite and >= 0",
            ));
        }
        Ok(())
    }

    /// Class centers, deterministic in the seed.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.n_classes)
            .map(|_| {
                (0..self.dim)
                    .map(|_| 0.5 + self.center_spread * (rng.random::<f64>() - 0.5))
                    .collect()
            })
            .collect()
    }

    /// Orthonormal style bases, one `style_rank`-column basis per class,
    /// each column stored as a `dim`-vector.
    pub fn style_bases(&self) -> Vec<Vec<Vec<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(2);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        (0..self.n_classes)
            .map(|_| {
                let mut basis: Vec<Vec<f64>> = Vec::with_capacity(self.style_rank);
                while basis.len() < self.style_rank {
                    let mut v: Vec<f64> = (0..self.dim).map(|_| normal.sample(&mut rng)).collect();
                    // Gram-Schmidt against the columns drawn so far
                    for q in &basis {
                        let proj: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                        v.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
                    }
                    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    if norm > 1e-8 {
                        v.iter_mut().for_each(|a| *a /= norm);
                        basis.push(v);
                    }
                }
                basis
            })
            .collect()
    }
}

/// Writes `dataset` as header-less `label,f1,...,fD` rows.
pub fn write_feature_csv(dataset: &LabeledDataset, out: impl std::io::Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for (x, l) in dataset.features.iter().zip(&dataset.labels) {
        let mut row = Vec::with_capacity(x.len() + 1);
        row.push(l.to_string());
        row.extend(x.as_slice().iter().map(f64::to_string));
        w.write_record(&row)
            .map_err(|e| Error::format("csv output", e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Class-major Gaussian blobs clipped to `[0, 1]`.
pub fn gen_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    let centers = spec.centers();
    let bases = spec.style_bases();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(1);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(spec.n_classes * spec.per_class_count);
    let mut labels = Vec::with_capacity(features.capacity());
    let mut offset = vec![0.0; spec.dim];
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..spec.per_class_count {
            offset.iter_mut().for_each(|o| *o = normal.sample(&mut rng));
            for q in &bases[k] {
                let z = spec.style_gain * normal.sample(&mut rng);
                offset.iter_mut().zip(q).for_each(|(o, b)| *o += z * b);
            }
            let v = center
                .iter()
                .zip(&offset)
                .map(|(c, o)| (c + spec.noise_sigma * o).clamp(0.0, 1.0))
                .collect();
            features.push(FeatureVector::new(v)?);
            labels.push(k);
        }
    }
    LabeledDataset::new(features, labels)
}
