//! Synthetic ordinal dataset generation, CSV ingestion, deterministic
//! stratified splits, and per-dimension standardization.
//!
//! The generator draws a latent score around class-conditional means
//! equispaced on [0, k−1], maps it through a fixed random linear map into
//! d feature dimensions with per-dimension noise, and optionally swaps a
//! fraction of labels to an adjacent class.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

/// Class proportions of the diabetic-retinopathy label distribution
/// (25,810 / 2,443 / 5,292 / 873 / 708 over 35,126), the default for the
/// synthetic generator.
pub const DR_CLASS_COUNTS: [f64; 5] = [25_810.0, 2_443.0, 5_292.0, 873.0, 708.0];

pub fn dr_proportions() -> Vec<f64> {
    let total: f64 = DR_CLASS_COUNTS.iter().sum();
    DR_CLASS_COUNTS.iter().map(|c| c / total).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub k: usize,
}

impl Dataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        if k < 2 {
            return Err(Error::Input(format!("need k >= 2, got {k}")));
        }
        let d = features[0].len();
        for (i, row) in features.iter().enumerate() {
            if row.len() != d {
                return Err(Error::Input(format!("row {i} has width {} != {d}", row.len())));
            }
            if !row.iter().all(|v| v.is_finite()) {
                return Err(Error::Input(format!("non-finite feature in row {i}")));
            }
        }
        if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= k) {
            return Err(Error::Label(format!("label {c} at row {i} out of range for k={k}")));
        }
        Ok(Self { features, labels, k })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &c in &self.labels {
            counts[c] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub seed: u64,
    pub class_proportions: Vec<f64>,
    pub latent_noise_sd: f64,
    pub label_noise_rate: f64,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 || self.k < 2 {
            return Err(Error::Config(format!(
                "need n > 0, d > 0, k >= 2 (got n={}, d={}, k={})",
                self.n, self.d, self.k
            )));
        }
        if self.class_proportions.len() != self.k {
            return Err(Error::Config(format!(
                "{} proportions for k={} classes",
                self.class_proportions.len(),
                self.k
            )));
        }
        let sum: f64 = self.class_proportions.iter().sum();
        if self.class_proportions.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "class proportions must be a simplex vector (sum {sum})"
            )));
        }
        if !(self.latent_noise_sd >= 0.0 && self.latent_noise_sd.is_finite()) {
            return Err(Error::Config("latent_noise_sd must be nonnegative".into()));
        }
        if !(0.0..1.0).contains(&self.label_noise_rate) {
            return Err(Error::Config("label_noise_rate must be in [0,1)".into()));
        }
        Ok(())
    }
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            n: 3000,
            d: 4,
            k: 5,
            seed: 0,
            class_proportions: dr_proportions(),
            latent_noise_sd: 0.75,
            label_noise_rate: 0.05,
        }
    }
}

/// Largest-remainder allocation of n items over the given proportions.
pub fn largest_remainder_counts(n: usize, proportions: &[f64]) -> Vec<usize> {
    let targets: Vec<f64> = proportions.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = targets.iter().map(|t| t.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = targets[a] - targets[a].floor();
        let fb = targets[b] - targets[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..n - assigned {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Generates a dataset; bit-identical for identical specs.
pub fn generate(spec: &GeneratorSpec) -> Result<Dataset> {
    spec.validate()?;
    let counts = largest_remainder_counts(spec.n, &spec.class_proportions);
    if counts.iter().any(|&c| c == 0) {
        return Err(Error::Generation(format!(
            "n={} too small for the requested proportions (a class got zero examples)",
            spec.n
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    // fixed random linear map from the latent score into d dims
    let map: Vec<f64> = (0..spec.d)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();

    let mut labels = Vec::with_capacity(spec.n);
    let mut features = Vec::with_capacity(spec.n);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let t = class as f64 + spec.latent_noise_sd * noise;
            let row: Vec<f64> = map
                .iter()
                .map(|&m| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    m * t + spec.latent_noise_sd * eps
                })
                .collect();
            labels.push(class);
            features.push(row);
        }
    }

    if spec.label_noise_rate > 0.0 {
        for c in labels.iter_mut() {
            if rng.random::<f64>() < spec.label_noise_rate {
                let up = rng.random::<bool>();
                *c = if *c == 0 {
                    1
                } else if *c == spec.k - 1 {
                    spec.k - 2
                } else if up {
                    *c + 1
                } else {
                    *c - 1
                };
            }
        }
    }

    Dataset::new(features, labels, spec.k)
}

/// Writes a dataset as CSV: header `f0,…,f{d-1},label`.
pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for j in 0..dataset.dim() {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label\n");
    for (row, &c) in dataset.features.iter().zip(&dataset.labels) {
        for v in row {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{c}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a CSV with a header row and a `label` column of integers; every
/// other column becomes a feature, in header order. When `k` is None it is
/// inferred as max(label)+1.
pub fn load_csv(path: &Path, k: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let label_col = columns
        .iter()
        .position(|&c| c == "label")
        .ok_or_else(|| Error::Parse(format!("{}: no `label` column in header", path.display())))?;

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns.len() {
            return Err(Error::Parse(format!(
                "row {}: {} cells, header has {} columns",
                lineno + 1,
                cells.len(),
                columns.len()
            )));
        }
        let mut row = Vec::with_capacity(columns.len() - 1);
        let mut label = None;
        for (col, cell) in cells.iter().enumerate() {
            if col == label_col {
                let c: usize = cell.parse().map_err(|_| {
                    Error::Parse(format!(
                        "row {}, column `{}`: `{cell}` is not an integer label",
                        lineno + 1,
                        columns[col]
                    ))
                })?;
                label = Some(c);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Parse(format!(
                        "row {}, column `{}`: `{cell}` is not a number",
                        lineno + 1,
                        columns[col]
                    ))
                })?;
                row.push(v);
            }
        }
        features.push(row);
        labels.push(label.expect("label column present"));
    }
    if labels.is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let k = match k {
        Some(k) => k,
        None => labels.iter().max().copied().unwrap_or(0) + 1,
    };
    if let Some((i, &c)) = labels.iter().enumerate().find(|(_, &c)| c >= k) {
        return Err(Error::Parse(format!(
            "row {}: label {c} out of range for k={k}",
            i + 2
        )));
    }
    Dataset::new(features, labels, k)
}

/// Stratified split into (train, val): per class, a seeded shuffle and a
/// half-up-rounded validation share, clamped so both sides keep at least
/// one example.
pub fn split(dataset: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "val_fraction must be in (0,1), got {val_fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for class in 0..dataset.k {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels[i] == class)
            .collect();
        if idx.len() < 2 {
            return Err(Error::Split(format!(
                "class {class} has {} examples, need at least 2 to split",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let want = (val_fraction * idx.len() as f64 + 0.5).floor() as usize;
        let take = want.clamp(1, idx.len() - 1);
        val_idx.extend_from_slice(&idx[..take]);
        train_idx.extend_from_slice(&idx[take..]);
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    let pick = |idx: &[usize]| {
        Dataset::new(
            idx.iter().map(|&i| dataset.features[i].clone()).collect(),
            idx.iter().map(|&i| dataset.labels[i]).collect(),
            dataset.k,
        )
    };
    Ok((pick(&train_idx)?, pick(&val_idx)?))
}

/// Standardizes both sets to zero mean and unit variance per dimension
/// using train statistics only. Constant dimensions are left unscaled.
pub fn standardize(train: &mut Dataset, val: &mut Dataset) {
    let d = train.dim();
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    for row in &train.features {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut var = vec![0.0; d];
    for row in &train.features {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let sd: Vec<f64> = var
        .iter()
        .map(|&s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    for set in [train, val] {
        for row in set.features.iter_mut() {
            for ((v, &m), &s) in row.iter_mut().zip(&mean).zip(&sd) {
                *v = (*v - m) / s;
            }
        }
    }
}
