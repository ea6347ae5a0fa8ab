//! Synthetic feature datasets, CSV fixtures, and feature-space augmentations.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// A feature dataset: `n` rows of `d` unitless embedding coordinates, with
/// optional ground-truth class labels used for evaluation only.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Mat,
    pub labels: Option<Vec<usize>>,
    /// Number of semantic classes. 0 means "unknown" (unlabeled fixture with
    /// no declared class count); every other use requires `k >= 2`.
    pub k: usize,
    pub name: String,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Checks the structural invariants: finite features, labels in range,
    /// one label per row, and `n >= k >= 2` whenever `k` is known.
    pub fn validate(&self) -> Result<()> {
        if !self.features.is_finite() {
            return Err(Error::NonFinite(format!("features of dataset `{}`", self.name)));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.n() {
                return Err(Error::DimMismatch(format!(
                    "dataset `{}` has {} rows but {} labels",
                    self.name,
                    self.n(),
                    labels.len()
                )));
            }
            if self.k > 0 {
                if let Some(bad) = labels.iter().position(|&l| l >= self.k) {
                    return Err(Error::invalid(
                        "labels",
                        format!("label {} at row {} is >= k = {}", labels[bad], bad, self.k),
                    ));
                }
            }
        }
        if self.k > 0 && (self.k < 2 || self.n() < self.k) {
            return Err(Error::invalid(
                "k",
                format!("need n >= k >= 2, got n = {}, k = {}", self.n(), self.k),
            ));
        }
        Ok(())
    }
}

/// Noise parameters for the weak/strong feature-space views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    /// Std-dev of additive isotropic Gaussian noise for the weak view.
    pub weak_sigma: f64,
    /// Std-dev for the strong view; must be >= `weak_sigma`.
    pub strong_sigma: f64,
    /// Probability in [0, 1) of zeroing each coordinate of the strong view.
    pub strong_dropout: f64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        AugmentationSpec {
            weak_sigma: 0.1,
            strong_sigma: 1.0,
            strong_dropout: 0.05,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.weak_sigma >= 0.0 && self.strong_sigma >= self.weak_sigma) {
            return Err(Error::invalid(
                "augmentation",
                format!(
                    "need strong_sigma >= weak_sigma >= 0, got weak = {}, strong = {}",
                    self.weak_sigma, self.strong_sigma
                ),
            ));
        }
        if !(0.0..1.0).contains(&self.strong_dropout) {
            return Err(Error::invalid(
                "strong_dropout",
                format!("must lie in [0, 1), got {}", self.strong_dropout),
            ));
        }
        Ok(())
    }
}

/// Which view to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strength {
    Weak,
    Strong,
}

/// Per-cluster sample std-dev of the synthetic generator. `separation` is
/// therefore expressed in units of the cluster spread.
pub const MIXTURE_SIGMA: f64 = 1.0;

/// Generates `k * per_class` samples from `k` isotropic Gaussians whose means
/// are pairwise at least `separation` apart. Class `c` occupies the contiguous
/// row block `[c * per_class, (c + 1) * per_class)`, so the class distribution
/// is exactly uniform.
pub fn generate_gaussian_mixture(
    k: usize,
    per_class: usize,
    d: usize,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 {
        return Err(Error::invalid("k", format!("need k >= 2, got {k}")));
    }
    if per_class < 1 {
        return Err(Error::invalid("per_class", "need per_class >= 1"));
    }
    if d < 1 {
        return Err(Error::invalid("d", "need d >= 1"));
    }
    if !(separation > 0.0) {
        return Err(Error::invalid(
            "separation",
            format!("need separation > 0, got {separation}"),
        ));
    }

    // Class means: scaled orthogonal basis directions when they fit (pairwise
    // distance exactly `separation`), otherwise evenly spaced along the first
    // axis (adjacent distance `separation`).
    let mut means = Mat::zeros(k, d);
    if k <= d {
        let scale = separation / std::f64::consts::SQRT_2;
        for c in 0..k {
            means[(c, c)] = scale;
        }
    } else {
        for c in 0..k {
            means[(c, 0)] = c as f64 * separation;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, MIXTURE_SIGMA).expect("valid std-dev");
    let n = k * per_class;
    let mut features = Mat::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for i in 0..per_class {
            let row = features.row_mut(c * per_class + i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = means[(c, j)] + normal.sample(&mut rng);
            }
            labels.push(c);
        }
    }

    let ds = Dataset {
        features,
        labels: Some(labels),
        k,
        name: format!("gaussian-mixture-k{k}-n{n}-d{d}-sep{separation}-seed{seed}"),
    };
    ds.validate()?;
    Ok(ds)
}

/// Applies the weak or strong view to a single feature vector.
///
/// Weak: `x + N(0, weak_sigma^2 I)`. Strong: `x + N(0, strong_sigma^2 I)`,
/// then each coordinate independently zeroed with probability
/// `strong_dropout`. Deterministic given `seed`.
pub fn augment(x: &[f64], spec: &AugmentationSpec, strength: Strength, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = match strength {
        Strength::Weak => spec.weak_sigma,
        Strength::Strong => spec.strong_sigma,
    };
    let mut out = x.to_vec();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).expect("valid std-dev");
        for v in &mut out {
            *v += normal.sample(&mut rng);
        }
    }
    if strength == Strength::Strong && spec.strong_dropout > 0.0 {
        for v in &mut out {
            if rng.random::<f64>() < spec.strong_dropout {
                *v = 0.0;
            }
        }
    }
    out
}

/// Writes the dataset in the fixture layout: header `f0,...,f{d-1}[,label]`,
/// one sample per row, shortest-roundtrip decimals, LF line endings.
pub fn save_fixture(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    let d = dataset.dim();
    for j in 0..d {
        if j > 0 {
            out.push(',');
        }
        let _ = write!(out, "f{j}");
    }
    if dataset.labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..dataset.n() {
        for (j, v) in dataset.features.row(i).iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        if let Some(labels) = &dataset.labels {
            let _ = write!(out, ",{}", labels[i]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Loads a CSV fixture. Labels are populated iff the header ends with a
/// `label` column; `k` is inferred as `max(label) + 1` (0 when unlabeled).
pub fn load_fixture(path: impl AsRef<Path>) -> Result<Dataset> {
    load_fixture_with_k(path, None)
}

/// Like [`load_fixture`], but validates every label against a declared class
/// count, reporting the offending line on failure.
pub fn load_fixture_with_k(path: impl AsRef<Path>, declared_k: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();

    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let has_label = cols.last() == Some(&"label");
    let d = if has_label { cols.len() - 1 } else { cols.len() };
    if d == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "header declares no feature columns".into(),
        });
    }
    for (j, col) in cols.iter().take(d).enumerate() {
        let expected = format!("f{j}");
        if *col != expected {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column `{expected}`, found `{col}`"),
            });
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0usize;
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} cells, found {}", cols.len(), cells.len()),
            });
        }
        for cell in cells.iter().take(d) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-numeric cell `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-finite feature `{cell}`"),
                });
            }
            features.push(v);
        }
        if has_label {
            let l: usize = cells[d].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("non-integer label `{}`", cells[d]),
            })?;
            if let Some(k) = declared_k {
                if l >= k {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("label {l} >= k = {k}"),
                    });
                }
            }
            labels.push(l);
        }
        n += 1;
    }

    let k = declared_k.unwrap_or_else(|| {
        if has_label {
            labels.iter().max().map_or(0, |&m| m + 1)
        } else {
            0
        }
    });
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "fixture".into());
    let ds = Dataset {
        features: Mat::from_vec(n, d, features),
        labels: if has_label { Some(labels) } else { None },
        k,
        name,
    };
    ds.validate()?;
    Ok(ds)
}
