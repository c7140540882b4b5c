//! Datasets and group bookkeeping.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A (class, domain) pair. Groups are indexed `y * M + d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupKey {
    pub y: usize,
    pub d: usize,
}

impl GroupKey {
    pub fn new(y: usize, d: usize) -> Self {
        Self { y, d }
    }

    pub fn index(&self, num_domains: usize) -> usize {
        self.y * num_domains + self.d
    }

    pub fn from_index(index: usize, num_domains: usize) -> Self {
        Self {
            y: index / num_domains,
            d: index % num_domains,
        }
    }

    /// All `K * M` keys in index order.
    pub fn all(num_classes: usize, num_domains: usize) -> impl Iterator<Item = GroupKey> {
        (0..num_classes * num_domains).map(move |g| GroupKey::from_index(g, num_domains))
    }
}

impl std::fmt::Display for GroupKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.y, self.d)
    }
}

/// Latent features with class labels, (possibly noisy) domain labels and
/// optional binary pseudo-annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    y: Vec<usize>,
    d: Vec<usize>,
    d_tilde: Option<Vec<u8>>,
    num_classes: usize,
    num_domains: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        y: Vec<usize>,
        d: Vec<usize>,
        num_classes: usize,
        num_domains: usize,
    ) -> Result<Self> {
        let n = features.nrows();
        if y.len() != n || d.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows but {} class labels and {} domain labels",
                n,
                y.len(),
                d.len()
            )));
        }
        if num_classes == 0 || num_domains == 0 {
            return Err(Error::InvalidLabel("K and M must be positive".into()));
        }
        if let Some(i) = y.iter().position(|&v| v >= num_classes) {
            return Err(Error::InvalidLabel(format!(
                "row {i}: class {} not below K = {num_classes}",
                y[i]
            )));
        }
        if let Some(i) = d.iter().position(|&v| v >= num_domains) {
            return Err(Error::InvalidLabel(format!(
                "row {i}: domain {} not below M = {num_domains}",
                d[i]
            )));
        }
        Ok(Self {
            features,
            y,
            d,
            d_tilde: None,
            num_classes,
            num_domains,
        })
    }

    /// Attach pseudo-annotations (entries must be 0 or 1).
    pub fn with_d_tilde(mut self, d_tilde: Vec<u8>) -> Result<Self> {
        if d_tilde.len() != self.n() {
            return Err(Error::ShapeMismatch(format!(
                "d_tilde has {} entries for {} rows",
                d_tilde.len(),
                self.n()
            )));
        }
        if let Some(i) = d_tilde.iter().position(|&v| v > 1) {
            return Err(Error::InvalidLabel(format!(
                "row {i}: d_tilde must be 0 or 1"
            )));
        }
        self.d_tilde = Some(d_tilde);
        Ok(self)
    }

    /// Same features and classes with a replacement domain column.
    pub fn with_domains(&self, d: Vec<usize>) -> Result<Self> {
        let mut out = LabeledDataset::new(
            self.features.clone(),
            self.y.clone(),
            d,
            self.num_classes,
            self.num_domains,
        )?;
        out.d_tilde = self.d_tilde.clone();
        Ok(out)
    }

    /// Same labels with a replacement feature matrix of the same row count.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        let mut out = LabeledDataset::new(
            features,
            self.y.clone(),
            self.d.clone(),
            self.num_classes,
            self.num_domains,
        )?;
        out.d_tilde = self.d_tilde.clone();
        Ok(out)
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            d: indices.iter().map(|&i| self.d[i]).collect(),
            d_tilde: self
                .d_tilde
                .as_ref()
                .map(|t| indices.iter().map(|&i| t[i]).collect()),
            num_classes: self.num_classes,
            num_domains: self.num_domains,
        }
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    pub fn d(&self) -> &[usize] {
        &self.d
    }

    pub fn d_tilde(&self) -> Option<&[u8]> {
        self.d_tilde.as_deref()
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn m(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_domains(&self) -> usize {
        self.num_domains
    }

    pub fn num_groups(&self) -> usize {
        self.num_classes * self.num_domains
    }

    pub fn group_of(&self, i: usize) -> GroupKey {
        GroupKey::new(self.y[i], self.d[i])
    }

    pub fn group_index(&self, i: usize) -> usize {
        self.y[i] * self.num_domains + self.d[i]
    }
}

/// Per-group counts and empirical priors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub counts: Vec<usize>,
    pub priors: Vec<f64>,
    pub n_min: usize,
    pub num_classes: usize,
    pub num_domains: usize,
}

impl GroupStats {
    pub fn count(&self, key: GroupKey) -> usize {
        self.counts[key.index(self.num_domains)]
    }

    pub fn prior(&self, key: GroupKey) -> f64 {
        self.priors[key.index(self.num_domains)]
    }

    pub fn class_counts(&self) -> Vec<usize> {
        self.counts
            .chunks(self.num_domains)
            .map(|c| c.iter().sum())
            .collect()
    }

    pub fn class_priors(&self) -> Vec<f64> {
        let n: usize = self.counts.iter().sum();
        self.class_counts()
            .into_iter()
            .map(|c| c as f64 / n as f64)
            .collect()
    }
}

pub fn compute_group_stats(data: &LabeledDataset) -> Result<GroupStats> {
    let n = data.n();
    if n == 0 {
        return Err(Error::EmptyDataset(
            "cannot compute group statistics".into(),
        ));
    }
    let mut counts = vec![0usize; data.num_groups()];
    for i in 0..n {
        counts[data.group_index(i)] += 1;
    }
    let priors = counts.iter().map(|&c| c as f64 / n as f64).collect();
    let n_min = counts.iter().copied().filter(|&c| c > 0).min().unwrap_or(0);
    Ok(GroupStats {
        counts,
        priors,
        n_min,
        num_classes: data.num_classes(),
        num_domains: data.num_domains(),
    })
}
