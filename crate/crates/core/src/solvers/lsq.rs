//! Weighted least squares on `{0,1}` targets with an identity-threshold link.
//!
//! The fit solves the weighted analogue of `w = Var(X)⁻¹ Cov(X, Y)`,
//! `b = E[Y] − wᵀE[X]` where all moments are taken under the normalised
//! sample weights. The same [`WeightedMoments::solve`] is used for exact
//! population moments, which is how downsampling and upweighting are compared
//! without sampling error.

use nalgebra::{Cholesky, DMatrix, DVector};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{LinearModel, Link};
use crate::weighting::WeightingScheme;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LsqConfig {
    /// Ridge added to `Var(X)`, relative to its mean diagonal entry.
    pub jitter: f64,
}

impl Default for LsqConfig {
    fn default() -> Self {
        Self { jitter: 1e-10 }
    }
}

/// First and second moments of `(X, Y)` under some weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMoments {
    pub mean_x: DVector<f64>,
    pub mean_y: f64,
    pub cov_xx: DMatrix<f64>,
    pub cov_xy: DVector<f64>,
}

impl WeightedMoments {
    /// Moments of the rows of `data` with per-row weights (normalised internally).
    pub fn from_data(data: &LabeledDataset, weights: &[f64]) -> Result<Self> {
        let n = data.n();
        if n == 0 {
            return Err(Error::EmptyDataset("no rows for least squares".into()));
        }
        if weights.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for {n} rows",
                weights.len()
            )));
        }
        if data.num_classes() != 2 {
            return Err(Error::InvalidLabel(format!(
                "least squares needs binary classes, got K = {}",
                data.num_classes()
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidConfig(
                "weights must have positive sum".into(),
            ));
        }
        let m = data.m();
        let x = data.features();
        let y = data.y();

        let mut mean_x = DVector::zeros(m);
        let mut mean_y = 0.0;
        for (i, &c) in weights.iter().enumerate() {
            for j in 0..m {
                mean_x[j] += c * x[[i, j]];
            }
            mean_y += c * y[i] as f64;
        }
        mean_x /= total;
        mean_y /= total;

        let mut cov_xx = DMatrix::zeros(m, m);
        let mut cov_xy = DVector::zeros(m);
        let mut centered = vec![0.0; m];
        for (i, &c) in weights.iter().enumerate() {
            for j in 0..m {
                centered[j] = x[[i, j]] - mean_x[j];
            }
            let ty = y[i] as f64 - mean_y;
            for a in 0..m {
                let ca = c * centered[a];
                cov_xy[a] += ca * ty;
                for b in a..m {
                    cov_xx[(a, b)] += ca * centered[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                cov_xx[(a, b)] = cov_xx[(b, a)];
            }
        }
        cov_xx /= total;
        cov_xy /= total;
        Ok(Self {
            mean_x,
            mean_y,
            cov_xx,
            cov_xy,
        })
    }

    /// Solves the normal equations, returning a threshold-link model.
    pub fn solve(&self, cfg: &LsqConfig) -> Result<LinearModel> {
        if !(cfg.jitter >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "jitter {} must be >= 0",
                cfg.jitter
            )));
        }
        let m = self.mean_x.len();
        let scale = self.cov_xx.trace() / m as f64;
        let mut a = self.cov_xx.clone();
        for j in 0..m {
            a[(j, j)] += cfg.jitter * scale;
        }
        let w = Cholesky::new(a)
            .map(|c| c.solve(&self.cov_xy))
            .ok_or_else(|| Error::SingularMoments("Var(X) is not positive definite".into()))?;
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularMoments("non-finite solution".into()));
        }
        let b = self.mean_y - w.dot(&self.mean_x);
        LinearModel::scalar(
            Array1::from_iter(w.iter().copied()),
            b,
            Link::IdentityThreshold,
        )
    }
}

pub fn fit_weighted_least_squares(
    data: &LabeledDataset,
    weights: &WeightingScheme,
    cfg: &LsqConfig,
) -> Result<LinearModel> {
    let c = weights.sample_weights(data)?;
    WeightedMoments::from_data(data, &c)?.solve(cfg)
}
