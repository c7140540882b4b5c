//! Base learners and the shared dispatch used by every pipeline.

pub mod logistic;
pub mod lsq;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::weighting::WeightingScheme;

pub use logistic::{
    fit_l1_logistic, fit_l2_logistic, fit_logistic, gradient_descent, FitDiagnostics, LogRegConfig,
    LogisticLoss, Penalty, StepRule,
};
pub use lsq::{fit_weighted_least_squares, LsqConfig, WeightedMoments};

/// `sign(v) · max(|v| − t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Base learner plus its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Trainer {
    L1Logistic(LogRegConfig),
    L2Logistic(LogRegConfig),
    LeastSquares(LsqConfig),
}

impl Default for Trainer {
    fn default() -> Self {
        Trainer::L1Logistic(LogRegConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: LinearModel,
    /// `None` for the closed-form least-squares learner.
    pub diagnostics: Option<FitDiagnostics>,
}

impl Trainer {
    pub fn fit(&self, data: &LabeledDataset, weights: &WeightingScheme) -> Result<Fit> {
        match self {
            Trainer::L1Logistic(cfg) => {
                let (model, d) = fit_l1_logistic(data, weights, cfg)?;
                Ok(Fit {
                    model,
                    diagnostics: Some(d),
                })
            }
            Trainer::L2Logistic(cfg) => {
                let (model, d) = fit_l2_logistic(data, weights, cfg)?;
                Ok(Fit {
                    model,
                    diagnostics: Some(d),
                })
            }
            Trainer::LeastSquares(cfg) => Ok(Fit {
                model: fit_weighted_least_squares(data, weights, cfg)?,
                diagnostics: None,
            }),
        }
    }

    /// Same learner with its penalty replaced; least squares ignores it.
    pub fn with_lambda(&self, lambda: f64) -> Self {
        match *self {
            Trainer::L1Logistic(cfg) => Trainer::L1Logistic(cfg.with_lambda(lambda)),
            Trainer::L2Logistic(cfg) => Trainer::L2Logistic(cfg.with_lambda(lambda)),
            Trainer::LeastSquares(cfg) => Trainer::LeastSquares(cfg),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Trainer::L1Logistic(cfg) | Trainer::L2Logistic(cfg) => Some(cfg.lambda),
            Trainer::LeastSquares(_) => None,
        }
    }
}

/// Parameter-wise mean of models with identical shape and link.
pub fn average_models(models: &[LinearModel]) -> Result<LinearModel> {
    let first = models
        .first()
        .ok_or_else(|| Error::EmptyDataset("no models to average".into()))?;
    let mut w: Array2<f64> = Array2::zeros(first.weights().raw_dim());
    let mut b: Array1<f64> = Array1::zeros(first.bias().raw_dim());
    for m in models {
        if m.weights().dim() != first.weights().dim() || m.link() != first.link() {
            return Err(Error::ShapeMismatch(
                "models to average differ in shape or link".into(),
            ));
        }
        w += &m.weights();
        b += &m.bias();
    }
    let k = models.len() as f64;
    LinearModel::new(w / k, b / k, first.link())
}
