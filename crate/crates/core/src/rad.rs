//! Pseudo-annotation of minority samples from the errors of a regularised
//! identification model, and retraining with those samples upweighted.
//!
//! Neither stage reads the domain column, so results are unaffected by any
//! corruption of domain labels.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::solvers::{fit_logistic, FitDiagnostics, LogRegConfig, Penalty, Trainer};
use crate::weighting::WeightingScheme;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadConfig {
    /// Penalty strength of the identification model.
    pub lambda_id: f64,
    /// Penalty strength of the retrained model.
    pub retrain_lambda: f64,
    /// Cost of every pseudo-minority sample; the rest cost 1.
    pub upweight_factor: f64,
    pub id_penalty: Penalty,
    pub retrain_penalty: Penalty,
    /// Iteration budget, tolerance and step rule shared by both stages.
    pub solver: LogRegConfig,
}

impl Default for RadConfig {
    fn default() -> Self {
        Self {
            lambda_id: 1e-3,
            retrain_lambda: 1e-4,
            upweight_factor: 10.0,
            id_penalty: Penalty::L1,
            retrain_penalty: Penalty::L1,
            solver: LogRegConfig::default(),
        }
    }
}

impl RadConfig {
    pub fn validate(&self) -> Result<()> {
        for l in [self.lambda_id, self.retrain_lambda] {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidLambda(l));
            }
        }
        if !(self.upweight_factor > 0.0 && self.upweight_factor.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "upweight factor {} must be positive",
                self.upweight_factor
            )));
        }
        Ok(())
    }

    /// The retraining learner implied by this config.
    pub fn retrain_trainer(&self) -> Trainer {
        let cfg = self.solver.with_lambda(self.retrain_lambda);
        match self.retrain_penalty {
            Penalty::L1 => Trainer::L1Logistic(cfg),
            Penalty::L2 => Trainer::L2Logistic(cfg),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadAnnotation {
    /// 1 where the identification model misclassifies the sample.
    pub d_tilde: Vec<u8>,
    pub id_model: LinearModel,
    pub id_diagnostics: FitDiagnostics,
    pub minority_count: usize,
}

/// Fits the identification model with uniform costs and marks its errors.
pub fn rad_annotate(data: &LabeledDataset, cfg: &RadConfig) -> Result<RadAnnotation> {
    cfg.validate()?;
    let id_cfg = cfg.solver.with_lambda(cfg.lambda_id);
    let (id_model, id_diagnostics) =
        fit_logistic(data, &WeightingScheme::Uniform, &id_cfg, cfg.id_penalty)?;
    let predictions = id_model.predict(data.features())?;
    let d_tilde: Vec<u8> = predictions
        .iter()
        .zip(data.y())
        .map(|(p, y)| u8::from(p != y))
        .collect();
    let minority_count = d_tilde.iter().map(|&v| v as usize).sum();
    Ok(RadAnnotation {
        d_tilde,
        id_model,
        id_diagnostics,
        minority_count,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadOutput {
    pub model: LinearModel,
    pub diagnostics: Option<FitDiagnostics>,
    pub annotation: RadAnnotation,
    /// Set when nothing was misclassified and the retrain is plain uniform-cost training.
    pub no_pseudo_minority: bool,
}

/// Annotates, then retrains on all samples with pseudo-minorities upweighted.
pub fn rad_uw(data: &LabeledDataset, cfg: &RadConfig) -> Result<RadOutput> {
    rad_uw_with(data, cfg, &cfg.retrain_trainer())
}

/// As [`rad_uw`] with an explicit retraining learner.
pub fn rad_uw_with(data: &LabeledDataset, cfg: &RadConfig, retrain: &Trainer) -> Result<RadOutput> {
    let annotation = rad_annotate(data, cfg)?;
    let annotated = data.clone().with_d_tilde(annotation.d_tilde.clone())?;
    let no_pseudo_minority = annotation.minority_count == 0;
    let fit = retrain.fit(
        &annotated,
        &WeightingScheme::PseudoMinority {
            factor: cfg.upweight_factor,
        },
    )?;
    Ok(RadOutput {
        model: fit.model,
        diagnostics: fit.diagnostics,
        annotation,
        no_pseudo_minority,
    })
}
