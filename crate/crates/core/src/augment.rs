//! Retraining pipelines: plain training, group/class downsampling and
//! upweighting, averaged group downsampling, misclassification
//! self-finetuning and pseudo-annotation upweighting.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{compute_group_stats, GroupStats, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::rad::{rad_uw_with, RadConfig};
use crate::rng::{RngSeed, Stream};
use crate::solvers::{
    average_models, fit_l1_logistic, gradient_descent, FitDiagnostics, LogisticLoss, Trainer,
};
use crate::weighting::WeightingScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Llr,
    Gds,
    Guw,
    Cds,
    Cuw,
    GdsAveraged,
    MSelf,
    RadUw,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Llr,
        Method::Gds,
        Method::Guw,
        Method::Cds,
        Method::Cuw,
        Method::GdsAveraged,
        Method::MSelf,
        Method::RadUw,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Llr => "llr",
            Method::Gds => "gds",
            Method::Guw => "guw",
            Method::Cds => "cds",
            Method::Cuw => "cuw",
            Method::GdsAveraged => "gds-averaged",
            Method::MSelf => "m-self",
            Method::RadUw => "rad-uw",
        }
    }

    /// True for methods whose output depends on the domain column.
    pub fn reads_domains(&self) -> bool {
        matches!(self, Method::Gds | Method::Guw | Method::GdsAveraged)
    }

    /// True for methods that draw random subsamples.
    pub fn is_randomized(&self) -> bool {
        matches!(
            self,
            Method::Gds | Method::Cds | Method::GdsAveraged | Method::MSelf
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BalanceBy {
    Group,
    Class,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MSelfConfig {
    pub finetune_steps: usize,
    pub learning_rate: f64,
    pub points_per_class: usize,
}

impl Default for MSelfConfig {
    fn default() -> Self {
        Self {
            finetune_steps: 100,
            learning_rate: 0.1,
            points_per_class: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSpec {
    pub method: Method,
    /// Learner used for the final fit (its λ is the retraining λ).
    pub trainer: Trainer,
    pub averaging_runs: usize,
    pub mself: MSelfConfig,
    /// Identification stage and upweight factor; read by `m-self` (λ_ID only) and `rad-uw`.
    pub rad: RadConfig,
}

impl PipelineSpec {
    pub fn new(method: Method, trainer: Trainer) -> Self {
        Self {
            method,
            trainer,
            averaging_runs: 10,
            mself: MSelfConfig::default(),
            rad: RadConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.averaging_runs == 0 {
            return Err(Error::InvalidConfig(
                "averaging_runs must be at least 1".into(),
            ));
        }
        if self.method == Method::MSelf
            && !(self.mself.learning_rate > 0.0 && self.mself.learning_rate.is_finite())
        {
            return Err(Error::InvalidConfig(
                "m-self learning rate must be positive".into(),
            ));
        }
        if matches!(self.method, Method::MSelf | Method::RadUw) {
            self.rad.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineFlag {
    /// `rad-uw` found no misclassified samples; the result is plain training.
    NoPseudoMinority,
    /// `m-self` found no misclassified samples; the result is the identification model.
    EmptyErrorSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub model: LinearModel,
    pub diagnostics: Option<FitDiagnostics>,
    pub flags: Vec<PipelineFlag>,
    /// Pseudo-annotation count for `rad-uw`, error-set size for `m-self`.
    pub minority_count: Option<usize>,
}

impl PipelineOutput {
    fn plain(model: LinearModel, diagnostics: Option<FitDiagnostics>) -> Self {
        Self {
            model,
            diagnostics,
            flags: Vec::new(),
            minority_count: None,
        }
    }
}

/// Uniform subsample without replacement leaving every group (or class)
/// with the size of the smallest one. Row order of the output follows the
/// input.
pub fn downsample(data: &LabeledDataset, by: BalanceBy, seed: RngSeed) -> Result<LabeledDataset> {
    let indices = downsample_indices(data, by, seed)?;
    Ok(data.select(&indices))
}

pub fn downsample_indices(
    data: &LabeledDataset,
    by: BalanceBy,
    seed: RngSeed,
) -> Result<Vec<usize>> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset("nothing to downsample".into()));
    }
    let (units, unit_of): (usize, Box<dyn Fn(usize) -> usize>) = match by {
        BalanceBy::Group => (data.num_groups(), Box::new(|i| data.group_index(i))),
        BalanceBy::Class => (data.num_classes(), Box::new(|i| data.y()[i])),
    };
    let mut members = vec![Vec::new(); units];
    for i in 0..data.n() {
        members[unit_of(i)].push(i);
    }
    if let Some(u) = members.iter().position(Vec::is_empty) {
        return Err(Error::EmptyGroup(format!(
            "balancing unit {u} has no samples"
        )));
    }
    let n_min = members
        .iter()
        .map(Vec::len)
        .min()
        .expect("at least one unit");
    let mut rng = seed.rng();
    let mut chosen = Vec::with_capacity(n_min * units);
    for rows in &members {
        chosen.extend(
            index::sample(&mut rng, rows.len(), n_min)
                .into_iter()
                .map(|j| rows[j]),
        );
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// Costs `1 / (g π(y,d))` per group, or `1 / (K π(y))` per class.
pub fn upweight_costs(stats: &GroupStats, by: BalanceBy) -> Result<WeightingScheme> {
    let m = stats.num_domains;
    let costs = match by {
        BalanceBy::Group => {
            let g = stats.priors.len() as f64;
            stats
                .priors
                .iter()
                .enumerate()
                .map(|(i, &p)| {
                    if p > 0.0 {
                        Ok(1.0 / (g * p))
                    } else {
                        Err(Error::EmptyGroup(format!("group {i} has zero prior")))
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
        BalanceBy::Class => {
            let class = stats.class_priors();
            let k = class.len() as f64;
            if let Some(y) = class.iter().position(|&p| p <= 0.0) {
                return Err(Error::EmptyGroup(format!("class {y} has zero prior")));
            }
            (0..stats.priors.len())
                .map(|i| 1.0 / (k * class[i / m]))
                .collect()
        }
    };
    Ok(WeightingScheme::PerGroup {
        num_domains: m,
        costs,
    })
}

/// Runs one method on `train`. Randomised methods draw from `seed`.
pub fn run_pipeline(
    spec: &PipelineSpec,
    train: &LabeledDataset,
    seed: RngSeed,
) -> Result<PipelineOutput> {
    spec.validate()?;
    let seed = seed.for_stream(Stream::Downsample);
    match spec.method {
        Method::Llr => {
            let fit = spec.trainer.fit(train, &WeightingScheme::Uniform)?;
            Ok(PipelineOutput::plain(fit.model, fit.diagnostics))
        }
        Method::Gds | Method::Cds => {
            let by = if spec.method == Method::Gds {
                BalanceBy::Group
            } else {
                BalanceBy::Class
            };
            let sub = downsample(train, by, seed)?;
            let fit = spec.trainer.fit(&sub, &WeightingScheme::Uniform)?;
            Ok(PipelineOutput::plain(fit.model, fit.diagnostics))
        }
        Method::Guw | Method::Cuw => {
            let by = if spec.method == Method::Guw {
                BalanceBy::Group
            } else {
                BalanceBy::Class
            };
            let costs = upweight_costs(&compute_group_stats(train)?, by)?;
            let fit = spec.trainer.fit(train, &costs)?;
            Ok(PipelineOutput::plain(fit.model, fit.diagnostics))
        }
        Method::GdsAveraged => {
            let models = (0..spec.averaging_runs as u64)
                .map(|r| {
                    let sub = downsample(train, BalanceBy::Group, seed.derive(r))?;
                    Ok(spec.trainer.fit(&sub, &WeightingScheme::Uniform)?.model)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(PipelineOutput::plain(average_models(&models)?, None))
        }
        Method::MSelf => run_mself(spec, train, seed),
        Method::RadUw => {
            let out = rad_uw_with(train, &spec.rad, &spec.trainer)?;
            let mut flags = Vec::new();
            if out.no_pseudo_minority {
                flags.push(PipelineFlag::NoPseudoMinority);
            }
            Ok(PipelineOutput {
                model: out.model,
                diagnostics: out.diagnostics,
                flags,
                minority_count: Some(out.annotation.minority_count),
            })
        }
    }
}

/// Identification model, then full-batch finetuning on a class-balanced
/// subset of its training errors. Falls back to the identification model
/// (with [`PipelineFlag::EmptyErrorSet`]) when it makes no errors.
pub fn run_mself(
    spec: &PipelineSpec,
    train: &LabeledDataset,
    seed: RngSeed,
) -> Result<PipelineOutput> {
    let id_cfg = spec.rad.solver.with_lambda(spec.rad.lambda_id);
    let (id_model, id_diag) = fit_l1_logistic(train, &WeightingScheme::Uniform, &id_cfg)?;
    let predictions = id_model.predict(train.features())?;
    let mut errors = vec![Vec::new(); train.num_classes()];
    for (i, (&p, &y)) in predictions.iter().zip(train.y()).enumerate() {
        if p != y {
            errors[y].push(i);
        }
    }
    let total: usize = errors.iter().map(Vec::len).sum();
    if total == 0 {
        return Ok(PipelineOutput {
            model: id_model,
            diagnostics: Some(id_diag),
            flags: vec![PipelineFlag::EmptyErrorSet],
            minority_count: Some(0),
        });
    }
    let mut rng = seed.rng();
    let mut chosen = Vec::new();
    for rows in &errors {
        let take = rows.len().min(spec.mself.points_per_class);
        chosen.extend(
            index::sample(&mut rng, rows.len(), take)
                .into_iter()
                .map(|j| rows[j]),
        );
    }
    chosen.sort_unstable();
    let error_set = train.select(&chosen);
    let loss = LogisticLoss::new(&error_set, &WeightingScheme::Uniform)?;
    let model = gradient_descent(
        &loss,
        &id_model,
        spec.mself.finetune_steps,
        spec.mself.learning_rate,
    )?;
    Ok(PipelineOutput {
        model,
        diagnostics: None,
        flags: Vec::new(),
        minority_count: Some(total),
    })
}
