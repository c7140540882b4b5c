//! Per-group and worst-group accuracy.

use serde::{Deserialize, Serialize};

use crate::data::{GroupKey, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::LinearModel;

/// Accuracy per group; `None` marks a group with no samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub num_classes: usize,
    pub num_domains: usize,
    pub accuracy: Vec<Option<f64>>,
    pub counts: Vec<usize>,
}

impl GroupAccuracy {
    pub fn get(&self, key: GroupKey) -> Option<f64> {
        self.accuracy[key.index(self.num_domains)]
    }

    /// Minimum over nonempty groups.
    pub fn worst(&self) -> Option<f64> {
        self.accuracy.iter().flatten().copied().reduce(f64::min)
    }

    /// Accuracies given directly, mainly for reporting and tests.
    pub fn from_values(num_classes: usize, num_domains: usize, accuracy: Vec<Option<f64>>) -> Self {
        let counts = accuracy.iter().map(|a| usize::from(a.is_some())).collect();
        Self {
            num_classes,
            num_domains,
            accuracy,
            counts,
        }
    }
}

pub fn group_accuracy_from_predictions(
    predictions: &[usize],
    data: &LabeledDataset,
) -> GroupAccuracy {
    let g = data.num_groups();
    let mut hits = vec![0usize; g];
    let mut counts = vec![0usize; g];
    for (i, &p) in predictions.iter().enumerate() {
        let k = data.group_index(i);
        counts[k] += 1;
        if p == data.y()[i] {
            hits[k] += 1;
        }
    }
    let accuracy = hits
        .iter()
        .zip(&counts)
        .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
        .collect();
    GroupAccuracy {
        num_classes: data.num_classes(),
        num_domains: data.num_domains(),
        accuracy,
        counts,
    }
}

pub fn per_group_accuracy(model: &LinearModel, data: &LabeledDataset) -> Result<GroupAccuracy> {
    let pred = model.predict(data.features())?;
    Ok(group_accuracy_from_predictions(&pred, data))
}

pub fn worst_group_accuracy(model: &LinearModel, data: &LabeledDataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(Error::EmptyDataset("no samples to evaluate".into()));
    }
    per_group_accuracy(model, data)?
        .worst()
        .ok_or_else(|| Error::EmptyDataset("no nonempty group".into()))
}
