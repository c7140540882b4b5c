//! Per-sample loss costs `c` for the weighted objective.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum WeightingScheme {
    /// Every cost is 1.
    Uniform,
    /// Cost `c(y, d)` looked up from the sample's group; indexed `y * M + d`.
    PerGroup { num_domains: usize, costs: Vec<f64> },
    /// Cost `factor` where the pseudo-annotation is 1, otherwise 1.
    PseudoMinority { factor: f64 },
}

impl WeightingScheme {
    pub fn validate(&self) -> Result<()> {
        let bad = |c: f64| !(c.is_finite() && c > 0.0);
        match self {
            WeightingScheme::Uniform => Ok(()),
            WeightingScheme::PerGroup { costs, .. } => match costs.iter().find(|&&c| bad(c)) {
                Some(c) => Err(Error::InvalidConfig(format!(
                    "group cost {c} must be positive"
                ))),
                None => Ok(()),
            },
            WeightingScheme::PseudoMinority { factor } if bad(*factor) => Err(
                Error::InvalidConfig(format!("upweight factor {factor} must be positive")),
            ),
            WeightingScheme::PseudoMinority { .. } => Ok(()),
        }
    }

    /// Expands to one cost per row. Only `PerGroup` reads the domain column and
    /// only `PseudoMinority` reads `d_tilde`.
    pub fn sample_weights(&self, data: &LabeledDataset) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            WeightingScheme::Uniform => Ok(vec![1.0; data.n()]),
            WeightingScheme::PerGroup { num_domains, costs } => {
                if *num_domains != data.num_domains() || costs.len() != data.num_groups() {
                    return Err(Error::ShapeMismatch(format!(
                        "{} group costs for {} groups",
                        costs.len(),
                        data.num_groups()
                    )));
                }
                Ok((0..data.n()).map(|i| costs[data.group_index(i)]).collect())
            }
            WeightingScheme::PseudoMinority { factor } => {
                let t = data.d_tilde().ok_or_else(|| {
                    Error::InvalidConfig("pseudo-minority weighting needs d_tilde".into())
                })?;
                Ok(t.iter()
                    .map(|&v| if v == 1 { *factor } else { 1.0 })
                    .collect())
            }
        }
    }
}
