//! Last-layer linear classifiers.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How scores become labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    /// Scalar score `wᵀx + b`; label 1 iff the score is strictly above 1/2.
    IdentityThreshold,
    /// Scalar logit; label 1 iff `σ(wᵀx + b) > 1/2`, i.e. the logit is strictly positive.
    Sigmoid,
    /// One score per class; label is the argmax (lowest index on ties).
    SoftmaxArgmax,
}

/// `θ = (w, b)`. `weights` is `m × k` with `k = 1` for the scalar links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    weights: Array2<f64>,
    bias: Array1<f64>,
    link: Link,
}

impl LinearModel {
    pub fn new(weights: Array2<f64>, bias: Array1<f64>, link: Link) -> Result<Self> {
        let k = weights.ncols();
        if bias.len() != k {
            return Err(Error::ShapeMismatch(format!(
                "bias has {} entries for {} outputs",
                bias.len(),
                k
            )));
        }
        match link {
            Link::IdentityThreshold | Link::Sigmoid if k != 1 => {
                return Err(Error::ShapeMismatch(format!(
                    "{link:?} needs one output, got {k}"
                )))
            }
            Link::SoftmaxArgmax if k < 2 => {
                return Err(Error::ShapeMismatch(
                    "softmax needs at least two outputs".into(),
                ))
            }
            _ => {}
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Diverged("non-finite model parameter".into()));
        }
        Ok(Self {
            weights,
            bias,
            link,
        })
    }

    /// Scalar model from a weight vector and bias.
    pub fn scalar(w: Array1<f64>, b: f64, link: Link) -> Result<Self> {
        let m = w.len();
        let weights = w
            .into_shape_with_order((m, 1))
            .expect("vector reshapes to a column");
        Self::new(weights, Array1::from_elem(1, b), link)
    }

    pub fn zeros(m: usize, num_classes: usize, link: Link) -> Self {
        let k = if link == Link::SoftmaxArgmax {
            num_classes
        } else {
            1
        };
        Self {
            weights: Array2::zeros((m, k)),
            bias: Array1::zeros(k),
            link,
        }
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn bias(&self) -> ArrayView1<'_, f64> {
        self.bias.view()
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_classes(&self) -> usize {
        match self.link {
            Link::SoftmaxArgmax => self.outputs(),
            _ => 2,
        }
    }

    /// The weight column of a scalar model.
    pub fn w(&self) -> ArrayView1<'_, f64> {
        self.weights.column(0)
    }

    /// Bias of a scalar model.
    pub fn b(&self) -> f64 {
        self.bias[0]
    }

    /// Raw scores `Xw + b`, `n × k`.
    pub fn scores(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "features have width {} but the model expects {}",
                features.ncols(),
                self.input_dim()
            )));
        }
        Ok(features.dot(&self.weights) + &self.bias)
    }

    pub fn predict(&self, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
        let scores = self.scores(features)?;
        Ok(scores
            .rows()
            .into_iter()
            .map(|s| self.label_from_scores(s))
            .collect())
    }

    pub fn label_from_scores(&self, s: ArrayView1<'_, f64>) -> usize {
        match self.link {
            Link::IdentityThreshold => usize::from(s[0] > 0.5),
            Link::Sigmoid => usize::from(s[0] > 0.0),
            Link::SoftmaxArgmax => {
                let mut best = 0;
                for (j, &v) in s.iter().enumerate().skip(1) {
                    if v > s[best] {
                        best = j;
                    }
                }
                best
            }
        }
    }

    /// Number of exactly-zero weights.
    pub fn sparsity(&self) -> usize {
        self.weights.iter().filter(|&&v| v == 0.0).count()
    }
}

/// Labels for every row of `features`.
pub fn predict(model: &LinearModel, features: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    model.predict(features)
}
