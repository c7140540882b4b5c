//! Retrain/holdout splitting and optional feature standardisation.

use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::LinearModel;
use crate::rng::RngSeed;

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub retrain: LabeledDataset,
    pub holdout: LabeledDataset,
    /// Row indices into the original data, ascending.
    pub retrain_idx: Vec<usize>,
    pub holdout_idx: Vec<usize>,
}

/// Uniform disjoint split; `fraction` of the rows (rounded) go to retraining.
pub fn split_holdout(data: &LabeledDataset, fraction: f64, seed: RngSeed) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    let n = data.n();
    if n < 2 {
        return Err(Error::TooSmall(format!("cannot split {n} rows")));
    }
    let n_retrain = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut retrain_idx = order[..n_retrain].to_vec();
    let mut holdout_idx = order[n_retrain..].to_vec();
    retrain_idx.sort_unstable();
    holdout_idx.sort_unstable();
    Ok(Split {
        retrain: data.select(&retrain_idx),
        holdout: data.select(&holdout_idx),
        retrain_idx,
        holdout_idx,
    })
}

/// Per-feature z-scoring fitted on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    /// Constant columns get scale 1.
    pub fn fit(data: &LabeledDataset) -> Result<Self> {
        if data.n() == 0 {
            return Err(Error::EmptyDataset(
                "cannot standardise an empty dataset".into(),
            ));
        }
        let x = data.features();
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
        Ok(Self { mean, scale })
    }

    pub fn apply(&self, data: &LabeledDataset) -> Result<LabeledDataset> {
        let z = (&data.features() - &self.mean) / &self.scale;
        data.with_features(z)
    }

    /// Model on raw features equivalent to `model` on standardised ones.
    pub fn unstandardize(&self, model: &LinearModel) -> Result<LinearModel> {
        let w = &model.weights() / &self.scale.view().insert_axis(Axis(1));
        let b = &model.bias() - &self.mean.dot(&w);
        LinearModel::new(w, b, model.link())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Link;
    use crate::rng::Stream;
    use ndarray::{array, Array2};

    fn rows(n: usize) -> LabeledDataset {
        let x = Array2::from_shape_fn((n, 1), |(i, _)| i as f64);
        LabeledDataset::new(x, vec![0; n], vec![0; n], 1, 1).unwrap()
    }

    #[test]
    fn halves_are_disjoint_and_cover() {
        let s = split_holdout(&rows(100), 0.5, RngSeed::new(1, Stream::Split)).unwrap();
        assert_eq!((s.retrain.n(), s.holdout.n()), (50, 50));
        let mut all: Vec<usize> = s
            .retrain_idx
            .iter()
            .chain(&s.holdout_idx)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let again = split_holdout(&rows(100), 0.5, RngSeed::new(1, Stream::Split)).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn too_small() {
        assert_eq!(
            split_holdout(&rows(1), 0.5, RngSeed::new(1, Stream::Split))
                .unwrap_err()
                .code(),
            "too-small"
        );
    }

    #[test]
    fn unstandardize_preserves_scores() {
        let x = array![[1.0, 10.0], [2.0, 30.0], [4.0, 20.0]];
        let data = LabeledDataset::new(x, vec![0, 1, 1], vec![0, 0, 1], 2, 2).unwrap();
        let st = Standardizer::fit(&data).unwrap();
        let z = st.apply(&data).unwrap();
        let model = LinearModel::scalar(array![0.7, -1.3], 0.2, Link::Sigmoid).unwrap();
        let raw = st.unstandardize(&model).unwrap();
        let a = model.scores(z.features()).unwrap();
        let b = raw.scores(data.features()).unwrap();
        assert!((&a - &b).iter().all(|v| v.abs() < 1e-12));
    }
}
