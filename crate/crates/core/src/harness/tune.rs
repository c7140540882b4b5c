//! Grid search on clean-holdout worst-group accuracy.
//!
//! Each noise seed picks its best grid point; the point chosen most often
//! across seeds is then fixed for every seed. Ties within a seed go to the
//! stronger penalty (smaller inverse strength) for the retraining fit, then
//! for the identification model, then to the smaller upweight factor. Ties in
//! the vote go to the higher mean score, then the same preference order.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{run_pipeline, Method, PipelineOutput, PipelineSpec};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::harness::config::{method_grid, rad_config_for, trainer_for, ExperimentConfig, Hyper};
use crate::metrics::per_group_accuracy;
use crate::model::LinearModel;
use crate::rad::rad_annotate;
use crate::rng::RngSeed;
use crate::weighting::WeightingScheme;

/// Full pipeline description for one grid point on `n` training rows.
pub fn pipeline_for(
    cfg: &ExperimentConfig,
    method: Method,
    hyper: &Hyper,
    n: usize,
) -> PipelineSpec {
    PipelineSpec {
        method,
        trainer: trainer_for(cfg, hyper, n),
        averaging_runs: cfg.averaging_runs,
        mself: cfg.mself,
        rad: rad_config_for(cfg, hyper, n),
    }
}

/// Fits one grid point.
pub fn fit_point(
    cfg: &ExperimentConfig,
    method: Method,
    hyper: &Hyper,
    retrain: &LabeledDataset,
    seed: RngSeed,
) -> Result<PipelineOutput> {
    run_pipeline(
        &pipeline_for(cfg, method, hyper, retrain.n()),
        retrain,
        seed,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridScore {
    pub hyper: Hyper,
    /// Holdout WGA; `None` when the fit failed.
    pub wga: Option<f64>,
}

/// Holdout WGA of every grid point of `method`. Failing points score `None`.
/// `to_raw` maps a fitted model back to the holdout's feature space.
pub fn score_grid(
    cfg: &ExperimentConfig,
    method: Method,
    retrain: &LabeledDataset,
    holdout: &LabeledDataset,
    seed: RngSeed,
    to_raw: &(dyn Fn(&LinearModel) -> Result<LinearModel> + Sync),
) -> Result<Vec<GridScore>> {
    let grid = method_grid(cfg, method)?;
    let score = |model: Result<LinearModel>| -> Option<f64> {
        let model = to_raw(&model.ok()?).ok()?;
        per_group_accuracy(&model, holdout).ok()?.worst()
    };
    if method != Method::RadUw {
        return Ok(grid
            .par_iter()
            .map(|h| GridScore {
                hyper: *h,
                wga: score(fit_point(cfg, method, h, retrain, seed).map(|o| o.model)),
            })
            .collect());
    }
    // one identification fit per λ_ID, shared by every (λ, c) behind it
    let mut by_id: Vec<(Option<u64>, Vec<Hyper>)> = Vec::new();
    for h in grid {
        let key = h.lambda_id.map(f64::to_bits);
        match by_id.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(h),
            None => by_id.push((key, vec![h])),
        }
    }
    let n = retrain.n();
    let scores: Vec<Vec<GridScore>> = by_id
        .par_iter()
        .map(|(_, points)| {
            let annotated = rad_annotate(retrain, &rad_config_for(cfg, &points[0], n))
                .and_then(|a| retrain.clone().with_d_tilde(a.d_tilde));
            points
                .par_iter()
                .map(|h| {
                    let model = match &annotated {
                        Ok(data) => {
                            let factor = rad_config_for(cfg, h, n).upweight_factor;
                            trainer_for(cfg, h, n)
                                .fit(data, &WeightingScheme::PseudoMinority { factor })
                                .map(|f| f.model)
                        }
                        Err(e) => Err(Error::InvalidConfig(e.to_string())),
                    };
                    GridScore {
                        hyper: *h,
                        wga: score(model),
                    }
                })
                .collect()
        })
        .collect();
    Ok(scores.into_iter().flatten().collect())
}

/// `Greater` when `a` is preferred to `b` at equal score.
fn prefer(a: &Hyper, b: &Hyper) -> Ordering {
    let smaller = |x: Option<f64>, y: Option<f64>| match (x, y) {
        (Some(x), Some(y)) => y.total_cmp(&x),
        _ => Ordering::Equal,
    };
    smaller(a.lambda, b.lambda)
        .then(smaller(a.lambda_id, b.lambda_id))
        .then(smaller(a.upweight, b.upweight))
}

/// Best-scoring grid point, if any fit succeeded.
pub fn select_best(scores: &[GridScore]) -> Option<(Hyper, f64)> {
    scores
        .iter()
        .filter_map(|s| s.wga.map(|w| (s.hyper, w)))
        .max_by(|(ha, wa), (hb, wb)| wa.total_cmp(wb).then(prefer(ha, hb)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub chosen: Hyper,
    /// Winner per noise seed (`None` when every point failed for that seed).
    pub per_seed: Vec<Option<Hyper>>,
    /// Mean holdout WGA of `chosen` across seeds.
    pub mean_wga: f64,
    pub warnings: Vec<String>,
}

/// Fixes the modal per-seed winner.
pub fn choose_modal(method: Method, per_seed_scores: &[Vec<GridScore>]) -> Result<TuneResult> {
    let per_seed: Vec<Option<Hyper>> = per_seed_scores
        .iter()
        .map(|s| select_best(s).map(|(h, _)| h))
        .collect();
    let mut votes: HashMap<[Option<u64>; 3], (Hyper, usize)> = HashMap::new();
    for h in per_seed.iter().flatten() {
        votes.entry(h.key()).or_insert((*h, 0)).1 += 1;
    }
    let mean_score = |h: &Hyper| {
        let v: Vec<f64> = per_seed_scores
            .iter()
            .filter_map(|s| {
                s.iter()
                    .find(|g| g.hyper.key() == h.key())
                    .and_then(|g| g.wga)
            })
            .collect();
        if v.is_empty() {
            f64::NEG_INFINITY
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let (chosen, mean_wga) = votes
        .values()
        .map(|(h, count)| (*h, *count, mean_score(h)))
        .max_by(|a, b| {
            a.1.cmp(&b.1)
                .then(a.2.total_cmp(&b.2))
                .then(prefer(&a.0, &b.0))
        })
        .map(|(h, _, m)| (h, m))
        .ok_or_else(|| Error::TuningFailed(method.to_string()))?;

    let mut warnings = Vec::new();
    if let (Some(c), Some(first)) = (chosen.lambda_id, per_seed_scores.first()) {
        let mut ids: Vec<f64> = first.iter().filter_map(|g| g.hyper.lambda_id).collect();
        ids.sort_by(f64::total_cmp);
        ids.dedup();
        if ids.len() >= 3 && (c == ids[0] || c == ids[ids.len() - 1]) {
            warnings.push(format!(
                "grid-edge: {method} chose identification inverse strength {c} at the edge of [{}, {}]",
                ids[0],
                ids[ids.len() - 1]
            ));
        }
    }
    Ok(TuneResult {
        chosen,
        per_seed,
        mean_wga,
        warnings,
    })
}

/// Single-dataset tuning: score the grid once and return the best point.
pub fn tune(
    cfg: &ExperimentConfig,
    method: Method,
    retrain: &LabeledDataset,
    holdout: &LabeledDataset,
    seed: RngSeed,
) -> Result<TuneResult> {
    let scores = score_grid(cfg, method, retrain, holdout, seed, &|m| Ok(m.clone()))?;
    choose_modal(method, &[scores])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Grid;
    use crate::rng::Stream;
    use crate::synthgen::{sample, MixtureSpec};

    fn h(l: f64, c: Option<f64>) -> Hyper {
        Hyper {
            lambda: Some(l),
            lambda_id: None,
            upweight: c,
        }
    }

    #[test]
    fn ties_prefer_stronger_penalty_then_smaller_factor() {
        let scores = vec![
            GridScore {
                hyper: h(1.0, Some(5.0)),
                wga: Some(0.9),
            },
            GridScore {
                hyper: h(0.1, Some(10.0)),
                wga: Some(0.9),
            },
            GridScore {
                hyper: h(0.1, Some(5.0)),
                wga: Some(0.9),
            },
            GridScore {
                hyper: h(0.01, None),
                wga: None,
            },
        ];
        assert_eq!(select_best(&scores).unwrap().0, h(0.1, Some(5.0)));
    }

    #[test]
    fn modal_vote_and_tiebreak() {
        let a = h(1.0, None);
        let b = h(0.1, None);
        let seed = |wa: f64, wb: f64| {
            vec![
                GridScore {
                    hyper: a,
                    wga: Some(wa),
                },
                GridScore {
                    hyper: b,
                    wga: Some(wb),
                },
            ]
        };
        // a wins twice, b once
        let r = choose_modal(
            Method::Llr,
            &[seed(0.9, 0.8), seed(0.9, 0.8), seed(0.7, 0.8)],
        )
        .unwrap();
        assert_eq!(r.chosen, a);
        assert_eq!(r.per_seed, vec![Some(a), Some(a), Some(b)]);
        // one vote each: higher mean wins
        let r = choose_modal(Method::Llr, &[seed(0.9, 0.8), seed(0.5, 0.8)]).unwrap();
        assert_eq!(r.chosen, b);
    }

    #[test]
    fn all_failed() {
        let s = vec![GridScore {
            hyper: Hyper::NONE,
            wga: None,
        }];
        assert_eq!(
            choose_modal(Method::Gds, &[s]).unwrap_err().code(),
            "tuning-failed"
        );
    }

    #[test]
    fn single_point_and_failing_points() {
        let data = sample(
            &MixtureSpec::spurious_2d().with_pi0(0.1),
            400,
            RngSeed::new(1, Stream::Data),
        )
        .unwrap();
        let (train, hold) = (
            data.select(&(0..200).collect::<Vec<_>>()),
            data.select(&(200..400).collect::<Vec<_>>()),
        );
        let mut cfg = ExperimentConfig::default();
        cfg.grids.lambda = Grid::Values(vec![0.5]);
        let r = tune(
            &cfg,
            Method::Llr,
            &train,
            &hold,
            RngSeed::new(1, Stream::Downsample),
        )
        .unwrap();
        assert_eq!(r.chosen.lambda, Some(0.5));
        // a domain-balancing method on data missing a group: every point fails
        let no_minority: Vec<usize> = (0..200).filter(|&i| train.group_index(i) != 0).collect();
        let e = tune(
            &cfg,
            Method::Gds,
            &train.select(&no_minority),
            &hold,
            RngSeed::new(1, Stream::Downsample),
        )
        .unwrap_err();
        assert_eq!(e.code(), "tuning-failed");
    }

    #[test]
    fn cached_rad_scores_match_pipeline() {
        let data = sample(
            &MixtureSpec::spurious_2d().with_pi0(0.05),
            600,
            RngSeed::new(2, Stream::Data),
        )
        .unwrap();
        let (train, hold) = (
            data.select(&(0..300).collect::<Vec<_>>()),
            data.select(&(300..600).collect::<Vec<_>>()),
        );
        let mut cfg = ExperimentConfig::default();
        cfg.grids.lambda = Grid::Values(vec![1.0, 10.0]);
        cfg.grids.lambda_id = Grid::Values(vec![0.1, 1.0]);
        cfg.grids.upweight = Grid::Values(vec![2.0, 8.0]);
        let seed = RngSeed::new(0, Stream::Downsample);
        let scores =
            score_grid(&cfg, Method::RadUw, &train, &hold, seed, &|m| Ok(m.clone())).unwrap();
        assert_eq!(scores.len(), 8);
        for s in scores {
            let direct = fit_point(&cfg, Method::RadUw, &s.hyper, &train, seed).unwrap();
            let w = per_group_accuracy(&direct.model, &hold).unwrap().worst();
            assert_eq!(w, s.wga);
        }
    }
}
