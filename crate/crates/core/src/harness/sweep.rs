//! Noise-level sweeps over methods, noise seeds and training runs.
//!
//! The base data and the retrain/holdout split are fixed for the whole
//! sweep. Noise touches the retrain part only, with one stream per noise
//! seed shared by every noise level, so the flipped set grows with `p`.
//! Methods that never read domain labels are fitted once per seed and their
//! records are replicated across noise levels; deterministic ones among them
//! are fitted once overall.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{Method, PipelineFlag};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::harness::config::{method_grid, DataSource, Evaluation, ExperimentConfig, Hyper};
use crate::harness::io::load_embeddings;
use crate::harness::split::{split_holdout, Split, Standardizer};
use crate::harness::tune::{choose_modal, fit_point, score_grid, GridScore, TuneResult};
use crate::metrics::{per_group_accuracy, GroupAccuracy};
use crate::model::LinearModel;
use crate::noise::{inject, NoiseModel};
use crate::rng::{RngSeed, Stream};
use crate::solvers::FitDiagnostics;
use crate::synthgen::{sample, MixtureSpec};
use crate::theory::{ds_uw_wga, TheoryPoint};

/// Index of the random draw used while tuning randomised methods.
const TUNING_RUN: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: Method,
    pub p: f64,
    pub noise_seed: usize,
    pub train_run: usize,
    pub hyper: Hyper,
    pub wga: Option<f64>,
    /// Indexed `y * M + d`.
    pub group_accuracy: Vec<Option<f64>>,
    pub diagnostics: Option<FitDiagnostics>,
    pub flags: Vec<PipelineFlag>,
    pub minority_count: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: Method,
    pub p: f64,
    /// Mean over noise seeds of the per-seed mean WGA.
    pub mean_wga: Option<f64>,
    /// Population std (ddof 0) of the per-seed means.
    pub std_wga: Option<f64>,
    /// Population std of all individual runs pooled.
    pub run_std_wga: Option<f64>,
    /// Noise seeds with at least one successful run.
    pub n: usize,
    pub runs: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningRecord {
    pub method: Method,
    pub p: f64,
    pub result: Option<TuneResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub records: Vec<RunRecord>,
    pub summary: Vec<SummaryRow>,
    pub tuning: Vec<TuningRecord>,
    /// Closed-form curve on the sweep's noise grid (synthetic sources only).
    pub theory: Option<Vec<TheoryPoint>>,
    pub warnings: Vec<String>,
}

/// Fixed inputs of a sweep.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: Split,
    pub spec: Option<MixtureSpec>,
}

/// Loads or samples the base data and splits it.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (data, spec) = match &cfg.data {
        DataSource::Synthetic { spec, n } => (
            sample(spec, *n, RngSeed::new(cfg.master_seed, Stream::Data))?,
            Some(spec.clone()),
        ),
        DataSource::Csv { path } => (load_embeddings(path)?.0, None),
    };
    let split = split_holdout(
        &data,
        cfg.retrain_fraction,
        RngSeed::new(cfg.master_seed, Stream::Split),
    )?;
    Ok(PreparedData { split, spec })
}

pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        return Err(Error::NothingToRun);
    }
    let prepared = prepare_data(cfg)?;
    sweep_prepared(cfg, &prepared)
}

/// Which (noise level, noise seed) a method's fit actually depends on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Context {
    method: Method,
    p_idx: Option<usize>,
    seed: Option<usize>,
}

fn context(method: Method, p_idx: usize, seed: usize) -> Context {
    Context {
        method,
        p_idx: method.reads_domains().then_some(p_idx),
        seed: (method.reads_domains() || method.is_randomized()).then_some(seed),
    }
}

struct Inputs<'a> {
    cfg: &'a ExperimentConfig,
    retrain: LabeledDataset,
    holdout: &'a LabeledDataset,
    standardizer: Option<Standardizer>,
    spec: Option<&'a MixtureSpec>,
}

impl Inputs<'_> {
    fn to_raw(&self, model: &LinearModel) -> Result<LinearModel> {
        match &self.standardizer {
            Some(s) => s.unstandardize(model),
            None => Ok(model.clone()),
        }
    }

    /// Retrain set seen by a context: noisy when the method reads domains.
    fn retrain_for(&self, ctx: Context) -> Result<LabeledDataset> {
        match (ctx.p_idx, ctx.seed) {
            (Some(pi), Some(s)) => {
                let p = self.cfg.noise_levels[pi];
                let noise = NoiseModel::new(p, self.retrain.num_domains())?;
                inject(&self.retrain, noise, noise_seed(self.cfg, s))
            }
            _ => Ok(self.retrain.clone()),
        }
    }

    fn evaluate(&self, model: &LinearModel) -> Result<GroupAccuracy> {
        let raw = self.to_raw(model)?;
        match (self.cfg.evaluation, self.spec) {
            (Evaluation::Population, Some(spec)) => {
                crate::theory::population_group_accuracy(spec, &raw)
            }
            _ => per_group_accuracy(&raw, self.holdout),
        }
    }
}

fn noise_seed(cfg: &ExperimentConfig, seed: usize) -> RngSeed {
    RngSeed::new(cfg.master_seed, Stream::Noise).derive(seed as u64)
}

fn run_seed(cfg: &ExperimentConfig, seed: usize, run: u64) -> RngSeed {
    RngSeed::new(cfg.master_seed, Stream::Downsample)
        .derive(seed as u64)
        .derive(run)
}

fn prepare_inputs<'a>(cfg: &'a ExperimentConfig, prepared: &'a PreparedData) -> Result<Inputs<'a>> {
    cfg.validate()?;
    if cfg.methods.is_empty() {
        return Err(Error::NothingToRun);
    }
    let split = &prepared.split;
    let standardizer = if cfg.standardize {
        Some(Standardizer::fit(&split.retrain)?)
    } else {
        None
    };
    let retrain = match &standardizer {
        Some(s) => s.apply(&split.retrain)?,
        None => split.retrain.clone(),
    };
    Ok(Inputs {
        cfg,
        retrain,
        holdout: &split.holdout,
        standardizer,
        spec: prepared.spec.as_ref(),
    })
}

type ScoredContext = Result<(LabeledDataset, Vec<GridScore>)>;
type Scored = HashMap<Context, ScoredContext>;

struct TuningStage {
    scored: Scored,
    tuning: Vec<TuningRecord>,
    warnings: Vec<String>,
    chosen: HashMap<(Method, usize), std::result::Result<Hyper, String>>,
}

fn tuning_stage(inputs: &Inputs<'_>) -> Result<TuningStage> {
    let cfg = inputs.cfg;
    let mut contexts: Vec<Context> = Vec::new();
    for &method in &cfg.methods {
        for p_idx in 0..cfg.noise_levels.len() {
            for s in 0..cfg.noise_seeds {
                let c = context(method, p_idx, s);
                if !contexts.contains(&c) {
                    contexts.push(c);
                }
            }
        }
    }

    // grid scores per context
    let scored: Vec<(Context, ScoredContext)> = contexts
        .par_iter()
        .map(|&ctx| {
            let res = inputs.retrain_for(ctx).and_then(|data| {
                let seed = run_seed(cfg, ctx.seed.unwrap_or(0), TUNING_RUN);
                let scores = score_grid(cfg, ctx.method, &data, inputs.holdout, seed, &|m| {
                    inputs.to_raw(m)
                })?;
                Ok((data, scores))
            });
            (ctx, res)
        })
        .collect();
    let scored: Scored = scored.into_iter().collect();

    // modal choice per (method, p)
    let mut tuning = Vec::new();
    let mut warnings = Vec::new();
    let mut chosen: HashMap<(Method, usize), std::result::Result<Hyper, String>> = HashMap::new();
    for &method in &cfg.methods {
        if method_grid(cfg, method)?.is_empty() {
            return Err(Error::InvalidConfig(format!("{method} has an empty grid")));
        }
        for (p_idx, &p) in cfg.noise_levels.iter().enumerate() {
            let mut per_seed = Vec::new();
            let mut failure = None;
            for s in 0..cfg.noise_seeds {
                match &scored[&context(method, p_idx, s)] {
                    Ok((_, scores)) => per_seed.push(scores.clone()),
                    Err(e) => failure = Some(e.to_string()),
                }
            }
            let outcome = if per_seed.is_empty() {
                Err(failure.unwrap_or_else(|| Error::TuningFailed(method.to_string()).to_string()))
            } else {
                choose_modal(method, &per_seed).map_err(|e| e.to_string())
            };
            match &outcome {
                Ok(r) => {
                    for w in &r.warnings {
                        if !warnings.contains(w) {
                            warnings.push(w.clone());
                        }
                    }
                    chosen.insert((method, p_idx), Ok(r.chosen));
                }
                Err(e) => {
                    chosen.insert((method, p_idx), Err(e.clone()));
                }
            }
            tuning.push(TuningRecord {
                method,
                p,
                result: outcome.as_ref().ok().cloned(),
                error: outcome.err(),
            });
        }
    }

    Ok(TuningStage {
        scored,
        tuning,
        warnings,
        chosen,
    })
}

/// Runs only the tuning stage of [`sweep_prepared`]: the modal grid point
/// per (method, noise level), plus any grid-edge warnings.
pub fn tune_prepared(
    cfg: &ExperimentConfig,
    prepared: &PreparedData,
) -> Result<(Vec<TuningRecord>, Vec<String>)> {
    let stage = tuning_stage(&prepare_inputs(cfg, prepared)?)?;
    Ok((stage.tuning, stage.warnings))
}

pub fn sweep_prepared(cfg: &ExperimentConfig, prepared: &PreparedData) -> Result<SweepOutput> {
    let inputs = prepare_inputs(cfg, prepared)?;
    let TuningStage {
        scored,
        tuning,
        warnings,
        chosen,
    } = tuning_stage(&inputs)?;

    // distinct fits
    type JobKey = (Context, u64, [Option<u64>; 3]);
    let mut jobs: Vec<(JobKey, Hyper)> = Vec::new();
    for &method in &cfg.methods {
        for p_idx in 0..cfg.noise_levels.len() {
            let Ok(hyper) = &chosen[&(method, p_idx)] else {
                continue;
            };
            for s in 0..cfg.noise_seeds {
                for r in 0..cfg.train_runs {
                    let ctx = context(method, p_idx, s);
                    let run_key = if method.is_randomized() { r as u64 } else { 0 };
                    let key = (ctx, run_key, hyper.key());
                    if !jobs.iter().any(|(k, _)| *k == key) {
                        jobs.push((key, *hyper));
                    }
                }
            }
        }
    }
    let fitted: HashMap<JobKey, RunOutcome> = jobs
        .par_iter()
        .map(|(key, hyper)| {
            let (ctx, run_key, _) = *key;
            let outcome = match &scored[&ctx] {
                Ok((data, _)) => {
                    let seed = run_seed(cfg, ctx.seed.unwrap_or(0), run_key);
                    fit_point(cfg, ctx.method, hyper, data, seed)
                        .and_then(|out| Ok((inputs.evaluate(&out.model)?, out)))
                        .map(|(acc, out)| RunOutcome::Ok {
                            acc,
                            diagnostics: out.diagnostics,
                            flags: out.flags,
                            minority_count: out.minority_count,
                        })
                        .unwrap_or_else(|e| RunOutcome::Failed(e.to_string()))
                }
                Err(e) => RunOutcome::Failed(e.to_string()),
            };
            (*key, outcome)
        })
        .collect();

    let mut records = Vec::new();
    for &method in &cfg.methods {
        for (p_idx, &p) in cfg.noise_levels.iter().enumerate() {
            for s in 0..cfg.noise_seeds {
                for r in 0..cfg.train_runs {
                    let base = RunRecord {
                        method,
                        p,
                        noise_seed: s,
                        train_run: r,
                        hyper: Hyper::NONE,
                        wga: None,
                        group_accuracy: Vec::new(),
                        diagnostics: None,
                        flags: Vec::new(),
                        minority_count: None,
                        error: None,
                    };
                    let record = match &chosen[&(method, p_idx)] {
                        Err(e) => RunRecord {
                            error: Some(e.clone()),
                            ..base
                        },
                        Ok(hyper) => {
                            let run_key = if method.is_randomized() { r as u64 } else { 0 };
                            let key = (context(method, p_idx, s), run_key, hyper.key());
                            match &fitted[&key] {
                                RunOutcome::Ok {
                                    acc,
                                    diagnostics,
                                    flags,
                                    minority_count,
                                } => RunRecord {
                                    hyper: *hyper,
                                    wga: acc.worst(),
                                    group_accuracy: acc.accuracy.clone(),
                                    diagnostics: diagnostics.clone(),
                                    flags: flags.clone(),
                                    minority_count: *minority_count,
                                    ..base
                                },
                                RunOutcome::Failed(e) => RunRecord {
                                    hyper: *hyper,
                                    error: Some(e.clone()),
                                    ..base
                                },
                            }
                        }
                    };
                    records.push(record);
                }
            }
        }
    }

    let summary = summarize(&records);
    let theory = prepared.spec.as_ref().and_then(|spec| {
        cfg.noise_levels
            .iter()
            .map(|&p| ds_uw_wga(spec, spec.pi0, p))
            .collect::<Result<Vec<_>>>()
            .ok()
    });
    Ok(SweepOutput {
        records,
        summary,
        tuning,
        theory,
        warnings,
    })
}

enum RunOutcome {
    Ok {
        acc: GroupAccuracy,
        diagnostics: Option<FitDiagnostics>,
        flags: Vec<PipelineFlag>,
        minority_count: Option<usize>,
    },
    Failed(String),
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn std_dev(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    Some((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
}

/// Per (method, p) statistics, in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(Method, u64)> = Vec::new();
    for r in records {
        let k = (r.method, r.p.to_bits());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(method, pbits)| {
            let rows: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.method == method && r.p.to_bits() == pbits)
                .collect();
            let mut seeds: Vec<usize> = rows.iter().map(|r| r.noise_seed).collect();
            seeds.sort_unstable();
            seeds.dedup();
            let per_seed: Vec<f64> = seeds
                .iter()
                .filter_map(|&s| {
                    let v: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.noise_seed == s)
                        .filter_map(|r| r.wga)
                        .collect();
                    mean(&v)
                })
                .collect();
            let all: Vec<f64> = rows.iter().filter_map(|r| r.wga).collect();
            SummaryRow {
                method,
                p: f64::from_bits(pbits),
                mean_wga: mean(&per_seed),
                std_wga: std_dev(&per_seed),
                run_std_wga: std_dev(&all),
                n: per_seed.len(),
                runs: all.len(),
                failed: rows.len() - all.len(),
            }
        })
        .collect()
}
