//! Declarative experiment configuration (TOML or JSON).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::augment::{MSelfConfig, Method};
use crate::error::{Error, Result};
use crate::rad::RadConfig;
use crate::solvers::{LogRegConfig, LsqConfig, Penalty, Trainer};
use crate::synthgen::MixtureSpec;

/// Evenly spaced values, in log space when `log` is set.
pub fn spaced(min: f64, max: f64, count: usize, log: bool) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                if log {
                    (min.ln() + t * (max.ln() - min.ln())).exp()
                } else {
                    min + t * (max - min)
                }
            })
            .collect(),
    }
}

/// A hyperparameter grid: a named preset, explicit values, or a range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Preset(String),
    Values(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        count: usize,
        #[serde(default)]
        log: bool,
    },
}

impl Grid {
    /// Presets: `retrain` (20 log-spaced in [1e-4, 1]), `id-general`
    /// (20 log-spaced in [1e-7, 1e-3]), `id-easy` (20 log-spaced in
    /// [1e-1, 1e2]), and upweight factors `uw-low` (5 in [4, 10]),
    /// `uw-mid` (5 in [5, 20]), `uw-high` (5 in [20, 40]).
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::Preset(name) => match name.as_str() {
                "retrain" => spaced(1e-4, 1.0, 20, true),
                "id-general" => spaced(1e-7, 1e-3, 20, true),
                "id-easy" => spaced(1e-1, 1e2, 20, true),
                "uw-low" => spaced(4.0, 10.0, 5, false),
                "uw-mid" => spaced(5.0, 20.0, 5, false),
                "uw-high" => spaced(20.0, 40.0, 5, false),
                other => {
                    return Err(Error::InvalidConfig(format!(
                        "unknown grid preset '{other}'"
                    )))
                }
            },
            Grid::Values(v) => v.clone(),
            Grid::Range {
                min,
                max,
                count,
                log,
            } => {
                if *log && !(*min > 0.0 && *max > 0.0) {
                    return Err(Error::InvalidConfig(
                        "log-spaced grid needs positive bounds".into(),
                    ));
                }
                spaced(*min, *max, *count, *log)
            }
        };
        if v.is_empty() {
            return Err(Error::InvalidConfig("grid is empty".into()));
        }
        if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::InvalidConfig(format!(
                "grid values must be positive: {v:?}"
            )));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Grids {
    /// Inverse penalty strength `C` of the retraining fit; `λ = 1 / (C · n)`.
    pub lambda: Grid,
    /// Inverse penalty strength of the identification model.
    pub lambda_id: Grid,
    pub upweight: Grid,
}

impl Default for Grids {
    fn default() -> Self {
        Self {
            lambda: Grid::Preset("retrain".into()),
            lambda_id: Grid::Preset("id-general".into()),
            upweight: Grid::Preset("uw-mid".into()),
        }
    }
}

/// Penalty strength for inverse strength `c` on `n` training rows, so the
/// objective matches `C Σ ℓ + ‖w‖` up to the factor `1 / (C n)`.
pub fn lambda_from_inverse(c: f64, n: usize) -> f64 {
    1.0 / (c * n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    /// `n` samples from the mixture, split into retrain and holdout.
    Synthetic { spec: MixtureSpec, n: usize },
    /// Embedding CSV (see [`crate::harness::io::load_embeddings`]).
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Evaluation {
    /// Worst-group accuracy on the clean holdout.
    Holdout,
    /// Exact worst-group accuracy on the mixture (synthetic sources only).
    /// Tuning still uses the holdout.
    Population,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    Logistic,
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Share of the data used for retraining; the rest is the clean holdout.
    pub retrain_fraction: f64,
    pub methods: Vec<Method>,
    pub noise_levels: Vec<f64>,
    pub noise_seeds: usize,
    pub train_runs: usize,
    pub master_seed: u64,
    pub grids: Grids,
    /// z-score features with retrain-set statistics.
    pub standardize: bool,
    pub evaluation: Evaluation,
    pub loss: Loss,
    pub solver: LogRegConfig,
    pub lsq: LsqConfig,
    pub id_penalty: Penalty,
    pub retrain_penalty: Penalty,
    pub averaging_runs: usize,
    pub mself: MSelfConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                spec: MixtureSpec::spurious_2d(),
                n: 20_000,
            },
            retrain_fraction: 0.5,
            methods: vec![Method::Llr, Method::Gds, Method::Guw, Method::RadUw],
            noise_levels: vec![0.0, 0.05, 0.10, 0.15, 0.20],
            noise_seeds: 10,
            train_runs: 10,
            master_seed: 0,
            grids: Grids::default(),
            standardize: false,
            evaluation: Evaluation::Holdout,
            loss: Loss::Logistic,
            solver: LogRegConfig::default(),
            lsq: LsqConfig::default(),
            id_penalty: Penalty::L1,
            retrain_penalty: Penalty::L1,
            averaging_runs: 10,
            mself: MSelfConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn from_file(path: &Path) -> Result<Self> {
        let cfg: Self = read_structured(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.retrain_fraction > 0.0 && self.retrain_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "retrain_fraction {} must lie in (0, 1)",
                self.retrain_fraction
            )));
        }
        if let Some(&p) = self.noise_levels.iter().find(|p| !(0.0..=0.5).contains(*p)) {
            return Err(Error::InvalidNoiseLevel(p));
        }
        if self.noise_levels.is_empty() {
            return Err(Error::InvalidConfig("noise_levels is empty".into()));
        }
        if self.noise_seeds == 0 || self.train_runs == 0 || self.averaging_runs == 0 {
            return Err(Error::InvalidConfig(
                "noise_seeds, train_runs and averaging_runs must be at least 1".into(),
            ));
        }
        self.grids.lambda.values()?;
        self.grids.lambda_id.values()?;
        self.grids.upweight.values()?;
        if self.evaluation == Evaluation::Population
            && !matches!(self.data, DataSource::Synthetic { .. })
        {
            return Err(Error::InvalidConfig(
                "population evaluation needs a synthetic source".into(),
            ));
        }
        Ok(())
    }
}

/// Deserializes TOML (`.toml`) or JSON (anything else) from `path`.
pub fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].lines().count() as u64),
            message: e.message().to_string(),
        })
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line() as u64,
            message: e.to_string(),
        })
    }
}

/// One point of the hyperparameter grid. `None` marks a dimension the
/// method does not use. Penalty values are inverse strengths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyper {
    pub lambda: Option<f64>,
    pub lambda_id: Option<f64>,
    pub upweight: Option<f64>,
}

impl Hyper {
    pub const NONE: Hyper = Hyper {
        lambda: None,
        lambda_id: None,
        upweight: None,
    };

    /// Key for exact comparisons and counting.
    pub(crate) fn key(&self) -> [Option<u64>; 3] {
        [
            self.lambda.map(f64::to_bits),
            self.lambda_id.map(f64::to_bits),
            self.upweight.map(f64::to_bits),
        ]
    }
}

/// Grid points relevant to `method` under `cfg`.
pub fn method_grid(cfg: &ExperimentConfig, method: Method) -> Result<Vec<Hyper>> {
    let lambdas: Vec<Option<f64>> = match cfg.loss {
        Loss::Logistic => cfg.grids.lambda.values()?.into_iter().map(Some).collect(),
        Loss::Squared => vec![None],
    };
    let ids: Vec<Option<f64>> = if matches!(method, Method::RadUw | Method::MSelf) {
        cfg.grids
            .lambda_id
            .values()?
            .into_iter()
            .map(Some)
            .collect()
    } else {
        vec![None]
    };
    let ups: Vec<Option<f64>> = if method == Method::RadUw {
        cfg.grids.upweight.values()?.into_iter().map(Some).collect()
    } else {
        vec![None]
    };
    let mut out = Vec::new();
    for &lambda_id in &ids {
        for &lambda in &lambdas {
            for &upweight in &ups {
                out.push(Hyper {
                    lambda,
                    lambda_id,
                    upweight,
                });
            }
        }
    }
    Ok(out)
}

/// Final-fit learner for a grid point on `n` training rows.
pub fn trainer_for(cfg: &ExperimentConfig, hyper: &Hyper, n: usize) -> Trainer {
    match cfg.loss {
        Loss::Squared => Trainer::LeastSquares(cfg.lsq),
        Loss::Logistic => {
            let lambda = hyper.lambda.map_or(0.0, |c| lambda_from_inverse(c, n));
            let solver = cfg.solver.with_lambda(lambda);
            match cfg.retrain_penalty {
                Penalty::L1 => Trainer::L1Logistic(solver),
                Penalty::L2 => Trainer::L2Logistic(solver),
            }
        }
    }
}

/// Identification/upweighting settings for a grid point on `n` training rows.
pub fn rad_config_for(cfg: &ExperimentConfig, hyper: &Hyper, n: usize) -> RadConfig {
    let defaults = RadConfig::default();
    RadConfig {
        lambda_id: hyper
            .lambda_id
            .map_or(defaults.lambda_id, |c| lambda_from_inverse(c, n)),
        retrain_lambda: hyper.lambda.map_or(0.0, |c| lambda_from_inverse(c, n)),
        upweight_factor: hyper.upweight.unwrap_or(defaults.upweight_factor),
        id_penalty: cfg.id_penalty,
        retrain_penalty: cfg.retrain_penalty,
        solver: cfg.solver,
    }
}
