//! Four-group Gaussian mixture with a parallelogram of group means.
//!
//! Domain index 0 is `R` and 1 is `B`. Group means are
//!
//! ```text
//! μ(0,R) = anchor          μ(1,R) = anchor + Δ_D
//! μ(0,B) = anchor + Δ_C    μ(1,B) = anchor + Δ_C + Δ_D
//! ```
//!
//! with priors `π(0,R) = π(1,B) = π₀` (minorities) and
//! `π(1,R) = π(0,B) = 1/2 − π₀`. Every group shares the covariance Σ.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{GroupKey, LabeledDataset};
use crate::error::{Error, Result};
use crate::linalg::{self, SigmaMetric};
use crate::rng::RngSeed;

/// Residual bound for `Δ_Cᵀ Σ⁻¹ Δ_D = 0` in [`validate_assumptions`].
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    /// Domain shift within a class, `μ(y,B) − μ(y,R)`.
    pub delta_c: Vec<f64>,
    /// Class shift within a domain, `μ(1,d) − μ(0,d)`.
    pub delta_d: Vec<f64>,
    /// Shared covariance, row-major.
    pub sigma: Vec<Vec<f64>>,
    /// Minority prior in `(0, 1/4]`.
    pub pi0: f64,
    /// `μ(0,R)`; zero when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_anchor: Option<Vec<f64>>,
}

impl MixtureSpec {
    /// The two-dimensional example used throughout the docs and tests.
    pub fn spurious_2d() -> Self {
        Self {
            delta_c: vec![0.0, -0.5],
            delta_d: vec![-0.25, -0.25],
            sigma: vec![vec![0.003, 0.003], vec![0.003, 0.004]],
            pi0: 1.0 / 50.0,
            mu_anchor: None,
        }
    }

    pub fn with_pi0(&self, pi0: f64) -> Self {
        Self {
            pi0,
            ..self.clone()
        }
    }

    pub fn dim(&self) -> usize {
        self.delta_c.len()
    }

    pub fn delta_c_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.delta_c)
    }

    pub fn delta_d_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.delta_d)
    }

    pub fn anchor(&self) -> DVector<f64> {
        match &self.mu_anchor {
            Some(a) => DVector::from_column_slice(a),
            None => DVector::zeros(self.dim()),
        }
    }

    pub fn sigma_matrix(&self) -> Result<DMatrix<f64>> {
        linalg::matrix_from_rows(&self.sigma)
    }

    fn check_shapes(&self) -> Result<()> {
        let m = self.dim();
        let anchor_ok = self.mu_anchor.as_ref().is_none_or(|a| a.len() == m);
        if m == 0
            || self.delta_d.len() != m
            || !anchor_ok
            || self.sigma.len() != m
            || self.sigma.iter().any(|r| r.len() != m)
        {
            return Err(Error::ShapeMismatch(format!(
                "mixture dimensions disagree (Δ_C has {m} entries)"
            )));
        }
        let all = self
            .delta_c
            .iter()
            .chain(&self.delta_d)
            .chain(self.mu_anchor.iter().flatten());
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("non-finite mean parameter".into()));
        }
        Ok(())
    }

    /// Checks shapes, the prior range and positive definiteness of Σ.
    pub fn validate(&self) -> Result<SigmaMetric> {
        self.check_shapes()?;
        check_pi0(self.pi0)?;
        SigmaMetric::new(&self.sigma_matrix()?)
    }

    pub fn group_mean(&self, key: GroupKey) -> DVector<f64> {
        let mut mu = self.anchor();
        if key.y == 1 {
            mu += self.delta_d_vec();
        }
        if key.d == 1 {
            mu += self.delta_c_vec();
        }
        mu
    }
}

pub(crate) fn check_pi0(pi0: f64) -> Result<()> {
    if pi0 > 0.0 && pi0 <= 0.25 {
        Ok(())
    } else {
        Err(Error::InvalidPrior(format!(
            "π₀ = {pi0} is outside (0, 1/4]"
        )))
    }
}

/// Group priors in index order `(0,R), (0,B), (1,R), (1,B)`.
pub fn group_priors(pi0: f64) -> [f64; 4] {
    [pi0, 0.5 - pi0, 0.5 - pi0, pi0]
}

/// True when the group is a minority group, `(0,R)` or `(1,B)`.
pub fn is_minority(key: GroupKey) -> bool {
    key.y == key.d
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMoments {
    /// Indexed `y * 2 + d`.
    pub group_means: Vec<DVector<f64>>,
    /// `μ(0)`, `μ(1)`.
    pub class_means: [DVector<f64>; 2],
    /// `Δ̄ = μ(1) − μ(0)`.
    pub delta_bar: DVector<f64>,
    /// `β = 2π₀(1 − 2π₀)`.
    pub beta: f64,
    pub norm_c_sq: f64,
    pub norm_d_sq: f64,
    /// `Δ_Cᵀ Σ⁻¹ Δ_D`.
    pub cross: f64,
}

pub fn derive_moments(spec: &MixtureSpec) -> Result<DerivedMoments> {
    let metric = spec.validate()?;
    Ok(derive_moments_with(spec, spec.pi0, &metric))
}

/// Moments of `spec`'s geometry under minority prior `pi0` (not necessarily `spec.pi0`).
pub(crate) fn derive_moments_with(
    spec: &MixtureSpec,
    pi0: f64,
    metric: &SigmaMetric,
) -> DerivedMoments {
    let group_means: Vec<_> = GroupKey::all(2, 2).map(|k| spec.group_mean(k)).collect();
    let priors = group_priors(pi0);
    // class-conditional means from the within-class domain mix
    let class_mean = |y: usize| {
        let (r, b) = (y * 2, y * 2 + 1);
        let total = priors[r] + priors[b];
        (&group_means[r] * priors[r] + &group_means[b] * priors[b]) / total
    };
    let class_means = [class_mean(0), class_mean(1)];
    let delta_bar = &class_means[1] - &class_means[0];
    let dc = spec.delta_c_vec();
    let dd = spec.delta_d_vec();
    DerivedMoments {
        group_means,
        class_means,
        delta_bar,
        beta: 2.0 * pi0 * (1.0 - 2.0 * pi0),
        norm_c_sq: metric.norm_sq(&dc),
        norm_d_sq: metric.norm_sq(&dd),
        cross: metric.inner(&dc, &dd),
    }
}

/// Draws `n` samples with the spec's priors.
pub fn sample(spec: &MixtureSpec, n: usize, seed: RngSeed) -> Result<LabeledDataset> {
    sample_with_priors(spec, n, &group_priors(spec.pi0), seed)
}

/// Draws `n` samples from the spec's group distributions with arbitrary
/// group priors (index order `y * 2 + d`). Per-group accuracy estimates do
/// not depend on the priors, so balanced priors give lower-variance
/// estimates for the minority groups.
pub fn sample_with_priors(
    spec: &MixtureSpec,
    n: usize,
    priors: &[f64; 4],
    seed: RngSeed,
) -> Result<LabeledDataset> {
    let metric = spec.validate()?;
    if n == 0 {
        return Err(Error::TooSmall("sample size must be at least 1".into()));
    }
    let total: f64 = priors.iter().sum();
    if priors.iter().any(|&p| p < 0.0 || !p.is_finite()) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidPrior(format!(
            "group priors {priors:?} do not form a distribution"
        )));
    }
    let m = spec.dim();
    let chol = metric.factor();
    let means: Vec<_> = GroupKey::all(2, 2).map(|k| spec.group_mean(k)).collect();
    let mut cumulative = [0.0; 4];
    let mut acc = 0.0;
    for (c, p) in cumulative.iter_mut().zip(priors) {
        acc += p;
        *c = acc;
    }

    let mut rng = seed.rng();
    let mut features = Array2::<f64>::zeros((n, m));
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    let mut z = DVector::<f64>::zeros(m);
    for i in 0..n {
        let u: f64 = rng.random();
        let g = cumulative.iter().position(|&c| u < c).unwrap_or(3);
        for zj in z.iter_mut() {
            *zj = rng.sample(StandardNormal);
        }
        let x = &means[g] + &chol * &z;
        for j in 0..m {
            features[[i, j]] = x[j];
        }
        let key = GroupKey::from_index(g, 2);
        y.push(key.y);
        d.push(key.d);
    }
    LabeledDataset::new(features, y, d, 2, 2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub shapes: Check,
    pub sigma_pd: Check,
    pub prior_range: Check,
    pub orthogonality: Check,
    /// `Δ_Cᵀ Σ⁻¹ Δ_D`, when Σ is invertible.
    pub orthogonality_residual: Option<f64>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.shapes.passed
            && self.sigma_pd.passed
            && self.prior_range.passed
            && self.orthogonality.passed
    }
}

/// Evaluates each structural condition separately; never fails.
pub fn validate_assumptions(spec: &MixtureSpec) -> AssumptionReport {
    let check = |r: Result<()>| match r {
        Ok(()) => Check {
            passed: true,
            detail: "ok".into(),
        },
        Err(e) => Check {
            passed: false,
            detail: e.to_string(),
        },
    };
    let shapes = check(spec.check_shapes());
    let prior_range = check(check_pi0(spec.pi0));
    if !shapes.passed {
        let skipped = Check {
            passed: false,
            detail: "not evaluated: shape error".into(),
        };
        return AssumptionReport {
            shapes,
            sigma_pd: skipped.clone(),
            prior_range,
            orthogonality: skipped,
            orthogonality_residual: None,
        };
    }
    let sigma = spec.sigma_matrix().expect("shapes checked");
    let sigma_pd = check(SigmaMetric::new(&sigma).map(|_| ()));
    let sym = (&sigma + sigma.transpose()) * 0.5;
    let residual = sym.clone().try_inverse().map(|inv| {
        let dc = spec.delta_c_vec();
        let dd = spec.delta_d_vec();
        dc.dot(&(inv * dd))
    });
    let orthogonality = match residual {
        Some(r) if r.abs() < ORTHOGONALITY_TOL => Check {
            passed: true,
            detail: format!("residual {r:e}"),
        },
        Some(r) => Check {
            passed: false,
            detail: format!("residual {r:e} exceeds {ORTHOGONALITY_TOL:e}"),
        },
        None => Check {
            passed: false,
            detail: "Σ is singular".into(),
        },
    };
    AssumptionReport {
        shapes,
        sigma_pd,
        prior_range,
        orthogonality,
        orthogonality_residual: residual,
    }
}
