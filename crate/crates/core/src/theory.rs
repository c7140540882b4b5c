//! Population analysis of least-squares classifiers on the four-group mixture.
//!
//! With squared loss the population minimiser is available in closed form:
//!
//! ```text
//! w = ¼ (Σ + β Δ_C Δ_Cᵀ + ¼ Δ̄ Δ̄ᵀ)⁻¹ Δ̄ = γ Σ⁻¹ (Δ_D − c Δ_C)
//! b = ½ − ½ wᵀ (μ(0,R) + μ(1,B))
//! ```
//!
//! where `β = 2π₀(1 − 2π₀)`, `δ = 1 − 4π₀`, `Δ̄ = Δ_D − δ Δ_C`,
//! `c = (δ + β Δ_CᵀΣ⁻¹Δ_D) / (1 + β‖Δ_C‖²)` and `γ = 1 / (4 + Δ̄ᵀ B⁻¹ Δ̄)`
//! with `B = Σ + β Δ_C Δ_Cᵀ`. Downsampling and upweighting on noisy domain
//! labels both land on the same population, a mixture of the original form
//! with minority prior `π_DS`, so their worst-group accuracy follows from the
//! same expression.

use nalgebra::{DMatrix, DVector};
use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::GroupKey;
use crate::error::{Error, Result};
use crate::linalg::SigmaMetric;
use crate::metrics::GroupAccuracy;
use crate::model::{LinearModel, Link};
use crate::noise::{ds_effective_prior, noisy_minority_prior};
use crate::solvers::{LsqConfig, WeightedMoments};
use crate::synthgen::{check_pi0, derive_moments_with, group_priors, is_minority, MixtureSpec};

/// `|Δ_Cᵀ Σ⁻¹ Δ_D|` above which the accuracy closed form is refused.
pub const CROSS_TERM_TOL: f64 = 1e-6;

/// Standard normal CDF `Φ(x) = ½ erfc(−x/√2)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `(A + v vᵀ + u uᵀ)⁻¹ u` for symmetric positive definite `A`, via two
/// rank-one updates:
///
/// ```text
/// B⁻¹u = A⁻¹u − c_v A⁻¹v,   c_v = vᵀA⁻¹u / (1 + vᵀA⁻¹v)
/// (B + u uᵀ)⁻¹u = B⁻¹u / (1 + uᵀB⁻¹u)
/// ```
pub fn sherman_morrison_rank2(
    a: &DMatrix<f64>,
    u: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let metric = SigmaMetric::new(a)?;
    if u.len() != metric.dim() || v.len() != metric.dim() {
        return Err(Error::ShapeMismatch(
            "vector length differs from matrix size".into(),
        ));
    }
    Ok(rank2_solve(&metric, u, v))
}

fn rank2_solve(metric: &SigmaMetric, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    let a_u = metric.solve(u);
    let a_v = metric.solve(v);
    let c_v = v.dot(&a_u) / (1.0 + v.dot(&a_v));
    let b_u = &a_u - &a_v * c_v;
    let c_u = 1.0 / (1.0 + u.dot(&b_u));
    b_u * c_u
}

/// Population least-squares solution for minority prior `pi0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErmClosedForm {
    pub w: DVector<f64>,
    pub b: f64,
    /// Coefficient on the spurious direction, `w ∝ Σ⁻¹(Δ_D − c Δ_C)`.
    pub c_pi0: f64,
    pub gamma: f64,
    pub beta: f64,
    pub delta_bar: DVector<f64>,
}

impl ErmClosedForm {
    pub fn model(&self) -> LinearModel {
        LinearModel::scalar(
            Array1::from_iter(self.w.iter().copied()),
            self.b,
            Link::IdentityThreshold,
        )
        .expect("closed form is finite")
    }
}

pub fn erm_weights(spec: &MixtureSpec, pi0: f64) -> Result<ErmClosedForm> {
    let metric = spec.validate()?;
    check_pi0(pi0)?;
    Ok(erm_weights_with(spec, pi0, &metric))
}

fn erm_weights_with(spec: &MixtureSpec, pi0: f64, metric: &SigmaMetric) -> ErmClosedForm {
    let mom = derive_moments_with(spec, pi0, metric);
    let u = &mom.delta_bar * 0.5;
    let v = spec.delta_c_vec() * mom.beta.sqrt();
    let w = rank2_solve(metric, &u, &v) * 0.5;

    let delta = 1.0 - 4.0 * pi0;
    let c_pi0 = (delta + mom.beta * mom.cross) / (1.0 + mom.beta * mom.norm_c_sq);
    // Δ̄ᵀB⁻¹Δ̄ with B⁻¹Δ̄ = Σ⁻¹Δ_D − c Σ⁻¹Δ_C
    let b_inv_dbar = metric.solve(&spec.delta_d_vec()) - metric.solve(&spec.delta_c_vec()) * c_pi0;
    let gamma = 1.0 / (4.0 + mom.delta_bar.dot(&b_inv_dbar));

    let mid = &mom.group_means[GroupKey::new(0, 0).index(2)]
        + &mom.group_means[GroupKey::new(1, 1).index(2)];
    let b = 0.5 - 0.5 * w.dot(&mid);
    ErmClosedForm {
        w,
        b,
        c_pi0,
        gamma,
        beta: mom.beta,
        delta_bar: mom.delta_bar,
    }
}

/// `c̃ = (1 − 4π₀) / (1 + 2π₀(1 − 2π₀)‖Δ_C‖²)`, valid when `Δ_CᵀΣ⁻¹Δ_D = 0`.
pub fn c_tilde(spec: &MixtureSpec, pi0: f64) -> Result<f64> {
    let (norm_c, _) = orthogonal_norms(spec, pi0)?;
    let beta = 2.0 * pi0 * (1.0 - 2.0 * pi0);
    Ok((1.0 - 4.0 * pi0) / (1.0 + beta * norm_c))
}

fn orthogonal_norms(spec: &MixtureSpec, pi0: f64) -> Result<(f64, f64)> {
    let metric = spec.validate()?;
    check_pi0(pi0)?;
    let dc = spec.delta_c_vec();
    let dd = spec.delta_d_vec();
    let cross = metric.inner(&dc, &dd);
    if cross.abs() > CROSS_TERM_TOL {
        return Err(Error::AssumptionViolated(format!(
            "Δ_Cᵀ Σ⁻¹ Δ_D = {cross:e}; the accuracy closed form needs it to vanish"
        )));
    }
    Ok((metric.norm_sq(&dc), metric.norm_sq(&dd)))
}

/// Minority- and majority-group accuracy of the population least-squares
/// model at prior `pi0`:
/// `Φ((‖Δ_D‖² ∓ c̃‖Δ_C‖²) / (2√(‖Δ_D‖² + c̃²‖Δ_C‖²)))`.
pub fn erm_group_accuracies(spec: &MixtureSpec, pi0: f64) -> Result<(f64, f64)> {
    let (norm_c, norm_d) = orthogonal_norms(spec, pi0)?;
    let c = c_tilde(spec, pi0)?;
    let denom = 2.0 * (norm_d + c * c * norm_c).sqrt();
    Ok((
        normal_cdf((norm_d - c * norm_c) / denom),
        normal_cdf((norm_d + c * norm_c) / denom),
    ))
}

/// Worst-group accuracy of the population least-squares model at prior `pi0`.
pub fn erm_wga(spec: &MixtureSpec, pi0: f64) -> Result<f64> {
    let (minority, majority) = erm_group_accuracies(spec, pi0)?;
    Ok(minority.min(majority))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryPoint {
    pub p: f64,
    pub pi0: f64,
    /// Minority prior as seen through the noisy labels.
    pub pi_noisy: f64,
    /// True minority prior after balancing on noisy labels.
    pub pi_ds: f64,
    pub c_tilde: f64,
    pub wga_erm: f64,
    pub wga_ds: f64,
    pub wga_uw: f64,
    pub minority_acc: f64,
    pub majority_acc: f64,
}

/// Population worst-group accuracy of downsampling and upweighting on
/// domain labels flipped with probability `p`.
pub fn ds_uw_wga(spec: &MixtureSpec, pi0: f64, p: f64) -> Result<TheoryPoint> {
    let pi_noisy = noisy_minority_prior(pi0, p)?;
    let pi_ds = ds_effective_prior(pi0, p)?;
    let (minority_acc, majority_acc) = erm_group_accuracies(spec, pi_ds)?;
    let wga = minority_acc.min(majority_acc);
    Ok(TheoryPoint {
        p,
        pi0,
        pi_noisy,
        pi_ds,
        c_tilde: c_tilde(spec, pi_ds)?,
        wga_erm: erm_wga(spec, pi0)?,
        wga_ds: wga,
        wga_uw: wga,
        minority_acc,
        majority_acc,
    })
}

pub fn theory_curve(spec: &MixtureSpec, p_grid: &[f64]) -> Result<Vec<TheoryPoint>> {
    p_grid
        .iter()
        .map(|&p| ds_uw_wga(spec, spec.pi0, p))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopePoint {
    pub pi0: f64,
    pub p: f64,
    /// Finite-difference `∂WGA/∂p` of the balanced baselines.
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub slopes: Vec<SlopePoint>,
    /// Points with `π₀ < 1/4`, `p < 1/2` whose slope is not negative.
    pub violations: Vec<SlopePoint>,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Finite-difference slope of the balanced-baseline WGA in `p` over a
/// `π₀ × p` grid. Central differences inside `(0, 1/2)`, one-sided at the
/// endpoints. Report-only: invalid grid points are skipped.
pub fn wga_monotonicity_check(
    spec: &MixtureSpec,
    pi0_grid: &[f64],
    p_grid: &[f64],
) -> MonotonicityReport {
    const H: f64 = 1e-6;
    let mut slopes = Vec::new();
    let mut violations = Vec::new();
    for &pi0 in pi0_grid {
        let f = |p: f64| ds_uw_wga(spec, pi0, p).map(|t| t.wga_ds);
        for &p in p_grid {
            let (lo, hi) = ((p - H).max(0.0), (p + H).min(0.5));
            let (Ok(a), Ok(b)) = (f(lo), f(hi)) else {
                continue;
            };
            let point = SlopePoint {
                pi0,
                p,
                slope: (b - a) / (hi - lo),
            };
            if pi0 < 0.25 && p < 0.5 && point.slope >= 0.0 {
                violations.push(point);
            }
            slopes.push(point);
        }
    }
    MonotonicityReport { slopes, violations }
}

/// Exact per-group accuracy of a binary linear model on the mixture:
/// each group score is Gaussian with mean `wᵀμ + b` and variance `wᵀΣw`.
pub fn population_group_accuracy(spec: &MixtureSpec, model: &LinearModel) -> Result<GroupAccuracy> {
    spec.validate()?;
    let sigma = spec.sigma_matrix()?;
    if model.input_dim() != spec.dim() || model.num_classes() != 2 {
        return Err(Error::ShapeMismatch(
            "model does not match the mixture".into(),
        ));
    }
    // reduce to one score s(x) = wᵀx + b − threshold, class 1 when s > 0
    let (w, b) = match (model.link(), model.outputs()) {
        (Link::IdentityThreshold, 1) => {
            (model.weights().column(0).to_owned(), model.bias()[0] - 0.5)
        }
        (Link::Sigmoid, 1) => (model.weights().column(0).to_owned(), model.bias()[0]),
        (Link::SoftmaxArgmax, 2) => (
            &model.weights().column(1) - &model.weights().column(0),
            model.bias()[1] - model.bias()[0],
        ),
        _ => {
            return Err(Error::ShapeMismatch(
                "unsupported link/output combination".into(),
            ))
        }
    };
    let w = DVector::from_iterator(w.len(), w.iter().copied());
    let sd = w.dot(&(&sigma * &w)).sqrt();
    let acc = GroupKey::all(2, 2)
        .map(|k| {
            let mean = w.dot(&spec.group_mean(k)) + b;
            let signed = if k.y == 1 { mean } else { -mean };
            Some(if sd > 0.0 {
                normal_cdf(signed / sd)
            } else if signed > 0.0 {
                1.0
            } else {
                0.0
            })
        })
        .collect();
    Ok(GroupAccuracy::from_values(2, 2, acc))
}

/// Probability mass of each `(true group, observed domain)` cell after
/// symmetric noise; indexed `[y * 2 + d][observed domain]`.
pub fn noisy_cell_masses(pi0: f64, p: f64) -> Result<[[f64; 2]; 4]> {
    check_pi0(pi0)?;
    noisy_minority_prior(pi0, p)?;
    let priors = group_priors(pi0);
    let mut cells = [[0.0; 2]; 4];
    for (g, cell) in cells.iter_mut().enumerate() {
        let d = g % 2;
        cell[d] = priors[g] * (1.0 - p);
        cell[1 - d] = priors[g] * p;
    }
    Ok(cells)
}

/// Mass per true group after rebalancing every observed group to `1/4`
/// (population downsampling on noisy labels).
pub fn ds_population_masses(pi0: f64, p: f64) -> Result<[f64; 4]> {
    let cells = noisy_cell_masses(pi0, p)?;
    let mut out = [0.0; 4];
    for y in 0..2 {
        for obs in 0..2 {
            let total: f64 = (0..2).map(|d| cells[y * 2 + d][obs]).sum();
            for d in 0..2 {
                out[y * 2 + d] += cells[y * 2 + d][obs] / total * 0.25;
            }
        }
    }
    Ok(out)
}

/// Mass per true group after multiplying each cell by the cost
/// `1 / (4 π̃(y, observed))` (population upweighting on noisy labels).
pub fn uw_population_masses(pi0: f64, p: f64) -> Result<[f64; 4]> {
    let cells = noisy_cell_masses(pi0, p)?;
    let mut observed = [0.0; 4];
    for (g, cell) in cells.iter().enumerate() {
        let y = g / 2;
        for (obs, mass) in cell.iter().enumerate() {
            observed[y * 2 + obs] += mass;
        }
    }
    let mut out = [0.0; 4];
    for (g, cell) in cells.iter().enumerate() {
        let y = g / 2;
        for (obs, mass) in cell.iter().enumerate() {
            out[g] += mass / (4.0 * observed[y * 2 + obs]);
        }
    }
    Ok(out)
}

/// Exact moments of the mixture with the given (unnormalised) group masses.
pub fn population_moments(spec: &MixtureSpec, masses: &[f64; 4]) -> Result<WeightedMoments> {
    spec.validate()?;
    let sigma = spec.sigma_matrix()?;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    let total: f64 = masses.iter().sum();
    if masses.iter().any(|&v| v < 0.0 || !v.is_finite()) || !(total > 0.0) {
        return Err(Error::InvalidPrior(format!(
            "group masses {masses:?} are not a distribution"
        )));
    }
    let means: Vec<_> = GroupKey::all(2, 2).map(|k| spec.group_mean(k)).collect();
    let mut mean_x = DVector::zeros(spec.dim());
    let mut mean_y = 0.0;
    for (g, mu) in means.iter().enumerate() {
        mean_x += mu * (masses[g] / total);
        mean_y += (g / 2) as f64 * masses[g] / total;
    }
    let mut cov_xx = sigma;
    let mut cov_xy = DVector::zeros(spec.dim());
    for (g, mu) in means.iter().enumerate() {
        let q = masses[g] / total;
        let dm = mu - &mean_x;
        cov_xx += &dm * dm.transpose() * q;
        cov_xy += &dm * (((g / 2) as f64 - mean_y) * q);
    }
    Ok(WeightedMoments {
        mean_x,
        mean_y,
        cov_xx,
        cov_xy,
    })
}

/// Population least-squares model for the given group masses.
pub fn population_least_squares(spec: &MixtureSpec, masses: &[f64; 4]) -> Result<LinearModel> {
    population_moments(spec, masses)?.solve(&LsqConfig { jitter: 0.0 })
}

/// Groups that are minorities under the mixture's labelling, for reporting.
pub fn minority_groups() -> [GroupKey; 2] {
    let keys: Vec<_> = GroupKey::all(2, 2).filter(|&k| is_minority(k)).collect();
    [keys[0], keys[1]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_abs_diff_eq!(normal_cdf(1.0), 0.841_344_746_068_542_9, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(-1.959_963_984_540_054), 0.025, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(-8.0), 6.220_960_574_271_785e-16, epsilon = 1e-28);
    }

    #[test]
    fn spurious_2d_c_tilde_and_wga() {
        let spec = MixtureSpec::spurious_2d();
        assert_abs_diff_eq!(c_tilde(&spec, 0.02).unwrap(), 0.92 / 10.6, epsilon = 1e-12);
        let expected = normal_cdf(
            (125.0 / 6.0 - 0.92 / 10.6 * 250.0)
                / (2.0 * (125.0 / 6.0 + (0.92f64 / 10.6).powi(2) * 250.0).sqrt()),
        );
        assert_abs_diff_eq!(erm_wga(&spec, 0.02).unwrap(), expected, epsilon = 1e-14);
        assert_abs_diff_eq!(
            erm_wga(&spec, 0.25).unwrap(),
            normal_cdf((125.0f64 / 6.0).sqrt() / 2.0),
            epsilon = 1e-14
        );
    }

    #[test]
    fn closed_form_direction_matches_population_fit() {
        let spec = MixtureSpec::spurious_2d();
        let cf = erm_weights(&spec, 0.02).unwrap();
        let ls = population_least_squares(&spec, &group_priors(0.02)).unwrap();
        for j in 0..2 {
            assert_abs_diff_eq!(cf.w[j], ls.w()[j], epsilon = 1e-8 * cf.w.amax());
        }
        assert_abs_diff_eq!(cf.b, ls.b(), epsilon = 1e-8);
        // γ Σ⁻¹(Δ_D − c Δ_C)
        let metric = spec.validate().unwrap();
        let dir = metric.solve(&(spec.delta_d_vec() - spec.delta_c_vec() * cf.c_pi0)) * cf.gamma;
        assert!((dir - &cf.w).amax() < 1e-10 * cf.w.amax());
    }

    #[test]
    fn group_accuracy_routes_agree() {
        let spec = MixtureSpec::spurious_2d();
        for pi0 in [0.01, 0.02, 0.1, 0.2, 0.25] {
            let model = erm_weights(&spec, pi0).unwrap().model();
            let acc = population_group_accuracy(&spec, &model).unwrap();
            let (minority, majority) = erm_group_accuracies(&spec, pi0).unwrap();
            assert_abs_diff_eq!(
                acc.get(GroupKey::new(0, 0)).unwrap(),
                minority,
                epsilon = 1e-10
            );
            assert_abs_diff_eq!(
                acc.get(GroupKey::new(1, 1)).unwrap(),
                minority,
                epsilon = 1e-10
            );
            assert_abs_diff_eq!(
                acc.get(GroupKey::new(1, 0)).unwrap(),
                majority,
                epsilon = 1e-10
            );
            assert_abs_diff_eq!(
                acc.get(GroupKey::new(0, 1)).unwrap(),
                majority,
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn balanced_noisy_populations_match_closed_form() {
        let spec = MixtureSpec::spurious_2d();
        for p in [0.0, 0.1, 0.3, 0.5] {
            let ds = ds_population_masses(0.02, p).unwrap();
            let uw = uw_population_masses(0.02, p).unwrap();
            let pi_ds = ds_effective_prior(0.02, p).unwrap();
            let priors = group_priors(pi_ds);
            for g in 0..4 {
                assert_abs_diff_eq!(ds[g], priors[g], epsilon = 1e-14);
                assert_abs_diff_eq!(uw[g], priors[g], epsilon = 1e-14);
            }
            let m_ds = population_least_squares(&spec, &ds).unwrap();
            let cf = erm_weights(&spec, pi_ds).unwrap();
            assert!((&m_ds.w() - &Array1::from_iter(cf.w.iter().copied()))
                .iter()
                .all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn nonorthogonal_spec_is_refused() {
        let mut spec = MixtureSpec::spurious_2d();
        spec.delta_d = vec![-0.25, 0.0];
        assert_eq!(
            erm_wga(&spec, 0.02).unwrap_err().code(),
            "assumption-violated"
        );
        // the weights themselves do not need orthogonality
        assert!(erm_weights(&spec, 0.02).is_ok());
    }

    #[test]
    fn wga_falls_with_noise() {
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
        let r = wga_monotonicity_check(&MixtureSpec::spurious_2d(), &[0.02, 0.25], &grid);
        assert!(r.passed(), "{:?}", r.violations);
        for s in &r.slopes {
            if s.pi0 == 0.25 {
                assert!(s.slope.abs() < 1e-10);
            } else if s.p < 0.5 {
                assert!(s.slope < 0.0);
            }
        }
        let curve = theory_curve(&MixtureSpec::spurious_2d(), &grid).unwrap();
        assert_abs_diff_eq!(
            curve[0].wga_ds,
            erm_wga(&MixtureSpec::spurious_2d(), 0.25).unwrap(),
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(curve[10].wga_ds, curve[10].wga_erm, epsilon = 1e-14);
    }
}
