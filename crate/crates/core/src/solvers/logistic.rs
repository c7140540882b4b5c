//! Penalised, weighted logistic regression.
//!
//! Minimises `(1/n) Σᵢ cᵢ ℓ(f_θ(xᵢ), yᵢ) + λ‖w‖₁` (or `λ‖w‖₂²`) over
//! `θ = (w, b)` with the bias unpenalised. Binary problems use a scalar
//! logit and the sigmoid link; `K > 2` uses softmax cross-entropy with the
//! penalty on the full weight matrix.
//!
//! The solver is accelerated proximal gradient (FISTA) with backtracking on
//! the step and a momentum restart whenever a step would raise the
//! objective, so accepted iterates never increase the objective. Once a
//! step lowers the objective by less than `tol · |F|` the solver switches to
//! plain steps at a frozen step size and stops when the geometric tail of
//! their decreases is also below `tol · |F|`. Iterations run on centred, unit-variance columns with the
//! penalty reweighted per column; because the bias is free this is an exact
//! reparametrisation and the returned model is in the original coordinates.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{LinearModel, Link};
use crate::solvers::soft_threshold;
use crate::weighting::WeightingScheme;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepRule {
    /// Constant step `1/L` from a guaranteed Lipschitz upper bound.
    Fixed,
    /// Start at `1/L̂` from a power-iteration estimate and halve until the
    /// sufficient-decrease condition holds.
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop once an accepted step lowers the objective by less than `tol · |F|`.
    pub tol: f64,
    pub step_rule: StepRule,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            max_iters: 10_000,
            tol: 1e-8,
            step_rule: StepRule::Backtracking,
        }
    }
}

impl LogRegConfig {
    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidLambda(self.lambda));
        }
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidConfig(format!(
                "tol must be > 0 and max_iters >= 1 (got {}, {})",
                self.tol, self.max_iters
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Exact zeros in `w`.
    pub sparsity: usize,
}

/// The smooth part `(1/n) Σ cᵢ ℓᵢ` of the objective for fixed data and costs.
#[derive(Debug, Clone)]
pub struct LogisticLoss<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    costs: Vec<f64>,
    outputs: usize,
}

impl<'a> LogisticLoss<'a> {
    pub fn new(data: &'a LabeledDataset, weights: &WeightingScheme) -> Result<Self> {
        let costs = weights.sample_weights(data)?;
        Self::with_costs(data.features(), data.y(), costs, data.num_classes())
    }

    pub fn with_costs(
        x: ArrayView2<'a, f64>,
        y: &'a [usize],
        costs: Vec<f64>,
        num_classes: usize,
    ) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::EmptyDataset("logistic regression needs rows".into()));
        }
        if y.len() != x.nrows() || costs.len() != x.nrows() {
            return Err(Error::ShapeMismatch(
                "labels, costs and features disagree".into(),
            ));
        }
        if num_classes < 2 {
            return Err(Error::InvalidLabel(format!(
                "need K >= 2 classes, got {num_classes}"
            )));
        }
        if costs.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidConfig("sample costs must be positive".into()));
        }
        let outputs = if num_classes == 2 { 1 } else { num_classes };
        Ok(Self {
            x,
            y,
            costs,
            outputs,
        })
    }

    pub fn link(&self) -> Link {
        if self.outputs == 1 {
            Link::Sigmoid
        } else {
            Link::SoftmaxArgmax
        }
    }

    pub fn num_classes(&self) -> usize {
        if self.outputs == 1 {
            2
        } else {
            self.outputs
        }
    }

    fn n(&self) -> f64 {
        self.x.nrows() as f64
    }

    fn scores(&self, x: ArrayView2<'_, f64>, w: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
        x.dot(w) + b
    }

    /// Loss value at `(w, b)` against features `x` (the stored ones or a centred copy).
    fn value_at(&self, x: ArrayView2<'_, f64>, w: &Array2<f64>, b: &Array1<f64>) -> f64 {
        if self.outputs == 1 {
            let z = x.dot(&w.column(0)) + b[0];
            let total: f64 = Zip::from(&z)
                .and(self.y)
                .and(&self.costs[..])
                .fold(0.0, |acc, &z, &y, &c| {
                    acc + c * (softplus(z) - if y == 1 { z } else { 0.0 })
                });
            return total / self.n();
        }
        let s = self.scores(x, w, b);
        let mut total = 0.0;
        for (i, row) in s.rows().into_iter().enumerate() {
            let li = if self.outputs == 1 {
                let z = row[0];
                softplus(z) - if self.y[i] == 1 { z } else { 0.0 }
            } else {
                log_sum_exp(row.iter().copied()) - row[self.y[i]]
            };
            total += self.costs[i] * li;
        }
        total / self.n()
    }

    /// Value and gradient at `(w, b)`.
    fn value_grad_at(
        &self,
        x: ArrayView2<'_, f64>,
        w: &Array2<f64>,
        b: &Array1<f64>,
    ) -> (f64, Array2<f64>, Array1<f64>) {
        let n = self.n();
        if self.outputs == 1 {
            let mut z = x.dot(&w.column(0)) + b[0];
            let mut total = 0.0;
            Zip::from(&mut z)
                .and(self.y)
                .and(&self.costs[..])
                .for_each(|z, &y, &c| {
                    // one exponential serves both the loss and its derivative
                    let e = (-z.abs()).exp();
                    let yi = if y == 1 { 1.0 } else { 0.0 };
                    total += c * (z.max(0.0) + e.ln_1p() - yi * *z);
                    let p = if *z >= 0.0 {
                        1.0 / (1.0 + e)
                    } else {
                        e / (1.0 + e)
                    };
                    *z = c / n * (p - yi);
                });
            let gw = x.t().dot(&z).insert_axis(Axis(1));
            let gb = Array1::from_elem(1, z.sum());
            return (total / n, gw, gb);
        }
        let mut s = self.scores(x, w, b);
        let mut total = 0.0;
        for (i, mut row) in s.rows_mut().into_iter().enumerate() {
            let ci = self.costs[i] / n;
            if self.outputs == 1 {
                let z = row[0];
                let yi = if self.y[i] == 1 { 1.0 } else { 0.0 };
                total += self.costs[i] * (softplus(z) - yi * z);
                row[0] = ci * (sigmoid(z) - yi);
            } else {
                let lse = log_sum_exp(row.iter().copied());
                total += self.costs[i] * (lse - row[self.y[i]]);
                row.mapv_inplace(|v| (v - lse).exp() * ci);
                row[self.y[i]] -= ci;
            }
        }
        let gw = x.t().dot(&s);
        let gb = s.sum_axis(Axis(0));
        (total / n, gw, gb)
    }

    /// `(1/n) Σ cᵢ ℓᵢ` at `model`.
    pub fn value(&self, model: &LinearModel) -> Result<f64> {
        self.check_model(model)?;
        Ok(self.value_at(
            self.x,
            &model.weights().to_owned(),
            &model.bias().to_owned(),
        ))
    }

    /// Gradient of the smooth part with respect to `(w, b)`.
    pub fn gradient(&self, model: &LinearModel) -> Result<(Array2<f64>, Array1<f64>)> {
        self.check_model(model)?;
        let (_, gw, gb) = self.value_grad_at(
            self.x,
            &model.weights().to_owned(),
            &model.bias().to_owned(),
        );
        Ok((gw, gb))
    }

    fn check_model(&self, model: &LinearModel) -> Result<()> {
        if model.input_dim() != self.x.ncols() || model.outputs() != self.outputs {
            return Err(Error::ShapeMismatch(
                "model does not match the problem".into(),
            ));
        }
        Ok(())
    }

    /// Bias minimising the loss when `w = 0`: weighted class log-odds
    /// (binary) or log class frequencies (softmax).
    fn null_bias(&self) -> Array1<f64> {
        let k = self.num_classes();
        let mut mass = vec![0.0; k];
        for (i, &y) in self.y.iter().enumerate() {
            mass[y] += self.costs[i];
        }
        if self.outputs == 1 {
            Array1::from_elem(1, safe_ln(mass[1]) - safe_ln(mass[0]))
        } else {
            mass.iter().map(|&v| safe_ln(v)).collect()
        }
    }

    /// Smallest `λ` for which the L1 solution has `w = 0`:
    /// `‖∇_w L(0, b*)‖_∞` with `b*` the best intercept-only fit.
    pub fn lambda_max(&self) -> f64 {
        let (xc, _) = center(self.x);
        let w = Array2::zeros((self.x.ncols(), self.outputs));
        let b = self.null_bias().mapv(|v| v.clamp(-700.0, 700.0));
        let (_, gw, _) = self.value_grad_at(xc.view(), &w, &b);
        gw.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Upper bound on the Lipschitz constant of the gradient.
    fn lipschitz_bound(&self, xc: ArrayView2<'_, f64>) -> f64 {
        let curvature = if self.outputs == 1 { 0.25 } else { 0.5 };
        let trace: f64 = xc
            .rows()
            .into_iter()
            .zip(&self.costs)
            .map(|(r, c)| c * (r.dot(&r) + 1.0))
            .sum();
        curvature * trace / self.n()
    }

    /// Power-iteration estimate of the same constant (can undershoot).
    fn lipschitz_estimate(&self, xc: ArrayView2<'_, f64>) -> f64 {
        let curvature = if self.outputs == 1 { 0.25 } else { 0.5 };
        let m = xc.ncols();
        let mut v = Array1::from_elem(m + 1, 1.0 / ((m + 1) as f64).sqrt());
        let mut eig = 0.0;
        for _ in 0..30 {
            // u = Z v with Z = [X, 1]; v' = Zᵀ C u / n
            let mut u = xc.dot(&v.slice(ndarray::s![..m])) + v[m];
            Zip::from(&mut u)
                .and(&self.costs[..])
                .for_each(|a, &c| *a *= c);
            let mut next = Array1::zeros(m + 1);
            next.slice_mut(ndarray::s![..m]).assign(&xc.t().dot(&u));
            next[m] = u.sum();
            next /= self.n();
            let norm = next.dot(&next).sqrt();
            if !(norm > 0.0) {
                break;
            }
            eig = norm;
            v = next / norm;
        }
        curvature * eig
    }
}

fn safe_ln(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        -700.0
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn log_sum_exp(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = v.clone().fold(f64::NEG_INFINITY, f64::max);
    max + v.map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn center(x: ArrayView2<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    (&x - &mean, mean)
}

fn penalty_value(w: &Array2<f64>, penalty: Penalty, lambda: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    match penalty {
        Penalty::L1 => lambda * w.iter().map(|v| v.abs()).sum::<f64>(),
        Penalty::L2 => lambda * w.iter().map(|v| v * v).sum::<f64>(),
    }
}

/// Full objective `(1/n) Σ cᵢ ℓᵢ + penalty(w)` at `model`.
pub fn objective(
    loss: &LogisticLoss<'_>,
    model: &LinearModel,
    penalty: Penalty,
    lambda: f64,
) -> Result<f64> {
    Ok(loss.value(model)? + penalty_value(&model.weights().to_owned(), penalty, lambda))
}

pub fn fit_l1_logistic(
    data: &LabeledDataset,
    weights: &WeightingScheme,
    cfg: &LogRegConfig,
) -> Result<(LinearModel, FitDiagnostics)> {
    fit_logistic(data, weights, cfg, Penalty::L1)
}

/// Ridge-penalised variant: `λ‖w‖₂²` in the smooth part, no proximal step.
pub fn fit_l2_logistic(
    data: &LabeledDataset,
    weights: &WeightingScheme,
    cfg: &LogRegConfig,
) -> Result<(LinearModel, FitDiagnostics)> {
    fit_logistic(data, weights, cfg, Penalty::L2)
}

pub fn fit_logistic(
    data: &LabeledDataset,
    weights: &WeightingScheme,
    cfg: &LogRegConfig,
    penalty: Penalty,
) -> Result<(LinearModel, FitDiagnostics)> {
    cfg.validate()?;
    let loss = LogisticLoss::new(data, weights)?;
    solve(&loss, cfg, penalty)
}

/// Runs the solver on a prepared loss.
pub fn solve(
    loss: &LogisticLoss<'_>,
    cfg: &LogRegConfig,
    penalty: Penalty,
) -> Result<(LinearModel, FitDiagnostics)> {
    cfg.validate()?;
    let (xc, mean) = center(loss.x);
    // unit-variance columns: v_j = s_j w_j, penalties reweighted to match
    let scale = xc
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 0.0 && s.is_finite() { s } else { 1.0 });
    let xs = &xc / &scale;
    let xs = xs.view();
    let lambda = cfg.lambda;
    let m = loss.x.ncols();
    let k = loss.outputs;

    let col = |f: &dyn Fn(f64) -> f64| scale.mapv(f).insert_axis(Axis(1));
    let ridge = match penalty {
        Penalty::L2 => col(&|s| lambda / (s * s)),
        Penalty::L1 => Array2::zeros((m, 1)),
    };
    let l1 = match penalty {
        Penalty::L1 => col(&|s| lambda / s),
        Penalty::L2 => Array2::zeros((m, 1)),
    };
    let ridge_value = |w: &Array2<f64>| (w * w * &ridge).sum();
    let smooth = |w: &Array2<f64>, b: &Array1<f64>| loss.value_at(xs, w, b) + ridge_value(w);
    let smooth_grad = |w: &Array2<f64>, b: &Array1<f64>| {
        let (f, mut gw, gb) = loss.value_grad_at(xs, w, b);
        gw += &(w * &ridge * 2.0);
        (f + ridge_value(w), gw, gb)
    };
    let nonsmooth = |w: &Array2<f64>| (w.mapv(f64::abs) * &l1).sum();
    let max_ridge = ridge.iter().copied().fold(0.0, f64::max);

    let lipschitz = match cfg.step_rule {
        StepRule::Fixed => loss.lipschitz_bound(xs),
        StepRule::Backtracking => loss.lipschitz_estimate(xs).max(1e-12),
    } + 2.0 * max_ridge;
    let mut step = 1.0 / lipschitz;
    let max_step = 1e6 * step;

    let mut w = Array2::<f64>::zeros((m, k));
    let mut b = Array1::<f64>::zeros(k);
    let mut f_cur = smooth(&w, &b) + nonsmooth(&w);
    let mut yw = w.clone();
    let mut yb = b.clone();
    let mut momentum = 1.0_f64;
    let mut converged = false;
    let mut iterations = 0;
    // Some(last plain decrease) while confirming convergence
    let mut probe: Option<Option<f64>> = None;

    while iterations < cfg.max_iters {
        iterations += 1;
        let (fy, gw, gb) = smooth_grad(&yw, &yb);
        if cfg.step_rule == StepRule::Backtracking && probe.is_none() {
            // curvature flattens near the optimum; let the step recover
            step = (step * 1.25).min(max_step);
        }
        let (zw, zb, fz_smooth) = loop {
            let mut zw = &yw - &(&gw * step);
            if penalty == Penalty::L1 && lambda > 0.0 {
                Zip::from(&mut zw)
                    .and_broadcast(&l1)
                    .for_each(|v, &t| *v = soft_threshold(*v, step * t));
            }
            let zb = &yb - &(&gb * step);
            let fz = smooth(&zw, &zb);
            if cfg.step_rule == StepRule::Fixed {
                break (zw, zb, fz);
            }
            let dw = &zw - &yw;
            let db = &zb - &yb;
            let lin = (&gw * &dw).sum() + (&gb * &db).sum();
            let quad = (dw.mapv(|v| v * v).sum() + db.mapv(|v| v * v).sum()) / (2.0 * step);
            if fz <= fy + lin + quad + 1e-12 * fy.abs() || step < 1e-300 {
                break (zw, zb, fz);
            }
            step *= 0.5;
        };
        let f_new = fz_smooth + nonsmooth(&zw);
        let (prev_w, prev_b) = (w.clone(), b.clone());
        if !f_new.is_finite() {
            return Err(Error::Diverged(format!(
                "objective became {f_new} at iteration {iterations}"
            )));
        }
        if f_new > f_cur {
            let was_plain = yw == w && yb == b;
            if was_plain {
                // a plain step from the current point cannot improve: stationary
                converged = true;
                break;
            }
            momentum = 1.0;
            yw.assign(&w);
            yb.assign(&b);
            continue;
        }
        let plain = yw == w && yb == b;
        let decrease = f_cur - f_new;
        let target = cfg.tol * f_new.abs().max(f64::MIN_POSITIVE);
        w = zw;
        b = zb;
        f_cur = f_new;
        if decrease <= target {
            // remaining gap if plain steps keep contracting at ratio d_k / d_{k−1}
            let tail = match probe {
                _ if plain && decrease == 0.0 => 0.0,
                Some(Some(prev)) if plain && decrease < prev => {
                    decrease * decrease / (prev - decrease)
                }
                _ => f64::INFINITY,
            };
            if tail <= target {
                converged = true;
                break;
            }
            // probe with plain steps at a frozen step size
            probe = Some((plain && probe.is_some()).then_some(decrease));
            momentum = 1.0;
            yw.assign(&w);
            yb.assign(&b);
            continue;
        }
        probe = None;
        let next_momentum = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_momentum;
        yw = &w + &((&w - &prev_w) * beta);
        yb = &b + &((&b - &prev_b) * beta);
        momentum = next_momentum;
    }

    // back to original coordinates: vᵀ((x − x̄)/s) + b̃ = wᵀx + (b̃ − x̄ᵀw), w = v/s
    let w = w / &scale.insert_axis(Axis(1));
    let bias = &b - &mean.dot(&w);
    let model = LinearModel::new(w, bias, loss.link())?;
    let objective =
        loss.value(&model)? + penalty_value(&model.weights().to_owned(), penalty, lambda);
    if !objective.is_finite() {
        return Err(Error::Diverged("final objective is not finite".into()));
    }
    let diagnostics = FitDiagnostics {
        iterations,
        objective,
        converged,
        sparsity: model.sparsity(),
    };
    Ok((model, diagnostics))
}

/// Plain full-batch gradient descent on the unpenalised loss from `start`.
pub fn gradient_descent(
    loss: &LogisticLoss<'_>,
    start: &LinearModel,
    steps: usize,
    learning_rate: f64,
) -> Result<LinearModel> {
    loss.check_model(start)?;
    let mut w = start.weights().to_owned();
    let mut b = start.bias().to_owned();
    for _ in 0..steps {
        let (_, gw, gb) = loss.value_grad_at(loss.x, &w, &b);
        w.scaled_add(-learning_rate, &gw);
        b.scaled_add(-learning_rate, &gb);
    }
    LinearModel::new(w, b, start.link())
}
