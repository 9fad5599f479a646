//! End-to-end ITE pipelines.
//!
//! All three estimators share the same front half: standardize the training
//! features, take the training rows as the targeted population, and work
//! per arm. They differ in how the arm regressions are weighted:
//!
//! * counterfactual balancing: balancing weights feed a weighted elastic net;
//! * factual-counterfactual balancing: an unweighted elastic net provides an
//!   anchor, then a weighted ridge refit is pulled toward that anchor;
//! * the regularized-OLS baseline: unweighted elastic nets per arm.
//!
//! Coefficients are stored on the standardized feature scale together with
//! the transform, so `tau(x)` is a fixed linear function of raw features;
//! original-scale coefficients are exposed for reporting.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::balance::{solve_weights, BalanceConfig, BalancingWeights};
use crate::data::{
    standardization_for, target_moments, ObservationalDataset, StandardizationTransform,
    TargetMoments,
};
use crate::error::{Error, Result};
use crate::regress::{
    cv_select_lambda, cv_select_lambda_prime, fit_anchored_ridge, fit_weighted_elastic_net,
    predict, Coefficients, FitStatus,
};

pub const MODEL_FORMAT_VERSION: &str = "cfbalance-model/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[serde(rename = "algo1")]
    CounterfactualBalancing,
    #[serde(rename = "algo2")]
    FactualCounterfactualBalancing,
    #[serde(rename = "olsr")]
    OlsRegularized,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::CounterfactualBalancing => "algo1",
            Method::FactualCounterfactualBalancing => "algo2",
            Method::OlsRegularized => "olsr",
        }
    }

    pub fn uses_balancing(&self) -> bool {
        !matches!(self, Method::OlsRegularized)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "algo1" => Ok(Method::CounterfactualBalancing),
            "algo2" => Ok(Method::FactualCounterfactualBalancing),
            "olsr" => Ok(Method::OlsRegularized),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

/// How the anchored-refit penalty `lambda'` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPrimeRule {
    /// `lambda' = factor * tr(weighted Gram) / (m d)`, the mean weighted
    /// squared feature size. Matches the weighted loss scale without
    /// adapting to the response.
    ScaledFixed { factor: f64 },
    /// k-fold cross-validation on the weighted validation loss over a log
    /// grid around the same scale.
    CrossValidated,
    /// An explicit value.
    Fixed { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    pub balance: BalanceConfig,
    /// Elastic-net mixing parameter.
    pub alpha: f64,
    pub folds: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub fit_intercept: bool,
    pub lambda_prime: LambdaPrimeRule,
    /// Diagnostic switch: replace the solved balancing weights with uniform
    /// ones (under which counterfactual balancing reduces to the baseline).
    pub force_uniform_weights: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: Method::FactualCounterfactualBalancing,
            balance: BalanceConfig::default(),
            alpha: 0.9,
            folds: 10,
            grid_size: 100,
            seed: 0,
            fit_intercept: true,
            lambda_prime: LambdaPrimeRule::ScaledFixed { factor: 1.0 },
            force_uniform_weights: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.balance.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be in [0,1], got {}",
                self.alpha
            )));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be at least 2".into()));
        }
        if self.grid_size == 0 {
            return Err(Error::InvalidConfig("grid_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// The unweighted step-3 fits of the factual-counterfactual pipeline,
/// needed separately for the error-bound diagnostics.
#[derive(Debug, Clone)]
pub struct Anchors {
    pub treated: Coefficients,
    pub control: Coefficients,
}

/// A fitted ITE model: per-arm coefficients on the standardized feature
/// scale, the balancing weights that produced them (when the method uses
/// balancing), the target moments, and the feature transform.
#[derive(Debug, Clone)]
pub struct IteModel {
    pub method: Method,
    pub beta_treated: Coefficients,
    pub beta_control: Coefficients,
    pub weights_treated: Option<BalancingWeights>,
    pub weights_control: Option<BalancingWeights>,
    pub target: TargetMoments,
    pub standardization: StandardizationTransform,
    pub config: EstimatorConfig,
}

impl IteModel {
    /// Per-arm prediction on raw features (standardizes first).
    pub fn predict_arm(&self, x_new: &ArrayView2<f64>, treated: bool) -> Result<Array1<f64>> {
        let xs = self.standardize_new(x_new)?;
        let coef = if treated { &self.beta_treated } else { &self.beta_control };
        predict(&xs.view(), coef)
    }

    /// `tau(x) = prediction under treatment - prediction under control`.
    pub fn estimate_ite(&self, x_new: &ArrayView2<f64>) -> Result<Array1<f64>> {
        let xs = self.standardize_new(x_new)?;
        let t = predict(&xs.view(), &self.beta_treated)?;
        let c = predict(&xs.view(), &self.beta_control)?;
        Ok(t - c)
    }

    fn standardize_new(&self, x_new: &ArrayView2<f64>) -> Result<Array2<f64>> {
        let d = self.standardization.center.len();
        if x_new.ncols() != d {
            return Err(Error::DimensionMismatch(format!(
                "model was trained on {d} features, got {}",
                x_new.ncols()
            )));
        }
        Ok(self.standardization.apply(x_new))
    }

    /// The stored coefficients mapped back to the raw feature scale.
    pub fn original_scale(&self, treated: bool) -> Coefficients {
        let coef = if treated { &self.beta_treated } else { &self.beta_control };
        to_original_scale(coef, &self.standardization)
    }
}

/// Map coefficients fitted on standardized features back to the raw scale.
pub fn to_original_scale(c: &Coefficients, t: &StandardizationTransform) -> Coefficients {
    let beta = Array1::from_iter(c.beta.iter().zip(t.scale.iter()).map(|(&b, &s)| b / s));
    let shift: f64 = c
        .beta
        .iter()
        .zip(t.center.iter().zip(t.scale.iter()))
        .map(|(&b, (&m, &s))| b * m / s)
        .sum();
    Coefficients {
        beta,
        intercept: c.intercept - shift,
        ..c.clone()
    }
}

/// Free-function form of [`IteModel::estimate_ite`].
pub fn estimate_ite(model: &IteModel, x_new: &ArrayView2<f64>) -> Result<Array1<f64>> {
    model.estimate_ite(x_new)
}

fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stage + 1)
}

fn uniform_weights(m: usize) -> Array1<f64> {
    Array1::from_elem(m, 1.0 / m as f64)
}

struct Prepared {
    x_std: Array2<f64>,
    transform: StandardizationTransform,
    target: TargetMoments,
    treated_idx: Vec<usize>,
    control_idx: Vec<usize>,
}

fn prepare(train: &ObservationalDataset) -> Result<Prepared> {
    let n_t = train.n_treated();
    let n_c = train.n_control();
    if n_t < 2 || n_c < 2 {
        return Err(Error::DegenerateGroup(format!(
            "need at least 2 units per arm, got {n_t} treated and {n_c} control"
        )));
    }
    let transform = standardization_for(&train.features.view());
    let x_std = transform.apply(&train.features.view());
    let target = target_moments(&x_std.view())?;
    Ok(Prepared {
        treated_idx: train.arm_indices(true),
        control_idx: train.arm_indices(false),
        x_std,
        transform,
        target,
    })
}

struct ArmData {
    x: Array2<f64>,
    y: Array1<f64>,
}

fn arm_data(train: &ObservationalDataset, prep: &Prepared, treated: bool) -> ArmData {
    let idx = if treated { &prep.treated_idx } else { &prep.control_idx };
    ArmData {
        x: crate::data::select_rows(&prep.x_std.view(), idx),
        y: Array1::from_iter(idx.iter().map(|&i| train.outcome[i])),
    }
}

fn arm_balance(
    arm: &ArmData,
    prep: &Prepared,
    cfg: &EstimatorConfig,
) -> Result<BalancingWeights> {
    if cfg.force_uniform_weights {
        let m = arm.x.nrows();
        let weights = uniform_weights(m);
        let resid = &prep.target.means - &arm.x.t().dot(&weights);
        let imb = match cfg.balance.norm {
            crate::balance::BalanceNorm::L2 => resid.dot(&resid).sqrt(),
            crate::balance::BalanceNorm::Linf => {
                resid.iter().fold(0.0_f64, |m, &e| m.max(e.abs()))
            }
        };
        return Ok(BalancingWeights {
            objective_value: (1.0 - cfg.balance.xi) * weights.dot(&weights)
                + cfg.balance.xi * imb * imb,
            achieved_imbalance: imb,
            weights,
            iterations: 0,
            converged: true,
        });
    }
    solve_weights(&arm.x.view(), &prep.target, &cfg.balance)
}

fn effective_folds(cfg_folds: usize, m: usize) -> usize {
    cfg_folds.min(m).max(2)
}

/// Mean weighted squared feature size, `tr(X^T W X) / (m d)`, with the
/// weights rescaled to mean 1.
fn weighted_gram_scale(x: &Array2<f64>, weights: &Array1<f64>) -> f64 {
    let m = x.nrows();
    let d = x.ncols();
    let sum: f64 = weights.sum();
    if sum <= 0.0 || m == 0 || d == 0 {
        return 1.0;
    }
    let mut tr = 0.0;
    for i in 0..m {
        let wi = weights[i] * m as f64 / sum;
        for j in 0..d {
            tr += wi * x[[i, j]] * x[[i, j]];
        }
    }
    tr / (m * d) as f64
}

fn cv_and_fit(
    arm: &ArmData,
    weights: &ArrayView1<f64>,
    cfg: &EstimatorConfig,
    seed: u64,
) -> Result<Coefficients> {
    let folds = effective_folds(cfg.folds, arm.x.nrows());
    let cv = cv_select_lambda(
        &arm.x.view(),
        &arm.y.view(),
        weights,
        cfg.alpha,
        folds,
        cfg.grid_size,
        seed,
        cfg.fit_intercept,
    )?;
    fit_weighted_elastic_net(
        &arm.x.view(),
        &arm.y.view(),
        weights,
        cv.selected_lambda,
        cfg.alpha,
        cfg.fit_intercept,
    )
}

const STAGE_PRIMARY_FIT: u64 = 0;
const STAGE_ANCHOR_FIT: u64 = 1;
const STAGE_REFIT: u64 = 2;

/// Counterfactual balancing: balance each arm to the training-population
/// means, then fit weighted elastic nets with cross-validated penalties.
pub fn fit_counterfactual_balancing(
    train: &ObservationalDataset,
    cfg: &EstimatorConfig,
) -> Result<IteModel> {
    cfg.validate()?;
    let prep = prepare(train)?;
    let fit_arm = |treated: bool| -> Result<(Coefficients, BalancingWeights)> {
        let arm = arm_data(train, &prep, treated);
        let w = arm_balance(&arm, &prep, cfg)?;
        let coef = cv_and_fit(&arm, &w.weights.view(), cfg, stage_seed(cfg.seed, STAGE_PRIMARY_FIT))?;
        Ok((coef, w))
    };
    let (beta_treated, w_t) = fit_arm(true)?;
    let (beta_control, w_c) = fit_arm(false)?;
    Ok(IteModel {
        method: Method::CounterfactualBalancing,
        beta_treated,
        beta_control,
        weights_treated: Some(w_t),
        weights_control: Some(w_c),
        target: prep.target,
        standardization: prep.transform,
        config: cfg.clone(),
    })
}

/// Factual-counterfactual balancing, returning the step-3 anchors alongside
/// the model (the anchors feed the error-bound diagnostics).
pub fn fit_factual_counterfactual_with_anchors(
    train: &ObservationalDataset,
    cfg: &EstimatorConfig,
) -> Result<(IteModel, Anchors)> {
    cfg.validate()?;
    let prep = prepare(train)?;

    let fit_arm = |treated: bool| -> Result<(Coefficients, Coefficients, BalancingWeights)> {
        let arm = arm_data(train, &prep, treated);
        let w = arm_balance(&arm, &prep, cfg)?;
        // Step 3: unweighted elastic net, the factual anchor.
        let uniform = uniform_weights(arm.x.nrows());
        let anchor = cv_and_fit(&arm, &uniform.view(), cfg, stage_seed(cfg.seed, STAGE_ANCHOR_FIT))?;
        // Step 4: weighted ridge pulled toward the anchor.
        let lambda_prime = match cfg.lambda_prime {
            LambdaPrimeRule::Fixed { value } => value,
            LambdaPrimeRule::ScaledFixed { factor } => {
                factor * weighted_gram_scale(&arm.x, &w.weights)
            }
            LambdaPrimeRule::CrossValidated => {
                let folds = effective_folds(cfg.folds, arm.x.nrows());
                cv_select_lambda_prime(
                    &arm.x.view(),
                    &arm.y.view(),
                    &w.weights.view(),
                    &anchor,
                    folds,
                    cfg.grid_size,
                    stage_seed(cfg.seed, STAGE_REFIT),
                    cfg.fit_intercept,
                )?
                .selected_lambda
            }
        };
        let final_fit = fit_anchored_ridge(
            &arm.x.view(),
            &arm.y.view(),
            &w.weights.view(),
            &anchor,
            lambda_prime,
            cfg.fit_intercept,
        )?;
        Ok((final_fit, anchor, w))
    };

    let (beta_treated, anchor_t, w_t) = fit_arm(true)?;
    let (beta_control, anchor_c, w_c) = fit_arm(false)?;
    let model = IteModel {
        method: Method::FactualCounterfactualBalancing,
        beta_treated,
        beta_control,
        weights_treated: Some(w_t),
        weights_control: Some(w_c),
        target: prep.target,
        standardization: prep.transform,
        config: cfg.clone(),
    };
    Ok((
        model,
        Anchors {
            treated: anchor_t,
            control: anchor_c,
        },
    ))
}

pub fn fit_factual_counterfactual_balancing(
    train: &ObservationalDataset,
    cfg: &EstimatorConfig,
) -> Result<IteModel> {
    fit_factual_counterfactual_with_anchors(train, cfg).map(|(m, _)| m)
}

/// Regularized-OLS baseline: unweighted elastic nets per arm, no balancing.
pub fn fit_ols_regularized_baseline(
    train: &ObservationalDataset,
    cfg: &EstimatorConfig,
) -> Result<IteModel> {
    cfg.validate()?;
    let prep = prepare(train)?;
    let fit_arm = |treated: bool| -> Result<Coefficients> {
        let arm = arm_data(train, &prep, treated);
        let uniform = uniform_weights(arm.x.nrows());
        cv_and_fit(&arm, &uniform.view(), cfg, stage_seed(cfg.seed, STAGE_PRIMARY_FIT))
    };
    Ok(IteModel {
        method: Method::OlsRegularized,
        beta_treated: fit_arm(true)?,
        beta_control: fit_arm(false)?,
        weights_treated: None,
        weights_control: None,
        target: prep.target,
        standardization: prep.transform,
        config: cfg.clone(),
    })
}

/// Dispatch on `cfg.method`.
pub fn fit_model(train: &ObservationalDataset, cfg: &EstimatorConfig) -> Result<IteModel> {
    match cfg.method {
        Method::CounterfactualBalancing => fit_counterfactual_balancing(train, cfg),
        Method::FactualCounterfactualBalancing => fit_factual_counterfactual_balancing(train, cfg),
        Method::OlsRegularized => fit_ols_regularized_baseline(train, cfg),
    }
}

/// Flat, serializable form of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelDocument {
    pub version: String,
    pub method: String,
    pub beta_treated: Vec<f64>,
    pub intercept_treated: f64,
    pub lambda_treated: f64,
    pub status_treated: FitStatus,
    pub beta_control: Vec<f64>,
    pub intercept_control: f64,
    pub lambda_control: f64,
    pub status_control: FitStatus,
    /// Raw-scale equivalents of the stored coefficients, for reporting.
    pub beta_treated_original: Vec<f64>,
    pub intercept_treated_original: f64,
    pub beta_control_original: Vec<f64>,
    pub intercept_control_original: f64,
    pub standardize_center: Vec<f64>,
    pub standardize_scale: Vec<f64>,
    pub target_means: Vec<f64>,
    pub balance_converged_treated: Option<bool>,
    pub balance_converged_control: Option<bool>,
    pub balance_imbalance_treated: Option<f64>,
    pub balance_imbalance_control: Option<f64>,
    pub config: EstimatorConfig,
}

impl IteModel {
    pub fn to_document(&self) -> ModelDocument {
        let orig_t = self.original_scale(true);
        let orig_c = self.original_scale(false);
        ModelDocument {
            version: MODEL_FORMAT_VERSION.to_string(),
            method: self.method.tag().to_string(),
            beta_treated: self.beta_treated.beta.to_vec(),
            intercept_treated: self.beta_treated.intercept,
            lambda_treated: self.beta_treated.lambda_used,
            status_treated: self.beta_treated.status,
            beta_control: self.beta_control.beta.to_vec(),
            intercept_control: self.beta_control.intercept,
            lambda_control: self.beta_control.lambda_used,
            status_control: self.beta_control.status,
            beta_treated_original: orig_t.beta.to_vec(),
            intercept_treated_original: orig_t.intercept,
            beta_control_original: orig_c.beta.to_vec(),
            intercept_control_original: orig_c.intercept,
            standardize_center: self.standardization.center.to_vec(),
            standardize_scale: self.standardization.scale.to_vec(),
            target_means: self.target.means.to_vec(),
            balance_converged_treated: self.weights_treated.as_ref().map(|w| w.converged),
            balance_converged_control: self.weights_control.as_ref().map(|w| w.converged),
            balance_imbalance_treated: self.weights_treated.as_ref().map(|w| w.achieved_imbalance),
            balance_imbalance_control: self.weights_control.as_ref().map(|w| w.achieved_imbalance),
            config: self.config.clone(),
        }
    }
}
