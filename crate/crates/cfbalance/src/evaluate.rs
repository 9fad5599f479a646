//! PEHE scoring, replicated benchmark tables, and error-bound diagnostics.

use std::io::Write;

use ndarray::{Array1, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::Serialize;

use crate::balance::BalanceNorm;
use crate::data::ObservationalDataset;
use crate::error::{Error, Result};
use crate::estimator::{
    fit_model, to_original_scale, Anchors, EstimatorConfig, IteModel, Method,
};
use crate::linalg;
use crate::simulate::{split_simulated, SimulatedDataset};

/// Root-mean-square error of estimated against realized unit-level effects.
pub fn pehe(tau_hat: &ArrayView1<f64>, y1: &ArrayView1<f64>, y0: &ArrayView1<f64>) -> Result<f64> {
    let k = tau_hat.len();
    if k == 0 {
        return Err(Error::EmptyInput("pehe on empty vectors"));
    }
    if y1.len() != k || y0.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "tau_hat has {k} entries, y1 has {}, y0 has {}",
            y1.len(),
            y0.len()
        )));
    }
    let mut s = 0.0;
    for i in 0..k {
        let e = tau_hat[i] - (y1[i] - y0[i]);
        s += e * e;
    }
    Ok((s / k as f64).sqrt())
}

/// One benchmark method: an estimator and a balancing norm.
#[derive(Debug, Clone)]
pub struct MethodSpec {
    pub name: String,
    pub method: Method,
    pub norm: BalanceNorm,
}

impl MethodSpec {
    pub fn new(method: Method, norm: BalanceNorm) -> Self {
        let name = if method.uses_balancing() {
            format!("{}-{}", method.tag(), norm)
        } else {
            method.tag().to_string()
        };
        Self { name, method, norm }
    }
}

/// The five methods compared in the benchmark tables.
pub fn standard_methods() -> Vec<MethodSpec> {
    vec![
        MethodSpec::new(Method::CounterfactualBalancing, BalanceNorm::L2),
        MethodSpec::new(Method::CounterfactualBalancing, BalanceNorm::Linf),
        MethodSpec::new(Method::FactualCounterfactualBalancing, BalanceNorm::L2),
        MethodSpec::new(Method::FactualCounterfactualBalancing, BalanceNorm::Linf),
        MethodSpec::new(Method::OlsRegularized, BalanceNorm::Linf),
    ]
}

/// One (method, dataset) cell of the benchmark table.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub method: String,
    pub dataset: String,
    pub mean_pehe: f64,
    /// Sample standard deviation over replications; absent when fewer than
    /// two succeeded.
    pub sd_pehe: Option<f64>,
    pub replications: usize,
    pub pehe_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub failures: Vec<(u64, String)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn row(&self, method: &str, dataset: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.dataset == dataset)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,dataset,mean_pehe,sd_pehe,replications")?;
        for r in &self.rows {
            let sd = r.sd_pehe.map(|s| s.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{}",
                r.method, r.dataset, r.mean_pehe, sd, r.replications
            )?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("report serialization cannot fail")
    }
}

fn mean_sd(values: &[f64]) -> (f64, Option<f64>) {
    if values.is_empty() {
        return (f64::NAN, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// A method under replication: fits on the training half and returns
/// effect estimates for the test half's features.
pub type MethodFn<'a> =
    dyn Fn(&SimulatedDataset, &SimulatedDataset) -> Result<Array1<f64>> + Sync + 'a;

/// Generic replication harness. For each replication `r` in `1..=R` the
/// generator runs with seed `base_seed + r`, the draw is split, every method
/// fits on the training half, and PEHE is scored on the held-out potential
/// outcomes. Failed replications are recorded and excluded from aggregates.
pub fn replicate_with(
    dataset_label: &str,
    generate: &(dyn Fn(u64) -> Result<SimulatedDataset> + Sync),
    methods: &[(String, Box<MethodFn<'_>>)],
    replications: usize,
    base_seed: u64,
    test_count: usize,
) -> ReportTable {
    let per_rep: Vec<(u64, Vec<std::result::Result<f64, String>>)> = (1..=replications as u64)
        .into_par_iter()
        .map(|r| {
            let seed = base_seed.wrapping_add(r);
            let split = generate(seed).and_then(|sim| split_simulated(&sim, test_count, seed));
            match split {
                Ok((train, test)) => {
                    let scores = methods
                        .iter()
                        .map(|(_, fit)| {
                            fit(&train, &test)
                                .and_then(|tau| {
                                    pehe(&tau.view(), &test.y1.view(), &test.y0.view())
                                })
                                .map_err(|e| e.to_string())
                        })
                        .collect();
                    (seed, scores)
                }
                Err(e) => {
                    let msg = e.to_string();
                    (seed, vec![Err(msg); methods.len()])
                }
            }
        })
        .collect();

    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, (name, _))| {
            let mut values = Vec::new();
            let mut seeds = Vec::new();
            let mut failures = Vec::new();
            for (seed, scores) in &per_rep {
                match &scores[k] {
                    Ok(v) => {
                        values.push(*v);
                        seeds.push(*seed);
                    }
                    Err(msg) => failures.push((*seed, msg.clone())),
                }
            }
            let (mean_pehe, sd_pehe) = mean_sd(&values);
            ReportRow {
                method: name.clone(),
                dataset: dataset_label.to_string(),
                mean_pehe,
                sd_pehe,
                replications: values.len(),
                pehe_values: values,
                seeds,
                failures,
            }
        })
        .collect();
    ReportTable { rows }
}

/// The three benchmark suites with their generation and split sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Data1,
    Data2,
    Data3,
}

impl Suite {
    pub fn label(&self) -> &'static str {
        match self {
            Suite::Data1 => "data1",
            Suite::Data2 => "data2",
            Suite::Data3 => "data3",
        }
    }

    pub fn test_count(&self) -> usize {
        match self {
            Suite::Data1 | Suite::Data2 => 500,
            // 747 units split 2:1, mirroring the 1000/500 ratio of the
            // larger suites.
            Suite::Data3 => 249,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<SimulatedDataset> {
        match self {
            Suite::Data1 => crate::simulate::gen_linear_outcome(1500, 100, seed),
            Suite::Data2 => crate::simulate::gen_complex_outcome(1500, 100, seed),
            Suite::Data3 => crate::simulate::gen_ihdp_style(None, seed),
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "data1" => Ok(Suite::Data1),
            "data2" => Ok(Suite::Data2),
            "data3" => Ok(Suite::Data3),
            other => Err(Error::InvalidConfig(format!("unknown suite `{other}`"))),
        }
    }
}

/// Run a method list against one suite.
pub fn replicate_experiment(
    suite: Suite,
    methods: &[MethodSpec],
    replications: usize,
    base_seed: u64,
    base_cfg: &EstimatorConfig,
) -> ReportTable {
    let boxed: Vec<(String, Box<MethodFn<'_>>)> = methods
        .iter()
        .map(|spec| {
            let mut cfg = base_cfg.clone();
            cfg.method = spec.method;
            cfg.balance.norm = spec.norm;
            let f: Box<MethodFn<'_>> = Box::new(move |train, test| {
                let model = fit_model(&train.dataset, &cfg)?;
                model.estimate_ite(&test.dataset.features.view())
            });
            (spec.name.clone(), f)
        })
        .collect();
    replicate_with(
        suite.label(),
        &|seed| suite.generate(seed),
        &boxed,
        replications,
        base_seed,
        suite.test_count(),
    )
}

// ---------------------------------------------------------------------------
// Error-bound diagnostics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundConstants {
    /// Balancing-weight cap.
    pub c: f64,
    /// Loss bound.
    pub l: f64,
    /// Failure probability.
    pub delta_prob: f64,
}

impl BoundConstants {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.l > 0.0) {
            return Err(Error::InvalidConfig("bound constants C and L must be positive".into()));
        }
        if !(self.delta_prob > 0.0 && self.delta_prob < 1.0) {
            return Err(Error::InvalidConfig("delta_prob must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// `Delta_S` term of the single-stage bound.
pub fn delta_s(l: f64, kappa: f64, sigma_k: f64, n_w: usize, lambda: f64, c: f64, delta: f64) -> f64 {
    let n = n_w as f64;
    let cn = c * n;
    l * l * kappa.powf(1.5) * sigma_k.sqrt() / (n * lambda)
        * ((cn * cn + 1.0) / n).sqrt()
        * (1.0 + (2.0 * (4.0 / delta).ln()).sqrt())
}

/// `Delta_R` term of the single-stage bound.
pub fn delta_r(c: f64, n_w: usize, l: f64, nu: f64, tr_k: f64, delta: f64) -> f64 {
    let n = n_w as f64;
    let cn = c * n;
    4.0 * cn * l * nu * tr_k.sqrt() / n + 6.0 * cn * l * ((4.0 / delta).ln() / (2.0 * n)).sqrt()
}

/// `Delta_S_f` term of the anchored-refit bound.
pub fn delta_sf(
    l: f64,
    kappa: f64,
    sigma_k: f64,
    n_w: usize,
    lambda_prime: f64,
    c: f64,
    delta: f64,
) -> f64 {
    let n = n_w as f64;
    let cn = c * n;
    l * l * kappa.powf(1.5) * sigma_k.sqrt() / (n * lambda_prime)
        * ((cn * cn + 1.0) / n).sqrt()
        * (1.0 + (2.0 * (6.0 / delta).ln()).sqrt())
}

/// The inflated coefficient-distance term entering `Delta_R_f`.
pub fn nu_prime(nu_w: f64, l: f64, lambda_q: f64, nu_q: f64, tr_k: f64, n_w: usize, delta: f64) -> f64 {
    let n = n_w as f64;
    nu_w
        + (4.0 * l / lambda_q
            * (2.0 * nu_q * tr_k.sqrt() / n + 3.0 * ((6.0 / delta).ln() / (2.0 * n)).sqrt()))
        .sqrt()
}

/// `Delta_R_f` term of the anchored-refit bound (arm-symmetric reading).
pub fn delta_rf(
    c: f64,
    n_w: usize,
    l: f64,
    nu_p: f64,
    tr_k: f64,
    delta: f64,
    anchor_norm: f64,
) -> f64 {
    let n = n_w as f64;
    let cn = c * n;
    4.0 * cn * l * nu_p * tr_k.sqrt() / n
        + 6.0 * cn * l * ((6.0 / delta).ln() / (2.0 * n)).sqrt()
        + c * l * anchor_norm
}

/// Trace and condition number of the arm Gram matrix `X_w X_w^T`.
///
/// The trace is the sum of squared row norms. The condition number uses the
/// smallest NONZERO singular value (the Gram matrix is rank-deficient
/// whenever `d < n_w`), obtained from the eigenvalues of the d x d matrix
/// `X_w^T X_w`, which shares the nonzero spectrum.
pub fn gram_diagnostics(x_arm: &ArrayView2<f64>) -> (f64, f64) {
    let tr: f64 = x_arm.rows().into_iter().map(|r| r.dot(&r)).sum();
    let small_gram = x_arm.t().dot(x_arm);
    let (vals, _) = linalg::sym_eig(&small_gram);
    let top = vals.iter().cloned().fold(0.0_f64, f64::max);
    if top <= 0.0 {
        return (tr, 1.0);
    }
    let cutoff = top * 1e-12;
    let min_nonzero = vals
        .iter()
        .cloned()
        .filter(|&v| v > cutoff)
        .fold(top, f64::min);
    (tr, top / min_nonzero)
}

#[derive(Debug, Clone, Serialize)]
pub struct SingleStageBound {
    pub lambda: f64,
    /// Plug-in `||beta_hat||_2^2`.
    pub nu: f64,
    pub delta_s: f64,
    pub delta_r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnchoredBound {
    pub lambda_prime: f64,
    pub lambda_q: f64,
    /// Plug-in `||beta_final - beta_anchor||_2^2`.
    pub nu_w: f64,
    /// Plug-in `||beta_anchor||_2^2`.
    pub nu_q: f64,
    pub nu_prime: f64,
    pub anchor_norm: f64,
    pub delta_sf: f64,
    pub delta_rf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ArmBound {
    pub arm: String,
    pub n: usize,
    pub tr_k: f64,
    pub sigma_k: f64,
    pub single_stage: Option<SingleStageBound>,
    pub anchored: Option<AnchoredBound>,
}

/// Plug-in evaluation of the bound expressions. Population quantities are
/// replaced by fitted coefficients; the report is a diagnostic, not a
/// certificate.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    pub kappa: f64,
    pub constants: BoundConstants,
    /// Every coefficient-based plug-in uses this feature scale.
    pub coefficient_scale: String,
    pub treated: ArmBound,
    pub control: ArmBound,
}

/// Evaluate the bound terms for a fitted model on its training data.
///
/// Models from the factual-counterfactual pipeline additionally need their
/// step-3 anchors.
pub fn bound_diagnostics(
    train: &ObservationalDataset,
    model: &IteModel,
    constants: BoundConstants,
    anchors: Option<&Anchors>,
) -> Result<BoundReport> {
    constants.validate()?;
    if train.d() != model.standardization.center.len() {
        return Err(Error::DimensionMismatch(format!(
            "training data has {} features, model has {}",
            train.d(),
            model.standardization.center.len()
        )));
    }
    let kappa = train
        .features
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0_f64, f64::max);

    let needs_anchors = matches!(model.method, Method::FactualCounterfactualBalancing);
    if needs_anchors && anchors.is_none() {
        return Err(Error::MissingAnchors);
    }

    let arm_report = |treated: bool| -> ArmBound {
        let (x_arm, _) = train.arm(treated);
        let n_w = x_arm.nrows();
        let (tr_k, sigma_k) = gram_diagnostics(&x_arm.view());
        let coef = model.original_scale(treated);

        let (single_stage, anchored) = if needs_anchors {
            let a = anchors.expect("checked above");
            let anchor_std = if treated { &a.treated } else { &a.control };
            let anchor = to_original_scale(anchor_std, &model.standardization);
            let nu_w = (&coef.beta - &anchor.beta).mapv(|e| e * e).sum();
            let nu_q = anchor.beta.dot(&anchor.beta);
            let anchor_norm = nu_q.sqrt();
            let lambda_prime = coef.lambda_used;
            let lambda_q = anchor.lambda_used;
            let np = nu_prime(nu_w, constants.l, lambda_q, nu_q, tr_k, n_w, constants.delta_prob);
            (
                None,
                Some(AnchoredBound {
                    lambda_prime,
                    lambda_q,
                    nu_w,
                    nu_q,
                    nu_prime: np,
                    anchor_norm,
                    delta_sf: delta_sf(
                        constants.l,
                        kappa,
                        sigma_k,
                        n_w,
                        lambda_prime,
                        constants.c,
                        constants.delta_prob,
                    ),
                    delta_rf: delta_rf(
                        constants.c,
                        n_w,
                        constants.l,
                        np,
                        tr_k,
                        constants.delta_prob,
                        anchor_norm,
                    ),
                }),
            )
        } else {
            let nu = coef.beta.dot(&coef.beta);
            let lambda = coef.lambda_used;
            (
                Some(SingleStageBound {
                    lambda,
                    nu,
                    delta_s: delta_s(
                        constants.l,
                        kappa,
                        sigma_k,
                        n_w,
                        lambda,
                        constants.c,
                        constants.delta_prob,
                    ),
                    delta_r: delta_r(constants.c, n_w, constants.l, nu, tr_k, constants.delta_prob),
                }),
                None,
            )
        };
        ArmBound {
            arm: if treated { "treated".into() } else { "control".into() },
            n: n_w,
            tr_k,
            sigma_k,
            single_stage,
            anchored,
        }
    };

    Ok(BoundReport {
        kappa,
        constants,
        coefficient_scale: "original".into(),
        treated: arm_report(true),
        control: arm_report(false),
    })
}
