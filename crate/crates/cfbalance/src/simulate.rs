//! Seeded benchmark generators with ground-truth potential outcomes.
//!
//! Three data-generating processes are provided:
//!
//! * `linear`: complex propensity, simple sparse linear outcome with a
//!   constant additive effect of 10;
//! * `complex`: complex propensity and a dense outcome with heterogeneous
//!   effect `theta(x)`;
//! * `ihdp`: a 747 x 25 design with 139 treated units, built either from a
//!   caller-supplied covariate matrix or from surrogate covariates (6
//!   continuous + 19 binary columns, with the treated group thinned on the
//!   first continuous covariate to recreate the documented imbalance).
//!
//! All draws come from a seeded ChaCha20 stream; the per-generator draw order
//! is fixed and documented on each function, so a given `(generator, params,
//! seed)` triple always produces byte-identical datasets.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{save_dataset_path, split_indices, ObservationalDataset};
use crate::error::{Error, Result};

/// Name of the pinned PRNG recorded in dataset metadata.
pub const PRNG_NAME: &str = "chacha20/rand_chacha-0.9";

pub const IHDP_N: usize = 747;
pub const IHDP_TREATED: usize = 139;
pub const IHDP_D: usize = 25;
const IHDP_CONTINUOUS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Linear,
    Complex,
    Ihdp,
}

impl std::fmt::Display for Generator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Generator::Linear => write!(f, "linear"),
            Generator::Complex => write!(f, "complex"),
            Generator::Ihdp => write!(f, "ihdp"),
        }
    }
}

/// An observational dataset plus the potential outcomes that produced it.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub dataset: ObservationalDataset,
    pub y1: Array1<f64>,
    pub y0: Array1<f64>,
    /// Realized `y1 - y0` per unit.
    pub true_ite: Array1<f64>,
    pub generator: Generator,
    pub seed: u64,
}

/// Realized unit-level effects `y1 - y0`.
pub fn true_ite(sim: &SimulatedDataset) -> Array1<f64> {
    sim.true_ite.clone()
}

fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

/// Treatment probability of the linear-outcome generator,
/// `1 - (1 + e^s)^(-1.23)` with `s = x . beta_w`.
pub fn linear_propensity(x_dot_bw: f64) -> f64 {
    1.0 - (-1.23 * softplus(x_dot_bw)).exp()
}

/// Effect size of the complex-outcome generator,
/// `0.89 log(1 + e^(-2 - 2 x . beta_w))`.
pub fn complex_theta(x_dot_bw: f64) -> f64 {
    0.89 * softplus(-2.0 - 2.0 * x_dot_bw)
}

/// Treatment probability of the complex-outcome generator, `1 - e^(-theta)`.
pub fn complex_propensity(theta: f64) -> f64 {
    1.0 - (-theta).exp()
}

fn feature_names(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

fn standard_normal_matrix(rng: &mut ChaCha20Rng, n: usize, p: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal))
}

/// Linear outcome model: `Y = X beta + 10 W + eps`, `beta_j = 1/j^2`, with a
/// sparse logistic-power propensity on the first ten features.
///
/// Draw order: the feature matrix row-major, then one treatment uniform per
/// unit, then one shared noise draw per unit.
pub fn gen_linear_outcome(n: usize, p: usize, seed: u64) -> Result<SimulatedDataset> {
    gen_linear_outcome_with_noise(n, p, seed, 1.0)
}

/// Linear generator with adjustable noise scale (0 gives the noise-free
/// variant used for end-to-end checks). The draw stream is identical for all
/// noise scales.
pub fn gen_linear_outcome_with_noise(
    n: usize,
    p: usize,
    seed: u64,
    noise_sd: f64,
) -> Result<SimulatedDataset> {
    if n < 1 {
        return Err(Error::InvalidDims("n must be at least 1".into()));
    }
    if p < 10 {
        return Err(Error::InvalidDims(format!(
            "linear generator needs p >= 10 for the propensity coefficients, got {p}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = standard_normal_matrix(&mut rng, n, p);

    let mut treatment = Vec::with_capacity(n);
    for i in 0..n {
        let s: f64 = (0..10).map(|j| x[[i, j]]).sum();
        let theta = linear_propensity(s);
        let u: f64 = rng.random();
        treatment.push(u8::from(u < theta));
    }

    let beta = Array1::from_iter((1..=p).map(|j| 1.0 / (j * j) as f64));
    let xb = x.dot(&beta);
    let mut y1 = Array1::<f64>::zeros(n);
    let mut y0 = Array1::<f64>::zeros(n);
    for i in 0..n {
        let eps: f64 = rng.sample::<f64, _>(StandardNormal) * noise_sd;
        y0[i] = xb[i] + eps;
        y1[i] = xb[i] + 10.0 + eps;
    }
    assemble(x, treatment, y1, y0, Generator::Linear, seed)
}

/// Complex outcome model: dense `beta_j = 1`, heterogeneous effect
/// `theta(x)`, and propensity `1 - e^(-theta)`.
///
/// Draw order: the feature matrix row-major, then one treatment uniform per
/// unit, then one shared noise draw per unit.
pub fn gen_complex_outcome(n: usize, p: usize, seed: u64) -> Result<SimulatedDataset> {
    if n < 1 {
        return Err(Error::InvalidDims("n must be at least 1".into()));
    }
    if p < 10 {
        return Err(Error::InvalidDims(format!(
            "complex generator needs p >= 10 for the propensity coefficients, got {p}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let x = standard_normal_matrix(&mut rng, n, p);

    let mut theta = Array1::<f64>::zeros(n);
    let mut treatment = Vec::with_capacity(n);
    for i in 0..n {
        let s: f64 = (0..10).map(|j| x[[i, j]]).sum();
        theta[i] = complex_theta(s);
        let u: f64 = rng.random();
        treatment.push(u8::from(u < complex_propensity(theta[i])));
    }

    let beta = Array1::<f64>::ones(p);
    let xb = x.dot(&beta);
    let mut y1 = Array1::<f64>::zeros(n);
    let mut y0 = Array1::<f64>::zeros(n);
    for i in 0..n {
        let eps: f64 = rng.sample::<f64, _>(StandardNormal);
        y1[i] = xb[i] + theta[i] / 2.0 + eps;
        y0[i] = xb[i] - theta[i] / 2.0 + eps;
    }
    assemble(x, treatment, y1, y0, Generator::Complex, seed)
}

/// Noiseless control surface of the IHDP-style generator:
/// `sqrt(exp([1, x + 0.5] . beta0))`.
pub fn ihdp_mean_y0(x_row: &ArrayView1<f64>, beta0: &Array1<f64>) -> f64 {
    (0.5 * design_dot(x_row, beta0)).exp()
}

/// Noiseless treated surface: `[1, x + 0.5] . beta1`.
pub fn ihdp_mean_y1(x_row: &ArrayView1<f64>, beta1: &Array1<f64>) -> f64 {
    design_dot(x_row, beta1)
}

fn design_dot(x_row: &ArrayView1<f64>, beta: &Array1<f64>) -> f64 {
    debug_assert_eq!(beta.len(), x_row.len() + 1);
    let mut s = beta[0];
    for (j, &v) in x_row.iter().enumerate() {
        s += (v + 0.5) * beta[j + 1];
    }
    s
}

/// The fixed treated-surface coefficients `(beta1)_j = 1/j` for `j = 1..26`.
pub fn ihdp_beta1() -> Array1<f64> {
    Array1::from_iter((1..=(IHDP_D + 1)).map(|j| 1.0 / j as f64))
}

fn draw_beta0(rng: &mut ChaCha20Rng) -> Array1<f64> {
    Array1::from_shape_fn(IHDP_D + 1, |_| {
        let u: f64 = rng.random();
        if u < 0.6 {
            0.0
        } else if u < 0.7 {
            0.1
        } else if u < 0.8 {
            0.2
        } else if u < 0.9 {
            0.3
        } else {
            0.4
        }
    })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

// Logistic treatment rule on the first continuous covariate, tuned so that
// roughly a quarter of the pool is assigned to treatment.
const IHDP_LOGIT_INTERCEPT: f64 = -1.35;
const IHDP_LOGIT_SLOPE: f64 = 0.8;
const IHDP_POOL: usize = 1400;

/// IHDP-style dataset: 747 units, 139 treated, 25 covariates.
///
/// With a supplied covariate matrix the rows are used as-is and the 139
/// treated units are drawn by weighted sampling under the logistic rule.
/// Otherwise surrogate covariates are generated (6 standard-normal columns
/// followed by 19 Bernoulli(0.5) columns) from a pool, treatment is assigned
/// by the logistic rule, and treated units whose first covariate exceeds the
/// treated group's 60th percentile are dropped until 139 remain.
///
/// Draw order (surrogate path): per pool row 6 normals + 19 uniforms, then
/// one treatment uniform per pool row, then the 26 `beta0` uniforms, then
/// 747 control-noise normals, then 747 treated-noise normals.
pub fn gen_ihdp_style(covariates: Option<&Array2<f64>>, seed: u64) -> Result<SimulatedDataset> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (x, treatment) = match covariates {
        Some(c) => {
            if c.nrows() != IHDP_N || c.ncols() != IHDP_D {
                return Err(Error::BadCovariateShape {
                    expected_rows: IHDP_N,
                    expected_cols: IHDP_D,
                    rows: c.nrows(),
                    cols: c.ncols(),
                });
            }
            for v in c.iter() {
                if !v.is_finite() {
                    return Err(Error::InvalidDims("covariates must be finite".into()));
                }
            }
            let t = assign_treatment_fixed_count(c, &mut rng);
            (c.to_owned(), t)
        }
        None => surrogate_covariates(&mut rng)?,
    };

    let beta0 = draw_beta0(&mut rng);
    let beta1 = ihdp_beta1();
    let n = x.nrows();
    let mut y0 = Array1::<f64>::zeros(n);
    let mut y1 = Array1::<f64>::zeros(n);
    for i in 0..n {
        let eps: f64 = rng.sample::<f64, _>(StandardNormal);
        y0[i] = ihdp_mean_y0(&x.row(i), &beta0) + eps;
    }
    for i in 0..n {
        let eps: f64 = rng.sample::<f64, _>(StandardNormal);
        y1[i] = ihdp_mean_y1(&x.row(i), &beta1) + eps;
    }
    assemble(x, treatment, y1, y0, Generator::Ihdp, seed)
}

/// Exactly `IHDP_TREATED` treated units, chosen by weighted sampling without
/// replacement with logistic-rule weights (largest `u^(1/p)` keys win).
fn assign_treatment_fixed_count(x: &Array2<f64>, rng: &mut ChaCha20Rng) -> Vec<u8> {
    let n = x.nrows();
    let mut keys: Vec<(f64, usize)> = (0..n)
        .map(|i| {
            let p = sigmoid(IHDP_LOGIT_INTERCEPT + IHDP_LOGIT_SLOPE * x[[i, 0]]).max(1e-12);
            let u: f64 = rng.random();
            (u.powf(1.0 / p), i)
        })
        .collect();
    keys.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut t = vec![0u8; n];
    for &(_, i) in keys.iter().take(IHDP_TREATED) {
        t[i] = 1;
    }
    t
}

fn surrogate_covariates(rng: &mut ChaCha20Rng) -> Result<(Array2<f64>, Vec<u8>)> {
    let n_control = IHDP_N - IHDP_TREATED;
    for _attempt in 0..16 {
        let mut pool = Array2::<f64>::zeros((IHDP_POOL, IHDP_D));
        for i in 0..IHDP_POOL {
            for j in 0..IHDP_CONTINUOUS {
                pool[[i, j]] = rng.sample::<f64, _>(StandardNormal);
            }
            for j in IHDP_CONTINUOUS..IHDP_D {
                pool[[i, j]] = f64::from(rng.random::<f64>() < 0.5);
            }
        }
        let treated: Vec<bool> = (0..IHDP_POOL)
            .map(|i| {
                let p = sigmoid(IHDP_LOGIT_INTERCEPT + IHDP_LOGIT_SLOPE * pool[[i, 0]]);
                rng.random::<f64>() < p
            })
            .collect();

        // 60th percentile (nearest rank) of the first covariate among the
        // treated pool; treated units above it are removed.
        let mut treated_x0: Vec<f64> = (0..IHDP_POOL)
            .filter(|&i| treated[i])
            .map(|i| pool[[i, 0]])
            .collect();
        if treated_x0.is_empty() {
            continue;
        }
        treated_x0.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let rank = ((0.6 * treated_x0.len() as f64).ceil() as usize).clamp(1, treated_x0.len());
        let q60 = treated_x0[rank - 1];

        let mut keep: Vec<(usize, u8)> = Vec::with_capacity(IHDP_N);
        let mut kept_treated = 0usize;
        let mut kept_control = 0usize;
        for i in 0..IHDP_POOL {
            if treated[i] {
                if kept_treated < IHDP_TREATED && pool[[i, 0]] <= q60 {
                    keep.push((i, 1));
                    kept_treated += 1;
                }
            } else if kept_control < n_control {
                keep.push((i, 0));
                kept_control += 1;
            }
        }
        if kept_treated < IHDP_TREATED || kept_control < n_control {
            continue;
        }
        let mut x = Array2::<f64>::zeros((IHDP_N, IHDP_D));
        let mut t = Vec::with_capacity(IHDP_N);
        for (row, &(i, w)) in keep.iter().enumerate() {
            x.row_mut(row).assign(&pool.row(i));
            t.push(w);
        }
        return Ok((x, t));
    }
    Err(Error::InsufficientData(
        "surrogate covariate pool never met the 747/139 quota".into(),
    ))
}

fn assemble(
    x: Array2<f64>,
    treatment: Vec<u8>,
    y1: Array1<f64>,
    y0: Array1<f64>,
    generator: Generator,
    seed: u64,
) -> Result<SimulatedDataset> {
    let n = x.nrows();
    let p = x.ncols();
    let outcome = Array1::from_iter((0..n).map(|i| if treatment[i] == 1 { y1[i] } else { y0[i] }));
    let dataset = ObservationalDataset::new(x, treatment, outcome, feature_names(p))?;
    Ok(SimulatedDataset {
        true_ite: &y1 - &y0,
        dataset,
        y1,
        y0,
        generator,
        seed,
    })
}

/// Split a simulated dataset, carrying the potential outcomes along.
pub fn split_simulated(
    sim: &SimulatedDataset,
    test_count: usize,
    seed: u64,
) -> Result<(SimulatedDataset, SimulatedDataset)> {
    let (train_idx, test_idx) = split_indices(sim.dataset.n(), test_count, seed)?;
    let take = |idx: &[usize]| SimulatedDataset {
        dataset: sim.dataset.subset(idx),
        y1: Array1::from_iter(idx.iter().map(|&i| sim.y1[i])),
        y0: Array1::from_iter(idx.iter().map(|&i| sim.y0[i])),
        true_ite: Array1::from_iter(idx.iter().map(|&i| sim.true_ite[i])),
        generator: sim.generator,
        seed: sim.seed,
    };
    Ok((take(&train_idx), take(&test_idx)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SimulationMetadata {
    pub generator: String,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub n_treated: usize,
    pub prng: String,
}

/// Write `dataset.csv`, `potential_outcomes.csv`, and `metadata.json` into a
/// directory (created if absent).
pub fn save_simulated<P: AsRef<Path>>(sim: &SimulatedDataset, dir: P) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    save_dataset_path(&sim.dataset, dir.join("dataset.csv"))?;

    let mut po = fs::File::create(dir.join("potential_outcomes.csv"))?;
    writeln!(po, "y1,y0")?;
    for i in 0..sim.dataset.n() {
        writeln!(po, "{},{}", sim.y1[i], sim.y0[i])?;
    }

    let meta = SimulationMetadata {
        generator: sim.generator.to_string(),
        seed: sim.seed,
        n: sim.dataset.n(),
        p: sim.dataset.d(),
        n_treated: sim.dataset.n_treated(),
        prng: PRNG_NAME.to_string(),
    };
    let mut f = fs::File::create(dir.join("metadata.json"))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_true_ite_is_ten_everywhere() {
        let sim = gen_linear_outcome(200, 12, 1).unwrap();
        for &t in sim.true_ite.iter() {
            assert_abs_diff_eq!(t, 10.0, epsilon = 1e-12);
        }
        assert_eq!(true_ite(&sim), sim.true_ite);
    }

    #[test]
    fn linear_propensity_at_origin() {
        // 1 - (1/2)^1.23, evaluated directly from the formula.
        let expected = 1.0 - 0.5f64.powf(1.23);
        assert_abs_diff_eq!(linear_propensity(0.0), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 0.5737, epsilon = 5e-4);
    }

    #[test]
    fn linear_beta_entries() {
        // beta_3 = 1/9 shows up as the coefficient of x3 in the noise-free
        // outcome: regenerate with zero noise and difference two y0 values
        // that differ only through beta . x.
        let sim = gen_linear_outcome_with_noise(50, 10, 3, 0.0).unwrap();
        let beta = Array1::from_iter((1..=10).map(|j| 1.0 / (j * j) as f64));
        assert_abs_diff_eq!(beta[2], 1.0 / 9.0, epsilon = 1e-15);
        for i in 0..50 {
            let xb: f64 = (0..10).map(|j| sim.dataset.features[[i, j]] * beta[j]).sum();
            let expect = if sim.dataset.treatment[i] == 1 { xb + 10.0 } else { xb };
            assert_abs_diff_eq!(sim.dataset.outcome[i], expect, epsilon = 1e-10);
        }
    }

    #[test]
    fn linear_treatment_rate_at_origin() {
        use rand::Rng;
        let theta0 = linear_propensity(0.0);
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let mut count = 0usize;
        for _ in 0..10_000 {
            if rng.random::<f64>() < theta0 {
                count += 1;
            }
        }
        let rate = count as f64 / 10_000.0;
        assert!((rate - theta0).abs() < 0.02, "rate {rate} vs {theta0}");
    }

    #[test]
    fn complex_formula_values() {
        let theta0 = complex_theta(0.0);
        assert_abs_diff_eq!(theta0, 0.89 * (1.0 + (-2.0f64).exp()).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(theta0, 0.112966, epsilon = 1e-6);
        let p0 = complex_propensity(theta0);
        assert_abs_diff_eq!(p0, 1.0 - (-theta0).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(p0, 0.106819, epsilon = 1e-6);
    }

    #[test]
    fn complex_true_ite_equals_theta() {
        let sim = gen_complex_outcome(300, 15, 5).unwrap();
        for i in 0..300 {
            let s: f64 = (0..10).map(|j| sim.dataset.features[[i, j]]).sum();
            assert_abs_diff_eq!(sim.true_ite[i], complex_theta(s), epsilon = 1e-12);
        }
    }

    #[test]
    fn complex_treatment_rate_matches_quadrature_oracle() {
        // Independent oracle: E[1 - e^(-theta(S))] with S ~ N(0, 10) by
        // midpoint quadrature over +-8 standard deviations.
        let sd = 10.0f64.sqrt();
        let steps = 20_000;
        let lo = -8.0 * sd;
        let hi = 8.0 * sd;
        let h = (hi - lo) / steps as f64;
        let mut expect = 0.0;
        for k in 0..steps {
            let s = lo + (k as f64 + 0.5) * h;
            let density = (-s * s / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
            expect += complex_propensity(complex_theta(s)) * density * h;
        }

        let sim = gen_complex_outcome(10_000, 100, 8).unwrap();
        let rate = sim.dataset.n_treated() as f64 / 10_000.0;
        assert!(
            (rate - expect).abs() < 0.02,
            "empirical rate {rate} vs quadrature {expect}"
        );
    }

    #[test]
    fn observed_outcome_matches_selected_arm() {
        let sims = [
            gen_linear_outcome(120, 11, 2).unwrap(),
            gen_complex_outcome(120, 11, 2).unwrap(),
            gen_ihdp_style(None, 2).unwrap(),
        ];
        for sim in &sims {
            for i in 0..sim.dataset.n() {
                let expect = if sim.dataset.treatment[i] == 1 { sim.y1[i] } else { sim.y0[i] };
                assert_eq!(sim.dataset.outcome[i], expect);
            }
        }
    }

    #[test]
    fn same_seed_reproduces_identical_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        save_simulated(&gen_complex_outcome(80, 12, 9).unwrap(), &a).unwrap();
        save_simulated(&gen_complex_outcome(80, 12, 9).unwrap(), &b).unwrap();
        for file in ["dataset.csv", "potential_outcomes.csv", "metadata.json"] {
            let fa = fs::read(a.join(file)).unwrap();
            let fb = fs::read(b.join(file)).unwrap();
            assert_eq!(fa, fb, "{file} differs between identical seeds");
        }
    }

    #[test]
    fn ihdp_shape_and_treated_count() {
        let sim = gen_ihdp_style(None, 4).unwrap();
        assert_eq!(sim.dataset.n(), IHDP_N);
        assert_eq!(sim.dataset.d(), IHDP_D);
        assert_eq!(sim.dataset.n_treated(), IHDP_TREATED);
        // Binary columns really are binary.
        for j in IHDP_CONTINUOUS..IHDP_D {
            for i in 0..IHDP_N {
                let v = sim.dataset.features[[i, j]];
                assert!(v == 0.0 || v == 1.0);
            }
        }
    }

    #[test]
    fn ihdp_supplied_covariates_are_used_verbatim() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let cov = Array2::from_shape_fn((IHDP_N, IHDP_D), |_| rng.sample::<f64, _>(StandardNormal));
        let sim = gen_ihdp_style(Some(&cov), 4).unwrap();
        assert_eq!(sim.dataset.features, cov);
        assert_eq!(sim.dataset.n_treated(), IHDP_TREATED);

        let bad = Array2::<f64>::zeros((100, IHDP_D));
        assert!(matches!(
            gen_ihdp_style(Some(&bad), 4),
            Err(Error::BadCovariateShape { .. })
        ));
    }

    #[test]
    fn ihdp_beta_and_surface_values() {
        let beta1 = ihdp_beta1();
        assert_abs_diff_eq!(beta1[1], 0.5, epsilon = 1e-15);

        // X = -0.5 everywhere zeroes the non-intercept design entries, so a
        // beta0 with only intercept 0.4 gives sqrt(e^0.4).
        let x_row = Array1::from_elem(IHDP_D, -0.5);
        let mut beta0 = Array1::<f64>::zeros(IHDP_D + 1);
        beta0[0] = 0.4;
        let mean = ihdp_mean_y0(&x_row.view(), &beta0);
        assert_abs_diff_eq!(mean, 0.4f64.exp().sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(mean, 1.221402758, epsilon = 1e-9);
    }

    #[test]
    fn ihdp_beta0_distribution() {
        // Frequency of the zero coefficient over many seeded draws.
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        let mut zeros = 0usize;
        let total = 26 * 2000;
        for _ in 0..2000 {
            let b = draw_beta0(&mut rng);
            zeros += b.iter().filter(|&&v| v == 0.0).count();
            for &v in b.iter() {
                assert!([0.0, 0.1, 0.2, 0.3, 0.4].contains(&v));
            }
        }
        let frac = zeros as f64 / total as f64;
        assert!((frac - 0.6).abs() < 0.01, "zero fraction {frac}");
    }

    #[test]
    fn degenerate_equal_arms_have_zero_ite() {
        let mut sim = gen_linear_outcome(30, 10, 6).unwrap();
        sim.y1 = sim.y0.clone();
        sim.true_ite = &sim.y1 - &sim.y0;
        assert!(true_ite(&sim).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn split_simulated_keeps_potential_outcomes_aligned() {
        let sim = gen_complex_outcome(100, 10, 12).unwrap();
        let (train, test) = split_simulated(&sim, 30, 77).unwrap();
        assert_eq!(train.dataset.n(), 70);
        assert_eq!(test.dataset.n(), 30);
        for i in 0..test.dataset.n() {
            let expect = if test.dataset.treatment[i] == 1 { test.y1[i] } else { test.y0[i] };
            assert_eq!(test.dataset.outcome[i], expect);
        }
    }

    #[test]
    fn invalid_dims_are_rejected() {
        assert!(matches!(gen_linear_outcome(100, 9, 0), Err(Error::InvalidDims(_))));
        assert!(matches!(gen_complex_outcome(100, 5, 0), Err(Error::InvalidDims(_))));
        assert!(matches!(gen_linear_outcome(0, 10, 0), Err(Error::InvalidDims(_))));
    }
}
