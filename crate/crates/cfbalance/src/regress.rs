//! Weighted elastic-net regression and the anchored ridge refit.
//!
//! The elastic net minimizes
//!
//! ```text
//!     (1/m) sum_i w_i (y_i - b - x_i beta)^2
//!         + lambda ((1 - alpha) ||beta||_2^2 + 2 alpha ||beta||_1)
//! ```
//!
//! by cyclic coordinate descent with an unpenalized intercept. Observation
//! weights are normalized to mean 1 before fitting so the fit is invariant
//! to rescaling the weight vector; the cross-validation grid is computed
//! after that normalization.
//!
//! The anchored ridge replaces the elastic-net penalty with
//! `lambda' ||beta - anchor||_2^2` and is solved in closed form.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

const KKT_TOL: f64 = 1e-8;
const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// Sweep budget exhausted; the best iterate is returned.
    MaxIterations,
    /// Rank-deficient system at `lambda' = 0`; minimum-norm solution returned.
    MinNorm,
}

/// A fitted coefficient vector with the penalty that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    pub beta: Array1<f64>,
    /// 0 when intercept fitting is disabled.
    pub intercept: f64,
    pub lambda_used: f64,
    pub alpha_used: f64,
    pub status: FitStatus,
}

#[derive(Debug, Clone)]
pub struct CvResult {
    /// Descending, strictly positive.
    pub lambda_grid: Vec<f64>,
    pub cv_error: Vec<f64>,
    pub selected_lambda: f64,
    pub fold_count: usize,
}

fn check_xy(x: &ArrayView2<f64>, y: &ArrayView1<f64>, w: &ArrayView1<f64>) -> Result<()> {
    if x.nrows() != y.len() || x.nrows() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "x has {} rows, y has {}, weights have {}",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    Ok(())
}

/// Rescale weights to mean 1; errors when the sum is not positive.
fn normalize_weights(w: &ArrayView1<f64>) -> Result<Array1<f64>> {
    let sum: f64 = w.sum();
    if !(sum > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let m = w.len() as f64;
    Ok(w.mapv(|e| e * m / sum))
}

struct Centered {
    x: Array2<f64>,
    y: Array1<f64>,
    x_mean: Array1<f64>,
    y_mean: f64,
}

fn weighted_center(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    w: &Array1<f64>,
    fit_intercept: bool,
) -> Centered {
    let m = x.nrows() as f64;
    if !fit_intercept {
        return Centered {
            x: x.to_owned(),
            y: y.to_owned(),
            x_mean: Array1::zeros(x.ncols()),
            y_mean: 0.0,
        };
    }
    let x_mean = x.t().dot(w) / m;
    let y_mean = y.dot(w) / m;
    let mut xc = x.to_owned();
    for mut row in xc.rows_mut() {
        for j in 0..row.len() {
            row[j] -= x_mean[j];
        }
    }
    let yc = y.mapv(|e| e - y_mean);
    Centered {
        x: xc,
        y: yc,
        x_mean,
        y_mean,
    }
}

fn soft_threshold(rho: f64, t: f64) -> f64 {
    rho.signum() * (rho.abs() - t).max(0.0)
}

/// Cyclic coordinate descent on weighted, centered data, updating the
/// residual vector in place. Sweeps cost O(m d).
fn coordinate_descent_residual(
    cols: &[Vec<f64>],
    yc: &Array1<f64>,
    w: &Array1<f64>,
    lambda: f64,
    alpha: f64,
    warm: Option<&Array1<f64>>,
) -> (Array1<f64>, FitStatus, usize) {
    let d = cols.len();
    let m = yc.len();
    let m_f = m as f64;

    let z: Vec<f64> = cols
        .iter()
        .map(|col| col.iter().zip(w.iter()).map(|(&x, &wi)| wi * x * x).sum::<f64>() / m_f)
        .collect();

    let mut beta = warm.cloned().unwrap_or_else(|| Array1::zeros(d));
    let mut r = yc.clone();
    for (j, col) in cols.iter().enumerate() {
        if beta[j] != 0.0 {
            for i in 0..m {
                r[i] -= col[i] * beta[j];
            }
        }
    }

    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);

    #[cfg(debug_assertions)]
    let mut prev_obj = {
        let loss: f64 = r
            .iter()
            .zip(w.iter())
            .map(|(&ri, &wi)| wi * ri * ri)
            .sum::<f64>()
            / m_f;
        let pen: f64 = beta
            .iter()
            .map(|&b| (1.0 - alpha) * b * b + 2.0 * alpha * b.abs())
            .sum();
        loss + lambda * pen
    };

    let mut status = FitStatus::MaxIterations;
    let mut sweeps = 0usize;
    for sweep in 0..MAX_SWEEPS {
        sweeps = sweep + 1;
        let mut max_delta = 0.0_f64;
        for (j, col) in cols.iter().enumerate() {
            let denom = z[j] + l2;
            if denom <= 0.0 {
                continue;
            }
            let mut rho = 0.0;
            for i in 0..m {
                rho += w[i] * col[i] * r[i];
            }
            rho = rho / m_f + z[j] * beta[j];
            let new = soft_threshold(rho, l1) / denom;
            let delta = new - beta[j];
            if delta != 0.0 {
                for i in 0..m {
                    r[i] -= col[i] * delta;
                }
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }

        #[cfg(debug_assertions)]
        {
            let loss: f64 = r
                .iter()
                .zip(w.iter())
                .map(|(&ri, &wi)| wi * ri * ri)
                .sum::<f64>()
                / m_f;
            let pen: f64 = beta
                .iter()
                .map(|&b| (1.0 - alpha) * b * b + 2.0 * alpha * b.abs())
                .sum();
            let obj = loss + lambda * pen;
            debug_assert!(
                obj <= prev_obj + 1e-9 * prev_obj.abs().max(1.0),
                "coordinate sweep increased the objective: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        }

        // Checking the subgradient conditions costs a full pass, so only do
        // it once the sweep has nearly stalled (or periodically as a guard).
        if max_delta < 1e-5 || sweep % 8 == 7 {
            let mut kkt = 0.0_f64;
            for (j, col) in cols.iter().enumerate() {
                let mut grad = 0.0;
                for i in 0..m {
                    grad += w[i] * col[i] * r[i];
                }
                grad = -2.0 * grad / m_f + 2.0 * l2 * beta[j];
                let res = if beta[j] != 0.0 {
                    (grad + 2.0 * l1 * beta[j].signum()).abs()
                } else {
                    (grad.abs() - 2.0 * l1).max(0.0)
                };
                kkt = kkt.max(res);
            }
            if kkt < KKT_TOL || (max_delta == 0.0 && kkt < 1e-6) {
                status = FitStatus::Converged;
                break;
            }
        }
    }
    (beta, status, sweeps)
}

/// Weighted Gram form of the problem, shared across a penalty path when
/// `m >= d`: sweeps cost O(d^2) instead of O(m d).
struct CovarianceKernel {
    /// `X^T W X / m`.
    gram: Array2<f64>,
    /// `X^T W y / m`.
    xty: Array1<f64>,
    /// `y^T W y / m` (for the debug objective check).
    #[cfg_attr(not(debug_assertions), allow(dead_code))]
    yty: f64,
}

impl CovarianceKernel {
    fn new(cols: &[Vec<f64>], yc: &Array1<f64>, w: &Array1<f64>) -> Self {
        let d = cols.len();
        let m = yc.len();
        let m_f = m as f64;
        let mut gram = Array2::<f64>::zeros((d, d));
        let mut xty = Array1::<f64>::zeros(d);
        // Weighted columns computed once keep the Gram build at one
        // multiply per entry.
        let wcols: Vec<Vec<f64>> = cols
            .iter()
            .map(|col| col.iter().zip(w.iter()).map(|(&x, &wi)| x * wi).collect())
            .collect();
        for a in 0..d {
            let wa = &wcols[a];
            xty[a] = wa.iter().zip(yc.iter()).map(|(&x, &y)| x * y).sum::<f64>() / m_f;
            for b in a..d {
                let colb = &cols[b];
                let g = wa.iter().zip(colb.iter()).map(|(&x, &y)| x * y).sum::<f64>() / m_f;
                gram[[a, b]] = g;
                gram[[b, a]] = g;
            }
        }
        let yty = yc.iter().zip(w.iter()).map(|(&y, &wi)| wi * y * y).sum::<f64>() / m_f;
        Self { gram, xty, yty }
    }
}

fn coordinate_descent_covariance(
    kernel: &CovarianceKernel,
    lambda: f64,
    alpha: f64,
    warm: Option<&Array1<f64>>,
) -> (Array1<f64>, FitStatus, usize) {
    let d = kernel.xty.len();
    let mut beta = warm.cloned().unwrap_or_else(|| Array1::zeros(d));
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);

    #[cfg(debug_assertions)]
    let objective = |beta: &Array1<f64>| -> f64 {
        let gb = kernel.gram.dot(beta);
        let loss = kernel.yty - 2.0 * kernel.xty.dot(beta) + beta.dot(&gb);
        let pen: f64 = beta
            .iter()
            .map(|&b| (1.0 - alpha) * b * b + 2.0 * alpha * b.abs())
            .sum();
        loss + lambda * pen
    };
    #[cfg(debug_assertions)]
    let mut prev_obj = objective(&beta);

    let mut status = FitStatus::MaxIterations;
    let mut sweeps = 0usize;
    for sweep in 0..MAX_SWEEPS {
        sweeps = sweep + 1;
        let mut max_delta = 0.0_f64;
        for j in 0..d {
            let z = kernel.gram[[j, j]];
            let denom = z + l2;
            if denom <= 0.0 {
                continue;
            }
            let row = kernel.gram.row(j);
            let rho = kernel.xty[j] - row.dot(&beta) + z * beta[j];
            let new = soft_threshold(rho, l1) / denom;
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }

        #[cfg(debug_assertions)]
        {
            let obj = objective(&beta);
            debug_assert!(
                obj <= prev_obj + 1e-9 * prev_obj.abs().max(1.0),
                "coordinate sweep increased the objective: {prev_obj} -> {obj}"
            );
            prev_obj = obj;
        }

        if max_delta < 1e-5 || sweep % 8 == 7 {
            let gb = kernel.gram.dot(&beta);
            let mut kkt = 0.0_f64;
            for j in 0..d {
                let grad = -2.0 * (kernel.xty[j] - gb[j]) + 2.0 * l2 * beta[j];
                let res = if beta[j] != 0.0 {
                    (grad + 2.0 * l1 * beta[j].signum()).abs()
                } else {
                    (grad.abs() - 2.0 * l1).max(0.0)
                };
                kkt = kkt.max(res);
            }
            if kkt < KKT_TOL || (max_delta == 0.0 && kkt < 1e-6) {
                status = FitStatus::Converged;
                break;
            }
        }
    }
    (beta, status, sweeps)
}

fn to_columns(x: &ArrayView2<f64>) -> Vec<Vec<f64>> {
    (0..x.ncols()).map(|j| x.column(j).to_vec()).collect()
}

/// Centered, column-major problem data shared across a penalty path. For
/// `m >= d` the weighted Gram is formed once and sweeps run on it.
struct PreparedFit {
    cols: Vec<Vec<f64>>,
    yc: Array1<f64>,
    w: Array1<f64>,
    x_mean: Array1<f64>,
    y_mean: f64,
    fit_intercept: bool,
    kernel: Option<CovarianceKernel>,
}

impl PreparedFit {
    fn new(
        x: &ArrayView2<f64>,
        y: &ArrayView1<f64>,
        obs_weights: &ArrayView1<f64>,
        fit_intercept: bool,
    ) -> Result<Self> {
        check_xy(x, y, obs_weights)?;
        if x.nrows() < 2 {
            return Err(Error::InsufficientData("elastic net needs at least 2 rows".into()));
        }
        let w = normalize_weights(obs_weights)?;
        let c = weighted_center(x, y, &w, fit_intercept);
        let cols = to_columns(&c.x.view());
        let kernel = if x.nrows() >= x.ncols() {
            Some(CovarianceKernel::new(&cols, &c.y, &w))
        } else {
            None
        };
        Ok(Self {
            cols,
            yc: c.y,
            w,
            x_mean: c.x_mean,
            y_mean: c.y_mean,
            fit_intercept,
            kernel,
        })
    }

    fn fit(&self, lambda: f64, alpha: f64, warm: Option<&Array1<f64>>) -> Result<Coefficients> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!("alpha must be in [0,1], got {alpha}")));
        }
        if !(lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda must be nonnegative, got {lambda}")));
        }
        let (beta, status, _) = match &self.kernel {
            Some(kernel) => coordinate_descent_covariance(kernel, lambda, alpha, warm),
            None => coordinate_descent_residual(&self.cols, &self.yc, &self.w, lambda, alpha, warm),
        };
        let intercept = if self.fit_intercept {
            self.y_mean - self.x_mean.dot(&beta)
        } else {
            0.0
        };
        Ok(Coefficients {
            beta,
            intercept,
            lambda_used: lambda,
            alpha_used: alpha,
            status,
        })
    }
}

fn fit_inner(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    lambda: f64,
    alpha: f64,
    fit_intercept: bool,
    warm: Option<&Array1<f64>>,
) -> Result<Coefficients> {
    PreparedFit::new(x, y, obs_weights, fit_intercept)?.fit(lambda, alpha, warm)
}

/// Fit a weighted elastic net at a fixed penalty.
pub fn fit_weighted_elastic_net(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    lambda: f64,
    alpha: f64,
    fit_intercept: bool,
) -> Result<Coefficients> {
    fit_inner(x, y, obs_weights, lambda, alpha, fit_intercept, None)
}

/// Smallest penalty at which every coefficient is zero (the weighted
/// correlation threshold). For `alpha = 0` the `alpha = 0.001` threshold is
/// used so the grid stays finite.
pub fn lambda_max(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    alpha: f64,
    fit_intercept: bool,
) -> Result<f64> {
    check_xy(x, y, obs_weights)?;
    let w = normalize_weights(obs_weights)?;
    let c = weighted_center(x, y, &w, fit_intercept);
    let m = x.nrows() as f64;
    let mut max_corr = 0.0_f64;
    for j in 0..x.ncols() {
        let col = c.x.column(j);
        let mut s = 0.0;
        for i in 0..x.nrows() {
            s += w[i] * col[i] * c.y[i];
        }
        max_corr = max_corr.max((s / m).abs());
    }
    let alpha_eff = alpha.max(0.001);
    let lmax = max_corr / alpha_eff;
    if lmax > 0.0 && lmax.is_finite() {
        Ok(lmax)
    } else {
        // Degenerate response: any penalty gives the all-zero fit.
        Ok(1e-3)
    }
}

fn lambda_grid(lmax: f64, grid_size: usize) -> Vec<f64> {
    if grid_size <= 1 {
        return vec![lmax];
    }
    let ratio: f64 = 1e-4;
    (0..grid_size)
        .map(|i| lmax * ratio.powf(i as f64 / (grid_size - 1) as f64))
        .collect()
}

/// Deterministic fold assignment: a seeded permutation dealt round-robin.
pub fn cv_folds(m: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut perm: Vec<usize> = (0..m).collect();
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    let mut assignment = vec![Vec::new(); folds];
    for (pos, &idx) in perm.iter().enumerate() {
        assignment[pos % folds].push(idx);
    }
    for f in assignment.iter_mut() {
        f.sort_unstable();
    }
    assignment
}

fn take_rows(x: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    crate::data::select_rows(x, idx)
}

fn take_vec(v: &ArrayView1<f64>, idx: &[usize]) -> Array1<f64> {
    Array1::from_iter(idx.iter().map(|&i| v[i]))
}

fn select_best(grid: &[f64], cv_error: &[f64]) -> f64 {
    // Grid is descending; ties break toward the larger lambda.
    let mut best = 0usize;
    for (k, &e) in cv_error.iter().enumerate() {
        if e < cv_error[best] {
            best = k;
        }
    }
    grid[best]
}

/// Select the elastic-net penalty by k-fold cross-validation on the weighted
/// validation loss, over a log-spaced grid under `lambda_max`.
#[allow(clippy::too_many_arguments)]
pub fn cv_select_lambda(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    alpha: f64,
    folds: usize,
    grid_size: usize,
    seed: u64,
    fit_intercept: bool,
) -> Result<CvResult> {
    check_xy(x, y, obs_weights)?;
    let m = x.nrows();
    if folds < 2 || m < folds {
        return Err(Error::InsufficientData(format!(
            "cross-validation needs folds >= 2 and m >= folds (m = {m}, folds = {folds})"
        )));
    }
    if grid_size == 0 {
        return Err(Error::InvalidConfig("grid_size must be at least 1".into()));
    }
    let w = normalize_weights(obs_weights)?;
    let lmax = lambda_max(x, y, &w.view(), alpha, fit_intercept)?;
    let grid = lambda_grid(lmax, grid_size);

    let assignment = cv_folds(m, folds, seed);
    let mut err_sum = vec![0.0_f64; grid.len()];
    let mut err_folds = 0usize;

    for val_idx in &assignment {
        let train_idx: Vec<usize> = (0..m).filter(|i| !val_idx.contains(i)).collect();
        let wt = take_vec(&w.view(), &train_idx);
        let wv = take_vec(&w.view(), val_idx);
        let val_weight: f64 = wv.sum();
        if wt.sum() <= 0.0 || val_weight <= 0.0 {
            continue;
        }
        let xt = take_rows(x, &train_idx);
        let yt = take_vec(y, &train_idx);
        let xv = take_rows(x, val_idx);
        let yv = take_vec(y, val_idx);

        let prepared = PreparedFit::new(&xt.view(), &yt.view(), &wt.view(), fit_intercept)?;
        let mut warm: Option<Array1<f64>> = None;
        for (k, &lam) in grid.iter().enumerate() {
            let fit = prepared.fit(lam, alpha, warm.as_ref())?;
            let pred = xv.dot(&fit.beta) + fit.intercept;
            let mut e = 0.0;
            for i in 0..val_idx.len() {
                let d = yv[i] - pred[i];
                e += wv[i] * d * d;
            }
            err_sum[k] += e / val_weight;
            warm = Some(fit.beta);
        }
        err_folds += 1;
    }

    if err_folds == 0 {
        return Err(Error::AllZeroWeights);
    }
    let cv_error: Vec<f64> = err_sum.iter().map(|e| e / err_folds as f64).collect();
    let selected_lambda = select_best(&grid, &cv_error);
    Ok(CvResult {
        lambda_grid: grid,
        cv_error,
        selected_lambda,
        fold_count: err_folds,
    })
}

/// The normal-equations data of an anchored ridge problem, reusable across
/// a `lambda'` path.
struct PreparedRidge {
    gram: Array2<f64>,
    rhs: Array1<f64>,
    x_mean: Array1<f64>,
    y_mean: f64,
    anchor_beta: Array1<f64>,
    fit_intercept: bool,
}

impl PreparedRidge {
    fn new(
        x: &ArrayView2<f64>,
        y: &ArrayView1<f64>,
        obs_weights: &ArrayView1<f64>,
        anchor: &Coefficients,
        fit_intercept: bool,
    ) -> Result<Self> {
        check_xy(x, y, obs_weights)?;
        let d = x.ncols();
        if anchor.beta.len() != d {
            return Err(Error::DimensionMismatch(format!(
                "anchor has {} coefficients for {} features",
                anchor.beta.len(),
                d
            )));
        }
        if x.nrows() < 2 {
            return Err(Error::InsufficientData("anchored ridge needs at least 2 rows".into()));
        }
        let w = normalize_weights(obs_weights)?;
        // Shifted target: the residual of the anchor fit.
        let shifted = y.to_owned() - x.dot(&anchor.beta);
        let c = weighted_center(x, &shifted.view(), &w, fit_intercept);
        let m = x.nrows() as f64;

        let mut gram = Array2::<f64>::zeros((d, d));
        let mut rhs = Array1::<f64>::zeros(d);
        for i in 0..x.nrows() {
            let wi = w[i] / m;
            for a in 0..d {
                let xa = c.x[[i, a]] * wi;
                rhs[a] += xa * c.y[i];
                for b in a..d {
                    gram[[a, b]] += xa * c.x[[i, b]];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                gram[[a, b]] = gram[[b, a]];
            }
        }
        Ok(Self {
            gram,
            rhs,
            x_mean: c.x_mean,
            y_mean: c.y_mean,
            anchor_beta: anchor.beta.clone(),
            fit_intercept,
        })
    }

    fn solve(&self, lambda_prime: f64) -> Result<Coefficients> {
        if !(lambda_prime >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda_prime must be nonnegative, got {lambda_prime}"
            )));
        }
        let d = self.rhs.len();
        let mut system = self.gram.clone();
        for a in 0..d {
            system[[a, a]] += lambda_prime;
        }
        let (delta, status) = match linalg::solve_spd(&system, &self.rhs) {
            Some(sol) => (sol, FitStatus::Converged),
            None => (linalg::min_norm_solve_psd(&system, &self.rhs), FitStatus::MinNorm),
        };
        let beta = &self.anchor_beta + &delta;
        let intercept = if self.fit_intercept {
            self.y_mean - self.x_mean.dot(&delta)
        } else {
            0.0
        };
        Ok(Coefficients {
            beta,
            intercept,
            lambda_used: lambda_prime,
            alpha_used: 0.0,
            status,
        })
    }
}

/// Weighted least squares penalized by distance to an anchor vector:
/// closed-form solution of the shifted ridge system.
pub fn fit_anchored_ridge(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    anchor: &Coefficients,
    lambda_prime: f64,
    fit_intercept: bool,
) -> Result<Coefficients> {
    PreparedRidge::new(x, y, obs_weights, anchor, fit_intercept)?.solve(lambda_prime)
}

/// Infinity-norm residual of the anchored-ridge optimality system at a fit.
pub fn anchored_ridge_residual(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    anchor: &Coefficients,
    fitted: &Coefficients,
    fit_intercept: bool,
) -> Result<f64> {
    check_xy(x, y, obs_weights)?;
    let w = normalize_weights(obs_weights)?;
    let m = x.nrows() as f64;
    let lambda_prime = fitted.lambda_used;
    // Stationarity: -(2/m) X^T W r + 2 lambda' (beta - anchor) = 0, and the
    // weighted residual mean is zero when the intercept is free.
    let r = y.to_owned() - x.dot(&fitted.beta) - Array1::from_elem(x.nrows(), fitted.intercept);
    let mut res = 0.0_f64;
    for j in 0..x.ncols() {
        let mut s = 0.0;
        for i in 0..x.nrows() {
            s += w[i] * x[[i, j]] * r[i];
        }
        let g = -2.0 * s / m + 2.0 * lambda_prime * (fitted.beta[j] - anchor.beta[j]);
        res = res.max(g.abs());
    }
    if fit_intercept {
        let s: f64 = (0..x.nrows()).map(|i| w[i] * r[i]).sum();
        res = res.max((2.0 * s / m).abs());
    }
    Ok(res)
}

/// Select `lambda'` for the anchored refit by k-fold cross-validation on the
/// weighted validation loss. The grid spans `[1e-4, 1e4]` around the mean
/// weighted squared feature size (trace of the weighted Gram over `m * d`).
#[allow(clippy::too_many_arguments)]
pub fn cv_select_lambda_prime(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    anchor: &Coefficients,
    folds: usize,
    grid_size: usize,
    seed: u64,
    fit_intercept: bool,
) -> Result<CvResult> {
    check_xy(x, y, obs_weights)?;
    let m = x.nrows();
    if folds < 2 || m < folds {
        return Err(Error::InsufficientData(format!(
            "cross-validation needs folds >= 2 and m >= folds (m = {m}, folds = {folds})"
        )));
    }
    if grid_size == 0 {
        return Err(Error::InvalidConfig("grid_size must be at least 1".into()));
    }
    let w = normalize_weights(obs_weights)?;
    let d = x.ncols();
    let mut tr = 0.0;
    for i in 0..m {
        for j in 0..d {
            tr += w[i] * x[[i, j]] * x[[i, j]];
        }
    }
    let scale = (tr / (m as f64 * d as f64)).max(1e-300);
    let grid: Vec<f64> = if grid_size == 1 {
        vec![scale]
    } else {
        (0..grid_size)
            .map(|i| scale * 1e4 * 1e-8_f64.powf(i as f64 / (grid_size - 1) as f64))
            .collect()
    };

    let assignment = cv_folds(m, folds, seed);
    let mut err_sum = vec![0.0_f64; grid.len()];
    let mut err_folds = 0usize;
    for val_idx in &assignment {
        let train_idx: Vec<usize> = (0..m).filter(|i| !val_idx.contains(i)).collect();
        let wt = take_vec(&w.view(), &train_idx);
        let wv = take_vec(&w.view(), val_idx);
        let val_weight: f64 = wv.sum();
        if wt.sum() <= 0.0 || val_weight <= 0.0 {
            continue;
        }
        let xt = take_rows(x, &train_idx);
        let yt = take_vec(y, &train_idx);
        let xv = take_rows(x, val_idx);
        let yv = take_vec(y, val_idx);
        let prepared = PreparedRidge::new(&xt.view(), &yt.view(), &wt.view(), anchor, fit_intercept)?;
        for (k, &lp) in grid.iter().enumerate() {
            let fit = prepared.solve(lp)?;
            let pred = xv.dot(&fit.beta) + fit.intercept;
            let mut e = 0.0;
            for i in 0..val_idx.len() {
                let dv = yv[i] - pred[i];
                e += wv[i] * dv * dv;
            }
            err_sum[k] += e / val_weight;
        }
        err_folds += 1;
    }
    if err_folds == 0 {
        return Err(Error::AllZeroWeights);
    }
    let cv_error: Vec<f64> = err_sum.iter().map(|e| e / err_folds as f64).collect();
    let selected_lambda = select_best(&grid, &cv_error);
    Ok(CvResult {
        lambda_grid: grid,
        cv_error,
        selected_lambda,
        fold_count: err_folds,
    })
}

/// Linear prediction `x . beta + intercept` per row.
pub fn predict(x: &ArrayView2<f64>, c: &Coefficients) -> Result<Array1<f64>> {
    if x.ncols() != c.beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature columns for {} coefficients",
            x.ncols(),
            c.beta.len()
        )));
    }
    Ok(x.dot(&c.beta) + c.intercept)
}

/// The elastic-net objective at a fitted coefficient vector, with the same
/// internal weight normalization the fit used.
pub fn elastic_net_objective(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    c: &Coefficients,
) -> Result<f64> {
    check_xy(x, y, obs_weights)?;
    let w = normalize_weights(obs_weights)?;
    let m = x.nrows() as f64;
    let r = y.to_owned() - x.dot(&c.beta) - Array1::from_elem(x.nrows(), c.intercept);
    let loss: f64 = r.iter().zip(w.iter()).map(|(&ri, &wi)| wi * ri * ri).sum::<f64>() / m;
    let pen: f64 = c
        .beta
        .iter()
        .map(|&b| (1.0 - c.alpha_used) * b * b + 2.0 * c.alpha_used * b.abs())
        .sum();
    Ok(loss + c.lambda_used * pen)
}

/// Gradient of the smooth part of the elastic-net objective
/// (loss plus the quadratic penalty) with respect to `beta`.
pub fn elastic_net_smooth_gradient(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    beta: &Array1<f64>,
    intercept: f64,
    lambda: f64,
    alpha: f64,
) -> Result<Array1<f64>> {
    check_xy(x, y, obs_weights)?;
    let w = normalize_weights(obs_weights)?;
    let m = x.nrows() as f64;
    let r = y.to_owned() - x.dot(beta) - Array1::from_elem(x.nrows(), intercept);
    let mut g = Array1::<f64>::zeros(x.ncols());
    for j in 0..x.ncols() {
        let mut s = 0.0;
        for i in 0..x.nrows() {
            s += w[i] * x[[i, j]] * r[i];
        }
        g[j] = -2.0 * s / m + 2.0 * lambda * (1.0 - alpha) * beta[j];
    }
    Ok(g)
}

/// Worst per-coordinate violation of the subgradient optimality conditions.
pub fn kkt_residual(
    x: &ArrayView2<f64>,
    y: &ArrayView1<f64>,
    obs_weights: &ArrayView1<f64>,
    c: &Coefficients,
    fit_intercept: bool,
) -> Result<f64> {
    let g = elastic_net_smooth_gradient(
        x,
        y,
        obs_weights,
        &c.beta,
        c.intercept,
        c.lambda_used,
        c.alpha_used,
    )?;
    let l1 = 2.0 * c.lambda_used * c.alpha_used;
    let mut res = 0.0_f64;
    for j in 0..c.beta.len() {
        let v = if c.beta[j] != 0.0 {
            (g[j] + l1 * c.beta[j].signum()).abs()
        } else {
            (g[j].abs() - l1).max(0.0)
        };
        res = res.max(v);
    }
    if fit_intercept {
        let w = normalize_weights(obs_weights)?;
        let m = x.nrows() as f64;
        let r = y.to_owned() - x.dot(&c.beta) - Array1::from_elem(x.nrows(), c.intercept);
        let s: f64 = r.iter().zip(w.iter()).map(|(&ri, &wi)| wi * ri).sum();
        res = res.max((2.0 * s / m).abs());
    }
    Ok(res)
}
