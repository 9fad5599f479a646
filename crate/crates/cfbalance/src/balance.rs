//! Simplex-constrained balancing weights.
//!
//! For a group feature matrix `X` (rows are the group's units) and a target
//! mean vector `x_bar`, the weights minimize
//!
//! ```text
//!     (1 - xi) ||w||_2^2 + xi ||x_bar - X^T w||_r^2      over the simplex,
//! ```
//!
//! with `r = 2` or `r = inf`. The `r = 2` objective is smooth and is solved
//! by accelerated projected gradient with backtracking; the `r = inf` case is
//! handled through its epigraph form, alternating the exact minimizer
//! `t* = ||x_bar - X^T w||_inf` with projected subgradient steps in `w` on a
//! decreasing step schedule, keeping the best iterate seen.

use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::TargetMoments;
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BalanceNorm {
    L2,
    Linf,
}

impl std::fmt::Display for BalanceNorm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BalanceNorm::L2 => write!(f, "l2"),
            BalanceNorm::Linf => write!(f, "linf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    /// Trade-off between the ridge term and the imbalance term, in (0, 1).
    pub xi: f64,
    pub norm: BalanceNorm,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            xi: 0.5,
            norm: BalanceNorm::Linf,
            max_iterations: 50_000,
            tolerance: 1e-8,
        }
    }
}

impl BalanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi < 1.0) {
            return Err(Error::InvalidConfig(format!("xi must be in (0,1), got {}", self.xi)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Solved weights for one group, with solver telemetry.
#[derive(Debug, Clone)]
pub struct BalancingWeights {
    /// Nonnegative, sums to 1.
    pub weights: Array1<f64>,
    /// `||x_bar - X^T w||_r` in the configured norm.
    pub achieved_imbalance: f64,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Euclidean projection onto `{w : w >= 0, sum w = 1}` (sort-based).
pub fn simplex_project(v: &Array1<f64>) -> Array1<f64> {
    let n = v.len();
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut found = false;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
            found = true;
        } else {
            break;
        }
    }
    if !found {
        // All-equal pathological input; fall back to uniform.
        return Array1::from_elem(n, 1.0 / n as f64);
    }
    v.mapv(|x| (x - theta).max(0.0))
}

fn imbalance_vector(w: &Array1<f64>, x: &ArrayView2<f64>, target: &TargetMoments) -> Array1<f64> {
    &target.means - &x.t().dot(w)
}

fn norm_of(v: &Array1<f64>, norm: BalanceNorm) -> f64 {
    match norm {
        BalanceNorm::L2 => v.dot(v).sqrt(),
        BalanceNorm::Linf => v.iter().fold(0.0_f64, |m, &e| m.max(e.abs())),
    }
}

/// The combined objective at `w` (must lie on the simplex).
pub fn balance_objective(
    w: &Array1<f64>,
    group_features: &ArrayView2<f64>,
    target: &TargetMoments,
    cfg: &BalanceConfig,
) -> Result<f64> {
    check_dims(w.len(), group_features, target)?;
    let r = imbalance_vector(w, group_features, target);
    let imb = norm_of(&r, cfg.norm);
    Ok((1.0 - cfg.xi) * w.dot(w) + cfg.xi * imb * imb)
}

/// Gradient of the smooth `r = 2` objective at `w`.
pub fn balance_gradient_l2(
    w: &Array1<f64>,
    group_features: &ArrayView2<f64>,
    target: &TargetMoments,
    xi: f64,
) -> Array1<f64> {
    let r = imbalance_vector(w, group_features, target);
    let mut g = w.mapv(|e| 2.0 * (1.0 - xi) * e);
    g.scaled_add(-2.0 * xi, &group_features.dot(&r));
    g
}

fn check_dims(n_w: usize, x: &ArrayView2<f64>, target: &TargetMoments) -> Result<()> {
    if x.nrows() != n_w {
        return Err(Error::DimensionMismatch(format!(
            "weight vector has {} entries for {} rows",
            n_w,
            x.nrows()
        )));
    }
    if x.ncols() != target.means.len() {
        return Err(Error::DimensionMismatch(format!(
            "features have {} columns, target has {}",
            x.ncols(),
            target.means.len()
        )));
    }
    Ok(())
}

/// Solve the balancing program for one group.
///
/// Always returns a feasible weight vector; `converged = false` means the
/// iteration budget ran out while the objective was still moving.
pub fn solve_weights(
    group_features: &ArrayView2<f64>,
    target: &TargetMoments,
    cfg: &BalanceConfig,
) -> Result<BalancingWeights> {
    cfg.validate()?;
    let n_g = group_features.nrows();
    if n_g == 0 {
        return Err(Error::EmptyInput("solve_weights on an empty group"));
    }
    check_dims(n_g, group_features, target)?;

    let (w, iterations, converged) = match cfg.norm {
        BalanceNorm::L2 => solve_l2(group_features, target, cfg),
        BalanceNorm::Linf => solve_linf(group_features, target, cfg),
    };
    let w = w.mapv(|e| e.max(0.0));
    let r = imbalance_vector(&w, group_features, target);
    let imb = norm_of(&r, cfg.norm);
    Ok(BalancingWeights {
        objective_value: (1.0 - cfg.xi) * w.dot(&w) + cfg.xi * imb * imb,
        achieved_imbalance: imb,
        weights: w,
        iterations,
        converged,
    })
}

/// Accelerated projected gradient with backtracking and adaptive restart.
fn solve_l2(
    x: &ArrayView2<f64>,
    target: &TargetMoments,
    cfg: &BalanceConfig,
) -> (Array1<f64>, usize, bool) {
    let n_g = x.nrows();
    let xi = cfg.xi;
    let objective = |w: &Array1<f64>| -> f64 {
        let r = imbalance_vector(w, x, target);
        (1.0 - xi) * w.dot(w) + xi * r.dot(&r)
    };

    let lip = 2.0 * (1.0 - xi) + 2.0 * xi * linalg::spectral_norm_sq(&x.to_owned());
    let fp_step = 1.0 / lip.max(1e-300);
    let mut step = fp_step;

    let mut w = Array1::from_elem(n_g, 1.0 / n_g as f64);
    let mut w_prev = w.clone();
    let mut y = w.clone();
    let mut t = 1.0_f64;
    let mut f_w = objective(&w);
    let mut stall = 0usize;
    let mut converged = false;
    let mut iterations = 0usize;

    for k in 0..cfg.max_iterations {
        iterations = k + 1;
        let g_y = balance_gradient_l2(&y, x, target, xi);
        let f_y = objective(&y);

        // Backtracking on the proximal step from y.
        let mut w_next;
        loop {
            let cand = simplex_project(&(&y - &g_y.mapv(|e| e * step)));
            let diff = &cand - &y;
            let quad = f_y + g_y.dot(&diff) + diff.dot(&diff) / (2.0 * step);
            if objective(&cand) <= quad + 1e-15 * quad.abs().max(1.0) || step < 1e-18 {
                w_next = cand;
                break;
            }
            step *= 0.5;
        }

        let f_next = objective(&w_next);
        if f_next > f_w {
            // Momentum overshoot: drop acceleration and retry from the
            // current point with a plain projected step next iteration.
            t = 1.0;
            w_next = w.clone();
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let mut y_next = w_next.clone();
        y_next.scaled_add(momentum, &(&w_next - &w_prev));
        w_prev = w;
        w = w_next;
        y = y_next;
        t = t_next;

        let f_new = objective(&w);
        let rel_drop = (f_w - f_new) / f_w.abs().max(1e-300);
        if rel_drop < cfg.tolerance {
            stall += 1;
        } else {
            stall = 0;
        }
        f_w = f_new.min(f_w);

        // First-order optimality: fixed point of the projected step 1/L.
        let g_w = balance_gradient_l2(&w, x, target, xi);
        let fp = simplex_project(&(&w - &g_w.mapv(|e| e * fp_step)));
        let fp_res = (&fp - &w).iter().fold(0.0_f64, |m, &e| m.max(e.abs()));
        if fp_res < cfg.tolerance.max(1e-12) {
            converged = true;
            break;
        }
        if stall >= 10 && fp_res < 1e-6 {
            converged = true;
            break;
        }
    }
    (w, iterations, converged)
}

/// Projected subgradient on the epigraph-reduced objective
/// `(1 - xi)||w||^2 + xi t*^2` with `t* = ||x_bar - X^T w||_inf`.
fn solve_linf(
    x: &ArrayView2<f64>,
    target: &TargetMoments,
    cfg: &BalanceConfig,
) -> (Array1<f64>, usize, bool) {
    let n_g = x.nrows();
    let xi = cfg.xi;

    let max_col_sq = (0..x.ncols())
        .map(|j| {
            let c = x.column(j);
            c.dot(&c)
        })
        .fold(0.0_f64, f64::max);
    let base_step = 1.0 / (2.0 * (1.0 - xi) + 2.0 * xi * max_col_sq).max(1e-300);

    let mut w = Array1::from_elem(n_g, 1.0 / n_g as f64);
    let mut r = imbalance_vector(&w, x, target);
    let mut best_w = w.clone();
    let mut best_f = f64::INFINITY;

    // Best-objective history for the windowed stopping rule.
    const WINDOW: usize = 1_000;
    let mut history: Vec<f64> = Vec::with_capacity(cfg.max_iterations.min(1 << 20));
    let mut converged = false;
    let mut iterations = 0usize;

    for k in 0..cfg.max_iterations {
        iterations = k + 1;
        let (j_star, m) = r
            .iter()
            .enumerate()
            .map(|(j, &e)| (j, e.abs()))
            .fold((0usize, 0.0_f64), |acc, cur| if cur.1 > acc.1 { cur } else { acc });

        let f = (1.0 - xi) * w.dot(&w) + xi * m * m;
        if f < best_f {
            best_f = f;
            best_w.assign(&w);
        }
        history.push(best_f);
        if history.len() > WINDOW {
            let old = history[history.len() - 1 - WINDOW];
            let rel = (old - best_f) / old.abs().max(1e-300);
            if rel < cfg.tolerance * WINDOW as f64 {
                converged = true;
                break;
            }
        }

        // Subgradient of the reduced objective: ridge part plus the active
        // coordinate of the imbalance term.
        let mut g = w.mapv(|e| 2.0 * (1.0 - xi) * e);
        if m > 0.0 {
            let sign = r[j_star].signum();
            let col = x.column(j_star);
            for i in 0..n_g {
                g[i] += -2.0 * xi * m * sign * col[i];
            }
        }

        let step = base_step / ((k + 1) as f64).sqrt();
        w = simplex_project(&(&w - &g.mapv(|e| e * step)));
        r = imbalance_vector(&w, x, target);
    }
    (best_w, iterations, converged)
}

/// Per-dimension and aggregate imbalance, before (uniform) and after (solved).
#[derive(Debug, Clone)]
pub struct BalanceReport {
    /// `x_bar_j - (X^T w)_j` for the solved weights.
    pub per_dimension: Array1<f64>,
    pub l2_before: f64,
    pub l2_after: f64,
    pub linf_before: f64,
    pub linf_after: f64,
    /// Weight cap the report was checked against, if any.
    pub cap: Option<f64>,
    /// Number of weights strictly above the cap.
    pub over_cap: usize,
}

pub fn balance_report(
    w: &BalancingWeights,
    group_features: &ArrayView2<f64>,
    target: &TargetMoments,
    cap: Option<f64>,
) -> Result<BalanceReport> {
    check_dims(w.weights.len(), group_features, target)?;
    let n_g = group_features.nrows();
    let uniform = Array1::from_elem(n_g, 1.0 / n_g as f64);
    let before = imbalance_vector(&uniform, group_features, target);
    let after = imbalance_vector(&w.weights, group_features, target);
    let over_cap = match cap {
        Some(c) => w.weights.iter().filter(|&&wi| wi > c).count(),
        None => 0,
    };
    Ok(BalanceReport {
        l2_before: norm_of(&before, BalanceNorm::L2),
        l2_after: norm_of(&after, BalanceNorm::L2),
        linf_before: norm_of(&before, BalanceNorm::Linf),
        linf_after: norm_of(&after, BalanceNorm::Linf),
        per_dimension: after,
        cap,
        over_cap,
    })
}
