//! Two-period panel estimators for a single (g, t) contrast.
//!
//! Every estimator receives the long difference `delta = Y_t - Y_base` for
//! the estimation sample (group-`g` units and never-treated units) and
//! returns the ATT with its per-unit influence function, scaled so that
//! `att_hat - att ≈ mean(influence)`.

use nalgebra::{DMatrix, DVector};

use super::propensity::PropensityModel;
use super::EstimationError;
use crate::linalg::{spd_inverse, sym_rcond, weighted_gram};

/// Upper clamp applied to fitted propensities before weighting.
const PS_CEILING: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub att: f64,
    pub influence: Vec<f64>,
    /// Comparison units dropped for exceeding the propensity threshold.
    pub trimmed: usize,
}

fn center(mut v: Vec<f64>) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
    v
}

/// Difference of group means of `delta`.
pub fn unconditional(treated: &[bool], delta: &[f64]) -> Result<CellEstimate, EstimationError> {
    let n = delta.len() as f64;
    let (mut s1, mut n1, mut s0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (d, y) in treated.iter().zip(delta) {
        if *d {
            s1 += y;
            n1 += 1;
        } else {
            s0 += y;
            n0 += 1;
        }
    }
    if n1 == 0 {
        return Err(EstimationError::InsufficientGroup {
            n_treated: 0,
            required: 1,
        });
    }
    if n0 == 0 {
        return Err(EstimationError::NoComparison);
    }
    let mu1 = s1 / n1 as f64;
    let mu0 = s0 / n0 as f64;
    let p1 = n1 as f64 / n;
    let p0 = n0 as f64 / n;
    let influence = treated
        .iter()
        .zip(delta)
        .map(|(d, y)| if *d { (y - mu1) / p1 } else { -(y - mu0) / p0 })
        .collect();
    Ok(CellEstimate {
        att: mu1 - mu0,
        influence: center(influence),
        trimmed: 0,
    })
}

/// Least-squares fit of `delta` on the design among comparison units, with
/// the asymptotic linear representation of its coefficients.
struct ControlOls {
    fitted: Vec<f64>,
    /// n x k; row i is unit i's contribution to `beta_hat - beta`.
    lin_rep: DMatrix<f64>,
}

fn control_ols(
    x: &DMatrix<f64>,
    treated: &[bool],
    delta: &[f64],
) -> Result<ControlOls, EstimationError> {
    let n = x.nrows();
    let w: Vec<f64> = treated.iter().map(|d| if *d { 0.0 } else { 1.0 }).collect();
    let gram = weighted_gram(x, &w);
    if sym_rcond(&gram) < 1e-12 {
        return Err(EstimationError::Collinear);
    }
    let inv = spd_inverse(&gram).ok_or(EstimationError::Collinear)?;
    let wy = DVector::from_iterator(n, w.iter().zip(delta).map(|(a, b)| a * b));
    let beta = &inv * (x.transpose() * wy);
    let fitted: Vec<f64> = (x * &beta).iter().copied().collect();
    let scaled_inv = inv * n as f64;
    let mut lin_rep = DMatrix::zeros(n, x.ncols());
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let e = delta[i] - fitted[i];
        let row = x.row(i) * e;
        lin_rep.set_row(i, &(row * &scaled_inv));
    }
    Ok(ControlOls { fitted, lin_rep })
}

/// Column means of `weights[i] * x[i, .]`.
fn weighted_col_means(x: &DMatrix<f64>, weights: &[f64]) -> DVector<f64> {
    let n = x.nrows() as f64;
    let mut m = DVector::zeros(x.ncols());
    for (i, w) in weights.iter().enumerate() {
        if *w != 0.0 {
            for j in 0..x.ncols() {
                m[j] += w * x[(i, j)];
            }
        }
    }
    m / n
}

fn ps_lin_rep(x: &DMatrix<f64>, treated: &[bool], ps: &PropensityModel) -> DMatrix<f64> {
    let mut rep = DMatrix::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        let d = if treated[i] { 1.0 } else { 0.0 };
        let row = x.row(i) * (d - ps.fitted[i]);
        rep.set_row(i, &(row * &ps.scaled_hessian_inv));
    }
    rep
}

/// Treated and comparison weights; comparison units with `p > trim` get zero.
fn ipw_weights(
    treated: &[bool],
    ps: &PropensityModel,
    trim: f64,
) -> Result<(Vec<f64>, Vec<f64>, usize), EstimationError> {
    let mut w_t = Vec::with_capacity(treated.len());
    let mut w_c = Vec::with_capacity(treated.len());
    let mut trimmed = 0;
    for (d, p) in treated.iter().zip(&ps.fitted) {
        let p = p.min(PS_CEILING);
        if *d {
            w_t.push(1.0);
            w_c.push(0.0);
        } else {
            w_t.push(0.0);
            if p < trim {
                w_c.push(p / (1.0 - p));
            } else {
                trimmed += 1;
                w_c.push(0.0);
            }
        }
    }
    if w_c.iter().all(|w| *w == 0.0) {
        return Err(EstimationError::Trimmed);
    }
    Ok((w_t, w_c, trimmed))
}

fn mat_vec(m: &DMatrix<f64>, v: &DVector<f64>) -> Vec<f64> {
    (m * v).iter().copied().collect()
}

/// Outcome-regression estimator: mean over treated of `delta - m(X)` where
/// `m` is the least-squares fit among comparison units. `x` includes the
/// intercept column.
pub fn outcome_regression(
    treated: &[bool],
    delta: &[f64],
    x: &DMatrix<f64>,
) -> Result<CellEstimate, EstimationError> {
    let n = delta.len() as f64;
    let ols = control_ols(x, treated, delta)?;
    let w: Vec<f64> = treated.iter().map(|d| if *d { 1.0 } else { 0.0 }).collect();
    let mean_w = w.iter().sum::<f64>() / n;
    let eta_t = w.iter().zip(delta).map(|(a, b)| a * b).sum::<f64>() / n / mean_w;
    let eta_c = w.iter().zip(&ols.fitted).map(|(a, b)| a * b).sum::<f64>() / n / mean_w;

    let m1 = weighted_col_means(x, &w);
    let inf_c2 = mat_vec(&ols.lin_rep, &m1);
    let influence = (0..delta.len())
        .map(|i| {
            let inf_t = (w[i] * delta[i] - w[i] * eta_t) / mean_w;
            let inf_c = (w[i] * ols.fitted[i] - w[i] * eta_c + inf_c2[i]) / mean_w;
            inf_t - inf_c
        })
        .collect();
    Ok(CellEstimate {
        att: eta_t - eta_c,
        influence: center(influence),
        trimmed: 0,
    })
}

/// Normalized (Hajek) inverse-probability-weighted estimator.
pub fn ipw(
    treated: &[bool],
    delta: &[f64],
    x: &DMatrix<f64>,
    ps: &PropensityModel,
    trim: f64,
) -> Result<CellEstimate, EstimationError> {
    let n = delta.len() as f64;
    let (w_t, w_c, trimmed) = ipw_weights(treated, ps, trim)?;
    let mean_wt = w_t.iter().sum::<f64>() / n;
    let mean_wc = w_c.iter().sum::<f64>() / n;
    let eta_t = w_t.iter().zip(delta).map(|(a, b)| a * b).sum::<f64>() / n / mean_wt;
    let eta_c = w_c.iter().zip(delta).map(|(a, b)| a * b).sum::<f64>() / n / mean_wc;

    let pre_m2: Vec<f64> = w_c.iter().zip(delta).map(|(w, y)| w * (y - eta_c)).collect();
    let m2 = weighted_col_means(x, &pre_m2);
    let inf_c2 = mat_vec(&ps_lin_rep(x, treated, ps), &m2);
    let influence = (0..delta.len())
        .map(|i| {
            let inf_t = (w_t[i] * delta[i] - w_t[i] * eta_t) / mean_wt;
            let inf_c = (w_c[i] * delta[i] - w_c[i] * eta_c + inf_c2[i]) / mean_wc;
            inf_t - inf_c
        })
        .collect();
    Ok(CellEstimate {
        att: eta_t - eta_c,
        influence: center(influence),
        trimmed,
    })
}

/// Doubly-robust estimator: the normalized IPW contrast applied to
/// outcome-regression residuals.
pub fn doubly_robust(
    treated: &[bool],
    delta: &[f64],
    x: &DMatrix<f64>,
    ps: &PropensityModel,
    trim: f64,
) -> Result<CellEstimate, EstimationError> {
    let n = delta.len() as f64;
    let ols = control_ols(x, treated, delta)?;
    let (w_t, w_c, trimmed) = ipw_weights(treated, ps, trim)?;
    let resid: Vec<f64> = delta.iter().zip(&ols.fitted).map(|(y, m)| y - m).collect();
    let mean_wt = w_t.iter().sum::<f64>() / n;
    let mean_wc = w_c.iter().sum::<f64>() / n;
    let eta_t = w_t.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / n / mean_wt;
    let eta_c = w_c.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / n / mean_wc;

    let m1 = weighted_col_means(x, &w_t);
    let inf_t2 = mat_vec(&ols.lin_rep, &m1);
    let pre_m2: Vec<f64> = w_c.iter().zip(&resid).map(|(w, r)| w * (r - eta_c)).collect();
    let m2 = weighted_col_means(x, &pre_m2);
    let inf_c2 = mat_vec(&ps_lin_rep(x, treated, ps), &m2);
    let m3 = weighted_col_means(x, &w_c);
    let inf_c3 = mat_vec(&ols.lin_rep, &m3);

    let influence = (0..delta.len())
        .map(|i| {
            let inf_t = (w_t[i] * resid[i] - w_t[i] * eta_t - inf_t2[i]) / mean_wt;
            let inf_c = (w_c[i] * resid[i] - w_c[i] * eta_c + inf_c2[i] - inf_c3[i]) / mean_wc;
            inf_t - inf_c
        })
        .collect();
    Ok(CellEstimate {
        att: eta_t - eta_c,
        influence: center(influence),
        trimmed,
    })
}
