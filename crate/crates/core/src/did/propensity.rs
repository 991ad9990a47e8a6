use nalgebra::{DMatrix, DVector};

use super::EstimationError;
use crate::linalg::{spd_inverse, sym_rcond, weighted_gram};

pub const GRADIENT_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 50;
const RCOND_FLOOR: f64 = 1e-12;
// Wider than the gradient tolerance allows for a converged fit, so a
// separated sample cannot pass as converged.
const SEPARATION_EPS: f64 = 1e-7;

/// Logistic propensity model `P(G = g | X)` fitted by IRLS.
#[derive(Debug, Clone)]
pub struct PropensityModel {
    /// Intercept first, then one coefficient per covariate column.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Sup-norm of the log-likelihood score at the returned coefficients.
    pub gradient_norm: f64,
    pub fitted: Vec<f64>,
    /// `(X'WX / n)^{-1}` at the solution, design including the intercept.
    pub(crate) scaled_hessian_inv: DMatrix<f64>,
}

impl PropensityModel {
    pub fn predict(&self, covariates: &[f64]) -> f64 {
        let eta = self.coefficients[0]
            + covariates
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>();
        logistic(eta)
    }
}

pub(crate) fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Adds a leading column of ones.
pub(crate) fn with_intercept(covariates: &DMatrix<f64>) -> DMatrix<f64> {
    let n = covariates.nrows();
    let mut x = DMatrix::from_element(n, covariates.ncols() + 1, 1.0);
    x.view_mut((0, 1), (n, covariates.ncols())).copy_from(covariates);
    x
}

/// Maximum-likelihood logistic regression of `labels` on `covariates`
/// (an intercept is added), by Newton/IRLS iterations.
///
/// Stops when the score's sup-norm drops below 1e-8 (then takes one more
/// Newton step to polish), or after 50 iterations.
pub fn fit_propensity(
    covariates: &DMatrix<f64>,
    labels: &[bool],
) -> Result<PropensityModel, EstimationError> {
    fit_design(&with_intercept(covariates), labels)
}

pub(crate) fn fit_design(
    x: &DMatrix<f64>,
    labels: &[bool],
) -> Result<PropensityModel, EstimationError> {
    let n = x.nrows();
    let k = x.ncols();
    assert_eq!(labels.len(), n, "one label per row");
    let n1 = labels.iter().filter(|d| **d).count();
    if n1 == 0 || n1 == n {
        return Err(EstimationError::Separation);
    }
    if sym_rcond(&weighted_gram(x, &vec![1.0; n])) < RCOND_FLOOR {
        return Err(EstimationError::Collinear);
    }
    let y = DVector::from_iterator(n, labels.iter().map(|d| if *d { 1.0 } else { 0.0 }));

    let mut beta = DVector::zeros(k);
    let share = n1 as f64 / n as f64;
    beta[0] = (share / (1.0 - share)).ln();

    let mut polished = false;
    let mut last_norm = f64::INFINITY;
    for iteration in 0..=MAX_ITERATIONS {
        let p: DVector<f64> = (x * &beta).map(logistic);
        let grad = x.transpose() * (&y - &p);
        let gnorm = grad.amax();
        let extreme = p
            .iter()
            .any(|pi| *pi < SEPARATION_EPS || *pi > 1.0 - SEPARATION_EPS);
        let norm = beta.norm();
        // Fitted probabilities pinned at 0/1 while the coefficients keep
        // growing: the likelihood has no finite maximizer.
        if extreme && (norm > last_norm || gnorm <= GRADIENT_TOLERANCE) {
            return Err(EstimationError::Separation);
        }
        last_norm = norm;

        let w: Vec<f64> = p.iter().map(|pi| pi * (1.0 - pi)).collect();
        let h = weighted_gram(x, &w);
        if sym_rcond(&h) < RCOND_FLOOR {
            return Err(if extreme {
                EstimationError::Separation
            } else {
                EstimationError::Collinear
            });
        }
        let h_inv = spd_inverse(&h).ok_or(EstimationError::Collinear)?;
        if polished || iteration == MAX_ITERATIONS {
            return Ok(PropensityModel {
                coefficients: beta.iter().copied().collect(),
                converged: gnorm <= GRADIENT_TOLERANCE,
                iterations: iteration,
                gradient_norm: gnorm,
                fitted: p.iter().copied().collect(),
                scaled_hessian_inv: h_inv * n as f64,
            });
        }
        polished = gnorm <= GRADIENT_TOLERANCE;
        beta += h_inv * grad;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(EstimationError::Separation);
        }
    }
    unreachable!("loop returns on its last iteration")
}
