//! Group-time average treatment effects, ATT(g, t), against a never-treated
//! comparison group.

pub mod estimators;
mod propensity;
mod table;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{Group, PanelDataset, Period};

pub use propensity::{fit_propensity, PropensityModel, GRADIENT_TOLERANCE, MAX_ITERATIONS};
pub use table::{att_gt_all, AttGtTable, Footer, InfeasibleCell};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Unconditional,
    OutcomeRegression,
    Ipw,
    DoublyRobust,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasePeriod {
    /// Post cells use g-1; pre cells use the immediately preceding period.
    #[default]
    Varying,
    /// Every cell uses g-1.
    Universal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSpec {
    pub method: Method,
    pub covariates: Vec<String>,
    pub base_period: BasePeriod,
    /// Comparison units with fitted propensity at or above this are dropped.
    pub trim: f64,
    pub min_group_size: usize,
}

impl Default for EstimatorSpec {
    fn default() -> Self {
        Self {
            method: Method::Unconditional,
            covariates: Vec::new(),
            base_period: BasePeriod::Varying,
            trim: 0.999,
            min_group_size: 1,
        }
    }
}

impl EstimatorSpec {
    pub fn unconditional() -> Self {
        Self::default()
    }

    pub fn with_covariates(method: Method, covariates: &[&str]) -> Self {
        Self {
            method,
            covariates: covariates.iter().map(|s| s.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EstimationError> {
        let unconditional = self.method == Method::Unconditional;
        if unconditional != self.covariates.is_empty() {
            return Err(EstimationError::InvalidSpec(
                "covariates must be empty exactly when the method is unconditional".into(),
            ));
        }
        if !(self.trim > 0.0 && self.trim <= 1.0) {
            return Err(EstimationError::InvalidSpec("trim must lie in (0, 1]".into()));
        }
        if self.min_group_size == 0 {
            return Err(EstimationError::InvalidSpec("min_group_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("group has {n_treated} treated units, fewer than {required}")]
    InsufficientGroup { n_treated: usize, required: usize },
    #[error("no never-treated comparison units")]
    NoComparison,
    #[error("propensity model: complete or quasi-complete separation")]
    Separation,
    #[error("design matrix is numerically singular")]
    Collinear,
    #[error("every comparison unit exceeds the propensity trimming threshold")]
    Trimmed,
    #[error("propensity model did not converge")]
    NotConverged,
    #[error("no base period before {t} for group {g}")]
    NoBasePeriod { g: Period, t: Period },
    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),
    #[error("unknown covariate {0:?}")]
    UnknownCovariate(String),
    #[error("period {0} is not in the panel")]
    UnknownPeriod(Period),
    #[error("group {0} must be a period after the first")]
    InvalidGroup(Period),
    #[error("invalid estimator spec: {0}")]
    InvalidSpec(String),
}

impl EstimationError {
    /// Stable machine-readable code used in CSV/JSON reports.
    pub fn code(&self) -> &'static str {
        match self {
            Self::InsufficientGroup { .. } => "insufficient_group",
            Self::NoComparison => "no_comparison",
            Self::Separation => "separation",
            Self::Collinear => "collinear",
            Self::Trimmed => "trimmed",
            Self::NotConverged => "not_converged",
            Self::NoBasePeriod { .. } => "no_base_period",
            Self::UnknownOutcome(_) => "unknown_outcome",
            Self::UnknownCovariate(_) => "unknown_covariate",
            Self::UnknownPeriod(_) => "unknown_period",
            Self::InvalidGroup(_) => "invalid_group",
            Self::InvalidSpec(_) => "invalid_spec",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellKind {
    Post,
    /// Pre-treatment pseudo-ATT.
    Placebo,
    /// The t = g-1 cell: identically zero, kept to anchor event-study plots.
    Reference,
}

/// One estimated ATT(g, t).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttGtCell {
    pub g: Period,
    pub t: Period,
    pub base_period: Period,
    /// `t - g` measured in panel periods.
    pub event_time: i64,
    pub kind: CellKind,
    pub estimate: f64,
    /// Panel unit indices of the estimation sample (group g plus never-treated).
    #[serde(skip)]
    pub sample: Vec<usize>,
    /// Influence function over `sample`, centered.
    #[serde(skip)]
    pub influence: Vec<f64>,
    pub n_treated: usize,
    pub n_control: usize,
    pub trimmed: usize,
    pub warnings: Vec<String>,
}

impl AttGtCell {
    /// Influence function spread over all `n_units` panel units, rescaled so
    /// that `estimate - truth ≈ mean` over the whole panel.
    pub fn full_influence(&self, n_units: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_units];
        if self.sample.is_empty() {
            return out;
        }
        let scale = n_units as f64 / self.sample.len() as f64;
        for (&u, v) in self.sample.iter().zip(&self.influence) {
            out[u] = v * scale;
        }
        out
    }

    pub fn is_post(&self) -> bool {
        self.kind == CellKind::Post
    }
}

/// Estimation sample for one adoption group: group-g units plus never-treated
/// units, with a fitted propensity model when the method needs one.
pub(crate) struct GroupSample {
    pub g: Period,
    pub g_index: usize,
    pub sample: Vec<usize>,
    pub treated: Vec<bool>,
    pub design: Option<DMatrix<f64>>,
    pub propensity: Option<Result<PropensityModel, EstimationError>>,
    pub n_treated: usize,
    pub n_control: usize,
}

impl GroupSample {
    pub(crate) fn build(
        panel: &PanelDataset,
        g: Period,
        spec: &EstimatorSpec,
    ) -> Result<Self, EstimationError> {
        let g_index = panel
            .period_index(g)
            .filter(|i| *i >= 1)
            .ok_or(EstimationError::InvalidGroup(g))?;
        let mut sample = Vec::new();
        let mut treated = Vec::new();
        for (u, grp) in panel.groups().iter().enumerate() {
            match grp {
                Group::At(p) if *p == g => {
                    sample.push(u);
                    treated.push(true);
                }
                Group::Never => {
                    sample.push(u);
                    treated.push(false);
                }
                _ => {}
            }
        }
        let n_treated = treated.iter().filter(|d| **d).count();
        let n_control = sample.len() - n_treated;

        let design = if spec.method == Method::Unconditional {
            None
        } else {
            let cols = spec
                .covariates
                .iter()
                .map(|c| {
                    panel
                        .covariate(c)
                        .ok_or_else(|| EstimationError::UnknownCovariate(c.clone()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(DMatrix::from_fn(sample.len(), cols.len() + 1, |i, j| {
                if j == 0 {
                    1.0
                } else {
                    cols[j - 1][sample[i]]
                }
            }))
        };
        let needs_ps = matches!(spec.method, Method::Ipw | Method::DoublyRobust);
        let feasible = n_treated >= spec.min_group_size && n_treated > 0 && n_control > 0;
        let propensity = match (&design, needs_ps && feasible) {
            (Some(x), true) => Some(propensity::fit_design(x, &treated).and_then(|m| {
                if m.converged {
                    Ok(m)
                } else {
                    Err(EstimationError::NotConverged)
                }
            })),
            _ => None,
        };
        Ok(Self {
            g,
            g_index,
            sample,
            treated,
            design,
            propensity,
            n_treated,
            n_control,
        })
    }

    fn check_sizes(&self, spec: &EstimatorSpec) -> Result<(), EstimationError> {
        if self.n_treated < spec.min_group_size.max(1) {
            return Err(EstimationError::InsufficientGroup {
                n_treated: self.n_treated,
                required: spec.min_group_size.max(1),
            });
        }
        if self.n_control == 0 {
            return Err(EstimationError::NoComparison);
        }
        Ok(())
    }

    /// Runs the configured estimator on `Y[t_index] - Y[base_index]`.
    fn contrast(
        &self,
        values: &[f64],
        n_periods: usize,
        t_index: usize,
        base_index: usize,
        spec: &EstimatorSpec,
    ) -> Result<estimators::CellEstimate, EstimationError> {
        let delta: Vec<f64> = self
            .sample
            .iter()
            .map(|&u| values[u * n_periods + t_index] - values[u * n_periods + base_index])
            .collect();
        let ps = || match &self.propensity {
            Some(Ok(m)) => Ok(m),
            Some(Err(e)) => Err(e.clone()),
            None => Err(EstimationError::NotConverged),
        };
        match spec.method {
            Method::Unconditional => estimators::unconditional(&self.treated, &delta),
            Method::OutcomeRegression => estimators::outcome_regression(
                &self.treated,
                &delta,
                self.design.as_ref().unwrap(),
            ),
            Method::Ipw => estimators::ipw(
                &self.treated,
                &delta,
                self.design.as_ref().unwrap(),
                ps()?,
                spec.trim,
            ),
            Method::DoublyRobust => estimators::doubly_robust(
                &self.treated,
                &delta,
                self.design.as_ref().unwrap(),
                ps()?,
                spec.trim,
            ),
        }
    }

    /// Estimates the cell at period index `t_index`.
    pub(crate) fn cell(
        &self,
        panel: &PanelDataset,
        values: &[f64],
        t_index: usize,
        spec: &EstimatorSpec,
    ) -> Result<AttGtCell, EstimationError> {
        self.check_sizes(spec)?;
        let periods = panel.periods();
        let np = periods.len();
        let gi = self.g_index;
        let event_time = t_index as i64 - gi as i64;
        let mut warnings = Vec::new();
        if self.n_treated == 1 {
            warnings.push("single treated unit: influence-based variance is unreliable".into());
        }
        let mk = |kind, base: usize, est: estimators::CellEstimate, warnings: Vec<String>| {
            let mut warnings = warnings;
            if est.trimmed > 0 {
                warnings.push(format!("{} comparison units trimmed", est.trimmed));
            }
            AttGtCell {
                g: self.g,
                t: periods[t_index],
                base_period: periods[base],
                event_time,
                kind,
                estimate: est.att,
                sample: self.sample.clone(),
                influence: est.influence,
                n_treated: self.n_treated,
                n_control: self.n_control,
                trimmed: est.trimmed,
                warnings,
            }
        };

        if t_index >= gi {
            let est = self.contrast(values, np, t_index, gi - 1, spec)?;
            return Ok(mk(CellKind::Post, gi - 1, est, warnings));
        }
        if t_index + 1 == gi {
            let zero = estimators::CellEstimate {
                att: 0.0,
                influence: vec![0.0; self.sample.len()],
                trimmed: 0,
            };
            return Ok(mk(CellKind::Reference, t_index, zero, warnings));
        }
        match spec.base_period {
            BasePeriod::Varying => {
                if t_index == 0 {
                    return Err(EstimationError::NoBasePeriod {
                        g: self.g,
                        t: periods[t_index],
                    });
                }
                let est = self.contrast(values, np, t_index, t_index - 1, spec)?;
                Ok(mk(CellKind::Placebo, t_index - 1, est, warnings))
            }
            BasePeriod::Universal => {
                // Y_t - Y_{g-1} = -sum_{s=t+1}^{g-1} (Y_s - Y_{s-1})
                let mut att = 0.0;
                let mut influence = vec![0.0; self.sample.len()];
                let mut trimmed = 0;
                for s in t_index + 1..gi {
                    let short = self.contrast(values, np, s, s - 1, spec)?;
                    att -= short.att;
                    trimmed = trimmed.max(short.trimmed);
                    for (acc, v) in influence.iter_mut().zip(&short.influence) {
                        *acc -= v;
                    }
                }
                let est = estimators::CellEstimate {
                    att,
                    influence,
                    trimmed,
                };
                Ok(mk(CellKind::Placebo, gi - 1, est, warnings))
            }
        }
    }
}

/// Estimates a single ATT(g, t) cell for `outcome`.
pub fn att_gt(
    panel: &PanelDataset,
    outcome: &str,
    g: Period,
    t: Period,
    spec: &EstimatorSpec,
) -> Result<AttGtCell, EstimationError> {
    spec.validate()?;
    let values = panel
        .outcome(outcome)
        .ok_or_else(|| EstimationError::UnknownOutcome(outcome.to_string()))?;
    let t_index = panel.period_index(t).ok_or(EstimationError::UnknownPeriod(t))?;
    let group = GroupSample::build(panel, g, spec)?;
    group.cell(panel, values, t_index, spec)
}
