//! Multiplier bootstrap over per-unit influence functions.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use thiserror::Error;

use crate::aggregate::{AggregationKind, AggregationResult};
use crate::did::{AttGtTable, CellKind};
use crate::linalg::sym_pinv;
use crate::panel::Period;

pub const MIN_DRAWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Multiplier {
    #[default]
    Rademacher,
    Mammen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    #[default]
    Pointwise,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// Interquartile range of the draws divided by the standard normal IQR.
    #[default]
    Iqr,
    StdDev,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapSpec {
    pub draws: usize,
    pub multiplier: Multiplier,
    pub seed: u64,
    pub level: f64,
    pub band: Band,
    pub scale: Scale,
}

impl Default for BootstrapSpec {
    fn default() -> Self {
        Self {
            draws: 1000,
            multiplier: Multiplier::Rademacher,
            seed: 0,
            level: 0.90,
            band: Band::Pointwise,
            scale: Scale::Iqr,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("{0} bootstrap draws requested; at least {MIN_DRAWS} are required")]
    TooFewDraws(usize),
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),
    #[error("influence vectors have inconsistent lengths")]
    RaggedInfluence,
    #[error("cluster labels do not cover every unit")]
    ClusterMismatch,
    #[error("no pre-treatment placebo cells to test")]
    NoPlaceboCells,
}

/// What a bootstrapped target measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TargetLabel {
    Cell { g: Period, t: Period },
    EventTime { e: i64 },
    Group { g: Period },
    Overall,
}

/// Estimates plus full-panel influence vectors, one per target.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub labels: Vec<TargetLabel>,
    pub estimates: Vec<f64>,
    pub influence: Vec<Vec<f64>>,
    pub placebo: Vec<bool>,
    pub reference: Vec<bool>,
}

impl Targets {
    pub fn from_table(table: &AttGtTable) -> Self {
        let n = table.n_units();
        Self {
            labels: table
                .cells
                .iter()
                .map(|c| TargetLabel::Cell { g: c.g, t: c.t })
                .collect(),
            estimates: table.cells.iter().map(|c| c.estimate).collect(),
            influence: table.cells.iter().map(|c| c.full_influence(n)).collect(),
            placebo: table.cells.iter().map(|c| c.kind != CellKind::Post).collect(),
            reference: table
                .cells
                .iter()
                .map(|c| c.kind == CellKind::Reference)
                .collect(),
        }
    }

    pub fn from_aggregation(agg: &AggregationResult) -> Self {
        let label = |idx: Option<i64>| match (agg.kind, idx) {
            (AggregationKind::EventStudy, Some(e)) => TargetLabel::EventTime { e },
            (AggregationKind::Group, Some(g)) => TargetLabel::Group { g },
            _ => TargetLabel::Overall,
        };
        Self {
            labels: agg.points.iter().map(|p| label(p.index)).collect(),
            estimates: agg.points.iter().map(|p| p.estimate).collect(),
            influence: agg.points.iter().map(|p| p.influence.clone()).collect(),
            placebo: agg.points.iter().map(|p| p.placebo).collect(),
            reference: agg.points.iter().map(|p| p.reference).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointInference {
    pub label: TargetLabel,
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
    pub placebo: bool,
    pub reference: bool,
    /// Two-sided normal p-value of estimate / se (1 when se is zero).
    pub p_value: f64,
}

impl PointInference {
    /// `***` at 1%, `**` at 5%, `*` at 10%.
    pub fn stars(&self) -> &'static str {
        match self.p_value {
            p if p < 0.01 => "***",
            p if p < 0.05 => "**",
            p if p < 0.10 => "*",
            _ => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pretrend {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceResult {
    pub spec: BootstrapSpec,
    pub n_clusters: usize,
    pub points: Vec<PointInference>,
    /// Normal quantile used for pointwise bands.
    pub pointwise_critical_value: f64,
    /// Sup-t critical value; present when uniform bands were requested.
    pub uniform_critical_value: Option<f64>,
    pub pretrend: Option<Pretrend>,
    pub warnings: Vec<String>,
    /// Bootstrap covariance of the targets, in target order.
    #[serde(skip)]
    pub covariance: DMatrix<f64>,
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid normal")
}

/// Fills `out` with one multiplier per cluster for bootstrap draw `draw`.
/// Each draw owns an independent ChaCha stream, so the values do not depend
/// on which worker computes them.
fn multipliers(seed: u64, draw: usize, kind: Multiplier, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(draw as u64);
    let sqrt5 = 5f64.sqrt();
    let (low, high) = (-(sqrt5 - 1.0) / 2.0, (sqrt5 + 1.0) / 2.0);
    let p_low = (sqrt5 + 1.0) / (2.0 * sqrt5);
    for v in out.iter_mut() {
        *v = match kind {
            Multiplier::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Multiplier::Mammen => {
                if rng.random::<f64>() < p_low {
                    low
                } else {
                    high
                }
            }
        };
    }
}

/// Maps arbitrary cluster labels to dense ids `0..C` in first-seen order.
pub fn dense_clusters<T: Eq + std::hash::Hash + Clone>(labels: &[T]) -> Vec<usize> {
    let mut seen = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = seen.len();
            *seen.entry(l.clone()).or_insert(next)
        })
        .collect()
}

/// Multiplier bootstrap of `targets`. `clusters[i]` is the dense cluster id
/// of unit `i`; `None` clusters at the unit level.
///
/// Draw b of target k is `(1/N) Σ_c ξ_bc Σ_{i∈c} ψ_ik`.
pub fn multiplier_bootstrap(
    targets: &Targets,
    clusters: Option<&[usize]>,
    spec: &BootstrapSpec,
) -> Result<InferenceResult, InferenceError> {
    if spec.draws < MIN_DRAWS {
        return Err(InferenceError::TooFewDraws(spec.draws));
    }
    if !(spec.level > 0.0 && spec.level < 1.0) {
        return Err(InferenceError::InvalidLevel(spec.level));
    }
    let k = targets.len();
    let n = targets.influence.first().map_or(0, Vec::len);
    if targets.influence.iter().any(|v| v.len() != n)
        || targets.labels.len() != k
        || targets.placebo.len() != k
        || targets.reference.len() != k
    {
        return Err(InferenceError::RaggedInfluence);
    }
    let owned;
    let clusters = match clusters {
        Some(c) if c.len() != n => return Err(InferenceError::ClusterMismatch),
        Some(c) => c,
        None => {
            owned = (0..n).collect::<Vec<_>>();
            &owned
        }
    };
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);

    // cluster sums, cluster-major
    let mut sums = vec![0.0; n_clusters * k];
    for (i, &c) in clusters.iter().enumerate() {
        for (j, psi) in targets.influence.iter().enumerate() {
            sums[c * k + j] += psi[i];
        }
    }
    let nf = n.max(1) as f64;
    let draws: Vec<Vec<f64>> = (0..spec.draws)
        .into_par_iter()
        .map(|b| {
            let mut xi = vec![0.0; n_clusters];
            multipliers(spec.seed, b, spec.multiplier, &mut xi);
            let mut theta = vec![0.0; k];
            for (c, x) in xi.iter().enumerate() {
                for (t, s) in theta.iter_mut().zip(&sums[c * k..(c + 1) * k]) {
                    *t += x * s;
                }
            }
            theta.iter_mut().for_each(|t| *t /= nf);
            theta
        })
        .collect();

    let normal = standard_normal();
    let iqr_unit = normal.inverse_cdf(0.75) - normal.inverse_cdf(0.25);
    let se: Vec<f64> = (0..k)
        .map(|j| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            match spec.scale {
                Scale::Iqr => {
                    col.sort_by(f64::total_cmp);
                    (quantile(&col, 0.75) - quantile(&col, 0.25)) / iqr_unit
                }
                Scale::StdDev => {
                    let m = col.iter().sum::<f64>() / col.len() as f64;
                    (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (col.len() - 1) as f64)
                        .sqrt()
                }
            }
        })
        .collect();

    let z = normal.inverse_cdf((1.0 + spec.level) / 2.0);
    let mut warnings = Vec::new();
    if targets.influence.iter().all(|v| v.iter().all(|x| *x == 0.0)) {
        warnings.push("degenerate influence: every value is zero, bands have zero width".into());
    }
    let uniform = match spec.band {
        Band::Pointwise => None,
        Band::Uniform => {
            let live: Vec<usize> = (0..k).filter(|&j| se[j] > 0.0).collect();
            if live.is_empty() {
                Some(z)
            } else {
                let mut maxima: Vec<f64> = draws
                    .iter()
                    .map(|d| live.iter().map(|&j| (d[j] / se[j]).abs()).fold(0.0, f64::max))
                    .collect();
                maxima.sort_by(f64::total_cmp);
                Some(quantile(&maxima, spec.level).max(z))
            }
        }
    };
    let crit = uniform.unwrap_or(z);

    let points = (0..k)
        .map(|j| {
            let est = targets.estimates[j];
            let p_value = if se[j] > 0.0 {
                2.0 * (1.0 - normal.cdf((est / se[j]).abs()))
            } else {
                1.0
            };
            PointInference {
                label: targets.labels[j],
                estimate: est,
                se: se[j],
                lo: est - crit * se[j],
                hi: est + crit * se[j],
                placebo: targets.placebo[j],
                reference: targets.reference[j],
                p_value,
            }
        })
        .collect();

    let b = draws.len() as f64;
    let means: Vec<f64> = (0..k)
        .map(|j| draws.iter().map(|d| d[j]).sum::<f64>() / b)
        .collect();
    let covariance = DMatrix::from_fn(k, k, |r, c| {
        draws
            .iter()
            .map(|d| (d[r] - means[r]) * (d[c] - means[c]))
            .sum::<f64>()
            / (b - 1.0)
    });

    Ok(InferenceResult {
        spec: spec.clone(),
        n_clusters,
        points,
        pointwise_critical_value: z,
        uniform_critical_value: uniform,
        pretrend: None,
        warnings,
        covariance,
    })
}

/// Joint Wald test that every pre-treatment placebo cell of `table` is zero,
/// using the bootstrap covariance in `result` (which must have been computed
/// on [`Targets::from_table`] of the same table). Reference cells are
/// excluded; a rank-deficient covariance uses its pseudo-inverse and rank as
/// degrees of freedom.
pub fn pretrend_test(table: &AttGtTable, result: &InferenceResult) -> Result<Pretrend, InferenceError> {
    let idx: Vec<usize> = result
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.placebo && !p.reference)
        .filter(|(_, p)| match p.label {
            TargetLabel::Cell { g, t } => table
                .cell(g, t)
                .is_some_and(|c| c.kind == CellKind::Placebo),
            _ => false,
        })
        .map(|(i, _)| i)
        .collect();
    if idx.is_empty() {
        return Err(InferenceError::NoPlaceboCells);
    }
    let theta = DVector::from_iterator(idx.len(), idx.iter().map(|&i| result.points[i].estimate));
    if theta.iter().all(|v| *v == 0.0) {
        return Ok(Pretrend {
            statistic: 0.0,
            dof: idx.len(),
            p_value: 1.0,
        });
    }
    let sigma = DMatrix::from_fn(idx.len(), idx.len(), |r, c| result.covariance[(idx[r], idx[c])]);
    let (pinv, rank) = sym_pinv(&sigma);
    if rank == 0 {
        return Ok(Pretrend {
            statistic: f64::INFINITY,
            dof: 0,
            p_value: 0.0,
        });
    }
    let statistic = (theta.transpose() * pinv * &theta)[(0, 0)];
    let chi2 = ChiSquared::new(rank as f64).expect("positive dof");
    Ok(Pretrend {
        statistic,
        dof: rank,
        p_value: 1.0 - chi2.cdf(statistic),
    })
}
