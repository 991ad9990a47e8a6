//! Synthetic panels with known group-time effects.

mod oracle;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{Group, PanelColumns, PanelDataset, Period};

pub use oracle::{brute_force_att, OracleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DgpError {
    #[error("group shares must be nonnegative and sum to 1 (got {0})")]
    InvalidShares(f64),
    #[error("invalid DGP: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupShare {
    pub period: Period,
    pub share: f64,
}

/// Which version of the covariates a model term is linear in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    /// The covariates written to the panel.
    #[default]
    Observed,
    /// The standard-normal draws behind them.
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// Observed covariates equal the latent draws.
    #[default]
    None,
    /// Four latent normals mapped through
    /// `exp(x1/2), 10 + x2/(1+exp(x1)), (0.6 + x1 x3/25)^3, (20 + x2 + x4)^2`
    /// and standardized. Models linear in one basis are misspecified in the
    /// other.
    KangSchafer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateSpec {
    pub dim: usize,
    pub transform: Transform,
    /// Outcome term `loadings · basis_i · t/T`.
    pub loadings: Vec<f64>,
    pub outcome_basis: Basis,
}

/// Logistic selection into treatment:
/// `P(ever treated | X) = logistic(logit(1 - never_share) + coefficients · basis)`.
/// Treated units are then split across adoption groups by their relative
/// shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionSpec {
    pub coefficients: Vec<f64>,
    #[serde(default)]
    pub basis: Basis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EffectSpec {
    Constant {
        value: f64,
    },
    /// `intercept + per_event · e + per_group · (g - first_period)`.
    Linear {
        intercept: f64,
        #[serde(default)]
        per_event: f64,
        #[serde(default)]
        per_group: f64,
    },
}

impl Default for EffectSpec {
    fn default() -> Self {
        EffectSpec::Constant { value: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    Normal { sd: f64 },
    /// Student-t rescaled to standard deviation `sd` (needs `dof > 2`).
    StudentT { sd: f64, dof: f64 },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Normal { sd: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationSpec {
    pub log_mean: f64,
    pub log_sd: f64,
    /// Per-period growth rate.
    pub growth: f64,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        Self {
            log_mean: 9.5,
            log_sd: 1.0,
            growth: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpSpec {
    pub n_units: usize,
    pub periods: usize,
    pub first_period: Period,
    pub outcome: String,
    pub groups: Vec<GroupShare>,
    pub never_share: f64,
    pub selection: Option<SelectionSpec>,
    pub unit_fe_scale: f64,
    /// Common trend `trend_slope · s + trend_curvature · s^2`, s = 1..T.
    pub trend_slope: f64,
    pub trend_curvature: f64,
    pub covariates: CovariateSpec,
    pub effect: EffectSpec,
    /// Extra slope per period for eventually-treated units, in every period.
    pub pretrend_slope: f64,
    pub noise: NoiseSpec,
    pub population: Option<PopulationSpec>,
    /// Number of regions to draw uniformly; none when absent.
    pub regions: Option<usize>,
    pub seed: u64,
}

impl Default for DgpSpec {
    fn default() -> Self {
        Self {
            n_units: 200,
            periods: 5,
            first_period: 1,
            outcome: "y".into(),
            groups: vec![GroupShare {
                period: 3,
                share: 0.5,
            }],
            never_share: 0.5,
            selection: None,
            unit_fe_scale: 1.0,
            trend_slope: 0.1,
            trend_curvature: 0.0,
            covariates: CovariateSpec::default(),
            effect: EffectSpec::default(),
            pretrend_slope: 0.0,
            noise: NoiseSpec::default(),
            population: None,
            regions: None,
            seed: 0,
        }
    }
}

/// True ATT(g, t) for every (g, t) of the DGP's groups.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truth {
    pub cells: BTreeMap<(Period, Period), f64>,
}

impl Truth {
    pub fn get(&self, g: Period, t: Period) -> Option<f64> {
        self.cells.get(&(g, t)).copied()
    }
}

impl DgpSpec {
    pub fn last_period(&self) -> Period {
        self.first_period + self.periods as Period - 1
    }

    pub fn validate(&self) -> Result<(), DgpError> {
        let bad = |m: &str| Err(DgpError::Invalid(m.to_string()));
        let total = self.never_share + self.groups.iter().map(|g| g.share).sum::<f64>();
        if self.never_share < 0.0
            || self.groups.iter().any(|g| !(g.share >= 0.0))
            || (total - 1.0).abs() > 1e-9
        {
            return Err(DgpError::InvalidShares(total));
        }
        if self.n_units == 0 || self.periods < 2 {
            return bad("need at least one unit and two periods");
        }
        for g in &self.groups {
            if g.period <= self.first_period || g.period > self.last_period() {
                return bad("group periods must lie after the first period and within the panel");
            }
        }
        let mut gs: Vec<Period> = self.groups.iter().map(|g| g.period).collect();
        gs.sort_unstable();
        gs.dedup();
        if gs.len() != self.groups.len() {
            return bad("duplicate group period");
        }
        let c = &self.covariates;
        if c.loadings.len() != c.dim && !(c.loadings.is_empty()) {
            return bad("covariate loadings must have one entry per dimension");
        }
        if c.transform == Transform::KangSchafer && c.dim != 4 {
            return bad("the Kang-Schafer transform needs dim = 4");
        }
        if let Some(s) = &self.selection {
            if s.coefficients.len() != c.dim {
                return bad("selection coefficients must have one entry per covariate");
            }
            if self.never_share <= 0.0 || self.never_share >= 1.0 {
                return bad("covariate selection needs 0 < never_share < 1");
            }
        }
        match self.noise {
            NoiseSpec::Normal { sd } if sd < 0.0 => return bad("noise sd must be nonnegative"),
            NoiseSpec::StudentT { sd, dof } if sd < 0.0 || dof <= 2.0 => {
                return bad("Student-t noise needs sd >= 0 and dof > 2")
            }
            _ => {}
        }
        if self.regions == Some(0) {
            return bad("regions must be positive");
        }
        if self.outcome.is_empty() {
            return bad("outcome name is empty");
        }
        Ok(())
    }

    /// τ(g, e) for e ≥ 0.
    pub fn effect(&self, g: Period, e: i64) -> f64 {
        match self.effect {
            EffectSpec::Constant { value } => value,
            EffectSpec::Linear {
                intercept,
                per_event,
                per_group,
            } => intercept + per_event * e as f64 + per_group * (g - self.first_period) as f64,
        }
    }

    /// Truth for every (g, t): τ(g, t-g) after adoption, 0 before.
    pub fn truth(&self) -> Truth {
        let mut cells = BTreeMap::new();
        for g in &self.groups {
            for t in self.first_period..=self.last_period() {
                let v = if t >= g.period {
                    self.effect(g.period, t - g.period)
                } else {
                    0.0
                };
                cells.insert((g.period, t), v);
            }
        }
        Truth { cells }
    }

    /// True θ_sel(g): mean of τ(g, e) over the group's post periods.
    pub fn group_truth(&self, g: Period) -> f64 {
        let last = self.last_period();
        let k = (last - g + 1) as f64;
        (0..=last - g).map(|e| self.effect(g, e)).sum::<f64>() / k
    }

    /// True θ_sel^O with weights equal to the groups' population shares.
    /// Only meaningful without covariate-dependent selection.
    pub fn overall_truth(&self) -> f64 {
        let total: f64 = self.groups.iter().map(|g| g.share).sum();
        self.groups
            .iter()
            .map(|g| g.share / total * self.group_truth(g.period))
            .sum()
    }

    /// True θ_es(e) with population-share weights over groups observed at e.
    pub fn event_truth(&self, e: i64) -> f64 {
        let last = self.last_period();
        let keep: Vec<&GroupShare> = self.groups.iter().filter(|g| g.period + e <= last).collect();
        let total: f64 = keep.iter().map(|g| g.share).sum();
        if e < 0 || total == 0.0 {
            return 0.0;
        }
        keep.iter()
            .map(|g| g.share / total * self.effect(g.period, e))
            .sum()
    }
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn kang_schafer(x: &[f64]) -> [f64; 4] {
    [
        (x[0] / 2.0).exp(),
        10.0 + x[1] / (1.0 + x[0].exp()),
        (0.6 + x[0] * x[2] / 25.0).powi(3),
        (20.0 + x[1] + x[3]).powi(2),
    ]
}

/// Standardizes each column of a unit-major `n × d` block to mean 0 and
/// unit sample standard deviation.
fn standardize(values: &mut [f64], n: usize, d: usize) {
    for j in 0..d {
        let m = (0..n).map(|i| values[i * d + j]).sum::<f64>() / n as f64;
        let v = (0..n).map(|i| (values[i * d + j] - m).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let s = if v > 0.0 { v.sqrt() } else { 1.0 };
        for i in 0..n {
            values[i * d + j] = (values[i * d + j] - m) / s;
        }
    }
}

/// Draws a panel from `spec` and returns it with the true ATT(g, t) table.
///
/// Outcome: `Y_it = α_i + λ(t) + β·X_i·t/T + 1{G_i ≤ t}·τ(G_i, t - G_i)
/// + pretrend_slope·s·1{G_i ≠ never} + ε_it`, with s the 0-based period index.
pub fn generate_panel(spec: &DgpSpec) -> Result<(PanelDataset, Truth), DgpError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_units;
    let t = spec.periods;
    let d = spec.covariates.dim;

    let latent: Vec<f64> = (0..n * d).map(|_| std_normal(&mut rng)).collect();
    let observed = match spec.covariates.transform {
        Transform::None => latent.clone(),
        Transform::KangSchafer => {
            let mut v: Vec<f64> = latent.chunks(d).flat_map(kang_schafer).collect();
            if n > 1 {
                standardize(&mut v, n, d);
            }
            v
        }
    };
    let basis = |b: Basis, i: usize| -> &[f64] {
        match b {
            Basis::Observed => &observed[i * d..(i + 1) * d],
            Basis::Latent => &latent[i * d..(i + 1) * d],
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let treated_total: f64 = spec.groups.iter().map(|g| g.share).sum();
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random();
        let group = match &spec.selection {
            None => {
                let mut acc = 0.0;
                spec.groups
                    .iter()
                    .find(|g| {
                        acc += g.share;
                        u < acc
                    })
                    .map_or(Group::Never, |g| Group::At(g.period))
            }
            Some(sel) => {
                let base = ((1.0 - spec.never_share) / spec.never_share).ln();
                let p = logistic(base + dot(&sel.coefficients, basis(sel.basis, i)));
                let v: f64 = rng.random();
                if u < p && treated_total > 0.0 {
                    let mut acc = 0.0;
                    spec.groups
                        .iter()
                        .find(|g| {
                            acc += g.share / treated_total;
                            v < acc
                        })
                        .or(spec.groups.last())
                        .map_or(Group::Never, |g| Group::At(g.period))
                } else {
                    Group::Never
                }
            }
        };
        groups.push(group);
    }

    let alpha: Vec<f64> = (0..n)
        .map(|_| spec.unit_fe_scale * std_normal(&mut rng))
        .collect();
    let population = spec.population.as_ref().map(|p| {
        let ln = LogNormal::new(p.log_mean, p.log_sd.max(0.0)).expect("valid lognormal");
        (0..n)
            .flat_map(|_| {
                let base: f64 = ln.sample(&mut rng).round().max(1.0);
                (0..t).map(move |s| (base * (1.0 + p.growth).powi(s as i32)).round())
            })
            .collect::<Vec<f64>>()
    });
    let regions = spec.regions.map(|k| {
        (0..n)
            .map(|_| format!("r{}", rng.random_range(1..=k)))
            .collect::<Vec<String>>()
    });

    let student = match spec.noise {
        NoiseSpec::StudentT { dof, .. } => Some(StudentT::new(dof).expect("dof > 2")),
        NoiseSpec::Normal { .. } => None,
    };
    let mut y = Vec::with_capacity(n * t);
    for i in 0..n {
        let cov = if spec.covariates.loadings.is_empty() {
            0.0
        } else {
            dot(&spec.covariates.loadings, basis(spec.covariates.outcome_basis, i))
        };
        for s in 0..t {
            let period = spec.first_period + s as Period;
            let step = (s + 1) as f64;
            let mut v = alpha[i]
                + spec.trend_slope * step
                + spec.trend_curvature * step * step
                + cov * step / t as f64;
            if let Group::At(g) = groups[i] {
                v += spec.pretrend_slope * s as f64;
                if period >= g {
                    v += spec.effect(g, period - g);
                }
            }
            v += match (&spec.noise, &student) {
                (NoiseSpec::Normal { sd }, _) => {
                    if *sd > 0.0 {
                        sd * std_normal(&mut rng)
                    } else {
                        0.0
                    }
                }
                (NoiseSpec::StudentT { sd, dof }, Some(st)) => {
                    if *sd > 0.0 {
                        sd * st.sample(&mut rng) * ((dof - 2.0) / dof).sqrt()
                    } else {
                        0.0
                    }
                }
                _ => unreachable!(),
            };
            y.push(v);
        }
    }

    let width = n.to_string().len().max(4);
    let cols = PanelColumns {
        units: (1..=n).map(|i| format!("u{i:0width$}")).collect(),
        periods: (0..t).map(|s| spec.first_period + s as Period).collect(),
        groups,
        outcomes: BTreeMap::from([(spec.outcome.clone(), y)]),
        covariates: (0..d)
            .map(|j| {
                (
                    format!("x{}", j + 1),
                    (0..n).map(|i| observed[i * d + j]).collect(),
                )
            })
            .collect(),
        population,
        regions,
    };
    let panel = PanelDataset::new(cols).map_err(|e| DgpError::Invalid(e.to_string()))?;
    Ok((panel, spec.truth()))
}
