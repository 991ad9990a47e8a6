//! Balanced unit-by-period panel model and the data-construction steps that
//! feed the estimator: validation, MCA aggregation, sample selection and log
//! transforms.

mod mca;
mod selection;
mod transform;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mca::{aggregate_mca, McaMapping};
pub use selection::{
    apply_sample_selection, AuditStep, PopulationBasis, PopulationCap, RegionRule, SelectionAudit,
    SelectionOutcome, SelectionRules,
};
pub use transform::log_transform;
pub use validate::{validate_panel, DropReason, DroppedUnit, RawRecord, ValidatedPanel};

/// Calendar period label (usually a year).
pub type Period = i64;

/// First-adoption period of a unit. Treatment is irreversible, so a single
/// adoption period fully describes a unit's treatment path.
///
/// `At(_)` sorts before `Never`, so the minimum over a set of groups is the
/// earliest adoption when any member adopts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    At(Period),
    Never,
}

impl Group {
    pub fn is_treated(self) -> bool {
        matches!(self, Group::At(_))
    }

    pub fn period(self) -> Option<Period> {
        match self {
            Group::At(p) => Some(p),
            Group::Never => None,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::At(p) => write!(f, "{p}"),
            Group::Never => f.write_str("never"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PanelError {
    #[error("no records supplied")]
    EmptyInput,
    #[error("unit {unit} reported with conflicting groups {first} and {second}")]
    ConflictingGroup {
        unit: String,
        first: Group,
        second: Group,
    },
    #[error("unit {unit}: period {value} is not an integer")]
    NonIntegerPeriod { unit: String, value: f64 },
    #[error("unit {unit}, period {period}: duplicate rows with differing values")]
    DuplicateCell { unit: String, period: Period },
    #[error("no complete units remain after validation")]
    NoCompleteUnits,
    #[error("unit {0} has no MCA mapping")]
    UnmappedUnit(String),
    #[error("unit {unit} mapped to two MCAs ({first}, {second})")]
    AmbiguousMapping {
        unit: String,
        first: String,
        second: String,
    },
    #[error("unknown outcome {0:?}")]
    UnknownOutcome(String),
    #[error("outcome {outcome}: nonpositive value {value} at unit {unit}, period {period}")]
    NonpositiveValue {
        outcome: String,
        unit: String,
        period: Period,
        value: f64,
    },
    #[error("selection rule {0} needs a population column")]
    MissingPopulation(&'static str),
    #[error("selection rule {0} needs a region column")]
    MissingRegion(&'static str),
    #[error("baseline period {0} is not in the panel")]
    UnknownPeriod(Period),
    #[error("invalid panel: {0}")]
    Invalid(String),
}

/// A balanced panel: every unit has every outcome in every period.
///
/// Outcome and population columns are stored unit-major
/// (`values[unit * n_periods + period_index]`); covariates are one
/// time-invariant value per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    units: Vec<String>,
    periods: Vec<Period>,
    groups: Vec<Group>,
    outcomes: BTreeMap<String, Vec<f64>>,
    covariates: BTreeMap<String, Vec<f64>>,
    population: Option<Vec<f64>>,
    regions: Option<Vec<String>>,
}

/// Column-wise builder input for [`PanelDataset::new`].
#[derive(Debug, Clone, Default)]
pub struct PanelColumns {
    pub units: Vec<String>,
    pub periods: Vec<Period>,
    pub groups: Vec<Group>,
    pub outcomes: BTreeMap<String, Vec<f64>>,
    pub covariates: BTreeMap<String, Vec<f64>>,
    pub population: Option<Vec<f64>>,
    pub regions: Option<Vec<String>>,
}

impl PanelDataset {
    /// Builds a panel from dense columns, checking every structural invariant.
    pub fn new(cols: PanelColumns) -> Result<Self, PanelError> {
        let n = cols.units.len();
        let t = cols.periods.len();
        let bad = |msg: String| Err(PanelError::Invalid(msg));
        if cols.groups.len() != n {
            return bad(format!("{} groups for {} units", cols.groups.len(), n));
        }
        if cols.periods.windows(2).any(|w| w[0] >= w[1]) {
            return bad("periods must be strictly increasing".into());
        }
        let unique: BTreeSet<&String> = cols.units.iter().collect();
        if unique.len() != n {
            return bad("duplicate unit ids".into());
        }
        for (u, g) in cols.units.iter().zip(&cols.groups) {
            if let Group::At(p) = g {
                match cols.periods.iter().position(|x| x == p) {
                    Some(i) if i >= 1 => {}
                    _ => return bad(format!("unit {u}: group {p} outside periods 2..T")),
                }
            }
        }
        for (name, v) in &cols.outcomes {
            if v.len() != n * t {
                return bad(format!("outcome {name}: expected {} values", n * t));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return bad(format!("outcome {name}: non-finite value"));
            }
        }
        for (name, v) in &cols.covariates {
            if v.len() != n || v.iter().any(|x| !x.is_finite()) {
                return bad(format!("covariate {name}: expected {n} finite values"));
            }
        }
        if let Some(p) = &cols.population {
            if p.len() != n * t || p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return bad("population must be nonnegative and cover every cell".into());
            }
        }
        if let Some(r) = &cols.regions {
            if r.len() != n {
                return bad("one region per unit required".into());
            }
        }
        Ok(Self {
            units: cols.units,
            periods: cols.periods,
            groups: cols.groups,
            outcomes: cols.outcomes,
            covariates: cols.covariates,
            population: cols.population,
            regions: cols.regions,
        })
    }

    pub fn into_columns(self) -> PanelColumns {
        PanelColumns {
            units: self.units,
            periods: self.periods,
            groups: self.groups,
            outcomes: self.outcomes,
            covariates: self.covariates,
            population: self.population,
            regions: self.regions,
        }
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_periods(&self) -> usize {
        self.periods.len()
    }

    pub fn units(&self) -> &[String] {
        &self.units
    }

    pub fn periods(&self) -> &[Period] {
        &self.periods
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn regions(&self) -> Option<&[String]> {
        self.regions.as_deref()
    }

    pub fn outcome_names(&self) -> impl Iterator<Item = &str> {
        self.outcomes.keys().map(String::as_str)
    }

    pub fn covariate_names(&self) -> impl Iterator<Item = &str> {
        self.covariates.keys().map(String::as_str)
    }

    /// Position of a calendar period in `1..=T` terms, zero based.
    pub fn period_index(&self, p: Period) -> Option<usize> {
        self.periods.binary_search(&p).ok()
    }

    pub fn outcome(&self, name: &str) -> Option<&[f64]> {
        self.outcomes.get(name).map(Vec::as_slice)
    }

    /// Value of `name` for unit index `u` at period index `t`.
    pub fn value(&self, name: &str, u: usize, t: usize) -> Option<f64> {
        self.outcomes.get(name).map(|v| v[u * self.periods.len() + t])
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariates.get(name).map(Vec::as_slice)
    }

    pub fn population(&self) -> Option<&[f64]> {
        self.population.as_deref()
    }

    /// Distinct adoption periods, ascending (never-treated excluded).
    pub fn adoption_groups(&self) -> Vec<Period> {
        let set: BTreeSet<Period> = self.groups.iter().filter_map(|g| g.period()).collect();
        set.into_iter().collect()
    }

    pub fn treated_count(&self) -> usize {
        self.groups.iter().filter(|g| g.is_treated()).count()
    }

    /// Long-format view: `(unit id, period, group, value)` for one outcome.
    pub fn records<'a>(
        &'a self,
        outcome: &'a str,
    ) -> impl Iterator<Item = (&'a str, Period, Group, f64)> + 'a {
        let values = self.outcomes.get(outcome);
        let t = self.periods.len();
        self.units.iter().enumerate().flat_map(move |(u, id)| {
            self.periods.iter().enumerate().filter_map(move |(ti, p)| {
                values.map(|v| (id.as_str(), *p, self.groups[u], v[u * t + ti]))
            })
        })
    }

    /// Keeps the listed unit indices (in the given order).
    pub(crate) fn select_units(&self, keep: &[usize]) -> PanelDataset {
        let t = self.periods.len();
        let pick_cells = |v: &Vec<f64>| {
            keep.iter()
                .flat_map(|&u| v[u * t..(u + 1) * t].iter().copied())
                .collect::<Vec<_>>()
        };
        PanelDataset {
            units: keep.iter().map(|&u| self.units[u].clone()).collect(),
            periods: self.periods.clone(),
            groups: keep.iter().map(|&u| self.groups[u]).collect(),
            outcomes: self
                .outcomes
                .iter()
                .map(|(k, v)| (k.clone(), pick_cells(v)))
                .collect(),
            covariates: self
                .covariates
                .iter()
                .map(|(k, v)| (k.clone(), keep.iter().map(|&u| v[u]).collect()))
                .collect(),
            population: self.population.as_ref().map(pick_cells),
            regions: self
                .regions
                .as_ref()
                .map(|r| keep.iter().map(|&u| r[u].clone()).collect()),
        }
    }

    /// Keeps the listed period indices (ascending).
    pub(crate) fn select_periods(&self, keep: &[usize]) -> PanelDataset {
        let t = self.periods.len();
        let n = self.units.len();
        let pick = |v: &Vec<f64>| {
            (0..n)
                .flat_map(|u| keep.iter().map(move |&ti| v[u * t + ti]))
                .collect::<Vec<_>>()
        };
        PanelDataset {
            units: self.units.clone(),
            periods: keep.iter().map(|&i| self.periods[i]).collect(),
            groups: self.groups.clone(),
            outcomes: self.outcomes.iter().map(|(k, v)| (k.clone(), pick(v))).collect(),
            covariates: self.covariates.clone(),
            population: self.population.as_ref().map(pick),
            regions: self.regions.clone(),
        }
    }

    pub(crate) fn outcome_mut(&mut self, name: &str) -> Option<&mut Vec<f64>> {
        self.outcomes.get_mut(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> PanelDataset {
        let mut outcomes = BTreeMap::new();
        outcomes.insert("y".to_string(), vec![10.0, 11.0, 20.0, 23.0]);
        PanelDataset::new(PanelColumns {
            units: vec!["a".into(), "b".into()],
            periods: vec![1, 2],
            groups: vec![Group::Never, Group::At(2)],
            outcomes,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn group_ordering_puts_adoption_first() {
        assert!(Group::At(2005) < Group::Never);
        assert_eq!(
            [Group::At(2005), Group::At(2003), Group::Never].iter().min(),
            Some(&Group::At(2003))
        );
    }

    #[test]
    fn rejects_group_in_first_period() {
        let mut cols = tiny().into_columns();
        cols.groups[1] = Group::At(1);
        assert!(matches!(PanelDataset::new(cols), Err(PanelError::Invalid(_))));
    }

    #[test]
    fn records_view_is_long_format() {
        let p = tiny();
        let recs: Vec<_> = p.records("y").collect();
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[3], ("b", 2, Group::At(2), 23.0));
    }

    #[test]
    fn select_periods_keeps_layout() {
        let p = tiny().select_periods(&[1]);
        assert_eq!(p.periods(), &[2]);
        assert_eq!(p.outcome("y").unwrap(), &[11.0, 23.0]);
    }
}
