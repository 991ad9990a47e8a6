use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::{Group, PanelColumns, PanelDataset, PanelError, Period};

/// One input row: a unit observed in one period.
///
/// `None` values mark missing cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawRecord {
    pub unit: String,
    pub period: f64,
    pub group: Option<Group>,
    pub outcomes: BTreeMap<String, Option<f64>>,
    pub covariates: BTreeMap<String, Option<f64>>,
    pub population: Option<f64>,
    pub region: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    MissingPeriod { period: Period },
    MissingValue { period: Period, column: String },
    /// Adopts in or before the first sample period: no untreated baseline.
    AlwaysTreated { group: Period },
    /// Adopts after the last sample period.
    AdoptsAfterSample { group: Period },
    /// Adoption period falls in a gap of the period grid.
    AdoptionNotObserved { group: Period },
    MissingGroup,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedUnit {
    pub unit: String,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedPanel {
    pub panel: PanelDataset,
    pub dropped: Vec<DroppedUnit>,
}

struct UnitRows {
    group: Option<Group>,
    rows: BTreeMap<Period, RawRecord>,
}

/// Builds a balanced panel from long-format records.
///
/// Units with any missing cell are dropped whole and reported; contradictory
/// input (conflicting groups, duplicate cells with different values,
/// fractional periods) is an error.
pub fn validate_panel(records: &[RawRecord]) -> Result<ValidatedPanel, PanelError> {
    if records.is_empty() {
        return Err(PanelError::EmptyInput);
    }

    let mut outcome_names = BTreeSet::new();
    let mut covariate_names = BTreeSet::new();
    let mut has_population = false;
    let mut has_region = false;
    let mut all_periods = BTreeSet::new();
    let mut by_unit: BTreeMap<String, UnitRows> = BTreeMap::new();

    for rec in records {
        if !rec.period.is_finite() || rec.period.fract() != 0.0 || rec.period.abs() > 1e15 {
            return Err(PanelError::NonIntegerPeriod {
                unit: rec.unit.clone(),
                value: rec.period,
            });
        }
        let period = rec.period as Period;
        outcome_names.extend(rec.outcomes.keys().cloned());
        covariate_names.extend(rec.covariates.keys().cloned());
        has_population |= rec.population.is_some();
        has_region |= rec.region.is_some();
        all_periods.insert(period);

        let entry = by_unit.entry(rec.unit.clone()).or_insert_with(|| UnitRows {
            group: None,
            rows: BTreeMap::new(),
        });
        match (entry.group, rec.group) {
            (Some(a), Some(b)) if a != b => {
                return Err(PanelError::ConflictingGroup {
                    unit: rec.unit.clone(),
                    first: a,
                    second: b,
                })
            }
            (None, Some(b)) => entry.group = Some(b),
            _ => {}
        }
        if let Some(prev) = entry.rows.get(&period) {
            if !same_values(prev, rec) {
                return Err(PanelError::DuplicateCell {
                    unit: rec.unit.clone(),
                    period,
                });
            }
            continue;
        }
        entry.rows.insert(period, rec.clone());
    }

    let periods: Vec<Period> = all_periods.into_iter().collect();
    let first = periods[0];
    let last = *periods.last().unwrap();
    let t = periods.len();

    let mut cols = PanelColumns {
        periods: periods.clone(),
        outcomes: outcome_names.iter().map(|k| (k.clone(), Vec::new())).collect(),
        covariates: covariate_names.iter().map(|k| (k.clone(), Vec::new())).collect(),
        population: has_population.then(Vec::new),
        regions: has_region.then(Vec::new),
        ..Default::default()
    };
    let mut dropped = Vec::new();

    'units: for (unit, rows) in by_unit {
        let drop = |reason| DroppedUnit {
            unit: unit.clone(),
            reason,
        };
        let group = match rows.group {
            None => {
                dropped.push(drop(DropReason::MissingGroup));
                continue;
            }
            Some(g) => g,
        };
        if let Group::At(g) = group {
            let reason = if g <= first {
                Some(DropReason::AlwaysTreated { group: g })
            } else if g > last {
                Some(DropReason::AdoptsAfterSample { group: g })
            } else if periods.binary_search(&g).is_err() {
                Some(DropReason::AdoptionNotObserved { group: g })
            } else {
                None
            };
            if let Some(r) = reason {
                dropped.push(drop(r));
                continue;
            }
        }

        let mut outcome_vals: Vec<Vec<f64>> = vec![Vec::with_capacity(t); outcome_names.len()];
        let mut pop_vals = Vec::with_capacity(t);
        for &p in &periods {
            let Some(row) = rows.rows.get(&p) else {
                dropped.push(drop(DropReason::MissingPeriod { period: p }));
                continue 'units;
            };
            for (k, name) in outcome_names.iter().enumerate() {
                match row.outcomes.get(name).copied().flatten() {
                    Some(v) if v.is_finite() => outcome_vals[k].push(v),
                    _ => {
                        dropped.push(drop(DropReason::MissingValue {
                            period: p,
                            column: format!("outcome_{name}"),
                        }));
                        continue 'units;
                    }
                }
            }
            if has_population {
                match row.population {
                    Some(v) if v.is_finite() && v >= 0.0 => pop_vals.push(v),
                    _ => {
                        dropped.push(drop(DropReason::MissingValue {
                            period: p,
                            column: "population".into(),
                        }));
                        continue 'units;
                    }
                }
            }
        }

        // Baseline covariates are read from the first period.
        let base = &rows.rows[&first];
        let mut cov_vals = Vec::with_capacity(covariate_names.len());
        for name in &covariate_names {
            match base.covariates.get(name).copied().flatten() {
                Some(v) if v.is_finite() => cov_vals.push(v),
                _ => {
                    dropped.push(drop(DropReason::MissingValue {
                        period: first,
                        column: format!("cov_{name}"),
                    }));
                    continue 'units;
                }
            }
        }
        let region = if has_region {
            match rows.rows.values().find_map(|r| r.region.clone()) {
                Some(r) => Some(r),
                None => {
                    dropped.push(drop(DropReason::MissingValue {
                        period: first,
                        column: "region".into(),
                    }));
                    continue 'units;
                }
            }
        } else {
            None
        };

        cols.units.push(unit.clone());
        cols.groups.push(group);
        for (name, vals) in outcome_names.iter().zip(outcome_vals) {
            cols.outcomes.get_mut(name).unwrap().extend(vals);
        }
        for (name, v) in covariate_names.iter().zip(cov_vals) {
            cols.covariates.get_mut(name).unwrap().push(v);
        }
        if let Some(p) = cols.population.as_mut() {
            p.extend(pop_vals);
        }
        if let (Some(r), Some(v)) = (cols.regions.as_mut(), region) {
            r.push(v);
        }
    }

    if cols.units.is_empty() {
        return Err(PanelError::NoCompleteUnits);
    }
    Ok(ValidatedPanel {
        panel: PanelDataset::new(cols)?,
        dropped,
    })
}

fn same_values(a: &RawRecord, b: &RawRecord) -> bool {
    let eq = |x: &Option<f64>, y: &Option<f64>| match (x, y) {
        (Some(x), Some(y)) => x == y || (x.is_nan() && y.is_nan()),
        (None, None) => true,
        _ => false,
    };
    let maps_eq = |m: &BTreeMap<String, Option<f64>>, n: &BTreeMap<String, Option<f64>>| {
        m.len() == n.len() && m.iter().zip(n).all(|((k1, v1), (k2, v2))| k1 == k2 && eq(v1, v2))
    };
    maps_eq(&a.outcomes, &b.outcomes)
        && maps_eq(&a.covariates, &b.covariates)
        && eq(&a.population, &b.population)
        && a.region == b.region
}
