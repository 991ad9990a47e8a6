//! Event-study, group and overall summaries of an [`AttGtTable`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::did::{AttGtCell, AttGtTable, CellKind};
use crate::panel::{Group, Period};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("table has no feasible post-treatment cells")]
    EmptyTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationKind {
    EventStudy,
    Group,
    Overall,
}

impl AggregationKind {
    pub fn label(self) -> &'static str {
        match self {
            Self::EventStudy => "event",
            Self::Group => "group",
            Self::Overall => "overall",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellWeight {
    pub g: Period,
    pub t: Period,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregatePoint {
    /// Event time for event-study points, adoption period for group points,
    /// `None` for the overall summary.
    pub index: Option<i64>,
    pub estimate: f64,
    /// Weight given to each contributing group.
    pub group_weights: BTreeMap<Period, f64>,
    /// Weight given to each underlying cell; the estimate is exactly their
    /// weighted sum.
    pub cell_weights: Vec<CellWeight>,
    pub placebo: bool,
    /// The event-time -1 anchor, identically zero.
    pub reference: bool,
    /// Influence over all panel units, including the group-share
    /// estimation term.
    #[serde(skip)]
    pub influence: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregationResult {
    pub kind: AggregationKind,
    pub points: Vec<AggregatePoint>,
}

/// Weighted combination of `k` estimates with weights proportional to the
/// estimated shares `n_{g_k} / N`, returning estimate, normalized weights and
/// full-panel influence (share-estimation term included).
fn share_weighted(
    estimates: &[f64],
    influences: &[Vec<f64>],
    groups: &[Period],
    unit_groups: &[Group],
) -> (f64, Vec<f64>, Vec<f64>) {
    let n = unit_groups.len();
    let nf = n as f64;
    let sizes: Vec<f64> = groups
        .iter()
        .map(|g| unit_groups.iter().filter(|x| **x == Group::At(*g)).count() as f64)
        .collect();
    let pg: Vec<f64> = sizes.iter().map(|s| s / nf).collect();
    let total: f64 = sizes.iter().sum();
    let s: f64 = pg.iter().sum();
    let weights: Vec<f64> = sizes.iter().map(|x| x / total).collect();
    let estimate = weights.iter().zip(estimates).map(|(w, a)| w * a).sum();

    let mut influence = vec![0.0; n];
    for (w, psi) in weights.iter().zip(influences) {
        for (acc, v) in influence.iter_mut().zip(psi) {
            *acc += w * v;
        }
    }
    for (i, acc) in influence.iter_mut().enumerate() {
        let member: Vec<f64> = groups
            .iter()
            .map(|g| if unit_groups[i] == Group::At(*g) { 1.0 } else { 0.0 })
            .collect();
        let dev_sum: f64 = member.iter().zip(&pg).map(|(d, p)| d - p).sum();
        for k in 0..groups.len() {
            let wif = (member[k] - pg[k]) / s - dev_sum * pg[k] / (s * s);
            *acc += wif * estimates[k];
        }
    }
    (estimate, weights, influence)
}

fn require_post(table: &AttGtTable) -> Result<(), AggregationError> {
    if table.cells_of(CellKind::Post).next().is_none() {
        return Err(AggregationError::EmptyTable);
    }
    Ok(())
}

/// θ_es(e) for every event time with at least one estimated cell, including
/// placebo event times and the e = -1 reference.
pub fn event_study(table: &AttGtTable) -> Result<AggregationResult, AggregationError> {
    require_post(table)?;
    let n = table.n_units();
    let mut by_e: BTreeMap<i64, Vec<&AttGtCell>> = BTreeMap::new();
    for c in &table.cells {
        by_e.entry(c.event_time).or_default().push(c);
    }
    let points = by_e
        .into_iter()
        .map(|(e, cells)| {
            let estimates: Vec<f64> = cells.iter().map(|c| c.estimate).collect();
            let influences: Vec<Vec<f64>> = cells.iter().map(|c| c.full_influence(n)).collect();
            let groups: Vec<Period> = cells.iter().map(|c| c.g).collect();
            let (estimate, weights, influence) =
                share_weighted(&estimates, &influences, &groups, &table.unit_groups);
            AggregatePoint {
                index: Some(e),
                estimate,
                group_weights: groups.iter().copied().zip(weights.iter().copied()).collect(),
                cell_weights: cells
                    .iter()
                    .zip(&weights)
                    .map(|(c, &weight)| CellWeight {
                        g: c.g,
                        t: c.t,
                        weight,
                    })
                    .collect(),
                placebo: e < 0,
                reference: cells.iter().all(|c| c.kind == CellKind::Reference),
                influence,
            }
        })
        .collect();
    Ok(AggregationResult {
        kind: AggregationKind::EventStudy,
        points,
    })
}

/// θ_sel(g) for one group: plain mean of its estimated post cells.
fn group_point(table: &AttGtTable, g: Period) -> Option<AggregatePoint> {
    let cells: Vec<&AttGtCell> = table
        .cells_of(CellKind::Post)
        .filter(|c| c.g == g)
        .collect();
    if cells.is_empty() {
        return None;
    }
    let n = table.n_units();
    let w = 1.0 / cells.len() as f64;
    let estimate = cells.iter().map(|c| c.estimate).sum::<f64>() * w;
    let mut influence = vec![0.0; n];
    for c in &cells {
        for (acc, v) in influence.iter_mut().zip(c.full_influence(n)) {
            *acc += w * v;
        }
    }
    Some(AggregatePoint {
        index: Some(g),
        estimate,
        group_weights: BTreeMap::from([(g, 1.0)]),
        cell_weights: cells
            .iter()
            .map(|c| CellWeight {
                g: c.g,
                t: c.t,
                weight: w,
            })
            .collect(),
        placebo: false,
        reference: false,
        influence,
    })
}

/// θ_sel(g) for every adoption group with at least one estimated post cell.
pub fn group_effects(table: &AttGtTable) -> Result<AggregationResult, AggregationError> {
    require_post(table)?;
    let points = table
        .groups()
        .into_iter()
        .filter_map(|g| group_point(table, g))
        .collect();
    Ok(AggregationResult {
        kind: AggregationKind::Group,
        points,
    })
}

/// θ_sel^O: group effects averaged with the groups' sample shares.
pub fn overall(table: &AttGtTable) -> Result<AggregationResult, AggregationError> {
    let groups = group_effects(table)?.points;
    let estimates: Vec<f64> = groups.iter().map(|p| p.estimate).collect();
    let influences: Vec<Vec<f64>> = groups.iter().map(|p| p.influence.clone()).collect();
    let ids: Vec<Period> = groups.iter().map(|p| p.index.unwrap()).collect();
    let (estimate, weights, influence) =
        share_weighted(&estimates, &influences, &ids, &table.unit_groups);
    let mut cell_weights = Vec::new();
    for (p, w) in groups.iter().zip(&weights) {
        cell_weights.extend(p.cell_weights.iter().map(|c| CellWeight {
            weight: c.weight * w,
            ..*c
        }));
    }
    Ok(AggregationResult {
        kind: AggregationKind::Overall,
        points: vec![AggregatePoint {
            index: None,
            estimate,
            group_weights: ids.into_iter().zip(weights).collect(),
            cell_weights,
            placebo: false,
            reference: false,
            influence,
        }],
    })
}

pub fn aggregate(
    table: &AttGtTable,
    kind: AggregationKind,
) -> Result<AggregationResult, AggregationError> {
    match kind {
        AggregationKind::EventStudy => event_study(table),
        AggregationKind::Group => group_effects(table),
        AggregationKind::Overall => overall(table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::did::{EstimatorSpec, Footer};

    /// Table with hand-set post cells `(g, t, estimate)`; every cell's
    /// influence is zero so only the share term contributes.
    fn table(groups: &[(Period, usize)], never: usize, cells: &[(Period, Period, f64)]) -> AttGtTable {
        let mut unit_groups = vec![Group::Never; never];
        for (g, n) in groups {
            unit_groups.extend(std::iter::repeat_n(Group::At(*g), *n));
        }
        let periods: Vec<Period> = (1..=10).collect();
        let n = unit_groups.len();
        AttGtTable {
            outcome: "y".into(),
            spec: EstimatorSpec::default(),
            periods,
            cells: cells
                .iter()
                .map(|&(g, t, estimate)| AttGtCell {
                    g,
                    t,
                    base_period: g - 1,
                    event_time: t - g,
                    kind: if t >= g { CellKind::Post } else { CellKind::Placebo },
                    estimate,
                    sample: (0..n).collect(),
                    influence: vec![0.0; n],
                    n_treated: 0,
                    n_control: 0,
                    trimmed: 0,
                    warnings: vec![],
                })
                .collect(),
            infeasible: vec![],
            footer: Footer {
                units: n,
                treated_units: 0,
                groups: groups.len(),
            },
            units: (0..n).map(|i| i.to_string()).collect(),
            unit_groups,
        }
    }

    #[test]
    fn hand_weighted_event_time() {
        let t = table(&[(3, 1), (4, 1), (5, 2)], 4, &[(3, 3, 0.1), (4, 4, 0.2), (5, 5, 0.4)]);
        let es = event_study(&t).unwrap();
        assert_eq!(es.points.len(), 1);
        assert!((es.points[0].estimate - 0.275).abs() < 1e-15);
    }

    #[test]
    fn shares_thirty_seventy() {
        let t = table(&[(3, 30), (4, 70)], 10, &[(3, 3, 1.0), (4, 4, 2.0)]);
        let p = &event_study(&t).unwrap().points[0];
        assert!((p.group_weights[&3] - 0.3).abs() < 1e-15);
        assert!((p.group_weights[&4] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn group_and_overall_hand_values() {
        let t = table(&[(9, 3), (10, 1)], 5, &[(9, 9, 0.02), (9, 10, 0.02), (10, 10, 0.06)]);
        let g = group_effects(&t).unwrap();
        assert_eq!(g.points.len(), 2);
        assert!((g.points[1].estimate - 0.06).abs() < 1e-15);
        let o = overall(&t).unwrap();
        assert!((o.points[0].estimate - 0.03).abs() < 1e-15);
        let rebuilt: f64 = o.points[0]
            .cell_weights
            .iter()
            .map(|w| w.weight * t.cell(w.g, w.t).unwrap().estimate)
            .sum();
        assert!((rebuilt - 0.03).abs() < 1e-15);
    }

    #[test]
    fn share_term_is_centered() {
        let t = table(&[(3, 2), (4, 5)], 3, &[(3, 3, 0.5), (4, 4, -1.0)]);
        let o = overall(&t).unwrap();
        let mean: f64 = o.points[0].influence.iter().sum::<f64>() / 10.0;
        assert!(mean.abs() < 1e-14);
    }

    #[test]
    fn empty_table() {
        let t = table(&[(3, 2)], 3, &[(3, 1, 0.5)]);
        assert_eq!(overall(&t), Err(AggregationError::EmptyTable));
    }
}
