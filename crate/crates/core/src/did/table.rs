use rayon::prelude::*;
use serde::Serialize;

use super::{AttGtCell, CellKind, EstimationError, EstimatorSpec, GroupSample};
use crate::panel::{Group, PanelDataset, Period};

/// A (g, t) pair that could not be estimated.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfeasibleCell {
    pub g: Period,
    pub t: Period,
    pub reason: String,
    pub message: String,
}

impl InfeasibleCell {
    fn new(g: Period, t: Period, err: &EstimationError) -> Self {
        Self {
            g,
            t,
            reason: err.code().to_string(),
            message: err.to_string(),
        }
    }
}

/// Sample counts reported under every results table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Footer {
    pub units: usize,
    pub treated_units: usize,
    pub groups: usize,
}

/// Every ATT(g, t) for one outcome, in (g, t) order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttGtTable {
    pub outcome: String,
    pub spec: EstimatorSpec,
    pub periods: Vec<Period>,
    pub cells: Vec<AttGtCell>,
    pub infeasible: Vec<InfeasibleCell>,
    pub footer: Footer,
    #[serde(skip)]
    pub units: Vec<String>,
    #[serde(skip)]
    pub unit_groups: Vec<Group>,
}

impl AttGtTable {
    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn cell(&self, g: Period, t: Period) -> Option<&AttGtCell> {
        self.cells.iter().find(|c| c.g == g && c.t == t)
    }

    /// Number of units adopting in `g`.
    pub fn group_size(&self, g: Period) -> usize {
        self.unit_groups
            .iter()
            .filter(|x| **x == Group::At(g))
            .count()
    }

    /// Distinct adoption periods present in the panel, ascending.
    pub fn groups(&self) -> Vec<Period> {
        let mut gs: Vec<Period> = self.unit_groups.iter().filter_map(|g| g.period()).collect();
        gs.sort_unstable();
        gs.dedup();
        gs
    }

    pub fn last_period(&self) -> Period {
        *self.periods.last().expect("panel has periods")
    }

    /// Cells of the given kinds.
    pub fn cells_of(&self, kind: CellKind) -> impl Iterator<Item = &AttGtCell> {
        self.cells.iter().filter(move |c| c.kind == kind)
    }

    /// Multiplies every estimate and influence value by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        for cell in &mut out.cells {
            cell.estimate *= c;
            for v in &mut cell.influence {
                *v *= c;
            }
        }
        out
    }
}

/// Estimates every (g, t) cell for `outcome`. Cell-level failures are
/// recorded in `infeasible`; only an invalid spec or unknown outcome fails
/// the whole call.
///
/// Groups run in parallel on the current rayon pool; the result does not
/// depend on the number of workers.
pub fn att_gt_all(
    panel: &PanelDataset,
    spec: &EstimatorSpec,
    outcome: &str,
) -> Result<AttGtTable, EstimationError> {
    spec.validate()?;
    let values = panel
        .outcome(outcome)
        .ok_or_else(|| EstimationError::UnknownOutcome(outcome.to_string()))?;
    for c in &spec.covariates {
        if panel.covariate(c).is_none() {
            return Err(EstimationError::UnknownCovariate(c.clone()));
        }
    }
    let periods = panel.periods();
    let groups = panel.adoption_groups();

    let per_group: Vec<(Vec<AttGtCell>, Vec<InfeasibleCell>)> = groups
        .par_iter()
        .map(|&g| {
            let mut cells = Vec::new();
            let mut bad = Vec::new();
            match GroupSample::build(panel, g, spec) {
                Ok(sample) => {
                    for (ti, &t) in periods.iter().enumerate() {
                        match sample.cell(panel, values, ti, spec) {
                            Ok(c) => cells.push(c),
                            Err(e) => bad.push(InfeasibleCell::new(g, t, &e)),
                        }
                    }
                }
                Err(e) => bad.extend(periods.iter().map(|&t| InfeasibleCell::new(g, t, &e))),
            }
            (cells, bad)
        })
        .collect();

    let mut cells = Vec::new();
    let mut infeasible = Vec::new();
    for (c, b) in per_group {
        cells.extend(c);
        infeasible.extend(b);
    }
    Ok(AttGtTable {
        outcome: outcome.to_string(),
        spec: spec.clone(),
        periods: periods.to_vec(),
        cells,
        infeasible,
        footer: Footer {
            units: panel.n_units(),
            treated_units: panel.treated_count(),
            groups: groups.len(),
        },
        units: panel.units().to_vec(),
        unit_groups: panel.groups().to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::did::BasePeriod;
    use crate::panel::PanelColumns;

    fn three_period() -> PanelDataset {
        PanelDataset::new(PanelColumns {
            units: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            periods: vec![1, 2, 3],
            groups: vec![Group::Never, Group::Never, Group::At(2), Group::At(3)],
            outcomes: BTreeMap::from([(
                "y".to_string(),
                vec![
                    1.0, 2.0, 4.0, //
                    0.0, 1.0, 1.0, //
                    3.0, 5.0, 9.0, //
                    2.0, 2.5, 6.0,
                ],
            )]),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn enumeration_one_group() {
        let mut cols = three_period().into_columns();
        cols.groups[3] = Group::At(2);
        let p = PanelDataset::new(cols).unwrap();
        let table = att_gt_all(&p, &EstimatorSpec::unconditional(), "y").unwrap();
        let got: Vec<_> = table.cells.iter().map(|c| (c.g, c.t, c.kind)).collect();
        assert_eq!(
            got,
            vec![
                (2, 1, CellKind::Reference),
                (2, 2, CellKind::Post),
                (2, 3, CellKind::Post)
            ]
        );
        assert!(table.infeasible.is_empty());
        assert_eq!(
            table.footer,
            Footer {
                units: 4,
                treated_units: 2,
                groups: 1
            }
        );
    }

    #[test]
    fn varying_base_periods() {
        let table = att_gt_all(&three_period(), &EstimatorSpec::unconditional(), "y").unwrap();
        // g = 3: t = 1 has no earlier period, t = 2 is the reference.
        assert_eq!(table.infeasible.len(), 1);
        assert_eq!(table.infeasible[0].reason, "no_base_period");
        let post = table.cell(3, 3).unwrap();
        assert_eq!(post.base_period, 2);
        // treated d: 6 - 2.5; controls: (4-2, 1-1) -> mean 1
        assert!((post.estimate - 2.5).abs() < 1e-15);
        let c = table.cell(2, 3).unwrap();
        assert_eq!(c.base_period, 1);
        // treated c: 9 - 3; controls: (4-1, 1-0) -> mean 2
        assert!((c.estimate - 4.0).abs() < 1e-15);
    }

    #[test]
    fn universal_pre_cells_recombine_short_contrasts() {
        let mut cols = three_period().into_columns();
        cols.periods = vec![1, 2, 3];
        cols.groups = vec![Group::Never, Group::Never, Group::At(3), Group::At(3)];
        let p = PanelDataset::new(cols).unwrap();
        let spec = EstimatorSpec {
            base_period: BasePeriod::Universal,
            ..Default::default()
        };
        let table = att_gt_all(&p, &spec, "y").unwrap();
        let pre = table.cell(3, 1).unwrap();
        assert_eq!(pre.base_period, 2);
        // (Y1 - Y2) treated minus control
        let treated = ((3.0 - 5.0) + (2.0 - 2.5)) / 2.0;
        let control = ((1.0 - 2.0) + (0.0 - 1.0)) / 2.0;
        assert!((pre.estimate - (treated - control)).abs() < 1e-15);
        assert!(pre.influence.iter().sum::<f64>().abs() < 1e-12);
    }
}
