use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Group, PanelDataset, PanelError, Period};

/// Population ceiling applied to never-treated units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScalarOrWord", into = "ScalarOrWord")]
pub enum PopulationCap {
    Fixed(f64),
    /// The largest baseline population among treated units.
    Auto,
}

/// Which period's population is compared against the cap.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "ScalarOrWord", into = "ScalarOrWord")]
pub enum PopulationBasis {
    /// First period that survives the `drop_periods` rule.
    #[default]
    FirstPeriod,
    Period(Period),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub enum RegionRule {
    Ids(BTreeSet<String>),
    /// Regions containing at least one treated unit.
    WithTreated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RegionRepr {
    Ids(BTreeSet<String>),
    Word(String),
}

impl TryFrom<RegionRepr> for RegionRule {
    type Error = String;
    fn try_from(v: RegionRepr) -> Result<Self, String> {
        match v {
            RegionRepr::Ids(ids) => Ok(Self::Ids(ids)),
            RegionRepr::Word(w) if w == "with_treated" => Ok(Self::WithTreated),
            RegionRepr::Word(w) => Err(format!("expected \"with_treated\" or a list, got {w:?}")),
        }
    }
}

impl From<RegionRule> for RegionRepr {
    fn from(r: RegionRule) -> Self {
        match r {
            RegionRule::Ids(ids) => RegionRepr::Ids(ids),
            RegionRule::WithTreated => RegionRepr::Word("with_treated".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ScalarOrWord {
    Num(f64),
    Word(String),
}

impl TryFrom<ScalarOrWord> for PopulationCap {
    type Error = String;
    fn try_from(v: ScalarOrWord) -> Result<Self, String> {
        match v {
            ScalarOrWord::Num(x) if x.is_finite() && x >= 0.0 => Ok(Self::Fixed(x)),
            ScalarOrWord::Word(w) if w.eq_ignore_ascii_case("auto") => Ok(Self::Auto),
            other => Err(format!("invalid population cap {other:?}")),
        }
    }
}

impl From<PopulationCap> for ScalarOrWord {
    fn from(c: PopulationCap) -> Self {
        match c {
            PopulationCap::Fixed(x) => ScalarOrWord::Num(x),
            PopulationCap::Auto => ScalarOrWord::Word("auto".into()),
        }
    }
}

impl TryFrom<ScalarOrWord> for PopulationBasis {
    type Error = String;
    fn try_from(v: ScalarOrWord) -> Result<Self, String> {
        match v {
            ScalarOrWord::Num(x) if x.fract() == 0.0 && x.abs() < 1e15 => {
                Ok(Self::Period(x as Period))
            }
            ScalarOrWord::Word(w) if w == "first" || w == "first_period" => Ok(Self::FirstPeriod),
            other => Err(format!("invalid population basis {other:?}")),
        }
    }
}

impl From<PopulationBasis> for ScalarOrWord {
    fn from(b: PopulationBasis) -> Self {
        match b {
            PopulationBasis::FirstPeriod => ScalarOrWord::Word("first_period".into()),
            PopulationBasis::Period(p) => ScalarOrWord::Num(p as f64),
        }
    }
}

/// Sample-selection filters, applied in a fixed order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionRules {
    /// Units with a partial version of the policy, removed up front.
    pub exclude_ids: BTreeSet<String>,
    pub population_cap: Option<PopulationCap>,
    pub population_basis: PopulationBasis,
    pub admissible_regions: Option<RegionRule>,
    pub require_positive: bool,
    /// Outcomes checked by `require_positive`; empty means every outcome.
    pub positivity_outcomes: Vec<String>,
    pub drop_periods: BTreeSet<Period>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditStep {
    pub rule: &'static str,
    pub dropped: usize,
    pub remaining: usize,
    pub units: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelectionAudit {
    pub initial: usize,
    pub steps: Vec<AuditStep>,
    pub resolved_population_cap: Option<f64>,
    pub resolved_regions: Option<Vec<String>>,
    pub empty: bool,
}

impl SelectionAudit {
    pub fn dropped(&self, rule: &str) -> Option<usize> {
        self.steps.iter().find(|s| s.rule == rule).map(|s| s.dropped)
    }

    /// Remaining unit counts after each step, starting with the input size.
    pub fn funnel(&self) -> Vec<usize> {
        std::iter::once(self.initial)
            .chain(self.steps.iter().map(|s| s.remaining))
            .collect()
    }

    pub fn is_noop(&self) -> bool {
        self.steps.iter().all(|s| s.dropped == 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub panel: PanelDataset,
    pub audit: SelectionAudit,
}

pub const RULE_EXCLUDE: &str = "exclude_partially_treated";
pub const RULE_POPULATION: &str = "population";
pub const RULE_REGION: &str = "region";
pub const RULE_POSITIVE: &str = "positive_outcome";
pub const RULE_PERIODS: &str = "drop_periods";

/// Applies the selection rules in order: partial-treatment exclusion,
/// population cap, admissible regions, strict positivity, period drops.
///
/// `Auto` caps and `WithTreated` regions are resolved against the treated
/// units that survive the whole pipeline, iterating to a fixed point, so a
/// second application drops nothing.
pub fn apply_sample_selection(
    panel: &PanelDataset,
    rules: &SelectionRules,
) -> Result<SelectionOutcome, PanelError> {
    let mut reference: BTreeSet<String> = treated_ids(panel);
    loop {
        let outcome = run_once(panel, rules, &reference)?;
        let survivors = treated_ids(&outcome.panel);
        if survivors == reference {
            return Ok(outcome);
        }
        reference = survivors;
    }
}

fn treated_ids(panel: &PanelDataset) -> BTreeSet<String> {
    panel
        .units()
        .iter()
        .zip(panel.groups())
        .filter(|(_, g)| g.is_treated())
        .map(|(u, _)| u.clone())
        .collect()
}

fn run_once(
    panel: &PanelDataset,
    rules: &SelectionRules,
    reference: &BTreeSet<String>,
) -> Result<SelectionOutcome, PanelError> {
    let t = panel.n_periods();
    let mut keep: Vec<usize> = (0..panel.n_units()).collect();
    let mut steps = Vec::new();
    let ids = panel.units();
    let groups = panel.groups();
    let in_reference = |u: usize| groups[u].is_treated() && reference.contains(&ids[u]);

    let mut step = |rule: &'static str, keep: &mut Vec<usize>, pred: &dyn Fn(usize) -> bool| {
        let (kept, gone): (Vec<usize>, Vec<usize>) = keep.iter().partition(|&&u| pred(u));
        steps.push(AuditStep {
            rule,
            dropped: gone.len(),
            remaining: kept.len(),
            units: gone.iter().map(|&u| ids[u].clone()).collect(),
        });
        *keep = kept;
    };

    step(RULE_EXCLUDE, &mut keep, &|u| !rules.exclude_ids.contains(&ids[u]));

    let retained: Vec<usize> = (0..t)
        .filter(|&i| !rules.drop_periods.contains(&panel.periods()[i]))
        .collect();

    let mut resolved_cap = None;
    if let Some(cap) = rules.population_cap {
        let pop = panel
            .population()
            .ok_or(PanelError::MissingPopulation(RULE_POPULATION))?;
        let basis = match rules.population_basis {
            PopulationBasis::FirstPeriod => retained.first().copied(),
            PopulationBasis::Period(p) => {
                let i = panel.period_index(p).ok_or(PanelError::UnknownPeriod(p))?;
                if !retained.contains(&i) {
                    return Err(PanelError::UnknownPeriod(p));
                }
                Some(i)
            }
        };
        if let Some(b) = basis {
            resolved_cap = match cap {
                PopulationCap::Fixed(c) => Some(c),
                PopulationCap::Auto => keep
                    .iter()
                    .filter(|&&u| in_reference(u))
                    .map(|&u| pop[u * t + b])
                    .reduce(f64::max),
            };
            if let Some(c) = resolved_cap {
                step(RULE_POPULATION, &mut keep, &|u| {
                    groups[u].is_treated() || pop[u * t + b] <= c
                });
            }
        }
    }
    if resolved_cap.is_none() {
        step(RULE_POPULATION, &mut keep, &|_| true);
    }

    let mut resolved_regions = None;
    if let Some(rule) = &rules.admissible_regions {
        let regions = panel
            .regions()
            .ok_or(PanelError::MissingRegion(RULE_REGION))?;
        let allowed: BTreeSet<String> = match rule {
            RegionRule::Ids(set) => set.clone(),
            RegionRule::WithTreated => keep
                .iter()
                .filter(|&&u| in_reference(u))
                .map(|&u| regions[u].clone())
                .collect(),
        };
        step(RULE_REGION, &mut keep, &|u| allowed.contains(&regions[u]));
        resolved_regions = Some(allowed.into_iter().collect());
    } else {
        step(RULE_REGION, &mut keep, &|_| true);
    }

    if rules.require_positive {
        let names: Vec<String> = if rules.positivity_outcomes.is_empty() {
            panel.outcome_names().map(str::to_string).collect()
        } else {
            rules.positivity_outcomes.clone()
        };
        let columns = names
            .iter()
            .map(|n| panel.outcome(n).ok_or_else(|| PanelError::UnknownOutcome(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        step(RULE_POSITIVE, &mut keep, &|u| {
            columns
                .iter()
                .all(|col| retained.iter().all(|&ti| col[u * t + ti] > 0.0))
        });
    } else {
        step(RULE_POSITIVE, &mut keep, &|_| true);
    }

    // A unit whose adoption period is removed (or no longer has an untreated
    // period before it) cannot be placed on the retained grid.
    let retained_periods: Vec<Period> = retained.iter().map(|&i| panel.periods()[i]).collect();
    step(RULE_PERIODS, &mut keep, &|u| match groups[u] {
        Group::Never => true,
        Group::At(g) => matches!(retained_periods.binary_search(&g), Ok(i) if i >= 1),
    });

    let mut out = panel.select_units(&keep);
    if retained.len() != t {
        out = out.select_periods(&retained);
    }
    let empty = out.n_units() == 0;
    Ok(SelectionOutcome {
        panel: out,
        audit: SelectionAudit {
            initial: panel.n_units(),
            steps,
            resolved_population_cap: resolved_cap,
            resolved_regions,
            empty,
        },
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::panel::PanelColumns;

    /// 10 units over 3 periods: 2 treated, 8 never-treated.
    fn panel10() -> PanelDataset {
        let units: Vec<String> = (0..10).map(|i| format!("u{i}")).collect();
        let mut groups = vec![Group::Never; 10];
        groups[0] = Group::At(2002);
        groups[1] = Group::At(2003);
        let pops = [500.0, 800.0, 100.0, 200.0, 300.0, 900.0, 1000.0, 50.0, 60.0, 70.0];
        let population: Vec<f64> = pops.iter().flat_map(|p| [*p, *p, *p]).collect();
        let mut y: Vec<f64> = vec![1.0; 30];
        y[4 * 3 + 1] = 0.0; // u4 has a zero in 2002
        let regions = ["A", "A", "A", "B", "A", "A", "A", "C", "A", "A"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        PanelDataset::new(PanelColumns {
            units,
            periods: vec![2001, 2002, 2003],
            groups,
            outcomes: BTreeMap::from([("y".to_string(), y)]),
            population: Some(population),
            regions: Some(regions),
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn auto_cap_drops_large_controls() {
        let rules = SelectionRules {
            population_cap: Some(PopulationCap::Auto),
            ..Default::default()
        };
        let out = apply_sample_selection(&panel10(), &rules).unwrap();
        assert_eq!(out.panel.n_units(), 8);
        assert_eq!(out.audit.dropped(RULE_POPULATION), Some(2));
        assert_eq!(out.audit.resolved_population_cap, Some(800.0));
    }

    #[test]
    fn zero_outcome_drops_unit() {
        let rules = SelectionRules {
            require_positive: true,
            ..Default::default()
        };
        let out = apply_sample_selection(&panel10(), &rules).unwrap();
        assert_eq!(out.audit.steps[3].units, vec!["u4".to_string()]);
    }

    #[test]
    fn zero_in_dropped_period_is_ignored() {
        let rules = SelectionRules {
            require_positive: true,
            drop_periods: [2002].into(),
            ..Default::default()
        };
        let out = apply_sample_selection(&panel10(), &rules).unwrap();
        assert_eq!(out.audit.dropped(RULE_POSITIVE), Some(0));
        // u0 adopted in the removed period
        assert_eq!(out.audit.steps[4].units, vec!["u0".to_string()]);
        assert_eq!(out.panel.periods(), &[2001, 2003]);
    }

    #[test]
    fn regions_with_treated() {
        let rules = SelectionRules {
            admissible_regions: Some(RegionRule::WithTreated),
            ..Default::default()
        };
        let out = apply_sample_selection(&panel10(), &rules).unwrap();
        assert_eq!(out.audit.dropped(RULE_REGION), Some(2));
    }

    #[test]
    fn fixed_point_makes_rules_idempotent() {
        // The most populous treated unit is removed by positivity, which
        // lowers the automatic cap.
        let mut cols = panel10().into_columns();
        cols.outcomes.get_mut("y").unwrap()[3] = -1.0; // u1 at 2001
        let p = PanelDataset::new(cols).unwrap();
        let rules = SelectionRules {
            population_cap: Some(PopulationCap::Auto),
            require_positive: true,
            ..Default::default()
        };
        let once = apply_sample_selection(&p, &rules).unwrap();
        assert_eq!(once.audit.resolved_population_cap, Some(500.0));
        let twice = apply_sample_selection(&once.panel, &rules).unwrap();
        assert_eq!(twice.panel, once.panel);
        assert!(twice.audit.is_noop());
    }

    #[test]
    fn missing_population_column() {
        let mut cols = panel10().into_columns();
        cols.population = None;
        let p = PanelDataset::new(cols).unwrap();
        let rules = SelectionRules {
            population_cap: Some(PopulationCap::Fixed(10.0)),
            ..Default::default()
        };
        assert!(matches!(
            apply_sample_selection(&p, &rules),
            Err(PanelError::MissingPopulation(_))
        ));
    }

    #[test]
    fn rules_deserialize_from_toml() {
        let rules: SelectionRules = toml::from_str(
            r#"
            exclude_ids = ["x"]
            population_cap = "auto"
            admissible_regions = "with_treated"
            require_positive = true
            drop_periods = [2020, 2021, 2022]
            "#,
        )
        .unwrap();
        assert_eq!(rules.population_cap, Some(PopulationCap::Auto));
        assert_eq!(rules.admissible_regions, Some(RegionRule::WithTreated));
        let fixed: SelectionRules =
            toml::from_str("population_cap = 1000.0\nadmissible_regions = [\"SP\"]").unwrap();
        assert_eq!(fixed.population_cap, Some(PopulationCap::Fixed(1000.0)));
        assert!(matches!(fixed.admissible_regions, Some(RegionRule::Ids(_))));
    }
}
