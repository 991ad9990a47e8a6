use std::collections::BTreeMap;

use super::{Group, PanelColumns, PanelDataset, PanelError};

/// Raw unit id -> Minimum Comparable Area id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct McaMapping {
    map: BTreeMap<String, String>,
}

impl McaMapping {
    /// Builds a mapping; a unit listed twice must map to the same MCA.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, PanelError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (unit, mca) in pairs {
            if let Some(prev) = map.get(&unit) {
                if prev != &mca {
                    return Err(PanelError::AmbiguousMapping {
                        unit,
                        first: prev.clone(),
                        second: mca,
                    });
                }
                continue;
            }
            map.insert(unit, mca);
        }
        Ok(Self { map })
    }

    pub fn get(&self, unit: &str) -> Option<&str> {
        self.map.get(unit).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Aggregates raw units into MCAs.
///
/// Outcomes and population are summed per period. An MCA adopts in the
/// earliest period any member adopts. Baseline covariates become
/// population-weighted means using first-period population (plain means when
/// the panel carries no population or the MCA's baseline population is zero).
/// The region is the one shared by most members, ties broken by smallest id.
pub fn aggregate_mca(panel: &PanelDataset, mapping: &McaMapping) -> Result<PanelDataset, PanelError> {
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (u, id) in panel.units().iter().enumerate() {
        let mca = mapping
            .get(id)
            .ok_or_else(|| PanelError::UnmappedUnit(id.clone()))?;
        members.entry(mca).or_default().push(u);
    }

    let t = panel.n_periods();
    let sum_cells = |v: &[f64], idx: &[usize]| -> Vec<f64> {
        (0..t)
            .map(|ti| idx.iter().map(|&u| v[u * t + ti]).sum())
            .collect()
    };

    let mut cols = PanelColumns {
        periods: panel.periods().to_vec(),
        outcomes: panel.outcome_names().map(|k| (k.to_string(), Vec::new())).collect(),
        covariates: panel.covariate_names().map(|k| (k.to_string(), Vec::new())).collect(),
        population: panel.population().map(|_| Vec::new()),
        regions: panel.regions().map(|_| Vec::new()),
        ..Default::default()
    };

    for (mca, idx) in &members {
        cols.units.push(mca.to_string());
        let group = idx
            .iter()
            .map(|&u| panel.groups()[u])
            .min()
            .unwrap_or(Group::Never);
        cols.groups.push(group);
        for (name, out) in cols.outcomes.iter_mut() {
            out.extend(sum_cells(panel.outcome(name).unwrap(), idx));
        }
        if let (Some(pop), Some(dst)) = (panel.population(), cols.population.as_mut()) {
            dst.extend(sum_cells(pop, idx));
        }

        let weights: Vec<f64> = match panel.population() {
            Some(pop) => idx.iter().map(|&u| pop[u * t]).collect(),
            None => vec![1.0; idx.len()],
        };
        let total: f64 = weights.iter().sum();
        let weights = if total > 0.0 {
            weights.iter().map(|w| w / total).collect::<Vec<_>>()
        } else {
            vec![1.0 / idx.len() as f64; idx.len()]
        };
        for (name, out) in cols.covariates.iter_mut() {
            let v = panel.covariate(name).unwrap();
            out.push(idx.iter().zip(&weights).map(|(&u, w)| w * v[u]).sum());
        }

        if let (Some(regions), Some(dst)) = (panel.regions(), cols.regions.as_mut()) {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for &u in idx {
                *counts.entry(regions[u].as_str()).or_default() += 1;
            }
            // max_by_key keeps the last maximum; iterate reversed so the
            // smallest id wins ties.
            let region = counts
                .iter()
                .rev()
                .max_by_key(|(_, c)| **c)
                .map(|(r, _)| r.to_string())
                .unwrap_or_default();
            dst.push(region);
        }
    }

    PanelDataset::new(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel() -> PanelDataset {
        let mut outcomes = BTreeMap::new();
        // units a, b, c, d over 3 periods
        outcomes.insert(
            "emissions".to_string(),
            vec![
                100.0, 110.0, 120.0, //
                50.0, 55.0, 60.0, //
                7.0, 8.0, 9.0, //
                1.0, 2.0, 3.0,
            ],
        );
        let mut covariates = BTreeMap::new();
        covariates.insert("urban".to_string(), vec![0.2, 0.8, 0.5, 0.1]);
        PanelDataset::new(PanelColumns {
            units: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            periods: vec![2001, 2002, 2003],
            groups: vec![Group::At(2003), Group::Never, Group::At(2002), Group::Never],
            outcomes,
            covariates,
            population: Some(vec![
                300.0, 300.0, 300.0, //
                100.0, 100.0, 100.0, //
                10.0, 10.0, 10.0, //
                10.0, 10.0, 10.0,
            ]),
            regions: Some(vec!["SP".into(), "SP".into(), "RJ".into(), "MG".into()]),
        })
        .unwrap()
    }

    fn mapping(pairs: &[(&str, &str)]) -> McaMapping {
        McaMapping::from_pairs(pairs.iter().map(|(a, b)| (a.to_string(), b.to_string()))).unwrap()
    }

    #[test]
    fn sums_outcomes_and_takes_earliest_group() {
        let m = mapping(&[("a", "m1"), ("b", "m1"), ("c", "m2"), ("d", "m2")]);
        let out = aggregate_mca(&panel(), &m).unwrap();
        assert_eq!(out.units(), &["m1".to_string(), "m2".to_string()]);
        assert_eq!(&out.outcome("emissions").unwrap()[..3], &[150.0, 165.0, 180.0]);
        assert_eq!(out.groups(), &[Group::At(2003), Group::At(2002)]);
        let urban = out.covariate("urban").unwrap();
        assert!((urban[0] - (0.2 * 300.0 + 0.8 * 100.0) / 400.0).abs() < 1e-15);
        assert!((urban[1] - 0.3).abs() < 1e-15);
        assert_eq!(out.regions().unwrap(), &["SP".to_string(), "MG".to_string()]);
    }

    #[test]
    fn min_group_over_members() {
        let groups = [Group::At(2005), Group::At(2003), Group::Never];
        let brute = groups
            .iter()
            .copied()
            .fold(Group::Never, |acc, g| match (acc, g) {
                (Group::Never, x) | (x, Group::Never) => x,
                (Group::At(a), Group::At(b)) => Group::At(a.min(b)),
            });
        assert_eq!(brute, Group::At(2003));
        assert_eq!(groups.iter().min(), Some(&brute));
    }

    #[test]
    fn preserves_totals() {
        let p = panel();
        let m = mapping(&[("a", "x"), ("b", "y"), ("c", "x"), ("d", "z")]);
        let out = aggregate_mca(&p, &m).unwrap();
        for ti in 0..3 {
            let raw: f64 = (0..4).map(|u| p.value("emissions", u, ti).unwrap()).sum();
            let agg: f64 = (0..3).map(|u| out.value("emissions", u, ti).unwrap()).sum();
            assert_eq!(raw, agg);
        }
    }

    #[test]
    fn unmapped_unit() {
        let m = mapping(&[("a", "m1")]);
        assert_eq!(
            aggregate_mca(&panel(), &m),
            Err(PanelError::UnmappedUnit("b".into()))
        );
    }

    #[test]
    fn ambiguous_mapping() {
        let r = McaMapping::from_pairs(vec![
            ("a".to_string(), "m1".to_string()),
            ("a".to_string(), "m2".to_string()),
        ]);
        assert!(matches!(r, Err(PanelError::AmbiguousMapping { .. })));
    }
}
