use std::collections::HashMap;

use thiserror::Error;

use crate::panel::{Group, PanelDataset, Period};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("no {0} units observed in both periods")]
    EmptyCell(&'static str),
}

/// `mean(Y_t - Y_base | G = g) - mean(Y_t - Y_base | never)` by walking the
/// long-format records. Shares nothing with the estimator code.
pub fn brute_force_att(
    panel: &PanelDataset,
    outcome: &str,
    g: Period,
    t: Period,
    base: Period,
) -> Result<f64, OracleError> {
    let mut at_t: HashMap<&str, (Group, f64)> = HashMap::new();
    let mut at_base: HashMap<&str, f64> = HashMap::new();
    for (unit, period, group, value) in panel.records(outcome) {
        if period == t {
            at_t.insert(unit, (group, value));
        }
        if period == base {
            at_base.insert(unit, value);
        }
    }
    let (mut sum1, mut n1, mut sum0, mut n0) = (0.0, 0usize, 0.0, 0usize);
    for (unit, (group, y)) in &at_t {
        let Some(b) = at_base.get(unit) else { continue };
        match group {
            Group::At(p) if *p == g => {
                sum1 += y - b;
                n1 += 1;
            }
            Group::Never => {
                sum0 += y - b;
                n0 += 1;
            }
            _ => {}
        }
    }
    if n1 == 0 {
        return Err(OracleError::EmptyCell("treated"));
    }
    if n0 == 0 {
        return Err(OracleError::EmptyCell("never-treated"));
    }
    Ok(sum1 / n1 as f64 - sum0 / n0 as f64)
}
