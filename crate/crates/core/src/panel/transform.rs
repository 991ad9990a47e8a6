use super::{PanelDataset, PanelError};

/// Replaces an outcome by its natural logarithm.
pub fn log_transform(panel: &PanelDataset, outcome: &str) -> Result<PanelDataset, PanelError> {
    let values = panel
        .outcome(outcome)
        .ok_or_else(|| PanelError::UnknownOutcome(outcome.to_string()))?;
    let t = panel.n_periods();
    if let Some(i) = values.iter().position(|v| *v <= 0.0) {
        return Err(PanelError::NonpositiveValue {
            outcome: outcome.to_string(),
            unit: panel.units()[i / t].clone(),
            period: panel.periods()[i % t],
            value: values[i],
        });
    }
    let mut out = panel.clone();
    for v in out.outcome_mut(outcome).unwrap().iter_mut() {
        *v = v.ln();
    }
    Ok(out)
}
