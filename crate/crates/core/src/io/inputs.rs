use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use super::IoError;
use crate::costbenefit::{CbConstants, CbInputs, CbRow, Year};
use crate::panel::{Group, McaMapping, PanelDataset, RawRecord, SelectionRules};
use crate::synth::DgpSpec;

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn headers<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>, IoError> {
    let h: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for name in &h {
        if !seen.insert(name.as_str()) {
            return Err(IoError::DuplicateColumn(name.clone()));
        }
    }
    Ok(h)
}

fn position(h: &[String], name: &str) -> Result<usize, IoError> {
    h.iter()
        .position(|c| c == name)
        .ok_or_else(|| IoError::MissingColumn(name.to_string()))
}

fn line(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn opt_f64(rec: &csv::StringRecord, idx: usize, column: &str) -> Result<Option<f64>, IoError> {
    let raw = rec.get(idx).unwrap_or("");
    if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| IoError::BadValue {
            line: line(rec),
            column: column.to_string(),
            value: raw.to_string(),
        })
}

fn req_f64(rec: &csv::StringRecord, idx: usize, column: &str) -> Result<f64, IoError> {
    opt_f64(rec, idx, column)?.ok_or_else(|| IoError::EmptyValue {
        line: line(rec),
        column: column.to_string(),
    })
}

fn req_str(rec: &csv::StringRecord, idx: usize, column: &str) -> Result<String, IoError> {
    match rec.get(idx) {
        Some(s) if !s.is_empty() => Ok(s.to_string()),
        _ => Err(IoError::EmptyValue {
            line: line(rec),
            column: column.to_string(),
        }),
    }
}

fn int(rec: &csv::StringRecord, idx: usize, column: &str) -> Result<i64, IoError> {
    let raw = req_str(rec, idx, column)?;
    raw.parse::<i64>().map_err(|_| IoError::BadValue {
        line: line(rec),
        column: column.to_string(),
        value: raw,
    })
}

fn parse_group(rec: &csv::StringRecord, idx: usize) -> Result<Option<Group>, IoError> {
    let raw = rec.get(idx).unwrap_or("");
    if raw.is_empty() {
        return Ok(None);
    }
    if raw.eq_ignore_ascii_case("never") {
        return Ok(Some(Group::Never));
    }
    raw.parse::<i64>()
        .map(|g| Some(Group::At(g)))
        .map_err(|_| IoError::BadValue {
            line: line(rec),
            column: "group".into(),
            value: raw.to_string(),
        })
}

enum PanelColumn {
    Outcome(String),
    Covariate(String),
    Population,
    Region,
}

/// Reads a long-format panel: `unit_id,period,group` followed by any of
/// `outcome_<name>`, `cov_<name>`, `population`, `region`. Empty fields are
/// missing values; `group` is an integer period or `never`.
pub fn read_panel_csv<R: Read>(r: R) -> Result<Vec<RawRecord>, IoError> {
    let mut rdr = reader(r);
    let h = headers(&mut rdr)?;
    let unit = position(&h, "unit_id")?;
    let period = position(&h, "period")?;
    let group = position(&h, "group")?;
    let mut extra = Vec::new();
    for (i, name) in h.iter().enumerate() {
        if i == unit || i == period || i == group {
            continue;
        }
        let col = if let Some(n) = name.strip_prefix("outcome_").filter(|n| !n.is_empty()) {
            PanelColumn::Outcome(n.to_string())
        } else if let Some(n) = name.strip_prefix("cov_").filter(|n| !n.is_empty()) {
            PanelColumn::Covariate(n.to_string())
        } else if name == "population" {
            PanelColumn::Population
        } else if name == "region" {
            PanelColumn::Region
        } else {
            return Err(IoError::UnknownColumn(name.clone()));
        };
        extra.push((i, col));
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut raw = RawRecord {
            unit: req_str(&rec, unit, "unit_id")?,
            period: req_f64(&rec, period, "period")?,
            group: parse_group(&rec, group)?,
            ..Default::default()
        };
        for (i, col) in &extra {
            match col {
                PanelColumn::Outcome(n) => {
                    raw.outcomes.insert(n.clone(), opt_f64(&rec, *i, &h[*i])?);
                }
                PanelColumn::Covariate(n) => {
                    raw.covariates.insert(n.clone(), opt_f64(&rec, *i, &h[*i])?);
                }
                PanelColumn::Population => raw.population = opt_f64(&rec, *i, "population")?,
                PanelColumn::Region => {
                    raw.region = rec.get(*i).filter(|s| !s.is_empty()).map(str::to_string)
                }
            }
        }
        out.push(raw);
    }
    Ok(out)
}

/// Writes a panel in the format read by [`read_panel_csv`].
pub fn write_panel_csv<W: Write>(panel: &PanelDataset, w: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let outcomes: Vec<&str> = panel.outcome_names().collect();
    let covariates: Vec<&str> = panel.covariate_names().collect();
    let mut header = vec!["unit_id".to_string(), "period".into(), "group".into()];
    header.extend(outcomes.iter().map(|o| format!("outcome_{o}")));
    header.extend(covariates.iter().map(|c| format!("cov_{c}")));
    if panel.population().is_some() {
        header.push("population".into());
    }
    if panel.regions().is_some() {
        header.push("region".into());
    }
    wtr.write_record(&header)?;
    let t = panel.n_periods();
    for (u, id) in panel.units().iter().enumerate() {
        for (ti, p) in panel.periods().iter().enumerate() {
            let mut row = vec![id.clone(), p.to_string(), panel.groups()[u].to_string()];
            for o in &outcomes {
                row.push(panel.value(o, u, ti).unwrap().to_string());
            }
            for c in &covariates {
                row.push(panel.covariate(c).unwrap()[u].to_string());
            }
            if let Some(pop) = panel.population() {
                row.push(pop[u * t + ti].to_string());
            }
            if let Some(r) = panel.regions() {
                row.push(r[u].clone());
            }
            wtr.write_record(&row)?;
        }
    }
    wtr.flush().map_err(|e| IoError::Csv(e.to_string()))
}

/// Reads `unit_id,mca_id` pairs.
pub fn read_mca_csv<R: Read>(r: R) -> Result<McaMapping, IoError> {
    let mut rdr = reader(r);
    let h = headers(&mut rdr)?;
    let unit = position(&h, "unit_id")?;
    let mca = position(&h, "mca_id")?;
    let mut pairs = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        pairs.push((req_str(&rec, unit, "unit_id")?, req_str(&rec, mca, "mca_id")?));
    }
    McaMapping::from_pairs(pairs).map_err(|e| IoError::Csv(e.to_string()))
}

/// Reads `unit_id,year,ln_emissions,ln_jobs,avg_wage,population` with an
/// optional `adoption_year` column.
pub fn read_cb_inputs<R: Read>(r: R) -> Result<CbInputs, IoError> {
    let mut rdr = reader(r);
    let h = headers(&mut rdr)?;
    let known = [
        "unit_id",
        "year",
        "ln_emissions",
        "ln_jobs",
        "avg_wage",
        "population",
        "adoption_year",
    ];
    if let Some(c) = h.iter().find(|c| !known.contains(&c.as_str())) {
        return Err(IoError::UnknownColumn(c.clone()));
    }
    let idx: BTreeMap<&str, usize> = known
        .iter()
        .filter_map(|k| h.iter().position(|c| c == k).map(|i| (*k, i)))
        .collect();
    for k in &known[..6] {
        if !idx.contains_key(k) {
            return Err(IoError::MissingColumn(k.to_string()));
        }
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let adoption_year: Option<Year> = match idx.get("adoption_year") {
            Some(&i) if !rec.get(i).unwrap_or("").is_empty() => Some(int(&rec, i, "adoption_year")?),
            _ => None,
        };
        rows.push(CbRow {
            unit_id: req_str(&rec, idx["unit_id"], "unit_id")?,
            year: int(&rec, idx["year"], "year")?,
            ln_emissions: req_f64(&rec, idx["ln_emissions"], "ln_emissions")?,
            ln_jobs: req_f64(&rec, idx["ln_jobs"], "ln_jobs")?,
            avg_wage: opt_f64(&rec, idx["avg_wage"], "avg_wage")?,
            population: opt_f64(&rec, idx["population"], "population")?,
            adoption_year,
        });
    }
    Ok(CbInputs { rows })
}

pub fn parse_constants(text: &str) -> Result<CbConstants, IoError> {
    Ok(toml::from_str(text)?)
}

pub fn parse_dgp(text: &str) -> Result<DgpSpec, IoError> {
    Ok(toml::from_str(text)?)
}

pub fn parse_selection_rules(text: &str) -> Result<SelectionRules, IoError> {
    Ok(toml::from_str(text)?)
}
