use std::collections::HashMap;

use serde_json::{json, Value};

use crate::aggregate::AggregationResult;
use crate::costbenefit::{Breakeven, CostBenefitSeries};
use crate::did::{AttGtTable, CellKind};
use crate::inference::{InferenceResult, PointInference, TargetLabel};
use crate::panel::Period;

fn cell_inference(inf: Option<&InferenceResult>) -> HashMap<(Period, Period), &PointInference> {
    inf.map(|r| {
        r.points
            .iter()
            .filter_map(|p| match p.label {
                TargetLabel::Cell { g, t } => Some(((g, t), p)),
                _ => None,
            })
            .collect()
    })
    .unwrap_or_default()
}

fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.write_record(&r).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `g,t,estimate,se,base_period,n_treated,feasible,reason`, one row per
/// (g, t) including infeasible pairs.
pub fn att_gt_csv(table: &AttGtTable, inference: Option<&InferenceResult>) -> String {
    let se = cell_inference(inference);
    let mut rows: Vec<((Period, Period), Vec<String>)> = Vec::new();
    for c in &table.cells {
        let reason = if c.kind == CellKind::Reference { "reference" } else { "" };
        rows.push((
            (c.g, c.t),
            vec![
                c.g.to_string(),
                c.t.to_string(),
                c.estimate.to_string(),
                opt(se.get(&(c.g, c.t)).map(|p| p.se)),
                c.base_period.to_string(),
                c.n_treated.to_string(),
                "true".into(),
                reason.into(),
            ],
        ));
    }
    for c in &table.infeasible {
        rows.push((
            (c.g, c.t),
            vec![
                c.g.to_string(),
                c.t.to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                "false".into(),
                c.reason.clone(),
            ],
        ));
    }
    rows.sort_by_key(|(k, _)| *k);
    let header = ["g", "t", "estimate", "se", "base_period", "n_treated", "feasible", "reason"];
    let mut out = vec![header.iter().map(|s| s.to_string()).collect()];
    out.extend(rows.into_iter().map(|(_, r)| r));
    csv_string(out)
}

/// The table as JSON; per-cell influence vectors (keyed by unit id) are
/// included when `emit_influence` is set.
pub fn att_gt_json(
    table: &AttGtTable,
    inference: Option<&InferenceResult>,
    emit_influence: bool,
) -> String {
    let inf = cell_inference(inference);
    let cells: Vec<Value> = table
        .cells
        .iter()
        .map(|c| {
            let mut v = serde_json::to_value(c).expect("serializable cell");
            if let Some(p) = inf.get(&(c.g, c.t)) {
                v["se"] = json!(p.se);
                v["lo"] = json!(p.lo);
                v["hi"] = json!(p.hi);
            }
            if emit_influence {
                v["influence"] = Value::Object(
                    c.sample
                        .iter()
                        .zip(&c.influence)
                        .map(|(&u, x)| (table.units[u].clone(), json!(x)))
                        .collect(),
                );
            }
            v
        })
        .collect();
    let doc = json!({
        "outcome": table.outcome,
        "spec": table.spec,
        "footer": table.footer,
        "cells": cells,
        "infeasible": table.infeasible,
        "bootstrap": inference.map(|r| json!({
            "spec": r.spec,
            "clusters": r.n_clusters,
            "uniform_critical_value": r.uniform_critical_value,
            "pretrend": r.pretrend,
            "warnings": r.warnings,
        })),
    });
    serde_json::to_string_pretty(&doc).expect("serializable report") + "\n"
}

/// `kind,index,estimate,se,loNN,hiNN,placebo` where NN is the band level in
/// percent. The overall summary has an empty index.
pub fn aggregation_csv(result: &AggregationResult, inference: &InferenceResult) -> String {
    let pct = (inference.spec.level * 100.0).round() as i64;
    let mut rows = vec![vec![
        "kind".to_string(),
        "index".into(),
        "estimate".into(),
        "se".into(),
        format!("lo{pct}"),
        format!("hi{pct}"),
        "placebo".into(),
    ]];
    for (p, i) in result.points.iter().zip(&inference.points) {
        rows.push(vec![
            result.kind.label().to_string(),
            p.index.map(|x| x.to_string()).unwrap_or_default(),
            p.estimate.to_string(),
            i.se.to_string(),
            i.lo.to_string(),
            i.hi.to_string(),
            p.placebo.to_string(),
        ]);
    }
    csv_string(rows)
}

/// One row per year plus a trailing break-even block.
pub fn cost_benefit_csv(series: &CostBenefitSeries, breakeven: Option<&Breakeven>) -> String {
    let mut rows = vec![[
        "year",
        "n_treated",
        "avg_wage",
        "delta_emissions",
        "delta_jobs",
        "delta_labor_income",
        "env_benefit",
        "fiscal_benefit",
        "total_benefit",
        "cost",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for y in &series.years {
        rows.push(vec![
            y.year.to_string(),
            y.n_treated.to_string(),
            y.avg_wage.to_string(),
            y.delta_emissions.to_string(),
            y.delta_jobs.to_string(),
            y.delta_labor_income.to_string(),
            y.env_benefit.to_string(),
            y.fiscal_benefit.to_string(),
            y.total_benefit.to_string(),
            y.cost.to_string(),
        ]);
    }
    let mut out = csv_string(rows);
    if let Some(b) = breakeven {
        out.push_str(&csv_string(vec![
            vec!["avg_benefit".into(), "avg_cost".into(), "breakeven_demand_increase".into(), "cost_effective".into()],
            vec![
                b.avg_benefit.to_string(),
                b.avg_cost.to_string(),
                b.kappa.to_string(),
                b.cost_effective.to_string(),
            ],
        ]));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlotFile {
    pub name: &'static str,
    pub contents: String,
}

/// Plot-ready series in millions of base-year currency: environmental
/// benefit, fiscal benefit, total benefit against cost, fiscal benefit
/// against cost.
pub fn cost_benefit_plots(series: &CostBenefitSeries) -> Vec<PlotFile> {
    let m = |v: f64| (v / 1e6).to_string();
    let single = |name: &'static str, col: &str, f: &dyn Fn(&crate::costbenefit::CbYear) -> f64| {
        let mut rows = vec![vec!["year".to_string(), col.to_string()]];
        rows.extend(series.years.iter().map(|y| vec![y.year.to_string(), m(f(y))]));
        PlotFile {
            name,
            contents: csv_string(rows),
        }
    };
    let pair = |name: &'static str, col: &str, f: &dyn Fn(&crate::costbenefit::CbYear) -> f64| {
        let mut rows = vec![vec!["year".to_string(), col.to_string(), "cost_millions".into()]];
        rows.extend(
            series
                .years
                .iter()
                .map(|y| vec![y.year.to_string(), m(f(y)), m(y.cost)]),
        );
        PlotFile {
            name,
            contents: csv_string(rows),
        }
    };
    vec![
        single("env_benefit.csv", "env_benefit_millions", &|y| y.env_benefit),
        single("fiscal_benefit.csv", "fiscal_benefit_millions", &|y| y.fiscal_benefit),
        pair("total_benefit_vs_cost.csv", "total_benefit_millions", &|y| y.total_benefit),
        pair("fiscal_benefit_vs_cost.csv", "fiscal_benefit_millions", &|y| y.fiscal_benefit),
    ]
}
