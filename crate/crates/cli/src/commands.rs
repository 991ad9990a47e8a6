use std::collections::BTreeMap;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use stagdid::aggregate::{aggregate, AggregationKind, AggregationResult};
use stagdid::costbenefit::{breakeven_demand_increase, cost_benefit, CbConstants, CostBenefitError};
use stagdid::did::{att_gt_all, AttGtTable, Footer};
use stagdid::inference::{
    dense_clusters, multiplier_bootstrap, pretrend_test, InferenceError, InferenceResult, Targets,
};
use stagdid::io::{
    aggregation_csv, att_gt_csv, att_gt_json, cost_benefit_csv, cost_benefit_plots, parse_dgp,
    read_cb_inputs, read_mca_csv, read_panel_csv, write_panel_csv,
};
use stagdid::panel::{aggregate_mca, apply_sample_selection, log_transform, validate_panel, PanelDataset};
use stagdid::synth::{generate_panel, DgpSpec};

use crate::args::{Command, CommonArgs, Kind};
use crate::config::{Cluster, RunConfig};
use crate::error::CliError;
use crate::output::Run;
use crate::DEFAULT_PROFILE;

fn load_config(common: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    common.apply(&mut cfg);
    Ok(cfg)
}

pub fn dispatch(command: Command) -> Result<(), CliError> {
    let (run, cfg, summary) = match command {
        Command::Validate { common, panel } => {
            let mut cfg = load_config(&common)?;
            panel.apply(&mut cfg);
            validate(&cfg)?
        }
        Command::Estimate {
            common,
            panel,
            estimator,
        } => {
            let mut cfg = load_config(&common)?;
            panel.apply(&mut cfg);
            estimator.apply(&mut cfg);
            estimate(&cfg)?
        }
        Command::Aggregate {
            common,
            panel,
            estimator,
            kind,
        } => {
            let mut cfg = load_config(&common)?;
            panel.apply(&mut cfg);
            estimator.apply(&mut cfg);
            aggregate_cmd(&cfg, kind)?
        }
        Command::Costbenefit { common, cb } => {
            let mut cfg = load_config(&common)?;
            cb.apply(&mut cfg);
            costbenefit(&cfg)?
        }
        Command::Simulate { common, dgp } => {
            let mut cfg = load_config(&common)?;
            if dgp.is_some() {
                cfg.dgp = dgp;
            }
            simulate(&cfg, common.seed)?
        }
        Command::Montecarlo {
            common,
            estimator,
            dgp,
            replications,
            kind,
        } => {
            let mut cfg = load_config(&common)?;
            estimator.apply(&mut cfg);
            if dgp.is_some() {
                cfg.dgp = dgp;
            }
            if let Some(r) = replications {
                cfg.replications = r;
            }
            montecarlo(&cfg, kind)?
        }
    };
    cfg.require_output()?;
    let written = run.finish(&cfg)?;
    for line in summary {
        println!("{line}");
    }
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

type Outcome = (Run, RunConfig, Vec<String>);

fn footer_of(panel: &PanelDataset) -> Footer {
    Footer {
        units: panel.n_units(),
        treated_units: panel.treated_count(),
        groups: panel.adoption_groups().len(),
    }
}

fn footer_lines(f: &Footer) -> Vec<String> {
    vec![
        format!("Units: {}", f.units),
        format!("Treated units: {}", f.treated_units),
        format!("Groups: {}", f.groups),
    ]
}

/// Read, validate, optionally aggregate to MCAs, select, optionally log.
fn load_panel(run: &mut Run, cfg: &RunConfig) -> Result<PanelDataset, CliError> {
    let path = cfg.require_panel()?;
    let bytes = run.read("panel", path)?;
    let records = read_panel_csv(bytes.as_slice()).map_err(|e| CliError::from(e).at(path))?;
    let validated = validate_panel(&records)?;
    let units_read = validated.panel.n_units() + validated.dropped.len();
    let mut panel = validated.panel;

    let mut mca = None;
    if let Some(p) = &cfg.mca {
        let bytes = run.read("mca", p)?;
        let mapping = read_mca_csv(bytes.as_slice()).map_err(|e| CliError::from(e).at(p))?;
        let before = panel.n_units();
        panel = aggregate_mca(&panel, &mapping)?;
        mca = Some(json!({ "units_before": before, "units_after": panel.n_units() }));
    }

    let selected = apply_sample_selection(&panel, &cfg.selection)?;
    if selected.audit.empty {
        return Err(CliError::infeasible(
            "empty_sample",
            "sample selection removed every unit",
        ));
    }
    let mut panel = selected.panel;
    if cfg.log_outcome {
        panel = log_transform(&panel, cfg.require_outcome()?)?;
    }

    let audit = json!({
        "records": records.len(),
        "validation": { "units": units_read, "dropped": validated.dropped },
        "mca": mca,
        "selection": selected.audit,
        "footer": footer_of(&panel),
    });
    run.add_json("audit.json", &audit);
    Ok(panel)
}

fn clusters(panel: &PanelDataset, cfg: &RunConfig) -> Result<Option<Vec<usize>>, CliError> {
    match cfg.cluster {
        Cluster::Unit => Ok(None),
        Cluster::Region => panel
            .regions()
            .map(|r| Some(dense_clusters(r)))
            .ok_or_else(|| CliError::input("missing_region", "region clustering needs a region column")),
    }
}

fn estimate_table(
    panel: &PanelDataset,
    cfg: &RunConfig,
) -> Result<(AttGtTable, InferenceResult), CliError> {
    let table = att_gt_all(panel, &cfg.estimator, cfg.require_outcome()?)?;
    if table.cells.is_empty() {
        return Err(CliError::infeasible(
            "no_feasible_cells",
            format!("all {} (g, t) cells are infeasible", table.infeasible.len()),
        ));
    }
    let clusters = clusters(panel, cfg)?;
    let mut inf = multiplier_bootstrap(
        &Targets::from_table(&table),
        clusters.as_deref(),
        &cfg.bootstrap_spec(),
    )?;
    match pretrend_test(&table, &inf) {
        Ok(p) => inf.pretrend = Some(p),
        Err(InferenceError::NoPlaceboCells) => inf
            .warnings
            .push("no placebo cells; pre-trend test skipped".into()),
        Err(e) => return Err(e.into()),
    }
    Ok((table, inf))
}

fn validate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut run = Run::new("validate");
    let panel = load_panel(&mut run, cfg)?;
    let summary = footer_lines(&footer_of(&panel));
    Ok((run, cfg.clone(), summary))
}

fn estimate(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut run = Run::new("estimate");
    let panel = load_panel(&mut run, cfg)?;
    let (table, inf) = estimate_table(&panel, cfg)?;
    run.add("att_gt.csv", att_gt_csv(&table, Some(&inf)));
    run.add("att_gt.json", att_gt_json(&table, Some(&inf), cfg.emit_influence));
    let mut summary = footer_lines(&table.footer);
    summary.push(format!(
        "cells: {} estimated, {} infeasible",
        table.cells.len(),
        table.infeasible.len()
    ));
    if let Some(p) = &inf.pretrend {
        summary.push(format!(
            "pre-trend: chi2({}) = {:.4}, p = {:.4}",
            p.dof, p.statistic, p.p_value
        ));
    }
    Ok((run, cfg.clone(), summary))
}

fn file_stem(kind: AggregationKind) -> &'static str {
    match kind {
        AggregationKind::EventStudy => "event_study",
        AggregationKind::Group => "group_effects",
        AggregationKind::Overall => "overall",
    }
}

#[derive(Serialize)]
struct AggregateReport<'a> {
    outcome: &'a str,
    footer: Footer,
    result: &'a AggregationResult,
    inference: &'a InferenceResult,
}

fn aggregate_with_inference(
    panel: &PanelDataset,
    table: &AttGtTable,
    kind: AggregationKind,
    cfg: &RunConfig,
) -> Result<(AggregationResult, InferenceResult), CliError> {
    let result = aggregate(table, kind)?;
    let clusters = clusters(panel, cfg)?;
    let inf = multiplier_bootstrap(
        &Targets::from_aggregation(&result),
        clusters.as_deref(),
        &cfg.bootstrap_spec(),
    )?;
    Ok((result, inf))
}

fn aggregate_cmd(cfg: &RunConfig, kind: Kind) -> Result<Outcome, CliError> {
    let kind = AggregationKind::from(kind);
    let mut run = Run::new("aggregate");
    let panel = load_panel(&mut run, cfg)?;
    let (table, cell_inf) = estimate_table(&panel, cfg)?;
    let (result, inf) = aggregate_with_inference(&panel, &table, kind, cfg)?;
    let stem = file_stem(kind);
    run.add("att_gt.csv", att_gt_csv(&table, Some(&cell_inf)));
    run.add(format!("{stem}.csv"), aggregation_csv(&result, &inf));
    run.add_json(
        &format!("{stem}.json"),
        &AggregateReport {
            outcome: &table.outcome,
            footer: table.footer,
            result: &result,
            inference: &inf,
        },
    );
    let mut summary = footer_lines(&table.footer);
    for (p, i) in result.points.iter().zip(&inf.points) {
        let index = p.index.map(|x| x.to_string()).unwrap_or_else(|| "all".into());
        summary.push(format!(
            "{} {index}: {:.6} [{:.6}, {:.6}]{}",
            kind.label(),
            p.estimate,
            i.lo,
            i.hi,
            i.stars()
        ));
    }
    Ok((run, cfg.clone(), summary))
}

/// Bundled or user profile, with the config's exchange rate and price index
/// laid on top.
fn resolve_constants(run: &mut Run, cfg: &RunConfig) -> Result<CbConstants, CliError> {
    let cb = &cfg.costbenefit;
    let text = match &cb.constants {
        Some(p) => String::from_utf8(run.read("constants", p)?)
            .map_err(|e| CliError::config("malformed_constants", e.to_string()).at(p))?,
        None => DEFAULT_PROFILE.to_string(),
    };
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config("malformed_constants", e.to_string()))?;
    if let Some(x) = cb.exchange_rate {
        table.insert("exchange_rate".into(), x.into());
    }
    if let Some(pi) = &cb.price_index {
        let v = toml::Value::try_from(pi).expect("price index serializes");
        table.insert("price_index".into(), v);
    }
    for key in ["exchange_rate", "price_index"] {
        if !table.contains_key(key) {
            return Err(CliError::config(
                "missing_constant",
                format!("{key} has no default and must be supplied"),
            ));
        }
    }
    let constants: CbConstants = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config("malformed_constants", e.to_string()))?;
    constants.validate()?;
    Ok(constants)
}

fn costbenefit(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let mut run = Run::new("costbenefit");
    let path = cfg
        .costbenefit
        .inputs
        .as_deref()
        .ok_or_else(|| CliError::config("missing_inputs", "no cost-benefit inputs given"))?;
    let bytes = run.read("costbenefit_inputs", path)?;
    let inputs = read_cb_inputs(bytes.as_slice()).map_err(|e| CliError::from(e).at(path))?;
    let constants = resolve_constants(&mut run, cfg)?;
    let att = cfg
        .costbenefit
        .att
        .as_ref()
        .ok_or_else(|| CliError::config("missing_att", "no ATT profile given"))?;
    let series = cost_benefit(&inputs, att, &constants)?;
    let breakeven = match breakeven_demand_increase(&series) {
        Ok(b) => Some(b),
        Err(CostBenefitError::ZeroCost) => None,
        Err(e) => return Err(e.into()),
    };
    run.add("cost_benefit.csv", cost_benefit_csv(&series, breakeven.as_ref()));
    for plot in cost_benefit_plots(&series) {
        run.add(format!("plots/{}", plot.name), plot.contents);
    }
    run.note("constants", &constants);
    let mut summary = vec![format!("years: {}", series.years.len())];
    match &breakeven {
        Some(b) => summary.push(format!(
            "break-even demand increase: {:.4} ({})",
            b.kappa,
            if b.cost_effective { "cost-effective" } else { "not cost-effective" }
        )),
        None => summary.push("break-even undefined: average cost is zero".into()),
    }
    Ok((run, cfg.clone(), summary))
}

fn load_dgp(run: &mut Run, cfg: &RunConfig) -> Result<DgpSpec, CliError> {
    let path: PathBuf = cfg
        .dgp
        .clone()
        .ok_or_else(|| CliError::config("missing_dgp", "no DGP spec given"))?;
    let bytes = run.read("dgp", &path)?;
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::config("malformed_dgp", e.to_string()).at(&path))?;
    let spec = parse_dgp(&text).map_err(|e| CliError::config("malformed_dgp", e.to_string()).at(&path))?;
    spec.validate()?;
    Ok(spec)
}

fn truth_csv(spec: &DgpSpec) -> String {
    let mut out = String::from("g,t,event_time,att\n");
    for ((g, t), v) in spec.truth().cells {
        out.push_str(&format!("{g},{t},{},{v}\n", t - g));
    }
    out
}

fn simulate(cfg: &RunConfig, seed: Option<u64>) -> Result<Outcome, CliError> {
    let mut run = Run::new("simulate");
    let mut spec = load_dgp(&mut run, cfg)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let (panel, _) = generate_panel(&spec)?;
    let mut csv = Vec::new();
    write_panel_csv(&panel, &mut csv)?;
    run.add("panel.csv", csv);
    run.add("truth.csv", truth_csv(&spec));
    let groups: BTreeMap<String, f64> = spec
        .groups
        .iter()
        .map(|g| (g.period.to_string(), spec.group_truth(g.period)))
        .collect();
    run.add_json(
        "truth.json",
        &json!({ "overall": spec.overall_truth(), "groups": groups }),
    );
    run.note("dgp", &spec);
    let summary = footer_lines(&footer_of(&panel));
    Ok((run, cfg.clone(), summary))
}

fn point_truth(spec: &DgpSpec, kind: AggregationKind, index: Option<i64>) -> f64 {
    match (kind, index) {
        (AggregationKind::EventStudy, Some(e)) => spec.event_truth(e),
        (AggregationKind::Group, Some(g)) => spec.group_truth(g),
        _ => spec.overall_truth(),
    }
}

struct Replication {
    rep: usize,
    index: Option<i64>,
    estimate: f64,
    se: f64,
    lo: f64,
    hi: f64,
    truth: f64,
}

fn montecarlo(cfg: &RunConfig, kind: Kind) -> Result<Outcome, CliError> {
    let kind = AggregationKind::from(kind);
    let mut run = Run::new("montecarlo");
    let spec = load_dgp(&mut run, cfg)?;
    if cfg.replications == 0 {
        return Err(CliError::config("no_replications", "replications must be positive"));
    }
    let reps: Vec<Result<Vec<Replication>, CliError>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let rep_spec = DgpSpec {
                seed: spec.seed.wrapping_add(r as u64),
                ..spec.clone()
            };
            let (panel, _) = generate_panel(&rep_spec)?;
            let rep_cfg = RunConfig {
                outcome: Some(spec.outcome.clone()),
                seed: cfg.seed.wrapping_add(r as u64),
                ..cfg.clone()
            };
            let table = att_gt_all(&panel, &rep_cfg.estimator, &spec.outcome)?;
            let (result, inf) = aggregate_with_inference(&panel, &table, kind, &rep_cfg)?;
            Ok(result
                .points
                .iter()
                .zip(&inf.points)
                .filter(|(p, _)| !p.reference)
                .map(|(p, i)| Replication {
                    rep: r,
                    index: p.index,
                    estimate: p.estimate,
                    se: i.se,
                    lo: i.lo,
                    hi: i.hi,
                    truth: point_truth(&spec, kind, p.index),
                })
                .collect())
        })
        .collect();
    let rows: Vec<Replication> = reps
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();

    let idx = |i: Option<i64>| i.map(|x| x.to_string()).unwrap_or_default();
    let mut csv = String::from("rep,index,estimate,se,lo,hi,truth,covered\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.rep,
            idx(r.index),
            r.estimate,
            r.se,
            r.lo,
            r.hi,
            r.truth,
            r.lo <= r.truth && r.truth <= r.hi
        ));
    }
    run.add("replications.csv", csv);

    let mut by_index: BTreeMap<Option<i64>, Vec<&Replication>> = BTreeMap::new();
    for r in &rows {
        by_index.entry(r.index).or_default().push(r);
    }
    let mut summary_csv = String::from("index,n,truth,mean_estimate,bias,rmse,mean_se,coverage\n");
    let mut summary = Vec::new();
    for (index, rs) in &by_index {
        let n = rs.len() as f64;
        let truth = rs[0].truth;
        let mean = rs.iter().map(|r| r.estimate).sum::<f64>() / n;
        let rmse = (rs.iter().map(|r| (r.estimate - truth).powi(2)).sum::<f64>() / n).sqrt();
        let mean_se = rs.iter().map(|r| r.se).sum::<f64>() / n;
        let coverage = rs.iter().filter(|r| r.lo <= truth && truth <= r.hi).count() as f64 / n;
        summary_csv.push_str(&format!(
            "{},{},{truth},{mean},{},{rmse},{mean_se},{coverage}\n",
            idx(*index),
            rs.len(),
            mean - truth
        ));
        summary.push(format!(
            "{} {}: bias {:.5}, rmse {:.5}, coverage {:.3}",
            kind.label(),
            index.map(|x| x.to_string()).unwrap_or_else(|| "all".into()),
            mean - truth,
            rmse,
            coverage
        ));
    }
    run.add("summary.csv", summary_csv);
    run.note("dgp", &spec);
    Ok((run, cfg.clone(), summary))
}
