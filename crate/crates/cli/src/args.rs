use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use stagdid::aggregate::AggregationKind;
use stagdid::costbenefit::AttProfile;
use stagdid::did::{BasePeriod, Method};
use stagdid::inference::{Band, Multiplier, Scale};

use crate::config::{Cluster, RunConfig};

/// Parses a snake_case enum value through its serde representation.
fn serde_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "stagdid", version, about = "Staggered difference-in-differences runs")]
pub struct Cli {
    /// Worker threads; 0 or unset uses every core.
    #[arg(long, global = true, env = "STAGDID_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate the panel and apply sample selection; writes the audit.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        panel: PanelArgs,
    },
    /// Estimate every ATT(g, t) with bootstrap bands and a pre-trend test.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        panel: PanelArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
    },
    /// Estimate, then aggregate into event-study, group or overall effects.
    Aggregate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        panel: PanelArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long, value_enum)]
        kind: Kind,
    },
    /// Yearly benefits, costs and the break-even demand increase.
    Costbenefit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        cb: CostBenefitArgs,
    },
    /// Draw one synthetic panel and its true effects.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dgp: Option<PathBuf>,
    },
    /// Repeat simulate + estimate + aggregate and summarize bias and coverage.
    Montecarlo {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        estimator: EstimatorArgs,
        #[arg(long)]
        dgp: Option<PathBuf>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long, value_enum, default_value = "overall")]
        kind: Kind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Event,
    Group,
    Overall,
}

impl From<Kind> for AggregationKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Event => AggregationKind::EventStudy,
            Kind::Group => AggregationKind::Group,
            Kind::Overall => AggregationKind::Overall,
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run config; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PanelArgs {
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[arg(long)]
    pub mca: Option<PathBuf>,
    #[arg(long)]
    pub outcome: Option<String>,
    #[arg(long)]
    pub log_outcome: bool,
}

#[derive(Debug, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_parser = serde_enum::<Method>)]
    pub method: Option<Method>,
    /// Comma-separated covariate names.
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    #[arg(long, value_parser = serde_enum::<BasePeriod>)]
    pub base_period: Option<BasePeriod>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long, value_parser = serde_enum::<Band>)]
    pub band: Option<Band>,
    #[arg(long, value_parser = serde_enum::<Multiplier>)]
    pub multiplier: Option<Multiplier>,
    #[arg(long, value_parser = serde_enum::<Scale>)]
    pub scale: Option<Scale>,
    #[arg(long, value_parser = serde_enum::<Cluster>)]
    pub cluster: Option<Cluster>,
    /// Include per-unit influence values in att_gt.json.
    #[arg(long)]
    pub emit_influence: bool,
}

#[derive(Debug, Args)]
pub struct CostBenefitArgs {
    #[arg(long)]
    pub inputs: Option<PathBuf>,
    #[arg(long)]
    pub constants: Option<PathBuf>,
    #[arg(long)]
    pub exchange_rate: Option<f64>,
    /// Uniform emissions ATT (log points); needs --att-jobs too.
    #[arg(long, requires = "att_jobs", allow_hyphen_values = true)]
    pub att_emissions: Option<f64>,
    #[arg(long, requires = "att_emissions", allow_hyphen_values = true)]
    pub att_jobs: Option<f64>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src {
            $dst = v;
        }
    };
}

impl CommonArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        set!(cfg.seed, self.seed);
    }
}

impl PanelArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if self.panel.is_some() {
            cfg.panel = self.panel.clone();
        }
        if self.mca.is_some() {
            cfg.mca = self.mca.clone();
        }
        if self.outcome.is_some() {
            cfg.outcome = self.outcome.clone();
        }
        cfg.log_outcome |= self.log_outcome;
    }
}

impl EstimatorArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set!(cfg.estimator.method, self.method);
        set!(cfg.estimator.covariates, self.covariates.clone());
        set!(cfg.estimator.base_period, self.base_period);
        set!(cfg.bootstrap.draws, self.draws);
        set!(cfg.bootstrap.level, self.level);
        set!(cfg.bootstrap.band, self.band);
        set!(cfg.bootstrap.multiplier, self.multiplier);
        set!(cfg.bootstrap.scale, self.scale);
        set!(cfg.cluster, self.cluster);
        cfg.emit_influence |= self.emit_influence;
    }
}

impl CostBenefitArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let cb = &mut cfg.costbenefit;
        if self.inputs.is_some() {
            cb.inputs = self.inputs.clone();
        }
        if self.constants.is_some() {
            cb.constants = self.constants.clone();
        }
        if self.exchange_rate.is_some() {
            cb.exchange_rate = self.exchange_rate;
        }
        if let (Some(emissions), Some(jobs)) = (self.att_emissions, self.att_jobs) {
            cb.att = Some(AttProfile::Uniform { emissions, jobs });
        }
    }
}
