use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use stagdid::costbenefit::{AttProfile, PriceIndex};
use stagdid::did::EstimatorSpec;
use stagdid::inference::BootstrapSpec;
use stagdid::panel::SelectionRules;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cluster {
    #[default]
    Unit,
    Region,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostBenefitConfig {
    pub inputs: Option<PathBuf>,
    /// Constants profile; the bundled default profile when absent.
    pub constants: Option<PathBuf>,
    /// Overlaid on the profile.
    pub exchange_rate: Option<f64>,
    pub price_index: Option<PriceIndex>,
    pub att: Option<AttProfile>,
}

/// Everything a run needs. Loaded from TOML; command-line flags override
/// individual fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub panel: Option<PathBuf>,
    pub mca: Option<PathBuf>,
    pub outcome: Option<String>,
    /// Replace the outcome by its log after sample selection.
    pub log_outcome: bool,
    pub estimator: EstimatorSpec,
    /// `bootstrap.seed` is overwritten by the top-level `seed`.
    pub bootstrap: BootstrapSpec,
    pub cluster: Cluster,
    pub emit_influence: bool,
    pub selection: SelectionRules,
    pub costbenefit: CostBenefitConfig,
    pub dgp: Option<PathBuf>,
    pub replications: usize,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            panel: None,
            mca: None,
            outcome: None,
            log_outcome: false,
            estimator: EstimatorSpec::default(),
            bootstrap: BootstrapSpec::default(),
            cluster: Cluster::Unit,
            emit_influence: false,
            selection: SelectionRules::default(),
            costbenefit: CostBenefitConfig::default(),
            dgp: None,
            replications: 100,
            output: None,
            seed: 0,
        }
    }
}

fn rebase(path: &mut Option<PathBuf>, base: &Path) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl RunConfig {
    /// Parses config text without resolving paths.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config("malformed_config", e.to_string()))
    }

    /// Reads a config file. Relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            let code = if e.kind() == std::io::ErrorKind::NotFound {
                "config_not_found"
            } else {
                "config_unreadable"
            };
            CliError::config(code, e.to_string()).at(path)
        })?;
        let mut cfg = Self::parse(&text).map_err(|e| e.at(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.panel,
            &mut cfg.mca,
            &mut cfg.dgp,
            &mut cfg.output,
            &mut cfg.costbenefit.inputs,
            &mut cfg.costbenefit.constants,
        ] {
            rebase(p, base);
        }
        Ok(cfg)
    }

    pub fn require_output(&self) -> Result<&Path, CliError> {
        self.output
            .as_deref()
            .ok_or_else(|| CliError::config("missing_output", "no output directory given"))
    }

    pub fn require_panel(&self) -> Result<&Path, CliError> {
        self.panel
            .as_deref()
            .ok_or_else(|| CliError::config("missing_panel", "no panel input given"))
    }

    pub fn require_outcome(&self) -> Result<&str, CliError> {
        self.outcome
            .as_deref()
            .ok_or_else(|| CliError::config("missing_outcome", "no outcome given"))
    }

    pub fn bootstrap_spec(&self) -> BootstrapSpec {
        BootstrapSpec {
            seed: self.seed,
            ..self.bootstrap.clone()
        }
    }

    /// The config as echoed into the manifest. The output directory is left
    /// out so identical runs written to different places match byte for
    /// byte.
    pub fn echo(&self) -> Self {
        Self {
            output: None,
            bootstrap: self.bootstrap_spec(),
            ..self.clone()
        }
    }
}
