use std::path::Path;

use serde::Serialize;

use stagdid::aggregate::AggregationError;
use stagdid::costbenefit::CostBenefitError;
use stagdid::did::EstimationError;
use stagdid::inference::InferenceError;
use stagdid::io::IoError;
use stagdid::panel::PanelError;
use stagdid::synth::DgpError;

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    Infeasible,
    Input,
    Config,
}

impl ExitKind {
    pub fn code(self) -> i32 {
        match self {
            ExitKind::Infeasible => 1,
            ExitKind::Input => 2,
            ExitKind::Config => 3,
        }
    }
}

/// A failed run, printed to stderr as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    #[serde(skip)]
    pub kind: ExitKind,
    pub error: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl CliError {
    pub fn new(kind: ExitKind, error: &str, message: impl Into<String>) -> Self {
        Self {
            kind,
            error: error.to_string(),
            message: message.into(),
            path: None,
        }
    }

    pub fn at(mut self, path: &Path) -> Self {
        self.path = Some(path.display().to_string());
        self
    }

    pub fn input(error: &str, message: impl Into<String>) -> Self {
        Self::new(ExitKind::Input, error, message)
    }

    pub fn config(error: &str, message: impl Into<String>) -> Self {
        Self::new(ExitKind::Config, error, message)
    }

    pub fn infeasible(error: &str, message: impl Into<String>) -> Self {
        Self::new(ExitKind::Infeasible, error, message)
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.code()
    }

    pub fn record(&self) -> String {
        let mut v = serde_json::to_value(self).expect("serializable error");
        v["exit_code"] = self.exit_code().into();
        v.to_string()
    }

    /// Failure to open or read an input file.
    pub fn read(path: &Path, e: std::io::Error) -> Self {
        let code = if e.kind() == std::io::ErrorKind::NotFound {
            "input_not_found"
        } else {
            "input_unreadable"
        };
        Self::input(code, e.to_string()).at(path)
    }

    pub fn write(path: &Path, e: std::io::Error) -> Self {
        Self::config("output_not_writable", e.to_string()).at(path)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        let code = match &e {
            IoError::Csv(_) => "malformed_csv",
            IoError::MissingColumn(_) => "missing_column",
            IoError::UnknownColumn(_) => "unknown_column",
            IoError::DuplicateColumn(_) => "duplicate_column",
            IoError::BadValue { .. } => "bad_value",
            IoError::EmptyValue { .. } => "empty_value",
            IoError::Toml(_) => return Self::config("malformed_toml", e.to_string()),
        };
        Self::input(code, e.to_string())
    }
}

impl From<PanelError> for CliError {
    fn from(e: PanelError) -> Self {
        let (kind, code) = match &e {
            PanelError::EmptyInput => (ExitKind::Input, "empty_input"),
            PanelError::ConflictingGroup { .. } => (ExitKind::Input, "conflicting_group"),
            PanelError::NonIntegerPeriod { .. } => (ExitKind::Input, "non_integer_period"),
            PanelError::DuplicateCell { .. } => (ExitKind::Input, "duplicate_cell"),
            PanelError::NoCompleteUnits => (ExitKind::Input, "no_complete_units"),
            PanelError::UnmappedUnit(_) => (ExitKind::Input, "unmapped_unit"),
            PanelError::AmbiguousMapping { .. } => (ExitKind::Input, "ambiguous_mapping"),
            PanelError::NonpositiveValue { .. } => (ExitKind::Input, "nonpositive_value"),
            PanelError::MissingPopulation(_) => (ExitKind::Input, "missing_population"),
            PanelError::MissingRegion(_) => (ExitKind::Input, "missing_region"),
            PanelError::Invalid(_) => (ExitKind::Input, "invalid_panel"),
            PanelError::UnknownOutcome(_) => (ExitKind::Config, "unknown_outcome"),
            PanelError::UnknownPeriod(_) => (ExitKind::Config, "unknown_period"),
        };
        Self::new(kind, code, e.to_string())
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        let kind = match &e {
            EstimationError::InvalidSpec(_)
            | EstimationError::UnknownOutcome(_)
            | EstimationError::UnknownCovariate(_)
            | EstimationError::UnknownPeriod(_)
            | EstimationError::InvalidGroup(_) => ExitKind::Config,
            _ => ExitKind::Infeasible,
        };
        Self::new(kind, e.code(), e.to_string())
    }
}

impl From<AggregationError> for CliError {
    fn from(e: AggregationError) -> Self {
        Self::infeasible("no_feasible_cells", e.to_string())
    }
}

impl From<InferenceError> for CliError {
    fn from(e: InferenceError) -> Self {
        match &e {
            InferenceError::TooFewDraws(_) => Self::config("too_few_draws", e.to_string()),
            InferenceError::InvalidLevel(_) => Self::config("invalid_level", e.to_string()),
            InferenceError::ClusterMismatch => Self::input("cluster_mismatch", e.to_string()),
            InferenceError::RaggedInfluence => Self::infeasible("ragged_influence", e.to_string()),
            InferenceError::NoPlaceboCells => Self::infeasible("no_placebo_cells", e.to_string()),
        }
    }
}

impl From<CostBenefitError> for CliError {
    fn from(e: CostBenefitError) -> Self {
        let (kind, code) = match &e {
            CostBenefitError::NoInputs => (ExitKind::Input, "no_inputs"),
            CostBenefitError::EmptyYear(_) => (ExitKind::Input, "empty_year"),
            CostBenefitError::MissingPopulation { .. } => (ExitKind::Input, "missing_population"),
            CostBenefitError::MissingWage(_) => (ExitKind::Input, "missing_wage"),
            CostBenefitError::InconsistentWage { .. } => (ExitKind::Input, "inconsistent_wage"),
            CostBenefitError::MissingAdoptionYear { .. } => (ExitKind::Input, "missing_adoption_year"),
            CostBenefitError::MissingPriceIndex(_) => (ExitKind::Config, "missing_price_index"),
            CostBenefitError::InvalidConstant(_) => (ExitKind::Config, "invalid_constant"),
            CostBenefitError::ZeroCost => (ExitKind::Infeasible, "zero_cost"),
        };
        Self::new(kind, code, e.to_string())
    }
}

impl From<DgpError> for CliError {
    fn from(e: DgpError) -> Self {
        Self::config("invalid_dgp", e.to_string())
    }
}
