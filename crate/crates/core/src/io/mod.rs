//! File formats: panel / MCA / cost-benefit CSV inputs, TOML profiles and
//! report writers.

mod inputs;
mod reports;

use thiserror::Error;

pub use inputs::{
    parse_constants, parse_dgp, parse_selection_rules, read_cb_inputs, read_mca_csv,
    read_panel_csv, write_panel_csv,
};
pub use reports::{
    aggregation_csv, att_gt_csv, att_gt_json, cost_benefit_csv, cost_benefit_plots, PlotFile,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("csv: {0}")]
    Csv(String),
    #[error("missing required column {0:?}")]
    MissingColumn(String),
    #[error("unrecognized column {0:?}")]
    UnknownColumn(String),
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("line {line}, column {column}: cannot parse {value:?}")]
    BadValue {
        line: u64,
        column: String,
        value: String,
    },
    #[error("line {line}: required value in column {column} is empty")]
    EmptyValue { line: u64, column: String },
    #[error("toml: {0}")]
    Toml(String),
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv(e.to_string())
    }
}

impl From<toml::de::Error> for IoError {
    fn from(e: toml::de::Error) -> Self {
        IoError::Toml(e.to_string())
    }
}
