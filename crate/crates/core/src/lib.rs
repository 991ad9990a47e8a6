//! Staggered difference-in-differences: group-time average treatment effects
//! with a never-treated comparison group, event-study / group / overall
//! aggregation, multiplier-bootstrap inference and a cost-benefit layer.

pub mod panel;
pub mod aggregate;
pub mod costbenefit;
pub mod did;
pub mod inference;
pub mod io;
pub mod synth;
mod linalg;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
