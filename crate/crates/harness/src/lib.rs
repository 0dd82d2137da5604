//! Experiment harness: declarative configs, runners for every experiment
//! kind, result files and the numerical-contract check suite.

pub mod checks;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod result;

pub use config::{Experiment, ExperimentConfig, FamilySpec, Table1Target};
pub use error::HarnessError;
pub use experiments::run;
pub use output::{emit, Format};
pub use result::ExperimentResult;
