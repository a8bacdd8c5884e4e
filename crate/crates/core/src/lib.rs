//! Runs ultimatum and gambling games against chat agents and estimates
//! inequity-aversion and prospect-theory preferences from the answers.

pub mod agents;
pub mod estimation;
pub mod games;
pub mod optim;
pub mod parser;
pub mod pipeline;
pub mod promptkit;
pub mod runner;

pub use estimation::{CptParams, FitResult, FsParams};
pub use games::{Condition, Domain, ExperimentPlan, Game, GameConfig, GgConfig, Lottery, Role, UgConfig};
pub use optim::{minimize, Bounds, MinimizeOptions, MinimizeResult};
pub use parser::ParsedDecision;
pub use runner::{RunSummary, TrialRecord};

/// Toolkit version recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
