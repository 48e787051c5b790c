//! Experiment harness for streaming design thinning: candidate streams,
//! selectors, oracles, traces and replications.

pub mod experiment;
pub mod histogram;
pub mod oracle;
pub mod replicate;
pub mod stream;
pub mod trace;

pub use experiment::{
    run_experiment, ExperimentConfig, MethodConfig, MethodKind, ModeKind, RunOptions, RunReport, Summary,
};
pub use oracle::OracleName;
pub use replicate::{run_replications, ReplicationReport};
pub use stream::{Model, Source, StreamSpec};
