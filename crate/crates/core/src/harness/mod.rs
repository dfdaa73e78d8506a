//! Experiment plumbing: configuration, the synthetic twin, data ingestion,
//! gradient checks and the commands of the command-line tool.

mod commands;
mod config;
mod gradcheck;
mod ingest;
mod plant;

pub use commands::{Experiment, Outcome, ThrustReport};
pub use config::{
    side_pressures, ActuationConfig, ActuationKind, ChamberSide, DataConfig, ExperimentConfig, GradcheckConfig,
    GradcheckKind, MaterialConfig, MeshConfig, NotchConfig, PlantConfig, Pressure, QuasistaticConfig, ThrustConfig,
};
pub use gradcheck::{gradcheck, relative_error, GradcheckProblem, GradcheckReport, GradcheckRow};
pub use ingest::{ingest_trial, load_trial_dir, trial_paths, Biquad};
pub use plant::{sub_seed, trial_id, SyntheticPlant};
