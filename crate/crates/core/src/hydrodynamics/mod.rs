//! Thrust of the swimming tail: Lighthill's reduced elongated-body
//! estimate, the load-cell measurement dynamics, and a learned predictor.

mod ebt;
mod loadcell;
mod mlp;
mod trial;

pub use ebt::{ebt_thrust, time_averaged_thrust, virtual_mass, EbtParams, DEFAULT_DEPTH, WATER_DENSITY};
pub use loadcell::{load_cell_response, LoadCellParams};
pub use mlp::{
    evaluate_thrust_model, predict_thrust, prediction_table, r_squared, train_thrust_model, trial_predictions,
    Layer, Normalization, ThrustMetrics, ThrustModel, TrainConfig, TrainingLog, TrialReport, DEFAULT_HIDDEN,
    MODEL_FORMAT, MODEL_VERSION, STD_FLOOR,
};
pub use trial::{
    build_thrust_dataset, features_from_trial, SplitSpec, ThrustSamples, ThrustTrial, NUM_FEATURES, NUM_MARKERS,
    SAMPLING_TOLERANCE,
};
