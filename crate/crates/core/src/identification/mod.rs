//! Optimizers and the material-identification pipeline.

mod cmaes;
mod optim;
mod pipeline;

pub use cmaes::{cmaes_minimize, CmaesConfig};
pub use optim::{adam_minimize, grid_search, AdamConfig, Bounds, Iterate, OptimResult};
pub use pipeline::{
    default_bounds, default_start, identify_materials, Data, GridConfig, HistoryEntry, IdentificationResult,
    IdentifyConfig, Method,
};
