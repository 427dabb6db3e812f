//! The evidential traversability predictor: feature extraction, the shared
//! encoder with per-parameter decoders, flow-based evidence with a
//! downscaling head, the physics-prior posterior update, the training loop,
//! and CVaR map generation for the planner.

pub mod cvar_map;
pub mod feature;
mod network;
mod train;

pub use cvar_map::{build_cvar_maps, CvarMapStack, PriorModel, TravModel, UniformModel};
pub use feature::{extract_feature, footprint_at, FeatureConfig, TerrainFeature};
pub use network::{
    EvidenceMode, EvidentialConfig, EvidentialNet, EvidentialPrediction, PriorKind,
};
pub use train::{end_to_end_grad_check, eval_emd2, train, TrainCurves};
