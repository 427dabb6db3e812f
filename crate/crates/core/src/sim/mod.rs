//! Synthetic 2.5D terrain worlds, kinematic bicycle stepping, ground-truth
//! traversability generation, and self-supervised episode collection with
//! ID/OOD dataset construction.

mod bicycle;
mod episodes;
mod ground_truth;
mod terrain;

pub use bicycle::{step_bicycle, ControlInput, RobotParams, RobotState};
pub use episodes::{
    collect_episodes, label_ood, load_records, percentile_nearest_rank, save_records,
    split_dataset, DatasetRecord, DatasetSplit, EpisodeConfig,
};
pub use ground_truth::{ground_truth_traversability, GroundTruthConfig};
pub use terrain::{MapGenConfig, Semantic, TerrainMap};
