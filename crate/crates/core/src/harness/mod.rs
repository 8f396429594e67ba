//! End-to-end pipelines: perturbation, ego training, evaluation and run manifests.

pub mod config;
pub mod ego;
pub mod evaluate;
pub mod manifest;
pub mod pipeline;
pub mod perturb;
pub mod suite;
pub mod train;

pub use config::RunConfig;
pub use ego::{EgoController, EgoParamBounds, EgoParams};
pub use evaluate::{evaluate, evaluate_scenario, EgoSpec, EvalSettings, Evaluation};
pub use manifest::{sha256_file, RunManifest};
pub use perturb::{perturb_scenario, GeneratorConfig, GeneratorPreset, Models};
pub use train::{train_ego, CemConfig, Curriculum, TrainResult};
