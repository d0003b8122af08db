//! Experiment harness: zone layouts, simulated datasets, feature-size
//! selection runs, learner training and evaluation, and result files.

pub mod ablation;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod runs;
pub mod selection;
pub mod zones;

pub use ablation::{ablation, AblationReport};
pub use config::{Environment, ExperimentConfig, Learner, Task};
pub use dataset::{generate_dataset, generate_split, Dataset, Sample, Setup, Split};
pub use error::{Error, Result};
pub use experiment::{run_cell, run_experiment, MetricsReport, PredictionRow};
pub use selection::run_size_selection;
pub use zones::{zone_of, ZoneLayout};
