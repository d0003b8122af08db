//! Minimal neural toolkit with hand-derived gradients, the P-NN positioning
//! network and the fully connected and nearest-neighbour baselines.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod knn;
pub mod layers;
pub mod model;
pub mod param;
pub mod pnn;
pub mod train;

pub use adam::Adam;
pub use attention::SelfAttention;
pub use knn::knn_classify;
pub use layers::{Conv2d, Dense, Mlp};
pub use model::{Fcl, Head, Label, Model, Prediction};
pub use param::{Param, ParamRef, Parameters};
pub use pnn::{Branches, Pnn, PnnConfig, PnnInput};
pub use train::{evaluate_loss, predict_all, train, TrainConfig};

pub type Pnn32 = pnn::Pnn<f32>;
pub type Pnn64 = pnn::Pnn<f64>;
pub type Fcl32 = model::Fcl<f32>;
pub type Fcl64 = model::Fcl<f64>;
