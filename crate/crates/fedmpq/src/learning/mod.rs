//! Desk-scale training substrate: synthetic federations, small
//! classifiers, local SGD, and evaluation.

pub mod data;
pub mod model;
pub mod train;

pub use data::{gen_synthetic_federation, Dataset, FederationConfig, FederationData};
pub use model::{evaluate, loss_and_grad, ModelArch, ModelState};
pub use train::{apply_server_update, local_train, TrainConfig};
