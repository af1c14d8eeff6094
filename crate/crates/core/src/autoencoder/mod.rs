//! A small convolutional autoencoder over 32x32 patches whose softmax
//! bottleneck doubles as a soft cluster assignment.

mod io;
mod layers;
mod model;
mod train;

pub use io::{decode_model, encode_model, read_model, write_model, XAEM_MAGIC, XAEM_VERSION};
pub use model::{AeArchitecture, AeModel, AeOutput, HardAeEncoder};
pub use train::{
    gradient_check, loss_and_gradient, reconstruction_stats, train, GradCheckReport,
    ReconstructionStats, TrainConfig,
};

