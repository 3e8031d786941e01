//! Feedforward and convolutional classifiers with recorded layer inputs.

mod checkpoint;
mod conv;
mod network;
mod train;

pub use checkpoint::{network_hash, Checkpoint, CHECKPOINT_VERSION};
pub use conv::{extract_patches, ConvGeometry};
pub use network::{
    argmax_columns, softmax_columns, Activation, ActivationTrace, ForwardOutput, GradientSet, Layer, LayerSpec, Network,
};
pub use train::{accuracy, fit, predict, train, Schedule, TrainLog};
