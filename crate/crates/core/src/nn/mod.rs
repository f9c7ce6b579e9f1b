//! Fully-connected classifier trained from scratch: forward pass,
//! backpropagation, batch normalisation and Adam.
//!
//! All arithmetic is `f64`. Hidden layers are `Linear -> BatchNorm -> ReLU`,
//! the output layer is `Linear -> Softmax` over two classes (label 1 is the
//! positive, Parkinson's class).

mod adam;
pub mod gradcheck;
mod network;
mod params;
mod train;

pub use adam::{adam_step, AdamState};
pub use network::{
    backward, cross_entropy, forward, forward_eval, predict, ForwardCache, Mode, NormConfig, PROB_FLOOR,
};
pub use params::{
    Activation, Architecture, ArrayRole, BatchNorm, Gradients, Layer, LayerGradients, LayerSpec,
    ParameterSet, REFERENCE_HIDDEN,
};
pub use train::{batch_sizes, fit, train_epoch, Dataset, EpochReport, FitOutcome, TrainConfig};

use crate::seed::Rng;

/// He-normal initialisation of `arch`; see [`ParameterSet::he_init`].
pub fn he_init(arch: &Architecture, rng: &mut Rng) -> ParameterSet {
    ParameterSet::he_init(arch, rng)
}
