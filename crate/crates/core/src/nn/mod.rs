//! A small 3D convolutional network engine with hand-written backward passes.

mod adam;
mod io;
pub mod layers;
mod loss;
mod network;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, DEFAULT_LR};
pub use io::{load_weights, save_weights, weights_checksum, WeightsError};
pub use layers::{layer_backward, layer_forward, Cache, LayerGrads, LayerKind, LayerSpec, LayerWeights, Mode};
pub use loss::{soft_dice_loss, sum_squares_loss};
pub use network::{build_network, Grads, Network, NetworkSpec, Role, SkipPolicy, Tape};

use thiserror::Error;

use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("layer {layer}: expected {expected}, got shape {found:?}")]
    ShapeMismatch { layer: String, expected: String, found: Vec<usize> },
    #[error("layer {layer}: cache from a {cache} forward pass")]
    CacheMismatch { layer: String, cache: &'static str },
    #[error("layer {layer}: skip slot {slot} is empty")]
    MissingSkip { layer: String, slot: usize },
    #[error("spatial dims {dims:?} are not divisible by {multiple}; pad by {padding:?}")]
    IndivisibleDims { dims: [usize; 3], multiple: usize, padding: [usize; 3] },
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("loss inputs: {0}")]
    LossInput(String),
    #[error("weights do not match the network: {0}")]
    WeightsMismatch(String),
}

/// Per-weights collection of `LayerWeights`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T = f32> {
    pub layers: Vec<LayerWeights<T>>,
}

impl<T: Scalar> Weights<T> {
    pub fn cast<U: Scalar>(&self) -> Weights<U> {
        Weights {
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    name: l.name.clone(),
                    params: l.params.iter().map(Tensor::cast).collect(),
                    buffers: l.buffers.iter().map(Tensor::cast).collect(),
                })
                .collect(),
        }
    }

    /// Same structure with every tensor zeroed.
    pub fn zeros_like(&self) -> Self {
        Weights {
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    name: l.name.clone(),
                    params: l.params.iter().map(|t| Tensor::zeros(t.shape())).collect(),
                    buffers: l.buffers.iter().map(|t| Tensor::zeros(t.shape())).collect(),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().flat_map(|l| &l.params).map(Tensor::len).sum()
    }
}
