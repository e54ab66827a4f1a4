//! A small sequential convolutional network with exact backpropagation.
//!
//! Tensors are batches laid out as `(n, channels, height, width)`; dense
//! activations use `(n, features, 1, 1)`.

pub mod layers;
pub mod network;
pub mod train;

pub use layers::{Layer, LayerSpec, Padding};
pub use network::{build_preset, load_checkpoint, save_checkpoint, Network, NetworkSpec, Preset};
pub use train::{train, Dataset, History, Optimizer, TrainConfig};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: [usize; 4],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: [usize; 4]) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Values per batch item.
    pub fn item_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    pub fn item(&self, i: usize) -> &[f64] {
        let l = self.item_len();
        &self.data[i * l..(i + 1) * l]
    }

    /// `(channels, height, width)` of one item.
    pub fn item_shape(&self) -> (usize, usize, usize) {
        (self.shape[1], self.shape[2], self.shape[3])
    }
}
