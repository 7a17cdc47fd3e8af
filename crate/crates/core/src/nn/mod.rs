//! A small differentiable network stack: 3D convolution, dense layers, ReLU,
//! sigmoid and binary cross-entropy, trained with momentum SGD.

mod io;
mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{history_csv, read_model, write_model, WEIGHTS_MAGIC};
pub use model::{bce_loss, Gradients, Model, PROB_EPS};
pub use train::{evaluate, train, EpochStats, Metrics, TrainConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("training error: {0}")]
    Training(String),
    #[error(transparent)]
    Format(#[from] crate::FormatError),
}

/// Dense row-major array.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.contains(&0) {
            return Err(NnError::Shape(format!(
                "shape {shape:?} does not hold {} values",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Binary grid as a `(1, dz, dy, dx)` tensor of {0, 1}.
    pub fn from_grid(grid: &crate::geometry::VoxelGrid) -> Self {
        let [dx, dy, dz] = grid.dims();
        Self {
            shape: vec![1, dz, dy, dx],
            data: grid.to_dense(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Carp,
    Gsp,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Carp => "carp",
            ModelKind::Gsp => "gsp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv3d {
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
    },
    Relu,
    Flatten,
    Dense { inputs: usize, outputs: usize },
    Sigmoid,
}

fn conv_out(n: usize, k: usize, s: usize) -> usize {
    if n < k {
        0
    } else {
        (n - k) / s + 1
    }
}

/// Conv(8, k5, s2) → ReLU → Conv(16, k3, s2) → ReLU → Flatten → Dense(128) →
/// ReLU → Dense(1) → Sigmoid, for a one-channel grid of `dims` (x, y, z).
pub fn default_architecture(dims: [usize; 3]) -> Vec<LayerSpec> {
    let flat = dims
        .iter()
        .map(|&n| conv_out(conv_out(n, 5, 2), 3, 2))
        .product::<usize>()
        * 16;
    vec![
        LayerSpec::Conv3d {
            in_ch: 1,
            out_ch: 8,
            kernel: 5,
            stride: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Conv3d {
            in_ch: 8,
            out_ch: 16,
            kernel: 3,
            stride: 2,
        },
        LayerSpec::Relu,
        LayerSpec::Flatten,
        LayerSpec::Dense {
            inputs: flat,
            outputs: 128,
        },
        LayerSpec::Relu,
        LayerSpec::Dense {
            inputs: 128,
            outputs: 1,
        },
        LayerSpec::Sigmoid,
    ]
}
