//! Dense tensors and hand-differentiated layer kernels.
//!
//! All image tensors use NCHW layout. Each kernel exposes a forward function
//! and a backward function computing exact gradients of that same forward
//! computation; there is no autodiff graph.

mod activation;
mod batchnorm;
mod conv;
pub mod gemm;
mod gradcheck;
mod pool;
mod tensor;

use std::fmt;

use thiserror::Error;

pub use activation::{activation_backward, activation_forward, Activation};
pub use batchnorm::{
    batchnorm_backward, batchnorm_forward, BatchNormCache, BatchNormMode, BatchNormState,
    BN_EPSILON, BN_MOMENTUM,
};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads};
pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use pool::{maxpool_backward, maxpool_forward, PoolCache};
pub use tensor::{Parameter, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("{op}: shape mismatch, expected {expected:?} but found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("expected a rank-{expected} tensor, found shape {shape:?}")]
    Rank { expected: usize, shape: Vec<usize> },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("{op}: output would be empty for input {height}x{width}")]
    EmptyOutput {
        op: &'static str,
        height: usize,
        width: usize,
    },
    #[error("batch normalization in train mode needs at least 2 values per channel, got {0}")]
    BatchTooSmall(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    MaxPool,
    BatchNorm,
    Activation(Activation),
}

/// One layer of a convolutional stack: kernel, stride and padding are
/// `[height, width]` pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub kernel: [usize; 2],
    pub stride: [usize; 2],
    pub padding: [usize; 2],
    pub channels_out: usize,
}

impl LayerSpec {
    /// Stride-1 convolution.
    pub fn conv(kernel: [usize; 2], padding: [usize; 2], channels_out: usize) -> Self {
        LayerSpec {
            kind: LayerKind::Conv,
            kernel,
            stride: [1, 1],
            padding,
            channels_out,
        }
    }

    pub fn max_pool(kernel: [usize; 2], stride: [usize; 2]) -> Self {
        LayerSpec {
            kind: LayerKind::MaxPool,
            kernel,
            stride,
            padding: [0, 0],
            channels_out: 0,
        }
    }

    pub fn batch_norm() -> Self {
        LayerSpec {
            kind: LayerKind::BatchNorm,
            kernel: [1, 1],
            stride: [1, 1],
            padding: [0, 0],
            channels_out: 0,
        }
    }

    pub fn activation(kind: Activation) -> Self {
        LayerSpec {
            kind: LayerKind::Activation(kind),
            kernel: [1, 1],
            stride: [1, 1],
            padding: [0, 0],
            channels_out: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.kernel.contains(&0) || self.stride.contains(&0) {
            return Err(NnError::InvalidSpec(format!(
                "kernel and stride must be >= 1 in {self}"
            )));
        }
        if self.kind == LayerKind::Conv && self.channels_out == 0 {
            return Err(NnError::InvalidSpec(format!(
                "convolution needs channels_out >= 1 in {self}"
            )));
        }
        if self.kind == LayerKind::MaxPool
            && (self.padding[0] >= self.kernel[0] || self.padding[1] >= self.kernel[1])
        {
            return Err(NnError::InvalidSpec(format!(
                "pool padding must be smaller than the window in {self}"
            )));
        }
        Ok(())
    }

    /// Spatial output extents for an input of `height x width`.
    pub fn output_hw(&self, height: usize, width: usize) -> Result<(usize, usize), NnError> {
        self.validate()?;
        match self.kind {
            LayerKind::Conv | LayerKind::MaxPool => {
                let op = if self.kind == LayerKind::Conv {
                    "conv2d"
                } else {
                    "maxpool"
                };
                let ph = height + 2 * self.padding[0];
                let pw = width + 2 * self.padding[1];
                if ph < self.kernel[0] || pw < self.kernel[1] {
                    return Err(NnError::EmptyOutput { op, height, width });
                }
                Ok((
                    (ph - self.kernel[0]) / self.stride[0] + 1,
                    (pw - self.kernel[1]) / self.stride[1] + 1,
                ))
            }
            LayerKind::BatchNorm | LayerKind::Activation(_) => Ok((height, width)),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [kh, kw] = self.kernel;
        let [sh, sw] = self.stride;
        let [ph, pw] = self.padding;
        match self.kind {
            LayerKind::Conv => write!(
                f,
                "conv:{kh}x{kw}:s{sh}x{sw}:p{ph}x{pw}:{}",
                self.channels_out
            ),
            LayerKind::MaxPool => write!(f, "pool:{kh}x{kw}:s{sh}x{sw}:p{ph}x{pw}"),
            LayerKind::BatchNorm => f.write_str("bn"),
            LayerKind::Activation(a) => f.write_str(a.name()),
        }
    }
}

impl std::str::FromStr for LayerSpec {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || NnError::InvalidSpec(format!("cannot parse layer {s:?}"));
        let pair = |t: &str, prefix: &str| -> Result<[usize; 2], NnError> {
            let t = t.strip_prefix(prefix).ok_or_else(bad)?;
            let (a, b) = t.split_once('x').ok_or_else(bad)?;
            Ok([
                a.parse().map_err(|_| bad())?,
                b.parse().map_err(|_| bad())?,
            ])
        };
        let parts: Vec<&str> = s.split(':').collect();
        let spec = match parts[..] {
            ["conv", k, st, p, c] => LayerSpec {
                kind: LayerKind::Conv,
                kernel: pair(k, "")?,
                stride: pair(st, "s")?,
                padding: pair(p, "p")?,
                channels_out: c.parse().map_err(|_| bad())?,
            },
            ["pool", k, st, p] => LayerSpec {
                kind: LayerKind::MaxPool,
                kernel: pair(k, "")?,
                stride: pair(st, "s")?,
                padding: pair(p, "p")?,
                channels_out: 0,
            },
            ["bn"] => LayerSpec::batch_norm(),
            [name] => LayerSpec::activation(Activation::from_name(name).ok_or_else(bad)?),
            _ => return Err(bad()),
        };
        spec.validate()?;
        Ok(spec)
    }
}
