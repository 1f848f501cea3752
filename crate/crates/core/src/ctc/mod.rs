//! Connectionist temporal classification.
//!
//! Per-frame scores over `|alphabet| + 1` classes (blank = 0) are turned
//! into a distribution over label strings by summing over every frame path
//! that collapses to the string. The loss and its gradient come from the
//! log-domain forward-backward recursions over the blank-interleaved
//! target.

mod alphabet;
mod decode;
mod lattice;
pub mod oracle;

use thiserror::Error;

use crate::nn::{NnError, Tensor};

pub use alphabet::Alphabet;
pub use decode::{beam_decode, beam_search, collapse, greedy_decode, Hypothesis};
pub use lattice::{ctc_loss, log_probability, AlignmentLattice, CtcLoss};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CtcError {
    #[error(
        "target of length {target_len} needs at least {required} frames but only {frames} are available"
    )]
    Infeasible {
        target_len: usize,
        frames: usize,
        required: usize,
    },
    #[error("label index {index} is out of range for {classes} classes (0 is the blank)")]
    InvalidLabel { index: usize, classes: usize },
    #[error("logits must have at least one frame and two classes, got shape {0:?}")]
    InvalidLogits(Vec<usize>),
    #[error("beam width must be at least 1")]
    InvalidWidth,
    #[error("instance too large to enumerate: {frames} frames, {classes} classes")]
    TooLarge { frames: usize, classes: usize },
    #[error("alphabet is empty")]
    EmptyAlphabet,
    #[error("duplicate alphabet class {0:?}")]
    DuplicateClass(char),
    #[error("invalid alphabet file: {0}")]
    InvalidAlphabetFile(String),
    #[error("characters missing from the alphabet: {}", .0.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(", "))]
    MissingCharacters(Vec<char>),
    #[error(transparent)]
    Tensor(#[from] NnError),
}

/// Per-frame unnormalized class scores, `[T, classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceLogits(Tensor);

impl SequenceLogits {
    pub fn new(tensor: Tensor) -> Result<Self, CtcError> {
        match tensor.shape() {
            &[t, c] if t >= 1 && c >= 2 => Ok(SequenceLogits(tensor)),
            s => Err(CtcError::InvalidLogits(s.to_vec())),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, CtcError> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(CtcError::InvalidLogits(vec![rows.len(), c]));
        }
        let data = rows.iter().flatten().copied().collect();
        SequenceLogits::new(Tensor::from_vec(&[rows.len(), c], data)?)
    }

    pub fn frames(&self) -> usize {
        self.0.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.0.shape()[1]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let c = self.classes();
        &self.0.data()[t * c..(t + 1) * c]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    /// Row-wise log-softmax, `[T * classes]` row-major.
    pub fn log_softmax(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.0.len());
        for t in 0..self.frames() {
            let row = self.row(t);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|v| v - lse));
        }
        out
    }
}

/// `log(exp(a) + exp(b))` with `-inf` as the additive identity.
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Minimum number of frames able to emit `target`: one per label plus a
/// separating blank between equal neighbours.
pub fn required_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

pub(crate) fn check_target(target: &[usize], classes: usize) -> Result<(), CtcError> {
    for &index in target {
        if index == Alphabet::BLANK || index >= classes {
            return Err(CtcError::InvalidLabel { index, classes });
        }
    }
    Ok(())
}
