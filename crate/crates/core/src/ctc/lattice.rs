use super::{check_target, log_add, required_frames, Alphabet, CtcError, SequenceLogits};
use crate::nn::Tensor;

/// Forward and backward variables over the blank-interleaved target.
///
/// `log_alpha[t][s]` is the log probability of all path prefixes ending in
/// state `s` at frame `t`, emissions up to and including `t`.
/// `log_beta[t][s]` covers the suffix after frame `t` given state `s` at `t`,
/// so `alpha + beta` at `(t, s)` is the mass of every complete path through
/// that state.
#[derive(Debug, Clone)]
pub struct AlignmentLattice {
    extended: Vec<usize>,
    frames: usize,
    log_alpha: Vec<f64>,
    log_beta: Vec<f64>,
}

impl AlignmentLattice {
    /// Builds the lattice from row-major log-probabilities `[T, classes]`.
    pub fn compute(
        log_probs: &[f64],
        classes: usize,
        target: &[usize],
    ) -> Result<Self, CtcError> {
        check_target(target, classes)?;
        let frames = log_probs.len() / classes;
        let required = required_frames(target);
        if frames < required {
            return Err(CtcError::Infeasible {
                target_len: target.len(),
                frames,
                required,
            });
        }
        let mut extended = Vec::with_capacity(2 * target.len() + 1);
        extended.push(Alphabet::BLANK);
        for &l in target {
            extended.push(l);
            extended.push(Alphabet::BLANK);
        }
        let s_len = extended.len();
        let lp = |t: usize, s: usize| log_probs[t * classes + extended[s]];
        // state s may be entered from s-2 when it is a label differing from s-2
        let skip_ok = |s: usize| s >= 2 && extended[s] != Alphabet::BLANK && extended[s] != extended[s - 2];

        let ninf = f64::NEG_INFINITY;
        let mut log_alpha = vec![ninf; frames * s_len];
        log_alpha[0] = lp(0, 0);
        if s_len > 1 {
            log_alpha[1] = lp(0, 1);
        }
        for t in 1..frames {
            let (prev, cur) = log_alpha.split_at_mut(t * s_len);
            let prev = &prev[(t - 1) * s_len..];
            for s in 0..s_len {
                let mut acc = prev[s];
                if s >= 1 {
                    acc = log_add(acc, prev[s - 1]);
                }
                if skip_ok(s) {
                    acc = log_add(acc, prev[s - 2]);
                }
                cur[s] = if acc == ninf { ninf } else { acc + lp(t, s) };
            }
        }

        let mut log_beta = vec![ninf; frames * s_len];
        let last = (frames - 1) * s_len;
        log_beta[last + s_len - 1] = 0.0;
        if s_len > 1 {
            log_beta[last + s_len - 2] = 0.0;
        }
        for t in (0..frames - 1).rev() {
            let (cur, next) = log_beta.split_at_mut((t + 1) * s_len);
            let cur = &mut cur[t * s_len..];
            let next = &next[..s_len];
            for s in 0..s_len {
                let mut acc = next[s] + lp(t + 1, s);
                if s + 1 < s_len {
                    acc = log_add(acc, next[s + 1] + lp(t + 1, s + 1));
                }
                if s + 2 < s_len && skip_ok(s + 2) {
                    acc = log_add(acc, next[s + 2] + lp(t + 1, s + 2));
                }
                cur[s] = acc;
            }
        }
        Ok(AlignmentLattice {
            extended,
            frames,
            log_alpha,
            log_beta,
        })
    }

    pub fn extended_target(&self) -> &[usize] {
        &self.extended
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn states(&self) -> usize {
        self.extended.len()
    }

    pub fn log_alpha(&self, t: usize, s: usize) -> f64 {
        self.log_alpha[t * self.states() + s]
    }

    pub fn log_beta(&self, t: usize, s: usize) -> f64 {
        self.log_beta[t * self.states() + s]
    }

    /// Total log-likelihood from the final forward variables.
    pub fn log_likelihood_alpha(&self) -> f64 {
        let s = self.states();
        let t = self.frames - 1;
        let mut total = self.log_alpha(t, s - 1);
        if s > 1 {
            total = log_add(total, self.log_alpha(t, s - 2));
        }
        total
    }

    /// Total log-likelihood from the initial backward variables.
    pub fn log_likelihood_beta(&self) -> f64 {
        let mut total = self.log_alpha(0, 0) + self.log_beta(0, 0);
        if self.states() > 1 {
            total = log_add(total, self.log_alpha(0, 1) + self.log_beta(0, 1));
        }
        total
    }

    /// Posterior probability of each lattice state at each frame,
    /// `[T * states]`. Every frame sums to one.
    pub fn state_posteriors(&self) -> Vec<f64> {
        let total = self.log_likelihood_alpha();
        self.log_alpha
            .iter()
            .zip(&self.log_beta)
            .map(|(a, b)| (a + b - total).exp())
            .collect()
    }
}

/// Loss value and its gradient with respect to the logits.
#[derive(Debug, Clone)]
pub struct CtcLoss {
    pub loss: f64,
    pub grad: Tensor,
}

/// Negative log-likelihood of `target` under the CTC distribution defined
/// by `logits`, with the exact gradient `softmax - posterior marginals`.
pub fn ctc_loss(logits: &SequenceLogits, target: &[usize]) -> Result<CtcLoss, CtcError> {
    let classes = logits.classes();
    let log_probs = logits.log_softmax();
    let lattice = AlignmentLattice::compute(&log_probs, classes, target)?;
    let total = lattice.log_likelihood_alpha();
    let s_len = lattice.states();
    let mut grad: Vec<f64> = log_probs.iter().map(|v| v.exp()).collect();
    for t in 0..lattice.frames() {
        let row = &mut grad[t * classes..(t + 1) * classes];
        // accumulate per class in log domain to keep tiny posteriors exact
        let mut occupancy = vec![f64::NEG_INFINITY; classes];
        for s in 0..s_len {
            let k = lattice.extended[s];
            occupancy[k] = log_add(occupancy[k], lattice.log_alpha(t, s) + lattice.log_beta(t, s));
        }
        for (g, occ) in row.iter_mut().zip(occupancy) {
            *g -= (occ - total).exp();
        }
    }
    Ok(CtcLoss {
        loss: -total,
        grad: Tensor::from_vec(&[logits.frames(), classes], grad)?,
    })
}

/// Log-probability of a labeling, `-ctc_loss`; `-inf` when infeasible.
pub fn log_probability(logits: &SequenceLogits, target: &[usize]) -> Result<f64, CtcError> {
    let log_probs = logits.log_softmax();
    match AlignmentLattice::compute(&log_probs, logits.classes(), target) {
        Ok(lattice) => Ok(lattice.log_likelihood_alpha()),
        Err(CtcError::Infeasible { .. }) => Ok(f64::NEG_INFINITY),
        Err(e) => Err(e),
    }
}
