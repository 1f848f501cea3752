//! Exhaustive path enumeration, used to verify the dynamic-programming loss.

use super::{check_target, collapse, CtcError, SequenceLogits};

pub const MAX_FRAMES: usize = 8;
/// Largest label-character count (blank excluded) the oracle accepts.
pub const MAX_LABEL_CLASSES: usize = 3;

/// `-log` of the summed probability of every frame path collapsing to
/// `target`, computed by visiting all `classes^T` paths.
pub fn brute_force_loss(logits: &SequenceLogits, target: &[usize]) -> Result<f64, CtcError> {
    let (frames, classes) = (logits.frames(), logits.classes());
    if frames > MAX_FRAMES || classes > MAX_LABEL_CLASSES + 1 {
        return Err(CtcError::TooLarge { frames, classes });
    }
    check_target(target, classes)?;
    let probs: Vec<Vec<f64>> = (0..frames)
        .map(|t| {
            let row = logits.row(t);
            let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
            row.iter().map(|v| (v - m).exp() / z).collect()
        })
        .collect();
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        if collapse(&path) == target {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &k)| probs[t][k])
                .product::<f64>();
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == frames {
                return Ok(-total.ln());
            }
            path[pos] += 1;
            if path[pos] < classes {
                break;
            }
            path[pos] = 0;
            pos += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_frame_uniform_is_ln2() {
        let logits = SequenceLogits::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let v = brute_force_loss(&logits, &[1]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn empty_target_is_all_blank_path() {
        let rows = vec![vec![0.3, -0.2, 1.0], vec![-1.0, 0.5, 0.1]];
        let logits = SequenceLogits::from_rows(&rows).unwrap();
        let blank_prob = |r: &Vec<f64>| r[0].exp() / r.iter().map(|v| v.exp()).sum::<f64>();
        let expected = -(blank_prob(&rows[0]) * blank_prob(&rows[1])).ln();
        assert!((brute_force_loss(&logits, &[]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_large_instances() {
        let logits = SequenceLogits::from_rows(&vec![vec![0.0; 2]; 9]).unwrap();
        assert!(matches!(
            brute_force_loss(&logits, &[1]),
            Err(CtcError::TooLarge { .. })
        ));
        let logits = SequenceLogits::from_rows(&[vec![0.0; 5]]).unwrap();
        assert!(brute_force_loss(&logits, &[1]).is_err());
    }
}
