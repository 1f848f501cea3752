use std::collections::BTreeMap;

use super::{log_add, Alphabet, CtcError, SequenceLogits};

/// Merges adjacent repeats, then drops blanks.
pub fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &k in path {
        if Some(k) != prev && k != Alphabet::BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

/// Best-path decoding: per-frame argmax (lowest index on ties), collapsed.
pub fn greedy_decode(logits: &SequenceLogits) -> Vec<usize> {
    let path: Vec<usize> = (0..logits.frames())
        .map(|t| {
            let row = logits.row(t);
            let mut best = 0;
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = k;
                }
            }
            best
        })
        .collect();
    collapse(&path)
}

/// A decoded labeling with its log-probability as tracked by the search.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub log_prob: f64,
}

#[derive(Clone, Copy)]
struct PrefixScore {
    /// paths ending in blank
    blank: f64,
    /// paths ending in the prefix's last label
    label: f64,
}

impl PrefixScore {
    const EMPTY: PrefixScore = PrefixScore {
        blank: f64::NEG_INFINITY,
        label: f64::NEG_INFINITY,
    };

    fn total(self) -> f64 {
        log_add(self.blank, self.label)
    }
}

/// Prefix beam search keeping `width` collapsed prefixes per frame.
/// Hypotheses are returned best first. When `width` is at least the number
/// of distinct prefixes reachable in `T` frames, the scores are exact.
pub fn beam_search(logits: &SequenceLogits, width: usize) -> Result<Vec<Hypothesis>, CtcError> {
    if width == 0 {
        return Err(CtcError::InvalidWidth);
    }
    let classes = logits.classes();
    let log_probs = logits.log_softmax();
    let mut beam: Vec<(Vec<usize>, PrefixScore)> = vec![(
        Vec::new(),
        PrefixScore {
            blank: 0.0,
            label: f64::NEG_INFINITY,
        },
    )];
    for t in 0..logits.frames() {
        let lp = &log_probs[t * classes..(t + 1) * classes];
        let mut next: BTreeMap<Vec<usize>, PrefixScore> = BTreeMap::new();
        for (prefix, score) in &beam {
            let total = score.total();
            let stay = next.entry(prefix.clone()).or_insert(PrefixScore::EMPTY);
            stay.blank = log_add(stay.blank, total + lp[Alphabet::BLANK]);
            if let Some(&last) = prefix.last() {
                // repeated last label without a blank stays on the same prefix
                stay.label = log_add(stay.label, score.label + lp[last]);
            }
            for (k, &p) in lp.iter().enumerate().skip(1) {
                let mut extended = prefix.clone();
                extended.push(k);
                let entry = next.entry(extended).or_insert(PrefixScore::EMPTY);
                let from = if prefix.last() == Some(&k) {
                    score.blank
                } else {
                    total
                };
                entry.label = log_add(entry.label, from + p);
            }
        }
        let mut ranked: Vec<(Vec<usize>, PrefixScore)> = next
            .into_iter()
            .filter(|(_, s)| s.total() > f64::NEG_INFINITY)
            .collect();
        // stable sort keeps lexicographic order among equal scores
        ranked.sort_by(|a, b| b.1.total().total_cmp(&a.1.total()));
        ranked.truncate(width);
        beam = ranked;
    }
    Ok(beam
        .into_iter()
        .map(|(labels, s)| Hypothesis {
            labels,
            log_prob: s.total(),
        })
        .collect())
}

/// The best labeling found by [`beam_search`].
pub fn beam_decode(logits: &SequenceLogits, width: usize) -> Result<Vec<usize>, CtcError> {
    Ok(beam_search(logits, width)?
        .into_iter()
        .next()
        .map(|h| h.labels)
        .unwrap_or_default())
}
