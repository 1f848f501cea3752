//! Recognition-rate metrics.
//!
//! * CRR = (nCharacters - sum of edit distances) / nCharacters, with
//!   nCharacters counted over the ground truth (spaces included).
//! * WRR = correctly recognized words / words.
//! * LRR = exactly recognized images / images.

use std::collections::HashMap;

use thiserror::Error;

use crate::shaper::normalize_label;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    Empty,
    #[error("line {line} of the predictions file is not `path<TAB>text`")]
    Syntax { line: usize },
    #[error("no prediction for {0}")]
    MissingPrediction(String),
    #[error("prediction for {0} has no ground truth")]
    UnknownPath(String),
    #[error("duplicate prediction for {0}")]
    DuplicatePrediction(String),
}

/// Levenshtein distance with unit costs over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Recognized text paired with its ground truth, both NFC-normalized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPair {
    pub recognized: String,
    pub ground_truth: String,
}

impl EvalPair {
    pub fn new(recognized: &str, ground_truth: &str) -> Self {
        EvalPair {
            recognized: normalize_label(recognized),
            ground_truth: normalize_label(ground_truth),
        }
    }
}

/// What one image holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    /// Every image is a single word.
    Word,
    /// Images are text lines; words are space-separated tokens compared
    /// position by position.
    Line,
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word" => Ok(Granularity::Word),
            "line" => Ok(Granularity::Line),
            _ => Err(format!("granularity must be `word` or `line`, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_characters: u64,
    pub sum_edit_distance: u64,
    pub n_words: u64,
    pub n_words_correct: u64,
    pub n_images: u64,
    pub n_images_correct: u64,
    pub crr: f64,
    pub wrr: f64,
    pub lrr: f64,
}

impl EvalReport {
    /// Derives the three rates from raw counts.
    pub fn from_counts(
        n_characters: u64,
        sum_edit_distance: u64,
        n_words: u64,
        n_words_correct: u64,
        n_images: u64,
        n_images_correct: u64,
    ) -> Self {
        let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
        EvalReport {
            n_characters,
            sum_edit_distance,
            n_words,
            n_words_correct,
            n_images,
            n_images_correct,
            crr: ratio(n_characters as f64 - sum_edit_distance as f64, n_characters),
            wrr: ratio(n_words_correct as f64, n_words),
            lrr: ratio(n_images_correct as f64, n_images),
        }
    }

    /// Tab-separated `key<TAB>value` lines.
    pub fn to_tsv(&self) -> String {
        format!(
            "n_characters\t{}\nsum_edit_distance\t{}\nn_words\t{}\nn_words_correct\t{}\nn_images\t{}\nn_images_correct\t{}\ncrr\t{}\nwrr\t{}\nlrr\t{}\n",
            self.n_characters,
            self.sum_edit_distance,
            self.n_words,
            self.n_words_correct,
            self.n_images,
            self.n_images_correct,
            self.crr,
            self.wrr,
            self.lrr
        )
    }
}

fn tokens(s: &str) -> Vec<&str> {
    s.split(' ').filter(|t| !t.is_empty()).collect()
}

pub fn evaluate(pairs: &[EvalPair], granularity: Granularity) -> Result<EvalReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut chars, mut dist, mut words, mut words_ok, mut images_ok) = (0u64, 0u64, 0u64, 0u64, 0u64);
    for p in pairs {
        chars += p.ground_truth.chars().count() as u64;
        dist += edit_distance(&p.recognized, &p.ground_truth) as u64;
        let exact = p.recognized == p.ground_truth;
        images_ok += u64::from(exact);
        match granularity {
            Granularity::Word => {
                words += 1;
                words_ok += u64::from(exact);
            }
            Granularity::Line => {
                let gt = tokens(&p.ground_truth);
                let rt = tokens(&p.recognized);
                words += gt.len() as u64;
                words_ok += gt
                    .iter()
                    .enumerate()
                    .filter(|(i, w)| rt.get(*i) == Some(*w))
                    .count() as u64;
            }
        }
    }
    Ok(EvalReport::from_counts(
        chars,
        dist,
        words,
        words_ok,
        pairs.len() as u64,
        images_ok,
    ))
}

/// Parses a predictions file: `image_path<TAB>recognized` per line.
pub fn parse_predictions(text: &str) -> Result<Vec<(String, String)>, EvalError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| {
            l.split_once('\t')
                .map(|(p, t)| (p.to_string(), t.to_string()))
                .ok_or(EvalError::Syntax { line: i + 1 })
        })
        .collect()
}

/// Joins predictions to ground truth by path. Every ground-truth entry
/// needs exactly one prediction.
pub fn join_predictions(
    ground_truth: &[(String, String)],
    predictions: &[(String, String)],
) -> Result<Vec<EvalPair>, EvalError> {
    let mut by_path: HashMap<&str, &str> = HashMap::new();
    for (path, text) in predictions {
        if by_path.insert(path, text).is_some() {
            return Err(EvalError::DuplicatePrediction(path.clone()));
        }
    }
    let mut pairs = Vec::with_capacity(ground_truth.len());
    for (path, gt) in ground_truth {
        let rt = by_path
            .remove(path.as_str())
            .ok_or_else(|| EvalError::MissingPrediction(path.clone()))?;
        pairs.push(EvalPair::new(rt, gt));
    }
    if let Some(extra) = predictions.iter().find(|(p, _)| by_path.contains_key(p.as_str())) {
        return Err(EvalError::UnknownPath(extra.0.clone()));
    }
    Ok(pairs)
}
