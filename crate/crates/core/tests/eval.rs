use arabic_ocr::eval::{edit_distance, evaluate, EvalPair, EvalReport, Granularity};
use proptest::prelude::*;

/// Wagner-Fischer with the full matrix.
fn full_matrix_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        d[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

fn small_text(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b', 'c', ' ', '\u{0628}', '\u{0627}']), 0..=max)
        .prop_map(|v| v.into_iter().collect())
}

fn word_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(vec!['a', 'b', '\u{0628}']), 1..6).prop_map(|v| v.into_iter().collect())
}

proptest! {
    #[test]
    fn matches_full_matrix_oracle(a in small_text(8), b in small_text(8)) {
        prop_assert_eq!(edit_distance(&a, &b), full_matrix_distance(&a, &b));
    }

    #[test]
    fn edit_distance_is_a_metric(a in small_text(8), b in small_text(8), c in small_text(8)) {
        prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
        prop_assert_eq!(edit_distance(&a, &a), 0);
        prop_assert_eq!(edit_distance(&a, &b) == 0, a == b);
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    #[test]
    fn perfect_crr_iff_every_pair_matches(pairs in prop::collection::vec((word_text(), word_text()), 1..6)) {
        let pairs: Vec<EvalPair> = pairs.iter().map(|(r, g)| EvalPair::new(r, g)).collect();
        let rep = evaluate(&pairs, Granularity::Word).unwrap();
        let exact = pairs.iter().all(|p| p.recognized == p.ground_truth);
        prop_assert_eq!(rep.crr == 1.0, exact);
        prop_assert!(rep.wrr >= 0.0 && rep.wrr <= 1.0 && rep.lrr >= 0.0 && rep.lrr <= 1.0);
        prop_assert!(rep.crr <= 1.0);
    }

    #[test]
    fn rates_recompute_from_counts(pairs in prop::collection::vec((small_text(10), small_text(10)), 1..6), line in any::<bool>()) {
        let pairs: Vec<EvalPair> = pairs.iter().map(|(r, g)| EvalPair::new(r, g)).collect();
        let g = if line { Granularity::Line } else { Granularity::Word };
        let rep = evaluate(&pairs, g).unwrap();
        let again = EvalReport::from_counts(
            rep.n_characters,
            rep.sum_edit_distance,
            rep.n_words,
            rep.n_words_correct,
            rep.n_images,
            rep.n_images_correct,
        );
        prop_assert_eq!(again, rep);
    }
}

#[test]
fn spaces_count_as_characters_on_lines() {
    let rep = evaluate(&[EvalPair::new("ab cd", "ab cd")], Granularity::Line).unwrap();
    assert_eq!((rep.n_characters, rep.n_words), (5, 2));
}
