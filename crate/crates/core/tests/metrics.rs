//! BLEU and CIDEr against hand-computed and brute-force oracles.

use std::collections::HashMap;

use upoc2_core::metrics::{bleu, cider, MetricsReport};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

#[test]
fn bleu_perfect_match() {
    let hyp = vec![toks("the quick brown fox jumps over it")];
    let report = bleu(&hyp, &hyp, 4).unwrap();
    assert!((report.bleu[3] - 1.0).abs() < 1e-12);
    assert_eq!(report.brevity_penalty, 1.0);
    assert!(!report.smoothed);
}

#[test]
fn bleu_clipped_unigram_precision() {
    // "the the the" vs "the cat": "the" clipped to 1 of 3
    let report = bleu(&[toks("the the the")], &[toks("the cat")], 1).unwrap();
    assert!((report.precisions[0] - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn bleu_brevity_penalty() {
    // c=4, r=5 -> BP = exp(1 - 5/4)
    let report = bleu(&[toks("a b c d")], &[toks("a b c d e")], 1).unwrap();
    assert!((report.brevity_penalty - 0.7788007830714049).abs() < 1e-12);
    assert!((report.bleu[0] - 0.7788007830714049).abs() < 1e-12);
}

#[test]
fn bleu_corpus_level_pooling() {
    // counts pool over segments before the ratio: (2+1)/(2+2) unigrams
    let hyps = vec![toks("a b"), toks("c x")];
    let refs = vec![toks("a b"), toks("c d")];
    let report = bleu(&hyps, &refs, 1).unwrap();
    assert!((report.precisions[0] - 0.75).abs() < 1e-12);
    assert_eq!(report.brevity_penalty, 1.0);
}

#[test]
fn bleu_smoothing_only_on_zero_counts() {
    // no bigram matches: add-one smoothing kicks in and is flagged
    let report = bleu(&[toks("a b c")], &[toks("a c b")], 2).unwrap();
    assert!(report.smoothed);
    assert!(report.bleu[1] > 0.0);
    // unsmoothed unigram precision stays exact
    assert!((report.precisions[0] - 1.0).abs() < 1e-12);
}

#[test]
fn bleu_rejects_mismatched_lengths() {
    assert!(bleu(&[toks("a")], &[], 4).is_err());
    assert!(bleu(&[], &[], 4).is_err());
}

#[test]
fn bleu_hand_computed_bleu2() {
    // hyp "a b c", ref "a b d": p1 = 2/3, p2 = 1/2, BP = 1
    let report = bleu(&[toks("a b c")], &[toks("a b d")], 2).unwrap();
    let want = (2.0f64 / 3.0).sqrt() * (0.5f64).sqrt();
    assert!((report.bleu[1] - want).abs() < 1e-12);
}

#[test]
fn cider_identical_hypothesis_scores_ten() {
    // unique n-grams per segment (3 segments so idf > 0) -> cosine 1
    let hyps = vec![toks("a b c d e"), toks("f g h i j"), toks("k l m n o")];
    let refs: Vec<Vec<Vec<String>>> = hyps.iter().map(|h| vec![h.clone()]).collect();
    let score = cider(&hyps, &refs).unwrap();
    assert!((score - 10.0).abs() < 1e-9, "{score}");
}

#[test]
fn cider_disjoint_hypothesis_scores_zero() {
    let hyps = vec![toks("x y z w")];
    let refs = vec![vec![toks("a b c d")]];
    assert_eq!(cider(&hyps, &refs).unwrap(), 0.0);
}

/// Brute-force tf-idf/cosine oracle, written independently of the
/// library implementation.
fn cider_oracle(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> f64 {
    let n_seg = hyps.len() as f64;
    let mut total = 0.0;
    for n in 1..=4usize {
        let grams = |s: &[String]| -> HashMap<Vec<String>, f64> {
            let mut m = HashMap::new();
            if s.len() >= n {
                for w in s.windows(n) {
                    *m.entry(w.to_vec()).or_insert(0.0) += 1.0;
                }
            }
            m
        };
        // document frequency over reference segments
        let mut df: HashMap<Vec<String>, f64> = HashMap::new();
        for seg_refs in refs {
            let mut seen = std::collections::HashSet::new();
            for r in seg_refs {
                for g in grams(r).keys() {
                    seen.insert(g.clone());
                }
            }
            for g in seen {
                *df.entry(g).or_insert(0.0) += 1.0;
            }
        }
        let idf = |g: &Vec<String>| (n_seg / (1.0 + df.get(g).copied().unwrap_or(0.0))).ln();
        let tfidf = |m: &HashMap<Vec<String>, f64>| -> HashMap<Vec<String>, f64> {
            m.iter().map(|(g, c)| (g.clone(), c * idf(g))).collect()
        };
        let dot = |a: &HashMap<Vec<String>, f64>, b: &HashMap<Vec<String>, f64>| -> f64 {
            a.iter().map(|(g, x)| x * b.get(g).copied().unwrap_or(0.0)).sum()
        };
        let norm = |a: &HashMap<Vec<String>, f64>| dot(a, a).sqrt();
        let mut level = 0.0;
        for (h, seg_refs) in hyps.iter().zip(refs) {
            let hv = tfidf(&grams(h));
            let mut seg = 0.0;
            for r in seg_refs {
                let rv = tfidf(&grams(r));
                let d = norm(&hv) * norm(&rv);
                if d > 0.0 {
                    seg += dot(&hv, &rv) / d;
                }
            }
            level += seg / seg_refs.len() as f64;
        }
        total += level / n_seg;
    }
    10.0 * total / 4.0
}

#[test]
fn cider_matches_brute_force_oracle() {
    let hyps = vec![
        toks("the red dress has floral print"),
        toks("a blue skirt with lace trim"),
        toks("the red skirt has lace print"),
    ];
    let refs = vec![
        vec![toks("the red dress shows a floral print")],
        vec![toks("a blue skirt with a lace trim")],
        vec![toks("a red skirt with lace print")],
    ];
    let got = cider(&hyps, &refs).unwrap();
    let want = cider_oracle(&hyps, &refs);
    assert!((got - want).abs() < 1e-6, "got {got}, oracle {want}");
    assert!(got > 0.0 && got < 10.0);
}

#[test]
fn cider_multi_reference_oracle() {
    let hyps = vec![toks("red floral dress"), toks("blue lace skirt")];
    let refs = vec![
        vec![toks("red floral dress"), toks("a red dress with flowers")],
        vec![toks("skirt of blue lace"), toks("blue lace skirt")],
    ];
    let got = cider(&hyps, &refs).unwrap();
    let want = cider_oracle(&hyps, &refs);
    assert!((got - want).abs() < 1e-6, "got {got}, oracle {want}");
}

#[test]
fn metrics_report_names_scores() {
    let hyps = vec![toks("a b c d e")];
    let report = bleu(&hyps, &hyps, 4).unwrap();
    let c = cider(&hyps, &[vec![hyps[0].clone()]]).unwrap();
    let m = MetricsReport::from_scores(&report, c);
    assert!((m.bleu_at(4) - 1.0).abs() < 1e-12);
    assert_eq!(m.n_segments, 1);
    assert!(m.bleu.contains_key("bleu@1") && m.bleu.contains_key("bleu@4"));
}
