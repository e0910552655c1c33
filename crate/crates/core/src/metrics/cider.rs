//! CIDEr: tf-idf weighted n-gram cosine similarity, averaged over
//! n = 1..4 and scaled by 10. Original variant (no length penalty, no
//! per-segment clipping); idf = ln(N_seg / (1 + df)) with document
//! frequency counted over reference segments.

use std::collections::{HashMap, HashSet};

use crate::error::{Error, Result};

const MAX_N: usize = 4;

fn ngrams(tokens: &[String], n: usize) -> Vec<String> {
    if tokens.len() < n {
        return Vec::new();
    }
    tokens.windows(n).map(|w| w.join("\u{1}")).collect()
}

fn tf(tokens: &[String], n: usize) -> HashMap<String, f64> {
    let mut counts: HashMap<String, f64> = HashMap::new();
    for g in ngrams(tokens, n) {
        *counts.entry(g).or_insert(0.0) += 1.0;
    }
    counts
}

/// Corpus CIDEr with one or more references per segment.
pub fn cider(hypotheses: &[Vec<String>], references: &[Vec<Vec<String>>]) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::contract("cider: empty corpus"));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::contract(format!(
            "cider: {} hypotheses vs {} reference sets",
            hypotheses.len(),
            references.len()
        )));
    }
    let n_seg = references.len() as f64;

    // document frequency per n over reference segments (a segment counts
    // once per n-gram regardless of repeats or reference count)
    let mut df: Vec<HashMap<String, f64>> = vec![HashMap::new(); MAX_N];
    for refs in references {
        for n in 1..=MAX_N {
            let mut seen: HashSet<String> = HashSet::new();
            for r in refs {
                seen.extend(ngrams(r, n));
            }
            for g in seen {
                *df[n - 1].entry(g).or_insert(0.0) += 1.0;
            }
        }
    }
    let idf = |n: usize, g: &str| -> f64 {
        let d = df[n - 1].get(g).copied().unwrap_or(0.0);
        (n_seg / (1.0 + d)).ln()
    };

    let mut corpus_score = 0.0;
    for (hyp, refs) in hypotheses.iter().zip(references) {
        let mut seg_score = 0.0;
        for n in 1..=MAX_N {
            let h_tf = tf(hyp, n);
            let h_vec: HashMap<&String, f64> = h_tf
                .iter()
                .map(|(g, c)| (g, c * idf(n, g)))
                .collect();
            let h_norm: f64 = h_vec.values().map(|v| v * v).sum::<f64>().sqrt();
            let mut sim_sum = 0.0;
            for r in refs {
                let r_tf = tf(r, n);
                let r_vec: HashMap<&String, f64> = r_tf
                    .iter()
                    .map(|(g, c)| (g, c * idf(n, g)))
                    .collect();
                let r_norm: f64 = r_vec.values().map(|v| v * v).sum::<f64>().sqrt();
                let dot: f64 = h_vec
                    .iter()
                    .map(|(g, hv)| hv * r_vec.get(*g).copied().unwrap_or(0.0))
                    .sum();
                if h_norm > 0.0 && r_norm > 0.0 {
                    sim_sum += dot / (h_norm * r_norm);
                }
            }
            seg_score += sim_sum / refs.len() as f64;
        }
        corpus_score += 10.0 * seg_score / MAX_N as f64;
    }
    Ok(corpus_score / hypotheses.len() as f64)
}
