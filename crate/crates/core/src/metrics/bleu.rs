//! Corpus-level BLEU with clipped modified n-gram precision and the
//! exponential brevity penalty. Single reference per hypothesis.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BleuReport {
    /// BLEU@n for n = 1..=max_n (geometric mean of precisions 1..n, with BP)
    pub bleu: Vec<f64>,
    pub precisions: Vec<f64>,
    pub brevity_penalty: f64,
    /// add-one smoothing was applied to some precision with n >= 2
    pub smoothed: bool,
    pub n_segments: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over token lists. Precisions for n >= 2 that come out as
/// exact zero get add-one smoothing and the report is flagged.
pub fn bleu(hypotheses: &[Vec<String>], references: &[Vec<String>], max_n: usize) -> Result<BleuReport> {
    if hypotheses.is_empty() {
        return Err(Error::contract("bleu: empty corpus"));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::contract(format!(
            "bleu: {} hypotheses vs {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let mut matched = vec![0usize; max_n];
    let mut total = vec![0usize; max_n];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, rf) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += rf.len();
        for n in 1..=max_n {
            let h = ngram_counts(hyp, n);
            let r = ngram_counts(rf, n);
            for (gram, &c) in &h {
                let clip = r.get(gram).copied().unwrap_or(0);
                matched[n - 1] += c.min(clip);
                total[n - 1] += c;
            }
        }
    }
    let mut smoothed = false;
    let precisions: Vec<f64> = (0..max_n)
        .map(|i| {
            if total[i] == 0 {
                0.0
            } else if matched[i] == 0 && i >= 1 {
                smoothed = true;
                1.0 / (total[i] + 1) as f64
            } else {
                matched[i] as f64 / total[i] as f64
            }
        })
        .collect();
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = (1..=max_n)
        .map(|n| {
            if precisions[..n].iter().any(|&p| p == 0.0) {
                0.0
            } else {
                let log_mean = precisions[..n].iter().map(|p| p.ln()).sum::<f64>() / n as f64;
                brevity_penalty * log_mean.exp()
            }
        })
        .collect();
    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        smoothed,
        n_segments: hypotheses.len(),
    })
}
