//! Corpus-level translation metrics.

pub mod bleu;
pub mod cider;

pub use bleu::{bleu, BleuReport};
pub use cider::cider;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Scores for one evaluation run, serializable as the report JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub bleu: BTreeMap<String, f64>,
    pub brevity_penalty: f64,
    pub cider: f64,
    pub n_segments: usize,
    pub smoothed: bool,
}

impl MetricsReport {
    pub fn from_scores(bleu: &BleuReport, cider: f64) -> Self {
        let map = bleu
            .bleu
            .iter()
            .enumerate()
            .map(|(i, &b)| (format!("bleu@{}", i + 1), b))
            .collect();
        MetricsReport {
            bleu: map,
            brevity_penalty: bleu.brevity_penalty,
            cider,
            n_segments: bleu.n_segments,
            smoothed: bleu.smoothed,
        }
    }

    pub fn bleu_at(&self, n: usize) -> f64 {
        self.bleu.get(&format!("bleu@{n}")).copied().unwrap_or(0.0)
    }
}
