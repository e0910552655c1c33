//! Iterative mask-feed decoding and corpus evaluation.
//!
//! The target starts as [SOS]; each step appends a [MASK] slot, runs the
//! forward pass under the uni-directional mask, reads the distribution
//! at the [MASK] slot and replaces it with the chosen token, until [EOS]
//! or the length limit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{TaskKind, EOS, MASK, SOS};
use crate::data::collate::collate_one;
use crate::data::corpus::{Corpus, Triplet};
use crate::data::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::metrics::{bleu, cider, MetricsReport};
use crate::model::config::ModelConfig;
use crate::model::encoder::{forward, mlm_logits};
use crate::model::params::Parameters;
use crate::tensor::tape::Tape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Greedy,
    Sample,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub max_len: usize,
    pub mode: DecodeMode,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            max_len: 32,
            mode: DecodeMode::Greedy,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be >= 1".into()));
        }
        if self.mode == DecodeMode::Sample && self.temperature <= 0.0 {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Translation {
    pub tokens: Vec<String>,
    /// false when decoding hit max_len without emitting [EOS]
    pub terminated: bool,
}

/// Token distribution (logits) at the current [MASK] slot given a
/// partial target. Shares the forward path with pmt_loss.
fn mask_slot_logits(
    params: &Parameters,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    images: &[Vec<f64>],
    src_tokens: &[String],
    partial_tgt_ids: &[u32],
) -> Result<Vec<f64>> {
    let probe = Triplet {
        id: String::new(),
        category: String::new(),
        attributes: Vec::new(),
        src_tokens: src_tokens.to_vec(),
        tgt_tokens: Vec::new(),
        image_features: images.to_vec(),
    };
    let n_img = images.len().min(cfg.n_img_max).max(1);
    let src_len = src_tokens.len().min(cfg.t_src_max) + 2;
    // target segment: [SOS] tokens... [MASK]; no [EOS] yet
    let tgt_len = partial_tgt_ids.len() + 2;
    let mut item = collate_one(&probe, vocab, cfg, n_img, src_len, tgt_len)?;
    let tgt_start = item.src_len;
    let mut ids = Vec::with_capacity(tgt_len);
    ids.push(SOS);
    ids.extend_from_slice(partial_tgt_ids);
    ids.push(MASK);
    for (k, id) in ids.iter().enumerate() {
        item.input_ids[tgt_start + k] = *id;
        item.token_pad[tgt_start + k] = false;
    }
    let mask_pos = tgt_start + tgt_len - 1;
    let mut tape = Tape::new(&params.store);
    let enc = forward(&mut tape, &item, params, TaskKind::Pmt, None)?;
    let logits = mlm_logits(&mut tape, &enc, &[mask_pos], params)?;
    Ok(tape.value(logits).to_vec())
}

/// Translate one (images, source) pair.
pub fn translate(
    params: &Parameters,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    images: &[Vec<f64>],
    src_tokens: &[String],
    dcfg: &DecodeConfig,
) -> Result<Translation> {
    dcfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(dcfg.seed);
    let mut out_ids: Vec<u32> = Vec::new();
    let mut terminated = false;
    let limit = dcfg.max_len.min(cfg.t_tgt_max);
    while out_ids.len() < limit {
        let logits = mask_slot_logits(params, cfg, vocab, images, src_tokens, &out_ids)?;
        let next = match dcfg.mode {
            DecodeMode::Greedy => argmax(&logits),
            DecodeMode::Sample => sample_from_logits(&logits, dcfg.temperature, &mut rng),
        } as u32;
        if next == EOS {
            terminated = true;
            break;
        }
        out_ids.push(next);
    }
    Ok(Translation {
        tokens: vocab.decode(&out_ids),
        terminated,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn sample_from_logits(logits: &[f64], temperature: f64, rng: &mut ChaCha8Rng) -> usize {
    let scaled: Vec<f64> = logits.iter().map(|l| l / temperature).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let mut u = rng.gen::<f64>() * sum;
    for (i, e) in exps.iter().enumerate() {
        u -= e;
        if u <= 0.0 {
            return i;
        }
    }
    exps.len() - 1
}

/// One decoded segment of an evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub id: String,
    pub hyp: Vec<String>,
}

pub struct EvaluationOutput {
    pub report: MetricsReport,
    pub hypotheses: Vec<HypothesisRecord>,
}

/// Translate every triplet of a split and score with BLEU and CIDEr.
pub fn evaluate_corpus(
    params: &Parameters,
    cfg: &ModelConfig,
    vocab: &Vocabulary,
    corpus: &Corpus,
    split: &[String],
    dcfg: &DecodeConfig,
) -> Result<EvaluationOutput> {
    if split.is_empty() {
        return Err(Error::Config("evaluate: empty split".into()));
    }
    let mut hyps = Vec::with_capacity(split.len());
    let mut refs = Vec::with_capacity(split.len());
    let mut records = Vec::with_capacity(split.len());
    for idx in corpus.split_indices(split)? {
        let t = &corpus.triplets[idx];
        let tr = translate(params, cfg, vocab, &t.image_features, &t.src_tokens, dcfg)?;
        records.push(HypothesisRecord {
            id: t.id.clone(),
            hyp: tr.tokens.clone(),
        });
        hyps.push(tr.tokens);
        refs.push(t.tgt_tokens.clone());
    }
    let b = bleu(&hyps, &refs, 4)?;
    let ref_sets: Vec<Vec<Vec<String>>> = refs.iter().map(|r| vec![r.clone()]).collect();
    let c = cider(&hyps, &ref_sets)?;
    Ok(EvaluationOutput {
        report: MetricsReport::from_scores(&b, c),
        hypotheses: records,
    })
}
