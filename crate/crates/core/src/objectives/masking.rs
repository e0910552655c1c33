//! Masking recipes and sampling for the pre-training/fine-tuning tasks.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::batch::{BatchItem, EOS, MASK};
use crate::data::collate::collate_one;
use crate::data::corpus::{Corpus, Triplet};
use crate::data::vocab::{is_reserved, Vocabulary};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;

/// A sample that cannot serve the requested task and should be redrawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkipSample;

pub type MaskOutcome<T> = std::result::Result<T, SkipSample>;

/// Which segments the 15% selection covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskScope {
    /// jointly over source and target (MTLM default)
    Both,
    /// target tokens only (PMT)
    TargetOnly,
    /// per-sentence selection (flagged MTLM variant)
    PerSentence,
}

const MASK_FRACTION: f64 = 0.15;
const P_MASK: f64 = 0.8;
const P_RANDOM: f64 = 0.1;

/// round-half-up with a floor of 1
fn mask_count(n: usize) -> usize {
    ((n as f64 * MASK_FRACTION) + 0.5).floor().max(1.0) as usize
}

/// Indices (into input_ids) of maskable positions within a segment:
/// real word tokens, never [SOS]/[EOS]/[PAD] or other reserved ids.
fn maskable_positions(item: &BatchItem, range: std::ops::Range<usize>) -> Vec<usize> {
    range
        .filter(|&i| !item.token_pad[i] && !is_reserved(item.input_ids[i]))
        .collect()
}

fn perturb(
    item: &mut BatchItem,
    positions: &[usize],
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) {
    for &pos in positions {
        let original = item.input_ids[pos];
        item.mlm_labels[pos] = original as i64;
        let roll: f64 = rng.gen();
        if roll < P_MASK {
            item.input_ids[pos] = MASK;
        } else if roll < P_MASK + P_RANDOM {
            // uniform over the shared vocabulary: the replacement may be
            // a token of the other language
            let ids = vocab.content_ids();
            if !ids.is_empty() {
                item.input_ids[pos] = rng.gen_range(ids.start..ids.end);
            }
        }
        // else: kept unchanged but still predicted
    }
}

fn select_and_perturb(
    item: &mut BatchItem,
    scope: MaskScope,
    vocab: &Vocabulary,
    rng: &mut ChaCha8Rng,
) -> MaskOutcome<()> {
    let src_range = 0..item.src_len;
    let tgt_range = item.src_len..item.src_len + item.tgt_len;
    let groups: Vec<Vec<usize>> = match scope {
        MaskScope::Both => {
            let mut all = maskable_positions(item, src_range);
            all.extend(maskable_positions(item, tgt_range));
            vec![all]
        }
        MaskScope::TargetOnly => {
            // The decoder has to learn to emit [EOS], so the target's end
            // marker joins the candidate pool (word tokens stay the bulk).
            let mut pool = maskable_positions(item, tgt_range.clone());
            if let Some(eos) = tgt_range
                .clone()
                .find(|&i| !item.token_pad[i] && item.input_ids[i] == EOS)
            {
                pool.push(eos);
            }
            vec![pool]
        }
        MaskScope::PerSentence => vec![
            maskable_positions(item, src_range),
            maskable_positions(item, tgt_range),
        ],
    };
    if groups.iter().all(|g| g.is_empty()) {
        return Err(SkipSample);
    }
    for mut group in groups {
        if group.is_empty() {
            continue;
        }
        let k = mask_count(group.len()).min(group.len());
        group.shuffle(rng);
        group.truncate(k);
        group.sort_unstable();
        perturb(item, &group, vocab, rng);
    }
    Ok(())
}

/// MTLM masking: 15% of word tokens jointly over both sentences
/// (minimum 1), 80% [MASK] / 10% random shared-vocabulary word /
/// 10% kept; labels carry the original ids in every branch.
pub fn apply_mtlm_masking(
    triplet: &Triplet,
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<MaskOutcome<BatchItem>> {
    apply_mtlm_masking_scoped(triplet, rng, vocab, cfg, MaskScope::Both)
}

pub fn apply_mtlm_masking_scoped(
    triplet: &Triplet,
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    scope: MaskScope,
) -> Result<MaskOutcome<BatchItem>> {
    if triplet.src_tokens.is_empty() || triplet.tgt_tokens.is_empty() {
        return Ok(Err(SkipSample));
    }
    let mut item = collate_single(triplet, vocab, cfg)?;
    let outcome = select_and_perturb(&mut item, scope, vocab, rng);
    Ok(outcome.map(|()| item))
}

/// PMT masking: same recipe restricted to the target sentence.
pub fn apply_pmt_masking(
    triplet: &Triplet,
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<MaskOutcome<BatchItem>> {
    if triplet.tgt_tokens.is_empty() {
        return Ok(Err(SkipSample));
    }
    let mut item = collate_single(triplet, vocab, cfg)?;
    let outcome = select_and_perturb(&mut item, MaskScope::TargetOnly, vocab, rng);
    Ok(outcome.map(|()| item))
}

/// ISM pair: with probability 0.5 a positive (own source), otherwise a
/// hard negative whose source comes from a different triplet of the same
/// category (uniform fallback when the category has no other member).
pub fn sample_ism_pair(
    corpus: &Corpus,
    anchor_idx: usize,
    rng: &mut ChaCha8Rng,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
) -> Result<(BatchItem, u8)> {
    if corpus.len() < 2 {
        return Err(Error::contract(
            "sample_ism_pair: corpus must contain at least 2 triplets",
        ));
    }
    let anchor = &corpus.triplets[anchor_idx];
    let positive = rng.gen_bool(0.5);
    let (src_triplet, label) = if positive {
        (anchor, 1u8)
    } else {
        let peers: Vec<usize> = corpus.category_index[&anchor.category]
            .iter()
            .copied()
            .filter(|&i| i != anchor_idx)
            .collect();
        let neg_idx = if peers.is_empty() {
            // no category peer: any different triplet
            let mut i = rng.gen_range(0..corpus.len() - 1);
            if i >= anchor_idx {
                i += 1;
            }
            i
        } else {
            peers[rng.gen_range(0..peers.len())]
        };
        (&corpus.triplets[neg_idx], 0u8)
    };
    let probe = Triplet {
        id: anchor.id.clone(),
        category: anchor.category.clone(),
        attributes: anchor.attributes.clone(),
        src_tokens: src_triplet.src_tokens.clone(),
        tgt_tokens: anchor.tgt_tokens.clone(),
        image_features: anchor.image_features.clone(),
    };
    let mut item = collate_single(&probe, vocab, cfg)?;
    item.match_label = Some(label);
    Ok((item, label))
}

/// ATTP masking: every source token whose lowercased surface form equals
/// one of the triplet's attribute labels is replaced by [MASK]; the
/// attribute ids become the prediction labels. Samples where nothing
/// matches are skipped.
pub fn apply_attp_masking(
    triplet: &Triplet,
    vocab: &Vocabulary,
    attr_vocab: &Corpus,
    cfg: &ModelConfig,
) -> Result<MaskOutcome<BatchItem>> {
    if triplet.attributes.is_empty() {
        return Ok(Err(SkipSample));
    }
    let attrs: Vec<String> = triplet.attributes.iter().map(|a| a.to_lowercase()).collect();
    let mut matched = false;
    let mut item = collate_single(triplet, vocab, cfg)?;
    // walk the source body (skip [SOS], stop at [EOS]) against surface forms
    for (i, tok) in triplet.src_tokens.iter().take(cfg.t_src_max).enumerate() {
        let pos = 1 + i; // offset for [SOS]
        if attrs.iter().any(|a| tokens_match(a, tok)) {
            item.input_ids[pos] = MASK;
            matched = true;
        }
    }
    if !matched {
        return Ok(Err(SkipSample));
    }
    let mut labels = Vec::new();
    for a in &triplet.attributes {
        if let Some(id) = attr_vocab.attribute_id(a) {
            labels.push(id);
        }
    }
    if labels.is_empty() {
        return Ok(Err(SkipSample));
    }
    labels.sort_unstable();
    labels.dedup();
    item.attr_labels = Some(labels);
    Ok(Ok(item))
}

/// Multi-token attributes mask each constituent token.
fn tokens_match(attr_lower: &str, token: &str) -> bool {
    let tok = token.to_lowercase();
    attr_lower == tok || attr_lower.split_whitespace().any(|part| part == tok)
}

fn collate_single(triplet: &Triplet, vocab: &Vocabulary, cfg: &ModelConfig) -> Result<BatchItem> {
    let n_img = triplet.image_features.len().min(cfg.n_img_max).max(1);
    let src_len = triplet.src_tokens.len().min(cfg.t_src_max) + 2;
    let tgt_len = triplet.tgt_tokens.len().min(cfg.t_tgt_max) + 2;
    collate_one(triplet, vocab, cfg, n_img, src_len, tgt_len)
}
