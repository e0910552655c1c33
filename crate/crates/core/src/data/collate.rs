//! Batch assembly: specials, padding, modality and position ids.

use crate::batch::{BatchItem, EOS, IGNORE_ID, MOD_SRC, MOD_TGT, PAD, SOS};
use crate::data::corpus::Triplet;
use crate::data::vocab::Vocabulary;
use crate::error::Result;
use crate::model::config::ModelConfig;

/// Collate triplets into a raw (pre-masking) batch. Sentences become
/// [SOS] ids [EOS], padded to the batch max; images are padded with zero
/// vectors to the batch max image count. Over-long sentences are
/// truncated before [EOS] and the item flagged.
pub fn collate(triplets: &[&Triplet], vocab: &Vocabulary, cfg: &ModelConfig) -> Result<Vec<BatchItem>> {
    let max_imgs = triplets
        .iter()
        .map(|t| t.image_features.len().min(cfg.n_img_max))
        .max()
        .unwrap_or(0);
    let src_body = |t: &Triplet| t.src_tokens.len().min(cfg.t_src_max);
    let tgt_body = |t: &Triplet| t.tgt_tokens.len().min(cfg.t_tgt_max);
    let max_src = triplets.iter().map(|t| src_body(t) + 2).max().unwrap_or(2);
    let max_tgt = triplets.iter().map(|t| tgt_body(t) + 2).max().unwrap_or(2);

    let mut out = Vec::with_capacity(triplets.len());
    for t in triplets {
        out.push(collate_one(t, vocab, cfg, max_imgs, max_src, max_tgt)?);
    }
    Ok(out)
}

/// Collate a single triplet to given segment widths. `tgt_override`
/// replaces the triplet's target tokens (used at decode time).
pub fn collate_one(
    t: &Triplet,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    n_img: usize,
    src_len: usize,
    tgt_len: usize,
) -> Result<BatchItem> {
    let mut truncated = false;

    let mut imgs = Vec::with_capacity(n_img);
    let mut image_pad = Vec::with_capacity(n_img);
    for v in t.image_features.iter().take(cfg.n_img_max) {
        imgs.push(v.clone());
        image_pad.push(false);
    }
    if t.image_features.len() > cfg.n_img_max {
        truncated = true;
    }
    while imgs.len() < n_img {
        imgs.push(vec![0.0; cfg.d_img]);
        image_pad.push(true);
    }

    let mut input_ids = Vec::with_capacity(src_len + tgt_len);
    let mut token_pad = Vec::with_capacity(src_len + tgt_len);
    let mut modality_ids = Vec::with_capacity(src_len + tgt_len);
    let mut position_ids = Vec::with_capacity(src_len + tgt_len);

    for (tokens, limit, seg_len, modality) in [
        (&t.src_tokens, cfg.t_src_max, src_len, MOD_SRC),
        (&t.tgt_tokens, cfg.t_tgt_max, tgt_len, MOD_TGT),
    ] {
        let body: Vec<u32> = tokens.iter().take(limit).map(|tok| vocab.id(tok)).collect();
        if tokens.len() > limit {
            truncated = true;
        }
        let mut seg = Vec::with_capacity(seg_len);
        seg.push(SOS);
        seg.extend(&body);
        seg.push(EOS);
        while seg.len() < seg_len {
            seg.push(PAD);
        }
        for (pos, &id) in seg.iter().enumerate() {
            input_ids.push(id);
            token_pad.push(id == PAD);
            modality_ids.push(modality);
            // positions restart at 0 per sentence
            position_ids.push(pos as u32);
        }
    }

    let total = input_ids.len();
    Ok(BatchItem {
        image_features: imgs,
        image_pad,
        input_ids,
        src_len,
        tgt_len,
        modality_ids,
        position_ids,
        token_pad,
        mlm_labels: vec![IGNORE_ID; total],
        match_label: None,
        attr_labels: None,
        truncated,
    })
}
