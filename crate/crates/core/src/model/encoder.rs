//! Input embedding, the four transformer encoder stacks, and the
//! prediction heads (tied word softmax, matching, attributes).

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::batch::{BatchItem, TaskKind, MOD_IMG, MOD_SRC, MOD_TGT};
use crate::error::{Error, Result};
use crate::model::mask::{build_attention_mask, segment_block};
use crate::model::params::{
    Parameters, ATTR_B, ATTR_W, IMG_PROJ_B, IMG_PROJ_W, MATCH_B, MATCH_W, MODALITY_EMB, OUT_BIAS,
    POS_EMB, TOKEN_EMB,
};
use crate::tensor::tape::{sigmoid, Tape, TensorRef};

const LN_EPS: f64 = 1e-5;

/// Encoded item: final hidden states with the segment geometry.
#[derive(Debug, Clone, Copy)]
pub struct EncodedSequence {
    pub hidden: TensorRef,
    pub n_img: usize,
    pub src_len: usize,
    pub tgt_len: usize,
}

impl EncodedSequence {
    pub fn t_total(&self) -> usize {
        self.n_img + self.src_len + self.tgt_len
    }

    /// Row of the target [SOS] position.
    pub fn tgt_sos_row(&self) -> usize {
        self.n_img + self.src_len
    }
}

/// Optional dropout state for training-time forward passes.
pub struct DropoutCtx<'r> {
    pub rate: f64,
    pub rng: &'r mut ChaCha8Rng,
}

/// Embed one collated item: projected image features plus modality
/// embedding for the image slots; token embedding plus modality and
/// position embeddings for the sentence slots. Image slots receive no
/// positional embedding.
pub fn embed_inputs(tape: &mut Tape, item: &BatchItem, params: &Parameters) -> Result<TensorRef> {
    let cfg = &params.cfg;
    let _ = cfg.h;
    let n_img = item.n_img();

    // modality rows per position
    let mut modality_rows = Vec::with_capacity(item.t_total());
    modality_rows.extend(std::iter::repeat(MOD_IMG as usize).take(n_img));
    modality_rows.extend(item.modality_ids.iter().map(|&m| match m {
        MOD_SRC => MOD_SRC as usize,
        MOD_TGT => MOD_TGT as usize,
        other => other as usize,
    }));

    let mut parts: Vec<TensorRef> = Vec::with_capacity(2);

    if n_img > 0 {
        let mut feat = Vec::with_capacity(n_img * cfg.d_img);
        for v in &item.image_features {
            if v.len() != cfg.d_img {
                return Err(Error::ShapeMismatch {
                    op: "embed_inputs image feature",
                    lhs: vec![v.len()],
                    rhs: vec![cfg.d_img],
                });
            }
            feat.extend_from_slice(v);
        }
        let feat = tape.constant(feat, vec![n_img, cfg.d_img]);
        let w = tape.param(params.store.id(IMG_PROJ_W)?);
        let b = tape.param(params.store.id(IMG_PROJ_B)?);
        let proj = tape.matmul(feat, w)?;
        parts.push(tape.add_row(proj, b)?);
    }

    let token_emb = tape.param(params.store.id(TOKEN_EMB)?);
    let ids: Vec<usize> = item.input_ids.iter().map(|&i| i as usize).collect();
    let tok = tape.gather_rows(token_emb, &ids)?;
    let pos_emb = tape.param(params.store.id(POS_EMB)?);
    let pos_ids: Vec<usize> = item.position_ids.iter().map(|&p| p as usize).collect();
    let pos = tape.gather_rows(pos_emb, &pos_ids)?;
    parts.push(tape.add(tok, pos)?);

    let x = tape.concat_rows(&parts)?;
    let modality_emb = tape.param(params.store.id(MODALITY_EMB)?);
    let modality = tape.gather_rows(modality_emb, &modality_rows)?;
    let out = tape.add(x, modality)?;
    debug_assert_eq!(tape.shape(out), &[item.t_total(), params.cfg.h]);
    Ok(out)
}

fn maybe_dropout(
    tape: &mut Tape,
    x: TensorRef,
    dropout: &mut Option<&mut DropoutCtx>,
) -> Result<TensorRef> {
    let Some(ctx) = dropout else { return Ok(x) };
    if ctx.rate <= 0.0 {
        return Ok(x);
    }
    let n = tape.value(x).len();
    let keep = 1.0 - ctx.rate;
    let mask: Vec<f64> = (0..n)
        .map(|_| if ctx.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let m = tape.constant(mask, tape.shape(x).to_vec());
    tape.mul(x, m)
}

/// One post-norm transformer encoder layer: multi-head self-attention
/// with residual + layer norm, then ReLU feed-forward with residual +
/// layer norm.
pub fn encoder_layer(
    tape: &mut Tape,
    x: TensorRef,
    prefix: &str,
    params: &Parameters,
    mask: &[f64],
    dropout: &mut Option<&mut DropoutCtx>,
) -> Result<TensorRef> {
    let cfg = &params.cfg;
    let t = tape.shape(x)[0];
    let dh = cfg.head_dim();
    let p = |name: &str| params.store.id(&format!("{prefix}.{name}"));

    let wq = tape.param(p("attn.wq")?);
    let bq = tape.param(p("attn.bq")?);
    let wk = tape.param(p("attn.wk")?);
    let bk = tape.param(p("attn.bk")?);
    let wv = tape.param(p("attn.wv")?);
    let bv = tape.param(p("attn.bv")?);

    let q = tape.matmul(x, wq)?;
    let q = tape.add_row(q, bq)?;
    let k = tape.matmul(x, wk)?;
    let k = tape.add_row(k, bk)?;
    let v = tape.matmul(x, wv)?;
    let v = tape.add_row(v, bv)?;

    let mask_t = tape.constant(mask.to_vec(), vec![t, t]);
    let mut head_outs = Vec::with_capacity(cfg.a);
    for head in 0..cfg.a {
        let qh = tape.slice_cols(q, head * dh, dh)?;
        let kh = tape.slice_cols(k, head * dh, dh)?;
        let vh = tape.slice_cols(v, head * dh, dh)?;
        let scores = tape.matmul_nt(qh, kh)?;
        let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt());
        let attn = tape.softmax_lastdim(scores, Some(mask_t))?;
        head_outs.push(tape.matmul(attn, vh)?);
    }
    let ctx = tape.concat_cols(&head_outs)?;
    let wo = tape.param(p("attn.wo")?);
    let bo = tape.param(p("attn.bo")?);
    let attn_out = tape.matmul(ctx, wo)?;
    let attn_out = tape.add_row(attn_out, bo)?;
    let attn_out = maybe_dropout(tape, attn_out, dropout)?;

    let res1 = tape.add(x, attn_out)?;
    let g1 = tape.param(p("ln1.g")?);
    let b1 = tape.param(p("ln1.b")?);
    let norm1 = tape.layer_norm(res1, g1, b1, LN_EPS)?;

    let w1 = tape.param(p("ff.w1")?);
    let fb1 = tape.param(p("ff.b1")?);
    let w2 = tape.param(p("ff.w2")?);
    let fb2 = tape.param(p("ff.b2")?);
    let ff = tape.matmul(norm1, w1)?;
    let ff = tape.add_row(ff, fb1)?;
    let ff = tape.relu(ff);
    let ff = tape.matmul(ff, w2)?;
    let ff = tape.add_row(ff, fb2)?;
    let ff = maybe_dropout(tape, ff, dropout)?;

    let res2 = tape.add(norm1, ff)?;
    let g2 = tape.param(p("ln2.g")?);
    let b2 = tape.param(p("ln2.b")?);
    tape.layer_norm(res2, g2, b2, LN_EPS)
}

/// Stack of encoder layers under a shared mask.
fn run_stack(
    tape: &mut Tape,
    mut x: TensorRef,
    prefix: &str,
    depth: usize,
    params: &Parameters,
    mask: &[f64],
    dropout: &mut Option<&mut DropoutCtx>,
) -> Result<TensorRef> {
    for l in 0..depth {
        x = encoder_layer(tape, x, &format!("{prefix}.{l}"), params, mask, dropout)?;
    }
    Ok(x)
}

/// Full forward pass for one item: embedding, per-segment independent
/// encoders (identity when depth 0), then the cross encoder over the
/// concatenated sequence under the task mask.
pub fn forward(
    tape: &mut Tape,
    item: &BatchItem,
    params: &Parameters,
    task: TaskKind,
    mut dropout: Option<&mut DropoutCtx>,
) -> Result<EncodedSequence> {
    let cfg = &params.cfg;
    let x = embed_inputs(tape, item, params)?;
    let t_total = item.t_total();
    let n_img = item.n_img();
    let mask = build_attention_mask(task, item)?;

    let x = if cfg.l_v + cfg.l_s + cfg.l_t > 0 {
        let mut segs = Vec::with_capacity(3);
        let bounds = [
            (0, n_img, "img", cfg.l_v),
            (n_img, item.src_len, "src", cfg.l_s),
            (n_img + item.src_len, item.tgt_len, "tgt", cfg.l_t),
        ];
        for (start, len, prefix, depth) in bounds {
            if len == 0 {
                continue;
            }
            let seg = tape.slice_rows(x, start, len)?;
            let seg = if depth > 0 {
                let seg_mask = segment_block(&mask, t_total, start, len);
                run_stack(tape, seg, prefix, depth, params, &seg_mask, &mut dropout)?
            } else {
                seg
            };
            segs.push(seg);
        }
        tape.concat_rows(&segs)?
    } else {
        x
    };

    let hidden = run_stack(tape, x, "cross", cfg.l_c, params, &mask, &mut dropout)?;
    Ok(EncodedSequence {
        hidden,
        n_img,
        src_len: item.src_len,
        tgt_len: item.tgt_len,
    })
}

/// Word-prediction logits at token positions (indices into the token
/// sequence, i.e. excluding image slots). The projection is the token
/// embedding (tied) plus a free output bias.
pub fn mlm_logits(
    tape: &mut Tape,
    enc: &EncodedSequence,
    token_positions: &[usize],
    params: &Parameters,
) -> Result<TensorRef> {
    let n_tok = enc.src_len + enc.tgt_len;
    for &p in token_positions {
        if p >= n_tok {
            return Err(Error::contract(format!(
                "mlm_logits: position {p} is not a token slot (n_tok = {n_tok})"
            )));
        }
    }
    let rows: Vec<usize> = token_positions.iter().map(|&p| enc.n_img + p).collect();
    let hidden = tape.gather_rows(enc.hidden, &rows)?;
    let emb = tape.param(params.store.id(TOKEN_EMB)?);
    let logits = tape.matmul_nt(hidden, emb)?;
    let bias = tape.param(params.store.id(OUT_BIAS)?);
    tape.add_row(logits, bias)
}

/// Matching logit and score read off the target [SOS] hidden state.
pub fn match_score(
    tape: &mut Tape,
    enc: &EncodedSequence,
    params: &Parameters,
) -> Result<(TensorRef, f64)> {
    if enc.tgt_len == 0 {
        return Err(Error::contract("match_score: item has no target [SOS] slot"));
    }
    let sos = tape.slice_rows(enc.hidden, enc.tgt_sos_row(), 1)?;
    let w = tape.param(params.store.id(MATCH_W)?);
    let b = tape.param(params.store.id(MATCH_B)?);
    let logit = tape.matmul(sos, w)?;
    let logit = tape.add_row(logit, b)?;
    let score = sigmoid(tape.value(logit)[0]);
    Ok((logit, score))
}

/// Attribute logits over the attribute vocabulary, from the target [SOS]
/// hidden state. Softmax is applied downstream in the loss.
pub fn attribute_logits(
    tape: &mut Tape,
    enc: &EncodedSequence,
    params: &Parameters,
) -> Result<TensorRef> {
    if enc.tgt_len == 0 {
        return Err(Error::contract("attribute_logits: item has no target [SOS] slot"));
    }
    let sos = tape.slice_rows(enc.hidden, enc.tgt_sos_row(), 1)?;
    let w = tape.param(params.store.id(ATTR_W)?);
    let b = tape.param(params.store.id(ATTR_B)?);
    let logits = tape.matmul(sos, w)?;
    tape.add_row(logits, b)
}
