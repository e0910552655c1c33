//! Task-dependent self-attention masks.
//!
//! Masks are additive: 0.0 on allowed links, a large negative value on
//! forbidden ones. Pad rows keep their diagonal entry so softmax stays
//! defined; pad columns are excluded everywhere so pad content never
//! reaches a non-pad position.

use crate::batch::{BatchItem, TaskKind};
use crate::error::{Error, Result};
use crate::tensor::tape::Tape;

/// Per-position attendability flags for one item under one task.
/// ISM/ATTP treat every target position except [SOS] as pad.
pub fn attendable(item: &BatchItem, kind: TaskKind) -> Vec<bool> {
    let n_img = item.n_img();
    let mut flags = Vec::with_capacity(item.t_total());
    flags.extend(item.image_pad.iter().map(|p| !p));
    for (tok_idx, pad) in item.token_pad.iter().enumerate() {
        let mut ok = !pad;
        if matches!(kind, TaskKind::Ism | TaskKind::Attp) {
            let in_tgt = tok_idx >= item.src_len;
            if in_tgt && tok_idx != item.tgt_sos_token_index() {
                ok = false;
            }
        }
        let _ = n_img;
        flags.push(ok);
    }
    flags
}

/// Build the T x T additive attention mask for one item.
///
/// MTLM/ISM/ATTP: fully bidirectional over attendable positions.
/// PMT: image and source positions see all attendable image/source
/// positions and nothing in the target; target position i sees all
/// attendable image/source positions and target positions <= i.
pub fn build_attention_mask(kind: TaskKind, item: &BatchItem) -> Result<Vec<f64>> {
    let t = item.t_total();
    if t == 0 {
        return Err(Error::contract("build_attention_mask: empty item"));
    }
    let n_img = item.n_img();
    let src_end = n_img + item.src_len;
    let ok = attendable(item, kind);
    let mut mask = vec![Tape::MASK_NEG; t * t];
    for q in 0..t {
        if !ok[q] {
            // pad (or ISM-padded) rows attend to themselves only
            mask[q * t + q] = 0.0;
            continue;
        }
        for k in 0..t {
            if !ok[k] {
                continue;
            }
            let allowed = match kind {
                TaskKind::Mtlm | TaskKind::Ism | TaskKind::Attp => true,
                TaskKind::Pmt => {
                    let q_in_tgt = q >= src_end;
                    let k_in_tgt = k >= src_end;
                    if !q_in_tgt {
                        !k_in_tgt
                    } else {
                        !k_in_tgt || k <= q
                    }
                }
            };
            if allowed {
                mask[q * t + k] = 0.0;
            }
        }
    }
    Ok(mask)
}

/// Diagonal block of the full mask for one segment (independent stage).
pub fn segment_block(mask: &[f64], t_total: usize, start: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len * len];
    for q in 0..len {
        for k in 0..len {
            out[q * len + k] = mask[(start + q) * t_total + (start + k)];
        }
    }
    out
}
