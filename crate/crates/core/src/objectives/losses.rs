//! Task losses wired through the model forward pass.

use crate::batch::{BatchItem, TaskKind, IGNORE_ID};
use crate::error::{Error, Result};
use crate::model::encoder::{attribute_logits, forward, match_score, mlm_logits, DropoutCtx};
use crate::model::params::Parameters;
use crate::tensor::tape::{Tape, TensorRef};

/// Masked-word cross-entropy for one MTLM item: predictions at every
/// labeled position in both sentences, bidirectional context.
pub fn mtlm_loss(
    tape: &mut Tape,
    item: &BatchItem,
    params: &Parameters,
    dropout: Option<&mut DropoutCtx>,
) -> Result<TensorRef> {
    masked_word_loss(tape, item, params, TaskKind::Mtlm, dropout)
}

/// Masked-word cross-entropy for one PMT item under the uni-directional
/// target mask.
pub fn pmt_loss(
    tape: &mut Tape,
    item: &BatchItem,
    params: &Parameters,
    dropout: Option<&mut DropoutCtx>,
) -> Result<TensorRef> {
    masked_word_loss(tape, item, params, TaskKind::Pmt, dropout)
}

fn masked_word_loss(
    tape: &mut Tape,
    item: &BatchItem,
    params: &Parameters,
    task: TaskKind,
    dropout: Option<&mut DropoutCtx>,
) -> Result<TensorRef> {
    let positions: Vec<usize> = item
        .mlm_labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != IGNORE_ID)
        .map(|(i, _)| i)
        .collect();
    if positions.is_empty() {
        return Err(Error::contract(format!(
            "{task} loss: batch item has no masked positions"
        )));
    }
    let enc = forward(tape, item, params, task, dropout)?;
    let logits = mlm_logits(tape, &enc, &positions, params)?;
    let labels: Vec<i64> = positions.iter().map(|&p| item.mlm_labels[p]).collect();
    tape.cross_entropy_masked(logits, &labels, IGNORE_ID)
}

/// Binary cross-entropy of the matching head. Returns the loss node and
/// the sigmoid score.
pub fn ism_loss(
    tape: &mut Tape,
    item: &BatchItem,
    params: &Parameters,
    dropout: Option<&mut DropoutCtx>,
) -> Result<(TensorRef, f64)> {
    let label = item
        .match_label
        .ok_or_else(|| Error::contract("ism_loss: item carries no match label"))?;
    let enc = forward(tape, item, params, TaskKind::Ism, dropout)?;
    let (logit, score) = match_score(tape, &enc, params)?;
    let loss = tape.logistic_loss(logit, label as f64)?;
    Ok((loss, score))
}

/// Pointwise binary cross-entropy on a precomputed score, useful for
/// oracles: -(l log s + (1-l) log(1-s)).
pub fn ism_loss_value(score: f64, label: u8) -> f64 {
    if label == 1 {
        -score.ln()
    } else {
        -(1.0 - score).ln()
    }
}

/// Attribute-set cross-entropy over the attribute head. `normalize`
/// divides by |C| (default); the raw sum matches the unnormalized form.
pub fn attp_loss(
    tape: &mut Tape,
    item: &BatchItem,
    params: &Parameters,
    normalize: bool,
    dropout: Option<&mut DropoutCtx>,
) -> Result<TensorRef> {
    let labels = item
        .attr_labels
        .as_ref()
        .ok_or_else(|| Error::contract("attp_loss: item carries no attribute labels"))?;
    if labels.is_empty() {
        return Err(Error::contract("attp_loss: empty attribute set"));
    }
    let enc = forward(tape, item, params, TaskKind::Attp, dropout)?;
    let logits = attribute_logits(tape, &enc, params)?;
    tape.set_cross_entropy(logits, labels, normalize)
}
