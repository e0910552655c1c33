//! Pre-training and fine-tuning loops.
//!
//! Determinism contract: the whole loss trajectory is a pure function of
//! (seed, configs, corpus). Per-step RNG streams are derived from
//! (seed, step), so resumption from a checkpointed step replays the
//! uninterrupted run bit-exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{BatchItem, TaskKind};
use crate::data::corpus::Corpus;
use crate::data::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::checkpoint::save_arrays;
use crate::model::config::ModelConfig;
use crate::model::encoder::DropoutCtx;
use crate::model::params::Parameters;
use crate::objectives::losses::{attp_loss, ism_loss, mtlm_loss, pmt_loss};
use crate::objectives::masking::{
    apply_attp_masking, apply_mtlm_masking, apply_pmt_masking, sample_ism_pair,
};
use crate::objectives::schedule::TaskSchedule;
use crate::tensor::adam::AdamState;
use crate::tensor::tape::Tape;
use crate::training::state::{checkpoint_arrays, restore_adam, TrainState, STATE_PRECISION};
use crate::training::{lr_at, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    pub task: String,
    pub loss: f64,
    pub lr: f64,
}

pub struct PretrainOutput {
    pub params: Parameters,
    pub log: Vec<LogEntry>,
    pub state: TrainState,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub resume_from: Option<PathBuf>,
}

fn step_rng(seed: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Build the schedule for a task subset: the full set runs 9:2:1, the
/// MTLM+ISM pair runs 3:1, a single task runs alone.
pub fn schedule_for(tasks: &[TaskKind]) -> Result<TaskSchedule> {
    let has = |t: TaskKind| tasks.contains(&t);
    if has(TaskKind::Mtlm) && has(TaskKind::Ism) && has(TaskKind::Attp) {
        Ok(TaskSchedule::standard())
    } else if has(TaskKind::Mtlm) && has(TaskKind::Ism) {
        Ok(TaskSchedule::no_attributes())
    } else if tasks.len() == 1 {
        TaskSchedule::new(&[(tasks[0], 1)])
    } else if tasks.is_empty() {
        Err(Error::Config("no pre-training tasks selected".into()))
    } else {
        // uniform over any other subset
        TaskSchedule::new(&tasks.iter().map(|&t| (t, 1)).collect::<Vec<_>>())
    }
}

struct StepStats {
    loss: f64,
    skipped: u64,
}

/// One optimizer step over a freshly sampled batch of the given task.
/// Grads accumulate with weight 1/batch_size so the reported loss is the
/// batch mean.
fn train_step(
    task: TaskKind,
    corpus: &Corpus,
    pool: &[usize],
    vocab: &Vocabulary,
    params: &mut Parameters,
    adam: &mut AdamState,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<StepStats> {
    let b = tcfg.batch_size
        * match task {
            TaskKind::Ism => tcfg.ism_batch_multiplier,
            TaskKind::Attp => tcfg.attp_batch_multiplier,
            TaskKind::Mtlm | TaskKind::Pmt => 1,
        };
    let mut items: Vec<BatchItem> = Vec::with_capacity(b);
    let mut skipped = 0u64;
    let mut attempts = 0u64;
    while items.len() < b {
        attempts += 1;
        if attempts > 100 * b as u64 {
            return Err(Error::contract(format!(
                "train_step: could not assemble a {task} batch (corpus unsuitable)"
            )));
        }
        let idx = pool[rng.gen_range(0..pool.len())];
        let triplet = &corpus.triplets[idx];
        let item = match task {
            TaskKind::Mtlm => match apply_mtlm_masking(triplet, rng, vocab, cfg)? {
                Ok(it) => it,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            },
            TaskKind::Pmt => match apply_pmt_masking(triplet, rng, vocab, cfg)? {
                Ok(it) => it,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            },
            TaskKind::Ism => sample_ism_pair(corpus, idx, rng, vocab, cfg)?.0,
            TaskKind::Attp => match apply_attp_masking(triplet, vocab, corpus, cfg)? {
                Ok(it) => it,
                Err(_) => {
                    skipped += 1;
                    continue;
                }
            },
        };
        items.push(item);
    }

    let mut total = 0.0;
    params.store.zero_grads();
    for item in &items {
        let grads = {
            let mut tape = Tape::new(&params.store);
            let mut dropout_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let mut ctx = DropoutCtx {
                rate: cfg.dropout,
                rng: &mut dropout_rng,
            };
            let dropout = if cfg.dropout > 0.0 { Some(&mut ctx) } else { None };
            let loss = match task {
                TaskKind::Mtlm => mtlm_loss(&mut tape, item, params, dropout)?,
                TaskKind::Pmt => pmt_loss(&mut tape, item, params, dropout)?,
                TaskKind::Ism => ism_loss(&mut tape, item, params, dropout)?.0,
                TaskKind::Attp => attp_loss(&mut tape, item, params, true, dropout)?,
            };
            let scaled = tape.scale(loss, 1.0 / b as f64);
            total += tape.value(loss)[0];
            tape.backward(scaled)?.into_param_grads()
        };
        params.store.accumulate_grads(&grads);
    }

    if tcfg.clip_norm > 0.0 {
        let norm = params.store.grad_global_norm();
        if norm > tcfg.clip_norm {
            params.store.scale_grads(tcfg.clip_norm / norm);
        }
    }
    adam.apply(&mut params.store, lr)?;

    Ok(StepStats {
        loss: total / b as f64,
        skipped,
    })
}

fn write_checkpoint(
    dir: &Path,
    tag: &str,
    params: &Parameters,
    adam: &AdamState,
    state: &TrainState,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let arrays = checkpoint_arrays(params, adam);
    save_arrays(&arrays, &dir.join(format!("{tag}.ckpt")), STATE_PRECISION)?;
    state.save(&dir.join(format!("{tag}.state.json")))?;
    Ok(())
}

fn append_log(dir: Option<&Path>, entries: &[LogEntry]) -> Result<()> {
    let Some(dir) = dir else { return Ok(()) };
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(dir.join("train.log.jsonl"))?;
    for e in entries {
        serde_json::to_writer(&mut f, e)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Pre-training loop: schedule a task per step, build its batch, step
/// the optimizer under the warm-up/decay schedule.
pub fn pretrain(
    corpus: &Corpus,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    tasks: &[TaskKind],
    opts: &RunOptions,
) -> Result<PretrainOutput> {
    tcfg.validate()?;
    if corpus.splits.train.is_empty() {
        return Err(Error::Config("pretrain: empty train split".into()));
    }
    if tasks.contains(&TaskKind::Attp) && corpus.attribute_vocab.is_empty() {
        return Err(Error::Config(
            "pretrain: ATTP scheduled but the corpus has no attributes".into(),
        ));
    }
    let pool = corpus.split_indices(&corpus.splits.train)?;
    let mut schedule = schedule_for(tasks)?;

    let (mut params, mut adam, mut state) = match &opts.resume_from {
        Some(ckpt) => {
            let params = crate::model::load_parameters(cfg, ckpt, tcfg.seed)?;
            let mut adam = AdamState::new(&params.store);
            let arrays = crate::model::checkpoint::load_arrays(ckpt)?;
            restore_adam(&params, &arrays, &mut adam);
            let state_path = ckpt.with_extension("").with_extension("state.json");
            let state = TrainState::load(&state_path)?;
            adam.step = state.adam_step;
            (params, adam, state)
        }
        None => {
            let params = Parameters::init(cfg, tcfg.seed)?;
            let adam = AdamState::new(&params.store);
            let state = TrainState {
                step: 0,
                schedule_cursor: 0,
                adam_step: 0,
                best_val_loss: None,
                skipped_samples: 0,
            };
            (params, adam, state)
        }
    };
    schedule.cursor = state.schedule_cursor;

    let mut log = Vec::new();
    while state.step < tcfg.max_steps {
        state.step += 1;
        let task = schedule.next_task();
        state.schedule_cursor = schedule.cursor;
        let lr = lr_at(state.step, tcfg);
        let mut rng = step_rng(tcfg.seed, state.step);
        let stats = train_step(
            task, corpus, &pool, vocab, &mut params, &mut adam, cfg, tcfg, lr, &mut rng,
        )?;
        state.adam_step = adam.step;
        state.skipped_samples += stats.skipped;
        log.push(LogEntry {
            step: state.step,
            task: task.to_string(),
            loss: stats.loss,
            lr,
        });
        if let Some(dir) = &opts.out_dir {
            if state.step % tcfg.ckpt_every == 0 {
                write_checkpoint(dir, &format!("step{}", state.step), &params, &adam, &state)?;
            }
        }
    }
    if let Some(dir) = &opts.out_dir {
        write_checkpoint(dir, "final", &params, &adam, &state)?;
        append_log(Some(dir), &log)?;
    }
    Ok(PretrainOutput { params, log, state })
}

/// PMT validation loss with fixed masking (same masked positions at
/// every evaluation, independent of training progress).
pub fn validation_pmt_loss(
    corpus: &Corpus,
    vocab: &Vocabulary,
    params: &Parameters,
    cfg: &ModelConfig,
    seed: u64,
) -> Result<f64> {
    let idxs = corpus.split_indices(&corpus.splits.validation)?;
    if idxs.is_empty() {
        return Err(Error::Config("validation split is empty".into()));
    }
    let mut total = 0.0;
    let mut n = 0usize;
    for (i, &idx) in idxs.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x2545_F491_4F6C_DD1D));
        let triplet = &corpus.triplets[idx];
        let Ok(item) = apply_pmt_masking(triplet, &mut rng, vocab, cfg)? else {
            continue;
        };
        let mut tape = Tape::new(&params.store);
        let loss = pmt_loss(&mut tape, &item, params, None)?;
        total += tape.value(loss)[0];
        n += 1;
    }
    if n == 0 {
        return Err(Error::Config("validation split yielded no usable samples".into()));
    }
    Ok(total / n as f64)
}

/// Fine-tuning: separate the shared sentence encoders, then train PMT
/// only at the fine-tune learning rate, keeping the best-validation
/// parameters.
pub fn finetune(
    mut params: Parameters,
    corpus: &Corpus,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
    opts: &RunOptions,
) -> Result<PretrainOutput> {
    tcfg.validate()?;
    if corpus.splits.train.is_empty() {
        return Err(Error::Config("finetune: empty train split".into()));
    }
    params.split_shared_encoders()?;
    let pool = corpus.split_indices(&corpus.splits.train)?;
    let mut adam = AdamState::new(&params.store);
    let mut state = TrainState {
        step: 0,
        schedule_cursor: 0,
        adam_step: 0,
        best_val_loss: None,
        skipped_samples: 0,
    };
    let mut best_params: Option<Parameters> = None;
    let mut log = Vec::new();
    let has_validation = !corpus.splits.validation.is_empty();

    while state.step < tcfg.max_steps {
        state.step += 1;
        let lr = tcfg.finetune_lr;
        let mut rng = step_rng(tcfg.seed.wrapping_add(0x5bd1_e995), state.step);
        let stats = train_step(
            TaskKind::Pmt,
            corpus,
            &pool,
            vocab,
            &mut params,
            &mut adam,
            cfg,
            tcfg,
            lr,
            &mut rng,
        )?;
        state.adam_step = adam.step;
        state.skipped_samples += stats.skipped;
        log.push(LogEntry {
            step: state.step,
            task: TaskKind::Pmt.to_string(),
            loss: stats.loss,
            lr,
        });
        if has_validation && (state.step % tcfg.eval_every == 0 || state.step == tcfg.max_steps) {
            let val = validation_pmt_loss(corpus, vocab, &params, cfg, tcfg.seed)?;
            if state.best_val_loss.map_or(true, |b| val < b) {
                state.best_val_loss = Some(val);
                best_params = Some(params.clone());
            }
        }
        if let Some(dir) = &opts.out_dir {
            if state.step % tcfg.ckpt_every == 0 {
                write_checkpoint(dir, &format!("step{}", state.step), &params, &adam, &state)?;
            }
        }
    }
    let final_params = best_params.unwrap_or_else(|| params.clone());
    if let Some(dir) = &opts.out_dir {
        write_checkpoint(dir, "final", &final_params, &adam, &state)?;
        append_log(Some(dir), &log)?;
    }
    Ok(PretrainOutput {
        params: final_params,
        log,
        state,
    })
}
