//! Training loop tests: LR schedule, loss trends, checkpoint/resume
//! determinism and encoder splitting during fine-tuning.

use upoc2_core::batch::TaskKind;
use upoc2_core::data::{build_vocab, generate_synthetic_corpus, Corpus, SynthSpec, Vocabulary};
use upoc2_core::model::ModelConfig;
use upoc2_core::training::{
    finetune, lr_at, pretrain, schedule_for, validation_pmt_loss, RunOptions, TrainConfig,
    TrainState,
};

fn lr_cfg() -> TrainConfig {
    TrainConfig {
        warmup_steps: 100,
        base_lr: 1e-4,
        ..TrainConfig::default()
    }
}

#[test]
fn lr_peak_at_warmup() {
    assert_eq!(lr_at(100, &lr_cfg()), 1e-4);
}

#[test]
fn lr_linear_during_warmup() {
    assert!((lr_at(50, &lr_cfg()) - 5e-5).abs() < 1e-20);
}

#[test]
fn lr_inverse_sqrt_after_warmup() {
    // step = 4 * warmup -> sqrt(1/4) = 1/2 of base
    assert!((lr_at(400, &lr_cfg()) - 5e-5).abs() < 1e-20);
}

fn small_setup(n: usize, seed: u64) -> (Corpus, Vocabulary, ModelConfig) {
    let spec = SynthSpec {
        n_triplets: n,
        n_src_types: 20,
        n_ambiguous: 4,
        d_img: 8,
        ..SynthSpec::default()
    };
    let (corpus, _) = generate_synthetic_corpus(&spec, seed).unwrap();
    let lists: Vec<&[String]> = corpus
        .triplets
        .iter()
        .flat_map(|t| [t.src_tokens.as_slice(), t.tgt_tokens.as_slice()])
        .collect();
    let vocab = build_vocab(lists, 1);
    let mut cfg = ModelConfig::clean(16, 2);
    cfg.d_img = 8;
    cfg.v_vocab = vocab.len();
    cfg.v_attr = corpus.attribute_vocab.len().max(1);
    cfg.dropout = 0.0;
    (corpus, vocab, cfg)
}

#[test]
fn all_task_losses_decrease() {
    let (corpus, vocab, cfg) = small_setup(60, 0);
    let tcfg = TrainConfig {
        max_steps: 480,
        warmup_steps: 40,
        base_lr: 1e-3,
        batch_size: 4,
        seed: 1,
        ..TrainConfig::default()
    };
    let tasks = [TaskKind::Mtlm, TaskKind::Ism, TaskKind::Attp];
    let out = pretrain(&corpus, &vocab, &cfg, &tcfg, &tasks, &RunOptions::default()).unwrap();
    for task in ["mtlm", "ism", "attp"] {
        let losses: Vec<f64> = out
            .log
            .iter()
            .filter(|e| e.task == task)
            .map(|e| e.loss)
            .collect();
        assert!(losses.len() >= 20, "{task}: only {} steps", losses.len());
        let k = 10.min(losses.len() / 2);
        let head: f64 = losses[..k].iter().sum::<f64>() / k as f64;
        let tail: f64 = losses[losses.len() - k..].iter().sum::<f64>() / k as f64;
        assert!(tail < head, "{task}: moving average {head} -> {tail}");
    }
}

#[test]
fn interrupted_resume_is_bit_exact() {
    let (corpus, vocab, cfg) = small_setup(24, 3);
    let base = TrainConfig {
        warmup_steps: 20,
        base_lr: 3e-4,
        batch_size: 2,
        seed: 5,
        ckpt_every: 30,
        ..TrainConfig::default()
    };
    let tasks = [TaskKind::Mtlm, TaskKind::Ism];

    // uninterrupted run: 60 steps
    let full = pretrain(
        &corpus,
        &vocab,
        &cfg,
        &TrainConfig { max_steps: 60, ..base.clone() },
        &tasks,
        &RunOptions::default(),
    )
    .unwrap();

    // interrupted run: stop at 30, resume to 60
    let dir = tempfile::tempdir().unwrap();
    pretrain(
        &corpus,
        &vocab,
        &cfg,
        &TrainConfig { max_steps: 30, ..base.clone() },
        &tasks,
        &RunOptions {
            out_dir: Some(dir.path().to_path_buf()),
            resume_from: None,
        },
    )
    .unwrap();
    let resumed = pretrain(
        &corpus,
        &vocab,
        &cfg,
        &TrainConfig { max_steps: 60, ..base },
        &tasks,
        &RunOptions {
            out_dir: None,
            resume_from: Some(dir.path().join("final.ckpt")),
        },
    )
    .unwrap();

    let tail: Vec<(u64, f64)> = full.log[30..].iter().map(|e| (e.step, e.loss)).collect();
    let resumed_log: Vec<(u64, f64)> = resumed.log.iter().map(|e| (e.step, e.loss)).collect();
    assert_eq!(tail.len(), resumed_log.len());
    for (a, b) in tail.iter().zip(&resumed_log) {
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.to_bits(), b.1.to_bits(), "step {}", a.0);
    }
    // final parameters bit-identical too
    for (_, p) in full.params.store.iter() {
        let id = resumed.params.store.id(&p.name).unwrap();
        let q = resumed.params.store.get(id);
        let pa: Vec<u64> = p.data.iter().map(|v| v.to_bits()).collect();
        let qa: Vec<u64> = q.data.iter().map(|v| v.to_bits()).collect();
        assert_eq!(pa, qa, "{}", p.name);
    }
}

#[test]
fn sharing_holds_during_pretraining() {
    let (corpus, vocab, cfg) = small_setup(24, 7);
    let tcfg = TrainConfig {
        max_steps: 10,
        warmup_steps: 5,
        batch_size: 2,
        seed: 2,
        ..TrainConfig::default()
    };
    let out = pretrain(
        &corpus,
        &vocab,
        &cfg,
        &tcfg,
        &[TaskKind::Mtlm],
        &RunOptions::default(),
    )
    .unwrap();
    assert!(out.params.shared_src_tgt);
    assert!(out.params.store.is_aliased("src.0.attn.wq", "tgt.0.attn.wq"));
}

#[test]
fn finetune_splits_and_diverges_encoders() {
    let (corpus, vocab, cfg) = small_setup(24, 9);
    let pre = pretrain(
        &corpus,
        &vocab,
        &cfg,
        &TrainConfig {
            max_steps: 5,
            warmup_steps: 5,
            batch_size: 2,
            seed: 3,
            ..TrainConfig::default()
        },
        &[TaskKind::Mtlm],
        &RunOptions::default(),
    )
    .unwrap();
    let out = finetune(
        pre.params,
        &corpus,
        &vocab,
        &cfg,
        &TrainConfig {
            max_steps: 20,
            warmup_steps: 5,
            batch_size: 2,
            seed: 4,
            eval_every: 10,
            ..TrainConfig::default()
        },
        &RunOptions::default(),
    )
    .unwrap();
    assert!(!out.params.shared_src_tgt);
    let s = out.params.store.id("src.0.attn.wq").unwrap();
    let t = out.params.store.id("tgt.0.attn.wq").unwrap();
    assert_ne!(out.params.store.get(s).data, out.params.store.get(t).data);
    assert!(out.state.best_val_loss.is_some());
    // the kept parameters reproduce the recorded best validation loss
    let val = validation_pmt_loss(&corpus, &vocab, &out.params, &cfg, 4).unwrap();
    assert!((val - out.state.best_val_loss.unwrap()).abs() < 1e-12);
}

#[test]
fn schedule_for_subsets() {
    let s = schedule_for(&[TaskKind::Mtlm, TaskKind::Ism, TaskKind::Attp]).unwrap();
    assert_eq!(s.cycle_len(), 12);
    let s = schedule_for(&[TaskKind::Mtlm, TaskKind::Ism]).unwrap();
    assert_eq!(s.cycle_len(), 4);
    let s = schedule_for(&[TaskKind::Mtlm]).unwrap();
    assert_eq!(s.task_at(17), TaskKind::Mtlm);
    assert!(schedule_for(&[]).is_err());
}

#[test]
fn train_state_json_roundtrip() {
    let state = TrainState {
        step: 123,
        schedule_cursor: 45,
        adam_step: 123,
        best_val_loss: Some(0.0625),
        skipped_samples: 7,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    state.save(&path).unwrap();
    let loaded = TrainState::load(&path).unwrap();
    assert_eq!(loaded.step, 123);
    assert_eq!(loaded.schedule_cursor, 45);
    assert_eq!(loaded.adam_step, 123);
    assert_eq!(loaded.best_val_loss, Some(0.0625));
    assert_eq!(loaded.skipped_samples, 7);
}

#[test]
fn pretrain_rejects_empty_train_split() {
    let (mut corpus, vocab, cfg) = small_setup(10, 1);
    corpus.splits.train.clear();
    let res = pretrain(
        &corpus,
        &vocab,
        &cfg,
        &TrainConfig::default(),
        &[TaskKind::Mtlm],
        &RunOptions::default(),
    );
    assert!(matches!(res.err(), Some(upoc2_core::Error::Config(_))));
}
