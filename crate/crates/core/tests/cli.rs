//! Command-line interface tests: exit codes, determinism of generated
//! artifacts, and the train/evaluate round trip.

use std::path::Path;
use std::process::{Command, Output};

fn upoc2(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upoc2"))
        .args(args)
        .output()
        .expect("failed to spawn the upoc2 binary")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        serde_json::json!({
            "h": 8,
            "a": 2,
            "l_c": 2,
            "max_steps": 12,
            "warmup_steps": 6,
            "base_lr": 1e-3,
            "finetune_lr": 1e-3,
            "batch_size": 2,
            "eval_every": 1000,
            "max_len": 8
        })
        .to_string(),
    )
    .unwrap();
    path.to_string_lossy().into_owned()
}

fn gen_corpus(dir: &Path, seed: &str) {
    let out = upoc2(&[
        "gen-synthetic",
        "--out",
        dir.to_str().unwrap(),
        "--seed",
        seed,
        "--triplets",
        "40",
        "--ambiguous",
        "4",
        "--dim",
        "8",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_synthetic_is_deterministic_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    gen_corpus(&a, "7");
    gen_corpus(&b, "7");
    gen_corpus(&c, "8");
    for name in ["corpus.jsonl", "features.bin", "splits.json"] {
        assert_eq!(read(&a.join(name)), read(&b.join(name)), "{name} differs across reruns");
    }
    assert_ne!(read(&a.join("corpus.jsonl")), read(&c.join("corpus.jsonl")));
}

#[test]
fn negative_sigma_is_a_usage_error_naming_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = upoc2(&[
        "gen-synthetic",
        "--out",
        tmp.path().to_str().unwrap(),
        "--sigma=-1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--sigma"), "stderr: {stderr}");
}

#[test]
fn unknown_subcommand_and_flag_exit_with_2() {
    assert_eq!(upoc2(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(upoc2(&["gen-synthetic", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    gen_corpus(tmp.path(), "1");
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"hidden_size": 8}"#).unwrap();
    let out = upoc2(&[
        "pretrain",
        "--data-dir",
        tmp.path().to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hidden_size"));
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    gen_corpus(tmp.path(), "2");
    let out = upoc2(&[
        "evaluate",
        "--data-dir",
        tmp.path().to_str().unwrap(),
        "--ckpt",
        tmp.path().join("absent.ckpt").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn train_translate_evaluate_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen_corpus(&data, "3");
    let config = small_config(tmp.path());
    let data_dir = data.to_str().unwrap();

    // pre-train, then fine-tune from the pre-trained checkpoint
    let pre_dir = tmp.path().join("pre");
    let out = upoc2(&[
        "pretrain",
        "--data-dir",
        data_dir,
        "--config",
        &config,
        "--out",
        pre_dir.to_str().unwrap(),
        "--tasks",
        "mtlm,ism,attp",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let pre_ckpt = pre_dir.join("final.ckpt");
    assert!(pre_ckpt.exists());

    let fine_dir = tmp.path().join("fine");
    let out = upoc2(&[
        "finetune",
        "--data-dir",
        data_dir,
        "--config",
        &config,
        "--ckpt",
        pre_ckpt.to_str().unwrap(),
        "--out",
        fine_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = fine_dir.join("model.ckpt");
    assert!(model.exists());

    // translate a known id; unknown ids are config errors
    let out = upoc2(&[
        "translate",
        "--data-dir",
        data_dir,
        "--config",
        &config,
        "--ckpt",
        model.to_str().unwrap(),
        "--id",
        "syn0",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = upoc2(&[
        "translate",
        "--data-dir",
        data_dir,
        "--config",
        &config,
        "--ckpt",
        model.to_str().unwrap(),
        "--id",
        "nope",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // evaluate twice: identical reports, artifacts written
    let run_eval = |dir: &Path| -> Vec<u8> {
        let out = upoc2(&[
            "evaluate",
            "--data-dir",
            data_dir,
            "--config",
            &config,
            "--ckpt",
            model.to_str().unwrap(),
            "--split",
            "test",
            "--out",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert!(dir.join("report.json").exists());
        assert!(dir.join("hypotheses.jsonl").exists());
        out.stdout
    };
    let e1 = tmp.path().join("eval1");
    let e2 = tmp.path().join("eval2");
    let r1 = run_eval(&e1);
    let r2 = run_eval(&e2);
    assert_eq!(r1, r2, "evaluation reports differ between reruns");
    assert_eq!(read(&e1.join("report.json")), read(&e2.join("report.json")));
    let report: serde_json::Value =
        serde_json::from_slice(&read(&e1.join("report.json"))).unwrap();
    assert!(report.get("bleu").and_then(|b| b.get("bleu@4")).is_some(), "{report}");

    // unknown split name is a usage error
    let out = upoc2(&[
        "evaluate",
        "--data-dir",
        data_dir,
        "--config",
        &config,
        "--ckpt",
        model.to_str().unwrap(),
        "--split",
        "holdout",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
