//! Command-line entry point: corpus generation, pre-training,
//! fine-tuning, translation and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use upoc2_core::batch::TaskKind;
use upoc2_core::data::{build_vocab, load_corpus, write_synthetic_corpus, Corpus, SynthSpec};
use upoc2_core::decode::{evaluate_corpus, translate, DecodeConfig, DecodeMode};
use upoc2_core::model::{load_parameters, save_parameters, CkptPrecision, ModelConfig};
use upoc2_core::training::{finetune, pretrain, RunOptions, TrainConfig};
use upoc2_core::Error;

#[derive(Parser)]
#[command(
    name = "upoc2",
    about = "Multimodal product-description translation: pre-train, fine-tune, translate, evaluate",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Shared {
    /// flat JSON config file; flags override file values
    #[arg(long)]
    config: Option<PathBuf>,
    /// output directory for artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// store checkpoints with 64-bit payloads (bit-exact resume)
    #[arg(long, default_value_t = true)]
    f64: bool,
    /// worker threads for batch assembly (currently single-threaded)
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (corpus.jsonl, features.bin, splits.json)
    GenSynthetic {
        #[command(flatten)]
        shared: Shared,
        /// number of triplets
        #[arg(long, default_value_t = 500)]
        triplets: usize,
        /// number of ambiguous source types
        #[arg(long, default_value_t = 8)]
        ambiguous: usize,
        /// image feature noise
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 4)]
        categories: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
    },
    /// Pre-train with the MTLM/ISM/ATTP task mix
    Pretrain {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        data: DataArgs,
        /// comma-separated task subset: mtlm | mtlm,ism | mtlm,ism,attp
        #[arg(long, default_value = "mtlm,ism,attp")]
        tasks: String,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fine-tune a pre-trained checkpoint on the translation task
    Finetune {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ckpt: Option<PathBuf>,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Translate the source sentence of one triplet id (or given tokens)
    Translate {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ckpt: PathBuf,
        /// triplet id to translate
        #[arg(long)]
        id: String,
    },
    /// Decode a split and report BLEU / CIDEr
    Evaluate {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        ckpt: PathBuf,
        /// which split to score
        #[arg(long, default_value = "test")]
        split: String,
    },
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    splits: Option<PathBuf>,
    /// directory holding corpus.jsonl / features.bin / splits.json
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

/// Flat config file schema; unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct FileConfig {
    // model
    l_v: Option<usize>,
    l_s: Option<usize>,
    l_t: Option<usize>,
    l_c: Option<usize>,
    h: Option<usize>,
    a: Option<usize>,
    d_img: Option<usize>,
    n_img_max: Option<usize>,
    t_src_max: Option<usize>,
    t_tgt_max: Option<usize>,
    share_src_tgt_encoders: Option<bool>,
    dropout: Option<f64>,
    preset: Option<String>,
    min_count: Option<usize>,
    // training
    max_steps: Option<u64>,
    warmup_steps: Option<u64>,
    base_lr: Option<f64>,
    finetune_lr: Option<f64>,
    batch_size: Option<usize>,
    seed: Option<u64>,
    log_every: Option<u64>,
    ckpt_every: Option<u64>,
    clip_norm: Option<f64>,
    eval_every: Option<u64>,
    ism_batch_multiplier: Option<usize>,
    attp_batch_multiplier: Option<usize>,
    // decoding
    max_len: Option<usize>,
    mode: Option<String>,
    temperature: Option<f64>,
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, Error> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

struct Resolved {
    model: ModelConfig,
    train: TrainConfig,
    decode: DecodeConfig,
    min_count: usize,
    precision: CkptPrecision,
}

fn resolve(shared: &Shared, file: &FileConfig, d_img: Option<usize>) -> Result<Resolved, Error> {
    let mut model = match file.preset.as_deref() {
        None | Some("desk") => ModelConfig::desk(),
        Some("paper-clean") => ModelConfig::paper_clean(),
        Some("paper-noisy") => ModelConfig::paper_noisy(),
        Some(other) => {
            return Err(Error::Config(format!(
                "preset: unknown value {other:?} (desk | paper-clean | paper-noisy)"
            )))
        }
    };
    macro_rules! set {
        ($cfg:expr, $($f:ident),*) => { $( if let Some(v) = file.$f { $cfg.$f = v; } )* };
    }
    set!(model, l_v, l_s, l_t, l_c, h, a, d_img, n_img_max, t_src_max, t_tgt_max, dropout);
    if let Some(v) = file.share_src_tgt_encoders {
        model.share_src_tgt_encoders = v;
    }
    if let Some(d) = d_img {
        model.d_img = d;
    }

    let mut train = TrainConfig::default();
    set!(train, max_steps, warmup_steps, base_lr, finetune_lr, batch_size, seed, log_every, ckpt_every, clip_norm, eval_every, ism_batch_multiplier, attp_batch_multiplier);
    if let Some(seed) = shared.seed {
        train.seed = seed;
    }

    let mut decode = DecodeConfig {
        seed: train.seed,
        ..DecodeConfig::default()
    };
    if let Some(v) = file.max_len {
        decode.max_len = v;
    }
    if let Some(m) = &file.mode {
        decode.mode = match m.as_str() {
            "greedy" => DecodeMode::Greedy,
            "sample" => DecodeMode::Sample,
            other => return Err(Error::Config(format!("mode: unknown value {other:?}"))),
        };
    }
    if let Some(v) = file.temperature {
        decode.temperature = v;
    }

    Ok(Resolved {
        model,
        train,
        decode,
        min_count: file.min_count.unwrap_or(1),
        precision: if shared.f64 {
            CkptPrecision::F64
        } else {
            CkptPrecision::F32
        },
    })
}

fn load_data(args: &DataArgs) -> Result<Corpus, Error> {
    let (corpus, features, splits) = match &args.data_dir {
        Some(dir) => (
            dir.join("corpus.jsonl"),
            dir.join("features.bin"),
            Some(dir.join("splits.json")),
        ),
        None => {
            let c = args
                .corpus
                .clone()
                .ok_or_else(|| Error::Config("--corpus (or --data-dir) is required".into()))?;
            let f = args
                .features
                .clone()
                .ok_or_else(|| Error::Config("--features (or --data-dir) is required".into()))?;
            (c, f, args.splits.clone())
        }
    };
    load_corpus(&corpus, &features, splits.as_deref())
}

fn parse_tasks(spec: &str) -> Result<Vec<TaskKind>, Error> {
    spec.split(',')
        .map(|t| match t.trim() {
            "mtlm" => Ok(TaskKind::Mtlm),
            "ism" => Ok(TaskKind::Ism),
            "attp" => Ok(TaskKind::Attp),
            other => Err(Error::Config(format!("--tasks: unknown task {other:?}"))),
        })
        .collect()
}

fn vocab_for(corpus: &Corpus, min_count: usize) -> upoc2_core::data::Vocabulary {
    let lists: Vec<&[String]> = corpus
        .triplets
        .iter()
        .flat_map(|t| [t.src_tokens.as_slice(), t.tgt_tokens.as_slice()])
        .collect();
    build_vocab(lists, min_count)
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::GenSynthetic {
            shared,
            triplets,
            ambiguous,
            sigma,
            categories,
            dim,
        } => {
            let out = shared
                .out
                .clone()
                .ok_or_else(|| Error::Config("--out is required for gen-synthetic".into()))?;
            let spec = SynthSpec {
                n_triplets: triplets,
                n_ambiguous: ambiguous,
                sigma,
                n_categories: categories,
                d_img: dim,
                ..SynthSpec::default()
            };
            if sigma < 0.0 {
                return Err(Error::Config("--sigma must be non-negative".into()));
            }
            let corpus = write_synthetic_corpus(&spec, shared.seed.unwrap_or(0), &out)?;
            println!(
                "wrote {} triplets ({} train / {} validation / {} test) to {}",
                corpus.len(),
                corpus.splits.train.len(),
                corpus.splits.validation.len(),
                corpus.splits.test.len(),
                out.display()
            );
            Ok(())
        }
        Command::Pretrain {
            shared,
            data,
            tasks,
            max_steps,
            resume,
        } => {
            let file = load_file_config(shared.config.as_deref())?;
            let corpus = load_data(&data)?;
            let mut resolved = resolve(&shared, &file, Some(corpus.d_img))?;
            if let Some(s) = max_steps {
                resolved.train.max_steps = s;
            }
            let vocab = vocab_for(&corpus, resolved.min_count);
            resolved.model.v_vocab = vocab.len();
            resolved.model.v_attr = corpus.attribute_vocab.len().max(1);
            let tasks = parse_tasks(&tasks)?;
            let opts = RunOptions {
                out_dir: shared.out.clone(),
                resume_from: resume,
            };
            let out = pretrain(&corpus, &vocab, &resolved.model, &resolved.train, &tasks, &opts)?;
            let last = out.log.last().map(|e| e.loss).unwrap_or(f64::NAN);
            println!("pre-training done: {} steps, last loss {last:.4}", out.state.step);
            Ok(())
        }
        Command::Finetune {
            shared,
            data,
            ckpt,
            max_steps,
        } => {
            let file = load_file_config(shared.config.as_deref())?;
            let corpus = load_data(&data)?;
            let mut resolved = resolve(&shared, &file, Some(corpus.d_img))?;
            if let Some(s) = max_steps {
                resolved.train.max_steps = s;
            }
            let vocab = vocab_for(&corpus, resolved.min_count);
            resolved.model.v_vocab = vocab.len();
            resolved.model.v_attr = corpus.attribute_vocab.len().max(1);
            let params = match &ckpt {
                Some(p) => load_parameters(&resolved.model, p, resolved.train.seed)?,
                None => upoc2_core::model::Parameters::init(&resolved.model, resolved.train.seed)?,
            };
            let opts = RunOptions {
                out_dir: shared.out.clone(),
                resume_from: None,
            };
            let out = finetune(params, &corpus, &vocab, &resolved.model, &resolved.train, &opts)?;
            if let Some(dir) = &shared.out {
                save_parameters(&out.params, &dir.join("model.ckpt"), resolved.precision)?;
            }
            println!(
                "fine-tuning done: {} steps, best validation loss {:?}",
                out.state.step, out.state.best_val_loss
            );
            Ok(())
        }
        Command::Translate {
            shared,
            data,
            ckpt,
            id,
        } => {
            let file = load_file_config(shared.config.as_deref())?;
            let corpus = load_data(&data)?;
            let mut resolved = resolve(&shared, &file, Some(corpus.d_img))?;
            let vocab = vocab_for(&corpus, resolved.min_count);
            resolved.model.v_vocab = vocab.len();
            resolved.model.v_attr = corpus.attribute_vocab.len().max(1);
            let params = load_parameters(&resolved.model, &ckpt, resolved.train.seed)?;
            let idx = *corpus
                .by_id
                .get(&id)
                .ok_or_else(|| Error::Config(format!("--id: unknown triplet {id:?}")))?;
            let t = &corpus.triplets[idx];
            let tr = translate(
                &params,
                &resolved.model,
                &vocab,
                &t.image_features,
                &t.src_tokens,
                &resolved.decode,
            )?;
            println!("{}", tr.tokens.join(" "));
            if !tr.terminated {
                eprintln!("warning: hit max_len without [EOS]");
            }
            Ok(())
        }
        Command::Evaluate {
            shared,
            data,
            ckpt,
            split,
        } => {
            let file = load_file_config(shared.config.as_deref())?;
            let corpus = load_data(&data)?;
            let mut resolved = resolve(&shared, &file, Some(corpus.d_img))?;
            let vocab = vocab_for(&corpus, resolved.min_count);
            resolved.model.v_vocab = vocab.len();
            resolved.model.v_attr = corpus.attribute_vocab.len().max(1);
            let params = load_parameters(&resolved.model, &ckpt, resolved.train.seed)?;
            let ids = match split.as_str() {
                "train" => &corpus.splits.train,
                "validation" => &corpus.splits.validation,
                "test" => &corpus.splits.test,
                other => return Err(Error::Config(format!("--split: unknown split {other:?}"))),
            };
            let out = evaluate_corpus(&params, &resolved.model, &vocab, &corpus, ids, &resolved.decode)?;
            let json = serde_json::to_string_pretty(&out.report)?;
            println!("{json}");
            if let Some(dir) = &shared.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("report.json"), &json)?;
                let mut lines = String::new();
                for h in &out.hypotheses {
                    lines.push_str(&serde_json::to_string(&h)?);
                    lines.push('\n');
                }
                std::fs::write(dir.join("hypotheses.jsonl"), lines)?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
