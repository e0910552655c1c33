//! Model parameter layout and initialization.
//!
//! Parameters live in a flat [`ParamStore`] under hierarchical names.
//! The word-prediction projection is the token embedding itself (tied),
//! and in pre-training the target independent encoder aliases the source
//! encoder ("tgt.*" resolves to the "src.*" storage until split).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::model::config::ModelConfig;
use crate::tensor::store::ParamStore;

pub const TOKEN_EMB: &str = "token_emb";
pub const OUT_BIAS: &str = "out_bias";
pub const IMG_PROJ_W: &str = "img_proj_w";
pub const IMG_PROJ_B: &str = "img_proj_b";
pub const MODALITY_EMB: &str = "modality_emb";
pub const POS_EMB: &str = "pos_emb";
pub const MATCH_W: &str = "match_w";
pub const MATCH_B: &str = "match_b";
pub const ATTR_W: &str = "attr_w";
pub const ATTR_B: &str = "attr_b";

/// Parameter-name components of one transformer encoder layer.
pub const LAYER_SUFFIXES: [&str; 16] = [
    "attn.wq", "attn.bq", "attn.wk", "attn.bk", "attn.wv", "attn.bv", "attn.wo", "attn.bo",
    "ln1.g", "ln1.b", "ff.w1", "ff.b1", "ff.w2", "ff.b2", "ln2.g", "ln2.b",
];

#[derive(Debug, Clone)]
pub struct Parameters {
    pub store: ParamStore,
    pub cfg: ModelConfig,
    /// true while "tgt.*" aliases the source encoder storage
    pub shared_src_tgt: bool,
}

fn add_layer(store: &mut ParamStore, prefix: &str, h: usize, ff: usize, rng: &mut ChaCha8Rng) {
    store.add_init(&format!("{prefix}.attn.wq"), vec![h, h], rng);
    store.add_zeros(&format!("{prefix}.attn.bq"), vec![h]);
    store.add_init(&format!("{prefix}.attn.wk"), vec![h, h], rng);
    store.add_zeros(&format!("{prefix}.attn.bk"), vec![h]);
    store.add_init(&format!("{prefix}.attn.wv"), vec![h, h], rng);
    store.add_zeros(&format!("{prefix}.attn.bv"), vec![h]);
    store.add_init(&format!("{prefix}.attn.wo"), vec![h, h], rng);
    store.add_zeros(&format!("{prefix}.attn.bo"), vec![h]);
    store.add_ones(&format!("{prefix}.ln1.g"), vec![h]);
    store.add_zeros(&format!("{prefix}.ln1.b"), vec![h]);
    store.add_init(&format!("{prefix}.ff.w1"), vec![h, ff], rng);
    store.add_zeros(&format!("{prefix}.ff.b1"), vec![ff]);
    store.add_init(&format!("{prefix}.ff.w2"), vec![ff, h], rng);
    store.add_zeros(&format!("{prefix}.ff.b2"), vec![h]);
    store.add_ones(&format!("{prefix}.ln2.g"), vec![h]);
    store.add_zeros(&format!("{prefix}.ln2.b"), vec![h]);
}

impl Parameters {
    /// Fresh parameters: truncated normal (std 0.02) weights, zero biases,
    /// unit layer-norm gains.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let h = cfg.h;
        store.add_init(TOKEN_EMB, vec![cfg.v_vocab, h], &mut rng);
        store.add_zeros(OUT_BIAS, vec![cfg.v_vocab]);
        store.add_init(IMG_PROJ_W, vec![cfg.d_img, h], &mut rng);
        store.add_zeros(IMG_PROJ_B, vec![h]);
        store.add_init(MODALITY_EMB, vec![3, h], &mut rng);
        store.add_init(POS_EMB, vec![cfg.t_pos_max(), h], &mut rng);

        for l in 0..cfg.l_v {
            add_layer(&mut store, &format!("img.{l}"), h, cfg.ff_dim(), &mut rng);
        }
        for l in 0..cfg.l_s {
            add_layer(&mut store, &format!("src.{l}"), h, cfg.ff_dim(), &mut rng);
        }
        let mut shared = false;
        if cfg.l_t > 0 {
            if cfg.share_src_tgt_encoders && cfg.l_t == cfg.l_s {
                for l in 0..cfg.l_t {
                    for suffix in LAYER_SUFFIXES {
                        store.alias(&format!("tgt.{l}.{suffix}"), &format!("src.{l}.{suffix}"))?;
                    }
                }
                shared = true;
            } else {
                for l in 0..cfg.l_t {
                    add_layer(&mut store, &format!("tgt.{l}"), h, cfg.ff_dim(), &mut rng);
                }
            }
        }
        for l in 0..cfg.l_c {
            add_layer(&mut store, &format!("cross.{l}"), h, cfg.ff_dim(), &mut rng);
        }
        store.add_init(MATCH_W, vec![h, 1], &mut rng);
        store.add_zeros(MATCH_B, vec![1]);
        store.add_init(ATTR_W, vec![h, cfg.v_attr.max(1)], &mut rng);
        store.add_zeros(ATTR_B, vec![cfg.v_attr.max(1)]);

        Ok(Parameters {
            store,
            cfg: cfg.clone(),
            shared_src_tgt: shared,
        })
    }

    /// Give the target encoder its own storage, initially bit-identical
    /// to the source encoder. No-op when already separate or when there
    /// is no independent target encoder.
    pub fn split_shared_encoders(&mut self) -> Result<bool> {
        if !self.shared_src_tgt || self.cfg.l_t == 0 {
            return Ok(false);
        }
        for l in 0..self.cfg.l_t {
            for suffix in LAYER_SUFFIXES {
                self.store.unalias(&format!("tgt.{l}.{suffix}"))?;
            }
        }
        self.shared_src_tgt = false;
        Ok(true)
    }
}
