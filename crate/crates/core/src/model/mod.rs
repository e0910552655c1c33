//! The multimodal transformer: input representation, four encoder
//! stacks, prediction heads and checkpointing.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod mask;
pub mod params;

pub use checkpoint::{load_arrays, save_arrays, CkptPrecision, NamedArray};
pub use config::ModelConfig;
pub use encoder::{
    attribute_logits, embed_inputs, encoder_layer, forward, match_score, mlm_logits, DropoutCtx,
    EncodedSequence,
};
pub use mask::build_attention_mask;
pub use params::{
    Parameters, ATTR_B, ATTR_W, IMG_PROJ_B, IMG_PROJ_W, MATCH_B, MATCH_W, MODALITY_EMB, OUT_BIAS,
    POS_EMB, TOKEN_EMB,
};

use crate::error::{Error, Result};
use std::path::Path;

/// Save model parameters (canonical storage only; aliases such as a
/// shared target encoder are reconstructed from the config on load).
pub fn save_parameters(params: &Parameters, path: &Path, precision: CkptPrecision) -> Result<()> {
    let arrays: Vec<NamedArray> = params
        .store
        .iter()
        .map(|(_, p)| NamedArray {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.data.clone(),
        })
        .collect();
    save_arrays(&arrays, path, precision)
}

/// Load parameters for a config. Shapes must match the layout the config
/// implies; mismatches are reported with the differing dimensions.
pub fn load_parameters(cfg: &ModelConfig, path: &Path, seed: u64) -> Result<Parameters> {
    let arrays = load_arrays(path)?;
    let mut params = Parameters::init(cfg, seed)?;
    // a fine-tuned checkpoint carries separate target-encoder arrays
    if params.shared_src_tgt && arrays.iter().any(|a| a.name.starts_with("tgt.")) {
        params.split_shared_encoders()?;
    }
    let mut seen = std::collections::HashSet::new();
    for a in &arrays {
        // optimizer moments ride along in training checkpoints
        if a.name.starts_with("adam.") {
            continue;
        }
        let id = params.store.id(&a.name).map_err(|_| {
            Error::Load(format!("checkpoint entry {:?} not in model layout", a.name))
        })?;
        let p = params.store.get_mut(id);
        if p.shape != a.shape {
            return Err(Error::Load(format!(
                "checkpoint/config mismatch for {:?}: file dims {:?}, model dims {:?}",
                a.name, a.shape, p.shape
            )));
        }
        p.data.copy_from_slice(&a.data);
        seen.insert(a.name.clone());
    }
    for (_, p) in params.store.iter() {
        if !seen.contains(&p.name) {
            return Err(Error::Load(format!(
                "checkpoint is missing parameter {:?}",
                p.name
            )));
        }
    }
    Ok(params)
}
