//! Collated model inputs shared by the model, objectives and training.

use serde::{Deserialize, Serialize};

/// Reserved vocabulary ids.
pub const PAD: u32 = 0;
pub const SOS: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;
pub const N_RESERVED: u32 = 5;

/// Label value meaning "no prediction at this position".
pub const IGNORE_ID: i64 = -1;

/// Modality ids for the three input segments.
pub const MOD_IMG: u8 = 0;
pub const MOD_SRC: u8 = 1;
pub const MOD_TGT: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskKind {
    Mtlm,
    Ism,
    Attp,
    Pmt,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TaskKind::Mtlm => "mtlm",
            TaskKind::Ism => "ism",
            TaskKind::Attp => "attp",
            TaskKind::Pmt => "pmt",
        };
        f.write_str(s)
    }
}

/// One collated triplet: image features plus the source/target token
/// segments with modality and position ids, pad flags and task labels.
#[derive(Debug, Clone)]
pub struct BatchItem {
    /// n_img rows of d_img features (zero rows where padded)
    pub image_features: Vec<Vec<f64>>,
    pub image_pad: Vec<bool>,
    /// source segment then target segment, specials included, post-masking
    pub input_ids: Vec<u32>,
    pub src_len: usize,
    pub tgt_len: usize,
    pub modality_ids: Vec<u8>,
    pub position_ids: Vec<u32>,
    /// pad flags over token positions (parallel to input_ids)
    pub token_pad: Vec<bool>,
    /// original ids at prediction positions, IGNORE_ID elsewhere
    pub mlm_labels: Vec<i64>,
    pub match_label: Option<u8>,
    pub attr_labels: Option<Vec<usize>>,
    /// set when the sample was truncated to fit the sequence limits
    pub truncated: bool,
}

impl BatchItem {
    pub fn n_img(&self) -> usize {
        self.image_features.len()
    }

    pub fn t_total(&self) -> usize {
        self.n_img() + self.src_len + self.tgt_len
    }

    /// Index of the target [SOS] position within the token sequence.
    pub fn tgt_sos_token_index(&self) -> usize {
        self.src_len
    }
}

/// A collated batch for one task kind.
#[derive(Debug, Clone)]
pub struct MaskedBatch {
    pub task: TaskKind,
    pub items: Vec<BatchItem>,
}
