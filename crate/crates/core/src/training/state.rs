//! Serializable training state: sidecar JSON next to the checkpoint.
//! Adam moments are stored in the checkpoint container itself under
//! "adam.m." / "adam.v." prefixed names.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::checkpoint::{CkptPrecision, NamedArray};
use crate::model::params::Parameters;
use crate::tensor::adam::AdamState;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub schedule_cursor: u64,
    pub adam_step: u64,
    pub best_val_loss: Option<f64>,
    pub skipped_samples: u64,
}

impl TrainState {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Model parameters plus optimizer moments as one array list.
pub fn checkpoint_arrays(params: &Parameters, adam: &AdamState) -> Vec<NamedArray> {
    let mut arrays: Vec<NamedArray> = params
        .store
        .iter()
        .map(|(_, p)| NamedArray {
            name: p.name.clone(),
            shape: p.shape.clone(),
            data: p.data.clone(),
        })
        .collect();
    for (id, p) in params.store.iter() {
        arrays.push(NamedArray {
            name: format!("adam.m.{}", p.name),
            shape: p.shape.clone(),
            data: adam.m[id].clone(),
        });
        arrays.push(NamedArray {
            name: format!("adam.v.{}", p.name),
            shape: p.shape.clone(),
            data: adam.v[id].clone(),
        });
    }
    arrays
}

/// Split a loaded array list back into parameter and optimizer arrays.
pub fn restore_adam(params: &Parameters, arrays: &[NamedArray], adam: &mut AdamState) {
    for a in arrays {
        if let Some(name) = a.name.strip_prefix("adam.m.") {
            if let Ok(id) = params.store.id(name) {
                adam.m[id].copy_from_slice(&a.data);
            }
        } else if let Some(name) = a.name.strip_prefix("adam.v.") {
            if let Ok(id) = params.store.id(name) {
                adam.v[id].copy_from_slice(&a.data);
            }
        }
    }
}

pub const STATE_PRECISION: CkptPrecision = CkptPrecision::F64;
