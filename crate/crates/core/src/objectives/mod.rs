//! Pre-training tasks (MTLM / ISM / ATTP), the PMT fine-tuning objective
//! and the task scheduler.

pub mod losses;
pub mod masking;
pub mod schedule;

pub use losses::{attp_loss, ism_loss, ism_loss_value, mtlm_loss, pmt_loss};
pub use masking::{
    apply_attp_masking, apply_mtlm_masking, apply_mtlm_masking_scoped, apply_pmt_masking,
    sample_ism_pair, MaskOutcome, MaskScope,
    SkipSample,
};
pub use schedule::TaskSchedule;
