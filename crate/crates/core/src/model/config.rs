//! Architecture hyperparameters and the two published layer layouts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    /// independent encoder depths (image / source / target)
    pub l_v: usize,
    pub l_s: usize,
    pub l_t: usize,
    /// cross encoder depth
    pub l_c: usize,
    /// hidden size, divisible by the head count
    pub h: usize,
    /// attention heads
    pub a: usize,
    pub d_img: usize,
    pub v_vocab: usize,
    pub v_attr: usize,
    pub n_img_max: usize,
    pub t_src_max: usize,
    pub t_tgt_max: usize,
    pub share_src_tgt_encoders: bool,
    pub dropout: f64,
}

impl ModelConfig {
    /// "clean" layout: one independent layer per segment, 3 cross layers.
    pub fn clean(h: usize, a: usize) -> Self {
        ModelConfig {
            l_v: 1,
            l_s: 1,
            l_t: 1,
            l_c: 3,
            h,
            a,
            ..Self::base()
        }
    }

    /// "noisy" layout: independent encoders dropped, 6 cross layers.
    pub fn noisy(h: usize, a: usize) -> Self {
        ModelConfig {
            l_v: 0,
            l_s: 0,
            l_t: 0,
            l_c: 6,
            h,
            a,
            ..Self::base()
        }
    }

    /// Paper-scale presets.
    pub fn paper_clean() -> Self {
        Self::clean(512, 8)
    }

    pub fn paper_noisy() -> Self {
        Self::noisy(512, 8)
    }

    /// Desk-scale default.
    pub fn desk() -> Self {
        Self::clean(64, 4)
    }

    fn base() -> Self {
        ModelConfig {
            l_v: 1,
            l_s: 1,
            l_t: 1,
            l_c: 3,
            h: 64,
            a: 4,
            d_img: 16,
            v_vocab: 128,
            v_attr: 32,
            n_img_max: 8,
            t_src_max: 32,
            t_tgt_max: 32,
            share_src_tgt_encoders: true,
            dropout: 0.1,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.h / self.a
    }

    pub fn ff_dim(&self) -> usize {
        4 * self.h
    }

    /// Position table covers the longer sentence plus specials.
    pub fn t_pos_max(&self) -> usize {
        self.t_src_max.max(self.t_tgt_max) + 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.a == 0 || self.h % self.a != 0 {
            return Err(Error::Config(format!(
                "hidden size {} must be a positive multiple of head count {}",
                self.h, self.a
            )));
        }
        if self.l_c == 0 {
            return Err(Error::Config("cross encoder needs at least one layer".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        if self.v_vocab == 0 || self.d_img == 0 {
            return Err(Error::Config("v_vocab and d_img must be positive".into()));
        }
        Ok(())
    }
}
