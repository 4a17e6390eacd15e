use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spen::{SpenCapacity, SpenVariant, MODULATION_DIM};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    /// Side of a square patch, `H = W`.
    pub patch_size: usize,
    /// Side of a space-to-depth token block, `p`.
    pub token_size: usize,
    pub d: usize,
    pub blocks: usize,
    pub heads: usize,
    /// Forecast steps produced per patch.
    pub m: usize,
    pub variant: SpenVariant,
    /// Scale of the within-patch coordinate codes added to queries and keys.
    pub qk_coord_gain: f64,
    pub capacity: SpenCapacity,
    pub init_seed: u64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            patch_size: 16,
            token_size: 4,
            d: 64,
            blocks: 4,
            heads: 4,
            m: 5,
            variant: SpenVariant::Full,
            qk_coord_gain: 2.0,
            capacity: SpenCapacity::default(),
            init_seed: 0,
        }
    }
}

impl DenoiserConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.d % MODULATION_DIM != 0 {
            return Err(Error::Config(format!("d = {} must be a positive multiple of {MODULATION_DIM}", self.d)));
        }
        if self.heads == 0 || self.d % self.heads != 0 {
            return Err(Error::Config(format!("{} heads do not divide d = {}", self.heads, self.d)));
        }
        if self.token_size == 0 || self.patch_size == 0 || self.patch_size % self.token_size != 0 {
            return Err(Error::Config(format!(
                "token size {} does not divide patch size {}",
                self.token_size, self.patch_size
            )));
        }
        if self.m == 0 || self.m >= self.capacity.time {
            return Err(Error::Config(format!("M = {} must be in [1, {})", self.m, self.capacity.time)));
        }
        if self.capacity.position == 0 || self.capacity.position > crate::spen::MAX_CAPACITY || self.capacity.time > crate::spen::MAX_CAPACITY {
            return Err(Error::Config("invalid index capacity".into()));
        }
        if !self.qk_coord_gain.is_finite() {
            return Err(Error::Config("qk_coord_gain must be finite".into()));
        }
        Ok(())
    }

    /// Target tokens per side, `h = H / p`.
    pub fn token_grid(&self) -> usize {
        self.patch_size / self.token_size
    }

    /// Reference tokens per side after two stride-2 convolutions.
    pub fn ref_grid(&self) -> usize {
        self.patch_size.div_ceil(2).div_ceil(2)
    }

    pub fn enc_hidden(&self) -> usize {
        (self.d / 2).max(1)
    }
}
