//! Spatiotemporal index codes.
//!
//! Every token carries a patch-position index and a time-step index. Each
//! index maps to an 8-value sinusoidal code; the two codes are concatenated
//! into a 16-value modulation that is tiled across the feature dimension and
//! multiplied into attention queries and keys.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Tensor;

/// Length of one index code.
pub const CODE_DIM: usize = 8;
/// Length of the composed position+time modulation.
pub const MODULATION_DIM: usize = 2 * CODE_DIM;
pub const MAX_CAPACITY: usize = 65536;
const FREQ_BASE: f64 = 10000.0;

#[derive(Clone, Debug, PartialEq)]
pub struct SpenCode {
    pub index: usize,
    pub capacity: usize,
    /// Binary form of `index`, most significant bit first, `ceil(log2 capacity)` long.
    pub bits: Vec<bool>,
    pub rho: [f64; CODE_DIM],
}

/// Which index codes enter the modulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpenVariant {
    /// Identity modulation.
    NoEmbd,
    /// Time code only; the position half is all ones.
    TimeEmbd,
    /// Position and time codes.
    #[serde(rename = "spen")]
    Full,
}

impl SpenVariant {
    pub const ALL: [SpenVariant; 3] = [SpenVariant::NoEmbd, SpenVariant::TimeEmbd, SpenVariant::Full];

    pub fn label(self) -> &'static str {
        match self {
            SpenVariant::NoEmbd => "NoEmbd",
            SpenVariant::TimeEmbd => "TimeEmbd",
            SpenVariant::Full => "Full",
        }
    }
}

impl fmt::Display for SpenVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SpenVariant::NoEmbd => "noembd",
            SpenVariant::TimeEmbd => "timeembd",
            SpenVariant::Full => "spen",
        })
    }
}

impl FromStr for SpenVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "noembd" => Ok(SpenVariant::NoEmbd),
            "timeembd" => Ok(SpenVariant::TimeEmbd),
            "spen" | "full" => Ok(SpenVariant::Full),
            other => Err(Error::Config(format!("unknown variant `{other}` (expected noembd, timeembd or spen)"))),
        }
    }
}

/// Number of bits needed to address `capacity` distinct indices.
pub fn bit_width(capacity: usize) -> usize {
    if capacity <= 1 {
        0
    } else {
        (usize::BITS - (capacity - 1).leading_zeros()) as usize
    }
}

pub fn encode_index(index: usize, capacity: usize) -> Result<SpenCode> {
    if capacity == 0 || capacity > MAX_CAPACITY || index >= capacity {
        return Err(Error::Bounds { index, capacity });
    }
    let width = bit_width(capacity);
    let bits = (0..width).rev().map(|b| (index >> b) & 1 == 1).collect();
    let mut rho = [0.0; CODE_DIM];
    for i in 0..CODE_DIM / 2 {
        let angle = index as f64 / FREQ_BASE.powf((2 * i) as f64 / CODE_DIM as f64);
        rho[2 * i] = angle.sin();
        rho[2 * i + 1] = angle.cos();
    }
    Ok(SpenCode { index, capacity, bits, rho })
}

pub fn compose_codes(pos: &SpenCode, time: &SpenCode, variant: SpenVariant) -> [f64; MODULATION_DIM] {
    let mut out = [1.0; MODULATION_DIM];
    match variant {
        SpenVariant::NoEmbd => {}
        SpenVariant::TimeEmbd => out[CODE_DIM..].copy_from_slice(&time.rho),
        SpenVariant::Full => {
            out[..CODE_DIM].copy_from_slice(&pos.rho);
            out[CODE_DIM..].copy_from_slice(&time.rho);
        }
    }
    out
}

/// Index capacities for position and time codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpenCapacity {
    pub position: usize,
    pub time: usize,
}

impl Default for SpenCapacity {
    fn default() -> Self {
        Self { position: 16, time: 16 }
    }
}

/// Per-token modulation rows tiled to width `d`.
pub fn modulation(
    pos_index: &[usize],
    time_index: &[usize],
    variant: SpenVariant,
    capacity: SpenCapacity,
    d: usize,
) -> Result<Tensor> {
    if d % MODULATION_DIM != 0 {
        return Err(Error::Config(format!("feature width {d} is not a multiple of {MODULATION_DIM}")));
    }
    if pos_index.len() != time_index.len() {
        return Err(Error::Dimension(format!(
            "{} position indices but {} time indices",
            pos_index.len(),
            time_index.len()
        )));
    }
    let b = pos_index.len();
    let mut data = Vec::with_capacity(b * d);
    for (&p, &t) in pos_index.iter().zip(time_index) {
        let row = compose_codes(&encode_index(p, capacity.position)?, &encode_index(t, capacity.time)?, variant);
        for _ in 0..d / MODULATION_DIM {
            data.extend_from_slice(&row);
        }
    }
    Tensor::new(vec![b, d], data)
}

/// `h ⊙ ρ` per token. No learned parameters.
pub fn apply_spen(
    h: &Tensor,
    pos_index: &[usize],
    time_index: &[usize],
    variant: SpenVariant,
    capacity: SpenCapacity,
) -> Result<Tensor> {
    let (b, d) = h.dims2()?;
    if pos_index.len() != b {
        return Err(Error::Dimension(format!("{b} tokens but {} position indices", pos_index.len())));
    }
    if variant == SpenVariant::NoEmbd {
        if d % MODULATION_DIM != 0 {
            return Err(Error::Config(format!("feature width {d} is not a multiple of {MODULATION_DIM}")));
        }
        return Ok(h.clone());
    }
    let m = modulation(pos_index, time_index, variant, capacity, d)?;
    h.zip_map(&m, |a, b| a * b)
}
