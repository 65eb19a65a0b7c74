use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::numerics::Real;

pub const LAYER_NORM_EPS: Real = 1e-5;

/// How attention scores become aggregation weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionNormalization {
    /// `exp(a) / Σ exp(a)` per row.
    #[default]
    Softmax,
    /// `a / Σ exp(a)` per row: raw score over the exponential partition sum.
    RawNumerator,
}

/// Width of each head's query/key projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HeadLayout {
    /// Every head projects `d → d`; scores are scaled by `sqrt(d)`.
    #[default]
    Full,
    /// Every head projects `d → d/heads`; scores are scaled by `sqrt(d/heads)`.
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    /// Embedding width.
    pub d: usize,
    pub heads: usize,
    /// History length in slots.
    pub k: usize,
    pub ff_dim: usize,
    pub n_blocks: usize,
    pub dropout: Real,
    /// Size of the time one-hot; `7·slots_per_day` means time of week.
    pub time_vocab: usize,
    pub n_regions: usize,
    #[serde(default)]
    pub attention_normalization: AttentionNormalization,
    #[serde(default)]
    pub head_layout: HeadLayout,
}

impl Default for HyperParams {
    /// Taxi configuration on a 200-region grid with 30-minute slots.
    fn default() -> Self {
        Self {
            d: 64,
            heads: 4,
            k: 5,
            ff_dim: 128,
            n_blocks: 1,
            dropout: 0.1,
            time_vocab: 7 * 48,
            n_regions: 200,
            attention_normalization: AttentionNormalization::Softmax,
            head_layout: HeadLayout::Full,
        }
    }
}

impl HyperParams {
    pub fn nyc_taxi() -> Self {
        Self::default()
    }

    pub fn nyc_bike() -> Self {
        Self {
            k: 4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("d", self.d),
            ("heads", self.heads),
            ("k", self.k),
            ("ff_dim", self.ff_dim),
            ("n_blocks", self.n_blocks),
            ("time_vocab", self.time_vocab),
            ("n_regions", self.n_regions),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be at least 1")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.head_layout == HeadLayout::Split && self.d % self.heads != 0 {
            return Err(ModelError::Config(format!(
                "split heads need d ({}) divisible by heads ({})",
                self.d, self.heads
            )));
        }
        Ok(())
    }

    /// Output width of each query/key projection.
    pub fn head_dim(&self) -> usize {
        match self.head_layout {
            HeadLayout::Full => self.d,
            HeadLayout::Split => self.d / self.heads,
        }
    }

    /// Divisor applied to raw query·key products.
    pub fn score_scale(&self) -> Real {
        (self.head_dim() as Real).sqrt()
    }
}
