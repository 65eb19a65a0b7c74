//! The forecasting network.
//!
//! A region embedding fuses each region's flow history with a learned region
//! vector and a time-of-week vector. Encoder blocks run multi-head self-attention
//! over all regions of the same slot, followed by a feed-forward sublayer, each
//! wrapped in residual add and layer norm. A two-layer head maps every region's
//! final embedding to next-slot (inflow, outflow).

mod forward;
mod hyper;
mod layers;
mod params;
#[cfg(test)]
mod tests;

pub use forward::{Mode, Model, RegionBatch};
pub use hyper::{AttentionNormalization, HeadLayout, HyperParams, LAYER_NORM_EPS};
pub use layers::{
    attention_aggregate, attention_scores, embed_flows, embed_spatial, embed_spatial_all,
    embed_temporal, encoder_block, forecast, fuse_region, multi_head_combine, time_of_week_index,
};
pub use params::{
    init_params, param_shapes, BlockParams, EmbeddingParams, ForecastParams, HeadParams, ModelParams,
};

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("region {index} out of range for {regions} regions")]
    RegionOutOfRange { index: usize, regions: usize },
}
