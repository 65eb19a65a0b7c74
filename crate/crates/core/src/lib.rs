//! Spatial-temporal self-attention forecasting of region inflow and outflow.
//!
//! Regions are embedded from their recent flow history, their identity and the
//! time of week; a self-attention encoder relates every pair of regions at the
//! current slot; a small head predicts next-slot inflow and outflow.

pub mod numerics;
pub mod dataio;
pub mod model;
pub mod training;
pub mod evaluation;
pub mod cli;
