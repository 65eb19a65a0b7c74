//! Raw-unit error metrics, naive baselines and metric reports.

mod metrics;
mod predictors;
mod report;

pub use metrics::{mape, rmse, Mape, DEFAULT_MAPE_THRESHOLD};
pub use predictors::{HistoricalAverage, LastValue, Predictor};
pub use report::{evaluate, raw_prediction, ChannelMetrics, MetricsReport, METRICS_HEADER};

use crate::dataio::DataError;
use crate::model::ModelError;
use crate::numerics::{NumericsError, Real};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no targets to evaluate")]
    Empty,
    #[error("{pred} predictions for {truth} targets")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("MAPE undefined: all {excluded} targets fall below threshold {threshold}")]
    NoCountedTargets { excluded: usize, threshold: Real },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Data(#[from] DataError),
}
