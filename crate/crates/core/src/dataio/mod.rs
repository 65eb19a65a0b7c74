//! Flow data ingestion, scaling, windowing, chronological splits and a seeded
//! synthetic generator.

mod flows;
mod meta;
mod normalize;
mod samples;
mod split;
mod synthetic;

use std::path::PathBuf;

pub use flows::{load_flow_csv, parse_flow_csv, write_flow_csv, CsvLoad, FlowDataset, FLOW_CSV_HEADER};
pub use meta::DatasetMeta;
pub use normalize::NormalizationStats;
pub use samples::{history_window, make_samples, samples_for_targets, Sample};
pub use split::{split, SplitConfig, SplitPlan};
pub use synthetic::{generate_synthetic, LagEdge, SyntheticSpec, GENERATOR_ID};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Csv { line: usize, reason: String },
    #[error("flow file has no data rows")]
    Empty,
    #[error("dataset of {slots} slots × {regions} regions exceeds the size limit")]
    TooLarge { slots: usize, regions: usize },
    #[error("invalid metadata: {0}")]
    Meta(String),
    #[error("need more than {k} slots to build windows of length {k}, have {slots}")]
    TooShort { slots: usize, k: usize },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid synthetic spec: {0}")]
    Synthetic(String),
    #[error("slot {slot} outside dataset of {slots} slots")]
    SlotOutOfRange { slot: usize, slots: usize },
}
