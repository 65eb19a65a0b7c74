use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{DataError, FlowDataset};
use crate::numerics::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Leading days used for training and validation; the rest is test.
    pub train_days: usize,
    /// Trailing fraction of the training days held out for validation.
    pub val_fraction: Real,
    /// Drop samples whose history reaches back into an earlier partition.
    pub disallow_overlap: bool,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_days: 40,
            val_fraction: 0.2,
            disallow_overlap: false,
        }
    }
}

/// Chronological partition of a dataset. Slot ranges tile `[0, T)`; target
/// ranges say which samples (by target slot) belong to each partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_slots: Range<usize>,
    pub val_slots: Range<usize>,
    pub test_slots: Range<usize>,
    pub train_targets: Range<usize>,
    pub val_targets: Range<usize>,
    pub test_targets: Range<usize>,
}

pub fn split(data: &FlowDataset, k: usize, cfg: &SplitConfig) -> Result<SplitPlan, DataError> {
    let total = data.slots();
    if !(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0) {
        return Err(DataError::Split(format!(
            "val_fraction must lie in (0, 1), got {}",
            cfg.val_fraction
        )));
    }
    let train_val = cfg
        .train_days
        .checked_mul(data.meta.slots_per_day)
        .filter(|&s| s < total)
        .ok_or_else(|| {
            DataError::Split(format!(
                "{} training days need fewer than {total} slots",
                cfg.train_days
            ))
        })?;
    let val_len = (cfg.val_fraction * train_val as Real).round() as usize;
    let val_start = train_val - val_len;

    let plan_slots = [(0..val_start, "train"), (val_start..train_val, "validation"), (train_val..total, "test")];
    for (range, name) in &plan_slots {
        if range.len() < k + 1 {
            return Err(DataError::Split(format!(
                "{name} partition has {} slots, need at least {}",
                range.len(),
                k + 1
            )));
        }
    }
    let head = |start: usize| if cfg.disallow_overlap { start + k } else { start };
    Ok(SplitPlan {
        train_targets: k..val_start,
        val_targets: head(val_start)..train_val,
        test_targets: head(train_val)..total,
        train_slots: 0..val_start,
        val_slots: val_start..train_val,
        test_slots: train_val..total,
    })
}
