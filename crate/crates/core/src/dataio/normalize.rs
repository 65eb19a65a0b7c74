use serde::{Deserialize, Serialize};

use super::{DataError, FlowDataset};
use crate::numerics::Real;

/// Min-max scaling shared by both flow channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub min: Real,
    pub max: Real,
}

impl NormalizationStats {
    /// Scaling that leaves values unchanged.
    pub const IDENTITY: Self = Self { min: 0.0, max: 1.0 };

    /// Fits min and max jointly over inflow and outflow of slots `[0, end)`.
    pub fn fit(train: &FlowDataset, end: usize) -> Result<Self, DataError> {
        if end == 0 || end > train.slots() {
            return Err(DataError::SlotOutOfRange {
                slot: end,
                slots: train.slots(),
            });
        }
        let cells = end * train.regions();
        let values = train.inflow().data()[..cells]
            .iter()
            .chain(&train.outflow().data()[..cells]);
        let (min, max) = values.fold((Real::INFINITY, Real::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        Ok(Self { min, max })
    }

    /// Denominator of the scaling; 1 when the fitted range is degenerate.
    pub fn scale(&self) -> Real {
        if self.max > self.min {
            self.max - self.min
        } else {
            1.0
        }
    }

    pub fn apply(&self, x: Real) -> Real {
        (x - self.min) / self.scale()
    }

    pub fn invert(&self, x: Real) -> Real {
        x * self.scale() + self.min
    }

    pub fn apply_dataset(&self, data: &FlowDataset) -> FlowDataset {
        data.map_values(|x| self.apply(x))
    }
}
