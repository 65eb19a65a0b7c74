use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DataError;

const MINUTES_PER_DAY: usize = 1440;

/// Grid and clock description of a flow dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub n_regions: usize,
    pub slots_per_day: usize,
    pub interval_minutes: usize,
    /// Time-of-week index of slot 0, in `[0, 7·slots_per_day)`.
    pub start_slot_of_week: usize,
    /// Identifier of the generator that produced the data, if synthetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
}

impl DatasetMeta {
    pub fn new(
        n_regions: usize,
        slots_per_day: usize,
        start_slot_of_week: usize,
    ) -> Result<Self, DataError> {
        let interval_minutes = if slots_per_day == 0 {
            0
        } else {
            MINUTES_PER_DAY / slots_per_day
        };
        let meta = Self {
            n_regions,
            slots_per_day,
            interval_minutes,
            start_slot_of_week,
            generator: None,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.n_regions == 0 {
            return Err(DataError::Meta("n_regions must be positive".into()));
        }
        if self.slots_per_day == 0 || self.interval_minutes == 0 {
            return Err(DataError::Meta(
                "slots_per_day and interval_minutes must be positive".into(),
            ));
        }
        if self.slots_per_day.checked_mul(self.interval_minutes) != Some(MINUTES_PER_DAY) {
            return Err(DataError::Meta(format!(
                "slots_per_day ({}) × interval_minutes ({}) must equal {MINUTES_PER_DAY}",
                self.slots_per_day, self.interval_minutes
            )));
        }
        if self.start_slot_of_week >= self.slots_per_week() {
            return Err(DataError::Meta(format!(
                "start_slot_of_week {} must be below {}",
                self.start_slot_of_week,
                self.slots_per_week()
            )));
        }
        Ok(())
    }

    pub fn slots_per_week(&self) -> usize {
        7 * self.slots_per_day
    }

    /// Time-of-week index of absolute slot `t`.
    pub fn slot_of_week(&self, t: usize) -> usize {
        (self.start_slot_of_week + t % self.slots_per_week()) % self.slots_per_week()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let meta: Self = toml::from_str(text).map_err(|e| DataError::Meta(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("metadata always serializes")
    }

    /// Hash of the grid and clock fields; ignores the generator tag.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in [
            self.n_regions,
            self.slots_per_day,
            self.interval_minutes,
            self.start_slot_of_week,
        ] {
            h.update((v as u64).to_le_bytes());
        }
        h.finalize().into()
    }
}
