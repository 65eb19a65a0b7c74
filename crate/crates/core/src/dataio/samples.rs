use std::ops::Range;

use super::{DataError, FlowDataset};
use crate::numerics::{Real, Tensor};

/// One supervised example: the `k` slots ending at `time_index` for every
/// region, and both flows at `time_index + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `[regions × k]`, column `k-1` is slot `time_index`.
    pub history_in: Tensor,
    pub history_out: Tensor,
    pub time_index: usize,
    pub target_in: Vec<Real>,
    pub target_out: Vec<Real>,
}

impl Sample {
    pub fn target_slot(&self) -> usize {
        self.time_index + 1
    }

    pub fn k(&self) -> usize {
        self.history_in.last_dim()
    }

    pub fn regions(&self) -> usize {
        self.target_in.len()
    }

    /// Targets as a `[regions × 2]` matrix (inflow, outflow).
    pub fn target_matrix(&self) -> Tensor {
        let data = self
            .target_in
            .iter()
            .zip(&self.target_out)
            .flat_map(|(&i, &o)| [i, o])
            .collect();
        Tensor::matrix(self.regions(), 2, data).unwrap()
    }
}

/// History matrices `[regions × k]` over slots `t-k+1..=t`.
pub fn history_window(data: &FlowDataset, k: usize, t: usize) -> Result<(Tensor, Tensor), DataError> {
    if k == 0 || t + 1 < k {
        return Err(DataError::TooShort { slots: t + 1, k });
    }
    if t >= data.slots() {
        return Err(DataError::SlotOutOfRange {
            slot: t,
            slots: data.slots(),
        });
    }
    let n = data.regions();
    let first = t + 1 - k;
    let mut hin = Vec::with_capacity(n * k);
    let mut hout = Vec::with_capacity(n * k);
    for r in 0..n {
        for s in first..=t {
            hin.push(data.inflow_at(s, r));
            hout.push(data.outflow_at(s, r));
        }
    }
    Ok((
        Tensor::matrix(n, k, hin).unwrap(),
        Tensor::matrix(n, k, hout).unwrap(),
    ))
}

fn sample_for_target(data: &FlowDataset, k: usize, target: usize) -> Result<Sample, DataError> {
    let t = target - 1;
    let (history_in, history_out) = history_window(data, k, t)?;
    let n = data.regions();
    Ok(Sample {
        history_in,
        history_out,
        time_index: t,
        target_in: (0..n).map(|r| data.inflow_at(target, r)).collect(),
        target_out: (0..n).map(|r| data.outflow_at(target, r)).collect(),
    })
}

/// Every sample whose target slot lies in `[k, T-1]`, in chronological order.
pub fn make_samples(data: &FlowDataset, k: usize) -> Result<Vec<Sample>, DataError> {
    if k == 0 || data.slots() <= k {
        return Err(DataError::TooShort {
            slots: data.slots(),
            k,
        });
    }
    samples_for_targets(data, k, k..data.slots())
}

/// Samples for the given target slots. Targets earlier than `k` have no full
/// history and are skipped.
pub fn samples_for_targets(
    data: &FlowDataset,
    k: usize,
    targets: Range<usize>,
) -> Result<Vec<Sample>, DataError> {
    if targets.end > data.slots() {
        return Err(DataError::SlotOutOfRange {
            slot: targets.end - 1,
            slots: data.slots(),
        });
    }
    targets
        .filter(|&s| s >= k)
        .map(|s| sample_for_target(data, k, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::DatasetMeta;

    fn ramp(slots: usize, n: usize) -> FlowDataset {
        let inflow = (0..slots * n).map(|i| i as Real).collect();
        let outflow = (0..slots * n).map(|i| 2.0 * i as Real).collect();
        FlowDataset::new(
            DatasetMeta::new(n, 24, 0).unwrap(),
            Tensor::matrix(slots, n, inflow).unwrap(),
            Tensor::matrix(slots, n, outflow).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn counts_follow_target_enumeration() {
        assert_eq!(make_samples(&ramp(10, 2), 5).unwrap().len(), 5);
        assert_eq!(make_samples(&ramp(6, 2), 5).unwrap().len(), 1);
        assert!(matches!(
            make_samples(&ramp(5, 2), 5),
            Err(DataError::TooShort { .. })
        ));
    }

    #[test]
    fn first_sample_indices() {
        let d = ramp(10, 2);
        let s = &make_samples(&d, 3).unwrap()[0];
        assert_eq!(s.time_index, 2);
        assert_eq!(s.target_slot(), 3);
        // Region 1 sees slots 0,1,2 → flat indices 1,3,5.
        assert_eq!(s.history_in.row(1), &[1.0, 3.0, 5.0]);
        assert_eq!(s.history_out.row(1), &[2.0, 6.0, 10.0]);
        assert_eq!(s.target_in, vec![6.0, 7.0]);
        assert_eq!(s.target_matrix().data(), &[6.0, 12.0, 7.0, 14.0]);
    }

    #[test]
    fn targets_reconstruct_slots() {
        let d = ramp(12, 3);
        let k = 4;
        let samples = make_samples(&d, k).unwrap();
        let slots: Vec<usize> = samples.iter().map(Sample::target_slot).collect();
        assert_eq!(slots, (k..12).collect::<Vec<_>>());
        for s in &samples {
            for r in 0..3 {
                assert_eq!(s.target_in[r], d.inflow_at(s.target_slot(), r));
            }
        }
    }
}
