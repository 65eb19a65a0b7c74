use super::EvalError;
use crate::dataio::{DatasetMeta, FlowDataset, Sample};
use crate::model::Model;
use crate::numerics::{Real, Tensor};

/// Anything that maps a sample's history to an `[n × 2]` next-slot forecast
/// in the units of that history.
pub trait Predictor {
    fn name(&self) -> &str;
    fn predict(&self, sample: &Sample) -> Result<Tensor, EvalError>;
}

impl Predictor for Model {
    fn name(&self) -> &str {
        "st-sam"
    }

    fn predict(&self, sample: &Sample) -> Result<Tensor, EvalError> {
        Ok(Model::predict(self, sample)?)
    }
}

/// Repeats the last observed slot.
#[derive(Debug, Clone, Copy, Default)]
pub struct LastValue;

impl Predictor for LastValue {
    fn name(&self) -> &str {
        "last-value"
    }

    fn predict(&self, sample: &Sample) -> Result<Tensor, EvalError> {
        let k = sample.k();
        let n = sample.regions();
        let mut out = Vec::with_capacity(2 * n);
        for r in 0..n {
            out.push(sample.history_in.at2(r, k - 1));
            out.push(sample.history_out.at2(r, k - 1));
        }
        Ok(Tensor::matrix(n, 2, out)?)
    }
}

/// Mean training flow at the target's time of week, per region and channel.
#[derive(Debug, Clone)]
pub struct HistoricalAverage {
    meta: DatasetMeta,
    /// `[slots_per_week × n × 2]`, `None` where the training slots never hit that index.
    table: Vec<Option<Vec<Real>>>,
    /// `[n × 2]` mean over all training slots.
    fallback: Vec<Real>,
}

impl HistoricalAverage {
    /// Fits on slots `[0, end)` of `data`.
    pub fn fit(data: &FlowDataset, end: usize) -> Result<Self, EvalError> {
        if end == 0 || end > data.slots() {
            return Err(EvalError::Config(format!(
                "training range of {end} slots outside dataset of {}",
                data.slots()
            )));
        }
        let n = data.regions();
        let week = data.meta.slots_per_week();
        let mut sums = vec![vec![0.0; 2 * n]; week];
        let mut counts = vec![0usize; week];
        let mut total = vec![0.0; 2 * n];
        for t in 0..end {
            let w = data.meta.slot_of_week(t);
            counts[w] += 1;
            for r in 0..n {
                let (fi, fo) = (data.inflow_at(t, r), data.outflow_at(t, r));
                sums[w][2 * r] += fi;
                sums[w][2 * r + 1] += fo;
                total[2 * r] += fi;
                total[2 * r + 1] += fo;
            }
        }
        let table = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &c)| (c > 0).then(|| s.into_iter().map(|v| v / c as Real).collect()))
            .collect();
        let fallback = total.into_iter().map(|v| v / end as Real).collect();
        Ok(Self {
            meta: data.meta.clone(),
            table,
            fallback,
        })
    }

    /// Forecast for absolute slot `t`.
    pub fn at_slot(&self, t: usize) -> Tensor {
        let w = self.meta.slot_of_week(t);
        let values = self.table[w].as_ref().unwrap_or(&self.fallback);
        Tensor::matrix(self.meta.n_regions, 2, values.clone()).unwrap()
    }
}

impl Predictor for HistoricalAverage {
    fn name(&self) -> &str {
        "historical-average"
    }

    fn predict(&self, sample: &Sample) -> Result<Tensor, EvalError> {
        if sample.regions() != self.meta.n_regions {
            return Err(EvalError::Config(format!(
                "sample has {} regions, averages cover {}",
                sample.regions(),
                self.meta.n_regions
            )));
        }
        Ok(self.at_slot(sample.target_slot()))
    }
}
