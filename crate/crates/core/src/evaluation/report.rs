use std::fmt::Write as _;

use super::metrics::{mape, rmse};
use super::{EvalError, Predictor};
use crate::dataio::{NormalizationStats, Sample};
use crate::numerics::{Real, Tensor};

pub const METRICS_HEADER: &str = "channel,rmse,mape,counted,excluded";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelMetrics {
    pub rmse: Real,
    /// Percent.
    pub mape: Real,
    pub counted: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub predictor: String,
    pub inflow: ChannelMetrics,
    pub outflow: ChannelMetrics,
    pub mape_threshold: Real,
}

impl MetricsReport {
    /// Machine-readable rows under [`METRICS_HEADER`].
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(METRICS_HEADER);
        out.push('\n');
        for (name, c) in [("inflow", &self.inflow), ("outflow", &self.outflow)] {
            let _ = writeln!(out, "{name},{},{},{},{}", c.rmse, c.mape, c.counted, c.excluded);
        }
        out
    }

    /// One aligned table row; see [`MetricsReport::table_header`].
    pub fn table_row(&self) -> String {
        format!(
            "{:<20} {:>12.4} {:>11.2}% {:>12.4} {:>11.2}%",
            self.predictor, self.inflow.rmse, self.inflow.mape, self.outflow.rmse, self.outflow.mape
        )
    }

    pub fn table_header() -> String {
        format!(
            "{:<20} {:>12} {:>12} {:>12} {:>12}",
            "predictor", "inflow RMSE", "inflow MAPE", "outflow RMSE", "outflow MAPE"
        )
    }

    pub fn numbers(&self) -> [Real; 4] {
        [self.inflow.rmse, self.inflow.mape, self.outflow.rmse, self.outflow.mape]
    }
}

/// The predictor's `[n × 2]` forecast mapped back to raw units and clamped at zero.
pub fn raw_prediction(
    predictor: &dyn Predictor,
    sample: &Sample,
    stats: &NormalizationStats,
) -> Result<Tensor, EvalError> {
    let p = predictor.predict(sample)?;
    if p.shape() != [sample.regions(), 2] {
        return Err(EvalError::LengthMismatch {
            pred: p.len(),
            truth: 2 * sample.regions(),
        });
    }
    Ok(p.map(|v| stats.invert(v).max(0.0)))
}

/// Metrics of `predictor` over `samples`, whose values are scaled by `stats`.
pub fn evaluate(
    predictor: &dyn Predictor,
    samples: &[Sample],
    stats: &NormalizationStats,
    mape_threshold: Real,
) -> Result<MetricsReport, EvalError> {
    if samples.is_empty() {
        return Err(EvalError::Empty);
    }
    let cap = samples.len() * samples[0].regions();
    let (mut pi, mut po, mut ti, mut to) = (
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
        Vec::with_capacity(cap),
    );
    for s in samples {
        let p = raw_prediction(predictor, s, stats)?;
        for r in 0..s.regions() {
            pi.push(p.at2(r, 0));
            po.push(p.at2(r, 1));
        }
        ti.extend(s.target_in.iter().map(|&v| stats.invert(v)));
        to.extend(s.target_out.iter().map(|&v| stats.invert(v)));
    }
    let channel = |p: &[Real], t: &[Real]| -> Result<ChannelMetrics, EvalError> {
        let m = mape(p, t, mape_threshold)?;
        Ok(ChannelMetrics {
            rmse: rmse(p, t)?,
            mape: m.value,
            counted: m.counted,
            excluded: m.excluded,
        })
    };
    Ok(MetricsReport {
        predictor: predictor.name().to_string(),
        inflow: channel(&pi, &ti)?,
        outflow: channel(&po, &to)?,
        mape_threshold,
    })
}
