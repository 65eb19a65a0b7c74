use rand_chacha::ChaCha8Rng;

use super::layers::{
    embed_flows, embed_spatial_all, embed_temporal, encoder_block, forecast, fuse_region,
};
use super::params::{init_params, ModelParams};
use super::{HyperParams, ModelError};
use crate::dataio::{DatasetMeta, Sample};
use crate::numerics::{NumericsError, Real, Tape, Tensor, Var};

/// Evaluation is deterministic; training draws dropout masks from the given stream.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_training(&self) -> bool {
        matches!(self, Mode::Train(_))
    }

    pub(crate) fn dropout(&mut self, tape: &mut Tape, a: Var, rate: Real) -> Result<Var, NumericsError> {
        match self {
            Mode::Eval => Ok(a),
            Mode::Train(rng) => tape.dropout(a, rate, true, &mut **rng),
        }
    }
}

/// Histories of several samples stacked as `[B × n × k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionBatch {
    pub history_in: Tensor,
    pub history_out: Tensor,
    /// Last history slot of each element.
    pub time_indices: Vec<usize>,
}

impl RegionBatch {
    pub fn from_samples(samples: &[&Sample]) -> Result<Self, ModelError> {
        let Some(first) = samples.first() else {
            return Err(ModelError::Shape("empty batch".into()));
        };
        let shape = first.history_in.shape().to_vec();
        let (n, k) = (shape[0], shape[1]);
        let mut hin = Vec::with_capacity(samples.len() * n * k);
        let mut hout = Vec::with_capacity(samples.len() * n * k);
        for s in samples {
            if s.history_in.shape() != shape.as_slice() || s.history_out.shape() != shape.as_slice() {
                return Err(ModelError::Shape(format!(
                    "batch mixes history shapes {shape:?} and {:?}",
                    s.history_in.shape()
                )));
            }
            hin.extend_from_slice(s.history_in.data());
            hout.extend_from_slice(s.history_out.data());
        }
        let dims = vec![samples.len(), n, k];
        Ok(Self {
            history_in: Tensor::new(dims.clone(), hin)?,
            history_out: Tensor::new(dims, hout)?,
            time_indices: samples.iter().map(|s| s.time_index).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.time_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_indices.is_empty()
    }

    /// Histories of element `b` as `[n × k]` matrices.
    pub fn element(&self, b: usize) -> (Tensor, Tensor) {
        let (n, k) = (self.history_in.shape()[1], self.history_in.shape()[2]);
        let cut = |t: &Tensor| {
            Tensor::matrix(n, k, t.data()[b * n * k..(b + 1) * n * k].to_vec()).unwrap()
        };
        (cut(&self.history_in), cut(&self.history_out))
    }
}

/// Hyperparameters, the calendar they were fitted on, and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub hp: HyperParams,
    pub meta: DatasetMeta,
    pub params: ModelParams,
}

impl Model {
    pub fn new(hp: HyperParams, meta: DatasetMeta, params: ModelParams) -> Result<Self, ModelError> {
        hp.validate()?;
        if hp.n_regions != meta.n_regions {
            return Err(ModelError::Config(format!(
                "model has {} regions, data has {}",
                hp.n_regions, meta.n_regions
            )));
        }
        params.check_shapes(&hp)?;
        if !params.all_finite() {
            return Err(ModelError::Config("non-finite parameter".into()));
        }
        Ok(Self { hp, meta, params })
    }

    pub fn init(hp: HyperParams, meta: DatasetMeta, seed: u64) -> Result<Self, ModelError> {
        let params = init_params(&hp, seed)?;
        Self::new(hp, meta, params)
    }

    /// Records every weight on `tape` as a trainable leaf.
    pub fn register(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.params.map(|_, t| tape.param(t.clone()))
    }

    /// Records every weight on `tape` without gradient tracking.
    pub fn register_frozen(&self, tape: &mut Tape) -> ModelParams<Var> {
        self.params.map(|_, t| tape.constant(t.clone()))
    }

    /// Builds the graph for one slot and returns the `[n × 2]` prediction.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelParams<Var>,
        history_in: &Tensor,
        history_out: &Tensor,
        time_index: usize,
        mode: &mut Mode<'_>,
    ) -> Result<Var, ModelError> {
        let n = self.hp.n_regions;
        if history_in.shape() != [n, self.hp.k] {
            return Err(ModelError::Shape(format!(
                "history {:?} does not match [{n} × {}]",
                history_in.shape(),
                self.hp.k
            )));
        }
        let hin = tape.constant(history_in.clone());
        let hout = tape.constant(history_out.clone());
        let e = &vars.embedding;
        let flows = embed_flows(tape, hin, hout, e)?;
        let spatial = embed_spatial_all(tape, e)?;
        let temporal = embed_temporal(tape, time_index, &self.meta, e)?;
        let mut x = fuse_region(tape, flows, spatial, temporal, e)?;
        for block in &vars.blocks {
            x = encoder_block(tape, x, block, &self.hp, mode)?;
        }
        forecast(tape, x, &vars.forecast)
    }

    /// `[n × 2]` prediction for one sample, in the units of its histories.
    pub fn predict(&self, sample: &Sample) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let vars = self.register_frozen(&mut tape);
        let out = self.forward_on_tape(
            &mut tape,
            &vars,
            &sample.history_in,
            &sample.history_out,
            sample.time_index,
            &mut Mode::Eval,
        )?;
        Ok(tape.value(out).clone())
    }

    /// `[B × n × 2]` predictions, one independent graph per element.
    pub fn forward(&self, batch: &RegionBatch, mode: &mut Mode<'_>) -> Result<Tensor, ModelError> {
        let n = self.hp.n_regions;
        let mut out = Vec::with_capacity(batch.len() * n * 2);
        for b in 0..batch.len() {
            let (hin, hout) = batch.element(b);
            let mut tape = Tape::new();
            let vars = self.register_frozen(&mut tape);
            let y = self.forward_on_tape(&mut tape, &vars, &hin, &hout, batch.time_indices[b], mode)?;
            out.extend_from_slice(tape.value(y).data());
        }
        Ok(Tensor::new(vec![batch.len(), n, 2], out)?)
    }
}
