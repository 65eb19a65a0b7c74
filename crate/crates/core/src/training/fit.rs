use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, OptimizerState};
use super::loss::loss_joint_rmse;
use super::TrainError;
use crate::dataio::Sample;
use crate::model::{Mode, Model};
use crate::numerics::{Real, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: Real,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation loss before stopping.
    pub patience: usize,
    /// Set by the caller rather than read from config files.
    #[serde(skip)]
    pub seed: u64,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, max_epochs and patience must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("adam eps must be positive".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Owns a model and its optimizer while it is being trained.
pub struct Trainer {
    pub model: Model,
    pub optimizer: OptimizerState,
    adam: AdamConfig,
    dropout_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(model: Model, cfg: &TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let optimizer = OptimizerState::new(&model.params);
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        dropout_rng.set_stream(1);
        Ok(Self {
            model,
            optimizer,
            adam: cfg.adam(),
            dropout_rng,
        })
    }

    /// Forward, backward and one Adam update on `batch`. Returns the batch
    /// loss measured before the update.
    pub fn train_step(&mut self, batch: &[&Sample]) -> Result<Real, TrainError> {
        if batch.is_empty() {
            return Err(TrainError::EmptyPartition("batch"));
        }
        let weight = 1.0 / batch.len() as Real;
        let mut grads: Vec<Vec<Real>> = self.optimizer.m.iter().map(|m| vec![0.0; m.len()]).collect();
        let mut total = 0.0;
        for sample in batch {
            let mut tape = Tape::new();
            let vars = self.model.register(&mut tape);
            let pred = self.model.forward_on_tape(
                &mut tape,
                &vars,
                &sample.history_in,
                &sample.history_out,
                sample.time_index,
                &mut Mode::Train(&mut self.dropout_rng),
            )?;
            let target = tape.constant(sample.target_matrix());
            let loss = loss_joint_rmse(&mut tape, pred, target)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss);
            }
            total += value;
            tape.backward_scaled(loss, weight)?;
            for (acc, v) in grads.iter_mut().zip(vars.entries()) {
                if let Some(g) = tape.grad(*v) {
                    for (a, b) in acc.iter_mut().zip(g) {
                        *a += b;
                    }
                }
            }
        }
        adam_step(&mut self.model.params, &grads, &mut self.optimizer, &self.adam)?;
        Ok(total * weight)
    }
}

/// Mean joint RMSE of `model` over `samples` in evaluation mode.
pub fn validation_loss(model: &Model, samples: &[Sample]) -> Result<Real, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyPartition("validation"));
    }
    let mut total = 0.0;
    for s in samples {
        let mut tape = Tape::new();
        let vars = model.register_frozen(&mut tape);
        let pred = model.forward_on_tape(
            &mut tape,
            &vars,
            &s.history_in,
            &s.history_out,
            s.time_index,
            &mut Mode::Eval,
        )?;
        let target = tape.constant(s.target_matrix());
        let loss = loss_joint_rmse(&mut tape, pred, target)?;
        total += tape.value(loss).data()[0];
    }
    Ok(total / samples.len() as Real)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// Counted from 1.
    pub epoch: usize,
    pub train_loss: Real,
    pub val_loss: Real,
    /// Wall-clock seconds spent on the epoch, validation included.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StopReason {
    MaxEpochs,
    EarlyStopped,
    Diverged(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// 0 when no epoch completed.
    pub best_epoch: usize,
    pub best_val_loss: Real,
    pub stop: StopReason,
}

pub const REPORT_HEADER: &str = "epoch,train_loss,val_loss,seconds";

impl TrainReport {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged(_))
    }

    /// CSV rows under [`REPORT_HEADER`], then a `#` summary line.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(REPORT_HEADER);
        out.push('\n');
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{:.3}",
                e.epoch, e.train_loss, e.val_loss, e.seconds
            );
        }
        let stop = match &self.stop {
            StopReason::MaxEpochs => "max_epochs".to_string(),
            StopReason::EarlyStopped => "early_stopped".to_string(),
            StopReason::Diverged(why) => format!("diverged ({why})"),
        };
        let _ = writeln!(
            out,
            "# best_epoch={} best_val_loss={} stop={stop}",
            self.best_epoch, self.best_val_loss
        );
        out
    }

    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|e| e.seconds).sum::<f64>() / self.epochs.len() as f64
    }
}

/// Best model seen during [`fit`] with the optimizer state from the same epoch.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: Model,
    pub optimizer: OptimizerState,
    pub report: TrainReport,
}

/// Mini-batch training with a seeded shuffle each epoch and early stopping on
/// validation loss. A non-finite loss or gradient ends training with the
/// best parameters so far and [`StopReason::Diverged`].
pub fn fit(
    model: Model,
    train: &[Sample],
    val: &[Sample],
    cfg: &TrainConfig,
) -> Result<FitOutcome, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyPartition("training"));
    }
    if val.is_empty() {
        return Err(TrainError::EmptyPartition("validation"));
    }
    let mut trainer = Trainer::new(model, cfg)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = (trainer.model.clone(), trainer.optimizer.clone());
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: Real::INFINITY,
        stop: StopReason::MaxEpochs,
    };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut failure = None;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &train[i]).collect();
            match trainer.train_step(&batch) {
                Ok(loss) => loss_sum += loss * batch.len() as Real,
                Err(e) if e.is_divergence() => {
                    failure = Some(e.to_string());
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        let val_loss = match failure {
            None => validation_loss(&trainer.model, val)?,
            Some(_) => Real::NAN,
        };
        let failure = failure.or_else(|| {
            (!val_loss.is_finite()).then(|| "validation loss is not finite".to_string())
        });
        if let Some(why) = failure {
            log::error!("epoch {epoch}: {why}; keeping epoch {}", report.best_epoch);
            report.stop = StopReason::Diverged(why);
            break;
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as Real,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {:.6} val {:.6} ({:.2}s)",
            record.train_loss,
            record.val_loss,
            record.seconds
        );
        report.epochs.push(record);
        if val_loss < report.best_val_loss {
            report.best_val_loss = val_loss;
            report.best_epoch = epoch;
            best = (trainer.model.clone(), trainer.optimizer.clone());
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                report.stop = StopReason::EarlyStopped;
                break;
            }
        }
    }
    Ok(FitOutcome {
        model: best.0,
        optimizer: best.1,
        report,
    })
}
