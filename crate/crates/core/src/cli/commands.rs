use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use super::config::{Partition, RunConfig};
use super::CliError;
use crate::dataio::{
    generate_synthetic, history_window, load_flow_csv, samples_for_targets, split, write_flow_csv,
    DataError, FlowDataset, NormalizationStats, Sample, SplitPlan,
};
use crate::evaluation::{
    evaluate, raw_prediction, EvalError, HistoricalAverage, LastValue, MetricsReport, Predictor,
};
use crate::model::{Model, ModelError};
use crate::training::{fit, load_checkpoint, save_checkpoint, Checkpoint, TrainError, TrainReport};

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        if e.is_divergence() {
            return CliError::Numeric(e.to_string());
        }
        match e {
            TrainError::Config(_) | TrainError::Model(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_data(cfg: &RunConfig) -> Result<FlowDataset, CliError> {
    let load = load_flow_csv(&cfg.resolve(&cfg.paths.data), &cfg.resolve(&cfg.paths.meta))?;
    Ok(load.dataset)
}

fn samples(data: &FlowDataset, k: usize, targets: Range<usize>) -> Result<Vec<Sample>, CliError> {
    Ok(samples_for_targets(data, k, targets)?)
}

/// Writes the dataset described by `[synthetic]`; returns the CSV and metadata paths.
pub fn cmd_generate(cfg: &RunConfig) -> Result<(PathBuf, PathBuf), CliError> {
    let spec = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Usage("generate needs a [synthetic] section in the config".into()))?;
    let data = generate_synthetic(spec)?;
    let provenance = cfg.provenance();
    let csv = cfg.resolve(&cfg.paths.data);
    let meta = cfg.resolve(&cfg.paths.meta);
    write_file(&csv, write_flow_csv(&data, Some(&provenance)))?;
    write_file(&meta, format!("# {provenance}\n{}", data.meta.to_toml_string()))?;
    println!(
        "generated {} regions × {} slots (seed {}) into {}",
        data.regions(),
        data.slots(),
        spec.seed,
        csv.display()
    );
    Ok((csv, meta))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub checkpoint: PathBuf,
    pub report_path: PathBuf,
}

/// Split, scale and fit. The best checkpoint is written even when training
/// diverges, in which case the command fails with a numeric error afterwards.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let data = load_data(cfg)?;
    let hp = cfg.model.hyper_params(&data.meta);
    hp.validate()?;
    let plan = split(&data, hp.k, &cfg.split)?;
    let stats = if cfg.data.normalize {
        NormalizationStats::fit(&data, plan.train_slots.end)?
    } else {
        NormalizationStats::IDENTITY
    };
    let scaled = stats.apply_dataset(&data);
    let train = samples(&scaled, hp.k, plan.train_targets.clone())?;
    let val = samples(&scaled, hp.k, plan.val_targets.clone())?;
    let mut meta = data.meta.clone();
    meta.generator = None;
    let model = Model::init(hp, meta, cfg.seed)?;
    log::info!(
        "training on {} samples, validating on {}, {} parameters",
        train.len(),
        val.len(),
        model.params.count()
    );
    let outcome = fit(model, &train, &val, &cfg.train_config())?;
    let checkpoint = Checkpoint {
        hp: outcome.model.hp.clone(),
        meta: outcome.model.meta.clone(),
        stats,
        params: outcome.model.params.clone(),
        optimizer: Some(outcome.optimizer.clone()),
        best_val_loss: outcome.report.best_val_loss,
        config_hash: cfg.hash_bytes(),
        seed: cfg.seed,
    };
    let ckpt_path = cfg.resolve(&cfg.paths.checkpoint);
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?;
    }
    save_checkpoint(&checkpoint, &ckpt_path)?;
    let report_path = cfg.resolve(&cfg.paths.output_dir).join("train_report.csv");
    write_file(
        &report_path,
        format!("# {}\n{}", cfg.provenance(), outcome.report.to_csv()),
    )?;
    let report = outcome.report;
    println!(
        "{} epochs, best epoch {} (validation loss {}), mean {:.2}s per epoch; checkpoint {}",
        report.epochs.len(),
        report.best_epoch,
        report.best_val_loss,
        report.mean_epoch_seconds(),
        ckpt_path.display()
    );
    if let crate::training::StopReason::Diverged(why) = &report.stop {
        return Err(CliError::Numeric(format!(
            "training diverged ({why}); kept epoch {} in {}",
            report.best_epoch,
            ckpt_path.display()
        )));
    }
    Ok(TrainOutcome {
        report,
        checkpoint: ckpt_path,
        report_path,
    })
}

fn load_matching_checkpoint(cfg: &RunConfig, data: &FlowDataset) -> Result<Checkpoint, CliError> {
    let ckpt = load_checkpoint(&cfg.resolve(&cfg.paths.checkpoint))?;
    if ckpt.meta.fingerprint() != data.meta.fingerprint() {
        return Err(CliError::Data(format!(
            "checkpoint was trained on {} regions with {} slots per day starting at week slot {}, \
             data has {} regions, {} slots per day, start {}",
            ckpt.meta.n_regions,
            ckpt.meta.slots_per_day,
            ckpt.meta.start_slot_of_week,
            data.meta.n_regions,
            data.meta.slots_per_day,
            data.meta.start_slot_of_week
        )));
    }
    Ok(ckpt)
}

fn partition_targets(plan: &SplitPlan, p: Partition) -> Range<usize> {
    match p {
        Partition::Train => plan.train_targets.clone(),
        Partition::Validation => plan.val_targets.clone(),
        Partition::Test => plan.test_targets.clone(),
    }
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    /// Model first, then historical average, then last value.
    pub reports: Vec<MetricsReport>,
    pub paths: Vec<PathBuf>,
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<EvalOutcome, CliError> {
    let data = load_data(cfg)?;
    let ckpt = load_matching_checkpoint(cfg, &data)?;
    let model = ckpt.model()?;
    let k = model.hp.k;
    let plan = split(&data, k, &cfg.split)?;
    let scaled = ckpt.stats.apply_dataset(&data);
    let targets = samples(&scaled, k, partition_targets(&plan, cfg.eval.partition))?;
    let average = HistoricalAverage::fit(&scaled, plan.train_slots.end)?;
    let predictors: [&dyn Predictor; 3] = [&model, &average, &LastValue];
    let out_dir = cfg.resolve(&cfg.paths.output_dir);
    let mut outcome = EvalOutcome {
        reports: Vec::new(),
        paths: Vec::new(),
    };
    let mut table = MetricsReport::table_header();
    for p in predictors {
        let report = evaluate(p, &targets, &ckpt.stats, cfg.eval.mape_threshold)?;
        let path = out_dir.join(format!("metrics_{}.csv", p.name()));
        write_file(&path, format!("# {}\n{}", cfg.provenance(), report.to_csv()))?;
        let _ = write!(table, "\n{}", report.table_row());
        outcome.reports.push(report);
        outcome.paths.push(path);
    }
    println!(
        "{:?} partition, {} slots, MAPE over truth ≥ {}\n{table}",
        cfg.eval.partition,
        targets.len(),
        cfg.eval.mape_threshold
    );
    Ok(outcome)
}

pub const FORECAST_HEADER: &str = "region_index,inflow_pred,outflow_pred";

/// Forecast for the slot after `predict.time_index`, in raw units, one row per region.
pub fn cmd_predict(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let t = cfg
        .predict
        .time_index
        .ok_or_else(|| CliError::Usage("predict needs predict.time_index (try --set predict.time_index=<slot>)".into()))?;
    let data = load_data(cfg)?;
    let ckpt = load_matching_checkpoint(cfg, &data)?;
    let model = ckpt.model()?;
    let scaled = ckpt.stats.apply_dataset(&data);
    let (history_in, history_out) = history_window(&scaled, model.hp.k, t)?;
    let n = data.regions();
    let sample = Sample {
        history_in,
        history_out,
        time_index: t,
        target_in: vec![0.0; n],
        target_out: vec![0.0; n],
    };
    let forecast = raw_prediction(&model, &sample, &ckpt.stats)?;
    let mut out = format!("# {}\n# forecast for slot {}\n{FORECAST_HEADER}\n", cfg.provenance(), t + 1);
    for r in 0..n {
        let _ = writeln!(out, "{r},{},{}", forecast.at2(r, 0), forecast.at2(r, 1));
    }
    let path = cfg
        .resolve(&cfg.paths.output_dir)
        .join(format!("forecast_t{t}.csv"));
    write_file(&path, out)?;
    println!("forecast for slot {} written to {}", t + 1, path.display());
    Ok(path)
}
