use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::dataio::{DatasetMeta, SplitConfig, SyntheticSpec};
use crate::evaluation::DEFAULT_MAPE_THRESHOLD;
use crate::model::{AttentionNormalization, HeadLayout, HyperParams};
use crate::numerics::Real;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: PathBuf,
    pub meta: PathBuf,
    pub checkpoint: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data/flows.csv".into(),
            meta: "data/meta.toml".into(),
            checkpoint: "out/model.ckpt".into(),
            output_dir: "out".into(),
        }
    }
}

/// Network shape. Region count and, unless given, the time vocabulary come
/// from the dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub d: usize,
    pub heads: usize,
    pub k: usize,
    pub ff_dim: usize,
    pub n_blocks: usize,
    pub dropout: Real,
    /// 0 means one entry per slot of the week.
    pub time_vocab: usize,
    pub attention_normalization: AttentionNormalization,
    pub head_layout: HeadLayout,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let hp = HyperParams::default();
        Self {
            d: hp.d,
            heads: hp.heads,
            k: hp.k,
            ff_dim: hp.ff_dim,
            n_blocks: hp.n_blocks,
            dropout: hp.dropout,
            time_vocab: 0,
            attention_normalization: hp.attention_normalization,
            head_layout: hp.head_layout,
        }
    }
}

impl ModelConfig {
    pub fn hyper_params(&self, meta: &DatasetMeta) -> HyperParams {
        HyperParams {
            d: self.d,
            heads: self.heads,
            k: self.k,
            ff_dim: self.ff_dim,
            n_blocks: self.n_blocks,
            dropout: self.dropout,
            time_vocab: if self.time_vocab == 0 {
                meta.slots_per_week()
            } else {
                self.time_vocab
            },
            n_regions: meta.n_regions,
            attention_normalization: self.attention_normalization,
            head_layout: self.head_layout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Min-max scale flows using training slots before fitting.
    pub normalize: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { normalize: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    Train,
    Validation,
    #[default]
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mape_threshold: Real,
    pub partition: Partition,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mape_threshold: DEFAULT_MAPE_THRESHOLD,
            partition: Partition::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    /// Last observed slot; the forecast is for the slot after it.
    pub time_index: Option<usize>,
}

/// Everything one run needs. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: SplitConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub predict: PredictConfig,
    pub synthetic: Option<SyntheticSpec>,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            predict: PredictConfig::default(),
            synthetic: None,
            base_dir: PathBuf::new(),
        }
    }
}

impl RunConfig {
    /// Parses `text`, then applies `key=value` overrides addressed by dotted path.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_with_overrides(&text, overrides)?;
        cfg.base_dir = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config always serializes")
    }

    /// SHA-256 of the canonical TOML form, as lowercase hex.
    pub fn hash(&self) -> String {
        hex::encode(self.hash_bytes())
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml_string().as_bytes()).into()
    }

    /// Comment line placed at the top of every file a command writes.
    pub fn provenance(&self) -> String {
        format!("st-sam config_hash={} seed={}", self.hash(), self.seed)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

/// Sets `a.b.c=value` in `table`, creating intermediate tables. The value is
/// read as a TOML literal; anything that does not parse is taken as a string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{assignment}`")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad override key `{key}`")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (leaf, parents) = parts.split_last().unwrap();
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(leaf.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml_with_overrides("", &[]).unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let text = "seed = 3\n[model]\nd = 16\n";
        let sets = [
            "model.heads=2".to_string(),
            "train.learning_rate = 0.01".to_string(),
            "paths.data=other.csv".to_string(),
            "eval.partition=train".to_string(),
            "synthetic.n_regions=4".to_string(),
        ];
        let err = RunConfig::from_toml_with_overrides(text, &sets).unwrap_err();
        // A partial synthetic section is incomplete.
        assert!(matches!(err, CliError::Config(_)), "{err}");
        let cfg = RunConfig::from_toml_with_overrides(text, &sets[..4]).unwrap();
        assert_eq!((cfg.seed, cfg.model.d, cfg.model.heads), (3, 16, 2));
        assert_eq!(cfg.train.learning_rate, 0.01);
        assert_eq!(cfg.paths.data, PathBuf::from("other.csv"));
        assert_eq!(cfg.eval.partition, Partition::Train);
    }

    #[test]
    fn typos_and_bad_syntax_are_rejected() {
        assert!(matches!(
            RunConfig::from_toml_with_overrides("", &["model.dd=3".into()]),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml_with_overrides("", &["model.d".into()]),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            RunConfig::from_toml_with_overrides("", &["seed.x=1".into()]),
            Err(CliError::Config(_))
        ));
        assert!(RunConfig::from_toml_with_overrides("[model\n", &[]).is_err());
        assert!(RunConfig::from_toml_with_overrides("", &["train.patience=0".into()]).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let back = RunConfig::from_toml_with_overrides(&a.to_toml_string(), &[]).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn hyper_params_take_grid_from_metadata() {
        let meta = DatasetMeta::new(20, 48, 0).unwrap();
        let hp = ModelConfig::default().hyper_params(&meta);
        assert_eq!((hp.n_regions, hp.time_vocab), (20, 336));
    }
}
