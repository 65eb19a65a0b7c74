//! Binary checkpoint format, all integers and reals little-endian:
//!
//! ```text
//! magic "STSAMCKP" | version u32 | real width u8 (4 or 8)
//! hyperparameters: d, heads, k, ff_dim, n_blocks (u64) | dropout f64
//!                  time_vocab, n_regions (u64) | normalization u8 | head layout u8
//! calendar: n_regions, slots_per_day, interval_minutes, start_slot_of_week (u64)
//!           | fingerprint [32]
//! normalization min, max (f64) | best validation loss f64
//! config hash [32] | seed u64
//! array count u32, then per array: name (u16 length + UTF-8) | rank u8
//!                                  | dims (u64 each) | values (real width each)
//! optimizer flag u8; when 1: step u64, then every first moment, then every
//! second moment, each as u64 length + values
//! ```
//!
//! Arrays appear in parameter traversal order and must carry the names and
//! shapes the hyperparameters imply. Trailing bytes are an error.

use std::path::Path;

use super::adam::OptimizerState;
use super::TrainError;
use crate::dataio::{DatasetMeta, NormalizationStats};
use crate::model::{
    param_shapes, AttentionNormalization, HeadLayout, HyperParams, Model, ModelParams,
};
use crate::numerics::{Real, Tensor};

pub const MAGIC: &[u8; 8] = b"STSAMCKP";
pub const FORMAT_VERSION: u32 = 1;
const REAL_WIDTH: u8 = std::mem::size_of::<Real>() as u8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hp: HyperParams,
    /// Calendar of the training data; its fingerprint is stored and checked.
    pub meta: DatasetMeta,
    pub stats: NormalizationStats,
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
    pub best_val_loss: Real,
    /// Digest of the run configuration that produced the checkpoint.
    pub config_hash: [u8; 32],
    pub seed: u64,
}

impl Checkpoint {
    pub fn model(&self) -> Result<Model, TrainError> {
        Ok(Model::new(self.hp.clone(), self.meta.clone(), self.params.clone())?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Vec::with_capacity(64 + self.params.count() * REAL_WIDTH as usize);
        w.extend_from_slice(MAGIC);
        w.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        w.push(REAL_WIDTH);
        let hp = &self.hp;
        for v in [hp.d, hp.heads, hp.k, hp.ff_dim, hp.n_blocks] {
            put_u64(&mut w, v as u64);
        }
        put_f64(&mut w, hp.dropout as f64);
        put_u64(&mut w, hp.time_vocab as u64);
        put_u64(&mut w, hp.n_regions as u64);
        w.push(match hp.attention_normalization {
            AttentionNormalization::Softmax => 0,
            AttentionNormalization::RawNumerator => 1,
        });
        w.push(match hp.head_layout {
            HeadLayout::Full => 0,
            HeadLayout::Split => 1,
        });
        let m = &self.meta;
        for v in [m.n_regions, m.slots_per_day, m.interval_minutes, m.start_slot_of_week] {
            put_u64(&mut w, v as u64);
        }
        w.extend_from_slice(&m.fingerprint());
        put_f64(&mut w, self.stats.min as f64);
        put_f64(&mut w, self.stats.max as f64);
        put_f64(&mut w, self.best_val_loss as f64);
        w.extend_from_slice(&self.config_hash);
        put_u64(&mut w, self.seed);

        let names = self.params.names();
        let entries = self.params.entries();
        w.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for (name, t) in names.iter().zip(entries) {
            w.extend_from_slice(&(name.len() as u16).to_le_bytes());
            w.extend_from_slice(name.as_bytes());
            w.push(t.shape().len() as u8);
            for &d in t.shape() {
                put_u64(&mut w, d as u64);
            }
            put_reals(&mut w, t.data());
        }
        match &self.optimizer {
            None => w.push(0),
            Some(s) => {
                w.push(1);
                put_u64(&mut w, s.step);
                for arr in s.m.iter().chain(&s.v) {
                    put_u64(&mut w, arr.len() as u64);
                    put_reals(&mut w, arr);
                }
            }
        }
        w
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrainError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!(
                "format version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let width = r.u8()?;
        if width != REAL_WIDTH {
            return Err(corrupt(format!(
                "stored with {width}-byte reals, this build uses {REAL_WIDTH}"
            )));
        }
        let d = r.usize()?;
        let heads = r.usize()?;
        let k = r.usize()?;
        let ff_dim = r.usize()?;
        let n_blocks = r.usize()?;
        let dropout = r.f64()? as Real;
        let time_vocab = r.usize()?;
        let n_regions = r.usize()?;
        let attention_normalization = match r.u8()? {
            0 => AttentionNormalization::Softmax,
            1 => AttentionNormalization::RawNumerator,
            other => return Err(corrupt(format!("unknown attention normalization {other}"))),
        };
        let head_layout = match r.u8()? {
            0 => HeadLayout::Full,
            1 => HeadLayout::Split,
            other => return Err(corrupt(format!("unknown head layout {other}"))),
        };
        let hp = HyperParams {
            d,
            heads,
            k,
            ff_dim,
            n_blocks,
            dropout,
            time_vocab,
            n_regions,
            attention_normalization,
            head_layout,
        };
        hp.validate().map_err(|e| corrupt(e.to_string()))?;
        // Each of these sizes is the length of some stored array.
        let max_len = r.remaining() / REAL_WIDTH as usize;
        if [d, k, ff_dim, time_vocab, n_regions].iter().any(|&v| v > max_len) {
            return Err(corrupt("hyperparameters exceed the stored data"));
        }

        let (mn, spd, interval, start) = (r.usize()?, r.usize()?, r.usize()?, r.usize()?);
        let fingerprint = r.take(32)?;
        let meta = DatasetMeta {
            n_regions: mn,
            slots_per_day: spd,
            interval_minutes: interval,
            start_slot_of_week: start,
            generator: None,
        };
        meta.validate().map_err(|e| corrupt(e.to_string()))?;
        if meta.fingerprint() != fingerprint {
            return Err(corrupt("calendar fingerprint does not match its fields"));
        }
        let stats = NormalizationStats {
            min: r.f64()? as Real,
            max: r.f64()? as Real,
        };
        let best_val_loss = r.f64()? as Real;
        let config_hash: [u8; 32] = r.take(32)?.try_into().unwrap();
        let seed = r.u64()?;

        let count = r.u32()? as usize;
        // Every array costs at least a name, a rank and one dimension.
        let per_block = 2usize
            .checked_mul(heads)
            .and_then(|h| h.checked_add(9))
            .and_then(|b| b.checked_mul(n_blocks))
            .and_then(|b| b.checked_add(16));
        if per_block != Some(count) {
            return Err(corrupt(format!(
                "{count} arrays stored, hyperparameters imply {}",
                per_block.map_or("too many".to_string(), |c| c.to_string())
            )));
        }
        if count > r.remaining() / 11 {
            return Err(corrupt("truncated array table"));
        }
        let shapes = param_shapes(&hp);
        let expected_names = shapes.names();
        let expected_shapes = shapes.entries();
        let mut arrays = Vec::with_capacity(count);
        for (want_name, want_shape) in expected_names.iter().zip(expected_shapes) {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| corrupt("array name is not UTF-8"))?;
            if name != want_name {
                return Err(corrupt(format!("expected array {want_name}, found {name}")));
            }
            let rank = r.u8()? as usize;
            let mut dims = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                dims.push(r.usize()?);
            }
            if &dims != want_shape {
                return Err(corrupt(format!(
                    "{name}: stored shape {dims:?}, expected {want_shape:?}"
                )));
            }
            let len = want_shape
                .iter()
                .try_fold(1usize, |a, &b| a.checked_mul(b))
                .ok_or_else(|| corrupt("array length overflows"))?;
            let data = r.reals(len)?;
            arrays.push(Tensor::new(dims, data).map_err(|e| corrupt(e.to_string()))?);
        }
        let params = shapes.rebuild(&arrays);

        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let step = r.u64()?;
                let mut moments = Vec::with_capacity(2 * count);
                for t in arrays.iter().chain(&arrays) {
                    let len = r.usize()?;
                    if len != t.len() {
                        return Err(corrupt("optimizer moment length differs from its array"));
                    }
                    moments.push(r.reals(len)?);
                }
                let v = moments.split_off(count);
                Some(OptimizerState { step, m: moments, v })
            }
            other => return Err(corrupt(format!("bad optimizer flag {other}"))),
        };
        if r.remaining() != 0 {
            return Err(corrupt(format!("{} trailing bytes", r.remaining())));
        }
        if !params.all_finite() {
            return Err(corrupt("non-finite parameter"));
        }
        Ok(Self {
            hp,
            meta,
            stats,
            params,
            optimizer,
            best_val_loss,
            config_hash,
            seed,
        })
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    std::fs::write(path, c.encode()).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = std::fs::read(path).map_err(|source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Checkpoint::decode(&bytes)
}

fn corrupt(reason: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(reason.into())
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_reals(w: &mut Vec<u8>, values: &[Real]) {
    for v in values {
        w.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if n > self.remaining() {
            return Err(corrupt(format!("truncated at byte {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, TrainError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize, TrainError> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("count exceeds address space"))
    }

    fn f64(&mut self) -> Result<f64, TrainError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<Real>, TrainError> {
        let width = REAL_WIDTH as usize;
        let bytes = n
            .checked_mul(width)
            .ok_or_else(|| corrupt("array length overflows"))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(width)
            .map(|c| Real::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;

    fn tiny() -> Checkpoint {
        let hp = HyperParams {
            d: 4,
            heads: 2,
            k: 2,
            ff_dim: 3,
            n_blocks: 2,
            time_vocab: 28,
            n_regions: 3,
            ..HyperParams::default()
        };
        let params = init_params(&hp, 5).unwrap();
        let mut opt = OptimizerState::new(&params);
        opt.step = 7;
        opt.m[0][1] = 0.25;
        opt.v[3][0] = 1e-9;
        Checkpoint {
            hp,
            meta: DatasetMeta::new(3, 4, 1).unwrap(),
            stats: NormalizationStats { min: 0.5, max: 99.0 },
            params,
            optimizer: Some(opt),
            best_val_loss: 0.125,
            config_hash: [7; 32],
            seed: 42,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = tiny();
        let back = Checkpoint::decode(&c.encode()).unwrap();
        assert!(back.params.bitwise_eq(&c.params));
        assert_eq!(back, c);
        let mut plain = c.clone();
        plain.optimizer = None;
        assert_eq!(Checkpoint::decode(&plain.encode()).unwrap(), plain);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let bytes = tiny().encode();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).unwrap_err().to_string().contains("magic"));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(Checkpoint::decode(&bad).unwrap_err().to_string().contains("version"));
        for cut in [0, 5, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(Checkpoint::decode(&bytes[..cut]).is_err(), "cut at {cut}");
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::decode(&long).unwrap_err().to_string().contains("trailing"));
    }

    #[test]
    fn absurd_sizes_fail_before_allocating() {
        let mut bytes = tiny().encode();
        // n_blocks lives after magic, version, width and four u64 fields.
        let at = 8 + 4 + 1 + 4 * 8;
        bytes[at..at + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(Checkpoint::decode(&bytes).is_err());
        let mut bytes = tiny().encode();
        bytes[13..21].copy_from_slice(&(1u64 << 40).to_le_bytes());
        assert!(Checkpoint::decode(&bytes).is_err());
    }

    #[test]
    fn default_taxi_config_is_recorded() {
        let hp = HyperParams {
            n_regions: 2,
            ..HyperParams::nyc_taxi()
        };
        let c = Checkpoint {
            params: init_params(&hp, 1).unwrap(),
            hp,
            meta: DatasetMeta::new(2, 48, 0).unwrap(),
            stats: NormalizationStats::IDENTITY,
            optimizer: None,
            best_val_loss: Real::INFINITY,
            config_hash: [0; 32],
            seed: 0,
        };
        let back = Checkpoint::decode(&c.encode()).unwrap();
        assert_eq!((back.hp.d, back.hp.heads, back.hp.k), (64, 4, 5));
    }
}
