//! Run configuration as flat `key = value` text.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments
//! override earlier ones, so command-line overrides are applied by calling
//! [`RunConfig::set`] after loading a file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::DEFAULT_MIN_COUNT;
use crate::decode::BeamConfig;
use crate::embedding::SkipgramConfig;
use crate::svae::{LrSchedule, ModelConfig, TrainConfig, Variant};
use crate::tasks::{InferenceConfig, PiTrainConfig, Task};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub task: Task,
    pub d_word: usize,
    pub d_h: usize,
    pub d_z: usize,
    pub max_len: usize,
    pub min_count: usize,
    pub kl_anneal_steps: u64,
    pub word_dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_decay_epoch: usize,
    pub lr_after: f64,
    pub clip_norm: f64,
    /// Upper bound on training batches; 0 means no limit.
    pub max_batches: u64,
    pub beam: usize,
    pub length_normalize: bool,
    pub latent_samples: usize,
    pub sg_window: usize,
    pub sg_negatives: usize,
    pub sg_epochs: usize,
    pub pi_epochs: usize,
    pub pi_lr: f64,
    pub pi_batch_size: usize,
    pub repeats: usize,
    pub seed: u64,
    pub log_every: u64,
    pub data_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::Svae,
            task: Task::Lm,
            d_word: 100,
            d_h: 300,
            d_z: 300,
            max_len: 40,
            min_count: DEFAULT_MIN_COUNT,
            kl_anneal_steps: 10_000,
            word_dropout: 0.0,
            epochs: 30,
            batch_size: 512,
            lr: 1e-3,
            lr_decay_epoch: 10,
            lr_after: 1e-4,
            clip_norm: 5.0,
            max_batches: 0,
            beam: 7,
            length_normalize: false,
            latent_samples: 5,
            sg_window: 5,
            sg_negatives: 5,
            sg_epochs: 10,
            pi_epochs: 100,
            pi_lr: 1e-3,
            pi_batch_size: 512,
            repeats: 5,
            seed: 1,
            log_every: 100,
            data_dir: PathBuf::from("data"),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key.trim() {
            "variant" => self.variant = parse(key, v)?,
            "task" => self.task = parse(key, v)?,
            "d_word" => self.d_word = parse(key, v)?,
            "d_h" => self.d_h = parse(key, v)?,
            "d_z" => self.d_z = parse(key, v)?,
            "max_len" => self.max_len = parse(key, v)?,
            "min_count" => self.min_count = parse(key, v)?,
            "kl_anneal_steps" => self.kl_anneal_steps = parse(key, v)?,
            "word_dropout" => self.word_dropout = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.lr = parse(key, v)?,
            "lr_decay_epoch" => self.lr_decay_epoch = parse(key, v)?,
            "lr_after" => self.lr_after = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "max_batches" => self.max_batches = parse(key, v)?,
            "beam" => self.beam = parse(key, v)?,
            "length_normalize" => self.length_normalize = parse(key, v)?,
            "latent_samples" => self.latent_samples = parse(key, v)?,
            "sg_window" => self.sg_window = parse(key, v)?,
            "sg_negatives" => self.sg_negatives = parse(key, v)?,
            "sg_epochs" => self.sg_epochs = parse(key, v)?,
            "pi_epochs" => self.pi_epochs = parse(key, v)?,
            "pi_lr" => self.pi_lr = parse(key, v)?,
            "pi_batch_size" => self.pi_batch_size = parse(key, v)?,
            "repeats" => self.repeats = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "log_every" => self.log_every = parse(key, v)?,
            "data_dir" => self.data_dir = PathBuf::from(v),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Applies every assignment in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            writeln!(s, "{k} = {v}").expect("write to String");
        };
        kv("variant", &self.variant);
        kv("task", &self.task);
        kv("d_word", &self.d_word);
        kv("d_h", &self.d_h);
        kv("d_z", &self.d_z);
        kv("max_len", &self.max_len);
        kv("min_count", &self.min_count);
        kv("kl_anneal_steps", &self.kl_anneal_steps);
        kv("word_dropout", &self.word_dropout);
        kv("epochs", &self.epochs);
        kv("batch_size", &self.batch_size);
        kv("lr", &self.lr);
        kv("lr_decay_epoch", &self.lr_decay_epoch);
        kv("lr_after", &self.lr_after);
        kv("clip_norm", &self.clip_norm);
        kv("max_batches", &self.max_batches);
        kv("beam", &self.beam);
        kv("length_normalize", &self.length_normalize);
        kv("latent_samples", &self.latent_samples);
        kv("sg_window", &self.sg_window);
        kv("sg_negatives", &self.sg_negatives);
        kv("sg_epochs", &self.sg_epochs);
        kv("pi_epochs", &self.pi_epochs);
        kv("pi_lr", &self.pi_lr);
        kv("pi_batch_size", &self.pi_batch_size);
        kv("repeats", &self.repeats);
        kv("seed", &self.seed);
        kv("log_every", &self.log_every);
        kv("data_dir", &self.data_dir.display());
        s
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            d_word: self.d_word,
            d_h: self.d_h,
            d_z: self.d_z,
            max_len: self.max_len,
            kl_anneal_steps: self.kl_anneal_steps,
            vocab_size,
            word_dropout: self.word_dropout,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr: LrSchedule {
                base: self.lr,
                decay_epoch: self.lr_decay_epoch,
                after: self.lr_after,
            },
            clip_norm: self.clip_norm,
            seed: self.seed,
            log_every: self.log_every,
            teacher_forcing: true,
        }
    }

    pub fn inference_config(&self) -> InferenceConfig {
        InferenceConfig {
            beam: BeamConfig {
                width: self.beam,
                max_len: self.max_len,
                length_normalize: self.length_normalize,
            },
            latent_samples: self.latent_samples,
            seed: self.seed,
        }
    }

    pub fn skipgram_config(&self) -> SkipgramConfig {
        SkipgramConfig {
            dim: self.d_word,
            window: self.sg_window,
            negatives: self.sg_negatives,
            epochs: self.sg_epochs,
            seed: self.seed,
            ..SkipgramConfig::default()
        }
    }

    /// Classifier settings for repeat `k`.
    pub fn pi_config(&self, repeat: usize) -> PiTrainConfig {
        PiTrainConfig {
            epochs: self.pi_epochs,
            lr: self.pi_lr,
            batch_size: self.pi_batch_size,
            seed: self.seed.wrapping_add(repeat as u64),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Scenario;

    #[test]
    fn text_round_trip() {
        let c = RunConfig {
            variant: Variant::Vae,
            task: Task::Impute(Scenario::S2),
            lr: 0.0025,
            data_dir: PathBuf::from("/tmp/x y"),
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_text(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn later_values_override() {
        let mut c = RunConfig::from_text("# comment\nepochs = 3\n\nbatch_size=16\n").unwrap();
        assert_eq!((c.epochs, c.batch_size), (3, 16));
        c.set("epochs", "7").unwrap();
        assert_eq!(c.epochs, 7);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            RunConfig::from_text("epochs 3"),
            Err(ConfigError::Syntax { line: 1 })
        ));
        assert!(matches!(
            RunConfig::from_text("nope = 1"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::from_text("variant = lstm"),
            Err(ConfigError::InvalidValue { .. })
        ));
    }

    #[test]
    fn default_schedule() {
        let t = RunConfig::default().train_config();
        assert_eq!(t.batch_size, 512);
        assert_eq!(t.lr.rate(9), 1e-3);
        assert_eq!(t.lr.rate(10), 1e-4);
    }
}
