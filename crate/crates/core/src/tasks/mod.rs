//! Evaluation harnesses: language-model reconstruction, missing-word
//! imputation and paraphrase identification.
//!
//! Every report can be flattened into `metric<TAB>value` records.

mod impute;
mod lm;
mod paraphrase;

pub use impute::{eval_imputation, ImputationMetric, ImputationReport};
pub use lm::{eval_language_modeling, LengthBin, LmReport, BIN_WIDTH};
pub use paraphrase::{
    encode_pairs, eval_paraphrase, train_paraphrase, Confusion, LatentPair, PiClassifier, PiReport, PiTrainConfig,
};

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use ndarray::Array1;
use rand::Rng;
use thiserror::Error;

use crate::corpus::{CorpusError, Scenario, TokenId, EOS_ID};
use crate::decode::{beam_search, BeamConfig, DecodeError, Hypothesis};
use crate::embedding::EmbeddingError;
use crate::neural::NeuralError;
use crate::svae::{Model, SvaeError};

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("model was trained for {trained} but evaluation requested {requested}")]
    ScenarioMismatch { trained: String, requested: Scenario },
    #[error("empty test set")]
    EmptyTestSet,
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("latent vector has width {got}, classifier expects {expected}")]
    WidthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] SvaeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

/// What a model was trained to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Reconstruct the input sentence.
    Lm,
    /// Produce the erased word(s) of one imputation scenario.
    Impute(Scenario),
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Lm => f.write_str("lm"),
            Task::Impute(s) => write!(f, "impute-{s}"),
        }
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        if lower == "lm" {
            return Ok(Task::Lm);
        }
        lower
            .strip_prefix("impute-")
            .and_then(Scenario::parse)
            .map(Task::Impute)
            .ok_or_else(|| format!("unknown task `{s}` (expected lm, impute-s1, impute-s2 or impute-s3)"))
    }
}

/// Inference settings shared by the generation tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceConfig {
    pub beam: BeamConfig,
    /// Latent draws averaged per sentence (ignored by the AE).
    pub latent_samples: usize,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            beam: BeamConfig::default(),
            latent_samples: 5,
            seed: 1,
        }
    }
}

/// Decoder conditioning vector for one input sentence.
pub fn latent_code<R: Rng + ?Sized>(
    model: &Model,
    input: &[TokenId],
    mask: Option<&[bool]>,
    samples: usize,
    rng: &mut R,
) -> Result<Array1<f64>, TaskError> {
    Ok(model.encode(input, mask)?.code(samples, rng))
}

/// Beam-search generation from a code vector, starting from EOS.
pub fn generate(model: &Model, code: Array1<f64>, beam: &BeamConfig) -> Hypothesis {
    let dec = model.decoder(code);
    let init = dec.initial_state();
    beam_search(&dec, init, EOS_ID, EOS_ID, beam)
}

/// A named scalar result.
pub type Metric = (String, f64);

/// Writes `metric<TAB>value` lines, each name prefixed by `prefix.` when
/// the prefix is nonempty.
pub fn write_records<W: Write>(out: &mut W, prefix: &str, records: &[Metric]) -> io::Result<()> {
    for (name, value) in records {
        if prefix.is_empty() {
            writeln!(out, "{name}\t{value}")?;
        } else {
            writeln!(out, "{prefix}.{name}\t{value}")?;
        }
    }
    Ok(())
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
