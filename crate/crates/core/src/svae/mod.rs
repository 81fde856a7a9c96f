//! The three sequence autoencoders sharing one bidirectional GRU backbone.
//!
//! * `Ae`: the decoder is conditioned on the concatenated final encoder
//!   states directly.
//! * `Vae`: a linear head maps the final states to a diagonal Gaussian and a
//!   reparameterized sample conditions the decoder.
//! * `Svae`: like `Vae`, but the head also sees the document information
//!   vector, an attention-weighted average of the input word embeddings.

mod attention;
mod latent;
mod model;
mod train;

pub use attention::{attention_weights, doc_info_vector, AttentionWeights, DENOMINATOR_GUARD};
pub use latent::{
    draw_noise, encoder_summary, kld, latent_params, mean_latent, sample_latent, LatentDistribution, LOGVAR_CLAMP,
};
pub use model::{forward_loss, loss_and_grad, Encoding, Example, LatentDecoder, LossParts, Model, ModelParams};
pub use train::{BatchStats, LrSchedule, TrainConfig, Trainer};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::embedding::EmbeddingError;
use crate::neural::NeuralError;

/// Independent generator for item `index` of a run seeded with `seed`.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Error)]
pub enum SvaeError {
    #[error("the AE variant has no latent head")]
    NoLatentHead,
    #[error("SVAE needs the document information vector")]
    MissingDocVector,
    #[error("sequence of {len} words exceeds max_len {max}")]
    TooLong { len: usize, max: usize },
    #[error("empty input sentence")]
    EmptyInput,
    #[error("target must end with EOS")]
    MissingEos,
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),
    #[error("no training examples")]
    EmptyTrainingSet,
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Ae,
    Vae,
    Svae,
}

impl Variant {
    pub fn is_variational(self) -> bool {
        self != Variant::Ae
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ae => "ae",
            Variant::Vae => "vae",
            Variant::Svae => "svae",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(Variant::Ae),
            "vae" => Ok(Variant::Vae),
            "svae" => Ok(Variant::Svae),
            other => Err(format!("unknown variant `{other}` (expected ae, vae or svae)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub d_word: usize,
    /// Hidden width of each encoder direction and of the decoder.
    pub d_h: usize,
    pub d_z: usize,
    pub max_len: usize,
    /// Batches over which the KL weight ramps linearly from 0 to 1.
    pub kl_anneal_steps: u64,
    pub vocab_size: usize,
    /// Probability of replacing a teacher-forced decoder input by UNK.
    pub word_dropout: f64,
}

impl ModelConfig {
    pub fn new(variant: Variant, vocab_size: usize) -> Self {
        ModelConfig {
            variant,
            d_word: 100,
            d_h: 300,
            d_z: 300,
            max_len: 40,
            kl_anneal_steps: 10_000,
            vocab_size,
            word_dropout: 0.0,
        }
    }

    /// Width of `h_L`, the input of the latent head.
    pub fn summary_width(&self) -> usize {
        match self.variant {
            Variant::Svae => 2 * self.d_h + self.d_word,
            Variant::Ae | Variant::Vae => 2 * self.d_h,
        }
    }

    /// Width of the vector that conditions the decoder.
    pub fn code_dim(&self) -> usize {
        match self.variant {
            Variant::Ae => 2 * self.d_h,
            Variant::Vae | Variant::Svae => self.d_z,
        }
    }

    pub fn validate(&self) -> Result<(), SvaeError> {
        let dims = [
            ("d_word", self.d_word),
            ("d_h", self.d_h),
            ("d_z", self.d_z),
            ("max_len", self.max_len),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(SvaeError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.vocab_size < 2 {
            return Err(SvaeError::InvalidConfig("vocabulary must hold UNK and EOS".into()));
        }
        if !(0.0..1.0).contains(&self.word_dropout) {
            return Err(SvaeError::InvalidConfig("word_dropout must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// KL weight after `step` completed batches.
    pub fn kl_weight(&self, step: u64) -> f64 {
        if self.kl_anneal_steps == 0 {
            1.0
        } else {
            (step as f64 / self.kl_anneal_steps as f64).min(1.0)
        }
    }
}
