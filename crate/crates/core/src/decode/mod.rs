//! Inference-time generation and the reconstruction metric.

mod beam;
mod bleu;

pub use beam::{beam_search, greedy, BeamConfig, Hypothesis, StepDecoder};
pub use bleu::{bleu, brevity_penalty, modified_precision, SMOOTHING_EPSILON};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("BLEU needs a nonempty reference")]
    EmptyReference,
}
