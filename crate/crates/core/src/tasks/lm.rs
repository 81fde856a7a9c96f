use rayon::prelude::*;

use super::{generate, latent_code, InferenceConfig, Metric, TaskError};
use crate::corpus::TokenId;
use crate::decode::bleu;
use crate::svae::{stream_rng, Model};

/// Sentence lengths are grouped as 1–5, 6–10, ...
pub const BIN_WIDTH: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct LengthBin {
    /// Inclusive word-length range.
    pub lo: usize,
    pub hi: usize,
    pub count: usize,
    pub mean_bleu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub mean_bleu: f64,
    /// Nonempty bins in increasing length order.
    pub per_length_bins: Vec<LengthBin>,
    pub n_sentences: usize,
    /// Per-sentence scores in input order.
    pub scores: Vec<f64>,
}

impl LmReport {
    pub fn from_scores(lengths: &[usize], scores: Vec<f64>) -> Result<Self, TaskError> {
        if scores.is_empty() {
            return Err(TaskError::EmptyTestSet);
        }
        let n = scores.len();
        let mut sums: Vec<(usize, f64)> = Vec::new();
        for (&len, &s) in lengths.iter().zip(&scores) {
            let b = len.saturating_sub(1) / BIN_WIDTH;
            if sums.len() <= b {
                sums.resize(b + 1, (0, 0.0));
            }
            sums[b].0 += 1;
            sums[b].1 += s;
        }
        let per_length_bins = sums
            .into_iter()
            .enumerate()
            .filter(|(_, (c, _))| *c > 0)
            .map(|(b, (count, sum))| LengthBin {
                lo: b * BIN_WIDTH + 1,
                hi: (b + 1) * BIN_WIDTH,
                count,
                mean_bleu: sum / count as f64,
            })
            .collect();
        Ok(LmReport {
            mean_bleu: scores.iter().sum::<f64>() / n as f64,
            per_length_bins,
            n_sentences: n,
            scores,
        })
    }

    /// BLEU values are reported on the 0–100 scale.
    pub fn records(&self) -> Vec<Metric> {
        let mut out = vec![
            ("bleu".to_string(), 100.0 * self.mean_bleu),
            ("n_sentences".to_string(), self.n_sentences as f64),
        ];
        for b in &self.per_length_bins {
            out.push((format!("bleu_len_{}_{}", b.lo, b.hi), 100.0 * b.mean_bleu));
            out.push((format!("count_len_{}_{}", b.lo, b.hi), b.count as f64));
        }
        out
    }
}

/// Encodes each sentence, decodes it by beam search from the averaged
/// latent code, and scores the output with smoothed BLEU against the input.
pub fn eval_language_modeling(
    model: &Model,
    sentences: &[Vec<TokenId>],
    config: &InferenceConfig,
) -> Result<LmReport, TaskError> {
    if sentences.is_empty() {
        return Err(TaskError::EmptyTestSet);
    }
    let scores: Vec<Result<f64, TaskError>> = sentences
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rng = stream_rng(config.seed, i as u64);
            let code = latent_code(model, s, None, config.latent_samples, &mut rng)?;
            let hyp = generate(model, code, &config.beam);
            Ok(bleu(&hyp.tokens, s, 4, true)?)
        })
        .collect();
    let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;
    let lengths: Vec<usize> = sentences.iter().map(Vec::len).collect();
    LmReport::from_scores(&lengths, scores)
}
