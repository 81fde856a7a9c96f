//! Skip-gram word vectors trained with negative sampling, plus similarity
//! helpers.

use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::{TokenId, Vocab};
use crate::neural::sigmoid;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("cannot train word vectors on an empty corpus")]
    EmptyCorpus,
    #[error("cosine similarity of a zero vector")]
    ZeroVector,
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("embedding file does not match vocabulary: {0}")]
    VocabMismatch(String),
    #[error("malformed embedding file at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Starting learning rate; decays linearly towards zero.
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        SkipgramConfig {
            dim: 100,
            window: 5,
            negatives: 5,
            epochs: 10,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

/// One row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    vectors: Array2<f64>,
}

impl EmbeddingMatrix {
    pub fn new(vectors: Array2<f64>) -> Self {
        EmbeddingMatrix { vectors }
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, id: TokenId) -> ArrayView1<'_, f64> {
        self.vectors.row(id)
    }

    /// Stacks the rows of `tokens` into a `T × d` matrix.
    pub fn lookup(&self, tokens: &[TokenId]) -> Result<Array2<f64>, EmbeddingError> {
        let mut out = Array2::zeros((tokens.len(), self.dim()));
        for (i, &t) in tokens.iter().enumerate() {
            if t >= self.vocab_size() {
                return Err(EmbeddingError::UnknownToken(t));
            }
            out.row_mut(i).assign(&self.vectors.row(t));
        }
        Ok(out)
    }

    /// The `k` ids closest to `id` by cosine similarity, best first.
    pub fn most_similar(&self, id: TokenId, k: usize) -> Vec<(TokenId, f64)> {
        let query = self.vectors.row(id);
        let mut scored: Vec<(TokenId, f64)> = (0..self.vocab_size())
            .filter(|&j| j != id)
            .filter_map(|j| cosine_similarity(query, self.vectors.row(j)).ok().map(|c| (j, c)))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(k);
        scored
    }

    /// Text format: a `V d` header, then `word v1 … vd` per id.
    pub fn write<W: Write>(&self, vocab: &Vocab, mut out: W) -> Result<(), EmbeddingError> {
        if vocab.len() != self.vocab_size() {
            return Err(EmbeddingError::VocabMismatch(format!(
                "{} rows for {} words",
                self.vocab_size(),
                vocab.len()
            )));
        }
        writeln!(out, "{} {}", self.vocab_size(), self.dim())?;
        for (id, row) in self.vectors.rows().into_iter().enumerate() {
            write!(out, "{}", vocab.word(id).expect("id in range"))?;
            for v in row {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(vocab: &Vocab, input: R) -> Result<Self, EmbeddingError> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(EmbeddingError::Parse {
            line: 1,
            reason: "missing header".into(),
        })??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| EmbeddingError::Parse {
                line: 1,
                reason: "header must be `V d`".into(),
            })?;
        let [v, d] = dims[..] else {
            return Err(EmbeddingError::Parse {
                line: 1,
                reason: "header must be `V d`".into(),
            });
        };
        if v != vocab.len() {
            return Err(EmbeddingError::VocabMismatch(format!(
                "header declares {v} words, vocabulary has {}",
                vocab.len()
            )));
        }
        let mut vectors = Array2::zeros((v, d));
        let mut seen = 0;
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let lineno = i + 2;
            if seen >= v {
                return Err(EmbeddingError::Parse {
                    line: lineno,
                    reason: "more rows than declared".into(),
                });
            }
            let mut fields = line.split(' ');
            let word = fields.next().unwrap_or_default();
            if Some(word) != vocab.word(seen) {
                return Err(EmbeddingError::VocabMismatch(format!(
                    "row {seen} is `{word}`, vocabulary expects `{}`",
                    vocab.word(seen).unwrap_or_default()
                )));
            }
            let values: Vec<f64> =
                fields
                    .map(str::parse)
                    .collect::<Result<_, _>>()
                    .map_err(|_| EmbeddingError::Parse {
                        line: lineno,
                        reason: "bad number".into(),
                    })?;
            if values.len() != d {
                return Err(EmbeddingError::Parse {
                    line: lineno,
                    reason: format!("expected {d} values, found {}", values.len()),
                });
            }
            vectors.row_mut(seen).assign(&Array1::from(values));
            seen += 1;
        }
        if seen != v {
            return Err(EmbeddingError::Parse {
                line: seen + 2,
                reason: format!("expected {v} rows, found {seen}"),
            });
        }
        Ok(EmbeddingMatrix { vectors })
    }
}

pub fn cosine_similarity(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64, EmbeddingError> {
    let nu = u.dot(&u).sqrt();
    let nv = v.dot(&v).sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(EmbeddingError::ZeroVector);
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Input (center) and output (context) tables of a skip-gram model.
#[derive(Debug, Clone)]
pub struct SkipGram {
    pub input: Array2<f64>,
    pub output: Array2<f64>,
    noise: WeightedIndex<f64>,
    config: SkipgramConfig,
    rng: ChaCha8Rng,
    processed: u64,
    total: u64,
}

impl SkipGram {
    pub fn new(corpus: &[Vec<TokenId>], vocab_size: usize, config: SkipgramConfig) -> Result<Self, EmbeddingError> {
        let n_tokens: usize = corpus.iter().map(Vec::len).sum();
        if n_tokens == 0 {
            return Err(EmbeddingError::EmptyCorpus);
        }
        let mut counts = vec![0u64; vocab_size];
        for &t in corpus.iter().flatten() {
            *counts.get_mut(t).ok_or(EmbeddingError::UnknownToken(t))? += 1;
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let noise = WeightedIndex::new(&weights).expect("at least one positive count");
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let half = 0.5 / config.dim as f64;
        let input = Array2::from_shape_simple_fn((vocab_size, config.dim), || rng.random_range(-half..half));
        let output = Array2::zeros((vocab_size, config.dim));
        let total = (n_tokens * config.epochs.max(1)) as u64;
        Ok(SkipGram {
            input,
            output,
            noise,
            config,
            rng,
            processed: 0,
            total,
        })
    }

    fn current_lr(&self) -> f64 {
        let progress = self.processed as f64 / (self.total + 1) as f64;
        self.config.learning_rate * (1.0 - progress).max(1e-4)
    }

    /// One SGD pass over the corpus with dynamic windows.
    pub fn train_epoch(&mut self, corpus: &[Vec<TokenId>]) {
        let dim = self.config.dim;
        let mut grad_in = Array1::<f64>::zeros(dim);
        for sentence in corpus {
            for (i, &center) in sentence.iter().enumerate() {
                let lr = self.current_lr();
                self.processed += 1;
                let span = self.rng.random_range(1..=self.config.window);
                let lo = i.saturating_sub(span);
                let hi = (i + span).min(sentence.len() - 1);
                for (j, &context) in sentence.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    grad_in.fill(0.0);
                    for k in 0..=self.config.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = self.noise.sample(&mut self.rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let score = self.input.row(center).dot(&self.output.row(target));
                        let g = (label - sigmoid(score)) * lr;
                        grad_in.scaled_add(g, &self.output.row(target));
                        let center_row = self.input.row(center).to_owned();
                        self.output.row_mut(target).scaled_add(g, &center_row);
                    }
                    self.input.row_mut(center).scaled_add(1.0, &grad_in);
                }
            }
        }
    }

    /// Negative-sampling loss of `(center, context, negatives)` triples.
    pub fn loss(&self, batch: &[(TokenId, TokenId, Vec<TokenId>)]) -> f64 {
        let log_sig = |x: f64| -> f64 { -(1.0 + (-x).exp()).ln() };
        batch
            .iter()
            .map(|(c, o, negs)| {
                let u = self.input.row(*c);
                let pos = -log_sig(u.dot(&self.output.row(*o)));
                let neg: f64 = negs.iter().map(|&n| -log_sig(-u.dot(&self.output.row(n)))).sum();
                pos + neg
            })
            .sum::<f64>()
            / batch.len().max(1) as f64
    }

    pub fn sample_noise(&mut self) -> TokenId {
        self.noise.sample(&mut self.rng)
    }

    pub fn into_embeddings(self) -> EmbeddingMatrix {
        EmbeddingMatrix { vectors: self.input }
    }
}

/// Trains skip-gram vectors and returns the center-word table.
pub fn train_skipgram(
    corpus: &[Vec<TokenId>],
    vocab: &Vocab,
    config: &SkipgramConfig,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut model = SkipGram::new(corpus, vocab.len(), config.clone())?;
    for epoch in 0..config.epochs {
        model.train_epoch(corpus);
        log::debug!("skip-gram epoch {} done", epoch + 1);
    }
    Ok(model.into_embeddings())
}
