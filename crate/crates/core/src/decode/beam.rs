use std::cmp::Ordering;

use crate::corpus::TokenId;

/// One decoding step: given the state and the previously emitted token,
/// returns log-probabilities over the vocabulary and the next state.
pub trait StepDecoder {
    type State: Clone;

    fn step(&self, state: &Self::State, token: TokenId) -> (Vec<f64>, Self::State);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    /// Maximum number of emitted tokens, EOS included.
    pub max_len: usize,
    /// Rank finished hypotheses by mean instead of total log-probability.
    pub length_normalize: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            width: 7,
            max_len: 40,
            length_normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens without the terminating EOS.
    pub tokens: Vec<TokenId>,
    /// Total log-probability, EOS step included when finished.
    pub log_prob: f64,
    /// False when the hypothesis was cut off at `max_len`.
    pub finished: bool,
}

impl Hypothesis {
    fn emitted(&self) -> usize {
        self.tokens.len() + usize::from(self.finished)
    }

    fn rank_score(&self, length_normalize: bool) -> f64 {
        if length_normalize {
            self.log_prob / self.emitted().max(1) as f64
        } else {
            self.log_prob
        }
    }
}

/// Best first: higher score, then lexicographically smaller tokens, then
/// shorter.
fn rank(a: &Hypothesis, b: &Hypothesis, length_normalize: bool) -> Ordering {
    b.rank_score(length_normalize)
        .total_cmp(&a.rank_score(length_normalize))
        .then_with(|| a.tokens.cmp(&b.tokens))
        .then_with(|| a.emitted().cmp(&b.emitted()))
}

struct Entry<S> {
    hyp: Hypothesis,
    state: S,
    last: TokenId,
}

/// Beam search over cumulative log-probability.
///
/// The beam holds at most `width` hypotheses. Each round, every open
/// hypothesis is extended by every token; completed hypotheses (ended by
/// `eos`) stay frozen in the beam and compete with the extensions for the
/// `width` slots. Search stops once every hypothesis in the beam is complete
/// or after `max_len` emitted tokens, when open hypotheses are kept as
/// truncated.
pub fn beam_search<D: StepDecoder>(
    decoder: &D,
    init_state: D::State,
    start_token: TokenId,
    eos: TokenId,
    config: &BeamConfig,
) -> Hypothesis {
    let width = config.width.max(1);
    let mut beam = vec![Entry {
        hyp: Hypothesis {
            tokens: Vec::new(),
            log_prob: 0.0,
            finished: false,
        },
        state: init_state,
        last: start_token,
    }];

    for _ in 0..config.max_len {
        if beam.iter().all(|e| e.hyp.finished) {
            break;
        }
        let mut candidates: Vec<Entry<D::State>> = Vec::new();
        for entry in beam {
            if entry.hyp.finished {
                candidates.push(entry);
                continue;
            }
            let (logp, state) = decoder.step(&entry.state, entry.last);
            for (tok, &lp) in logp.iter().enumerate() {
                let finished = tok == eos;
                let mut tokens = entry.hyp.tokens.clone();
                if !finished {
                    tokens.push(tok);
                }
                candidates.push(Entry {
                    hyp: Hypothesis {
                        tokens,
                        log_prob: entry.hyp.log_prob + lp,
                        finished,
                    },
                    state: state.clone(),
                    last: tok,
                });
            }
        }
        candidates.sort_by(|a, b| rank(&a.hyp, &b.hyp, false));
        candidates.truncate(width);
        beam = candidates;
    }

    beam.into_iter()
        .map(|e| e.hyp)
        .min_by(|a, b| rank(a, b, config.length_normalize))
        .expect("beam is never empty")
}

/// Beam of width one.
pub fn greedy<D: StepDecoder>(
    decoder: &D,
    init_state: D::State,
    start_token: TokenId,
    eos: TokenId,
    max_len: usize,
) -> Hypothesis {
    beam_search(
        decoder,
        init_state,
        start_token,
        eos,
        &BeamConfig {
            width: 1,
            max_len,
            length_normalize: false,
        },
    )
}
