#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use svae::corpus::{TokenId, Vocab};
use svae::decode::StepDecoder;
use svae::embedding::{train_skipgram, EmbeddingMatrix, SkipgramConfig};
use svae::svae::{Model, ModelConfig, Variant};

const DETERMINERS: &[&str] = &["the", "a", "this", "that", "every", "some", "my", "our"];
const ADJECTIVES: &[&str] = &[
    "old", "new", "small", "large", "red", "blue", "quiet", "busy", "early", "late", "bright", "dark", "local",
    "foreign", "young", "public", "private", "strong", "weak", "simple",
];
const NOUNS: &[&str] = &[
    "man",
    "woman",
    "child",
    "teacher",
    "doctor",
    "driver",
    "farmer",
    "city",
    "village",
    "river",
    "market",
    "school",
    "bank",
    "court",
    "police",
    "team",
    "player",
    "company",
    "government",
    "minister",
    "report",
    "letter",
    "house",
    "road",
    "car",
    "train",
    "ship",
    "garden",
    "window",
    "door",
    "table",
    "book",
    "song",
    "film",
    "game",
    "price",
    "plan",
    "law",
    "war",
    "storm",
];
const VERBS: &[&str] = &[
    "sees", "finds", "takes", "wants", "moves", "builds", "opens", "closes", "sells", "buys", "reads", "writes",
    "watches", "visits", "leaves", "follows", "helps", "meets", "calls", "changes",
];
const PREPOSITIONS: &[&str] = &[
    "in", "near", "behind", "after", "before", "with", "without", "under", "over", "from",
];
const ADVERBS: &[&str] = &[
    "today", "again", "quickly", "slowly", "often", "rarely", "finally", "suddenly", "later", "now",
];

fn noun_phrase<R: Rng>(rng: &mut R, out: &mut Vec<String>) {
    out.push(DETERMINERS.choose(rng).unwrap().to_string());
    for _ in 0..rng.random_range(0..=2) {
        out.push(ADJECTIVES.choose(rng).unwrap().to_string());
    }
    out.push(NOUNS.choose(rng).unwrap().to_string());
}

/// Templated sentences between 4 and about 25 words.
pub fn synthetic_sentence<R: Rng>(rng: &mut R) -> Vec<String> {
    let mut s = Vec::new();
    noun_phrase(rng, &mut s);
    s.push(VERBS.choose(rng).unwrap().to_string());
    noun_phrase(rng, &mut s);
    for _ in 0..rng.random_range(0..=3) {
        s.push(PREPOSITIONS.choose(rng).unwrap().to_string());
        noun_phrase(rng, &mut s);
    }
    if rng.random_bool(0.5) {
        s.push(ADVERBS.choose(rng).unwrap().to_string());
    }
    s
}

pub fn synthetic_corpus(n: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| synthetic_sentence(&mut rng)).collect()
}

/// Random word sequences over a closed list of `vocab` words.
pub fn random_word_corpus(n: usize, vocab: usize, min_len: usize, max_len: usize, seed: u64) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.random_range(min_len..=max_len);
            (0..len).map(|_| format!("w{}", rng.random_range(0..vocab))).collect()
        })
        .collect()
}

pub fn encode_corpus(vocab: &Vocab, corpus: &[Vec<String>]) -> Vec<Vec<TokenId>> {
    corpus.iter().map(|s| vocab.encode(s, false).into_inner()).collect()
}

pub fn random_embeddings(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EmbeddingMatrix::new(Array2::from_shape_simple_fn((vocab_size, dim), || {
        rng.random_range(-0.5..0.5)
    }))
}

pub fn skipgram_embeddings(
    vocab: &Vocab,
    corpus: &[Vec<TokenId>],
    dim: usize,
    epochs: usize,
    seed: u64,
) -> EmbeddingMatrix {
    let cfg = SkipgramConfig {
        dim,
        epochs,
        seed,
        ..SkipgramConfig::default()
    };
    train_skipgram(corpus, vocab, &cfg).expect("skip-gram training")
}

pub struct Dims {
    pub d_word: usize,
    pub d_h: usize,
    pub d_z: usize,
}

pub fn small_model(variant: Variant, emb: Arc<EmbeddingMatrix>, dims: &Dims, kl_anneal_steps: u64, seed: u64) -> Model {
    let mut config = ModelConfig::new(variant, emb.vocab_size());
    config.d_word = dims.d_word;
    config.d_h = dims.d_h;
    config.d_z = dims.d_z;
    config.kl_anneal_steps = kl_anneal_steps;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Model::new(config, emb, &mut rng).expect("valid model")
}

pub const START: TokenId = usize::MAX;

/// Random next-token distributions keyed by the emitted prefix.
pub struct RandomTable {
    pub vocab: usize,
    pub dists: HashMap<Vec<TokenId>, Vec<f64>>,
}

impl RandomTable {
    pub fn new(vocab: usize, max_len: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut dists = HashMap::new();
        let mut frontier = vec![Vec::new()];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for prefix in frontier {
                let logits: Vec<f64> = (0..vocab).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
                dists.insert(prefix.clone(), logits.iter().map(|l| l - lse).collect());
                for tok in 1..vocab {
                    let mut p = prefix.clone();
                    p.push(tok);
                    next.push(p);
                }
            }
            frontier = next;
        }
        RandomTable { vocab, dists }
    }
}

impl StepDecoder for RandomTable {
    type State = Vec<TokenId>;

    fn step(&self, state: &Vec<TokenId>, token: TokenId) -> (Vec<f64>, Vec<TokenId>) {
        let mut prefix = state.clone();
        if token != START {
            prefix.push(token);
        }
        let d = self
            .dists
            .get(&prefix)
            .cloned()
            .unwrap_or_else(|| vec![-(self.vocab as f64).ln(); self.vocab]);
        (d, prefix)
    }
}

/// Best complete or length-capped sequence by exhaustive enumeration; EOS
/// is token 0.
pub fn exhaustive(table: &RandomTable, max_len: usize) -> (Vec<TokenId>, f64) {
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    let mut consider = |tokens: Vec<TokenId>, score: f64| {
        let better = match &best {
            None => true,
            Some((bt, bs)) => score > *bs || (score == *bs && tokens < *bt),
        };
        if better {
            best = Some((tokens, score));
        }
    };
    let mut stack = vec![(Vec::new(), 0.0)];
    while let Some((prefix, score)) = stack.pop() {
        if prefix.len() == max_len {
            consider(prefix, score);
            continue;
        }
        let d = &table.dists[&prefix];
        consider(prefix.clone(), score + d[0]);
        for (tok, lp) in d.iter().enumerate().skip(1) {
            let mut p = prefix.clone();
            p.push(tok);
            stack.push((p, score + lp));
        }
    }
    best.unwrap()
}
