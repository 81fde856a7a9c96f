//! Text normalization, vocabulary construction and dataset generation.
//!
//! Sentences are lowercased, stripped of punctuation and split into maximal
//! runs of alphanumeric characters. Words below a frequency threshold are
//! folded into the `UNK` token, and every encoded target sequence ends in
//! `EOS`.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use rand::seq::index::sample;
use rand::Rng;
use thiserror::Error;

pub const UNK_TOKEN: &str = "UNK";
pub const EOS_TOKEN: &str = "EOS";
pub const UNK_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;

/// Default frequency threshold below which words become `UNK`.
pub const DEFAULT_MIN_COUNT: usize = 7;
/// Default maximum sentence length in surface words (EOS not counted).
pub const DEFAULT_MAX_LEN: usize = 40;

pub type TokenId = usize;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("sentence of length {len} is too short for {scenario} (need at least {required})")]
    TooShort {
        len: usize,
        required: usize,
        scenario: Scenario,
    },
    #[error("vocabulary needs at least two ordinary words to synthesize negatives")]
    InsufficientVocab,
    #[error("paraphrase pair {0} is not labeled equivalent")]
    NotPositive(usize),
    #[error("malformed vocabulary line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Splits raw text into lowercase words.
///
/// Any character that is not alphanumeric acts as a separator, so punctuation
/// disappears and "don't" becomes `["don", "t"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect()
}

/// A sequence of vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct TokenSeq(Vec<TokenId>);

impl TokenSeq {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        TokenSeq(tokens)
    }

    pub fn into_inner(self) -> Vec<TokenId> {
        self.0
    }

    /// The ids without a trailing EOS.
    pub fn words(&self, eos_id: TokenId) -> &[TokenId] {
        match self.0.split_last() {
            Some((&last, rest)) if last == eos_id => rest,
            _ => &self.0,
        }
    }

    pub fn with_eos(&self, eos_id: TokenId) -> TokenSeq {
        let mut v = self.words(eos_id).to_vec();
        v.push(eos_id);
        TokenSeq(v)
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(v: Vec<TokenId>) -> Self {
        TokenSeq(v)
    }
}

/// Bidirectional word/id map with reserved `UNK` and `EOS` entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    word_to_id: HashMap<String, TokenId>,
    id_to_word: Vec<String>,
    counts: Vec<u64>,
    unk_id: TokenId,
    eos_id: TokenId,
    min_count: usize,
}

impl Vocab {
    /// Builds a vocabulary of all words occurring at least `min_count` times.
    ///
    /// Ids are dense: `UNK` = 0, `EOS` = 1, then words by descending count with
    /// lexicographic tie-breaking. The `UNK` count records the occurrences of
    /// dropped words and the `EOS` count the number of sentences.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Vocab {
        let min_count = min_count.max(1);
        let mut counts: HashMap<&str, u64> = HashMap::new();
        let mut n_sentences = 0u64;
        for sentence in corpus {
            if !sentence.is_empty() {
                n_sentences += 1;
            }
            for w in sentence {
                *counts.entry(w.as_ref()).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = Vec::new();
        let mut dropped = 0u64;
        for (w, c) in counts {
            if c >= min_count as u64 && w != UNK_TOKEN && w != EOS_TOKEN {
                kept.push((w, c));
            } else {
                dropped += c;
            }
        }
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut id_to_word = vec![UNK_TOKEN.to_string(), EOS_TOKEN.to_string()];
        let mut freq = vec![dropped, n_sentences];
        for (w, c) in kept {
            id_to_word.push(w.to_string());
            freq.push(c);
        }
        Self::from_parts(id_to_word, freq, min_count)
    }

    fn from_parts(id_to_word: Vec<String>, counts: Vec<u64>, min_count: usize) -> Vocab {
        let word_to_id = id_to_word.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab {
            word_to_id,
            id_to_word,
            counts,
            unk_id: UNK_ID,
            eos_id: EOS_ID,
            min_count,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_word.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_word.is_empty()
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn is_reserved(&self, id: TokenId) -> bool {
        id == self.unk_id || id == self.eos_id
    }

    pub fn id(&self, word: &str) -> Option<TokenId> {
        self.word_to_id.get(word).copied()
    }

    pub fn word(&self, id: TokenId) -> Option<&str> {
        self.id_to_word.get(id).map(String::as_str)
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.counts.get(id).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.id_to_word.iter().map(String::as_str)
    }

    /// Maps words to ids, sending unknown words to `UNK`.
    pub fn encode<S: AsRef<str>>(&self, words: &[S], append_eos: bool) -> TokenSeq {
        let mut ids: Vec<TokenId> = words
            .iter()
            .map(|w| self.id(w.as_ref()).unwrap_or(self.unk_id))
            .collect();
        if append_eos {
            ids.push(self.eos_id);
        }
        TokenSeq(ids)
    }

    /// Maps ids back to words, dropping a trailing EOS.
    pub fn decode(&self, tokens: &[TokenId]) -> Vec<String> {
        let words = match tokens.split_last() {
            Some((&last, rest)) if last == self.eos_id => rest,
            _ => tokens,
        };
        words
            .iter()
            .map(|&id| self.word(id).unwrap_or(UNK_TOKEN).to_string())
            .collect()
    }

    /// Writes `word<TAB>id<TAB>count` lines, reserved tokens first.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, w) in self.id_to_word.iter().enumerate() {
            writeln!(out, "{}\t{}\t{}", w, id, self.counts[id])?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("vocab is UTF-8")
    }

    pub fn read<R: BufRead>(input: R) -> Result<Vocab, CorpusError> {
        let mut words = Vec::new();
        let mut counts = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let parse_err = |reason: &str| CorpusError::Parse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let mut fields = line.split('\t');
            let (Some(word), Some(id), Some(count), None) =
                (fields.next(), fields.next(), fields.next(), fields.next())
            else {
                return Err(parse_err("expected three tab-separated fields"));
            };
            let id: usize = id.parse().map_err(|_| parse_err("bad id"))?;
            let count: u64 = count.parse().map_err(|_| parse_err("bad count"))?;
            if id != words.len() {
                return Err(parse_err("ids must be dense and ascending"));
            }
            words.push(word.to_string());
            counts.push(count);
        }
        if words.len() < 2 || words[0] != UNK_TOKEN || words[1] != EOS_TOKEN {
            return Err(CorpusError::Parse {
                line: 1,
                reason: "reserved tokens UNK and EOS must come first".into(),
            });
        }
        let min_count = counts[2..].iter().copied().min().unwrap_or(1).max(1) as usize;
        let vocab = Self::from_parts(words, counts, min_count);
        if vocab.word_to_id.len() != vocab.id_to_word.len() {
            return Err(CorpusError::Parse {
                line: 0,
                reason: "duplicate word".into(),
            });
        }
        Ok(vocab)
    }

    /// SHA-256 of the serialized vocabulary.
    pub fn fingerprint(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_text().as_bytes());
        let mut out = [0u8; 32];
        out.copy_from_slice(&digest);
        out
    }
}

/// Keeps sentences with between 1 and `max_len` words.
pub fn filter_by_length(sentences: Vec<Vec<String>>, max_len: usize) -> Vec<Vec<String>> {
    sentences
        .into_iter()
        .filter(|s| !s.is_empty() && s.len() <= max_len)
        .collect()
}

/// Number of words in "the last 20%" of a sentence: ⌈0.2·T⌉, at least 1.
pub fn tail_len(len: usize) -> usize {
    // exact integer ceiling of len/5
    len.div_ceil(5).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    /// Erase the last word.
    S1,
    /// Zero the embedding of one word drawn from the last 20%.
    S2,
    /// Erase the last 20% of the words.
    S3,
}

impl Scenario {
    pub fn min_len(self) -> usize {
        match self {
            Scenario::S1 => 2,
            Scenario::S2 | Scenario::S3 => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::S1 => "s1",
            Scenario::S2 => "s2",
            Scenario::S3 => "s3",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        match s.to_ascii_lowercase().as_str() {
            "s1" | "1" => Some(Scenario::S1),
            "s2" | "2" => Some(Scenario::S2),
            "s3" | "3" => Some(Scenario::S3),
            _ => None,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImputationExample {
    pub scenario: Scenario,
    pub input: TokenSeq,
    /// Per-position flags of zeroed embeddings; only present for S2.
    pub zero_mask: Option<Vec<bool>>,
    pub target: TokenSeq,
}

impl ImputationExample {
    pub fn masked_position(&self) -> Option<usize> {
        self.zero_mask.as_ref()?.iter().position(|&m| m)
    }
}

/// Corrupts a sentence (given without EOS) for one imputation scenario.
pub fn make_imputation_example<R: Rng + ?Sized>(
    sentence: &[TokenId],
    scenario: Scenario,
    rng: &mut R,
) -> Result<ImputationExample, CorpusError> {
    let len = sentence.len();
    if len < scenario.min_len() {
        return Err(CorpusError::TooShort {
            len,
            required: scenario.min_len(),
            scenario,
        });
    }
    let tail = tail_len(len);
    let example = match scenario {
        Scenario::S1 => ImputationExample {
            scenario,
            input: TokenSeq(sentence[..len - 1].to_vec()),
            zero_mask: None,
            target: TokenSeq(vec![sentence[len - 1]]),
        },
        Scenario::S2 => {
            let pos = rng.random_range(len - tail..len);
            let mut mask = vec![false; len];
            mask[pos] = true;
            ImputationExample {
                scenario,
                input: TokenSeq(sentence.to_vec()),
                zero_mask: Some(mask),
                target: TokenSeq(vec![sentence[pos]]),
            }
        }
        Scenario::S3 => ImputationExample {
            scenario,
            input: TokenSeq(sentence[..len - tail].to_vec()),
            zero_mask: None,
            target: TokenSeq(sentence[len - tail..].to_vec()),
        },
    };
    Ok(example)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairLabel {
    Equivalent,
    NotEquivalent,
}

impl PairLabel {
    pub fn is_equivalent(self) -> bool {
        self == PairLabel::Equivalent
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParaphrasePair {
    pub sent_a: TokenSeq,
    pub sent_b: TokenSeq,
    pub label: PairLabel,
}

/// Synthesizes one non-paraphrase per positive pair by replacing ⌈0.2·len⌉
/// distinct positions of `sent_b` with other ordinary vocabulary words.
pub fn make_paraphrase_negatives<R: Rng + ?Sized>(
    positives: &[ParaphrasePair],
    vocab: &Vocab,
    rng: &mut R,
) -> Result<Vec<ParaphrasePair>, CorpusError> {
    let pool: Vec<TokenId> = (0..vocab.len()).filter(|&id| !vocab.is_reserved(id)).collect();
    let mut out = Vec::with_capacity(positives.len());
    for (i, pair) in positives.iter().enumerate() {
        if !pair.label.is_equivalent() {
            return Err(CorpusError::NotPositive(i));
        }
        let mut b = pair.sent_b.to_vec();
        if b.is_empty() {
            out.push(ParaphrasePair {
                sent_a: pair.sent_a.clone(),
                sent_b: TokenSeq(b),
                label: PairLabel::NotEquivalent,
            });
            continue;
        }
        let n_replace = tail_len(b.len());
        for pos in sample(rng, b.len(), n_replace) {
            let original = b[pos];
            let candidates = pool.len() - usize::from(pool.contains(&original));
            if candidates == 0 {
                return Err(CorpusError::InsufficientVocab);
            }
            // draw uniformly from the pool with the original removed
            let mut k = rng.random_range(0..candidates);
            let mut pick = pool[0];
            for &w in &pool {
                if w == original {
                    continue;
                }
                if k == 0 {
                    pick = w;
                    break;
                }
                k -= 1;
            }
            b[pos] = pick;
        }
        out.push(ParaphrasePair {
            sent_a: pair.sent_a.clone(),
            sent_b: TokenSeq(b),
            label: PairLabel::NotEquivalent,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("What is the name of the pension plan"),
            words("what is the name of the pension plan")
        );
        assert_eq!(tokenize("Hello, World!"), words("hello world"));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("  --  "), Vec::<String>::new());
        assert_eq!(tokenize("It's 3.5%"), words("it s 3 5"));
    }

    #[test]
    fn vocab_threshold() {
        let mut corpus = Vec::new();
        for _ in 0..7 {
            corpus.push(words("apple"));
        }
        for _ in 0..6 {
            corpus.push(words("pear"));
        }
        let v = Vocab::build(&corpus, DEFAULT_MIN_COUNT);
        assert!(v.id("apple").is_some());
        assert!(v.id("pear").is_none());
        assert_eq!(v.count(v.unk_id()), 6);
        assert_eq!(v.count(v.eos_id()), 13);
    }

    #[test]
    fn empty_corpus_has_reserved_only() {
        let v = Vocab::build::<String>(&[], 7);
        assert_eq!(v.len(), 2);
        assert_eq!(v.word(v.unk_id()), Some(UNK_TOKEN));
        assert_eq!(v.word(v.eos_id()), Some(EOS_TOKEN));
        assert_ne!(v.unk_id(), v.eos_id());
    }

    #[test]
    fn vocab_order_is_count_then_lexicographic() {
        let corpus = vec![words("b a c c b"), words("d d a")];
        let v = Vocab::build(&corpus, 1);
        let order: Vec<&str> = v.words().collect();
        assert_eq!(order, ["UNK", "EOS", "a", "b", "c", "d"]);
    }

    #[test]
    fn encode_rules() {
        let corpus = vec![words("the cat sat"), words("the dog sat")];
        let v = Vocab::build(&corpus, 1);
        let seq = v.encode(&words("the cat"), false);
        assert_eq!(&*seq, &[v.id("the").unwrap(), v.id("cat").unwrap()]);
        let seq = v.encode(&words("the zebra"), false);
        assert_eq!(seq[1], v.unk_id());
        let seq = v.encode(&words("the cat"), true);
        assert_eq!(*seq.last().unwrap(), v.eos_id());
        assert_eq!(v.decode(&seq), words("the cat"));
        assert_eq!(v.decode(&v.encode(&words("a cat"), true)), words("UNK cat"));
    }

    #[test]
    fn vocab_file_round_trip() {
        let corpus = vec![words("x y y z z z"), words("w")];
        let v = Vocab::build(&corpus, 1);
        let text = v.to_text();
        assert!(text.starts_with("UNK\t0\t0\nEOS\t1\t2\n"));
        let back = Vocab::read(text.as_bytes()).unwrap();
        assert_eq!(back.to_text(), text);
        assert_eq!(back.id("z"), v.id("z"));
    }

    #[test]
    fn vocab_file_rejects_garbage() {
        assert!(Vocab::read("UNK\t0\n".as_bytes()).is_err());
        assert!(Vocab::read("a\t0\t1\nb\t1\t1\n".as_bytes()).is_err());
        assert!(Vocab::read("UNK\t0\t0\nEOS\t2\t0\n".as_bytes()).is_err());
    }

    #[test]
    fn tail_len_is_ceiling_fifth() {
        assert_eq!(tail_len(1), 1);
        assert_eq!(tail_len(5), 1);
        assert_eq!(tail_len(6), 2);
        assert_eq!(tail_len(10), 2);
        assert_eq!(tail_len(11), 3);
        assert_eq!(tail_len(40), 8);
    }

    #[test]
    fn length_filter() {
        let s = vec![
            vec![],
            words("a b"),
            vec!["w".to_string(); 41],
            vec!["w".to_string(); 40],
        ];
        let kept = filter_by_length(s, DEFAULT_MAX_LEN);
        assert_eq!(kept.len(), 2);
        assert!(kept.iter().all(|s| !s.is_empty() && s.len() <= 40));
    }

    #[test]
    fn imputation_scenarios() {
        let sentence: Vec<usize> = (10..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);

        let ex = make_imputation_example(&sentence, Scenario::S1, &mut rng).unwrap();
        assert_eq!(&*ex.input, &sentence[..9]);
        assert_eq!(&*ex.target, &[19]);

        let ex = make_imputation_example(&sentence, Scenario::S3, &mut rng).unwrap();
        assert_eq!(&*ex.input, &sentence[..8]);
        assert_eq!(&*ex.target, &[18, 19]);

        let a = make_imputation_example(&sentence, Scenario::S2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = make_imputation_example(&sentence, Scenario::S2, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
        let pos = a.masked_position().unwrap();
        assert!(pos == 8 || pos == 9);
        assert_eq!(a.zero_mask.as_ref().unwrap().iter().filter(|&&m| m).count(), 1);
        assert_eq!(&*a.input, &sentence[..]);
        assert_eq!(&*a.target, &[sentence[pos]]);
    }

    #[test]
    fn s2_positions_cover_the_tail_window() {
        let sentence: Vec<usize> = (0..10).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = [0usize; 10];
        for _ in 0..400 {
            let ex = make_imputation_example(&sentence, Scenario::S2, &mut rng).unwrap();
            seen[ex.masked_position().unwrap()] += 1;
        }
        assert!(seen[..8].iter().all(|&c| c == 0));
        assert!(seen[8] > 150 && seen[9] > 150);
    }

    #[test]
    fn imputation_too_short() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            make_imputation_example(&[1], Scenario::S1, &mut rng),
            Err(CorpusError::TooShort { required: 2, .. })
        ));
        assert!(make_imputation_example(&[1, 2, 3, 4], Scenario::S2, &mut rng).is_err());
        assert!(make_imputation_example(&[1, 2, 3, 4], Scenario::S3, &mut rng).is_err());
        assert!(make_imputation_example(&[1, 2, 3, 4, 5], Scenario::S3, &mut rng).is_ok());
    }

    fn toy_vocab() -> Vocab {
        let corpus: Vec<Vec<String>> = (0..30).map(|i| vec![format!("w{i}")]).collect();
        Vocab::build(&corpus, 1)
    }

    #[test]
    fn negatives_change_exactly_a_fifth() {
        let vocab = toy_vocab();
        let sent: Vec<usize> = (2..12).collect();
        let positives = vec![ParaphrasePair {
            sent_a: TokenSeq::new(sent.clone()),
            sent_b: TokenSeq::new(sent.clone()),
            label: PairLabel::Equivalent,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let neg = make_paraphrase_negatives(&positives, &vocab, &mut rng).unwrap();
        assert_eq!(neg.len(), 1);
        assert_eq!(neg[0].label, PairLabel::NotEquivalent);
        let diff = neg[0].sent_b.iter().zip(&sent).filter(|(a, b)| a != b).count();
        assert_eq!(diff, 2);
        assert!(neg[0].sent_b.iter().all(|&t| !vocab.is_reserved(t)));

        let again = make_paraphrase_negatives(&positives, &vocab, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(neg, again);
    }

    #[test]
    fn negatives_need_a_replacement_pool() {
        let vocab = Vocab::build(&[vec!["only".to_string()]], 1);
        let id = vocab.id("only").unwrap();
        let positives = vec![ParaphrasePair {
            sent_a: TokenSeq::new(vec![id]),
            sent_b: TokenSeq::new(vec![id]),
            label: PairLabel::Equivalent,
        }];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            make_paraphrase_negatives(&positives, &vocab, &mut rng),
            Err(CorpusError::InsufficientVocab)
        ));
    }
}
