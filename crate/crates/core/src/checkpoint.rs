//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `SVAECKPT`, `u32` version, then the
//! payload sections, then a SHA-256 digest of everything before it.
//!
//! Payload: run configuration text, vocabulary text, vocabulary
//! fingerprint, training counters, named `f64` tensors with shapes,
//! optional optimizer state and optional rng state. Strings and byte blocks
//! carry a `u64` length prefix.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::corpus::Vocab;
use crate::embedding::EmbeddingMatrix;
use crate::neural::{AdamState, Parameters};
use crate::svae::{Model, ModelParams};
use crate::tasks::PiClassifier;

pub const MAGIC: &[u8; 8] = b"SVAECKPT";
pub const FORMAT_VERSION: u32 = 1;

const EMBEDDINGS: &str = "embeddings";
const MODEL: &str = "model";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint vocabulary does not match the supplied vocabulary")]
    VocabMismatch,
    #[error("checkpoint is corrupt or truncated")]
    ChecksumFailure,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint configuration: {0}")]
    Config(#[from] ConfigError),
}

/// Serialized generator position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Everything needed to resume training or reproduce an evaluation.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub vocab: Vocab,
    pub embeddings: EmbeddingMatrix,
    pub params: ModelParams,
    /// Paraphrase classifiers, one per training repeat.
    pub classifiers: Vec<PiClassifier>,
    pub step: u64,
    pub epoch: u64,
    pub optimizer: Option<AdamState>,
    pub rng: Option<RngState>,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.0.extend_from_slice(b);
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }
    fn tensor(&mut self, name: &str, shape: &[usize], data: &[f64]) {
        self.bytes(name.as_bytes());
        self.u32(shape.len() as u32);
        for &d in shape {
            self.u64(d as u64);
        }
        for &x in data {
            self.f64(x);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(what: &str) -> CheckpointError {
    CheckpointError::Malformed(what.to_string())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed("unexpected end of payload"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn len(&mut self) -> Result<usize, CheckpointError> {
        usize::try_from(self.u64()?).map_err(|_| malformed("length overflow"))
    }
    fn bytes(&mut self) -> Result<&'a [u8], CheckpointError> {
        let n = self.len()?;
        self.take(n)
    }
    fn string(&mut self) -> Result<String, CheckpointError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| malformed("invalid UTF-8"))
    }
    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn tensor(&mut self) -> Result<(String, Vec<usize>, Vec<f64>), CheckpointError> {
        let name = self.string()?;
        let ndim = self.u32()? as usize;
        let shape = (0..ndim).map(|_| self.len()).collect::<Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| malformed("tensor size overflow"))?;
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>, _>>()?;
        Ok((name, shape, data))
    }
}

type TensorMap = HashMap<String, (Vec<usize>, Vec<f64>)>;

fn load_params<P: Parameters>(p: &mut P, prefix: &str, tensors: &mut TensorMap) -> Result<(), CheckpointError> {
    let mut expected = Vec::new();
    p.visit(prefix, &mut |name, shape, _| {
        expected.push((name.to_string(), shape.to_vec()))
    });
    for (name, shape) in &expected {
        match tensors.get(name) {
            Some((s, _)) if s == shape => {}
            Some((s, _)) => {
                return Err(CheckpointError::Malformed(format!(
                    "tensor {name} has shape {s:?}, expected {shape:?}"
                )))
            }
            None => return Err(CheckpointError::Malformed(format!("missing tensor {name}"))),
        }
    }
    p.visit_mut(prefix, &mut |name, data| {
        let (_, src) = tensors.remove(name).expect("checked above");
        data.copy_from_slice(&src);
    });
    Ok(())
}

impl Checkpoint {
    /// The stored model ready for inference.
    pub fn model(&self) -> Model {
        Model {
            config: self.config.model_config(self.vocab.len()),
            params: self.params.clone(),
            embeddings: Arc::new(self.embeddings.clone()),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(FORMAT_VERSION);
        w.bytes(self.config.to_text().as_bytes());
        w.bytes(self.vocab.to_text().as_bytes());
        w.0.extend_from_slice(&self.vocab.fingerprint());
        w.u64(self.step);
        w.u64(self.epoch);
        w.u64(self.classifiers.len() as u64);

        let mut tensors: Vec<(String, Vec<usize>, Vec<f64>)> = Vec::new();
        let e = self.embeddings.vectors();
        tensors.push((EMBEDDINGS.into(), e.shape().to_vec(), e.iter().copied().collect()));
        let mut collect =
            |name: &str, shape: &[usize], data: &[f64]| tensors.push((name.to_string(), shape.to_vec(), data.to_vec()));
        self.params.visit(MODEL, &mut collect);
        for (k, c) in self.classifiers.iter().enumerate() {
            c.visit(&format!("pi{k}"), &mut collect);
        }
        w.u64(tensors.len() as u64);
        for (name, shape, data) in &tensors {
            w.tensor(name, shape, data);
        }

        match &self.optimizer {
            Some(a) => {
                w.u8(1);
                w.u64(a.t);
                for x in [a.lr, a.beta1, a.beta2, a.eps] {
                    w.f64(x);
                }
                w.f64s(&a.m);
                w.f64s(&a.v);
            }
            None => w.u8(0),
        }
        match &self.rng {
            Some(r) => {
                w.u8(1);
                w.0.extend_from_slice(&r.seed);
                w.u64(r.stream);
                w.0.extend_from_slice(&r.word_pos.to_le_bytes());
            }
            None => w.u8(0),
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    /// Decodes a checkpoint, checking the version before the checksum. With
    /// `expected_vocab`, the stored vocabulary must match it.
    pub fn from_bytes(bytes: &[u8], expected_vocab: Option<&Vocab>) -> Result<Self, CheckpointError> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(CheckpointError::ChecksumFailure);
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(CheckpointError::ChecksumFailure);
        }

        let mut r = Reader { buf: body, pos: 12 };
        let config = RunConfig::from_text(&r.string()?)?;
        let vocab_text = r.string()?;
        let vocab = Vocab::read(vocab_text.as_bytes()).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        let stored_hash = r.take(32)?;
        if vocab.fingerprint() != stored_hash {
            return Err(CheckpointError::VocabMismatch);
        }
        if let Some(v) = expected_vocab {
            if v.fingerprint() != vocab.fingerprint() {
                return Err(CheckpointError::VocabMismatch);
            }
        }
        let step = r.u64()?;
        let epoch = r.u64()?;
        let n_classifiers = r.len()?;

        let n_tensors = r.len()?;
        let mut tensors = TensorMap::new();
        for _ in 0..n_tensors {
            let (name, shape, data) = r.tensor()?;
            tensors.insert(name, (shape, data));
        }
        let (eshape, edata) = tensors
            .remove(EMBEDDINGS)
            .ok_or_else(|| malformed("missing embeddings"))?;
        if eshape.len() != 2 || eshape[0] != vocab.len() || eshape[1] != config.d_word {
            return Err(CheckpointError::Malformed(format!("embedding shape {eshape:?}")));
        }
        let embeddings = EmbeddingMatrix::new(
            Array2::from_shape_vec((eshape[0], eshape[1]), edata)
                .map_err(|e| CheckpointError::Malformed(e.to_string()))?,
        );

        let model_config = config.model_config(vocab.len());
        let mut params = ModelParams::zeros(&model_config);
        load_params(&mut params, MODEL, &mut tensors)?;
        let input = 2 * model_config.code_dim();
        let mut classifiers = Vec::with_capacity(n_classifiers);
        for k in 0..n_classifiers {
            let mut c = PiClassifier::zeros(input);
            load_params(&mut c, &format!("pi{k}"), &mut tensors)?;
            classifiers.push(c);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(CheckpointError::Malformed(format!("unexpected tensor {extra}")));
        }

        let optimizer = match r.u8()? {
            0 => None,
            1 => {
                let t = r.u64()?;
                let (lr, beta1, beta2, eps) = (r.f64()?, r.f64()?, r.f64()?, r.f64()?);
                let m = r.f64s()?;
                let v = r.f64s()?;
                if m.len() != params.num_params() || v.len() != m.len() {
                    return Err(malformed("optimizer state size"));
                }
                Some(AdamState {
                    m,
                    v,
                    t,
                    lr,
                    beta1,
                    beta2,
                    eps,
                })
            }
            _ => return Err(malformed("optimizer flag")),
        };
        let rng = match r.u8()? {
            0 => None,
            1 => {
                let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
                let stream = r.u64()?;
                let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
                Some(RngState { seed, stream, word_pos })
            }
            _ => return Err(malformed("rng flag")),
        };
        if r.pos != body.len() {
            return Err(malformed("trailing bytes"));
        }
        Ok(Checkpoint {
            config,
            vocab,
            embeddings,
            params,
            classifiers,
            step,
            epoch,
            optimizer,
            rng,
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_bytes())?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path, expected_vocab: Option<&Vocab>) -> Result<Self, CheckpointError> {
        Self::from_bytes(&std::fs::read(path)?, expected_vocab)
    }
}
