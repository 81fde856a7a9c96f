use ndarray::{Array1, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{latent_code, Metric, TaskError};
use crate::corpus::{PairLabel, ParaphrasePair, EOS_ID};
use crate::embedding::cosine_similarity;
use crate::neural::{
    adam_step, concat, dropout_mask, join, softmax, AdamState, DenseParams, Parameters, TensorVisitor,
};
use crate::svae::{stream_rng, Model};

/// Output index of the "equivalent" class.
const EQUIVALENT: usize = 1;

/// Frozen latent codes of the two sentences of a pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPair {
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub label: PairLabel,
}

impl LatentPair {
    pub fn input(&self) -> Array1<f64> {
        concat(&[self.a.view(), self.b.view()])
    }
}

/// Latent codes for every pair, each pair drawing from its own rng stream.
pub fn encode_pairs(
    model: &Model,
    pairs: &[ParaphrasePair],
    samples: usize,
    seed: u64,
) -> Result<Vec<LatentPair>, TaskError> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut rng = stream_rng(seed, i as u64);
            let a = latent_code(model, p.sent_a.words(EOS_ID), None, samples, &mut rng)?;
            let b = latent_code(model, p.sent_b.words(EOS_ID), None, samples, &mut rng)?;
            Ok(LatentPair { a, b, label: p.label })
        })
        .collect()
}

/// Two tanh hidden layers with dropout and a two-way softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct PiClassifier {
    pub layer1: DenseParams,
    pub layer2: DenseParams,
    pub output: DenseParams,
    pub dropout: f64,
}

impl PiClassifier {
    pub const HIDDEN1: usize = 100;
    pub const HIDDEN2: usize = 50;
    pub const DROPOUT: f64 = 0.3;

    pub fn new<R: Rng + ?Sized>(input_dim: usize, rng: &mut R) -> Self {
        PiClassifier {
            layer1: DenseParams::xavier(Self::HIDDEN1, input_dim, rng),
            layer2: DenseParams::xavier(Self::HIDDEN2, Self::HIDDEN1, rng),
            output: DenseParams::xavier(2, Self::HIDDEN2, rng),
            dropout: Self::DROPOUT,
        }
    }

    pub fn zeros(input_dim: usize) -> Self {
        PiClassifier {
            layer1: DenseParams::zeros(Self::HIDDEN1, input_dim),
            layer2: DenseParams::zeros(Self::HIDDEN2, Self::HIDDEN1),
            output: DenseParams::zeros(2, Self::HIDDEN2),
            dropout: Self::DROPOUT,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.d_in()
    }

    /// Class probabilities without dropout, indexed `[not equivalent,
    /// equivalent]`.
    pub fn probabilities(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let h1 = self.layer1.linear(x).mapv_into(f64::tanh);
        let h2 = self.layer2.linear(h1.view()).mapv_into(f64::tanh);
        softmax(self.output.linear(h2.view()).view())
    }

    /// Ties go to "not equivalent".
    pub fn predict(&self, x: ArrayView1<f64>) -> PairLabel {
        let p = self.probabilities(x);
        if p[EQUIVALENT] > p[1 - EQUIVALENT] {
            PairLabel::Equivalent
        } else {
            PairLabel::NotEquivalent
        }
    }

    /// Cross-entropy of one example under a fresh dropout draw; gradients
    /// are accumulated into `grads`.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        x: ArrayView1<f64>,
        label: PairLabel,
        rng: &mut R,
        grads: &mut PiClassifier,
    ) -> f64 {
        let m1 = dropout_mask(Self::HIDDEN1, self.dropout, rng);
        let m2 = dropout_mask(Self::HIDDEN2, self.dropout, rng);
        let a1 = self.layer1.linear(x).mapv_into(f64::tanh);
        let h1 = &a1 * &m1;
        let a2 = self.layer2.linear(h1.view()).mapv_into(f64::tanh);
        let h2 = &a2 * &m2;
        let p = softmax(self.output.linear(h2.view()).view());
        let y = class_index(label);

        let mut d_logits = p.clone();
        d_logits[y] -= 1.0;
        let dh2 = self.output.backward(h2.view(), d_logits.view(), &mut grads.output);
        let d_pre2 = dh2 * &m2 * &a2.mapv(|v| 1.0 - v * v);
        let dh1 = self.layer2.backward(h1.view(), d_pre2.view(), &mut grads.layer2);
        let d_pre1 = dh1 * &m1 * &a1.mapv(|v| 1.0 - v * v);
        self.layer1.backward(x, d_pre1.view(), &mut grads.layer1);
        -p[y].max(f64::MIN_POSITIVE).ln()
    }
}

fn class_index(label: PairLabel) -> usize {
    if label.is_equivalent() {
        EQUIVALENT
    } else {
        1 - EQUIVALENT
    }
}

impl Parameters for PiClassifier {
    fn visit(&self, prefix: &str, f: &mut TensorVisitor<'_>) {
        self.layer1.visit(&join(prefix, "layer1"), f);
        self.layer2.visit(&join(prefix, "layer2"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut [f64])) {
        self.layer1.visit_mut(&join(prefix, "layer1"), f);
        self.layer2.visit_mut(&join(prefix, "layer2"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for PiTrainConfig {
    fn default() -> Self {
        PiTrainConfig {
            epochs: 100,
            lr: 1e-3,
            batch_size: 512,
            seed: 1,
        }
    }
}

/// Mini-batch Adam on the mean cross-entropy; the latent inputs stay fixed.
pub fn train_paraphrase(
    mut clf: PiClassifier,
    pairs: &[LatentPair],
    config: &PiTrainConfig,
) -> Result<PiClassifier, TaskError> {
    if pairs.is_empty() {
        return Err(TaskError::EmptyTrainingSet);
    }
    let inputs = checked_inputs(&clf, pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::for_params(&clf, config.lr);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let batch_size = config.batch_size.max(1);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(batch_size) {
            let mut grads = clf.clone();
            grads.fill(0.0);
            for &i in batch {
                clf.loss_and_grad(inputs[i].view(), pairs[i].label, &mut rng, &mut grads);
            }
            grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut clf, &grads, &mut adam)?;
        }
    }
    Ok(clf)
}

fn checked_inputs(clf: &PiClassifier, pairs: &[LatentPair]) -> Result<Vec<Array1<f64>>, TaskError> {
    pairs
        .iter()
        .map(|p| {
            let x = p.input();
            if x.len() == clf.input_dim() {
                Ok(x)
            } else {
                Err(TaskError::WidthMismatch {
                    expected: clf.input_dim(),
                    got: x.len(),
                })
            }
        })
        .collect()
}

/// Counts with "equivalent" as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: PairLabel, predicted: PairLabel) {
        match (truth.is_equivalent(), predicted.is_equivalent()) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn error_rate(&self) -> f64 {
        ratio(self.fp + self.fn_, self.total())
    }

    /// `FP / (TP + FP)`, i.e. 1 − precision; 0 when nothing is predicted
    /// positive.
    pub fn false_alarm_rate(&self) -> f64 {
        ratio(self.fp, self.tp + self.fp)
    }

    /// `FN / (TP + FN)`, i.e. 1 − recall; 0 when there are no positives.
    pub fn miss_rate(&self) -> f64 {
        ratio(self.fn_, self.tp + self.fn_)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiReport {
    pub confusion: Confusion,
    pub error_rate: f64,
    pub false_alarm_rate: f64,
    pub miss_rate: f64,
    /// Mean cosine between the two codes of truly equivalent pairs; `None`
    /// when the test set has none.
    pub mean_pair_cosine: Option<f64>,
}

impl PiReport {
    pub fn from_confusion(confusion: Confusion, mean_pair_cosine: Option<f64>) -> Self {
        PiReport {
            confusion,
            error_rate: confusion.error_rate(),
            false_alarm_rate: confusion.false_alarm_rate(),
            miss_rate: confusion.miss_rate(),
            mean_pair_cosine,
        }
    }

    /// Rates are reported as percentages.
    pub fn records(&self) -> Vec<Metric> {
        let mut out = vec![
            ("error_rate".to_string(), 100.0 * self.error_rate),
            ("false_alarm_rate".to_string(), 100.0 * self.false_alarm_rate),
            ("miss_rate".to_string(), 100.0 * self.miss_rate),
            ("tp".to_string(), self.confusion.tp as f64),
            ("fp".to_string(), self.confusion.fp as f64),
            ("tn".to_string(), self.confusion.tn as f64),
            ("fn".to_string(), self.confusion.fn_ as f64),
        ];
        if let Some(c) = self.mean_pair_cosine {
            out.push(("mean_pair_cosine".to_string(), c));
        }
        out
    }
}

pub fn eval_paraphrase(clf: &PiClassifier, pairs: &[LatentPair]) -> Result<PiReport, TaskError> {
    if pairs.is_empty() {
        return Err(TaskError::EmptyTestSet);
    }
    let inputs = checked_inputs(clf, pairs)?;
    let mut confusion = Confusion::default();
    for (p, x) in pairs.iter().zip(&inputs) {
        confusion.add(p.label, clf.predict(x.view()));
    }
    let mut cos_sum = 0.0;
    let mut n_eq = 0usize;
    for p in pairs.iter().filter(|p| p.label.is_equivalent()) {
        cos_sum += cosine_similarity(p.a.view(), p.b.view())?;
        n_eq += 1;
    }
    let cosine = (n_eq > 0).then(|| cos_sum / n_eq as f64);
    Ok(PiReport::from_confusion(confusion, cosine))
}
