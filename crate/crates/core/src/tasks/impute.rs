use std::fmt;

use rayon::prelude::*;

use super::{generate, latent_code, InferenceConfig, Metric, Task, TaskError};
use crate::corpus::{ImputationExample, Scenario, EOS_ID};
use crate::decode::{bleu, greedy};
use crate::svae::{stream_rng, Model};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImputationMetric {
    Accuracy,
    Bleu,
}

impl fmt::Display for ImputationMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ImputationMetric::Accuracy => "accuracy",
            ImputationMetric::Bleu => "bleu",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImputationReport {
    pub scenario: Scenario,
    pub metric: ImputationMetric,
    /// In [0, 1].
    pub value: f64,
    pub n_examples: usize,
}

impl ImputationReport {
    /// Values are reported as percentages.
    pub fn records(&self) -> Vec<Metric> {
        vec![
            (format!("{}.{}", self.scenario.name(), self.metric), 100.0 * self.value),
            (format!("{}.n_examples", self.scenario.name()), self.n_examples as f64),
        ]
    }
}

/// S1/S2: the greedy first decoded token must equal the erased word.
/// S3: mean smoothed BLEU of the beam-search output against the erased
/// suffix.
pub fn eval_imputation(
    model: &Model,
    trained_for: Task,
    examples: &[ImputationExample],
    scenario: Scenario,
    config: &InferenceConfig,
) -> Result<ImputationReport, TaskError> {
    if trained_for != Task::Impute(scenario) {
        return Err(TaskError::ScenarioMismatch {
            trained: trained_for.to_string(),
            requested: scenario,
        });
    }
    if let Some(ex) = examples.iter().find(|e| e.scenario != scenario) {
        return Err(TaskError::ScenarioMismatch {
            trained: ex.scenario.name().to_string(),
            requested: scenario,
        });
    }
    if examples.is_empty() {
        return Err(TaskError::EmptyTestSet);
    }
    let scores: Vec<Result<f64, TaskError>> = examples
        .par_iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut rng = stream_rng(config.seed, i as u64);
            let code = latent_code(
                model,
                &ex.input,
                ex.zero_mask.as_deref(),
                config.latent_samples,
                &mut rng,
            )?;
            match scenario {
                Scenario::S1 | Scenario::S2 => {
                    let dec = model.decoder(code);
                    let init = dec.initial_state();
                    let hyp = greedy(&dec, init, EOS_ID, EOS_ID, 1);
                    Ok(f64::from(u8::from(hyp.tokens.first() == ex.target.first())))
                }
                Scenario::S3 => {
                    let hyp = generate(model, code, &config.beam);
                    Ok(bleu(&hyp.tokens, &ex.target, 4, true)?)
                }
            }
        })
        .collect();
    let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;
    let metric = match scenario {
        Scenario::S1 | Scenario::S2 => ImputationMetric::Accuracy,
        Scenario::S3 => ImputationMetric::Bleu,
    };
    Ok(ImputationReport {
        scenario,
        metric,
        value: scores.iter().sum::<f64>() / scores.len() as f64,
        n_examples: scores.len(),
    })
}
