//! Teacher-forced training with Adam, dev-set model selection and evaluation.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{clip_global_norm, AdamConfig, AdamState, Tensor};
use crate::corpus::{CognateSet, CorpusError, EncodedExample, Symbol, Vocabulary};
use crate::metrics::{report_with, EditDistanceReport, MetricsError, Normalization};
use crate::model::{Checkpoint, ModelConfig, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged: loss is {loss} in epoch {epoch}")]
    Diverged { epoch: usize, loss: f64 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Dev evaluations without improvement before stopping.
    pub patience: usize,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 32,
            max_epochs: 100,
            patience: 5,
            grad_clip: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && self.grad_clip > 0.0
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.patience > 0;
        if positive {
            Ok(())
        } else {
            Err(TrainError::Config(format!("all values must be positive: {self:?}")))
        }
    }
}

/// Mean per-symbol loss of a batch and the matching parameter gradients.
pub fn batch_gradients(
    params: &ModelParams<f32>,
    batch: &[EncodedExample],
) -> Result<(f64, Vec<Tensor<f32>>), TrainError> {
    let per_example: Vec<(f32, Vec<Tensor<f32>>)> = batch
        .par_iter()
        .map(|ex| params.loss_and_grads(ex))
        .collect::<Result<_, _>>()?;
    let symbols: usize = batch.iter().map(|ex| ex.target_ids.len()).sum();
    let mut total = 0.0f64;
    let mut grads: Vec<Tensor<f32>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    for (loss, g) in per_example {
        total += loss as f64;
        for (acc, part) in grads.iter_mut().zip(g) {
            for (a, p) in acc.data_mut().iter_mut().zip(part.data()) {
                *a += p;
            }
        }
    }
    let scale = 1.0 / symbols.max(1) as f32;
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|x| *x *= scale);
    }
    Ok((total / symbols.max(1) as f64, grads))
}

/// Parameters plus optimizer state.
pub struct Trainer {
    params: ModelParams<f32>,
    adam: AdamState<f32>,
    grad_clip: f64,
}

impl Trainer {
    pub fn new(params: ModelParams<f32>, config: &TrainConfig) -> Trainer {
        let adam = AdamState::new(
            params.tensors(),
            AdamConfig {
                learning_rate: config.learning_rate,
                ..AdamConfig::default()
            },
        );
        Trainer {
            params,
            adam,
            grad_clip: config.grad_clip,
        }
    }

    /// One update on `batch`; returns the batch loss before the update.
    pub fn step(&mut self, batch: &[EncodedExample]) -> Result<f64, TrainError> {
        let (loss, mut grads) = batch_gradients(&self.params, batch)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        clip_global_norm(&mut grads, self.grad_clip);
        self.adam
            .step(self.params.tensors_mut(), &grads)
            .map_err(ModelError::from)?;
        Ok(loss)
    }

    pub fn params(&self) -> &ModelParams<f32> {
        &self.params
    }

    pub fn into_params(self) -> ModelParams<f32> {
        self.params
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-symbol loss over the epoch, measured before each update.
    pub train_loss: f64,
    pub dev_avg_edit: Option<f64>,
    pub dev_exact_rate: Option<f64>,
}

pub struct TrainOutcome {
    /// Parameters of the best dev epoch (the last epoch without a dev set).
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,dev_avg_edit,dev_exact_rate\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for e in log {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            e.epoch,
            e.train_loss,
            opt(e.dev_avg_edit),
            opt(e.dev_exact_rate)
        );
    }
    s
}

/// Trains from a fresh initialization. With a dev set, every epoch is
/// evaluated and the parameters with the lowest average edit distance are
/// kept (earliest on ties); training stops after `patience` evaluations
/// without improvement or once the dev set is reconstructed perfectly.
pub fn train(
    train_sets: &[CognateSet],
    dev_sets: &[CognateSet],
    vocab: Vocabulary,
    model: ModelConfig,
    config: TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if train_sets.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let longest = train_sets.iter().map(|s| s.latin().len()).max().unwrap_or(0);
    if model.max_decode_len < longest + 1 {
        return Err(TrainError::Config(format!(
            "max_decode_len {} is below the longest training word ({longest}) plus one",
            model.max_decode_len
        )));
    }
    let examples: Vec<EncodedExample> = train_sets.iter().map(|s| vocab.encode(s)).collect::<Result<_, _>>()?;
    let params = ModelParams::init(model, vocab.len())?;
    let mut trainer = Trainer::new(params, &config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::new();
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut symbols = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<EncodedExample> = chunk.iter().map(|&i| examples[i].clone()).collect();
            let n: usize = batch.iter().map(|e| e.target_ids.len()).sum();
            let loss = trainer.step(&batch)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, loss });
            }
            loss_sum += loss * n as f64;
            symbols += n;
        }
        let mut entry = EpochLog {
            epoch,
            train_loss: loss_sum / symbols as f64,
            dev_avg_edit: None,
            dev_exact_rate: None,
        };
        let mut done = false;
        if !dev_sets.is_empty() {
            let eval = evaluate_params(trainer.params(), &vocab, dev_sets, Normalization::Gold)?;
            let avg = eval.report.average;
            entry.dev_avg_edit = Some(avg);
            entry.dev_exact_rate = Some(eval.report.exact_rate());
            if best.as_ref().is_none_or(|(b, _, _)| avg < *b) {
                best = Some((avg, epoch, trainer.params().clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            done = since_best >= config.patience || avg == 0.0;
        }
        on_epoch(&entry);
        log.push(entry);
        if done {
            break;
        }
    }
    let (best_epoch, params) = match best {
        Some((_, epoch, p)) => (epoch, p),
        None => (log.len(), trainer.into_params()),
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint { params, vocab },
        log,
        best_epoch,
    })
}

pub struct Evaluation {
    pub report: EditDistanceReport,
    pub predictions: Vec<Vec<Symbol>>,
    /// Entries where decoding hit `max_decode_len`.
    pub truncated: usize,
}

/// Greedy-decodes every set and scores the predictions against the gold
/// Latin forms. Symbols missing from the vocabulary are read as unknown.
pub fn evaluate(sets: &[CognateSet], checkpoint: &Checkpoint) -> Result<Evaluation, TrainError> {
    evaluate_params(&checkpoint.params, &checkpoint.vocab, sets, Normalization::Gold)
}

pub fn evaluate_params(
    params: &ModelParams<f32>,
    vocab: &Vocabulary,
    sets: &[CognateSet],
    normalization: Normalization,
) -> Result<Evaluation, TrainError> {
    if sets.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    let decoded = sets
        .par_iter()
        .map(|s| params.greedy_decode(&vocab.encode_lossy(s)))
        .collect::<Result<Vec<_>, _>>()?;
    let truncated = decoded.iter().filter(|d| d.truncated).count();
    let predictions: Vec<Vec<Symbol>> = decoded
        .iter()
        .map(|d| d.ids.iter().filter_map(|&id| vocab.symbol(id)).collect())
        .collect();
    let pairs: Vec<(Vec<Symbol>, Vec<Symbol>)> = predictions
        .iter()
        .zip(sets)
        .map(|(p, s)| (p.clone(), s.latin().symbols().to_vec()))
        .collect();
    Ok(Evaluation {
        report: report_with(&pairs, normalization)?,
        predictions,
        truncated,
    })
}
