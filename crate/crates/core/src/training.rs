//! Adam with warmup, the training loop and finite-difference gradient checks.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::NodeId;
use crate::candidates::AnswerVocabulary;
use crate::error::{Error, Result};
use crate::model::{MavexModel, PreparedInstance};
use crate::nn::{Graph, Module};
use crate::tensor::Tensor;
use crate::validation::{consistency_decision, vqa_soft_score, FallbackScope};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Rate for the attention and head parameters.
    pub learning_rate_new: f64,
    /// Rate for trainable encoder parameters; the hash encoder has none.
    pub learning_rate_encoder: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Encoder layers kept frozen when a trainable encoder is used.
    pub frozen_prefix: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate_new: 5e-5,
            learning_rate_encoder: 2e-5,
            epochs: 75,
            batch_size: 8,
            seed: 0,
            warmup_fraction: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            frozen_prefix: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate_new > 0.0 && self.learning_rate_encoder > 0.0) {
            return Err(Error::config("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::config("warmup_fraction must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta1)
            || !(0.0..1.0).contains(&self.beta2)
            || self.adam_epsilon <= 0.0
        {
            return Err(Error::config("invalid Adam hyperparameters"));
        }
        Ok(())
    }
}

/// Multiplier on the base rate: linear warmup over the first
/// `warmup_fraction` of steps, then linear decay to zero.
pub fn lr_schedule(step: usize, total: usize, warmup_fraction: f64) -> f64 {
    let warmup = (warmup_fraction * total as f64).ceil() as usize;
    let s = step + 1;
    if s <= warmup {
        return s as f64 / warmup as f64;
    }
    let remaining = total.saturating_sub(warmup).max(1);
    ((total - step) as f64 / remaining as f64).clamp(0.0, 1.0)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            beta1,
            beta2,
            epsilon,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, module: &mut dyn Module, grads: &BTreeMap<String, Tensor>, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for p in module.params_mut() {
            let Some(g) = grads.get(&p.name) else {
                continue;
            };
            let (rows, cols) = p.value.shape();
            let (m, v) = self
                .moments
                .entry(p.name.clone())
                .or_insert_with(|| (Tensor::zeros(rows, cols), Tensor::zeros(rows, cols)));
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + self.epsilon);
                p.value.data_mut()[i] -= update;
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Loss of the untrained model over the whole training set.
    pub initial_loss: f64,
    /// Mean batch loss per epoch, taken before each update.
    pub epoch_losses: Vec<f64>,
    /// Mean soft score of the decision rule on the training set after each epoch.
    pub epoch_accuracy: Vec<f64>,
    /// Loss of the trained model over the whole training set.
    pub final_loss: f64,
    pub steps: usize,
    pub wall_clock_seconds: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Mean soft score of the decisions on `data`; `annotations` are aligned with `data`.
pub fn fixture_accuracy(
    model: &MavexModel,
    data: &[PreparedInstance],
    annotations: &[Vec<String>],
    vocab: &AnswerVocabulary,
    fallback: FallbackScope,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (inst, ann) in data.iter().zip(annotations) {
        let out = model.predict(inst)?;
        let rec = consistency_decision(
            &inst.question_id,
            &out.p,
            &out.j,
            &inst.candidates,
            vocab,
            fallback,
        )?;
        total += vqa_soft_score(&rec.final_answer, ann)?;
    }
    Ok(total / data.len() as f64)
}

fn full_loss(model: &MavexModel, data: &[PreparedInstance]) -> Result<f64> {
    let refs: Vec<&PreparedInstance> = data.iter().collect();
    model.loss_value(&refs)
}

/// Trains `model` in place. Shuffling uses `config.seed`, so equal seeds and
/// inputs give bitwise-equal loss series.
pub fn train(
    model: &mut MavexModel,
    data: &[PreparedInstance],
    annotations: &[Vec<String>],
    vocab: &AnswerVocabulary,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::data("training set is empty"));
    }
    if annotations.len() != data.len() {
        return Err(Error::usage(
            "annotations must align with training instances",
        ));
    }
    let started = Instant::now();
    let fallback = FallbackScope::Vocabulary;
    let initial_loss = full_loss(model, data)?;
    let batches_per_epoch = data.len().div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::new(config.beta1, config.beta2, config.adam_epsilon);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut epoch_accuracy = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&PreparedInstance> = chunk.iter().map(|&i| &data[i]).collect();
            let mut g = Graph::new();
            let loss = model.batch_loss(&mut g, &batch)?;
            let value = g.tape.scalar(loss);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { batch: step });
            }
            let grads = g.param_grads(loss);
            let lr =
                config.learning_rate_new * lr_schedule(step, total_steps, config.warmup_fraction);
            adam.step(model, &grads, lr);
            sum += value * batch.len() as f64;
            step += 1;
        }
        epoch_losses.push(sum / data.len() as f64);
        epoch_accuracy.push(fixture_accuracy(model, data, annotations, vocab, fallback)?);
        log::debug!("epoch {epoch}: loss {:.6}", epoch_losses[epoch]);
    }
    let final_loss = full_loss(model, data)?;
    Ok(TrainReport {
        initial_loss,
        epoch_losses,
        epoch_accuracy,
        final_loss,
        steps: step,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        checkpoint: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `|analytic - numeric| / (|analytic| + |numeric|)` in the L2 norm, per tensor.
    pub per_tensor: Vec<(String, f64)>,
}

fn relative_error(a: &[f64], n: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(n)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let an: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nn: f64 = n.iter().map(|x| x * x).sum::<f64>().sqrt();
    if an + nn < 1e-12 {
        0.0
    } else {
        diff / (an + nn)
    }
}

/// Compares tape gradients of `loss` with central differences for every
/// parameter of `module`.
pub fn grad_check_with<M: Module>(
    module: &mut M,
    epsilon: f64,
    loss: impl Fn(&M, &mut Graph) -> Result<NodeId>,
) -> Result<GradCheckReport> {
    if !(epsilon > 0.0) {
        return Err(Error::usage("grad_check epsilon must be positive"));
    }
    let mut g = Graph::new();
    let root = loss(module, &mut g)?;
    let analytic = g.param_grads(root);
    let eval = |m: &M| -> Result<f64> {
        let mut g = Graph::new();
        let r = loss(m, &mut g)?;
        Ok(g.tape.scalar(r))
    };
    let names: Vec<String> = module.params().iter().map(|p| p.name.clone()).collect();
    let mut per_tensor = Vec::with_capacity(names.len());
    for (pi, name) in names.iter().enumerate() {
        let len = module.params()[pi].value.len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let original = module.params()[pi].value.data()[i];
            module.params_mut()[pi].value.data_mut()[i] = original + epsilon;
            let plus = eval(module)?;
            module.params_mut()[pi].value.data_mut()[i] = original - epsilon;
            let minus = eval(module)?;
            module.params_mut()[pi].value.data_mut()[i] = original;
            *slot = (plus - minus) / (2.0 * epsilon);
        }
        let a = analytic
            .get(name)
            .map(|t| t.data().to_vec())
            .unwrap_or_else(|| vec![0.0; len]);
        per_tensor.push((name.clone(), relative_error(&a, &numeric)));
    }
    let max_relative_error = per_tensor.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    Ok(GradCheckReport {
        max_relative_error,
        per_tensor,
    })
}

/// Gradient check of the full training loss on `batch`. Only small models
/// (`model_dim <= 16`) are accepted.
pub fn grad_check(
    model: &mut MavexModel,
    batch: &[PreparedInstance],
    epsilon: f64,
) -> Result<GradCheckReport> {
    if model.config.model_dim > 16 {
        return Err(Error::usage("grad_check is limited to model_dim <= 16"));
    }
    grad_check_with(model, epsilon, |m, g| {
        let refs: Vec<&PreparedInstance> = batch.iter().collect();
        m.batch_loss(g, &refs)
    })
}
