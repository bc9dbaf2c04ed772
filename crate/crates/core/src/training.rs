//! Supervised training loop: cross-entropy over the class logits,
//! mini-batch updates with Adam or plain SGD, per-step and per-eval history.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::math::{s, Scalar};
use crate::model::{Classifier, ModelError, ParamSet};
use crate::tokenizer::EncodedBatch;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at step {step} (lr {lr}, grad norm {grad_norm})")]
    NonFiniteLoss { step: usize, lr: f64, grad_norm: f64 },
    #[error("label {label} out of range for {n_classes} classes")]
    BadLabel { label: usize, n_classes: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "name")]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn default_epochs() -> usize {
    4
}
fn default_batch_size() -> usize {
    128
}
fn default_lr() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub seed: u64,
    /// Evaluate every this many steps (0: only at epoch boundaries).
    #[serde(default)]
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            learning_rate: default_lr(),
            optimizer: Optimizer::default(),
            seed: 0,
            eval_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub step: usize,
    pub epoch: usize,
    pub eval_loss: f64,
    pub eval_accuracy: f64,
}

/// Loss/accuracy history of one training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub steps: Vec<StepRecord>,
    pub evals: Vec<EvalRecord>,
}

impl TrainHistory {
    /// CSV rendering: `step,epoch,split,loss,accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,epoch,split,loss,accuracy\n");
        for r in &self.steps {
            out.push_str(&format!(
                "{},{},train,{},{}\n",
                r.step, r.epoch, r.train_loss, r.train_accuracy
            ));
        }
        for r in &self.evals {
            out.push_str(&format!(
                "{},{},eval,{},{}\n",
                r.step, r.epoch, r.eval_loss, r.eval_accuracy
            ));
        }
        out
    }

    pub fn final_eval_accuracy(&self) -> Option<f64> {
        self.evals.last().map(|r| r.eval_accuracy)
    }

    pub fn best_eval_accuracy(&self) -> Option<f64> {
        self.evals
            .iter()
            .map(|r| r.eval_accuracy)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}

/// Encoded inputs plus aligned class indices.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub batch: EncodedBatch,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Stable per-row cross entropy from raw logits: `logsumexp(l) - l[label]`.
fn batch_loss<F: Scalar>(logits: &Array2<F>, labels: &[usize]) -> (f64, usize) {
    let mut total = 0.0;
    let mut correct = 0;
    for (row, &label) in logits.outer_iter().zip(labels) {
        let max = row.fold(F::neg_infinity(), |a, &b| a.max(b));
        let lse = row
            .iter()
            .map(|&v| (v - max).exp())
            .sum::<F>()
            .ln()
            .to_f64()
            .unwrap()
            + max.to_f64().unwrap();
        total += lse - row[label].to_f64().unwrap();
        let pred = argmax_row(row);
        if pred == label {
            correct += 1;
        }
    }
    (total / labels.len().max(1) as f64, correct)
}

fn argmax_row<F: Scalar>(row: ndarray::ArrayView1<'_, F>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn step_loss_grads<F: Scalar>(
    model: &Classifier<F>,
    batch: &EncodedBatch,
    labels: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize, ParamSet<F>), TrainError> {
    if batch.n_rows() != labels.len() {
        return Err(TrainError::Model(ModelError::ShapeMismatch {
            reason: format!("{} rows vs {} labels", batch.n_rows(), labels.len()),
        }));
    }
    for &label in labels {
        if label >= model.config.n_classes {
            return Err(TrainError::BadLabel {
                label,
                n_classes: model.config.n_classes,
            });
        }
    }
    let (out, caches) = model.forward_train(batch, rng)?;
    let (loss, correct) = batch_loss(&out.logits, labels);
    let scale = s::<F>(1.0 / labels.len() as f64);
    let mut dlogits = out.probabilities.clone();
    for (i, &label) in labels.iter().enumerate() {
        dlogits[[i, label]] = dlogits[[i, label]] - F::one();
    }
    dlogits.mapv_inplace(|v| v * scale);
    let grads = model.backward(&caches, &dlogits);
    Ok((loss, correct, grads))
}

/// Mean cross-entropy loss and gradients for one batch. Dropout is driven by
/// `rng` and is a no-op when the model's dropout rate is zero.
pub fn loss_and_grads<F: Scalar>(
    model: &Classifier<F>,
    batch: &EncodedBatch,
    labels: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(f64, ParamSet<F>), TrainError> {
    step_loss_grads(model, batch, labels, rng).map(|(loss, _, grads)| (loss, grads))
}

/// Argmax class indices (ties resolved to the lowest index) and full
/// probability rows, evaluated in chunks of `chunk_rows`.
pub fn predict<F: Scalar>(
    model: &Classifier<F>,
    batch: &EncodedBatch,
    chunk_rows: usize,
) -> Result<(Vec<usize>, Array2<f64>), TrainError> {
    let n = batch.n_rows();
    let chunk_rows = chunk_rows.max(1);
    let mut preds = Vec::with_capacity(n);
    let mut probs = Array2::zeros((n, model.config.n_classes));
    let mut row0 = 0;
    while row0 < n {
        let rows: Vec<usize> = (row0..(row0 + chunk_rows).min(n)).collect();
        let sub = batch.slice_rows(&rows);
        let out = model.forward(&sub)?;
        for (r, prow) in out.probabilities.outer_iter().enumerate() {
            preds.push(argmax_row(prow));
            for (c, &p) in prow.iter().enumerate() {
                probs[[row0 + r, c]] = p.to_f64().unwrap();
            }
        }
        row0 += rows.len();
    }
    Ok((preds, probs))
}

/// Eval-mode loss and accuracy over a dataset, in chunks.
pub fn evaluate<F: Scalar>(
    model: &Classifier<F>,
    data: &Dataset,
    chunk_rows: usize,
) -> Result<(f64, f64), TrainError> {
    let n = data.len();
    if n == 0 {
        return Ok((0.0, 0.0));
    }
    let chunk_rows = chunk_rows.max(1);
    let mut loss_sum = 0.0;
    let mut correct = 0;
    let mut row0 = 0;
    while row0 < n {
        let rows: Vec<usize> = (row0..(row0 + chunk_rows).min(n)).collect();
        let sub = data.batch.slice_rows(&rows);
        let labels = &data.labels[row0..row0 + rows.len()];
        let out = model.forward(&sub)?;
        let (loss, c) = batch_loss(&out.logits, labels);
        loss_sum += loss * rows.len() as f64;
        correct += c;
        row0 += rows.len();
    }
    Ok((loss_sum / n as f64, correct as f64 / n as f64))
}

struct AdamState<F> {
    m: ParamSet<F>,
    v: ParamSet<F>,
    t: u64,
}

fn grad_norm<F: Scalar>(grads: &ParamSet<F>) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.as_slice().iter().map(|v| v.to_f64().unwrap().powi(2)))
        .sum::<f64>()
        .sqrt()
}

fn apply_update<F: Scalar>(
    params: &mut ParamSet<F>,
    grads: &ParamSet<F>,
    cfg: &TrainConfig,
    adam: &mut Option<AdamState<F>>,
) {
    let lr = s::<F>(cfg.learning_rate);
    match (cfg.optimizer, adam) {
        (Optimizer::Sgd, _) => {
            for ((_, mut p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
                let ps = p.as_slice_mut();
                let gs = g.as_slice();
                for (pv, &gv) in ps.iter_mut().zip(gs) {
                    *pv = *pv - lr * gv;
                }
            }
        }
        (Optimizer::Adam { beta1, beta2, eps }, Some(state)) => {
            state.t += 1;
            let b1 = s::<F>(beta1);
            let b2 = s::<F>(beta2);
            let eps = s::<F>(eps);
            let one = F::one();
            let bc1 = s::<F>(1.0 - beta1.powi(state.t as i32));
            let bc2 = s::<F>(1.0 - beta2.powi(state.t as i32));
            for ((((_, mut p), (_, g)), (_, mut m)), (_, mut v)) in params
                .tensors_mut()
                .into_iter()
                .zip(grads.tensors())
                .zip(state.m.tensors_mut())
                .zip(state.v.tensors_mut())
            {
                let ps = p.as_slice_mut();
                let gs = g.as_slice();
                let ms = m.as_slice_mut();
                let vs = v.as_slice_mut();
                for i in 0..ps.len() {
                    let gv = gs[i];
                    ms[i] = b1 * ms[i] + (one - b1) * gv;
                    vs[i] = b2 * vs[i] + (one - b2) * gv * gv;
                    let mhat = ms[i] / bc1;
                    let vhat = vs[i] / bc2;
                    ps[i] = ps[i] - lr * mhat / (vhat.sqrt() + eps);
                }
            }
        }
        (Optimizer::Adam { .. }, None) => unreachable!("adam state initialized before updates"),
    }
}

/// Trains the model in place over the dataset, shuffling per epoch under the
/// config seed. Evaluates on `eval_data` every `eval_every` steps and at each
/// epoch end. Single-threaded and fully deterministic for a given seed.
pub fn train<F: Scalar>(
    mut model: Classifier<F>,
    train_data: &Dataset,
    eval_data: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Classifier<F>, TrainHistory), TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = match cfg.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: ParamSet::zeros(&model.config),
            v: ParamSet::zeros(&model.config),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut history = TrainHistory::default();
    let mut step = 0;
    let n = train_data.len();
    let mut indices: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        indices.shuffle(&mut rng);
        for chunk in indices.chunks(cfg.batch_size.max(1)) {
            let sub = train_data.batch.slice_rows(chunk);
            let labels: Vec<usize> = chunk.iter().map(|&i| train_data.labels[i]).collect();
            let (loss, correct, grads) = step_loss_grads(&model, &sub, &labels, &mut rng)?;
            step += 1;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step,
                    lr: cfg.learning_rate,
                    grad_norm: grad_norm(&grads),
                });
            }
            apply_update(&mut model.params, &grads, cfg, &mut adam);
            history.steps.push(StepRecord {
                step,
                epoch,
                train_loss: loss,
                train_accuracy: correct as f64 / labels.len() as f64,
            });
            if cfg.eval_every > 0 && step % cfg.eval_every == 0 {
                if let Some(eval) = eval_data {
                    let (el, ea) = evaluate(&model, eval, cfg.batch_size)?;
                    history.evals.push(EvalRecord {
                        step,
                        epoch,
                        eval_loss: el,
                        eval_accuracy: ea,
                    });
                }
            }
        }
        if let Some(eval) = eval_data {
            let (el, ea) = evaluate(&model, eval, cfg.batch_size)?;
            history.evals.push(EvalRecord {
                step,
                epoch,
                eval_loss: el,
                eval_accuracy: ea,
            });
        }
    }
    Ok((model, history))
}
