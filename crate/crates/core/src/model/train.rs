use rayon::prelude::*;

use crate::error::{DvtError, Result};
use crate::numerics::{adam_step, AdamConfig, AdamState, ParamStore, Rng, Scalar, Tape, Tensor};
use crate::tokenization::ClipTensor;

use super::{Dvt, ForwardOptions, ModelInput, TrainConfig};

/// A prepared clip and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub input: ModelInput<f32>,
    pub label: usize,
}

/// Patchifies and (when needed) encodes every clip.
pub fn prepare_examples(model: &Dvt, clips: &[(ClipTensor, usize)]) -> Result<Vec<Example>> {
    clips
        .par_iter()
        .map(|(clip, label)| {
            if *label >= model.cfg.classes {
                return Err(DvtError::Domain(format!(
                    "label {label} out of range for {} classes",
                    model.cfg.classes
                )));
            }
            Ok(Example {
                input: model.prepare(clip)?,
                label: *label,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochMetrics {
    pub fn to_line(&self) -> String {
        format!(
            "epoch = {} train_loss = {:.6} train_acc = {:.4} val_loss = {:.6} val_acc = {:.4}",
            self.epoch, self.train_loss, self.train_acc, self.val_loss, self.val_acc
        )
    }
}

/// Everything needed to resume or reproduce a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ParamStore<f32>,
    pub adam: AdamState<f32>,
    /// Completed epochs.
    pub epoch: usize,
    pub log: Vec<EpochMetrics>,
}

impl TrainState {
    pub fn new(params: ParamStore<f32>) -> Self {
        let adam = AdamState::new(params.tensors());
        TrainState {
            params,
            adam,
            epoch: 0,
            log: Vec::new(),
        }
    }

    pub fn best_val_acc(&self) -> f64 {
        self.log.iter().map(|m| m.val_acc).fold(0.0, f64::max)
    }
}

struct ClipResult<T> {
    loss: f64,
    correct: bool,
    grads: Vec<Tensor<T>>,
}

fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn clip_step<T: Scalar>(
    model: &Dvt,
    params: &ParamStore<T>,
    input: &ModelInput<T>,
    label: usize,
) -> Result<ClipResult<T>> {
    let tape = Tape::new();
    let bound = params.bind(&tape);
    let out = model.forward(input, &bound, ForwardOptions::default())?;
    let loss = out.logits.cross_entropy(label)?;
    let correct = argmax(out.logits.value().data()) == label;
    let grads = bound.grads(&tape.backward(loss));
    Ok(ClipResult {
        loss: loss.value().data()[0].as_f64(),
        correct,
        grads,
    })
}

/// A dedicated pool of `workers` threads; `None` (the global pool) for 0.
fn worker_pool(workers: usize) -> Result<Option<rayon::ThreadPool>> {
    if workers == 0 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map(Some)
        .map_err(|e| DvtError::config(format!("thread pool: {e}")))
}

fn run_in<R: Send>(pool: &Option<rayon::ThreadPool>, f: impl FnOnce() -> R + Send) -> R {
    match pool {
        Some(p) => p.install(f),
        None => f(),
    }
}

/// Mean cross-entropy gradient of a batch, reduced in batch order.
fn batch_gradient(
    model: &Dvt,
    params: &ParamStore<f32>,
    data: &[Example],
    batch: &[usize],
) -> Result<(Vec<Tensor<f32>>, f64, usize)> {
    let results: Vec<Result<ClipResult<f32>>> = batch
        .par_iter()
        .map(|&i| clip_step(model, params, &data[i].input, data[i].label))
        .collect();
    let mut sum: Vec<Tensor<f32>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
    let (mut loss, mut correct) = (0.0, 0);
    for r in results {
        let r = r?;
        loss += r.loss;
        correct += r.correct as usize;
        for (s, g) in sum.iter_mut().zip(&r.grads) {
            s.data_mut().iter_mut().zip(g.data()).for_each(|(a, &b)| *a += b);
        }
    }
    let inv = 1.0 / batch.len() as f32;
    for s in &mut sum {
        s.data_mut().iter_mut().for_each(|v| *v *= inv);
    }
    Ok((sum, loss, correct))
}

/// Runs epochs `state.epoch..cfg.epochs` of Adam on mean cross-entropy,
/// evaluating on `val` after each. Clip order is reshuffled every epoch from
/// the model seed, so a run is reproducible from its configuration.
pub fn train(
    model: &Dvt,
    state: &mut TrainState,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<()> {
    if train.is_empty() {
        return Err(DvtError::config("training set is empty"));
    }
    if cfg.batch == 0 {
        return Err(DvtError::config("`batch` must be >= 1"));
    }
    let adam = AdamConfig {
        lr: cfg.lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        eps: cfg.eps,
    };
    let shuffle = Rng::new(model.cfg.seed).split_named("shuffle");
    let pool = worker_pool(cfg.workers)?;
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let mut order: Vec<usize> = (0..train.len()).collect();
        shuffle.split(epoch as u64).shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for (step, batch) in order.chunks(cfg.batch).enumerate() {
            let (grads, loss, ok) = run_in(&pool, || batch_gradient(model, &state.params, train, batch))?;
            if !loss.is_finite() || grads.iter().any(|g| !g.all_finite()) {
                return Err(DvtError::Divergence {
                    epoch,
                    step,
                    loss: loss / batch.len() as f64,
                });
            }
            loss_sum += loss;
            correct += ok;
            adam_step(state.params.tensors_mut(), &grads, &mut state.adam, &adam)?;
        }
        let n = train.len() as f64;
        let v = if val.is_empty() {
            None
        } else {
            Some(run_in(&pool, || evaluate(model, &state.params, val))?)
        };
        let m = EpochMetrics {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss: v.as_ref().map_or(f64::NAN, |v| v.mean_loss),
            val_acc: v.as_ref().map_or(f64::NAN, |v| v.top1),
        };
        on_epoch(&m);
        state.log.push(m);
        state.epoch += 1;
        if cfg.target_accuracy > 0.0 && v.is_some_and(|v| v.top1 >= cfg.target_accuracy) {
            break;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub count: usize,
    pub top1: f64,
    pub mean_loss: f64,
    /// Accuracy per class; `None` for classes absent from the data.
    pub per_class: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// [`evaluate`] on a dedicated pool of `workers` threads (0: global pool);
/// results do not depend on the worker count.
pub fn evaluate_with_workers<T: Scalar>(
    model: &Dvt,
    params: &ParamStore<T>,
    data: &[Example],
    workers: usize,
) -> Result<EvalMetrics> {
    run_in(&worker_pool(workers)?, || evaluate(model, params, data))
}

/// Top-1 accuracy, per-class accuracy and mean loss, one view per clip.
pub fn evaluate<T: Scalar>(model: &Dvt, params: &ParamStore<T>, data: &[Example]) -> Result<EvalMetrics> {
    let c = model.cfg.classes;
    let preds: Vec<Result<(usize, f64)>> = data
        .par_iter()
        .map(|ex| {
            let tape = Tape::new();
            let bound = params.bind(&tape);
            let input = ex.input.cast::<T>();
            let out = model.forward(&input, &bound, ForwardOptions::default())?;
            let loss = out.logits.cross_entropy(ex.label)?.value().data()[0].as_f64();
            Ok((argmax(out.logits.value().data()), loss))
        })
        .collect();
    let mut confusion = vec![vec![0usize; c]; c];
    let mut loss = 0.0;
    for (ex, p) in data.iter().zip(preds) {
        let (pred, l) = p?;
        confusion[ex.label][pred] += 1;
        loss += l;
    }
    let correct: usize = (0..c).map(|k| confusion[k][k]).sum();
    let n = data.len().max(1) as f64;
    let per_class = confusion
        .iter()
        .enumerate()
        .map(|(k, row)| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row[k] as f64 / total as f64)
        })
        .collect();
    Ok(EvalMetrics {
        count: data.len(),
        top1: correct as f64 / n,
        mean_loss: loss / n,
        per_class,
        confusion,
    })
}
