//! Mini-batch BCE training with SGD or Adam and early stopping on a
//! validation metric.

mod config;
mod optim;

pub use config::{ModelChoice, Monitor, OptimizerKind, RunConfig, TrainConfig};
pub use optim::{adam_step, sgd_step, AdamState, Optimizer};

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::{bce_value, Tape};
use crate::dataio::{split_records, Modality, SampleRecord, Split, N_VIEWS};
use crate::error::{Error, Result};
use crate::metrics::{mean_average_precision, ApResult, PredictionMatrix};
use crate::models::{predict, Batch, Model};
use crate::params::ParamSet;
use crate::scalar::Scalar;

/// Stream of the shuffling RNG; model initialization uses stream 0.
pub const SHUFFLE_STREAM: u64 = 3;
/// Minimum change that counts as an improvement of the monitored metric.
pub const MIN_DELTA: f64 = 1e-6;
const EVAL_CHUNK: usize = 256;

/// One line of `history.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_map: f64,
    pub per_class_ap: Vec<Option<f64>>,
    pub attention: BTreeMap<Modality, [f64; N_VIEWS]>,
}

/// Outcome of [`EarlyStopping::observe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Waiting,
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub monitor: Monitor,
    pub best_metric: Option<f64>,
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, monitor: Monitor) -> Self {
        Self {
            patience,
            monitor,
            best_metric: None,
            best_epoch: 0,
            epochs_since_improvement: 0,
        }
    }

    /// Improvement means beating the best value by at least [`MIN_DELTA`].
    pub fn observe(&mut self, epoch: usize, metric: f64) -> Verdict {
        let improved = metric.is_finite()
            && match (self.best_metric, self.monitor) {
                (None, _) => true,
                (Some(best), Monitor::ValMap) => metric - best >= MIN_DELTA,
                (Some(best), Monitor::ValLoss) => best - metric >= MIN_DELTA,
            };
        if improved {
            self.best_metric = Some(metric);
            self.best_epoch = epoch;
            self.epochs_since_improvement = 0;
            return Verdict::Improved;
        }
        self.epochs_since_improvement += 1;
        if self.epochs_since_improvement >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Waiting
        }
    }
}

/// Loss and ranking quality of a model on a record set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    /// Mean BCE over every sample and class.
    pub loss: f64,
    pub ap: ApResult<f64>,
    pub attention: BTreeMap<Modality, [f64; N_VIEWS]>,
}

/// Forward-only pass over `records`; never touches the parameters.
pub fn evaluate<T: Scalar, M: Model<T> + ?Sized>(model: &M, records: &[&SampleRecord]) -> Result<EvalResult> {
    if records.is_empty() {
        return Err(Error::EmptySplit("evaluate over zero records".into()));
    }
    let n_classes = model.n_classes();
    let mut probs = Vec::with_capacity(records.len() * n_classes);
    let mut targets = Vec::with_capacity(records.len() * n_classes);
    let mut sums: BTreeMap<Modality, [f64; N_VIEWS]> = BTreeMap::new();
    for chunk in records.chunks(EVAL_CHUNK) {
        let batch = Batch::<T>::from_records(chunk, model.modalities())?;
        let pred = predict(model, &batch)?;
        probs.extend(pred.probs.data().iter().map(|p| p.as_f64()));
        targets.extend(batch.targets.data().iter().map(|t| t.as_f64()));
        for (m, alpha) in pred.attention {
            let acc = sums.entry(m).or_insert([0.0; N_VIEWS]);
            for row in alpha.data().chunks(N_VIEWS) {
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a += x.as_f64();
                }
            }
        }
    }
    let loss = bce_value(&probs, &targets);
    if !probs.iter().all(|p| p.is_finite()) {
        return Err(Error::Numeric("non-finite predictions during evaluation".into()));
    }
    let pm = PredictionMatrix::new(n_classes, probs, targets.iter().map(|&t| t > 0.5).collect())?;
    let n = records.len() as f64;
    Ok(EvalResult {
        loss,
        ap: mean_average_precision(&pm)?,
        attention: sums.into_iter().map(|(m, s)| (m, s.map(|x| x / n))).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult<T> {
    /// Parameters after the best epoch; also left in the model.
    pub best_params: ParamSet<T>,
    pub best_epoch: usize,
    pub best_metric: f64,
    pub reports: Vec<EpochReport>,
}

/// Trains `model` on the train split, monitoring the val split.
///
/// The train split is reshuffled every epoch. Training stops after
/// `patience` epochs without improvement or at `max_epochs`, and the model
/// is restored to its best-epoch parameters. `on_epoch` sees every report
/// as soon as it is produced.
pub fn fit<T, M, F>(model: &mut M, records: &[SampleRecord], config: &TrainConfig, mut on_epoch: F) -> Result<FitResult<T>>
where
    T: Scalar,
    M: Model<T> + ?Sized,
    F: FnMut(&EpochReport) -> Result<()>,
{
    config.validate()?;
    let train = split_records(records, Split::Train);
    let val = split_records(records, Split::Val);
    if train.is_empty() {
        return Err(Error::EmptySplit("train split is empty".into()));
    }
    if val.is_empty() {
        return Err(Error::EmptySplit("val split is empty".into()));
    }
    let lr = T::of(config.learning_rate);
    let mut optimizer = match config.optimizer {
        OptimizerKind::Sgd => Optimizer::Sgd { lr },
        OptimizerKind::Adam => Optimizer::Adam(AdamState::new(model.params(), lr)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut stopper = EarlyStopping::new(config.patience, config.monitor);
    let mut best_params = model.params().clone();
    let mut reports = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(config.batch_size).enumerate() {
            let rows: Vec<&SampleRecord> = idx.iter().map(|&i| train[i]).collect();
            let batch = Batch::<T>::from_records(&rows, model.modalities())?;
            let grads = {
                let mut tape = Tape::new();
                let bound = model.params().bind(&mut tape);
                let out = model.forward(&mut tape, &bound, &batch)?;
                let loss = tape.bce_loss(out.probs, &batch.targets)?;
                let value = tape.value(loss).data()[0].as_f64();
                if !value.is_finite() {
                    return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}, batch {bi}")));
                }
                loss_sum += value * rows.len() as f64;
                tape.backward(loss)?;
                bound.grads(&tape)
            };
            optimizer.step(model.params_mut(), &grads)?;
        }
        let eval = evaluate(&*model, &val)?;
        let report = EpochReport {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss: eval.loss,
            val_map: eval.ap.map_or_zero(),
            per_class_ap: eval.ap.per_class.clone(),
            attention: eval.attention,
        };
        let metric = match config.monitor {
            Monitor::ValMap => report.val_map,
            Monitor::ValLoss => report.val_loss,
        };
        let verdict = stopper.observe(epoch, metric);
        if verdict == Verdict::Improved {
            best_params = model.params().clone();
        }
        log::info!(
            "epoch {epoch}: train_loss {:.5} val_loss {:.5} val_map {:.4}",
            report.train_loss,
            report.val_loss,
            report.val_map
        );
        on_epoch(&report)?;
        reports.push(report);
        if verdict == Verdict::Stop {
            break;
        }
    }
    *model.params_mut() = best_params.clone();
    Ok(FitResult {
        best_params,
        best_epoch: stopper.best_epoch,
        best_metric: stopper.best_metric.unwrap_or(f64::NAN),
        reports,
    })
}

#[cfg(test)]
mod tests;
