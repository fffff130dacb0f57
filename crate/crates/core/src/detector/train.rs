use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{bce_with_logit, Architecture, SequenceClassifier};
use crate::dataset::{Examples, FeatureSet, NormStats};
use crate::kernel::stream_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 12,
            patience: 3,
            seed: 17,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("empty training set")]
    Empty,
    #[error("batch size must be at least 1")]
    BatchSize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: SequenceClassifier,
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept (lowest validation loss).
    pub best_epoch: usize,
}

/// Mean BCE over a set of examples.
pub fn mean_loss(model: &SequenceClassifier, data: &Examples) -> f64 {
    if data.is_empty() {
        return 0.0;
    }
    (0..data.len())
        .map(|i| bce_with_logit(model.logit(data.input(i)), data.y[i]))
        .sum::<f64>()
        / data.len() as f64
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
}

/// Minibatch Adam on binary cross-entropy with early stopping on the
/// validation loss. Falls back to the training loss when `val` is empty.
pub fn train(
    arch: Architecture,
    features: FeatureSet,
    stats: NormStats,
    train_set: &Examples,
    val: &Examples,
    cfg: &TrainConfig,
) -> Result<Trained, TrainError> {
    if cfg.batch_size == 0 {
        return Err(TrainError::BatchSize);
    }
    if train_set.is_empty() {
        return Err(TrainError::Empty);
    }
    let mut model = SequenceClassifier::new(arch, features, stats, cfg.seed);
    let n_params = arch.param_count();
    let mut adam = Adam::new(n_params);
    let mut grad = vec![0.0; n_params];
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut rng = stream_rng(cfg.seed, 0x7EA1);

    let mut history = Vec::new();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut since_best = 0;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                total += model.accumulate_gradient(train_set.input(i), train_set.y[i], &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(model.params_mut(), &grad, cfg);
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = if val.is_empty() {
            train_loss
        } else {
            mean_loss(&model, val)
        };
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: if train_loss.is_finite() { val_loss } else { train_loss },
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, model.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    Ok(Trained {
        model: best.1,
        history,
        best_epoch: best.2,
    })
}
