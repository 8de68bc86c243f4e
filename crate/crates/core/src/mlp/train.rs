use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_cross_entropy, top1_accuracy, Layer, MlpModel, Mode, Samples, Scalar};
use crate::util::derive_seed;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub lr_drop_factor: f64,
    /// The learning rate is multiplied by `lr_drop_factor` every this many epochs.
    pub lr_drop_epoch: usize,
    pub momentum: f64,
    pub l2: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Only the head is updated.
    pub freeze_base: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 0.1,
            lr_drop_factor: 0.1,
            lr_drop_epoch: 90,
            momentum: 0.9,
            l2: 1e-4,
            max_epochs: 100,
            batch_size: 128,
            seed: 0,
            freeze_base: false,
        }
    }
}

impl TrainConfig {
    pub fn blockage_default() -> Self {
        Self {
            max_epochs: 50,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr >= 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::config("initial_lr must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(self.l2 >= 0.0) {
            return Err(Error::config("l2 must be non-negative"));
        }
        if !(self.lr_drop_factor > 0.0) {
            return Err(Error::config("lr_drop_factor must be positive"));
        }
        if self.batch_size == 0 || self.lr_drop_epoch == 0 {
            return Err(Error::config("batch_size and lr_drop_epoch must be positive"));
        }
        Ok(())
    }
}

/// Learning rate used during the zero-based `epoch`.
pub fn learning_rate(config: &TrainConfig, epoch: usize) -> f64 {
    config.initial_lr * config.lr_drop_factor.powi((epoch / config.lr_drop_epoch) as i32)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// One-based.
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub validation_top1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    /// First epoch whose validation top-1 reaches `threshold`.
    pub fn epochs_to_reach(&self, threshold: f64) -> Option<usize> {
        self.epochs
            .iter()
            .find(|e| e.validation_top1.is_some_and(|a| a >= threshold))
            .map(|e| e.epoch)
    }

    pub fn final_validation_top1(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.validation_top1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,learning_rate,train_loss,validation_top1\n");
        for e in &self.epochs {
            let v = e.validation_top1.map_or(String::new(), |a| a.to_string());
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.learning_rate, e.train_loss, v));
        }
        out
    }
}

struct Velocity<T> {
    layers: Vec<(Array2<T>, Array1<T>)>,
}

fn diagnostic<T: Scalar>(model: &MlpModel<T>, epoch: usize, batch: usize, lr: f64, loss: f64) -> Error {
    let norms: Vec<String> = model
        .layers()
        .enumerate()
        .map(|(i, l)| {
            let w: f64 = l.weights.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
            let b: f64 = l.biases.iter().map(|v| v.as_f64().powi(2)).sum::<f64>().sqrt();
            format!("layer {i}: |W| = {w:.4e}, |b| = {b:.4e}")
        })
        .collect();
    Error::Diverged(format!(
        "loss {loss} at epoch {} batch {batch} (lr {lr:e}); {}",
        epoch + 1,
        norms.join("; ")
    ))
}

fn step<T: Scalar>(layer: &mut Layer<T>, grad: &Layer<T>, velocity: &mut (Array2<T>, Array1<T>), mu: T, lr: T) {
    velocity.0.zip_mut_with(&grad.weights, |v, &g| *v = mu * *v - lr * g);
    velocity.1.zip_mut_with(&grad.biases, |v, &g| *v = mu * *v - lr * g);
    layer.weights += &velocity.0;
    layer.biases += &velocity.1;
}

/// Minibatch SGD with momentum. Returns the per-epoch history; the model is
/// updated in place.
pub fn train<T: Scalar>(
    model: &mut MlpModel<T>,
    data: &Samples<T>,
    config: &TrainConfig,
    validation: Option<&Samples<T>>,
) -> Result<TrainHistory> {
    config.validate()?;
    model.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if data.inputs.ncols() != model.input_dim() || data.targets.ncols() != model.output_dim() {
        return Err(Error::invalid(format!(
            "training data is {} -> {}, model is {} -> {}",
            data.inputs.ncols(),
            data.targets.ncols(),
            model.input_dim(),
            model.output_dim()
        )));
    }
    let mut velocity = Velocity {
        layers: model
            .layers()
            .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.biases.len())))
            .collect(),
    };
    let mu = T::from_f64(config.momentum);
    let n = data.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = TrainHistory::default();
    let base_len = model.base.len();

    for epoch in 0..config.max_epochs {
        let lr = learning_rate(config, epoch);
        let lr_t = T::from_f64(lr);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64)));
        let mut loss_sum = 0.0;
        for (b, rows) in order.chunks(config.batch_size).enumerate() {
            let batch = data.select(rows);
            let dropout_seed = derive_seed(config.seed ^ 0xD0D0_D0D0, (epoch * n + b) as u64);
            let cache = model.forward(batch.inputs.view(), Mode::Train(dropout_seed))?;
            let loss = batch_cross_entropy(&cache.probabilities, batch.targets.view());
            if !loss.is_finite() {
                return Err(diagnostic(model, epoch, b, lr, loss));
            }
            loss_sum += loss * rows.len() as f64;
            let grads = model.backward(&cache, batch.targets.view(), config.l2);
            let frozen = if config.freeze_base { base_len } else { 0 };
            let pairs = model
                .layers_mut()
                .zip(grads.base.iter().chain(std::iter::once(&grads.head)))
                .zip(velocity.layers.iter_mut())
                .skip(frozen);
            for ((layer, grad), vel) in pairs {
                step(layer, grad, vel, mu, lr_t);
            }
        }
        if !model.is_finite() {
            return Err(diagnostic(model, epoch, n.div_ceil(config.batch_size), lr, f64::NAN));
        }
        let validation_top1 = validation.map(|v| top1_accuracy(model, v)).transpose()?;
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: loss_sum / n as f64,
            validation_top1,
        });
    }
    Ok(history)
}
