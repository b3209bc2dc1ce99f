use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{backward_trace, forward_trace, loss, LstmNetwork, LstmParams};
use crate::alignment::TensorBatch;
use crate::error::{Error, Result};
use crate::rng::RandomSeed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub cells: Vec<usize>,
    pub epochs_max: usize,
    pub batch_size: usize,
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub peepholes: bool,
    pub seed: RandomSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            cells: vec![32],
            epochs_max: 50,
            batch_size: 32,
            dropout: 0.0,
            patience: None,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
            peepholes: false,
            seed: RandomSeed(0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() || self.cells.contains(&0) {
            return Err(Error::config("cells", "need at least one layer of width >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if self.epochs_max == 0 {
            return Err(Error::config("epochs_max", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        Ok(())
    }
}

/// Per-feature z-score standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaler {
    pub fn identity(features: usize) -> Self {
        Scaler {
            mean: vec![0.0; features],
            sd: vec![1.0; features],
        }
    }

    /// Statistics over every timestep of every sequence. Constant features
    /// get sd 1 so they map to zero.
    pub fn fit(batch: &TensorBatch) -> Self {
        let f = batch.features;
        let rows = batch.batch * batch.timesteps;
        let mut mean = vec![0.0; f];
        for r in batch.data.chunks(f) {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= rows.max(1) as f64);
        let mut var = vec![0.0; f];
        for r in batch.data.chunks(f) {
            for k in 0..f {
                var[k] += (r[k] - mean[k]).powi(2);
            }
        }
        let sd = var
            .into_iter()
            .map(|v| {
                let s = (v / rows.max(1) as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, sd }
    }

    pub fn transform_slice(&self, data: &[f64]) -> Vec<f64> {
        let f = self.mean.len();
        data.iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i % f]) / self.sd[i % f])
            .collect()
    }

    pub fn transform(&self, batch: &TensorBatch) -> Result<TensorBatch> {
        if batch.features != self.mean.len() {
            return Err(Error::shape(format!(
                "batch has {} features, scaler expects {}",
                batch.features,
                self.mean.len()
            )));
        }
        let mut out = batch.clone();
        out.data = self.transform_slice(&batch.data);
        Ok(out)
    }
}

/// Loss trajectory of one training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    /// 1-based epoch whose parameters were returned.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, cfg: &TrainConfig, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let lr = cfg.learning_rate * (1.0 - cfg.beta2.powi(self.t)).sqrt()
            / (1.0 - cfg.beta1.powi(self.t));
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            params[i] -= lr * self.m[i] / (self.v[i].sqrt() + cfg.epsilon);
        }
    }
}

fn dropout_masks<R: Rng>(params: &LstmParams, rate: f64, rng: &mut R) -> Vec<Vec<f64>> {
    if rate == 0.0 {
        return Vec::new();
    }
    let keep = 1.0 - rate;
    params
        .layers
        .iter()
        .map(|l| {
            (0..l.inputs)
                .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Trains a network on `batch`; see [`train_with_report`].
pub fn train(
    batch: &TensorBatch,
    config: &TrainConfig,
    validation: Option<&TensorBatch>,
) -> Result<LstmNetwork> {
    train_with_report(batch, config, validation).map(|(n, _)| n)
}

/// Minibatch Adam on the mean squared error with full BPTT gradients.
///
/// With a validation batch, training stops after `patience` epochs without
/// improvement and the best-validation parameters are returned; without one,
/// the parameters after the last epoch are returned.
pub fn train_with_report(
    batch: &TensorBatch,
    config: &TrainConfig,
    validation: Option<&TensorBatch>,
) -> Result<(LstmNetwork, TrainReport)> {
    config.validate()?;
    if batch.batch < 2 {
        return Err(Error::shape("training needs at least 2 sequences"));
    }
    if let Some(v) = validation {
        if v.features != batch.features || v.timesteps != batch.timesteps {
            return Err(Error::shape("validation batch shape differs from training batch"));
        }
    }
    let scaler = Scaler::fit(batch);
    let train_set = scaler.transform(batch)?;
    let val_set = validation
        .filter(|v| v.batch > 0)
        .map(|v| scaler.transform(v))
        .transpose()?;

    let mut params = LstmParams::init(
        batch.features,
        &config.cells,
        config.peepholes,
        config.seed.derive("init", 0),
    )?;
    let mut adam = Adam {
        m: vec![0.0; params.len()],
        v: vec![0.0; params.len()],
        t: 0,
    };
    let mut report = TrainReport::default();
    let mut best: Option<(f64, LstmParams)> = None;
    let mut wait = 0;
    let mut order: Vec<usize> = (0..train_set.batch).collect();
    let mut grad = vec![0.0; params.len()];
    let ts = train_set.timesteps;

    for epoch in 1..=config.epochs_max {
        let mut shuffle_rng = config.seed.derive("shuffle", epoch as u64).rng();
        let mut drop_rng = config.seed.derive("dropout", epoch as u64).rng();
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let scale = 1.0 / chunk.len() as f64;
            let mut chunk_loss = 0.0;
            for &b in chunk {
                let masks = dropout_masks(&params, config.dropout, &mut drop_rng);
                let (y, traces) = forward_trace(&params, train_set.sequence(b), ts, &masks);
                let e = y - train_set.targets[b];
                chunk_loss += e * e * scale;
                backward_trace(&params, &traces, ts, 2.0 * e * scale, &mut grad);
            }
            if !chunk_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence {
                    epoch,
                    loss: chunk_loss,
                });
            }
            epoch_loss += chunk_loss * chunk.len() as f64;
            adam.step(config, &mut params.data, &grad);
        }
        let epoch_loss = epoch_loss / train_set.batch as f64;
        report.train_loss.push(epoch_loss);

        let Some(val) = &val_set else {
            report.best_epoch = epoch;
            continue;
        };
        let vl = loss(&params, val)?;
        if !vl.is_finite() {
            return Err(Error::Divergence { epoch, loss: vl });
        }
        report.validation_loss.push(vl);
        if best.as_ref().is_none_or(|(b, _)| vl < *b) {
            best = Some((vl, params.clone()));
            report.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if config.patience.is_some_and(|p| wait >= p) {
                report.stopped_early = true;
                break;
            }
        }
    }
    if let Some((_, p)) = best {
        params = p;
    }
    log::debug!(
        "trained {:?} for {} epochs, best epoch {}",
        config.cells,
        report.train_loss.len(),
        report.best_epoch
    );
    Ok((
        LstmNetwork {
            params,
            config: config.clone(),
            scaler,
        },
        report,
    ))
}
