//! Deterministic mini-batch training.

use std::io::Write;
use std::path::Path;

use bid2x_tensor::{Graph, Tensor, TensorError};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{PreparedSample, TARGETS};
use crate::error::{Error, Result};
use crate::eval::{evaluate, ModelView};
use crate::loss::{model_loss, LossReport};
use crate::model::{Bid2x, ParamStore};
use crate::optim::{clip_global_norm, Adam, AdamConfig};
use crate::data::NormStats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub gamma: f64,
    pub seed: u64,
    pub grad_clip: f64,
    /// Stop after this many optimizer steps (0 = no limit).
    pub max_steps: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            batch_size: 32,
            epochs: 10,
            gamma: 1.0,
            seed: 0,
            grad_clip: 1.0,
            max_steps: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || !(self.gamma >= 0.0) || !(self.grad_clip >= 0.0) {
            return Err(Error::Config(
                "train: lr and batch_size must be positive, gamma and grad_clip non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetricRecord {
    Step {
        step: usize,
        zip_loss: f64,
        bce: f64,
        mse: f64,
        cum_loss: f64,
        total: f64,
        lr: f64,
    },
    Epoch {
        epoch: usize,
        split: String,
        target: String,
        #[serde(rename = "MAE")]
        mae: f64,
        #[serde(rename = "RMSE")]
        rmse: f64,
    },
    EpochLoss {
        epoch: usize,
        split: String,
        loss: f64,
    },
}

pub fn write_metrics(path: &Path, metrics: &[MetricRecord]) -> Result<()> {
    let mut out = Vec::new();
    for m in metrics {
        let line = serde_json::to_string(m).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Resumable optimizer state.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub adam: Adam,
    pub epoch: usize,
    pub step: usize,
    pub rng: ChaCha8Rng,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss (the final ones without validation data).
    pub best: ParamStore,
    pub best_epoch: Option<usize>,
    pub best_val_loss: Option<f64>,
    pub state: TrainState,
    pub metrics: Vec<MetricRecord>,
}

/// Loss and gradients of one batch. Gradients are summed sample by sample in
/// batch order, so the result never depends on anything but the inputs.
pub fn batch_gradients(model: &Bid2x, batch: &[&PreparedSample], gamma: f64, step: usize) -> Result<(LossReport, Vec<Tensor>)> {
    let denom: usize = batch.iter().map(|s| s.targets.raw.len()).sum();
    let mut grads: Vec<Tensor> = model
        .params
        .ids()
        .map(|id| Tensor::zeros(model.params.get(id).shape().to_vec()))
        .collect();
    let mut report = LossReport::default();
    for sample in batch {
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, true);
        let fwd = model.forward(&mut g, &p, &sample.input)?;
        let lv = model_loss(&mut g, &fwd, &sample.targets, gamma, denom as f64)?;
        let r = LossReport::read(&g, &lv, sample.targets.raw.len());
        if let Some(term) = r.non_finite_term() {
            return Err(Error::Numeric {
                step,
                term: term.into(),
                detail: format!("loss report {r:?}"),
            });
        }
        report.accumulate(&r);
        let sample_grads = g.backward(lv.total).map_err(|e| match e {
            TensorError::NonFinite { .. } => Error::Numeric {
                step,
                term: "total".into(),
                detail: e.to_string(),
            },
            other => other.into(),
        })?;
        for (k, v) in p.0.iter().enumerate() {
            if let Some(gr) = sample_grads.get(*v) {
                for (a, b) in grads[k].data_mut().iter_mut().zip(gr.data()) {
                    *a += b;
                }
            }
        }
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric {
            step,
            term: "gradient".into(),
            detail: "non-finite gradient entry".into(),
        });
    }
    Ok((report, grads))
}

/// Mean loss over `samples` without updating anything.
pub fn mean_loss(model: &Bid2x, samples: &[PreparedSample], gamma: f64) -> Result<LossReport> {
    let denom: usize = samples.iter().map(|s| s.targets.raw.len()).sum();
    if denom == 0 {
        return Err(Error::Data("no samples to score".into()));
    }
    let mut report = LossReport::default();
    for sample in samples {
        let mut g = Graph::new();
        let p = model.params.bind(&mut g, false);
        let fwd = model.forward(&mut g, &p, &sample.input)?;
        let lv = model_loss(&mut g, &fwd, &sample.targets, gamma, denom as f64)?;
        report.accumulate(&LossReport::read(&g, &lv, sample.targets.raw.len()));
    }
    Ok(report)
}

pub fn fresh_state(model: &Bid2x, cfg: &TrainConfig) -> TrainState {
    TrainState {
        adam: Adam::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            &model.params,
        ),
        epoch: 0,
        step: 0,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
    }
}

/// Trains `model` in place for `cfg.epochs` epochs.
pub fn train(
    model: &mut Bid2x,
    stats: &NormStats,
    train: &[PreparedSample],
    val: &[PreparedSample],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let state = fresh_state(model, cfg);
    train_from(model, stats, train, val, cfg, state)
}

/// Continues training from `state`.
pub fn train_from(
    model: &mut Bid2x,
    stats: &NormStats,
    train: &[PreparedSample],
    val: &[PreparedSample],
    cfg: &TrainConfig,
    mut state: TrainState,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() && cfg.epochs > 0 {
        return Err(Error::Data("training split is empty".into()));
    }
    state.adam.config.lr = cfg.lr;
    let mut metrics = Vec::new();
    let mut best = model.params.clone();
    let mut best_epoch = None;
    let mut best_val_loss: Option<f64> = None;
    let mut order: Vec<usize> = (0..train.len()).collect();
    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut state.rng);
        for chunk in order.chunks(cfg.batch_size) {
            if cfg.max_steps > 0 && state.step >= cfg.max_steps {
                break 'epochs;
            }
            let batch: Vec<&PreparedSample> = chunk.iter().map(|&i| &train[i]).collect();
            let (report, mut grads) = batch_gradients(model, &batch, cfg.gamma, state.step)?;
            clip_global_norm(&mut grads, cfg.grad_clip);
            state.adam.update(&mut model.params, &grads)?;
            metrics.push(MetricRecord::Step {
                step: state.step,
                zip_loss: report.zip_loss,
                bce: report.bce_part,
                mse: report.mse_part,
                cum_loss: report.cum_loss,
                total: report.total,
                lr: cfg.lr,
            });
            debug!("step {} total {:.5}", state.step, report.total);
            state.step += 1;
        }
        let epoch = state.epoch;
        state.epoch += 1;
        if val.is_empty() {
            best = model.params.clone();
            continue;
        }
        let vl = mean_loss(model, val, cfg.gamma)?.total;
        metrics.push(MetricRecord::EpochLoss {
            epoch,
            split: "val".into(),
            loss: vl,
        });
        let report = evaluate(&ModelView { model, stats }, val, "val")?;
        for (i, t) in report.targets.iter().enumerate() {
            metrics.push(MetricRecord::Epoch {
                epoch,
                split: "val".into(),
                target: TARGETS[i].into(),
                mae: t.mae,
                rmse: t.rmse,
            });
        }
        info!("epoch {epoch} val loss {vl:.5} cost MAE {:.4}", report.mae(0));
        if best_val_loss.is_none_or(|b| vl < b) {
            best_val_loss = Some(vl);
            best_epoch = Some(epoch);
            best = model.params.clone();
        }
    }
    if best_epoch.is_none() && cfg.epochs > 0 {
        best = model.params.clone();
    }
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val_loss,
        state,
        metrics,
    })
}
