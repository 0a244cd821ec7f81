//! Per-record multilayer regressor: sees only the slot's own bid and tick
//! plus campaign features, never the history or earlier records of the day.

use std::f64::consts::TAU;

use bid2x_tensor::{Graph, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ModelInput, NormStats, PreparedSample, C0, C2, COL_TICK};
use crate::error::{Error, Result};
use crate::eval::Predictor;
use crate::model::{Init, Mlp, ParamStore};
use crate::optim::{clip_global_norm, Adam, AdamConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            hidden: 64,
            epochs: 20,
            batch_size: 256,
            lr: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MlpBaseline {
    pub params: ParamStore,
    pub net: Mlp,
    pub stats: NormStats,
}

/// Bid, tick, the tick's phase on the day circle, and the campaign features.
pub fn record_features(input: &ModelInput, slot: usize) -> Vec<f64> {
    let row = &input.today.data()[slot * C0..(slot + 1) * C0];
    let phase = TAU * row[COL_TICK];
    let mut f = vec![row[0], row[COL_TICK], phase.sin(), phase.cos()];
    f.extend_from_slice(&input.continuous);
    f
}

fn design(samples: &[PreparedSample]) -> (Vec<Vec<f64>>, Vec<[f64; C2]>) {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for s in samples {
        for (slot, t) in s.targets.norm.iter().enumerate() {
            x.push(record_features(&s.input, slot));
            y.push(*t);
        }
    }
    (x, y)
}

impl MlpBaseline {
    /// Least squares on normalized targets.
    pub fn fit(samples: &[PreparedSample], stats: &NormStats, cfg: &BaselineConfig) -> Result<MlpBaseline> {
        if cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
            return Err(Error::Config("baseline: hidden, batch_size and lr must be positive".into()));
        }
        let (x, y) = design(samples);
        let width = x.first().map(Vec::len).ok_or_else(|| Error::Data("baseline needs records".into()))?;
        let mut params = ParamStore::default();
        let net = Mlp::new(
            &mut Init {
                store: &mut params,
                rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            },
            "baseline",
            width,
            cfg.hidden,
            C2,
        );
        let mut adam = Adam::new(
            AdamConfig {
                lr: cfg.lr,
                ..AdamConfig::default()
            },
            &params,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..x.len()).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let n = chunk.len();
                let xs = Tensor::new(vec![n, width], chunk.iter().flat_map(|&i| x[i].clone()).collect())?;
                let ys = Tensor::new(vec![n, C2], chunk.iter().flat_map(|&i| y[i]).collect())?;
                let mut g = Graph::new();
                let p = params.bind(&mut g, true);
                let xv = g.constant(xs);
                let yv = g.constant(ys);
                let pred = net.forward(&mut g, &p, xv)?;
                let r = g.sub(pred, yv)?;
                let r2 = g.square(r);
                let s = g.sum(r2);
                let loss = g.scale(s, 1.0 / n as f64);
                let grads = g.backward(loss)?;
                let mut gs: Vec<Tensor> = p
                    .0
                    .iter()
                    .zip(params.ids())
                    .map(|(v, id)| {
                        grads
                            .get(*v)
                            .cloned()
                            .unwrap_or_else(|| Tensor::zeros(params.get(id).shape().to_vec()))
                    })
                    .collect();
                clip_global_norm(&mut gs, 1.0);
                adam.update(&mut params, &gs)?;
            }
        }
        Ok(MlpBaseline {
            params,
            net,
            stats: stats.clone(),
        })
    }
}

impl Predictor for MlpBaseline {
    fn predict_raw(&self, input: &ModelInput) -> Result<Vec<[f64; C2]>> {
        let n = input.n_valid;
        let rows: Vec<Vec<f64>> = (0..n).map(|s| record_features(input, s)).collect();
        let width = rows[0].len();
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let xv = g.constant(Tensor::new(vec![n, width], rows.concat())?);
        let out = self.net.forward(&mut g, &p, xv)?;
        let v = g.value(out).data();
        Ok((0..n)
            .map(|s| std::array::from_fn(|i| self.stats.targets[i].inverse(v[s * C2 + i]).max(0.0)))
            .collect())
    }
}
