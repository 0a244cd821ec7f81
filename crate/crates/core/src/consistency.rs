//! Heads-only fit of the zero-inflated loss against oracle samples.
//!
//! Cost labels are drawn from one scenario at random `(bid, tick)` points and
//! scaled linearly, so the conditional mean given a win is known in closed
//! form. After training, the learned win probability and the product `p·ỹ`
//! are compared with the oracle on a grid the sampler never hits exactly.

use std::f64::consts::TAU;

use bid2x_tensor::{Graph, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::zip_terms;
use crate::model::{Init, Mlp, ParamStore};
use crate::optim::{Adam, AdamConfig};
use crate::synth::{sample_record, ScenarioSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConsistencyConfig {
    pub samples: usize,
    /// Points per axis of the evaluation grid.
    pub grid: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Bids are drawn log-uniformly from `bid_range` times the scenario's `kappa`.
    pub bid_range: [f64; 2],
    pub seed: u64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        ConsistencyConfig {
            samples: 200_000,
            grid: 20,
            hidden: 32,
            epochs: 40,
            batch_size: 500,
            lr: 3e-3,
            bid_range: [0.1, 5.0],
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub bid: f64,
    pub tick: u32,
    pub p_true: f64,
    pub p_learned: f64,
    /// `p·g` in the scaled label space.
    pub product_true: f64,
    pub product_learned: f64,
    pub magnitude_learned: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub points: Vec<GridPoint>,
    pub mean_abs_p_error: f64,
    pub mean_rel_product_error: f64,
    pub label_scale: f64,
}

struct Features {
    shift: f64,
    scale: f64,
    t_max: f64,
}

impl Features {
    fn row(&self, bid: f64, tick: u32) -> [f64; 3] {
        let phase = TAU * tick as f64 / self.t_max;
        [(bid.ln() - self.shift) / self.scale, phase.sin(), phase.cos()]
    }
}

fn heads(store: &mut ParamStore, hidden: usize, seed: u64) -> (Mlp, Mlp) {
    let mut init = Init {
        store,
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let cls = Mlp::new(&mut init, "cls", 3, hidden, 1);
    let val = Mlp::new(&mut init, "val", 3, hidden, 1);
    (cls, val)
}

/// Evenly spaced in log bid and in tick, both ends included.
pub fn evaluation_grid(spec: &ScenarioSpec, cfg: &ConsistencyConfig) -> Vec<(f64, u32)> {
    let [lo, hi] = cfg.bid_range.map(|f| (f * spec.kappa).ln());
    // stay inside the sampled range so the grid is interpolation, not extrapolation
    let (lo, hi) = (lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo));
    let n = cfg.grid;
    let at = |k: usize, a: f64, b: f64| if n == 1 { a } else { a + (b - a) * k as f64 / (n - 1) as f64 };
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let tick = at(j, 0.0, (spec.t_max - 1) as f64).round() as u32;
            out.push((at(i, lo, hi).exp(), tick));
        }
    }
    out
}

pub fn run_consistency(spec: &ScenarioSpec, cfg: &ConsistencyConfig) -> Result<ConsistencyReport> {
    spec.validate()?;
    let [lo, hi] = cfg.bid_range;
    if cfg.samples == 0 || cfg.grid == 0 || cfg.hidden == 0 || cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("consistency: sizes and lr must be positive".into()));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Config("consistency: bid_range must satisfy 0 < low < high".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (llo, lhi) = ((lo * spec.kappa).ln(), (hi * spec.kappa).ln());
    let mut draws = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let bid = rng.random_range(llo..lhi).exp();
        let tick = rng.random_range(0..spec.t_max as u32);
        draws.push(sample_record(spec, bid, tick, &mut rng)?);
    }
    let wins: Vec<f64> = draws.iter().filter(|r| r.cost > 0.0).map(|r| r.cost).collect();
    if wins.is_empty() {
        return Err(Error::Data("no winning samples".into()));
    }
    let label_scale = wins.iter().sum::<f64>() / wins.len() as f64;
    let feats = Features {
        shift: (llo + lhi) / 2.0,
        scale: (lhi - llo) / 12f64.sqrt(),
        t_max: spec.t_max as f64,
    };
    let x: Vec<[f64; 3]> = draws.iter().map(|r| feats.row(r.bid, r.tick)).collect();
    let y_raw: Vec<f64> = draws.iter().map(|r| r.cost).collect();
    let y_norm: Vec<f64> = y_raw.iter().map(|c| c / label_scale).collect();

    let mut params = ParamStore::default();
    let (cls, val) = heads(&mut params, cfg.hidden, cfg.seed);
    let mut adam = Adam::new(
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
        &params,
    );
    let n = draws.len();
    let total_steps = (cfg.epochs * n.div_ceil(cfg.batch_size)) as f64;
    let mut step = 0.0;
    for _ in 0..cfg.epochs {
        for start in (0..n).step_by(cfg.batch_size) {
            // linear decay to zero averages out label noise late in training
            adam.config.lr = cfg.lr * (1.0 - step / total_steps);
            step += 1.0;
            let end = (start + cfg.batch_size).min(n);
            let m = end - start;
            let mut g = Graph::new();
            let p = params.bind(&mut g, true);
            let xv = g.constant(Tensor::new(vec![m, 3], x[start..end].concat())?);
            let logit = cls.forward(&mut g, &p, xv)?;
            let prob = g.sigmoid(logit);
            let mag = val.forward(&mut g, &p, xv)?;
            let y_hat = g.mul(prob, mag)?;
            let (bce, mse) = zip_terms(
                &mut g,
                Some(prob),
                y_hat,
                &y_raw[start..end],
                &y_norm[start..end],
                &vec![1.0; m],
                m as f64,
            )?;
            let bce = bce.expect("classifier present");
            let loss = g.add(bce, mse)?;
            let grads = g.backward(loss)?;
            let gs: Vec<Tensor> = p
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
            adam.update(&mut params, &gs)?;
        }
    }

    let grid = evaluation_grid(spec, cfg);
    let mut g = Graph::new();
    let p = params.bind(&mut g, false);
    let rows: Vec<f64> = grid.iter().flat_map(|&(b, t)| feats.row(b, t)).collect();
    let xv = g.constant(Tensor::new(vec![grid.len(), 3], rows)?);
    let logit = cls.forward(&mut g, &p, xv)?;
    let prob = g.sigmoid(logit);
    let mag = val.forward(&mut g, &p, xv)?;
    let mut points = Vec::with_capacity(grid.len());
    for (k, &(bid, tick)) in grid.iter().enumerate() {
        let p_true = spec.true_win_prob(bid, tick)?;
        let g_true = spec.true_expected_cost(bid, tick)? / label_scale;
        let p_learned = g.value(prob).data()[k];
        let magnitude_learned = g.value(mag).data()[k];
        points.push(GridPoint {
            bid,
            tick,
            p_true,
            p_learned,
            product_true: p_true * g_true,
            product_learned: p_learned * magnitude_learned,
            magnitude_learned,
        });
    }
    let count = points.len() as f64;
    let mean_abs_p_error = points.iter().map(|q| (q.p_learned - q.p_true).abs()).sum::<f64>() / count;
    let mean_rel_product_error = points
        .iter()
        .map(|q| (q.product_learned - q.product_true).abs() / q.product_true)
        .sum::<f64>()
        / count;
    Ok(ConsistencyReport {
        points,
        mean_abs_p_error,
        mean_rel_product_error,
        label_scale,
    })
}
