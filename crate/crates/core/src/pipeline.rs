//! End-to-end workflows built from the lower modules: split, normalize,
//! train, fine-tune, zero-shot evaluation and the width sweep.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::data::{split_dataset, subsample_campaigns, DatasetHeader, DayPair, NormStats, PreparedSample};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::model::{Bid2x, ModelConfig};
use crate::synth::CONTEXT_LEN;
use crate::train::{fresh_state, mean_loss, train, train_from, MetricRecord, TrainConfig};

#[derive(Clone, Debug, Default)]
pub struct Splits {
    pub train: Vec<DayPair>,
    pub val: Vec<DayPair>,
    pub test: Vec<DayPair>,
}

impl Splits {
    /// Campaign-disjoint train/val/test split.
    pub fn new(pairs: &[DayPair], ratios: [f64; 3], seed: u64) -> Result<Splits> {
        let idx = split_dataset(pairs, &ratios, seed)?;
        let take = |k: usize| idx[k].iter().map(|&i| pairs[i].clone()).collect();
        Ok(Splits {
            train: take(0),
            val: take(1),
            test: take(2),
        })
    }
}

/// Splits scaled with statistics fitted on the training part.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub stats: NormStats,
    pub train: Vec<PreparedSample>,
    pub val: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
    pub train_scenarios: Vec<u32>,
}

pub fn scenarios_of(pairs: &[DayPair]) -> Vec<u32> {
    let mut v: Vec<u32> = pairs.iter().map(|p| p.campaign.scenario).collect();
    v.sort_unstable();
    v.dedup();
    v
}

impl Prepared {
    pub fn new(splits: &Splits, t_max: usize) -> Result<Prepared> {
        let stats = NormStats::fit(&splits.train, t_max)?;
        Prepared::with_stats(splits, stats)
    }

    pub fn with_stats(splits: &Splits, stats: NormStats) -> Result<Prepared> {
        Ok(Prepared {
            train: PreparedSample::prepare_all(&splits.train, &stats)?,
            val: PreparedSample::prepare_all(&splits.val, &stats)?,
            test: PreparedSample::prepare_all(&splits.test, &stats)?,
            train_scenarios: scenarios_of(&splits.train),
            stats,
        })
    }
}

/// Fills the data-dependent fields of `base` from a dataset header.
pub fn model_config_for(header: &DatasetHeader, base: &ModelConfig) -> ModelConfig {
    ModelConfig {
        t_max: header.t_max,
        adv_cat_vocab: header.adv_cat_vocab,
        prod_cat_vocab: header.prod_cat_vocab,
        n_continuous: 1 + header.context_len,
        ..base.clone()
    }
}

/// Default model shape for generated data with `t_max` ticks.
pub fn synthetic_model_config(t_max: usize, base: &ModelConfig) -> ModelConfig {
    ModelConfig {
        t_max,
        n_continuous: 1 + CONTEXT_LEN,
        ..base.clone()
    }
}

/// Initializes from `train_cfg.seed` and trains; the checkpoint keeps the
/// best-validation parameters and the final optimizer state.
pub fn fit(model_cfg: &ModelConfig, train_cfg: &TrainConfig, data: &Prepared) -> Result<(Checkpoint, Vec<MetricRecord>)> {
    let mut model = Bid2x::new(model_cfg.clone(), train_cfg.seed)?;
    let out = train(&mut model, &data.stats, &data.train, &data.val, train_cfg)?;
    model.params = out.best;
    Ok((
        Checkpoint {
            model,
            train_config: train_cfg.clone(),
            stats: data.stats.clone(),
            state: Some(out.state),
            train_scenarios: data.train_scenarios.clone(),
        },
        out.metrics,
    ))
}

/// Continues training on a seeded, campaign-disjoint `fraction` of `pairs`.
/// Inputs keep the checkpoint's normalization; the optimizer restarts.
pub fn finetune(
    ck: &Checkpoint,
    pairs: &[DayPair],
    val: &[DayPair],
    fraction: f64,
    cfg: &TrainConfig,
) -> Result<(Checkpoint, Vec<MetricRecord>)> {
    let subset = subsample_campaigns(pairs, fraction, cfg.seed)?;
    let train_samples = PreparedSample::prepare_all(&subset, &ck.stats)?;
    let val_samples = PreparedSample::prepare_all(val, &ck.stats)?;
    let mut model = ck.model.clone();
    let state = fresh_state(&model, cfg);
    let out = train_from(&mut model, &ck.stats, &train_samples, &val_samples, cfg, state)?;
    model.params = out.best;
    let mut seen = ck.train_scenarios.clone();
    seen.extend(scenarios_of(&subset));
    seen.sort_unstable();
    seen.dedup();
    Ok((
        Checkpoint {
            model,
            train_config: cfg.clone(),
            stats: ck.stats.clone(),
            state: Some(out.state),
            train_scenarios: seen,
        },
        out.metrics,
    ))
}

/// The campaigns [`finetune`] trains on for `(fraction, seed)`, and the rest.
pub fn few_shot_split(pairs: &[DayPair], fraction: f64, seed: u64) -> Result<(Vec<DayPair>, Vec<DayPair>)> {
    let subset = subsample_campaigns(pairs, fraction, seed)?;
    let ids: BTreeSet<&str> = subset.iter().map(|p| p.campaign.id.as_str()).collect();
    let rest = pairs
        .iter()
        .filter(|p| !ids.contains(p.campaign.id.as_str()))
        .cloned()
        .collect();
    Ok((subset, rest))
}

/// Evaluates on scenarios the checkpoint never trained on.
pub fn zero_shot_eval(ck: &Checkpoint, holdout: &[DayPair]) -> Result<EvalReport> {
    if let Some(p) = holdout.iter().find(|p| ck.train_scenarios.contains(&p.campaign.scenario)) {
        return Err(Error::Data(format!(
            "scenario {} was part of training; not a zero-shot holdout",
            p.campaign.scenario
        )));
    }
    let samples = PreparedSample::prepare_all(holdout, &ck.stats)?;
    evaluate(&ck.fitted(), &samples, "holdout")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub d_model: usize,
    pub seed: u64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// `(d_model, seed-averaged final validation loss)`.
    pub means: Vec<(usize, f64)>,
}

impl SweepReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:>8} {:>14}\n", "D", "val loss");
        for (d, l) in &self.means {
            s += &format!("{d:>8} {l:>14.6}\n");
        }
        s
    }
}

/// One model per `(D, seed)`; reports the validation loss of the final parameters.
pub fn scaling_sweep(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    d_list: &[usize],
    seeds: &[u64],
    data: &Prepared,
) -> Result<SweepReport> {
    if d_list.is_empty() || seeds.is_empty() {
        return Err(Error::Contract("sweep needs at least one width and one seed".into()));
    }
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for &d in d_list {
        let mut acc = 0.0;
        for &seed in seeds {
            let mc = ModelConfig {
                d_model: d,
                ..model_cfg.clone()
            };
            let tc = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let mut model = Bid2x::new(mc, seed)?;
            train(&mut model, &data.stats, &data.train, &[], &tc)?;
            let val_loss = mean_loss(&model, &data.val, tc.gamma)?.total;
            rows.push(SweepRow {
                d_model: d,
                seed,
                val_loss,
            });
            acc += val_loss;
        }
        means.push((d, acc / seeds.len() as f64));
    }
    Ok(SweepReport { rows, means })
}
