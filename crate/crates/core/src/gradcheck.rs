//! Finite-difference check of the whole model: every parameter tensor is an
//! input, the scalar is the batch loss.

use bid2x_tensor::gradcheck::{check, CheckOptions, CheckReport};
use bid2x_tensor::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::data::{NormStats, PreparedSample};
use crate::error::{Error, Result};
use crate::loss::model_loss;
use crate::model::{Bid2x, Bound, ModelConfig};
use crate::pipeline::synthetic_model_config;
use crate::synth::{default_scenarios, generate_dataset};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    pub t_max: usize,
    pub d_model: usize,
    pub samples: usize,
    /// Entries probed per parameter tensor.
    pub entries_per_tensor: usize,
    pub step: f64,
    pub floor: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            t_max: 16,
            d_model: 16,
            samples: 4,
            entries_per_tensor: 6,
            step: 1e-6,
            floor: 1e-3,
            gamma: 1.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradcheckReport {
    fn from_check(model: &Bid2x, r: &CheckReport) -> Self {
        GradcheckReport {
            tensors: model
                .params
                .ids()
                .zip(&r.inputs)
                .map(|(id, i)| TensorCheck {
                    name: model.params.name(id).to_string(),
                    checked: i.checked,
                    max_rel_error: i.max_rel_error,
                })
                .collect(),
            max_rel_error: r.max_rel_error(),
            checked: r.checked(),
        }
    }
}

/// Checks the gradient of the mean batch loss of `model` on `samples`.
pub fn check_model(model: &Bid2x, samples: &[PreparedSample], gamma: f64, opts: &CheckOptions) -> Result<GradcheckReport> {
    let denom: usize = samples.iter().map(|s| s.targets.raw.len()).sum();
    if denom == 0 {
        return Err(Error::Data("gradcheck needs at least one sample".into()));
    }
    let inputs: Vec<Tensor> = model.params.ids().map(|id| model.params.get(id).clone()).collect();
    let build = |g: &mut Graph, vars: &[Var]| -> Result<Var> {
        let p = Bound(vars.to_vec());
        let mut total = None;
        for s in samples {
            let fwd = model.forward(g, &p, &s.input)?;
            let lv = model_loss(g, &fwd, &s.targets, gamma, denom as f64)?;
            total = Some(match total {
                Some(t) => g.add(t, lv.total)?,
                None => lv.total,
            });
        }
        Ok(total.expect("at least one sample"))
    };
    let r = check(&inputs, build, opts)?;
    Ok(GradcheckReport::from_check(model, &r))
}

/// Small generated batch and a freshly initialized model of the configured size.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if cfg.samples == 0 || cfg.entries_per_tensor == 0 {
        return Err(Error::Config("gradcheck: samples and entries_per_tensor must be positive".into()));
    }
    let specs = default_scenarios(cfg.t_max, cfg.seed);
    let per = cfg.samples.div_ceil(specs.len()).max(1);
    let ds = generate_dataset(&specs, per)?;
    let pairs: Vec<_> = ds.pairs.into_iter().step_by(per).take(cfg.samples).collect();
    let stats = NormStats::fit(&pairs, cfg.t_max)?;
    let samples = PreparedSample::prepare_all(&pairs, &stats)?;
    let mc = synthetic_model_config(
        cfg.t_max,
        &ModelConfig {
            d_model: cfg.d_model,
            ..ModelConfig::default()
        },
    );
    let model = Bid2x::new(mc, cfg.seed)?;
    check_model(
        &model,
        &samples,
        cfg.gamma,
        &CheckOptions {
            step: cfg.step,
            floor: cfg.floor,
            max_entries: Some(cfg.entries_per_tensor),
        },
    )
}
