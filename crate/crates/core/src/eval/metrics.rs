use serde::{Deserialize, Serialize};

use crate::data::{ModelInput, NormStats, PreparedSample, C2, TARGETS};
use crate::error::{Error, Result};
use crate::model::{Bid2x, Fitted};
use crate::synth::ScenarioSpec;

/// Anything that maps inputs to raw-scale next-slot predictions.
pub trait Predictor {
    /// Point prediction for each valid slot.
    fn predict_raw(&self, input: &ModelInput) -> Result<Vec<[f64; C2]>>;

    /// Predictive mixture per slot and target: with probability `.0` the value
    /// is `.1`, otherwise exactly zero. Point predictors put all mass on the point.
    fn predict_mixture(&self, input: &ModelInput) -> Result<Vec<[(f64, f64); C2]>> {
        Ok(self
            .predict_raw(input)?
            .into_iter()
            .map(|row| row.map(|v| (1.0, v)))
            .collect())
    }
}

/// Borrowed model plus the statistics it was trained with.
#[derive(Clone, Copy, Debug)]
pub struct ModelView<'a> {
    pub model: &'a Bid2x,
    pub stats: &'a NormStats,
}

impl Fitted {
    pub fn view(&self) -> ModelView<'_> {
        ModelView {
            model: &self.model,
            stats: &self.stats,
        }
    }
}

impl Predictor for ModelView<'_> {
    fn predict_raw(&self, input: &ModelInput) -> Result<Vec<[f64; C2]>> {
        let out = self.model.predict(input)?;
        Ok(out
            .y_hat
            .iter()
            .map(|row| std::array::from_fn(|i| self.stats.targets[i].inverse(row[i])))
            .collect())
    }

    fn predict_mixture(&self, input: &ModelInput) -> Result<Vec<[(f64, f64); C2]>> {
        let out = self.model.predict(input)?;
        let zip = self.model.config.zero_inflated;
        Ok((0..out.len())
            .map(|s| {
                std::array::from_fn(|i| {
                    let st = &self.stats.targets[i];
                    if zip {
                        (out.p[s][i], st.inverse(out.magnitude[s][i]))
                    } else {
                        (1.0, st.inverse(out.y_hat[s][i]))
                    }
                })
            })
            .collect())
    }
}

impl Predictor for Fitted {
    fn predict_raw(&self, input: &ModelInput) -> Result<Vec<[f64; C2]>> {
        self.view().predict_raw(input)
    }

    fn predict_mixture(&self, input: &ModelInput) -> Result<Vec<[(f64, f64); C2]>> {
        self.view().predict_mixture(input)
    }
}

/// Predicts the scenario-level mean `p·g` at each slot's bid and tick.
#[derive(Clone, Debug)]
pub struct OraclePredictor {
    pub scenarios: Vec<ScenarioSpec>,
}

impl OraclePredictor {
    fn spec(&self, id: u32) -> Result<&ScenarioSpec> {
        self.scenarios
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Data(format!("no scenario {id} in oracle")))
    }
}

impl Predictor for OraclePredictor {
    fn predict_raw(&self, input: &ModelInput) -> Result<Vec<[f64; C2]>> {
        let spec = self.spec(input.scenario)?;
        input
            .controls
            .iter()
            .map(|&(bid, tick)| spec.true_mean(bid, tick))
            .collect()
    }
}

/// The same value for every slot.
#[derive(Clone, Debug)]
pub struct ConstantPredictor {
    pub value: [f64; C2],
}

impl ConstantPredictor {
    pub fn zero() -> Self {
        ConstantPredictor { value: [0.0; C2] }
    }

    /// Per-variable mean over every prediction target in `samples`.
    pub fn mean_of(samples: &[PreparedSample]) -> Result<Self> {
        let mut sum = [0.0; C2];
        let mut n = 0usize;
        for s in samples {
            for row in &s.targets.raw {
                for i in 0..C2 {
                    sum[i] += row[i];
                }
                n += 1;
            }
        }
        if n == 0 {
            return Err(Error::Data("no targets to average".into()));
        }
        Ok(ConstantPredictor {
            value: sum.map(|v| v / n as f64),
        })
    }
}

impl Predictor for ConstantPredictor {
    fn predict_raw(&self, input: &ModelInput) -> Result<Vec<[f64; C2]>> {
        Ok(vec![self.value; input.n_valid])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: String,
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub scenarios: Vec<u32>,
    pub targets: Vec<TargetMetrics>,
}

impl EvalReport {
    pub fn mae(&self, target: usize) -> f64 {
        self.targets[target].mae
    }

    pub fn rmse(&self, target: usize) -> f64 {
        self.targets[target].rmse
    }

    pub fn table(&self) -> String {
        let mut s = format!("{:<8} {:>14} {:>14} {:>8}\n", "target", "MAE", "RMSE", "n");
        for t in &self.targets {
            s += &format!("{:<8} {:>14.6} {:>14.6} {:>8}\n", t.target, t.mae, t.rmse, t.n);
        }
        s
    }
}

/// Raw-scale MAE and RMSE over every valid slot of `samples`.
pub fn evaluate(predictor: &dyn Predictor, samples: &[PreparedSample], split: &str) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Data(format!("split {split} is empty")));
    }
    let mut abs = [0.0; C2];
    let mut sq = [0.0; C2];
    let mut n = 0usize;
    let mut scenarios = Vec::new();
    for s in samples {
        let pred = predictor.predict_raw(&s.input)?;
        for (p, y) in pred.iter().zip(&s.targets.raw) {
            for i in 0..C2 {
                let e = p[i] - y[i];
                abs[i] += e.abs();
                sq[i] += e * e;
            }
            n += 1;
        }
        if !scenarios.contains(&s.input.scenario) {
            scenarios.push(s.input.scenario);
        }
    }
    scenarios.sort_unstable();
    let targets = (0..C2)
        .map(|i| TargetMetrics {
            target: TARGETS[i].to_string(),
            mae: abs[i] / n as f64,
            rmse: (sq[i] / n as f64).sqrt(),
            n,
        })
        .collect();
    Ok(EvalReport {
        split: split.to_string(),
        scenarios,
        targets,
    })
}
