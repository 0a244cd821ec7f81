use serde::{Deserialize, Serialize};

use super::metrics::Predictor;
use crate::data::{PreparedSample, C2, TARGETS};
use crate::error::{Error, Result};

/// Predicted and observed mass on raw scale: an exact-zero bin followed by
/// equal-width bins over `(0, max observed]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub target: String,
    pub edges: Vec<f64>,
    pub zero_predicted: f64,
    pub zero_truth: f64,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
}

impl Histogram {
    /// Columns `lo hi predicted truth`; the zero bin is written as `0 0`.
    pub fn to_text(&self) -> String {
        let mut s = format!("# {} lo hi predicted truth\n", self.target);
        s += &format!("0 0 {:.8} {:.8}\n", self.zero_predicted, self.zero_truth);
        for (k, (p, t)) in self.predicted.iter().zip(&self.truth).enumerate() {
            s += &format!("{:.6} {:.6} {p:.8} {t:.8}\n", self.edges[k], self.edges[k + 1]);
        }
        s
    }
}

fn bin_of(v: f64, hi: f64, bins: usize) -> usize {
    if v <= 0.0 || hi <= 0.0 {
        return 0;
    }
    (((v / hi) * bins as f64).ceil() as usize).clamp(1, bins) - 1
}

pub fn export_distribution(
    predictor: &dyn Predictor,
    samples: &[PreparedSample],
    target: usize,
    bins: usize,
) -> Result<Histogram> {
    if target >= C2 || bins == 0 {
        return Err(Error::Contract(format!("target {target} / bins {bins} out of range")));
    }
    let truth_values: Vec<f64> = samples
        .iter()
        .flat_map(|s| s.targets.raw.iter().map(move |r| r[target]))
        .collect();
    if truth_values.is_empty() {
        return Err(Error::Data("nothing to histogram".into()));
    }
    let hi = truth_values.iter().cloned().fold(0.0, f64::max);
    let n = truth_values.len() as f64;
    let mut truth = vec![0.0; bins];
    let mut zero_truth = 0.0;
    for &v in &truth_values {
        if v == 0.0 {
            zero_truth += 1.0;
        } else {
            truth[bin_of(v, hi, bins)] += 1.0;
        }
    }
    let mut predicted = vec![0.0; bins];
    let mut zero_predicted = 0.0;
    for s in samples {
        for row in predictor.predict_mixture(&s.input)? {
            let (p, v) = row[target];
            zero_predicted += 1.0 - p;
            if v == 0.0 {
                zero_predicted += p;
            } else {
                predicted[bin_of(v, hi, bins)] += p;
            }
        }
    }
    let norm = |x: &mut Vec<f64>| x.iter_mut().for_each(|v| *v /= n);
    norm(&mut truth);
    norm(&mut predicted);
    Ok(Histogram {
        target: TARGETS[target].to_string(),
        edges: (0..=bins).map(|k| hi * k as f64 / bins as f64).collect(),
        zero_predicted: zero_predicted / n,
        zero_truth: zero_truth / n,
        predicted,
        truth,
    })
}
