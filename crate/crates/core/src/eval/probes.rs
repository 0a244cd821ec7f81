use serde::{Deserialize, Serialize};

use super::metrics::Predictor;
use crate::data::{DayPair, ModelInput, NormStats, PreparedSample, C2, TARGETS};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonotonicityConfig {
    /// Bid multipliers, ascending.
    pub alphas: Vec<f64>,
    /// Evenly spaced slots probed per trajectory.
    pub slots_per_trajectory: usize,
    /// Divides the bucket edges 100, 1000, 10000.
    pub bucket_divisor: f64,
    /// Require strictly increasing predictions.
    pub strict: bool,
    /// Allowed decrease on the normalized scale for a non-strict hit.
    pub tolerance: f64,
}

impl Default for MonotonicityConfig {
    fn default() -> Self {
        MonotonicityConfig {
            alphas: vec![0.5, 1.0, 1.5, 2.0],
            slots_per_trajectory: 3,
            bucket_divisor: 10.0,
            strict: false,
            tolerance: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub label: String,
    pub hits: usize,
    pub misses: usize,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub alphas: Vec<f64>,
    pub edges: Vec<f64>,
    pub buckets: Vec<Bucket>,
    pub hits: usize,
    pub misses: usize,
    pub ratio: f64,
}

impl MonotonicityReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<22} {:>7} {:>7} {:>7}\n", "tick cost", "hits", "misses", "ratio");
        for b in &self.buckets {
            s += &format!("{:<22} {:>7} {:>7} {:>7.3}\n", b.label, b.hits, b.misses, b.ratio);
        }
        s += &format!("{:<22} {:>7} {:>7} {:>7.3}\n", "overall", self.hits, self.misses, self.ratio);
        s
    }
}

fn ratio(hits: usize, misses: usize) -> f64 {
    if hits + misses == 0 {
        0.0
    } else {
        hits as f64 / (hits + misses) as f64
    }
}

/// Slots `⌊(j + ½)·m/k⌋` for `j < k`, deduplicated.
pub fn probe_slots(m: usize, k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (0..k.min(m)).map(|j| ((2 * j + 1) * m) / (2 * k.min(m))).collect();
    v.dedup();
    v
}

/// Scales the bid at probed slots by each alpha and checks that predicted
/// cost never decreases. Slots are bucketed by their true tick cost.
pub fn probe_monotonicity(
    predictor: &dyn Predictor,
    stats: &NormStats,
    pairs: &[DayPair],
    cfg: &MonotonicityConfig,
) -> Result<MonotonicityReport> {
    if cfg.alphas.windows(2).any(|w| w[0] > w[1]) || cfg.alphas.is_empty() {
        return Err(Error::Contract("alphas must be non-empty and ascending".into()));
    }
    if !(cfg.bucket_divisor > 0.0) {
        return Err(Error::Config("bucket_divisor must be positive".into()));
    }
    let edges: Vec<f64> = [100.0, 1000.0, 10000.0].iter().map(|e| e / cfg.bucket_divisor).collect();
    let mut labels = vec!["0".to_string()];
    let mut lo = 0.0;
    for &e in &edges {
        labels.push(format!("({lo}, {e}]"));
        lo = e;
    }
    labels.push(format!("({lo}, inf)"));
    let mut counts = vec![(0usize, 0usize); labels.len()];

    for pair in pairs {
        let recs = &pair.today.records;
        for s in probe_slots(recs.len(), cfg.slots_per_trajectory) {
            let target = recs[s];
            let mut preds = Vec::with_capacity(cfg.alphas.len());
            for &a in &cfg.alphas {
                let input = ModelInput::build(
                    &pair.campaign,
                    &pair.history.records,
                    &recs[..s],
                    a * target.bid,
                    target.tick,
                    stats,
                )?;
                let raw = predictor.predict_raw(&input)?;
                preds.push(stats.targets[0].forward(raw[s][0])?);
            }
            let hit = preds.windows(2).all(|w| {
                if cfg.strict {
                    w[1] > w[0]
                } else {
                    w[1] >= w[0] - cfg.tolerance
                }
            });
            let b = if target.cost == 0.0 {
                0
            } else {
                1 + edges.iter().take_while(|&&e| target.cost > e).count()
            };
            if hit {
                counts[b].0 += 1;
            } else {
                counts[b].1 += 1;
            }
        }
    }
    let hits = counts.iter().map(|c| c.0).sum();
    let misses = counts.iter().map(|c| c.1).sum();
    Ok(MonotonicityReport {
        alphas: cfg.alphas.clone(),
        edges,
        buckets: labels
            .into_iter()
            .zip(counts)
            .map(|(label, (h, m))| Bucket {
                label,
                hits: h,
                misses: m,
                ratio: ratio(h, m),
            })
            .collect(),
        hits,
        misses,
        ratio: ratio(hits, misses),
    })
}

/// Prefix lengths at the deciles `10%..90%` of a length-`m` trajectory.
pub fn decile_prefixes(m: usize) -> Vec<usize> {
    (1..=9).map(|k| ((k * m) as f64 / 10.0).round() as usize).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecilePoint {
    pub decile: usize,
    pub mae: [f64; C2],
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictabilityReport {
    pub points: Vec<DecilePoint>,
    /// Rank correlation of decile against MAE, per target.
    pub spearman: [f64; C2],
}

impl PredictabilityReport {
    pub fn table(&self) -> String {
        let mut s = format!("{:<8}", "decile");
        for t in TARGETS {
            s += &format!(" {t:>12}");
        }
        s.push('\n');
        for p in &self.points {
            s += &format!("{:<8}", format!("{}0%", p.decile));
            for v in p.mae {
                s += &format!(" {v:>12.5}");
            }
            s.push('\n');
        }
        s += &format!("{:<8}", "spearman");
        for v in self.spearman {
            s += &format!(" {v:>12.4}");
        }
        s + "\n"
    }
}

/// MAE of the next-record prediction after each decile prefix.
///
/// The prediction at slot `s` of a teacher-forced pass only sees records
/// before `s` and the bid at `s`, so one pass per trajectory serves all nine
/// prefix lengths.
pub fn probe_predictability(
    predictor: &dyn Predictor,
    stats: &NormStats,
    pairs: &[DayPair],
) -> Result<PredictabilityReport> {
    let mut sums = [[0.0; C2]; 9];
    let mut n = 0usize;
    for pair in pairs.iter().filter(|p| p.today.len() >= 10) {
        let sample = PreparedSample::from_pair(pair, stats)?;
        let preds = predictor.predict_raw(&sample.input)?;
        for (k, s) in decile_prefixes(pair.today.len()).into_iter().enumerate() {
            for i in 0..C2 {
                sums[k][i] += (preds[s][i] - sample.targets.raw[s][i]).abs();
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("no trajectory of length >= 10".into()));
    }
    let points: Vec<DecilePoint> = sums
        .iter()
        .enumerate()
        .map(|(k, s)| DecilePoint {
            decile: k + 1,
            mae: s.map(|v| v / n as f64),
            n,
        })
        .collect();
    let x: Vec<f64> = (1..=9).map(|k| k as f64).collect();
    let spearman = std::array::from_fn(|i| {
        let y: Vec<f64> = points.iter().map(|p| p.mae[i]).collect();
        spearman(&x, &y)
    });
    Ok(PredictabilityReport { points, spearman })
}

/// Average ranks, ties sharing the mean rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = mean;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; zero when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}
