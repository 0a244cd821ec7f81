use bid2x_tensor::Tensor;
use serde::{Deserialize, Serialize};

use super::{BidRecord, Campaign, DayPair, C0, C2, COL_BID, COL_TARGET, COL_TICK};
use crate::error::{Error, Result};

/// Affine map applied after `log1p`: `z = (log1p(x) − shift) / scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarStats {
    pub shift: f64,
    pub scale: f64,
}

impl Default for VarStats {
    fn default() -> Self {
        VarStats::IDENTITY
    }
}

impl VarStats {
    pub const IDENTITY: VarStats = VarStats {
        shift: 0.0,
        scale: 1.0,
    };

    /// Mean/standard deviation of `log1p(values)`.
    pub fn fit_standard(values: impl IntoIterator<Item = f64>) -> VarStats {
        let logs: Vec<f64> = values.into_iter().map(f64::ln_1p).collect();
        if logs.is_empty() {
            return VarStats::IDENTITY;
        }
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        VarStats {
            shift: mean,
            scale: usable_scale(var.sqrt()),
        }
    }

    /// Scale-only fit (root mean square of `log1p(values)`), keeping raw zero at zero.
    pub fn fit_scale(values: impl IntoIterator<Item = f64>) -> VarStats {
        let mut n = 0usize;
        let mut ss = 0.0;
        for v in values {
            ss += v.ln_1p().powi(2);
            n += 1;
        }
        if n == 0 {
            return VarStats::IDENTITY;
        }
        VarStats {
            shift: 0.0,
            scale: usable_scale((ss / n as f64).sqrt()),
        }
    }

    pub fn forward(&self, raw: f64) -> Result<f64> {
        if !raw.is_finite() || raw <= -1.0 {
            return Err(Error::Data(format!("cannot normalize raw value {raw}")));
        }
        Ok((raw.ln_1p() - self.shift) / self.scale)
    }

    pub fn inverse(&self, z: f64) -> f64 {
        (z * self.scale + self.shift).exp_m1()
    }
}

fn usable_scale(s: f64) -> f64 {
    if s.is_finite() && s > 1e-12 {
        s
    } else {
        1.0
    }
}

/// Everything needed to map raw values to model scale and back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub t_max: usize,
    pub bid: VarStats,
    pub targets: [VarStats; C2],
    pub cumulative: [VarStats; C2],
    /// Budget first, then each context feature.
    pub campaign: Vec<VarStats>,
}

impl NormStats {
    /// Fits statistics on the training split only.
    pub fn fit(pairs: &[DayPair], t_max: usize) -> Result<NormStats> {
        if pairs.is_empty() {
            return Err(Error::Data("cannot fit normalization on an empty split".into()));
        }
        let records = || {
            pairs
                .iter()
                .flat_map(|p| p.history.records.iter().chain(&p.today.records))
        };
        for r in records() {
            if !(r.bid.is_finite() && r.cost.is_finite() && r.reward.is_finite()) {
                return Err(Error::Data("non-finite raw value in training split".into()));
            }
        }
        let bid = VarStats::fit_standard(records().map(|r| r.bid));
        let targets = std::array::from_fn(|i| VarStats::fit_scale(records().map(|r| r.targets()[i])));
        let cums: Vec<Vec<[f64; C2]>> = pairs.iter().map(|p| cumulative_targets(&p.today.records)).collect();
        let cumulative =
            std::array::from_fn(|i| VarStats::fit_scale(cums.iter().flatten().map(|c| c[i])));
        let width = pairs[0].campaign.continuous().len();
        if pairs.iter().any(|p| p.campaign.continuous().len() != width) {
            return Err(Error::Data("campaign context lengths differ".into()));
        }
        let campaign = (0..width)
            .map(|j| VarStats::fit_standard(pairs.iter().map(|p| p.campaign.continuous()[j])))
            .collect();
        Ok(NormStats {
            t_max,
            bid,
            targets,
            cumulative,
            campaign,
        })
    }

    fn tick(&self, tick: f64) -> f64 {
        tick / self.t_max as f64
    }

    /// Normalizes one raw token in place.
    pub fn normalize_token(&self, row: &mut [f64]) -> Result<()> {
        row[COL_BID] = self.bid.forward(row[COL_BID])?;
        row[COL_TICK] = self.tick(row[COL_TICK]);
        for i in 0..C2 {
            row[COL_TARGET + i] = self.targets[i].forward(row[COL_TARGET + i])?;
        }
        Ok(())
    }

    pub fn normalize_campaign(&self, c: &Campaign) -> Result<Vec<f64>> {
        let raw = c.continuous();
        if raw.len() != self.campaign.len() {
            return Err(Error::Data(format!(
                "campaign has {} continuous features, stats cover {}",
                raw.len(),
                self.campaign.len()
            )));
        }
        raw.iter().zip(&self.campaign).map(|(v, s)| s.forward(*v)).collect()
    }
}

/// Builds raw today tokens: targets shifted right behind a zero start token,
/// controls extended with `(next_bid, next_tick)`. Rows past the prefix are zero.
///
/// ```
/// use bid2x::data::{preprocess_today, BidRecord};
/// let (tokens, mask) = preprocess_today(&[], 5.0, 3, 4).unwrap();
/// assert_eq!(tokens.row(0), &[5.0, 3.0, 0.0, 0.0, 0.0]);
/// assert_eq!(mask, vec![1.0, 0.0, 0.0, 0.0]);
/// ```
pub fn preprocess_today(
    prefix: &[BidRecord],
    next_bid: f64,
    next_tick: u32,
    t: usize,
) -> Result<(Tensor, Vec<f64>)> {
    let slots = prefix.len() + 1;
    if slots > t {
        return Err(Error::Truncation {
            needed: slots,
            limit: t,
        });
    }
    if !(next_bid.is_finite() && next_bid >= 0.0) {
        return Err(Error::Contract(format!("next bid must be finite and non-negative, got {next_bid}")));
    }
    let mut data = vec![0.0; t * C0];
    for s in 0..slots {
        let row = &mut data[s * C0..(s + 1) * C0];
        let (bid, tick) = match prefix.get(s) {
            Some(r) => (r.bid, r.tick),
            None => (next_bid, next_tick),
        };
        row[COL_BID] = bid;
        row[COL_TICK] = tick as f64;
        if s > 0 {
            row[COL_TARGET..].copy_from_slice(&prefix[s - 1].targets());
        }
    }
    let mask = (0..t).map(|s| if s < slots { 1.0 } else { 0.0 }).collect();
    Ok((Tensor::new(vec![t, C0], data)?, mask))
}

/// Suffix sums: entry `s` is the total of each target over records `s..`.
pub fn cumulative_targets(records: &[BidRecord]) -> Vec<[f64; C2]> {
    let mut out = vec![[0.0; C2]; records.len()];
    let mut acc = [0.0; C2];
    for (s, r) in records.iter().enumerate().rev() {
        for (a, v) in acc.iter_mut().zip(r.targets()) {
            *a += v;
        }
        out[s] = acc;
    }
    out
}

/// Model-ready inputs for one campaign-day.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    /// `[C₀ × T]` normalized previous-day series, zero past its length.
    pub hist: Tensor,
    /// `[T × C₀]` normalized today tokens.
    pub today: Tensor,
    /// `[T]`, ones on the leading `n_valid` slots.
    pub mask: Vec<f64>,
    pub n_valid: usize,
    pub categories: [usize; 2],
    /// Normalized budget and context.
    pub continuous: Vec<f64>,
    /// Raw `(bid, tick)` controlling each valid slot. Bookkeeping for oracles.
    pub controls: Vec<(f64, u32)>,
    pub scenario: u32,
}

impl ModelInput {
    /// Inputs for predicting the record that follows `prefix` under `next_bid`.
    pub fn build(
        campaign: &Campaign,
        history: &[BidRecord],
        prefix: &[BidRecord],
        next_bid: f64,
        next_tick: u32,
        stats: &NormStats,
    ) -> Result<ModelInput> {
        let t = stats.t_max;
        if history.len() > t {
            return Err(Error::Truncation {
                needed: history.len(),
                limit: t,
            });
        }
        let mut hist = vec![0.0; C0 * t];
        for (k, r) in history.iter().enumerate() {
            let mut tok = r.token();
            stats.normalize_token(&mut tok)?;
            for (c, v) in tok.iter().enumerate() {
                hist[c * t + k] = *v;
            }
        }
        let (mut today, mask) = preprocess_today(prefix, next_bid, next_tick, t)?;
        let n_valid = prefix.len() + 1;
        for s in 0..n_valid {
            stats.normalize_token(&mut today.data_mut()[s * C0..(s + 1) * C0])?;
        }
        let controls = prefix
            .iter()
            .map(|r| (r.bid, r.tick))
            .chain(std::iter::once((next_bid, next_tick)))
            .collect();
        Ok(ModelInput {
            hist: Tensor::new(vec![C0, t], hist)?,
            today,
            mask,
            n_valid,
            categories: [campaign.advertiser_category, campaign.product_category],
            continuous: stats.normalize_campaign(campaign)?,
            controls,
            scenario: campaign.scenario,
        })
    }
}

/// Per-slot supervision. Index `s` is the record predicted at slot `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotTargets {
    pub raw: Vec<[f64; C2]>,
    pub norm: Vec<[f64; C2]>,
    pub cum_raw: Vec<[f64; C2]>,
    pub cum_norm: Vec<[f64; C2]>,
}

/// A whole campaign-day as one teacher-forced training example.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub input: ModelInput,
    pub targets: SlotTargets,
}

impl PreparedSample {
    pub fn from_pair(pair: &DayPair, stats: &NormStats) -> Result<PreparedSample> {
        let records = &pair.today.records;
        let (last, prefix) = records
            .split_last()
            .ok_or_else(|| Error::Data(format!("campaign {} has an empty day", pair.campaign.id)))?;
        let input = ModelInput::build(
            &pair.campaign,
            &pair.history.records,
            prefix,
            last.bid,
            last.tick,
            stats,
        )?;
        let raw: Vec<[f64; C2]> = records.iter().map(BidRecord::targets).collect();
        let cum_raw = cumulative_targets(records);
        let apply = |rows: &[[f64; C2]], s: &[VarStats; C2]| -> Result<Vec<[f64; C2]>> {
            rows.iter()
                .map(|r| {
                    Ok([s[0].forward(r[0])?, s[1].forward(r[1])?, s[2].forward(r[2])?])
                })
                .collect()
        };
        let targets = SlotTargets {
            norm: apply(&raw, &stats.targets)?,
            cum_norm: apply(&cum_raw, &stats.cumulative)?,
            raw,
            cum_raw,
        };
        Ok(PreparedSample { input, targets })
    }

    pub fn prepare_all(pairs: &[DayPair], stats: &NormStats) -> Result<Vec<PreparedSample>> {
        pairs.iter().map(|p| PreparedSample::from_pair(p, stats)).collect()
    }
}
