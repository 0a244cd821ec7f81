use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{BidRecord, DayPair, ModelInput, NormStats};
use crate::error::{Error, Result};
use crate::model::Bid2x;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BidMode {
    /// Read the remaining spend off the cumulative head.
    #[default]
    Cumhead,
    /// Feed predicted outcomes back in tick by tick and sum predicted cost.
    Rollout,
}

impl FromStr for BidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumhead" => Ok(BidMode::Cumhead),
            "rollout" => Ok(BidMode::Rollout),
            _ => Err(Error::Config(format!("unknown mode {s:?}, expected cumhead or rollout"))),
        }
    }
}

/// Index of the grid bid whose prediction lands closest to `budget`; the
/// earlier (smaller) bid wins ties.
pub fn argmin_budget_match(grid: &[f64], predictions: &[f64], budget: f64) -> Result<usize> {
    if grid.is_empty() || grid.len() != predictions.len() {
        return Err(Error::Contract("grid and predictions must be non-empty and aligned".into()));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Contract("bid grid must be sorted ascending".into()));
    }
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, p) in predictions.iter().enumerate() {
        let d = (p - budget).abs();
        if d < best_d {
            best = k;
            best_d = d;
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidSelection {
    pub bid: f64,
    pub grid: Vec<f64>,
    /// Predicted spend from the current slot to the end of the day, per grid bid.
    pub predicted_spend: Vec<f64>,
    pub mode: BidMode,
}

/// Current decision point of a campaign-day.
#[derive(Clone, Copy, Debug)]
pub struct BidState<'a> {
    pub pair: &'a DayPair,
    /// Records already observed today.
    pub observed: &'a [BidRecord],
    pub next_tick: u32,
}

fn predicted_spend(model: &Bid2x, stats: &NormStats, state: &BidState, bid: f64, mode: BidMode) -> Result<f64> {
    let c = &state.pair.campaign;
    let h = &state.pair.history.records;
    match mode {
        BidMode::Cumhead => {
            let input = ModelInput::build(c, h, state.observed, bid, state.next_tick, stats)?;
            let out = model.predict(&input)?;
            Ok(stats.cumulative[0].inverse(out.cum[input.n_valid - 1][0]))
        }
        BidMode::Rollout => {
            let mut prefix = state.observed.to_vec();
            let mut total = 0.0;
            let mut tick = state.next_tick;
            while (tick as usize) < stats.t_max && prefix.len() < stats.t_max {
                let input = ModelInput::build(c, h, &prefix, bid, tick, stats)?;
                let out = model.predict(&input)?;
                let s = input.n_valid - 1;
                let v: [f64; 3] = std::array::from_fn(|i| stats.targets[i].inverse(out.y_hat[s][i]).max(0.0));
                total += v[0];
                let won = v[0] > 0.0;
                prefix.push(BidRecord {
                    bid,
                    cost: v[0],
                    reward: if won { v[1] } else { 0.0 },
                    count: if won { v[2].round() as u64 } else { 0 },
                    tick,
                });
                tick += 1;
            }
            Ok(total)
        }
    }
}

/// Picks the grid bid whose predicted remaining spend best matches `remaining_budget`.
pub fn select_bid(
    model: &Bid2x,
    stats: &NormStats,
    state: &BidState,
    remaining_budget: f64,
    grid: &[f64],
    mode: BidMode,
) -> Result<BidSelection> {
    if grid.is_empty() {
        return Err(Error::Contract("bid grid is empty".into()));
    }
    let predicted = grid
        .iter()
        .map(|&b| predicted_spend(model, stats, state, b, mode))
        .collect::<Result<Vec<_>>>()?;
    let k = argmin_budget_match(grid, &predicted, remaining_budget)?;
    Ok(BidSelection {
        bid: grid[k],
        grid: grid.to_vec(),
        predicted_spend: predicted,
        mode,
    })
}
