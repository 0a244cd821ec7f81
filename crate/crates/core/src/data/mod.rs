//! Records, trajectories and the campaign-day dataset.

mod io;
mod prep;
mod split;

use serde::{Deserialize, Serialize};

pub use io::{load_dataset, read_dataset, write_dataset};
pub use prep::{
    cumulative_targets, preprocess_today, ModelInput, NormStats, PreparedSample, SlotTargets,
    VarStats,
};
pub use split::{partition_by_scenario, split_dataset, subsample_campaigns};

/// Number of control variables (bid, tick).
pub const C1: usize = 2;
/// Number of target variables (cost, reward, count).
pub const C2: usize = 3;
/// Variables per token.
pub const C0: usize = C1 + C2;

/// Column order of a token and of the history series.
pub const VARIABLES: [&str; C0] = ["bid", "tick", "cost", "reward", "count"];
pub const TARGETS: [&str; C2] = ["cost", "reward", "count"];

pub const COL_BID: usize = 0;
pub const COL_TICK: usize = 1;
/// First target column; targets occupy `COL_TARGET..C0`.
pub const COL_TARGET: usize = 2;

/// Outcome of one tick. Serialized as `[bid, cost, reward, count, tick]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "RecordRow", into = "RecordRow")]
pub struct BidRecord {
    pub bid: f64,
    pub cost: f64,
    pub reward: f64,
    pub count: u64,
    pub tick: u32,
}

#[derive(Serialize, Deserialize)]
struct RecordRow(f64, f64, f64, u64, u32);

impl From<RecordRow> for BidRecord {
    fn from(r: RecordRow) -> Self {
        BidRecord {
            bid: r.0,
            cost: r.1,
            reward: r.2,
            count: r.3,
            tick: r.4,
        }
    }
}

impl From<BidRecord> for RecordRow {
    fn from(r: BidRecord) -> Self {
        RecordRow(r.bid, r.cost, r.reward, r.count, r.tick)
    }
}

impl BidRecord {
    pub fn lost(bid: f64, tick: u32) -> Self {
        BidRecord {
            bid,
            cost: 0.0,
            reward: 0.0,
            count: 0,
            tick,
        }
    }

    /// Targets in column order.
    pub fn targets(&self) -> [f64; C2] {
        [self.cost, self.reward, self.count as f64]
    }

    /// All five variables in [`VARIABLES`] order.
    pub fn token(&self) -> [f64; C0] {
        [
            self.bid,
            self.tick as f64,
            self.cost,
            self.reward,
            self.count as f64,
        ]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    pub id: String,
    pub advertiser_category: usize,
    pub product_category: usize,
    pub budget: f64,
    /// Historical clicks, historical cost, historical cost-effectiveness.
    pub context: Vec<f64>,
    /// Generating scenario. Bookkeeping only; never fed to the model.
    pub scenario: u32,
}

impl Campaign {
    /// Continuous features fed to the campaign embedding: budget then context.
    pub fn continuous(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.context.len());
        v.push(self.budget);
        v.extend_from_slice(&self.context);
        v
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub day: i64,
    pub records: Vec<BidRecord>,
    pub complete: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_cost(&self) -> f64 {
        self.records.iter().map(|r| r.cost).sum()
    }
}

/// Previous day plus the day to predict, for one campaign.
#[derive(Clone, Debug, PartialEq)]
pub struct DayPair {
    pub campaign: Campaign,
    pub history: Trajectory,
    pub today: Trajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetHeader {
    pub version: u32,
    pub variables: Vec<String>,
    pub adv_cat_vocab: usize,
    pub prod_cat_vocab: usize,
    pub context_len: usize,
    #[serde(rename = "T_max")]
    pub t_max: usize,
}

impl DatasetHeader {
    pub const VERSION: u32 = 1;

    pub fn new(adv_cat_vocab: usize, prod_cat_vocab: usize, context_len: usize, t_max: usize) -> Self {
        DatasetHeader {
            version: Self::VERSION,
            variables: VARIABLES.iter().map(|s| s.to_string()).collect(),
            adv_cat_vocab,
            prod_cat_vocab,
            context_len,
            t_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub pairs: Vec<DayPair>,
}

impl Dataset {
    pub fn select(&self, indices: &[usize]) -> Vec<DayPair> {
        indices.iter().map(|&i| self.pairs[i].clone()).collect()
    }
}
