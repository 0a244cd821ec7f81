#![allow(dead_code)]

use bid2x::data::{BidRecord, Campaign, DayPair, NormStats, PreparedSample, Trajectory};
use bid2x::model::{Bid2x, ModelConfig};
use bid2x::pipeline::synthetic_model_config;
use bid2x::synth::{default_scenarios, generate_dataset};

pub fn rec(bid: f64, cost: f64, reward: f64, count: u64, tick: u32) -> BidRecord {
    BidRecord {
        bid,
        cost,
        reward,
        count,
        tick,
    }
}

pub fn campaign(id: &str, scenario: u32) -> Campaign {
    Campaign {
        id: id.to_string(),
        advertiser_category: 1,
        product_category: 2,
        budget: 100.0,
        context: vec![3.0, 40.0, 1.5],
        scenario,
    }
}

pub fn pair(id: &str, history: Vec<BidRecord>, today: Vec<BidRecord>) -> DayPair {
    DayPair {
        campaign: campaign(id, 0),
        history: Trajectory {
            day: 0,
            records: history,
            complete: true,
        },
        today: Trajectory {
            day: 1,
            records: today,
            complete: true,
        },
    }
}

pub const HEADER: &str =
    r#"{"version":1,"variables":["bid","tick","cost","reward","count"],"adv_cat_vocab":4,"prod_cat_vocab":3,"context_len":3,"T_max":8}"#;

/// Generated pairs from the default scenarios.
pub fn synthetic_pairs(t_max: usize, per_scenario: usize, seed: u64) -> Vec<DayPair> {
    generate_dataset(&default_scenarios(t_max, seed), per_scenario).unwrap().pairs
}

/// Small model, statistics and prepared samples.
pub fn small_setup(t_max: usize, d: usize, per_scenario: usize) -> (Bid2x, NormStats, Vec<PreparedSample>) {
    let pairs = synthetic_pairs(t_max, per_scenario, 3);
    let stats = NormStats::fit(&pairs, t_max).unwrap();
    let samples = PreparedSample::prepare_all(&pairs, &stats).unwrap();
    let cfg = synthetic_model_config(
        t_max,
        &ModelConfig {
            d_model: d,
            ..ModelConfig::default()
        },
    );
    (Bid2x::new(cfg, 5).unwrap(), stats, samples)
}
