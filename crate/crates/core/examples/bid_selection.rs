//! Pick the bid whose predicted remaining spend matches the remaining budget,
//! from the cumulative head and from a step-by-step rollout.

use bid2x::eval::{select_bid, BidMode, BidState};
use bid2x::model::ModelConfig;
use bid2x::pipeline::{fit, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::TrainConfig;

fn main() -> bid2x::Result<()> {
    let t_max = 24;
    let ds = generate_dataset(&default_scenarios(t_max, 6), 30)?;
    let splits = Splits::new(&ds.pairs, [0.7, 0.15, 0.15], 6)?;
    let data = Prepared::new(&splits, t_max)?;
    let cfg = synthetic_model_config(
        t_max,
        &ModelConfig {
            d_model: 32,
            ..ModelConfig::default()
        },
    );
    let train = TrainConfig {
        epochs: 8,
        batch_size: 16,
        lr: 3e-4,
        ..TrainConfig::default()
    };
    let (ck, _) = fit(&cfg, &train, &data)?;

    let grid = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0];
    for pair in splits.test.iter().filter(|p| p.today.len() >= 4).take(3) {
        let recs = &pair.today.records;
        let half = recs.len() / 2;
        let spent: f64 = recs[..half].iter().map(|r| r.cost).sum();
        let remaining = (pair.campaign.budget - spent).max(0.0);
        let state = BidState {
            pair,
            observed: &recs[..half],
            next_tick: recs[half].tick,
        };
        println!("{} at tick {}, {remaining:.1} left", pair.campaign.id, recs[half].tick);
        for mode in [BidMode::Cumhead, BidMode::Rollout] {
            let sel = select_bid(&ck.model, &ck.stats, &state, remaining, &grid, mode)?;
            let spend: Vec<String> = sel.predicted_spend.iter().map(|v| format!("{v:.1}")).collect();
            println!("  {mode:?}: bid {} (spend per grid bid [{}])", sel.bid, spend.join(", "));
        }
    }
    Ok(())
}
