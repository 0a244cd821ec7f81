//! Monotonicity and predictability probes on a trained and an untrained model.

use bid2x::eval::{probe_monotonicity, probe_predictability, MonotonicityConfig};
use bid2x::model::{Bid2x, ModelConfig};
use bid2x::pipeline::{fit, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::TrainConfig;

fn main() -> bid2x::Result<()> {
    let t_max = 24;
    let ds = generate_dataset(&default_scenarios(t_max, 4), 30)?;
    let splits = Splits::new(&ds.pairs, [0.7, 0.15, 0.15], 4)?;
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
    let untrained = bid2x::model::Fitted {
        model: Bid2x::new(cfg, train.seed)?,
        stats: ck.stats.clone(),
    };

    let mono = MonotonicityConfig::default();
    let before = probe_monotonicity(&untrained, &ck.stats, &splits.test, &mono)?;
    let after = probe_monotonicity(&ck.fitted(), &ck.stats, &splits.test, &mono)?;
    println!("monotonic ratio untrained {:.3}, trained {:.3}", before.ratio, after.ratio);
    print!("{}", after.table());

    let pred = probe_predictability(&ck.fitted(), &ck.stats, &splits.test)?;
    print!("{}", pred.table());
    Ok(())
}
