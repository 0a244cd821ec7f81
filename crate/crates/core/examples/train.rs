//! Train a small model on generated data, keep the best-validation weights
//! and save a checkpoint.
//!
//!     cargo run --release --example train -- [checkpoint_path]

use bid2x::checkpoint::save_checkpoint;
use bid2x::eval::evaluate;
use bid2x::model::ModelConfig;
use bid2x::pipeline::{fit, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::{MetricRecord, TrainConfig};

fn main() -> bid2x::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "bid2x-small.ck".into());
    let t_max = 24;
    let ds = generate_dataset(&default_scenarios(t_max, 1), 30)?;
    let splits = Splits::new(&ds.pairs, [0.7, 0.15, 0.15], 1)?;
    let data = Prepared::new(&splits, t_max)?;

    let model = synthetic_model_config(
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
    let (ck, metrics) = fit(&model, &train, &data)?;
    for m in &metrics {
        if let MetricRecord::EpochLoss { epoch, split, loss } = m {
            println!("epoch {epoch:>2} {split} loss {loss:.4}");
        }
    }
    print!("{}", evaluate(&ck.fitted(), &data.test, "test")?.table());
    save_checkpoint(&path, &ck)?;
    println!("{} parameters saved to {path}", ck.model.params.size());
    Ok(())
}
