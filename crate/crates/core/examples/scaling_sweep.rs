//! Final validation loss against model width, averaged over seeds.

use bid2x::model::ModelConfig;
use bid2x::pipeline::{scaling_sweep, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::TrainConfig;

fn main() -> bid2x::Result<()> {
    let t_max = 24;
    let ds = generate_dataset(&default_scenarios(t_max, 11), 40)?;
    let data = Prepared::new(&Splits::new(&ds.pairs, [0.7, 0.15, 0.15], 1)?, t_max)?;
    let train = TrainConfig {
        epochs: 10,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let base = synthetic_model_config(t_max, &ModelConfig::default());
    let r = scaling_sweep(&base, &train, &[16, 32, 64], &[0, 1, 2], &data)?;
    for row in &r.rows {
        println!("D={:<3} seed {} val loss {:.4}", row.d_model, row.seed, row.val_loss);
    }
    print!("{}", r.table());
    Ok(())
}
