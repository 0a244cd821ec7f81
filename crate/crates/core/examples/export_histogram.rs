//! Predicted versus observed cost distribution, with the zero bin split out.

use bid2x::eval::export_distribution;
use bid2x::model::ModelConfig;
use bid2x::pipeline::{fit, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::TrainConfig;

fn main() -> bid2x::Result<()> {
    let t_max = 24;
    let ds = generate_dataset(&default_scenarios(t_max, 5), 30)?;
    let data = Prepared::new(&Splits::new(&ds.pairs, [0.7, 0.15, 0.15], 5)?, t_max)?;
    let train = TrainConfig {
        epochs: 8,
        batch_size: 16,
        lr: 3e-4,
        ..TrainConfig::default()
    };
    for zero_inflated in [true, false] {
        let cfg = synthetic_model_config(
            t_max,
            &ModelConfig {
                d_model: 32,
                zero_inflated,
                ..ModelConfig::default()
            },
        );
        let (ck, _) = fit(&cfg, &train, &data)?;
        let h = export_distribution(&ck.fitted(), &data.test, 0, 12)?;
        println!("zero_inflated = {zero_inflated}");
        print!("{}", h.to_text());
        println!();
    }
    Ok(())
}
