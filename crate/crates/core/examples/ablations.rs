//! Switch off variable attention, the target inputs of the temporal stream or
//! the zero-inflated head and compare validation cost MAE.

use bid2x::eval::evaluate;
use bid2x::model::ModelConfig;
use bid2x::pipeline::{fit, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::TrainConfig;

fn main() -> bid2x::Result<()> {
    let t_max = 24;
    let ds = generate_dataset(&default_scenarios(t_max, 8), 30)?;
    let data = Prepared::new(&Splits::new(&ds.pairs, [0.7, 0.3, 0.0], 8)?, t_max)?;
    let base = synthetic_model_config(
        t_max,
        &ModelConfig {
            d_model: 32,
            ..ModelConfig::default()
        },
    );
    let train = TrainConfig {
        epochs: 30,
        batch_size: 16,
        lr: 3e-4,
        ..TrainConfig::default()
    };
    let variants = [
        ("full", base.clone()),
        (
            "w/o va",
            ModelConfig {
                variable_attention: false,
                ..base.clone()
            },
        ),
        (
            "w/o ta",
            ModelConfig {
                today_targets: false,
                ..base.clone()
            },
        ),
        (
            "w/o zip",
            ModelConfig {
                zero_inflated: false,
                ..base.clone()
            },
        ),
    ];
    for (name, cfg) in variants {
        let (ck, _) = fit(&cfg, &train, &data)?;
        let r = evaluate(&ck.fitted(), &data.val, "val")?;
        println!("{name:<8} cost MAE {:.3}  reward MAE {:.3}", r.mae(0), r.mae(1));
    }
    Ok(())
}
