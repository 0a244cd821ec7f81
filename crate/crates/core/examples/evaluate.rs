//! Compare a trained model against the constant-mean predictor, a per-record
//! MLP and the oracle that knows each scenario's true mean.

use bid2x::baseline::{BaselineConfig, MlpBaseline};
use bid2x::data::TARGETS;
use bid2x::eval::{evaluate, ConstantPredictor, OraclePredictor, Predictor};
use bid2x::model::ModelConfig;
use bid2x::pipeline::{fit, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::TrainConfig;

fn main() -> bid2x::Result<()> {
    let t_max = 24;
    let specs = default_scenarios(t_max, 2);
    let ds = generate_dataset(&specs, 30)?;
    let data = Prepared::new(&Splits::new(&ds.pairs, [0.7, 0.15, 0.15], 2)?, t_max)?;

    let cfg = synthetic_model_config(
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
    let (ck, _) = fit(&cfg, &train, &data)?;
    let fitted = ck.fitted();
    let mlp = MlpBaseline::fit(&data.train, &data.stats, &BaselineConfig::default())?;
    let constant = ConstantPredictor::mean_of(&data.train)?;
    let oracle = OraclePredictor { scenarios: specs };

    let rows: [(&str, &dyn Predictor); 4] = [
        ("constant", &constant),
        ("mlp", &mlp),
        ("model", &fitted),
        ("oracle", &oracle),
    ];
    print!("{:<10}", "");
    for t in TARGETS {
        print!(" {:>12}", format!("{t} MAE"));
    }
    println!();
    for (name, p) in rows {
        let r = evaluate(p, &data.test, "test")?;
        print!("{name:<10}");
        for i in 0..TARGETS.len() {
            print!(" {:>12.3}", r.mae(i));
        }
        println!();
    }
    Ok(())
}
