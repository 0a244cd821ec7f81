//! Hold one scenario out of training, measure the model on it as is, then
//! fine-tune on a small share of its campaigns.

use bid2x::data::{partition_by_scenario, PreparedSample};
use bid2x::eval::{evaluate, ConstantPredictor};
use bid2x::model::ModelConfig;
use bid2x::pipeline::{few_shot_split, finetune, fit, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset};
use bid2x::train::TrainConfig;

fn main() -> bid2x::Result<()> {
    let t_max = 24;
    let holdout = 2;
    let specs = default_scenarios(t_max, 3);
    let ds = generate_dataset(&specs, 30)?;
    let (keep, _) = partition_by_scenario(&ds.pairs, &[holdout]);
    let held = generate_dataset(&specs[holdout as usize..=holdout as usize], 100)?.pairs;
    let data = Prepared::new(&Splits::new(&keep, [0.8, 0.2, 0.0], 3)?, t_max)?;

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

    let tune = TrainConfig {
        epochs: 5,
        seed: 9,
        ..train
    };
    let (subset, rest) = few_shot_split(&held, 0.1, tune.seed)?;
    let rest = PreparedSample::prepare_all(&rest, &ck.stats)?;
    let constant = evaluate(&ConstantPredictor::mean_of(&data.train)?, &rest, "holdout")?;
    let zero = evaluate(&ck.fitted(), &rest, "holdout")?;
    let (tuned, _) = finetune(&ck, &held, &[], 0.1, &tune)?;
    let few = evaluate(&tuned.fitted(), &rest, "holdout")?;

    println!("scenario {} held out, {} campaigns used for fine-tuning", specs[holdout as usize].name, subset.len());
    println!("cost MAE  constant {:.3}", constant.mae(0));
    println!("cost MAE  zero-shot {:.3}", zero.mae(0));
    println!("cost MAE  fine-tuned {:.3}", few.mae(0));
    Ok(())
}
