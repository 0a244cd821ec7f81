//! End-to-end acceptance run. Trains the models it needs, prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::collections::BTreeSet;
use std::time::Instant;

use bid2x::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use bid2x::consistency::{run_consistency, ConsistencyConfig};
use bid2x::data::{DayPair, PreparedSample, TARGETS};
use bid2x::eval::{
    evaluate, export_distribution, probe_monotonicity, probe_predictability, ConstantPredictor, ModelView,
    MonotonicityConfig,
};
use bid2x::gradcheck::{run_gradcheck, GradcheckConfig};
use bid2x::model::{Bid2x, ModelConfig};
use bid2x::pipeline::{fit, finetune, few_shot_split, scaling_sweep, synthetic_model_config, Prepared, Splits};
use bid2x::synth::{default_scenarios, generate_dataset, ScenarioSpec};
use bid2x::train::TrainConfig;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const T_MAX: usize = 48;
const PER_SCENARIO: usize = 100;
const HOLDOUT: u32 = 2;
const HOLDOUT_CAMPAIGNS: usize = 400;
const COST: usize = 0;

type Outcome = Result<(bool, String), String>;

struct Setup {
    specs: Vec<ScenarioSpec>,
    splits: Splits,
    data: Prepared,
    holdout: Vec<DayPair>,
    base: ModelConfig,
    recipe: TrainConfig,
}

impl Setup {
    fn new() -> Setup {
        let specs = default_scenarios(T_MAX, 7);
        let ds = generate_dataset(&specs, PER_SCENARIO).unwrap();
        let keep: Vec<DayPair> = ds.pairs.into_iter().filter(|p| p.campaign.scenario != HOLDOUT).collect();
        let held_spec = specs.iter().find(|s| s.id == HOLDOUT).unwrap();
        let holdout = generate_dataset(std::slice::from_ref(held_spec), HOLDOUT_CAMPAIGNS).unwrap().pairs;
        let splits = Splits::new(&keep, [0.7, 0.15, 0.15], 1).unwrap();
        let data = Prepared::new(&splits, T_MAX).unwrap();
        Setup {
            base: synthetic_model_config(T_MAX, &ModelConfig::default()),
            recipe: TrainConfig {
                epochs: 30,
                batch_size: 16,
                seed: 1,
                ..TrainConfig::default()
            },
            specs,
            splits,
            data,
            holdout,
        }
    }

    fn train(&self, name: &str, cfg: ModelConfig) -> Checkpoint {
        let t0 = Instant::now();
        let (ck, _) = fit(&cfg, &self.recipe, &self.data).unwrap();
        eprintln!("trained {name} in {:.0}s", t0.elapsed().as_secs_f64());
        ck
    }

    fn val_cost_mae(&self, ck: &Checkpoint) -> f64 {
        evaluate(&ck.fitted(), &self.data.val, "val").unwrap().mae(COST)
    }
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let r = run_gradcheck(&GradcheckConfig::default()).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        r.max_rel_error < 1e-4 && secs < 60.0,
        format!(
            "max relative error {:.2e} over {} entries in {} tensors, {secs:.1}s",
            r.max_rel_error,
            r.checked,
            r.tensors.len()
        ),
    ))
}

fn causality(s: &Setup, ck: &Checkpoint) -> Outcome {
    let pairs: Vec<&DayPair> = s.splits.test.iter().filter(|p| p.today.len() >= 3).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let picks = sample(&mut rng, pairs.len(), 100.min(pairs.len()));
    let predict = |p: &DayPair| {
        let x = PreparedSample::from_pair(p, &ck.stats).unwrap();
        ck.model.predict(&x.input).unwrap()
    };
    let (mut future_bad, mut target_bad) = (0, 0);
    for (k, i) in picks.iter().enumerate() {
        let pair = pairs[i];
        let n = pair.today.len();
        let slot = k % (n - 1);
        let base = predict(pair);

        let mut future = pair.clone();
        for r in &mut future.today.records[slot + 1..] {
            r.bid *= 1.7;
            r.cost = r.cost * 3.0 + 1.0;
            r.reward += 2.0;
            r.count += 2;
        }
        let moved = predict(&future);
        if base.y_hat[..=slot] != moved.y_hat[..=slot] || base.cum[..=slot] != moved.cum[..=slot] {
            future_bad += 1;
        }

        let mut own = pair.clone();
        let r = &mut own.today.records[slot];
        r.cost = r.cost * 5.0 + 3.0;
        r.reward = r.reward * 5.0 + 3.0;
        r.count += 4;
        let moved = predict(&own);
        if base.y_hat[slot] != moved.y_hat[slot] || base.p[slot] != moved.p[slot] {
            target_bad += 1;
        }
    }
    Ok((
        future_bad == 0 && target_bad == 0,
        format!(
            "{} samples: {future_bad} changed by later slots, {target_bad} changed by their own target",
            picks.len()
        ),
    ))
}

fn heads_consistency(s: &Setup) -> Outcome {
    let t0 = Instant::now();
    let r = run_consistency(&s.specs[0], &ConsistencyConfig::default()).map_err(|e| e.to_string())?;
    let secs = t0.elapsed().as_secs_f64();
    Ok((
        r.mean_abs_p_error < 0.03 && r.mean_rel_product_error < 0.05 && secs < 600.0,
        format!(
            "mean |p - p_true| {:.4}, mean relative product error {:.4} on {} grid points, {secs:.0}s",
            r.mean_abs_p_error,
            r.mean_rel_product_error,
            r.points.len()
        ),
    ))
}

fn zero_mass(s: &Setup, full: &Checkpoint, no_zip: &Checkpoint) -> Outcome {
    let h = export_distribution(&full.fitted(), &s.data.test, COST, 20).map_err(|e| e.to_string())?;
    let h0 = export_distribution(&no_zip.fitted(), &s.data.test, COST, 20).map_err(|e| e.to_string())?;
    Ok((
        (h.zero_predicted - h.zero_truth).abs() <= 0.05 && h0.zero_predicted < 0.01,
        format!(
            "zero bin {:.3} vs empirical {:.3}; without zero inflation {:.4}",
            h.zero_predicted, h.zero_truth, h0.zero_predicted
        ),
    ))
}

fn monotonicity(s: &Setup, full: &Checkpoint) -> Outcome {
    let cfg = MonotonicityConfig::default();
    let trained = probe_monotonicity(&full.fitted(), &full.stats, &s.splits.test, &cfg).map_err(|e| e.to_string())?;
    let untrained = Bid2x::new(full.model.config.clone(), s.recipe.seed).map_err(|e| e.to_string())?;
    let view = ModelView {
        model: &untrained,
        stats: &full.stats,
    };
    let before = probe_monotonicity(&view, &full.stats, &s.splits.test, &cfg).map_err(|e| e.to_string())?;
    Ok((
        trained.ratio >= 0.70 && trained.ratio >= before.ratio + 0.30,
        format!(
            "ratio {:.3} trained vs {:.3} untrained ({} probes)",
            trained.ratio,
            before.ratio,
            trained.hits + trained.misses
        ),
    ))
}

fn predictability(s: &Setup, full: &Checkpoint) -> Outcome {
    let r = probe_predictability(&full.fitted(), &full.stats, &s.splits.test).map_err(|e| e.to_string())?;
    let mae: Vec<String> = r.points.iter().map(|p| format!("{:.2}", p.mae[COST])).collect();
    Ok((
        r.spearman[COST] < 0.0,
        format!("{} spearman {:.3}, decile MAE [{}]", TARGETS[COST], r.spearman[COST], mae.join(", ")),
    ))
}

fn zero_shot(s: &Setup, full: &Checkpoint) -> Outcome {
    let ft = TrainConfig {
        epochs: 10,
        seed: 2,
        ..s.recipe.clone()
    };
    let (subset, rest) = few_shot_split(&s.holdout, 0.05, ft.seed).map_err(|e| e.to_string())?;
    let rest_samples = PreparedSample::prepare_all(&rest, &full.stats).map_err(|e| e.to_string())?;
    let constant = ConstantPredictor::mean_of(&s.data.train).map_err(|e| e.to_string())?;
    let c = evaluate(&constant, &rest_samples, "holdout").unwrap().mae(COST);
    let z = evaluate(&full.fitted(), &rest_samples, "holdout").unwrap().mae(COST);
    let (tuned, _) = finetune(full, &s.holdout, &[], 0.05, &ft).map_err(|e| e.to_string())?;
    let f = evaluate(&tuned.fitted(), &rest_samples, "holdout").unwrap().mae(COST);
    let seen: BTreeSet<&str> = subset.iter().map(|p| p.campaign.id.as_str()).collect();
    let disjoint = rest.iter().all(|p| !seen.contains(p.campaign.id.as_str()));
    Ok((
        z <= 0.8 * c && f < z && disjoint,
        format!(
            "holdout {} cost MAE: constant {c:.2}, zero-shot {z:.2} ({:.0}% below), after 5% finetune {f:.2}",
            s.specs[HOLDOUT as usize].name,
            100.0 * (1.0 - z / c)
        ),
    ))
}

fn ablations(s: &Setup, full: &Checkpoint) -> Outcome {
    let no_va = s.train(
        "w/o va",
        ModelConfig {
            variable_attention: false,
            ..s.base.clone()
        },
    );
    let no_ta = s.train(
        "w/o ta",
        ModelConfig {
            today_targets: false,
            ..s.base.clone()
        },
    );
    let (m, va, ta) = (s.val_cost_mae(full), s.val_cost_mae(&no_va), s.val_cost_mae(&no_ta));
    Ok((
        va > m && ta > m,
        format!("val cost MAE full {m:.3}, w/o va {va:.3}, w/o ta {ta:.3}"),
    ))
}

fn reproducibility(s: &Setup, full: &Checkpoint) -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 5\n[data]\nt_max = 16\ncampaigns_per_scenario = 6\n[model]\nd_model = 8\n[train]\nepochs = 2\nbatch_size = 4\n",
    )
    .map_err(|e| e.to_string())?;
    let mut logs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let code = bid2x::cli::run([
            "bid2x",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "train",
        ]);
        if code != 0 {
            return Err(format!("train run {run} exited with {code}"));
        }
        let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
        logs.push((read("metrics.jsonl")?, read("checkpoint.bin")?));
    }
    let same_logs = logs[0].0 == logs[1].0 && !logs[0].0.is_empty();
    let same_ck = logs[0].1 == logs[1].1;

    let path = dir.path().join("full.bin");
    save_checkpoint(&path, full).map_err(|e| e.to_string())?;
    let back = load_checkpoint(&path).map_err(|e| e.to_string())?;
    let mut identical = 0;
    let batch = &s.data.test[..32.min(s.data.test.len())];
    for x in batch {
        let a = full.model.predict(&x.input).unwrap();
        let b = back.model.predict(&x.input).unwrap();
        let bits = |v: &[[f64; 3]]| v.iter().flatten().map(|f| f.to_bits()).collect::<Vec<_>>();
        if bits(&a.y_hat) == bits(&b.y_hat) && bits(&a.cum) == bits(&b.cum) && bits(&a.p) == bits(&b.p) {
            identical += 1;
        }
    }
    Ok((
        same_logs && same_ck && identical == batch.len(),
        format!(
            "metrics logs identical: {same_logs}, checkpoints identical: {same_ck}, reloaded predictions bit-identical on {identical}/{}",
            batch.len()
        ),
    ))
}

fn scaling() -> Outcome {
    let t = 24;
    let specs = default_scenarios(t, 11);
    let ds = generate_dataset(&specs, 40).map_err(|e| e.to_string())?;
    let splits = Splits::new(&ds.pairs, [0.7, 0.15, 0.15], 1).map_err(|e| e.to_string())?;
    let data = Prepared::new(&splits, t).map_err(|e| e.to_string())?;
    let tc = TrainConfig {
        epochs: 10,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let base = synthetic_model_config(t, &ModelConfig::default());
    let r = scaling_sweep(&base, &tc, &[16, 64], &[0, 1, 2], &data).map_err(|e| e.to_string())?;
    let (d16, d64) = (r.means[0].1, r.means[1].1);
    Ok((d64 < d16, format!("3-seed mean val loss D=16 {d16:.4}, D=64 {d64:.4}")))
}

fn main() {
    let t0 = Instant::now();
    let setup = Setup::new();
    let full = setup.train("full", setup.base.clone());
    let no_zip = setup.train(
        "w/o zip",
        ModelConfig {
            zero_inflated: false,
            ..setup.base.clone()
        },
    );

    let results: Vec<(&str, Outcome)> = vec![
        ("gradient correctness", gradient_check()),
        ("causality and anti-leakage", causality(&setup, &full)),
        ("heads consistency", heads_consistency(&setup)),
        ("zero-inflated distribution", zero_mass(&setup, &full, &no_zip)),
        ("monotonic ratio", monotonicity(&setup, &full)),
        ("predictability", predictability(&setup, &full)),
        ("zero-shot transfer", zero_shot(&setup, &full)),
        ("ablation direction", ablations(&setup, &full)),
        ("reproducibility and persistence", reproducibility(&setup, &full)),
        ("scaling direction", scaling()),
    ];

    let mut failed = 0;
    for (k, (name, outcome)) in results.iter().enumerate() {
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (*ok, d.clone()),
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, k + 1);
    }
    println!(
        "{} of {} criteria passed in {:.0}s",
        results.len() - failed,
        results.len(),
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
