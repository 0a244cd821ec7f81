mod common;

use bid2x::baseline::{BaselineConfig, MlpBaseline};
use bid2x::data::{NormStats, PreparedSample, C2};
use bid2x::eval::*;
use bid2x::synth::default_scenarios;
use common::{small_setup, synthetic_pairs};
use proptest::prelude::*;

fn setup(t: usize, per: usize) -> (Vec<bid2x::data::DayPair>, NormStats, Vec<PreparedSample>) {
    let pairs = synthetic_pairs(t, per, 3);
    let stats = NormStats::fit(&pairs, t).unwrap();
    let samples = PreparedSample::prepare_all(&pairs, &stats).unwrap();
    (pairs, stats, samples)
}

fn oracle(t: usize) -> OraclePredictor {
    OraclePredictor {
        scenarios: default_scenarios(t, 3),
    }
}

#[test]
fn oracle_error_is_the_irreducible_noise() {
    let (_, _, samples) = setup(24, 4);
    let r = evaluate(&oracle(24), &samples, "all").unwrap();
    for i in 0..C2 {
        assert!(r.mae(i) > 0.0);
        assert!(r.mae(i) <= r.rmse(i));
    }
}

#[test]
fn zero_predictor_error_is_mean_magnitude() {
    let (_, _, samples) = setup(24, 3);
    let r = evaluate(&ConstantPredictor::zero(), &samples, "all").unwrap();
    let rows: Vec<[f64; C2]> = samples.iter().flat_map(|s| s.targets.raw.clone()).collect();
    for i in 0..C2 {
        let mean = rows.iter().map(|r| r[i].abs()).sum::<f64>() / rows.len() as f64;
        assert!((r.mae(i) - mean).abs() < 1e-9 * mean.max(1.0));
        assert_eq!(r.targets[i].n, rows.len());
    }
    assert!(evaluate(&ConstantPredictor::zero(), &[], "empty").is_err());
}

#[test]
fn evaluation_is_deterministic() {
    let (model, stats, samples) = small_setup(16, 8, 2);
    let view = ModelView {
        model: &model,
        stats: &stats,
    };
    let a = evaluate(&view, &samples, "x").unwrap();
    let b = evaluate(&view, &samples, "x").unwrap();
    assert_eq!(a, b);
    for i in 0..C2 {
        assert!(a.mae(i) <= a.rmse(i));
    }
}

#[test]
fn oracle_is_perfectly_monotone() {
    let (pairs, stats, _) = setup(24, 3);
    let r = probe_monotonicity(&oracle(24), &stats, &pairs, &MonotonicityConfig::default()).unwrap();
    assert_eq!(r.ratio, 1.0);
    assert_eq!(r.misses, 0);
    assert!(r.hits > 0);
    assert_eq!(r.buckets.iter().map(|b| b.hits).sum::<usize>(), r.hits);
}

#[test]
fn untrained_model_ratio_is_reported() {
    let (model, stats, _) = small_setup(16, 8, 1);
    let pairs = synthetic_pairs(16, 2, 3);
    let view = ModelView {
        model: &model,
        stats: &stats,
    };
    let r = probe_monotonicity(&view, &stats, &pairs, &MonotonicityConfig::default()).unwrap();
    assert!((0.0..=1.0).contains(&r.ratio));
    assert!(r.hits + r.misses > 0);
    let bad = MonotonicityConfig {
        alphas: vec![2.0, 1.0],
        ..MonotonicityConfig::default()
    };
    assert!(probe_monotonicity(&view, &stats, &pairs, &bad).is_err());
}

#[test]
fn probe_slot_and_decile_grids() {
    assert_eq!(decile_prefixes(20), vec![2, 4, 6, 8, 10, 12, 14, 16, 18]);
    assert_eq!(probe_slots(12, 3), vec![2, 6, 10]);
    assert_eq!(probe_slots(2, 3), vec![0, 1]);
}

#[test]
fn predictability_emits_nine_points() {
    let (pairs, stats, _) = setup(24, 3);
    let r = probe_predictability(&oracle(24), &stats, &pairs).unwrap();
    assert_eq!(r.points.len(), 9);
    assert!(r.spearman.iter().all(|s| (-1.0..=1.0).contains(s)));
}

#[test]
fn spearman_examples() {
    assert_eq!(ranks(&[3.0, 1.0, 2.0, 1.0]), vec![4.0, 1.5, 3.0, 1.5]);
    assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-15);
    assert!((spearman(&[1.0, 2.0, 3.0], &[9.0, 4.0, 1.0]) + 1.0).abs() < 1e-15);
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]), 0.0);
}

#[test]
fn histogram_zero_bins() {
    let (_, _, samples) = setup(24, 3);
    let h = export_distribution(&oracle(24), &samples, 0, 10).unwrap();
    let rows: Vec<f64> = samples.iter().flat_map(|s| s.targets.raw.iter().map(|r| r[0])).collect();
    let lost = rows.iter().filter(|v| **v == 0.0).count() as f64 / rows.len() as f64;
    assert!((h.zero_truth - lost).abs() < 1e-12);
    assert_eq!(h.zero_predicted, 0.0);
    assert_eq!(h.edges.len(), 11);
    assert!((h.truth.iter().sum::<f64>() + h.zero_truth - 1.0).abs() < 1e-9);
    assert!(h.to_text().lines().count() > 10);
    assert!(export_distribution(&oracle(24), &samples, 3, 10).is_err());
}

#[test]
fn budget_match_examples() {
    assert_eq!(argmin_budget_match(&[1.0, 2.0, 3.0], &[5.0, 9.0, 14.0], 9.0).unwrap(), 1);
    assert_eq!(argmin_budget_match(&[1.0, 2.0, 3.0], &[5.0, 9.0, 14.0], 0.0).unwrap(), 0);
    assert_eq!(argmin_budget_match(&[1.0, 2.0], &[4.0, 6.0], 5.0).unwrap(), 0);
    assert!(argmin_budget_match(&[2.0, 1.0], &[1.0, 2.0], 1.0).is_err());
    assert!(argmin_budget_match(&[], &[], 1.0).is_err());
}

#[test]
fn select_bid_matches_exhaustive_search() {
    let (model, stats, _) = small_setup(12, 8, 1);
    let pairs = synthetic_pairs(12, 1, 3);
    let pair = pairs.iter().find(|p| p.today.len() >= 3).unwrap();
    let observed = &pair.today.records[..2];
    let state = BidState {
        pair,
        observed,
        next_tick: observed[1].tick + 1,
    };
    let grid = [5.0, 10.0, 20.0, 40.0];
    for mode in [BidMode::Cumhead, BidMode::Rollout] {
        let sel = select_bid(&model, &stats, &state, 30.0, &grid, mode).unwrap();
        assert_eq!(sel.predicted_spend.len(), grid.len());
        assert_eq!(sel.mode, mode);
        let best = (0..grid.len())
            .min_by(|&a, &b| {
                let da = (sel.predicted_spend[a] - 30.0).abs();
                let db = (sel.predicted_spend[b] - 30.0).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
        assert_eq!(sel.bid, grid[best]);
    }
    assert!(select_bid(&model, &stats, &state, 30.0, &[], BidMode::Cumhead).is_err());
    assert_eq!("rollout".parse::<BidMode>().unwrap(), BidMode::Rollout);
    assert!("greedy".parse::<BidMode>().is_err());
}

#[test]
fn baseline_learns_something() {
    let (_, stats, samples) = setup(16, 6);
    let cfg = BaselineConfig {
        epochs: 5,
        ..BaselineConfig::default()
    };
    let fitted = MlpBaseline::fit(&samples, &stats, &cfg).unwrap();
    let b = evaluate(&fitted, &samples, "train").unwrap();
    let z = evaluate(&ConstantPredictor::zero(), &samples, "train").unwrap();
    assert!(b.mae(0) < z.mae(0));
    let again = MlpBaseline::fit(&samples, &stats, &cfg).unwrap();
    assert!(again.params.bit_equal(&fitted.params));
}

proptest! {
    #[test]
    fn budget_match_is_exhaustive_argmin(
        preds in prop::collection::vec(0.0f64..100.0, 1..12),
        budget in 0.0f64..120.0,
    ) {
        let grid: Vec<f64> = (1..=preds.len()).map(|k| k as f64).collect();
        let k = argmin_budget_match(&grid, &preds, budget).unwrap();
        for p in &preds {
            prop_assert!((preds[k] - budget).abs() <= (p - budget).abs());
        }
        // a strictly increasing map of the distances keeps the winner
        let warped: Vec<f64> = preds
            .iter()
            .map(|p| budget + (p - budget).signum() * ((p - budget).abs().powi(3) + (p - budget).abs()))
            .collect();
        prop_assert_eq!(argmin_budget_match(&grid, &warped, budget).unwrap(), k);
    }
}
