mod common;

use bid2x::data::Campaign;
use bid2x::synth::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn flat_spec() -> ScenarioSpec {
    ScenarioSpec {
        win_bias: 0.0,
        win_slope: 1.0,
        periodic_amp: 0.0,
        ..default_scenarios(24, 0)[0].clone()
    }
}

fn budget_campaign(budget: f64) -> Campaign {
    Campaign {
        budget,
        ..common::campaign("x", 0)
    }
}

#[test]
fn win_probability_examples() {
    let s = flat_spec();
    assert_eq!(s.true_win_prob(0.0, 3).unwrap(), 0.5);
    let p = s.true_win_prob(std::f64::consts::E - 1.0, 3).unwrap();
    assert!((p - 0.731_058_578_6).abs() < 1e-9);
    assert!(s.true_win_prob(-1.0, 0).is_err());
}

#[test]
fn expected_cost_limits_and_concavity() {
    for s in default_scenarios(24, 1) {
        assert_eq!(s.true_expected_cost(0.0, 5).unwrap(), 0.0);
        let cap = s.base_scale * (1.0 + s.seasonal(5)) * s.kappa;
        let far = s.true_expected_cost(1e6, 5).unwrap();
        assert!((far - cap).abs() < 1e-9 * cap);
        let c: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&b| s.true_expected_cost(b, 5).unwrap()).collect();
        assert!(c[2] - 2.0 * c[1] + c[0] < 0.0);
    }
}

#[test]
fn certain_loss_gives_zero_record() {
    let s = ScenarioSpec {
        win_bias: -1e4,
        ..flat_spec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = sample_record(&s, 3.0, 4, &mut rng).unwrap();
    assert_eq!((r.bid, r.cost, r.reward, r.count, r.tick), (3.0, 0.0, 0.0, 0, 4));
}

#[test]
fn noiseless_win_costs_the_expectation() {
    let s = ScenarioSpec {
        win_bias: 1e4,
        noise_cv: 0.0,
        ..flat_spec()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let r = sample_record(&s, 30.0, 7, &mut rng).unwrap();
    assert_eq!(r.cost, s.true_expected_cost(30.0, 7).unwrap());
    assert_eq!(r.reward, r.cost * s.roi_mean);
    assert!(r.count >= 1);
}

#[test]
fn monte_carlo_matches_the_oracle() {
    let s = default_scenarios(24, 3)[1].clone();
    let (bid, tick) = (35.0, 9);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut zeros = 0usize;
    let mut sum = [0.0; 3];
    for _ in 0..n {
        let r = sample_record(&s, bid, tick, &mut rng).unwrap();
        if r.cost == 0.0 {
            zeros += 1;
        }
        sum[0] += r.cost;
        sum[1] += r.reward;
        sum[2] += r.count as f64;
    }
    let p = s.true_win_prob(bid, tick).unwrap();
    assert!((zeros as f64 / n as f64 - (1.0 - p)).abs() < 0.01);
    let truth = s.true_mean(bid, tick).unwrap();
    for i in 0..3 {
        let mean = sum[i] / n as f64;
        assert!((mean / truth[i] - 1.0).abs() < 0.02, "target {i}: {mean} vs {}", truth[i]);
    }
}

#[test]
fn zero_budget_stops_after_one_record() {
    let s = default_scenarios(24, 0)[0].clone();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for policy in [Policy::RandomWalk, Policy::BudgetPacing] {
        let t = generate_campaign_day(&s, &budget_campaign(0.0), 1, policy, &mut rng).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.complete);
    }
}

#[test]
fn spend_overshoots_by_at_most_one_record() {
    for (k, s) in default_scenarios(48, 5).iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        for budget in [50.0, 300.0, 2000.0] {
            let t = generate_campaign_day(s, &budget_campaign(budget), 1, s.policy, &mut rng).unwrap();
            let max = t.records.iter().map(|r| r.cost).fold(0.0, f64::max);
            assert!(t.total_cost() <= budget + max);
            assert!(t.records.windows(2).all(|w| w[0].tick < w[1].tick));
        }
    }
}

#[test]
fn campaign_generation_is_reproducible() {
    let s = default_scenarios(24, 6)[5].clone();
    assert_eq!(generate_campaign(&s, 3).unwrap(), generate_campaign(&s, 3).unwrap());
    assert_ne!(generate_campaign(&s, 3).unwrap(), generate_campaign(&s, 4).unwrap());
}

#[test]
fn identical_specs_write_identical_bytes() {
    let specs = default_scenarios(16, 8);
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let ds = generate_dataset(&specs, 3).unwrap();
        write_generated(&out, &specs, 3, &ds).unwrap();
        bytes.push((
            std::fs::read(out.join("dataset.jsonl")).unwrap(),
            std::fs::read(out.join("manifest.json")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
    let m = read_manifest(&dir.path().join("a").join("manifest.json")).unwrap();
    assert_eq!(m.scenarios, specs);
}

#[test]
fn dataset_records_scenarios_and_history() {
    let specs = default_scenarios(16, 8);
    let ds = generate_dataset(&specs, 2).unwrap();
    assert_eq!(ds.pairs.len(), 16);
    for p in &ds.pairs {
        assert!(p.history.complete);
        assert_eq!(p.history.day + 1, p.today.day);
        assert!(!p.today.is_empty());
        assert!(specs.iter().any(|s| s.id == p.campaign.scenario));
    }
}

#[test]
fn invalid_specs_are_rejected() {
    let bad = ScenarioSpec {
        periodic_amp: 1.5,
        ..flat_spec()
    };
    assert!(bad.validate().is_err());
    assert!(generate_dataset(&[bad], 1).is_err());
    assert!(generate_dataset(&default_scenarios(8, 0), 0).is_err());
}

proptest! {
    #[test]
    fn win_probability_increases_with_bid(k in 0usize..8, b in 0.01f64..500.0, tick in 0u32..48) {
        let s = &default_scenarios(48, 2)[k];
        prop_assert!(s.true_win_prob(2.0 * b, tick).unwrap() > s.true_win_prob(b, tick).unwrap());
    }

    #[test]
    fn expected_cost_increases_with_bid(k in 0usize..8, b1 in 0.0f64..300.0, gap in 0.01f64..300.0, tick in 0u32..48) {
        let s = &default_scenarios(48, 2)[k];
        prop_assert!(s.true_expected_cost(b1 + gap, tick).unwrap() > s.true_expected_cost(b1, tick).unwrap());
    }

    #[test]
    fn lognormal_unit_is_positive(cv in 0.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = lognormal_unit(cv, &mut rng);
        prop_assert!(v > 0.0 && v.is_finite());
    }
}
