//! Synthetic bidding environment with known ground truth.
//!
//! A scenario fixes the win-probability curve `p(bid, tick)` and the
//! expected outcome given a win `g(bid, tick)`; sampled records have
//! exact zeros on lost ticks and mean `p·g` otherwise.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{write_dataset, BidRecord, Campaign, Dataset, DatasetHeader, DayPair, Trajectory};
use crate::error::{Error, Result};

/// Currency per impression when sampling counts.
pub const PRICE_UNIT: f64 = 10.0;
/// Chance that a tick after the first gets no bid.
pub const SKIP_PROB: f64 = 0.1;
/// Per-tick multiplicative noise of the random-walk policy.
pub const WALK_CV: f64 = 0.1;
/// Length of `Campaign::context`.
pub const CONTEXT_LEN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    RandomWalk,
    BudgetPacing,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: u32,
    pub name: String,
    pub seed: u64,
    pub kappa: f64,
    pub base_scale: f64,
    pub periodic_amp: f64,
    pub periodic_phase: f64,
    pub win_slope: f64,
    pub win_bias: f64,
    pub roi_mean: f64,
    pub noise_cv: f64,
    pub budget_range: [f64; 2],
    pub t_max: usize,
    pub adv_cat_vocab: usize,
    pub prod_cat_vocab: usize,
    pub policy: Policy,
    /// Active share of the day, sampled uniformly per campaign-day.
    pub duration_range: [f64; 2],
    /// Opening bid as a multiple of `kappa`.
    pub bid_level: f64,
    /// Spread of campaign-level cost, win and ROI offsets shared by both days.
    pub campaign_cv: f64,
    /// Spread of the per-day cost shock.
    pub day_cv: f64,
    /// Campaign-level shift of `periodic_phase`, uniform in `±phase_jitter`.
    pub phase_jitter: f64,
}

/// Log-normal multiplier with mean one. Exactly one when `cv == 0`.
pub fn lognormal_unit(cv: f64, rng: &mut impl Rng) -> f64 {
    if cv <= 0.0 {
        return 1.0;
    }
    let s2 = (1.0 + cv * cv).ln();
    let n = Normal::new(-0.5 * s2, s2.sqrt()).expect("finite log-normal parameters");
    n.sample(rng).exp()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("scenario {}: {what}", self.name)));
        if !(self.kappa > 0.0 && self.base_scale > 0.0 && self.roi_mean > 0.0) {
            return bad("kappa, base_scale and roi_mean must be positive");
        }
        if !(0.0..1.0).contains(&self.periodic_amp) {
            return bad("periodic_amp must lie in [0, 1)");
        }
        if !(self.win_slope > 0.0) || self.win_bias.is_nan() {
            return bad("win_slope must be positive");
        }
        if !(self.noise_cv >= 0.0 && self.campaign_cv >= 0.0 && self.day_cv >= 0.0) {
            return bad("coefficients of variation must be non-negative");
        }
        if !(self.phase_jitter >= 0.0 && self.phase_jitter.is_finite()) {
            return bad("phase_jitter must be finite and non-negative");
        }
        let [lo, hi] = self.budget_range;
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return bad("budget_range must satisfy 0 <= low <= high");
        }
        let [dlo, dhi] = self.duration_range;
        if !(dlo > 0.0 && dhi >= dlo && dhi <= 1.0) {
            return bad("duration_range must satisfy 0 < low <= high <= 1");
        }
        if self.t_max == 0 || self.adv_cat_vocab == 0 || self.prod_cat_vocab == 0 {
            return bad("t_max and vocabularies must be positive");
        }
        if !(self.bid_level > 0.0) {
            return bad("bid_level must be positive");
        }
        Ok(())
    }

    pub fn seasonal(&self, tick: u32) -> f64 {
        self.periodic_amp * (2.0 * PI * tick as f64 / self.t_max as f64 + self.periodic_phase).sin()
    }

    fn check_bid(bid: f64) -> Result<()> {
        if bid >= 0.0 && !bid.is_nan() {
            Ok(())
        } else {
            Err(Error::Contract(format!("bid must be non-negative, got {bid}")))
        }
    }

    /// `p(bid, tick)`
    pub fn true_win_prob(&self, bid: f64, tick: u32) -> Result<f64> {
        Self::check_bid(bid)?;
        Ok(sigmoid(
            self.win_bias + self.win_slope * bid.ln_1p() + 0.5 * self.seasonal(tick),
        ))
    }

    /// Expected cost given a win.
    pub fn true_expected_cost(&self, bid: f64, tick: u32) -> Result<f64> {
        Self::check_bid(bid)?;
        let k = self.kappa;
        Ok(self.base_scale * (1.0 + self.seasonal(tick)) * k * (-(-bid / k).exp_m1()))
    }

    /// `g(bid, tick)`: expected (cost, reward, count) given a win.
    pub fn true_expected(&self, bid: f64, tick: u32) -> Result<[f64; 3]> {
        let c = self.true_expected_cost(bid, tick)?;
        Ok([c, c * self.roi_mean, 1.0 + c / PRICE_UNIT])
    }

    /// Unconditional mean `p·g` of each target.
    pub fn true_mean(&self, bid: f64, tick: u32) -> Result<[f64; 3]> {
        let p = self.true_win_prob(bid, tick)?;
        Ok(self.true_expected(bid, tick)?.map(|v| p * v))
    }

    /// Expected spend over ticks `from..to` at a constant bid.
    fn expected_spend(&self, bid: f64, from: u32, to: u32) -> f64 {
        (from..to)
            .map(|t| {
                let p = self.true_win_prob(bid, t).unwrap_or(0.0);
                p * self.true_expected_cost(bid, t).unwrap_or(0.0)
            })
            .sum()
    }

    /// Multiplicative effect of the campaign's categories on spend.
    fn category_effect(&self, adv: usize, prod: usize) -> f64 {
        (0.25 * (1.7 * adv as f64 + 0.9 * prod as f64).sin()).exp()
    }
}

/// One tick of the environment.
pub fn sample_record(spec: &ScenarioSpec, bid: f64, tick: u32, rng: &mut impl Rng) -> Result<BidRecord> {
    let p = spec.true_win_prob(bid, tick)?;
    let u: f64 = rng.random();
    if u >= p {
        return Ok(BidRecord::lost(bid, tick));
    }
    let cost = spec.true_expected_cost(bid, tick)? * lognormal_unit(spec.noise_cv, rng);
    if !(cost > 0.0) {
        return Ok(BidRecord::lost(bid, tick));
    }
    let extra = Poisson::new(cost / PRICE_UNIT)
        .map_err(|e| Error::Contract(format!("count rate {}: {e}", cost / PRICE_UNIT)))?
        .sample(rng) as u64;
    let reward = cost * spec.roi_mean * lognormal_unit(spec.noise_cv, rng);
    Ok(BidRecord {
        bid,
        cost,
        reward,
        count: 1 + extra,
        tick,
    })
}

/// Simulates one campaign-day under `policy`. The active window and
/// opening bid are drawn from `rng`; the first active tick is always bid.
pub fn generate_campaign_day(
    spec: &ScenarioSpec,
    campaign: &Campaign,
    day: i64,
    policy: Policy,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    let t_max = spec.t_max as u32;
    let [dlo, dhi] = spec.duration_range;
    let share = dlo + (dhi - dlo) * rng.random::<f64>();
    let len = ((share * t_max as f64).round() as u32).clamp(1, t_max);
    let start = rng.random_range(0..=t_max - len);
    let end = start + len;
    let (bid_lo, bid_hi) = (0.05 * spec.kappa, 10.0 * spec.kappa);
    let mut bid = (spec.kappa * spec.bid_level * lognormal_unit(0.3, rng)).clamp(bid_lo, bid_hi);

    let mut records = Vec::new();
    let mut spent = 0.0;
    for tick in start..end {
        if !records.is_empty() && rng.random::<f64>() < SKIP_PROB {
            continue;
        }
        let r = sample_record(spec, bid, tick, rng)?;
        spent += r.cost;
        records.push(r);
        if spent >= campaign.budget {
            break;
        }
        bid = match policy {
            Policy::RandomWalk => bid * lognormal_unit(WALK_CV, rng),
            Policy::BudgetPacing => {
                let expected = spec.expected_spend(bid, tick + 1, end);
                if expected > 0.0 {
                    bid * ((campaign.budget - spent) / expected).clamp(0.5, 2.0)
                } else {
                    bid
                }
            }
        }
        .clamp(bid_lo, bid_hi);
    }
    Ok(Trajectory {
        day,
        records,
        complete: true,
    })
}

/// Independent stream per campaign: first 8 bytes of SHA-256(seed ‖ id).
pub fn derive_seed(seed: u64, campaign_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(campaign_id.as_bytes());
    let digest = h.finalize();
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}

/// Draws campaign metadata and both days for campaign `index` of `spec`.
pub fn generate_campaign(spec: &ScenarioSpec, index: usize) -> Result<DayPair> {
    let id = format!("s{}-c{index:05}", spec.id);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &id));
    let adv = rng.random_range(0..spec.adv_cat_vocab);
    let prod = rng.random_range(0..spec.prod_cat_vocab);
    let [lo, hi] = spec.budget_range;
    let budget = lo + (hi - lo) * rng.random::<f64>();

    let mut eff = spec.clone();
    eff.base_scale *= spec.category_effect(adv, prod) * lognormal_unit(spec.campaign_cv, &mut rng);
    eff.roi_mean *= lognormal_unit(spec.campaign_cv, &mut rng);
    if spec.campaign_cv > 0.0 {
        eff.win_bias += Normal::new(0.0, spec.campaign_cv)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(&mut rng);
    }
    if spec.phase_jitter > 0.0 {
        eff.periodic_phase += rng.random_range(-spec.phase_jitter..=spec.phase_jitter);
    }

    let opening = spec.kappa * spec.bid_level;
    let typical = eff.expected_spend(opening, 0, spec.t_max as u32) * 0.5 * (spec.duration_range[0] + spec.duration_range[1]);
    let hist_cost = typical.min(budget.max(1.0)) * lognormal_unit(0.2, &mut rng);
    let context = vec![
        hist_cost / PRICE_UNIT * lognormal_unit(0.2, &mut rng),
        hist_cost,
        eff.roi_mean * lognormal_unit(0.1, &mut rng),
    ];
    let campaign = Campaign {
        id,
        advertiser_category: adv,
        product_category: prod,
        budget,
        context,
        scenario: spec.id,
    };

    let day_spec = |rng: &mut ChaCha8Rng| {
        let mut d = eff.clone();
        d.base_scale *= lognormal_unit(spec.day_cv, rng);
        d
    };
    let h_spec = day_spec(&mut rng);
    let history = generate_campaign_day(&h_spec, &campaign, 0, spec.policy, &mut rng)?;
    let t_spec = day_spec(&mut rng);
    let today = generate_campaign_day(&t_spec, &campaign, 1, spec.policy, &mut rng)?;
    Ok(DayPair {
        campaign,
        history,
        today,
    })
}

/// Generates `n_campaigns_each` campaigns per scenario, in scenario order.
pub fn generate_dataset(specs: &[ScenarioSpec], n_campaigns_each: usize) -> Result<Dataset> {
    if n_campaigns_each == 0 {
        return Err(Error::Contract("need at least one campaign per scenario".into()));
    }
    let first = specs
        .first()
        .ok_or_else(|| Error::Contract("no scenarios given".into()))?;
    for s in specs {
        s.validate()?;
        if s.t_max != first.t_max {
            return Err(Error::Config("all scenarios must share T_max".into()));
        }
    }
    let mut ids: Vec<u32> = specs.iter().map(|s| s.id).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != specs.len() {
        return Err(Error::Config("scenario ids must be unique".into()));
    }
    let jobs: Vec<(&ScenarioSpec, usize)> = specs
        .iter()
        .flat_map(|s| (0..n_campaigns_each).map(move |i| (s, i)))
        .collect();
    let pairs = jobs
        .par_iter()
        .map(|(s, i)| generate_campaign(s, *i))
        .collect::<Result<Vec<_>>>()?;
    let header = DatasetHeader::new(
        specs.iter().map(|s| s.adv_cat_vocab).max().unwrap_or(1),
        specs.iter().map(|s| s.prod_cat_vocab).max().unwrap_or(1),
        CONTEXT_LEN,
        first.t_max,
    );
    Ok(Dataset { header, pairs })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub header: DatasetHeader,
    pub n_campaigns_each: usize,
    pub scenarios: Vec<ScenarioSpec>,
}

/// Writes `dataset.jsonl` and `manifest.json` into `dir`.
pub fn write_generated(dir: &Path, specs: &[ScenarioSpec], n_campaigns_each: usize, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_dataset(dir.join("dataset.jsonl"), dataset)?;
    let manifest = Manifest {
        header: dataset.header.clone(),
        n_campaigns_each,
        scenarios: specs.to_vec(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Data(e.to_string()))?;
    let path = dir.join("manifest.json");
    fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

/// The eight default scenarios: budget pacing vs random walk, small/medium/large
/// budgets, short/medium/long delivery windows.
pub fn default_scenarios(t_max: usize, seed: u64) -> Vec<ScenarioSpec> {
    #[rustfmt::skip]
    let table: [(&str, f64, f64, f64, f64, f64, f64, f64, [f64; 2], Policy, [f64; 2]); 8] = [
        // name   kappa base  amp   phase slope bias  roi   budget            policy                 duration
        ("BCB",  60.0, 2.0, 0.40, 0.0, 1.0, -3.0, 0.06, [1500.0, 4000.0], Policy::BudgetPacing, [0.5, 1.0]),
        ("TR",   40.0, 2.5, 0.30, 1.0, 1.2, -3.5, 0.08, [1500.0, 4000.0], Policy::RandomWalk,   [0.5, 1.0]),
        ("BS",   50.0, 2.0, 0.35, 0.5, 1.0, -2.8, 0.05, [200.0, 800.0],   Policy::BudgetPacing, [0.5, 1.0]),
        ("BM",   50.0, 2.2, 0.35, 0.8, 1.0, -3.0, 0.06, [800.0, 2500.0],  Policy::BudgetPacing, [0.5, 1.0]),
        ("BL",   70.0, 1.8, 0.30, 1.5, 0.9, -2.5, 0.05, [3000.0, 10000.0], Policy::BudgetPacing, [0.5, 1.0]),
        ("D6",   55.0, 2.0, 0.45, 2.0, 1.1, -3.2, 0.07, [500.0, 3000.0],  Policy::RandomWalk,   [0.2, 0.4]),
        ("D12",  45.0, 2.4, 0.35, 2.5, 1.0, -2.9, 0.06, [500.0, 3000.0],  Policy::BudgetPacing, [0.4, 0.7]),
        ("D18",  65.0, 1.9, 0.30, 3.0, 0.9, -2.6, 0.05, [500.0, 3000.0],  Policy::RandomWalk,   [0.7, 1.0]),
    ];
    table
        .iter()
        .enumerate()
        .map(|(i, &(name, kappa, base, amp, phase, slope, bias, roi, budget, policy, duration))| ScenarioSpec {
            id: i as u32,
            name: name.to_string(),
            seed: derive_seed(seed, name),
            kappa,
            base_scale: base,
            periodic_amp: amp,
            periodic_phase: phase,
            win_slope: slope,
            win_bias: bias,
            roi_mean: roi,
            noise_cv: 0.3,
            budget_range: budget,
            t_max,
            adv_cat_vocab: 8,
            prod_cat_vocab: 6,
            policy,
            duration_range: duration,
            bid_level: 1.0,
            campaign_cv: 0.3,
            day_cv: 0.3,
            phase_jitter: PI,
        })
        .collect()
}
