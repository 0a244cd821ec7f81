use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DayPair;
use crate::error::{Error, Result};

/// Pair indices grouped by campaign id, ids in sorted order.
fn campaigns(pairs: &[DayPair]) -> Vec<Vec<usize>> {
    let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in pairs.iter().enumerate() {
        by_id.entry(p.campaign.id.as_str()).or_default().push(i);
    }
    by_id.into_values().collect()
}

/// Largest-remainder allocation of `n` items, at least one per positive share.
fn allocate(n: usize, ratios: &[f64]) -> Vec<usize> {
    let total: f64 = ratios.iter().sum();
    let exact: Vec<f64> = ratios.iter().map(|r| r / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let left = n - counts.iter().sum::<usize>();
    for &i in order.iter().cycle().take(left) {
        counts[i] += 1;
    }
    while let Some(empty) = (0..counts.len()).find(|&i| counts[i] == 0 && ratios[i] > 0.0) {
        let donor = (0..counts.len()).max_by_key(|&i| (counts[i], usize::MAX - i)).unwrap_or(0);
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Campaign-disjoint split. Returns pair indices per share, in input order.
pub fn split_dataset(pairs: &[DayPair], ratios: &[f64], seed: u64) -> Result<Vec<Vec<usize>>> {
    if ratios.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || !ratios.iter().any(|r| *r > 0.0) {
        return Err(Error::Contract(format!(
            "split ratios must be non-negative with a positive sum, got {ratios:?}"
        )));
    }
    let mut groups = campaigns(pairs);
    let needed = ratios.iter().filter(|r| **r > 0.0).count();
    if groups.len() < needed {
        return Err(Error::Data(format!(
            "{} campaigns cannot fill {needed} splits",
            groups.len()
        )));
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let counts = allocate(groups.len(), ratios);
    let mut out = Vec::with_capacity(ratios.len());
    let mut it = groups.into_iter();
    for c in counts {
        let mut idx: Vec<usize> = it.by_ref().take(c).flatten().collect();
        idx.sort_unstable();
        out.push(idx);
    }
    Ok(out)
}

/// Splits pairs into (kept, held out) by generating scenario.
pub fn partition_by_scenario(pairs: &[DayPair], holdout: &[u32]) -> (Vec<DayPair>, Vec<DayPair>) {
    pairs
        .iter()
        .cloned()
        .partition(|p| !holdout.contains(&p.campaign.scenario))
}

/// Seeded subsample of whole campaigns covering `fraction` of them (at least one).
pub fn subsample_campaigns(pairs: &[DayPair], fraction: f64, seed: u64) -> Result<Vec<DayPair>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Contract(format!("fraction must lie in (0, 1], got {fraction}")));
    }
    let mut groups = campaigns(pairs);
    if groups.is_empty() {
        return Err(Error::Data("nothing to subsample".into()));
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep = ((fraction * groups.len() as f64).ceil() as usize).clamp(1, groups.len());
    let mut idx: Vec<usize> = groups.into_iter().take(keep).flatten().collect();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| pairs[i].clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::allocate;

    #[test]
    fn allocation_covers_every_share() {
        assert_eq!(allocate(3, &[1.0, 1.0, 1.0]), vec![1, 1, 1]);
        assert_eq!(allocate(10, &[0.98, 0.01, 0.01]), vec![8, 1, 1]);
        assert_eq!(allocate(7, &[1.0, 1.0, 1.0]).iter().sum::<usize>(), 7);
        assert_eq!(allocate(5, &[0.8, 0.2, 0.0]), vec![4, 1, 0]);
        assert_eq!(allocate(2, &[0.0, 0.99, 0.01]), vec![0, 1, 1]);
    }
}
