//! Zero-inflated joint loss, cumulative loss and their combination.

use bid2x_tensor::{Graph, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::data::{SlotTargets, C2, TARGETS};
use crate::error::{Error, Result};
use crate::model::Forward;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` inside the log.
pub const PROB_CLAMP: f64 = 1e-7;

fn column(g: &mut Graph, values: Vec<f64>) -> Result<Var> {
    let n = values.len();
    Ok(g.constant(Tensor::new(vec![n, 1], values)?))
}

fn masked_sum(g: &mut Graph, x: Var, mask: Var, denom: f64) -> Result<Var> {
    let m = g.mul(x, mask)?;
    let s = g.sum(m);
    Ok(g.scale(s, 1.0 / denom))
}

/// Binary cross entropy of `p` against `I{y_raw ≠ 0}` and squared error of
/// `y_hat` against `y_norm`, each summed over masked slots and divided by
/// `denom`. All slices have one entry per row of `p`/`y_hat`.
pub fn zip_terms(
    g: &mut Graph,
    p: Option<Var>,
    y_hat: Var,
    y_raw: &[f64],
    y_norm: &[f64],
    mask: &[f64],
    denom: f64,
) -> Result<(Option<Var>, Var)> {
    let m = column(g, mask.to_vec())?;
    let bce = match p {
        Some(p) => {
            let nz: Vec<f64> = y_raw.iter().map(|&y| if y != 0.0 { 1.0 } else { 0.0 }).collect();
            let z: Vec<f64> = nz.iter().map(|v| 1.0 - v).collect();
            let nz = column(g, nz)?;
            let z = column(g, z)?;
            let pc = g.clamp(p, PROB_CLAMP, 1.0 - PROB_CLAMP);
            let lp = g.ln(pc);
            let q = g.one_minus(pc);
            let lq = g.ln(q);
            let a = g.mul(nz, lp)?;
            let b = g.mul(z, lq)?;
            let ll = g.add(a, b)?;
            let s = masked_sum(g, ll, m, denom)?;
            Some(g.scale(s, -1.0))
        }
        None => None,
    };
    let y = column(g, y_norm.to_vec())?;
    let r = g.sub(y_hat, y)?;
    let r2 = g.square(r);
    let mse = masked_sum(g, r2, m, denom)?;
    Ok((bce, mse))
}

pub fn mse_term(g: &mut Graph, pred: Var, target: &[f64], mask: &[f64], denom: f64) -> Result<Var> {
    let m = column(g, mask.to_vec())?;
    let y = column(g, target.to_vec())?;
    let r = g.sub(pred, y)?;
    let r2 = g.square(r);
    masked_sum(g, r2, m, denom)
}

#[derive(Clone, Copy, Debug)]
pub struct TargetLossVars {
    pub bce: Option<Var>,
    pub mse: Var,
    pub cum: Var,
}

#[derive(Clone, Debug)]
pub struct LossVars {
    pub total: Var,
    pub zip: Var,
    pub cum: Var,
    pub per_target: Vec<TargetLossVars>,
}

/// Builds `zip + γ·cum` for one sample. Dividing by `denom` (the valid-slot
/// count of the whole batch) makes per-sample losses sum to the batch mean.
pub fn model_loss(g: &mut Graph, fwd: &Forward, targets: &SlotTargets, gamma: f64, denom: f64) -> Result<LossVars> {
    let n = fwd.rows;
    let valid = targets.raw.len();
    if valid == 0 || denom <= 0.0 {
        return Err(Error::Contract("loss needs at least one valid slot".into()));
    }
    if valid > n {
        return Err(Error::Contract(format!("{valid} targets for {n} predicted slots")));
    }
    let mask: Vec<f64> = (0..n).map(|s| if s < valid { 1.0 } else { 0.0 }).collect();
    let pick = |rows: &[[f64; C2]], i: usize| -> Vec<f64> {
        (0..n).map(|s| rows.get(s).map_or(0.0, |r| r[i])).collect()
    };
    let mut per_target = Vec::with_capacity(C2);
    let mut zip_parts = Vec::new();
    let mut cum_parts = Vec::new();
    for (i, out) in fwd.targets.iter().enumerate() {
        let (bce, mse) = zip_terms(
            g,
            out.p,
            out.y_hat,
            &pick(&targets.raw, i),
            &pick(&targets.norm, i),
            &mask,
            denom,
        )?;
        let cum = mse_term(g, out.cum, &pick(&targets.cum_norm, i), &mask, denom)?;
        zip_parts.extend(bce);
        zip_parts.push(mse);
        cum_parts.push(cum);
        per_target.push(TargetLossVars { bce, mse, cum });
    }
    let zip = sum_all(g, &zip_parts)?;
    let cum = sum_all(g, &cum_parts)?;
    let weighted = g.scale(cum, gamma);
    let total = g.add(zip, weighted)?;
    Ok(LossVars {
        total,
        zip,
        cum,
        per_target,
    })
}

fn sum_all(g: &mut Graph, parts: &[Var]) -> Result<Var> {
    let mut acc = parts[0];
    for &p in &parts[1..] {
        acc = g.add(acc, p)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetLoss {
    pub target: String,
    pub bce: f64,
    pub mse: f64,
    pub cum: f64,
}

/// Plain-number breakdown of a loss. `total = zip_loss + γ·cum_loss`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub zip_loss: f64,
    pub bce_part: f64,
    pub mse_part: f64,
    pub cum_loss: f64,
    pub per_target: Vec<TargetLoss>,
    pub valid_slot_count: usize,
}

impl LossReport {
    pub fn read(g: &Graph, v: &LossVars, valid_slots: usize) -> LossReport {
        let val = |x: Var| g.value(x).item();
        let per_target: Vec<TargetLoss> = v
            .per_target
            .iter()
            .zip(TARGETS)
            .map(|(t, name)| TargetLoss {
                target: name.to_string(),
                bce: t.bce.map_or(0.0, val),
                mse: val(t.mse),
                cum: val(t.cum),
            })
            .collect();
        LossReport {
            total: val(v.total),
            zip_loss: val(v.zip),
            bce_part: per_target.iter().map(|t| t.bce).sum(),
            mse_part: per_target.iter().map(|t| t.mse).sum(),
            cum_loss: val(v.cum),
            per_target,
            valid_slot_count: valid_slots,
        }
    }

    /// Adds another sample's contribution (both built with the same denominator).
    pub fn accumulate(&mut self, other: &LossReport) {
        if self.per_target.is_empty() {
            self.per_target = other
                .per_target
                .iter()
                .map(|t| TargetLoss {
                    target: t.target.clone(),
                    ..Default::default()
                })
                .collect();
        }
        self.total += other.total;
        self.zip_loss += other.zip_loss;
        self.bce_part += other.bce_part;
        self.mse_part += other.mse_part;
        self.cum_loss += other.cum_loss;
        for (a, b) in self.per_target.iter_mut().zip(&other.per_target) {
            a.bce += b.bce;
            a.mse += b.mse;
            a.cum += b.cum;
        }
        self.valid_slot_count += other.valid_slot_count;
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("bce", self.bce_part),
            ("mse", self.mse_part),
            ("zip_loss", self.zip_loss),
            ("cum_loss", self.cum_loss),
            ("total", self.total),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

/// Mean zero-inflated loss of one target over the masked slots, on plain numbers.
pub fn zip_loss(p: &[f64], y_hat: &[f64], y_raw: &[f64], y_norm: &[f64], mask: &[f64]) -> Result<f64> {
    let count: f64 = mask.iter().sum();
    if count <= 0.0 {
        return Err(Error::Contract("zip loss needs at least one valid slot".into()));
    }
    let mut g = Graph::new();
    let pv = column(&mut g, p.to_vec())?;
    let yv = column(&mut g, y_hat.to_vec())?;
    let (bce, mse) = zip_terms(&mut g, Some(pv), yv, y_raw, y_norm, mask, count)?;
    Ok(bce.map_or(0.0, |b| g.value(b).item()) + g.value(mse).item())
}

/// Masked mean squared error on plain numbers.
pub fn cum_loss(pred: &[f64], target: &[f64], mask: &[f64]) -> Result<f64> {
    let count: f64 = mask.iter().sum();
    if count <= 0.0 {
        return Err(Error::Contract("cumulative loss needs at least one valid slot".into()));
    }
    let mut g = Graph::new();
    let pv = column(&mut g, pred.to_vec())?;
    let mse = mse_term(&mut g, pv, target, mask, count)?;
    Ok(g.value(mse).item())
}

pub fn total_loss(zip: f64, cum: f64, gamma: f64) -> f64 {
    zip + gamma * cum
}
