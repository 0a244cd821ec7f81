use bid2x_tensor::{Graph, Tensor, Var};

use super::layers::Linear;
use super::params::{Bound, Init, ParamId};
use crate::data::{C0, COL_TICK};
use crate::error::{Error, Result};

/// Sinusoidal table `[T × D]`: `p[i,2d] = sin(i / (2T)^(2d/D))`,
/// `p[i,2d+1] = cos(i / (2T)^(2d/D))`.
pub fn positional_encoding(t: usize, d: usize) -> Tensor {
    let base = 2.0 * t as f64;
    let mut data = vec![0.0; t * d];
    for i in 0..t {
        for c in 0..d {
            let pair = (c / 2 * 2) as f64;
            let angle = i as f64 / base.powf(pair / d as f64);
            data[i * d + c] = if c % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![t, d], data).expect("positional table shape")
}

#[derive(Clone, Debug)]
pub struct Embedding {
    /// One shared `[T × D]` map, or one per variable.
    pub hist: Vec<ParamId>,
    pub today: ParamId,
    pub tick: Linear,
    pub adv_table: ParamId,
    pub prod_table: ParamId,
    /// `[1 × D]` weight plus `[D]` bias per continuous feature.
    pub continuous: Vec<Linear>,
    pub positional: Tensor,
    pub vocab: [usize; 2],
}

pub(crate) struct EmbeddingShape {
    pub t: usize,
    pub d: usize,
    pub vocab: [usize; 2],
    pub n_continuous: usize,
    pub with_history: bool,
    pub shared_history: bool,
}

impl Embedding {
    pub(crate) fn new(init: &mut Init, s: &EmbeddingShape) -> Embedding {
        let hist = match (s.with_history, s.shared_history) {
            (false, _) => Vec::new(),
            (true, true) => vec![init.uniform("embed.hist", &[s.t, s.d], s.t)],
            (true, false) => (0..C0)
                .map(|c| init.uniform(&format!("embed.hist.{c}"), &[s.t, s.d], s.t))
                .collect(),
        };
        Embedding {
            hist,
            today: init.uniform("embed.today", &[C0, s.d], C0),
            tick: Linear::new(init, "embed.tick", 1, s.d, true),
            adv_table: init.uniform("embed.adv", &[s.vocab[0], s.d], s.d),
            prod_table: init.uniform("embed.prod", &[s.vocab[1], s.d], s.d),
            continuous: (0..s.n_continuous)
                .map(|j| Linear::new(init, &format!("embed.cont.{j}"), 1, s.d, true))
                .collect(),
            positional: positional_encoding(s.t, s.d),
            vocab: s.vocab,
        }
    }

    /// Sum of category rows and per-feature projections, as a `[D]` vector.
    pub fn campaign(&self, g: &mut Graph, p: &Bound, categories: [usize; 2], continuous: &[f64]) -> Result<Var> {
        for (k, (&idx, &vocab)) in categories.iter().zip(&self.vocab).enumerate() {
            if idx >= vocab {
                return Err(Error::Lookup {
                    table: if k == 0 { "advertiser_category" } else { "product_category" },
                    index: idx,
                    vocab,
                });
            }
        }
        if continuous.len() != self.continuous.len() {
            return Err(Error::Contract(format!(
                "expected {} continuous features, got {}",
                self.continuous.len(),
                continuous.len()
            )));
        }
        let a = g.row(p.var(self.adv_table), categories[0])?;
        let b = g.row(p.var(self.prod_table), categories[1])?;
        let mut acc = g.add(a, b)?;
        for (lin, &x) in self.continuous.iter().zip(continuous) {
            let w = g.row(p.var(lin.w), 0)?;
            let wx = g.scale(w, x);
            acc = g.add(acc, wx)?;
            if let Some(bias) = lin.b {
                acc = g.add(acc, p.var(bias))?;
            }
        }
        Ok(acc)
    }

    /// `[C₀ × T]` series to `[C₀ × D]`, plus the campaign vector on every row.
    pub fn history(&self, g: &mut Graph, p: &Bound, series: &Tensor, campaign: Var) -> Result<Var> {
        let x = g.constant(series.clone());
        let z = if self.hist.len() == 1 {
            g.matmul(x, p.var(self.hist[0]))?
        } else {
            let rows = (0..C0)
                .map(|c| {
                    let r = g.row(x, c)?;
                    let r = g.reshape(r, vec![1, series.shape()[1]])?;
                    Ok(g.matmul(r, p.var(self.hist[c]))?)
                })
                .collect::<Result<Vec<_>>>()?;
            let stacked = g.concat_lastdim(&rows)?;
            let d = g.shape(rows[0])[1];
            g.reshape(stacked, vec![C0, d])?
        };
        Ok(g.broadcast_add(z, campaign)?)
    }

    /// `[n × C₀]` tokens to `[n × D]`: projection, tick embedding,
    /// positional rows `0..n`, campaign vector.
    pub fn today(&self, g: &mut Graph, p: &Bound, tokens: &Tensor, campaign: Var) -> Result<Var> {
        let n = tokens.shape()[0];
        let d = self.positional.shape()[1];
        if n > self.positional.shape()[0] {
            return Err(Error::Truncation {
                needed: n,
                limit: self.positional.shape()[0],
            });
        }
        let ticks: Vec<f64> = (0..n).map(|s| tokens.at(s, COL_TICK)).collect();
        let x = g.constant(tokens.clone());
        let z = g.matmul(x, p.var(self.today))?;
        let tcol = g.constant(Tensor::new(vec![n, 1], ticks)?);
        let te = self.tick.forward(g, p, tcol)?;
        let z = g.add(z, te)?;
        let pos = g.constant(Tensor::new(vec![n, d], self.positional.data()[..n * d].to_vec())?);
        let z = g.add(z, pos)?;
        Ok(g.broadcast_add(z, campaign)?)
    }
}
