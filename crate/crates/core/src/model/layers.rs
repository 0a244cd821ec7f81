use bid2x_tensor::{Graph, Var, MASK_NEG};

use super::params::{Bound, Init, ParamId};
use crate::error::Result;

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub(crate) fn new(init: &mut Init, name: &str, fan_in: usize, fan_out: usize, bias: bool) -> Linear {
        let w = init.uniform(&format!("{name}.w"), &[fan_in, fan_out], fan_in);
        let b = bias.then(|| init.constant(&format!("{name}.b"), &[fan_out], 0.0));
        Linear { w, b }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.w))?;
        Ok(match self.b {
            Some(b) => g.broadcast_add(y, p.var(b))?,
            None => y,
        })
    }
}

/// Two affine maps with a rectifier between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub first: Linear,
    pub second: Linear,
}

impl Mlp {
    pub(crate) fn new(init: &mut Init, name: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Mlp {
        Mlp {
            first: Linear::new(init, &format!("{name}.0"), d_in, d_hidden, true),
            second: Linear::new(init, &format!("{name}.1"), d_hidden, d_out, true),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let h = self.first.forward(g, p, x)?;
        let h = g.relu(h);
        self.second.forward(g, p, h)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub(crate) fn new(init: &mut Init, name: &str, d: usize) -> LayerNorm {
        LayerNorm {
            gain: init.constant(&format!("{name}.gain"), &[d], 1.0),
            bias: init.constant(&format!("{name}.bias"), &[d], 0.0),
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        Ok(g.layer_norm(x, p.var(self.gain), p.var(self.bias), LN_EPS)?)
    }
}

/// Post-norm self-attention block: `LN(Z + A·V)` then `LN(X + FFN(X))`.
#[derive(Clone, Debug)]
pub struct AttentionBlock {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub ffn: Mlp,
    pub ln1: LayerNorm,
    pub ln2: LayerNorm,
    pub heads: usize,
    pub d: usize,
}

impl AttentionBlock {
    pub(crate) fn new(init: &mut Init, name: &str, d: usize, ffn_width: usize, heads: usize) -> AttentionBlock {
        AttentionBlock {
            wq: init.uniform(&format!("{name}.wq"), &[d, d], d),
            wk: init.uniform(&format!("{name}.wk"), &[d, d], d),
            wv: init.uniform(&format!("{name}.wv"), &[d, d], d),
            ffn: Mlp::new(init, &format!("{name}.ffn"), d, ffn_width, d),
            ln1: LayerNorm::new(init, &format!("{name}.ln1"), d),
            ln2: LayerNorm::new(init, &format!("{name}.ln2"), d),
            heads,
            d,
        }
    }

    /// `mask` is an additive `[n×n]` score mask. Returns the block output
    /// and one attention map per head.
    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var, mask: Option<Var>) -> Result<(Var, Vec<Var>)> {
        let q = g.matmul(x, p.var(self.wq))?;
        let k = g.matmul(x, p.var(self.wk))?;
        let v = g.matmul(x, p.var(self.wv))?;
        let dh = self.d / self.heads;
        let mut maps = Vec::with_capacity(self.heads);
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let scores = g.matmul_t(qh, kh)?;
            let mut scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
            if let Some(m) = mask {
                scores = g.add(scores, m)?;
            }
            let a = g.softmax_lastdim(scores);
            maps.push(a);
            outs.push(g.matmul(a, vh)?);
        }
        let attended = if outs.len() == 1 { outs[0] } else { g.concat_lastdim(&outs)? };
        let r = g.add(x, attended)?;
        let x1 = self.ln1.forward(g, p, r)?;
        let f = self.ffn.forward(g, p, x1)?;
        let r2 = g.add(x1, f)?;
        Ok((self.ln2.forward(g, p, r2)?, maps))
    }
}

/// Additive mask letting query `s` see keys `j ≤ s` with `valid[j] = 1`.
pub fn causal_mask(valid: &[f64]) -> Vec<f64> {
    let n = valid.len();
    let mut m = vec![MASK_NEG; n * n];
    for s in 0..n {
        for j in 0..=s {
            if valid[j] != 0.0 {
                m[s * n + j] = 0.0;
            }
        }
    }
    m
}
