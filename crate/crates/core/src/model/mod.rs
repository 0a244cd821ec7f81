//! The bidding transformer: embeddings, variable encoder, causal temporal
//! decoder, variable-aware fusion and zero-inflated heads.

mod embedding;
mod layers;
mod params;

use bid2x_tensor::{Graph, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use embedding::{positional_encoding, Embedding};
pub use layers::{causal_mask, AttentionBlock, LayerNorm, Linear, Mlp, LN_EPS};
pub use params::{Bound, ParamId, ParamStore};

use crate::data::{ModelInput, NormStats, C0, C2, COL_TARGET};
use crate::error::{Error, Result};
use embedding::EmbeddingShape;
pub(crate) use params::Init;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub t_max: usize,
    pub d_model: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub heads: usize,
    /// Feed-forward width as a multiple of `d_model`.
    pub ffn_mult: usize,
    pub adv_cat_vocab: usize,
    pub prod_cat_vocab: usize,
    /// Budget plus context features.
    pub n_continuous: usize,
    pub shared_history_projection: bool,
    /// Pass the magnitude head through softplus so it stays non-negative.
    pub softplus_magnitude: bool,
    /// `false` drops the variable encoder and fusion gate.
    pub variable_attention: bool,
    /// `false` zeroes the target entries of today's tokens.
    pub today_targets: bool,
    /// `false` drops the classification head: `ŷ = ỹ`, squared error only.
    pub zero_inflated: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            t_max: 96,
            d_model: 64,
            encoder_layers: 2,
            decoder_layers: 2,
            heads: 1,
            ffn_mult: 4,
            adv_cat_vocab: 8,
            prod_cat_vocab: 6,
            n_continuous: 4,
            shared_history_projection: true,
            softplus_magnitude: false,
            variable_attention: true,
            today_targets: true,
            zero_inflated: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("model: {m}")));
        if self.t_max == 0 || self.d_model == 0 || self.ffn_mult == 0 {
            return bad("t_max, d_model and ffn_mult must be positive");
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return bad("layer counts must be at least 1");
        }
        if self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("heads must divide d_model");
        }
        if self.adv_cat_vocab == 0 || self.prod_cat_vocab == 0 {
            return bad("vocabularies must be non-empty");
        }
        Ok(())
    }
}

/// Per-target heads.
#[derive(Clone, Debug)]
pub struct TargetHeads {
    pub cls: Option<Mlp>,
    pub val: Mlp,
    pub cum: Mlp,
}

#[derive(Clone, Debug)]
pub struct Bid2x {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub embedding: Embedding,
    pub encoder: Vec<AttentionBlock>,
    pub decoder: Vec<AttentionBlock>,
    pub fusion: Option<Mlp>,
    pub heads: Vec<TargetHeads>,
}

/// Graph handles for one target, each `[n × 1]`.
#[derive(Clone, Copy, Debug)]
pub struct TargetOut {
    pub p: Option<Var>,
    pub magnitude: Var,
    pub y_hat: Var,
    pub cum: Var,
}

#[derive(Clone, Debug)]
pub struct Forward {
    pub rows: usize,
    pub h_var: Option<Var>,
    pub h_tem: Var,
    pub fused: Vec<Var>,
    pub targets: Vec<TargetOut>,
    pub encoder_attention: Vec<Var>,
    pub decoder_attention: Vec<Var>,
}

/// Plain values of one forward pass, normalized scale, `[slot][target]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SlotOutputs {
    pub p: Vec<[f64; C2]>,
    pub magnitude: Vec<[f64; C2]>,
    pub y_hat: Vec<[f64; C2]>,
    pub cum: Vec<[f64; C2]>,
}

impl SlotOutputs {
    pub fn len(&self) -> usize {
        self.y_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y_hat.is_empty()
    }
}

impl Bid2x {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Bid2x> {
        config.validate()?;
        let mut params = ParamStore::default();
        let mut init = Init {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let d = config.d_model;
        let ffn = d * config.ffn_mult;
        let embedding = Embedding::new(
            &mut init,
            &EmbeddingShape {
                t: config.t_max,
                d,
                vocab: [config.adv_cat_vocab, config.prod_cat_vocab],
                n_continuous: config.n_continuous,
                with_history: config.variable_attention,
                shared_history: config.shared_history_projection,
            },
        );
        let encoder = if config.variable_attention {
            (0..config.encoder_layers)
                .map(|l| AttentionBlock::new(&mut init, &format!("encoder.{l}"), d, ffn, config.heads))
                .collect()
        } else {
            Vec::new()
        };
        let decoder = (0..config.decoder_layers)
            .map(|l| AttentionBlock::new(&mut init, &format!("decoder.{l}"), d, ffn, config.heads))
            .collect();
        let fusion = config
            .variable_attention
            .then(|| Mlp::new(&mut init, "fusion", 2 * d, ffn, d));
        let heads = crate::data::TARGETS
            .iter()
            .map(|t| TargetHeads {
                cls: config
                    .zero_inflated
                    .then(|| Mlp::new(&mut init, &format!("head.{t}.cls"), d, d, 1)),
                val: Mlp::new(&mut init, &format!("head.{t}.val"), d, d, 1),
                cum: Mlp::new(&mut init, &format!("head.{t}.cum"), d, d, 1),
            })
            .collect();
        Ok(Bid2x {
            config,
            params,
            embedding,
            encoder,
            decoder,
            fusion,
            heads,
        })
    }

    /// Forward pass over the valid slots only. Because pad slots are masked
    /// out of every attention row, this equals [`Bid2x::forward_padded`] on
    /// those slots bit for bit.
    pub fn forward(&self, g: &mut Graph, p: &Bound, input: &ModelInput) -> Result<Forward> {
        self.forward_rows(g, p, input, input.n_valid)
    }

    /// Forward pass over all `T` slots, pad slots included.
    pub fn forward_padded(&self, g: &mut Graph, p: &Bound, input: &ModelInput) -> Result<Forward> {
        self.forward_rows(g, p, input, input.today.shape()[0])
    }

    fn forward_rows(&self, g: &mut Graph, p: &Bound, input: &ModelInput, n: usize) -> Result<Forward> {
        let t = self.config.t_max;
        if input.hist.shape() != [C0, t] || input.today.shape() != [t, C0] {
            return Err(Error::Contract(format!(
                "input shaped for T={}, model expects T={t}",
                input.today.shape()[0]
            )));
        }
        if input.n_valid == 0 || input.n_valid > n {
            return Err(Error::Contract(format!("{} valid slots for {n} rows", input.n_valid)));
        }
        let d = self.config.d_model;
        let mut tokens = Tensor::new(vec![n, C0], input.today.data()[..n * C0].to_vec())?;
        if !self.config.today_targets {
            for row in tokens.data_mut().chunks_mut(C0) {
                row[COL_TARGET..].fill(0.0);
            }
        }
        let campaign = self.embedding.campaign(g, p, input.categories, &input.continuous)?;

        let mut h = self.embedding.today(g, p, &tokens, campaign)?;
        let valid = &input.mask[..n];
        let mask = g.constant(Tensor::new(vec![n, n], causal_mask(valid))?);
        let row_keep = (n > input.n_valid).then(|| {
            let data = (0..n).flat_map(|s| std::iter::repeat_n(valid[s], d)).collect();
            g.constant(Tensor::new(vec![n, d], data).expect("row mask shape"))
        });
        let mut decoder_attention = Vec::new();
        for block in &self.decoder {
            let (out, maps) = block.forward(g, p, h, Some(mask))?;
            decoder_attention.extend(maps);
            h = match row_keep {
                Some(k) => g.mul(out, k)?,
                None => out,
            };
        }
        let h_tem = h;

        let mut encoder_attention = Vec::new();
        let (h_var, fused) = match &self.fusion {
            Some(fusion) => {
                let mut z = self.embedding.history(g, p, &input.hist, campaign)?;
                for block in &self.encoder {
                    let (out, maps) = block.forward(g, p, z, None)?;
                    encoder_attention.extend(maps);
                    z = out;
                }
                let mut fused = Vec::with_capacity(C2);
                for i in 0..C2 {
                    let hi = g.row(z, COL_TARGET + i)?;
                    let rep = g.repeat_rows(hi, n)?;
                    let cat = g.concat_lastdim(&[rep, h_tem])?;
                    let pre = fusion.forward(g, p, cat)?;
                    let gate = g.sigmoid(pre);
                    fused.push(g.mul(gate, h_tem)?);
                }
                (Some(z), fused)
            }
            None => (None, vec![h_tem; C2]),
        };

        let mut targets = Vec::with_capacity(C2);
        for (head, &hi) in self.heads.iter().zip(&fused) {
            let mut magnitude = head.val.forward(g, p, hi)?;
            if self.config.softplus_magnitude {
                magnitude = g.softplus(magnitude);
            }
            let (prob, y_hat) = match &head.cls {
                Some(cls) => {
                    let logit = cls.forward(g, p, hi)?;
                    let prob = g.sigmoid(logit);
                    (Some(prob), g.mul(prob, magnitude)?)
                }
                None => (None, magnitude),
            };
            let cum = head.cum.forward(g, p, hi)?;
            targets.push(TargetOut {
                p: prob,
                magnitude,
                y_hat,
                cum,
            });
        }
        Ok(Forward {
            rows: n,
            h_var,
            h_tem,
            fused,
            targets,
            encoder_attention,
            decoder_attention,
        })
    }

    /// Gradient-free forward over the valid slots, returning plain values.
    pub fn predict(&self, input: &ModelInput) -> Result<SlotOutputs> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, false);
        let f = self.forward(&mut g, &p, input)?;
        Ok(f.outputs(&g))
    }
}

impl Forward {
    pub fn outputs(&self, g: &Graph) -> SlotOutputs {
        let n = self.rows;
        let col = |sel: &dyn Fn(&TargetOut) -> Option<Var>, default: f64| -> Vec<[f64; C2]> {
            (0..n)
                .map(|s| {
                    std::array::from_fn(|i| match sel(&self.targets[i]) {
                        Some(v) => g.value(v).data()[s],
                        None => default,
                    })
                })
                .collect()
        };
        SlotOutputs {
            p: col(&|t| t.p, 1.0),
            magnitude: col(&|t| Some(t.magnitude), 0.0),
            y_hat: col(&|t| Some(t.y_hat), 0.0),
            cum: col(&|t| Some(t.cum), 0.0),
        }
    }
}

/// A trained model together with the statistics its inputs were scaled by.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub model: Bid2x,
    pub stats: NormStats,
}
