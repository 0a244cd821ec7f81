//! Container format: a magic line, the manifest byte length, a JSON manifest,
//! then raw little-endian f64 buffers addressed by the manifest.

use std::fs;
use std::path::Path;

use bid2x_tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::model::{Bid2x, Fitted, ModelConfig};
use crate::optim::{Adam, AdamConfig};
use crate::train::{TrainConfig, TrainState};

const MAGIC: &str = "BID2X-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Bid2x,
    pub train_config: TrainConfig,
    pub stats: NormStats,
    pub state: Option<TrainState>,
    /// Scenarios whose data the parameters have seen.
    pub train_scenarios: Vec<u32>,
}

impl Checkpoint {
    pub fn fitted(&self) -> Fitted {
        Fitted {
            model: self.model.clone(),
            stats: self.stats.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: String,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    model: ModelConfig,
    train: TrainConfig,
    stats: NormStats,
    train_scenarios: Vec<u32>,
    epoch: usize,
    step: usize,
    adam: Option<(AdamConfig, u64)>,
    rng: Option<RngState>,
    tensors: Vec<Entry>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    let bad = || Error::Checkpoint(format!("bad rng seed {s:?}"));
    if s.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let mut tensors = Vec::new();
    let mut blob: Vec<u8> = Vec::new();
    let mut push = |key: String, t: &Tensor| {
        tensors.push(Entry {
            key,
            shape: t.shape().to_vec(),
            offset: blob.len(),
        });
        for v in t.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    };
    let p = &ck.model.params;
    for id in p.ids() {
        push(format!("param/{}", p.name(id)), p.get(id));
    }
    if let Some(st) = &ck.state {
        for (k, id) in p.ids().enumerate() {
            push(format!("adam.m/{}", p.name(id)), &st.adam.m[k]);
            push(format!("adam.v/{}", p.name(id)), &st.adam.v[k]);
        }
    }
    let manifest = Manifest {
        version: FORMAT_VERSION,
        model: ck.model.config.clone(),
        train: ck.train_config.clone(),
        stats: ck.stats.clone(),
        train_scenarios: ck.train_scenarios.clone(),
        epoch: ck.state.as_ref().map_or(0, |s| s.epoch),
        step: ck.state.as_ref().map_or(0, |s| s.step),
        adam: ck.state.as_ref().map(|s| (s.adam.config, s.adam.step)),
        rng: ck.state.as_ref().map(|s| RngState {
            seed: hex(&s.rng.get_seed()),
            word_pos: s.rng.get_word_pos().to_string(),
        }),
        tensors,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = format!("{MAGIC} {FORMAT_VERSION}\n{}\n", text.len()).into_bytes();
    out.extend_from_slice(text.as_bytes());
    out.extend_from_slice(&blob);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn take_line<'a>(bytes: &'a [u8], at: &mut usize) -> Result<&'a str> {
    let rest = &bytes[*at..];
    let end = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    *at += end + 1;
    std::str::from_utf8(&rest[..end]).map_err(|_| Error::Checkpoint("header is not text".into()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut at = 0;
    let magic = take_line(&bytes, &mut at)?;
    let version = magic
        .strip_prefix(MAGIC)
        .map(str::trim)
        .ok_or_else(|| Error::Checkpoint("not a checkpoint file".into()))?;
    if version != FORMAT_VERSION.to_string() {
        return Err(Error::Checkpoint(format!(
            "version mismatch: file has {version}, reader supports {FORMAT_VERSION}"
        )));
    }
    let len: usize = take_line(&bytes, &mut at)?
        .parse()
        .map_err(|_| Error::Checkpoint("bad manifest length".into()))?;
    let text = bytes
        .get(at..at + len)
        .ok_or_else(|| Error::Checkpoint("truncated manifest".into()))?;
    let m: Manifest = serde_json::from_slice(text).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
    if m.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("version mismatch: manifest has {}", m.version)));
    }
    let blob = &bytes[at + len..];

    let read = |e: &Entry| -> Result<Tensor> {
        let n: usize = e.shape.iter().product();
        let raw = blob
            .get(e.offset..e.offset + 8 * n)
            .ok_or_else(|| Error::Checkpoint(format!("buffer for {} out of range", e.key)))?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Tensor::new(e.shape.clone(), data)?)
    };
    let find = |key: &str| m.tensors.iter().find(|e| e.key == key);

    let mut model = Bid2x::new(m.model.clone(), 0)?;
    let ids: Vec<_> = model.params.ids().collect();
    for &id in &ids {
        let key = format!("param/{}", model.params.name(id));
        let e = find(&key).ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
        model.params.set(id, read(e)?)?;
    }
    let expected = ids.len() * if m.adam.is_some() { 3 } else { 1 };
    if m.tensors.len() != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} tensors, config implies {expected}",
            m.tensors.len()
        )));
    }
    let state = match (&m.adam, &m.rng) {
        (Some((cfg, step)), Some(rng)) => {
            let mut adam = Adam::new(*cfg, &model.params);
            adam.step = *step;
            for (k, &id) in ids.iter().enumerate() {
                let name = model.params.name(id).to_string();
                for (dst, prefix) in [(&mut adam.m[k], "adam.m"), (&mut adam.v[k], "adam.v")] {
                    let key = format!("{prefix}/{name}");
                    let e = find(&key).ok_or_else(|| Error::Checkpoint(format!("missing tensor {key}")))?;
                    let t = read(e)?;
                    if t.shape() != dst.shape() {
                        return Err(Error::Checkpoint(format!("shape mismatch for {key}")));
                    }
                    *dst = t;
                }
            }
            let mut r = ChaCha8Rng::from_seed(unhex(&rng.seed)?);
            r.set_word_pos(
                rng.word_pos
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad rng position".into()))?,
            );
            Some(TrainState {
                adam,
                epoch: m.epoch,
                step: m.step,
                rng: r,
            })
        }
        _ => None,
    };
    Ok(Checkpoint {
        model,
        train_config: m.train,
        stats: m.stats,
        state,
        train_scenarios: m.train_scenarios,
    })
}
