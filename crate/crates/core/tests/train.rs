mod common;

use bid2x::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use bid2x::model::{Bid2x, ParamStore};
use bid2x::optim::{clip_global_norm, Adam, AdamConfig};
use bid2x::pipeline::{fit, synthetic_model_config, Prepared, Splits};
use bid2x::train::*;
use bid2x::Error;
use bid2x_tensor::Tensor;
use common::small_setup;

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        batch_size: 8,
        epochs,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_same_run() {
    let (model, stats, samples) = small_setup(12, 8, 3);
    let (tr, va) = samples.split_at(18);
    let mut a = model.clone();
    let mut b = model.clone();
    let ra = train(&mut a, &stats, tr, va, &cfg(2)).unwrap();
    let rb = train(&mut b, &stats, tr, va, &cfg(2)).unwrap();
    assert!(a.params.bit_equal(&b.params));
    assert!(ra.best.bit_equal(&rb.best));
    assert_eq!(ra.metrics, rb.metrics);
}

#[test]
fn zero_epochs_change_nothing() {
    let (model, stats, samples) = small_setup(12, 8, 1);
    let mut m = model.clone();
    let out = train(&mut m, &stats, &samples, &[], &cfg(0)).unwrap();
    assert!(m.params.bit_equal(&model.params));
    assert!(out.best.bit_equal(&model.params));
    assert_eq!(out.state.step, 0);
}

#[test]
fn empty_training_split_is_an_error() {
    let (mut model, stats, _) = small_setup(12, 8, 1);
    assert!(matches!(train(&mut model, &stats, &[], &[], &cfg(1)), Err(Error::Data(_))));
}

#[test]
fn loss_descends_over_two_hundred_steps() {
    let (model, stats, samples) = small_setup(12, 8, 2);
    let before = mean_loss(&model, &samples, 1.0).unwrap().total;
    let mut m = model.clone();
    let c = TrainConfig {
        batch_size: 4,
        epochs: 1000,
        max_steps: 200,
        ..cfg(0)
    };
    let out = train(&mut m, &stats, &samples, &[], &c).unwrap();
    assert_eq!(out.state.step, 200);
    let after = mean_loss(&m, &samples, 1.0).unwrap().total;
    assert!(after < 0.8 * before, "{before} -> {after}");
}

fn store(values: &[f64]) -> ParamStore {
    let mut s = ParamStore::default();
    s.add("w", Tensor::new(vec![values.len()], values.to_vec()).unwrap());
    s
}

#[test]
fn adam_ignores_zero_gradients() {
    let mut p = store(&[1.0, -2.0, 3.0]);
    let before = p.clone();
    let mut adam = Adam::new(AdamConfig::default(), &p);
    for _ in 0..5 {
        adam.update(&mut p, &[Tensor::zeros(vec![3])]).unwrap();
    }
    assert!(p.bit_equal(&before));
}

#[test]
fn first_adam_step_moves_by_the_learning_rate() {
    let mut p = store(&[1.0, 1.0]);
    let mut adam = Adam::new(
        AdamConfig {
            lr: 0.01,
            ..AdamConfig::default()
        },
        &p,
    );
    adam.update(&mut p, &[Tensor::new(vec![2], vec![4.0, -0.5]).unwrap()]).unwrap();
    let w = p.get(p.find("w").unwrap()).data();
    assert!((w[0] - 0.99).abs() < 1e-9);
    assert!((w[1] - 1.01).abs() < 1e-9);
    assert!(adam.update(&mut p, &[]).is_err());
}

#[test]
fn clipping_rescales_to_the_limit() {
    let mut g = vec![Tensor::new(vec![1], vec![3.0]).unwrap(), Tensor::new(vec![1], vec![4.0]).unwrap()];
    assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
    assert!((g[0].data()[0] - 0.6).abs() < 1e-15);
    assert!((g[1].data()[0] - 0.8).abs() < 1e-15);
    let mut small = vec![Tensor::new(vec![2], vec![0.1, 0.2]).unwrap()];
    clip_global_norm(&mut small, 1.0);
    assert_eq!(small[0].data(), &[0.1, 0.2]);
}

fn fitted_checkpoint() -> (Checkpoint, Prepared) {
    let pairs = common::synthetic_pairs(12, 4, 7);
    let splits = Splits::new(&pairs, [0.7, 0.15, 0.15], 1).unwrap();
    let data = Prepared::new(&splits, 12).unwrap();
    let base = bid2x::model::ModelConfig {
        d_model: 8,
        ..Default::default()
    };
    let (ck, _) = fit(&synthetic_model_config(12, &base), &cfg(1), &data).unwrap();
    (ck, data)
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let (ck, data) = fitted_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    save_checkpoint(&path, &ck).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert!(back.model.params.bit_equal(&ck.model.params));
    assert_eq!(back.model.config, ck.model.config);
    assert_eq!(back.stats, ck.stats);
    assert_eq!(back.train_scenarios, ck.train_scenarios);
    let (s1, s2) = (ck.state.clone().unwrap(), back.state.clone().unwrap());
    assert_eq!(s1.adam, s2.adam);
    assert_eq!((s1.epoch, s1.step), (s2.epoch, s2.step));

    // resuming from the file continues exactly like resuming in memory
    let mut a = ck.model.clone();
    let mut b = back.model.clone();
    let ra = train_from(&mut a, &ck.stats, &data.train, &[], &cfg(1), s1).unwrap();
    let rb = train_from(&mut b, &back.stats, &data.train, &[], &cfg(1), s2).unwrap();
    assert!(a.params.bit_equal(&b.params));
    assert_eq!(ra.metrics, rb.metrics);

    save_checkpoint(dir.path().join("d.bin"), &back).unwrap();
    assert_eq!(
        std::fs::read(&path).unwrap(),
        std::fs::read(dir.path().join("d.bin")).unwrap()
    );
}

/// Splits a checkpoint file into magic line, manifest and tensor blob.
fn parts(bytes: &[u8]) -> (String, serde_json::Value, Vec<u8>) {
    let text = String::from_utf8_lossy(bytes);
    let mut lines = text.splitn(3, '\n');
    let magic = lines.next().unwrap().to_string();
    let len: usize = lines.next().unwrap().parse().unwrap();
    let start = magic.len() + 1 + len.to_string().len() + 1;
    let manifest = serde_json::from_slice(&bytes[start..start + len]).unwrap();
    (magic, manifest, bytes[start + len..].to_vec())
}

fn assemble(magic: &str, manifest: &serde_json::Value, blob: &[u8]) -> Vec<u8> {
    let text = serde_json::to_string(manifest).unwrap();
    let mut out = format!("{magic}\n{}\n{text}", text.len()).into_bytes();
    out.extend_from_slice(blob);
    out
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let (ck, _) = fitted_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    save_checkpoint(&path, &ck).unwrap();
    let (magic, manifest, blob) = parts(&std::fs::read(&path).unwrap());
    let bad = dir.path().join("bad.bin");
    let check = |bytes: Vec<u8>, needle: &str| {
        std::fs::write(&bad, bytes).unwrap();
        match load_checkpoint(&bad) {
            Err(Error::Checkpoint(msg)) => assert!(msg.contains(needle), "{msg}"),
            other => panic!("expected a checkpoint error, got {:?}", other.map(|_| ())),
        }
    };

    check(assemble(&magic.replace(" 1", " 2"), &manifest, &blob), "version mismatch");

    let mut m = manifest.clone();
    m["tensors"][0]["key"] = "param/renamed".into();
    check(assemble(&magic, &m, &blob), "missing tensor");

    let mut m = manifest.clone();
    m["tensors"][0]["shape"] = serde_json::json!([1, 1]);
    check(assemble(&magic, &m, &blob), "shape mismatch");

    let mut m = manifest.clone();
    m["model"]["d_model"] = 16.into();
    check(assemble(&magic, &m, &blob), "shape mismatch");

    check(assemble(&magic, &manifest, &blob[..blob.len() / 2]), "out of range");
    check(b"not a checkpoint\n".to_vec(), "not a checkpoint");
    assert!(matches!(load_checkpoint(dir.path().join("absent.bin")), Err(Error::Io { .. })));
}

#[test]
fn model_config_is_validated() {
    let cfg = bid2x::model::ModelConfig {
        d_model: 7,
        heads: 2,
        ..Default::default()
    };
    assert!(Bid2x::new(cfg, 0).is_err());
    assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
}
