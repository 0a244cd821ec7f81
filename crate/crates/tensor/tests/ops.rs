use bid2x_tensor::gradcheck::{self, central_difference, CheckOptions, TOLERANCE};
use bid2x_tensor::{Graph, Tensor, TensorError, Var, MASK_NEG};

fn m(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
    }
}

#[test]
fn matmul_identity_and_hand_expansion() {
    let mut g = Graph::new();
    let i = g.constant(m(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let b = g.constant(m(2, 2, &[2.0, 3.0, 4.0, 5.0]));
    let c = g.matmul(i, b).unwrap();
    assert_eq!(g.value(c).data(), &[2.0, 3.0, 4.0, 5.0]);

    let a = g.constant(m(1, 2, &[1.0, 2.0]));
    let b = g.constant(m(2, 1, &[3.0, 4.0]));
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(Tensor::zeros([2, 3]));
    let b = g.constant(Tensor::zeros([2, 3]));
    match g.matmul(a, b).unwrap_err() {
        TensorError::Shape { lhs, rhs, .. } => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    // d/da sum(a·b) at a=[[1,2]], b=[[3],[4]]
    let b = [3.0, 4.0];
    let fd = central_difference(|a| a[0] * b[0] + a[1] * b[1], &[1.0, 2.0], 1e-6);
    close(&fd, &[3.0, 4.0], 1e-8);

    let mut g = Graph::new();
    let a = g.leaf(m(1, 2, &[1.0, 2.0]), true);
    let bv = g.constant(m(2, 1, &b));
    let c = g.matmul(a, bv).unwrap();
    let loss = g.sum(c);
    let grads = g.backward(loss).unwrap();
    close(grads.get(a).unwrap().data(), &fd, 1e-8);
}

#[test]
fn softmax_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::vector(vec![0.0, 0.0]));
    let y = g.softmax_lastdim(x);
    assert_eq!(g.value(y).data(), &[0.5, 0.5]);

    let x = g.constant(Tensor::vector(vec![f64::NEG_INFINITY, 0.0]));
    let y = g.softmax_lastdim(x);
    assert_eq!(g.value(y).data(), &[0.0, 1.0]);

    let x = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let y = g.softmax_lastdim(x);
    // exp-normalize evaluated directly
    let z: f64 = (1.0f64).exp() + (2.0f64).exp() + (3.0f64).exp();
    let want = [1.0f64.exp() / z, 2.0f64.exp() / z, 3.0f64.exp() / z];
    close(g.value(y).data(), &want, 1e-12);
    close(g.value(y).data(), &[0.09003, 0.24473, 0.66524], 1e-5);
}

#[test]
fn softmax_fully_masked_row_is_zero_and_flagged() {
    let mut g = Graph::new();
    let x = g.constant(m(2, 2, &[MASK_NEG, MASK_NEG, 1.0, MASK_NEG]));
    let y = g.softmax_lastdim(x);
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 1.0, 0.0]);
    assert_eq!(g.masked_rows(), 1);
}

#[test]
fn additive_mask_sentinel_gives_exact_zero() {
    let mut g = Graph::new();
    let s = g.constant(m(1, 3, &[5.0, -3.0, 2.0]));
    let mask = g.constant(m(1, 3, &[0.0, 0.0, MASK_NEG]));
    let masked = g.add(s, mask).unwrap();
    let y = g.softmax_lastdim(masked);
    let v = g.value(y).data();
    assert_eq!(v[2], 0.0);
    assert!((v[0] + v[1] - 1.0).abs() < 1e-15);
}

#[test]
fn elementwise_examples() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::scalar(0.0));
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).item(), 0.5);

    let a = g.constant(m(2, 2, &[1.0, 1.0, 2.0, 2.0]));
    let v = g.constant(Tensor::vector(vec![10.0, 20.0]));
    let out = g.broadcast_add(a, v).unwrap();
    assert_eq!(g.value(out).data(), &[11.0, 21.0, 12.0, 22.0]);

    let bad = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    assert!(matches!(g.broadcast_add(a, bad), Err(TensorError::Shape { .. })));
}

#[test]
fn sigmoid_derivative_at_one() {
    let fd = central_difference(|x| 1.0 / (1.0 + (-x[0]).exp()), &[1.0], 1e-6);
    assert!((fd[0] - 0.19661).abs() < 1e-5);

    let mut g = Graph::new();
    let x = g.leaf(Tensor::scalar(1.0), true);
    let y = g.sigmoid(x);
    let grads = g.backward(y).unwrap();
    assert!((grads.get(x).unwrap().item() - fd[0]).abs() < 1e-9);
}

#[test]
fn layer_norm_examples() {
    let mut g = Graph::new();
    let gain = g.constant(Tensor::vector(vec![1.0; 3]));
    let bias = g.constant(Tensor::vector(vec![0.0; 3]));
    let x = g.constant(m(1, 3, &[1.0, 1.0, 1.0]));
    let y = g.layer_norm(x, gain, bias, 1e-5).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.0]);

    let gain = g.constant(Tensor::vector(vec![1.0; 2]));
    let bias = g.constant(Tensor::vector(vec![0.0; 2]));
    let x = g.constant(m(1, 2, &[0.0, 2.0]));
    let y = g.layer_norm(x, gain, bias, 0.0).unwrap();
    assert_eq!(g.value(y).data(), &[-1.0, 1.0]);
}

fn lcg(seed: u64) -> impl FnMut() -> f64 {
    let mut s = seed;
    move || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut r = lcg(seed);
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r()).collect()).unwrap()
}

#[test]
fn layer_norm_gradient_on_random_4x8() {
    let inputs = [random(&[4, 8], 1), random(&[8], 2), random(&[8], 3)];
    let report = gradcheck::check(
        &inputs,
        |g, v| -> bid2x_tensor::Result<Var> {
            let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
            // weight the output so the loss is not trivially constant
            let w = g.constant(random(&[4, 8], 9));
            let p = g.mul(y, w)?;
            Ok(g.sum(p))
        },
        &CheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed(TOLERANCE), "{report:?}");
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::zeros([2]), true);
    assert!(matches!(g.backward(x), Err(TensorError::NonScalarLoss(_))));
}

#[test]
fn non_finite_loss_names_offending_op() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![0.0, 1.0]), true);
    let l = g.ln(x);
    let s = g.sum(l);
    match g.backward(s).unwrap_err() {
        TensorError::NonFinite { op, .. } => assert_eq!(op, "ln"),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn fan_out_accumulates_additively() {
    // f = sum(x*x + x) -> df/dx = 2x + 1
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![1.0, -2.0, 0.5]), true);
    let sq = g.mul(x, x).unwrap();
    let s = g.add(sq, x).unwrap();
    let loss = g.sum(s);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[3.0, -3.0, 2.0]);
}

#[test]
fn constants_receive_no_gradient() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::vector(vec![1.0]), true);
    let c = g.constant(Tensor::vector(vec![2.0]));
    let y = g.mul(x, c).unwrap();
    let l = g.sum(y);
    let grads = g.backward(l).unwrap();
    assert!(grads.get(c).is_none());
    assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
}

fn attention_like(g: &mut Graph, v: &[Var]) -> bid2x_tensor::Result<Var> {
    let s = g.matmul_t(v[0], v[1])?;
    let s = g.scale(s, 0.5);
    let a = g.softmax_lastdim(s);
    let o = g.matmul(a, v[2])?;
    let r = g.relu(o);
    let sq = g.square(r);
    Ok(g.mean(sq))
}

#[test]
fn backward_is_bitwise_repeatable() {
    let inputs = [random(&[5, 4], 11), random(&[5, 4], 12), random(&[5, 3], 13)];
    let run = || {
        let mut g = Graph::new();
        let v: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let l = attention_like(&mut g, &v).unwrap();
        let grads = g.backward(l).unwrap();
        v.iter()
            .flat_map(|&x| grads.get(x).unwrap().data().to_vec())
            .map(f64::to_bits)
            .collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    fn dims() -> impl Strategy<Value = (usize, usize, usize, u64)> {
        (1usize..5, 1usize..6, 1usize..5, any::<u64>())
    }

    fn assert_check(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> bid2x_tensor::Result<Var>) {
        let r = gradcheck::check(inputs, f, &CheckOptions::default()).unwrap();
        assert!(r.passed(TOLERANCE), "max rel error {} ({r:?})", r.max_rel_error());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matmul_variants((mm, k, n, seed) in dims()) {
            let w = random(&[mm, n], seed ^ 7);
            assert_check(&[random(&[mm, k], seed), random(&[k, n], seed ^ 1)], |g, v| {
                let c = g.matmul(v[0], v[1])?;
                let wv = g.constant(w.clone());
                let p = g.mul(c, wv)?;
                Ok(g.sum(p))
            });
            let w = random(&[mm, n], seed ^ 8);
            assert_check(&[random(&[mm, k], seed ^ 2), random(&[n, k], seed ^ 3)], |g, v| {
                let c = g.matmul_t(v[0], v[1])?;
                let wv = g.constant(w.clone());
                let p = g.mul(c, wv)?;
                Ok(g.sum(p))
            });
        }

        #[test]
        fn elementwise_chain((r, c, _, seed) in dims()) {
            let x = random(&[r, c], seed);
            let y = random(&[r, c], seed ^ 5);
            let b = random(&[c], seed ^ 6);
            assert_check(&[x, y, b], |g, v| {
                let s = g.add(v[0], v[1])?;
                let d = g.sub(s, v[1])?;
                let p = g.mul(d, v[1])?;
                let q = g.broadcast_add(p, v[2])?;
                let sg = g.sigmoid(q);
                let sq = g.square(v[0]);
                let e = g.add(sg, sq)?;
                let sp = g.softplus(e);
                let sc = g.scale(sp, 1.7);
                let a = g.add_scalar(sc, 0.3);
                let l = g.ln(a);
                Ok(g.mean(l))
            });
        }

        #[test]
        fn softmax_with_mask((r, c, _, seed) in dims()) {
            let mut mask = vec![0.0; r * c];
            // mask the strict upper triangle, causal style
            for i in 0..r {
                for j in 0..c {
                    if j > i {
                        mask[i * c + j] = MASK_NEG;
                    }
                }
            }
            let mask = Tensor::matrix(r, c, mask).unwrap();
            let w = random(&[r, c], seed ^ 4);
            assert_check(&[random(&[r, c], seed)], |g, v| {
                let mk = g.constant(mask.clone());
                let s = g.add(v[0], mk)?;
                let y = g.softmax_lastdim(s);
                let wv = g.constant(w.clone());
                let p = g.mul(y, wv)?;
                Ok(g.sum(p))
            });
        }

        #[test]
        fn masked_softmax_rows_sum_to_one((r, c, _, seed) in dims()) {
            let x = random(&[r, c], seed);
            let mut g = Graph::new();
            let mut data = x.data().to_vec();
            for i in 0..r {
                for j in 0..c {
                    if (i + j) % 3 == 2 && j != 0 {
                        data[i * c + j] = MASK_NEG;
                    }
                }
            }
            let xv = g.constant(Tensor::matrix(r, c, data.clone()).unwrap());
            let y = g.softmax_lastdim(xv);
            for i in 0..r {
                let row = g.value(y).row(i);
                let s: f64 = row.iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                for j in 0..c {
                    if data[i * c + j] == MASK_NEG {
                        prop_assert_eq!(row[j], 0.0);
                    }
                }
            }
        }

        #[test]
        fn layer_norm_random((r, c, _, seed) in dims()) {
            let c = c + 1;
            let w = random(&[r, c], seed ^ 9);
            assert_check(&[random(&[r, c], seed), random(&[c], seed ^ 1), random(&[c], seed ^ 2)], |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-5)?;
                let wv = g.constant(w.clone());
                let p = g.mul(y, wv)?;
                Ok(g.sum(p))
            });
        }

        #[test]
        fn structural_ops((r, c, k, seed) in dims()) {
            let w = random(&[r, c + k + c], seed ^ 3);
            assert_check(&[random(&[r, c], seed), random(&[c], seed ^ 1), random(&[r, k], seed ^ 2)], |g, v| {
                let rep = g.repeat_rows(v[1], r)?;
                let cat = g.concat_lastdim(&[v[0], v[2], rep])?;
                let wv = g.constant(w.clone());
                let p = g.mul(cat, wv)?;
                let sl = g.slice_cols(p, 1.min(c + k + c - 1), 1)?;
                let row = g.row(p, r - 1)?;
                let flat = g.reshape(sl, vec![r])?;
                let a = g.sum(flat);
                let b = g.square(row);
                let b = g.sum(b);
                let cl = g.clamp(v[0], -0.5, 0.5);
                let cl = g.relu(cl);
                let cl = g.sum(cl);
                let ab = g.add(a, b)?;
                g.add(ab, cl)
            });
        }
    }
}
