use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::error::Error;
use crate::rng;
use crate::tensor::Tensor;

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn random(shape: &[usize], seed: u64) -> Tensor {
    Tensor::uniform(shape, 1.0, &mut rng::keyed(seed, &[])).unwrap()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---- independent oracles -------------------------------------------------

fn matmul_oracle(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a.data()[i * k + p] * b.data()[p * n + j];
            }
        }
    }
    out
}

fn conv_oracle(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> (Vec<usize>, Vec<f64>) {
    let (cin, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (cout, kh, kw) = (k.shape()[0], k.shape()[2], k.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let padded = |c: usize, y: isize, x_: isize| -> f64 {
        if y < 0 || x_ < 0 || y as usize >= h || x_ as usize >= w {
            0.0
        } else {
            x.data()[(c * h + y as usize) * w + x_ as usize]
        }
    };
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for ci in 0..cin {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let y = (oy * stride + ky) as isize - pad as isize;
                            let xx = (ox * stride + kx) as isize - pad as isize;
                            s += padded(ci, y, xx) * k.data()[((co * cin + ci) * kh + ky) * kw + kx];
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = s;
            }
        }
    }
    (vec![cout, oh, ow], out)
}

fn pool_oracle(x: &Tensor, window: usize) -> Vec<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Vec::new();
    for ch in 0..c {
        for by in 0..h / window {
            for bx in 0..w / window {
                let mut cells = Vec::new();
                for y in by * window..(by + 1) * window {
                    for xx in bx * window..(bx + 1) * window {
                        cells.push(x.data()[(ch * h + y) * w + xx]);
                    }
                }
                out.push(cells.iter().sum::<f64>() / cells.len() as f64);
            }
        }
    }
    out
}

fn naive_bce(z: &[f64], t: &[f64]) -> f64 {
    let terms: Vec<f64> = z
        .iter()
        .zip(t)
        .map(|(&z, &t)| {
            let s = 1.0 / (1.0 + (-z).exp());
            -(t * s.ln() + (1.0 - t) * (1.0 - s).ln())
        })
        .collect();
    terms.iter().sum::<f64>() / terms.len() as f64
}

/// Max relative error of analytic vs central-difference gradients of
/// `Σ out ⊙ r` for a fixed random weighting `r`, over every input coordinate.
fn op_gradient_error(inputs: &[Tensor], build: impl Fn(&mut Graph, &[NodeId]) -> NodeId) -> f64 {
    let eval = |vals: &[Tensor]| -> (Graph, NodeId, Vec<NodeId>) {
        let mut g = Graph::new();
        let ids: Vec<_> = vals.iter().map(|v| g.param(v.clone())).collect();
        let out = build(&mut g, &ids);
        let r = random(g.value(out).shape(), 99);
        let rc = g.constant(r);
        let weighted = g.mul(out, rc).unwrap();
        let loss = g.sum(weighted);
        (g, loss, ids)
    };
    let (g, loss, ids) = eval(inputs);
    let grads = g.backward(loss).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for (which, input) in inputs.iter().enumerate() {
        let analytic = grads.get(ids[which]).unwrap().data().to_vec();
        for i in 0..input.len() {
            let mut probe = inputs.to_vec();
            probe[which].data_mut()[i] += eps;
            let (gp, lp, _) = eval(&probe);
            probe[which].data_mut()[i] -= 2.0 * eps;
            let (gm, lm, _) = eval(&probe);
            let numeric = (gp.value(lp).data()[0] - gm.value(lm).data()[0]) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    worst
}

// ---- matmul --------------------------------------------------------------

#[test]
fn matmul_identity_and_hand_values() {
    let mut g = Graph::new();
    let eye = g.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let m = g.constant(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let p = g.matmul(eye, m).unwrap();
    assert_eq!(g.value(p).data(), &[1.0, 2.0, 3.0, 4.0]);

    let a = g.constant(t(&[1, 2], &[1.0, 2.0]));
    let b = g.constant(t(&[2, 1], &[3.0, 4.0]));
    let p = g.matmul(a, b).unwrap();
    assert_eq!(g.value(p).shape(), &[1, 1]);
    assert_eq!(g.value(p).data(), &[11.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let (a, b) = (random(&[5, 4], 1), random(&[4, 3], 2));
    let mut g = Graph::new();
    let (an, bn) = (g.constant(a.clone()), g.constant(b.clone()));
    let p = g.matmul(an, bn).unwrap();
    assert!(max_abs_diff(g.value(p).data(), &matmul_oracle(&a, &b)) < 1e-12);
}

#[test]
fn matmul_dimension_mismatch() {
    let mut g = Graph::new();
    let a = g.constant(random(&[2, 3], 1));
    let b = g.constant(random(&[2, 3], 2));
    assert!(matches!(g.matmul(a, b), Err(Error::Shape(_))));
}

// ---- conv2d --------------------------------------------------------------

#[test]
fn conv_identity_kernel() {
    let x = random(&[1, 4, 5], 3);
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let k = g.constant(t(&[1, 1, 1, 1], &[1.0]));
    let y = g.conv2d(xn, k, 1, 0).unwrap();
    assert_eq!(g.value(y), &x);
}

#[test]
fn conv_full_overlap_sum() {
    let mut g = Graph::new();
    let x = g.constant(t(&[1, 3, 3], &[1.0; 9]));
    let k = g.constant(t(&[1, 1, 3, 3], &[1.0; 9]));
    let y = g.conv2d(x, k, 1, 0).unwrap();
    assert_eq!(g.value(y).shape(), &[1, 1, 1]);
    assert_eq!(g.value(y).data(), &[9.0]);
}

#[test]
fn conv_matches_nested_loop_oracle() {
    for (stride, pad) in [(1, 1), (2, 1), (1, 0), (2, 2)] {
        let x = random(&[2, 5, 5], 4);
        let k = random(&[3, 2, 3, 3], 5);
        let mut g = Graph::new();
        let (xn, kn) = (g.constant(x.clone()), g.constant(k.clone()));
        let y = g.conv2d(xn, kn, stride, pad).unwrap();
        let (shape, expected) = conv_oracle(&x, &k, stride, pad);
        assert_eq!(g.value(y).shape(), &shape[..]);
        assert!(max_abs_diff(g.value(y).data(), &expected) < 1e-12);
    }
}

#[test]
fn conv_kernel_larger_than_padded_input() {
    let mut g = Graph::new();
    let x = g.constant(random(&[1, 2, 2], 1));
    let k = g.constant(random(&[1, 1, 5, 5], 2));
    assert!(matches!(g.conv2d(x, k, 1, 1), Err(Error::Shape(_))));
    assert!(g.conv2d(x, k, 1, 2).is_ok());
}

// ---- elementwise ---------------------------------------------------------

#[test]
fn pointwise_definitions() {
    let mut g = Graph::new();
    let zero = g.constant(Tensor::scalar(0.0));
    let s = g.sigmoid(zero);
    let th = g.tanh(zero);
    assert_eq!(g.value(s).data(), &[0.5]);
    assert_eq!(g.value(th).data(), &[0.0]);
    let v = g.constant(t(&[2], &[-1.0, 2.0]));
    let r = g.relu(v);
    assert_eq!(g.value(r).data(), &[0.0, 2.0]);
    let sc = g.elementwise(Elementwise::Scale(-3.0), &[v]).unwrap();
    assert_eq!(g.value(sc).data(), &[3.0, -6.0]);
}

#[test]
fn binary_shape_mismatch() {
    let mut g = Graph::new();
    let a = g.constant(random(&[2], 1));
    let b = g.constant(random(&[3], 2));
    for kind in [Elementwise::Add, Elementwise::Sub, Elementwise::Mul] {
        assert!(matches!(g.elementwise(kind, &[a, b]), Err(Error::Shape(_))));
    }
    assert!(matches!(
        g.elementwise(Elementwise::Add, &[a]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn sigmoid_is_finite_at_extremes() {
    let mut g = Graph::new();
    let x = g.param(t(&[2], &[-800.0, 800.0]));
    let s = g.sigmoid(x);
    assert_eq!(g.value(s).data(), &[0.0, 1.0]);
    let l = g.sum(s);
    assert!(g.backward(l).unwrap().get(x).unwrap().all_finite());
}

// ---- concat / pool -------------------------------------------------------

#[test]
fn concat_channels_order_and_identity() {
    let a = random(&[1, 2, 2], 1);
    let b = random(&[2, 2, 2], 2);
    let mut g = Graph::new();
    let (an, bn) = (g.constant(a.clone()), g.constant(b.clone()));
    let single = g.concat_channels(&[an]).unwrap();
    assert_eq!(g.value(single), &a);
    let c = g.concat_channels(&[an, bn]).unwrap();
    assert_eq!(g.value(c).shape(), &[3, 2, 2]);
    assert_eq!(&g.value(c).data()[..4], a.data());
    assert_eq!(&g.value(c).data()[4..], b.data());
}

#[test]
fn concat_spatial_mismatch() {
    let mut g = Graph::new();
    let a = g.constant(random(&[1, 2, 2], 1));
    let b = g.constant(random(&[1, 3, 2], 2));
    assert!(matches!(g.concat_channels(&[a, b]), Err(Error::Shape(_))));
}

#[test]
fn pooling_values() {
    let mut g = Graph::new();
    let c = g.constant(Tensor::create(&[2, 4, 4], crate::tensor::Fill::Constant(1.5)).unwrap());
    let p = g.pool_avg(c, 2).unwrap();
    assert_eq!(g.value(p).shape(), &[2, 2, 2]);
    assert!(g.value(p).data().iter().all(|&v| v == 1.5));
    let q = g.global_pool_avg(c).unwrap();
    assert_eq!(g.value(q).data(), &[1.5, 1.5]);

    let hand = g.constant(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let p = g.pool_avg(hand, 2).unwrap();
    assert_eq!(g.value(p).data(), &[2.5]);
}

#[test]
fn pooling_matches_loop_oracle() {
    let x = random(&[3, 6, 4], 8);
    let mut g = Graph::new();
    let xn = g.constant(x.clone());
    let p = g.pool_avg(xn, 2).unwrap();
    assert!(max_abs_diff(g.value(p).data(), &pool_oracle(&x, 2)) < 1e-12);
    let gp = g.global_pool_avg(xn).unwrap();
    let plane = 24.0;
    let expected: Vec<f64> = x.data().chunks(24).map(|c| c.iter().sum::<f64>() / plane).collect();
    assert!(max_abs_diff(g.value(gp).data(), &expected) < 1e-12);
}

#[test]
fn pooling_requires_divisible_dims() {
    let mut g = Graph::new();
    let x = g.constant(random(&[1, 5, 4], 1));
    assert!(matches!(g.pool_avg(x, 2), Err(Error::Shape(_))));
}

// ---- bce -----------------------------------------------------------------

#[test]
fn bce_reference_points() {
    let mut g = Graph::new();
    let z = g.constant(Tensor::scalar(0.0));
    let l = g.bce_with_logits(z, &Tensor::scalar(1.0)).unwrap();
    assert!((g.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-15);
    let z = g.constant(Tensor::scalar(50.0));
    let l = g.bce_with_logits(z, &Tensor::scalar(1.0)).unwrap();
    assert!(g.value(l).data()[0] < 1e-20);
    let z = g.constant(Tensor::scalar(-1000.0));
    let l = g.bce_with_logits(z, &Tensor::scalar(1.0)).unwrap();
    assert_eq!(g.value(l).data()[0], 1000.0);
}

#[test]
fn bce_matches_naive_formula_in_safe_range() {
    let mut r = rng::keyed(12, &[]);
    for _ in 0..50 {
        let z: Vec<f64> = (0..6).map(|_| r.random_range(-10.0..10.0)).collect();
        let tg: Vec<f64> = (0..6).map(|_| f64::from(r.random_range(0..2u8))).collect();
        let mut g = Graph::new();
        let zn = g.constant(t(&[6], &z));
        let l = g.bce_with_logits(zn, &t(&[6], &tg)).unwrap();
        assert!((g.value(l).data()[0] - naive_bce(&z, &tg)).abs() < 1e-9);
    }
}

#[test]
fn bce_rejects_non_binary_targets() {
    let mut g = Graph::new();
    let z = g.constant(t(&[2], &[0.0, 0.0]));
    assert!(matches!(
        g.bce_with_logits(z, &t(&[2], &[1.0, 0.5])),
        Err(Error::Domain(_))
    ));
}

// ---- backward ------------------------------------------------------------

#[test]
fn backward_identity_and_square() {
    let mut g = Graph::new();
    let x = g.param(Tensor::scalar(3.0));
    let grads = g.backward(x).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0]);

    let y = g.mul(x, x).unwrap();
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[6.0]);
}

#[test]
fn backward_requires_scalar_root() {
    let mut g = Graph::new();
    let x = g.param(random(&[3], 1));
    assert!(matches!(g.backward(x), Err(Error::Contract(_))));
}

#[test]
fn unused_params_get_zero_gradients() {
    let mut g = Graph::new();
    let x = g.param(Tensor::scalar(2.0));
    let unused = g.param(random(&[2, 2], 3));
    let y = g.scale(x, 4.0);
    let grads = g.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[4.0]);
    assert_eq!(grads.get(unused).unwrap().data(), &[0.0; 4]);
}

#[test]
fn node_ids_are_topologically_ordered() {
    let mut g = Graph::new();
    let x = g.param(random(&[1, 4, 4], 1));
    let k = g.param(random(&[2, 1, 3, 3], 2));
    let c = g.conv2d(x, k, 1, 1).unwrap();
    let r = g.relu(c);
    let cat = g.concat_channels(&[x, r]).unwrap();
    let p = g.global_pool_avg(cat).unwrap();
    let s = g.sum(p);
    for id in [c, r, cat, p, s] {
        assert!(g.inputs(id).iter().all(|i| i < &id));
    }
}

#[test]
fn every_op_agrees_with_finite_differences() {
    let tol = 1e-4;
    let checks: Vec<(&str, f64)> = vec![
        ("matmul", op_gradient_error(&[random(&[3, 4], 1), random(&[4, 2], 2)], |g, n| g.matmul(n[0], n[1]).unwrap())),
        ("conv2d", op_gradient_error(&[random(&[2, 5, 5], 3), random(&[3, 2, 3, 3], 4)], |g, n| g.conv2d(n[0], n[1], 1, 1).unwrap())),
        ("conv2d-strided", op_gradient_error(&[random(&[1, 6, 6], 5), random(&[2, 1, 3, 3], 6)], |g, n| g.conv2d(n[0], n[1], 2, 1).unwrap())),
        ("sigmoid", op_gradient_error(&[random(&[5], 7)], |g, n| g.sigmoid(n[0]))),
        ("tanh", op_gradient_error(&[random(&[5], 8)], |g, n| g.tanh(n[0]))),
        ("relu", op_gradient_error(&[random(&[7], 9)], |g, n| g.relu(n[0]))),
        ("add", op_gradient_error(&[random(&[4], 10), random(&[4], 11)], |g, n| g.add(n[0], n[1]).unwrap())),
        ("sub", op_gradient_error(&[random(&[4], 12), random(&[4], 13)], |g, n| g.sub(n[0], n[1]).unwrap())),
        ("mul", op_gradient_error(&[random(&[4], 14), random(&[4], 15)], |g, n| g.mul(n[0], n[1]).unwrap())),
        ("scale", op_gradient_error(&[random(&[4], 16)], |g, n| g.scale(n[0], -2.5))),
        ("channel-bias", op_gradient_error(&[random(&[2, 3, 3], 17), random(&[2], 18)], |g, n| g.add_channel_bias(n[0], n[1]).unwrap())),
        ("row-bias", op_gradient_error(&[random(&[3, 4], 19), random(&[4], 20)], |g, n| g.add_row_bias(n[0], n[1]).unwrap())),
        ("concat", op_gradient_error(&[random(&[1, 2, 2], 21), random(&[2, 2, 2], 22)], |g, n| g.concat_channels(&[n[0], n[1]]).unwrap())),
        ("concat-rows", op_gradient_error(&[random(&[1, 3], 23), random(&[2, 3], 24)], |g, n| g.concat_rows(&[n[0], n[1]]).unwrap())),
        ("reshape", op_gradient_error(&[random(&[2, 3], 25)], |g, n| g.reshape(n[0], &[3, 2]).unwrap())),
        ("pool", op_gradient_error(&[random(&[2, 4, 4], 26)], |g, n| g.pool_avg(n[0], 2).unwrap())),
        ("global-pool", op_gradient_error(&[random(&[3, 2, 3], 27)], |g, n| g.global_pool_avg(n[0]).unwrap())),
        ("bce", op_gradient_error(&[random(&[6], 28)], |g, n| {
            g.bce_with_logits(n[0], &t(&[6], &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0])).unwrap()
        })),
        ("fan-out", op_gradient_error(&[random(&[3], 29)], |g, n| {
            let a = g.tanh(n[0]);
            let b = g.mul(a, n[0]).unwrap();
            g.add(b, a).unwrap()
        })),
    ];
    for (name, err) in checks {
        assert!(err < tol, "{name}: relative error {err}");
    }
}

#[test]
fn backward_is_linear_in_the_root() {
    let x = random(&[2, 4, 4], 30);
    let k = random(&[3, 2, 3, 3], 31);
    let grads_of = |a: f64, b: f64| -> (Vec<f64>, Vec<f64>) {
        let mut g = Graph::new();
        let xn = g.param(x.clone());
        let kn = g.param(k.clone());
        let c = g.conv2d(xn, kn, 1, 1).unwrap();
        let f = {
            let r = g.tanh(c);
            g.sum(r)
        };
        let gg = {
            let s = g.sigmoid(c);
            let p = g.global_pool_avg(s).unwrap();
            g.sum(p)
        };
        let fa = g.scale(f, a);
        let gb = g.scale(gg, b);
        let root = g.add(fa, gb).unwrap();
        let grads = g.backward(root).unwrap();
        (grads.get(xn).unwrap().data().to_vec(), grads.get(kn).unwrap().data().to_vec())
    };
    let (a, b) = (0.7, -1.3);
    let (fx, fk) = grads_of(1.0, 0.0);
    let (gx, gk) = grads_of(0.0, 1.0);
    let (cx, ck) = grads_of(a, b);
    let lin = |f: &[f64], g: &[f64]| f.iter().zip(g).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
    assert!(max_abs_diff(&cx, &lin(&fx, &gx)) < 1e-12);
    assert!(max_abs_diff(&ck, &lin(&fk, &gk)) < 1e-12);
}

#[test]
fn graph_evaluation_is_deterministic() {
    let run = || {
        let mut g = Graph::new();
        let x = g.param(random(&[1, 6, 6], 40));
        let k = g.param(random(&[2, 1, 3, 3], 41));
        let c = g.conv2d(x, k, 1, 1).unwrap();
        let s = g.sigmoid(c);
        let l = g.sum(s);
        let grads = g.backward(l).unwrap();
        grads
            .get(k)
            .unwrap()
            .data()
            .iter()
            .chain(g.value(l).data())
            .map(|v| v.to_bits())
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn graphs_on_separate_threads() {
    let handles: Vec<_> = (0..4)
        .map(|i| {
            std::thread::spawn(move || {
                let mut g = Graph::new();
                let x = g.param(random(&[8], i));
                let y = g.mul(x, x).unwrap();
                let l = g.sum(y);
                let grads = g.backward(l).unwrap();
                let expected: Vec<f64> = g.value(x).data().iter().map(|v| 2.0 * v).collect();
                grads.get(x).unwrap().data() == expected.as_slice()
            })
        })
        .collect();
    assert!(handles.into_iter().all(|h| h.join().unwrap()));
}

proptest! {
    #[test]
    fn conv_output_shape_formula(
        cin in 1usize..3, cout in 1usize..3, h in 1usize..8, w in 1usize..8,
        kh in 1usize..4, kw in 1usize..4, stride in 1usize..3, pad in 0usize..2,
    ) {
        prop_assume!(kh <= h + 2 * pad && kw <= w + 2 * pad);
        let mut g = Graph::new();
        let x = g.constant(random(&[cin, h, w], 1));
        let k = g.constant(random(&[cout, cin, kh, kw], 2));
        let y = g.conv2d(x, k, stride, pad).unwrap();
        let expected = [cout, (h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1];
        prop_assert_eq!(g.value(y).shape(), &expected[..]);
    }

    #[test]
    fn matmul_concat_pool_shapes(m in 1usize..5, k in 1usize..5, n in 1usize..5,
                                 c1 in 1usize..4, c2 in 1usize..4, half in 1usize..4) {
        let mut g = Graph::new();
        let a = g.constant(random(&[m, k], 1));
        let b = g.constant(random(&[k, n], 2));
        let p = g.matmul(a, b).unwrap();
        prop_assert_eq!(g.value(p).shape(), &[m, n][..]);

        let side = 2 * half;
        let x = g.constant(random(&[c1, side, side], 3));
        let y = g.constant(random(&[c2, side, side], 4));
        let cat = g.concat_channels(&[x, y]).unwrap();
        prop_assert_eq!(g.value(cat).shape(), &[c1 + c2, side, side][..]);
        let pooled = g.pool_avg(cat, 2).unwrap();
        prop_assert_eq!(g.value(pooled).shape(), &[c1 + c2, half, half][..]);
        let gp = g.global_pool_avg(pooled).unwrap();
        prop_assert_eq!(g.value(gp).shape(), &[c1 + c2][..]);
    }
}
