//! Numerical core checks: closed forms, an independent attention reference,
//! and reverse-mode gradients against central finite differences (f64).

mod common;

use common::{gradient_check, rand_tensor};
use motionleak::nn::*;
use rand::Rng;

type G = Graph<f64>;

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;

#[test]
fn linear_examples() {
    let mut g = G::new();
    let x = g.input(Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let w = g.param(Tensor::identity(3));
    let b = g.param(Tensor::zeros(&[3]));
    let y = linear(&mut g, x, w, b).unwrap();
    assert_eq!(g.value(y).data(), g.value(x).data());

    let x = g.input(Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap());
    let w = g.param(Tensor::new(&[2, 1], vec![1.0, 1.0]).unwrap());
    let b = g.param(Tensor::new(&[1], vec![1.0]).unwrap());
    let y = linear(&mut g, x, w, b).unwrap();
    assert_eq!(g.value(y).data(), &[4.0]);

    let bad = g.input(Tensor::zeros(&[1, 3]));
    assert!(matches!(linear(&mut g, bad, w, b), Err(NnError::ShapeMismatch { .. })));
}

#[test]
fn layer_norm_examples() {
    let mut g = G::new();
    let one = g.param(Tensor::filled(&[3], 1.0));
    let zero = g.param(Tensor::zeros(&[3]));
    let x = g.input(Tensor::new(&[1, 3], vec![5.0, 5.0, 5.0]).unwrap());
    let y = layer_norm(&mut g, x, one, zero).unwrap();
    assert_eq!(g.value(y).data(), &[0.0, 0.0, 0.0]);

    let one2 = g.param(Tensor::filled(&[2], 1.0));
    let zero2 = g.param(Tensor::zeros(&[2]));
    let x = g.input(Tensor::new(&[1, 2], vec![1.0, -1.0]).unwrap());
    let y = layer_norm(&mut g, x, one2, zero2).unwrap();
    let expect = 1.0 / (1.0f64 + LAYER_NORM_EPS).sqrt();
    let out = g.value(y).data();
    assert!((out[0] - expect).abs() < 1e-15 && (out[1] + expect).abs() < 1e-15);
    assert!((out[0] - 1.0).abs() < 1e-5);

    let gain0 = g.param(Tensor::zeros(&[3]));
    let bias = g.param(Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap());
    let x = g.input(Tensor::new(&[2, 3], vec![1.0, 7.0, -3.0, 0.0, 2.0, 9.0]).unwrap());
    let y = layer_norm(&mut g, x, gain0, bias).unwrap();
    assert_eq!(g.value(y).data(), &[0.5, -1.0, 2.0, 0.5, -1.0, 2.0]);
}

#[test]
fn layer_norm_rows_have_zero_mean() {
    let mut rng = motionleak::rng::rng_from_seed(1);
    let mut g = G::new();
    let x = g.input(rand_tensor(&mut rng, &[16, 24], 50.0));
    let one = g.param(Tensor::filled(&[24], 1.0));
    let zero = g.param(Tensor::zeros(&[24]));
    let y = layer_norm(&mut g, x, one, zero).unwrap();
    for row in g.value(y).data().chunks(24) {
        assert!((row.iter().sum::<f64>() / 24.0).abs() < 1e-6);
    }
}

#[test]
fn positional_encoding_examples() {
    let pe = positional_encoding::<f64>(4, 24).unwrap();
    for j in 0..24 {
        assert_eq!(pe.at(0, j), if j % 2 == 0 { 0.0 } else { 1.0 });
    }
    assert!((pe.at(1, 0) - 0.8414709848078965).abs() < 1e-12);
    assert_eq!(positional_encoding::<f64>(4, 3), Err(NnError::OddModelDim(3)));

    let pe = positional_encoding::<f64>(1024, 24).unwrap();
    for &(pos, i) in &[(0usize, 0usize), (1, 3), (17, 5), (511, 11), (1023, 7)] {
        let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / 24.0);
        assert!((pe.at(pos, 2 * i) - angle.sin()).abs() < 1e-12);
        assert!((pe.at(pos, 2 * i + 1) - angle.cos()).abs() < 1e-12);
    }
}

struct RawAttention {
    w: [Tensor<f64>; 4],
    b: [Tensor<f64>; 4],
}

fn raw_attention(rng: &mut impl Rng, d: usize) -> RawAttention {
    RawAttention {
        w: std::array::from_fn(|_| rand_tensor(rng, &[d, d], 0.5)),
        b: std::array::from_fn(|_| rand_tensor(rng, &[d], 0.5)),
    }
}

fn attach(g: &mut G, raw: &RawAttention) -> AttentionParams {
    let w: Vec<Var> = raw.w.iter().map(|t| g.param(t.clone())).collect();
    let b: Vec<Var> = raw.b.iter().map(|t| g.param(t.clone())).collect();
    AttentionParams {
        wq: w[0],
        bq: b[0],
        wk: w[1],
        bk: b[1],
        wv: w[2],
        bv: b[2],
        wo: w[3],
        bo: b[3],
    }
}

/// Second, loop-only attention implementation.
fn reference_attention(x: &[Vec<f64>], raw: &RawAttention, heads: usize, mask: Option<&[bool]>) -> Vec<Vec<f64>> {
    let n = x.len();
    let d = x[0].len();
    let proj = |w: &Tensor<f64>, b: &Tensor<f64>, rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| (0..d).map(|j| b.data()[j] + (0..d).map(|k| r[k] * w.at(k, j)).sum::<f64>()).collect())
            .collect()
    };
    let q = proj(&raw.w[0], &raw.b[0], x);
    let k = proj(&raw.w[1], &raw.b[1], x);
    let v = proj(&raw.w[2], &raw.b[2], x);
    let hd = d / heads;
    let mut concat = vec![vec![0.0; d]; n];
    for h in 0..heads {
        let cols = h * hd..(h + 1) * hd;
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    let s: f64 = cols.clone().map(|c| q[i][c] * k[j][c]).sum();
                    s / (hd as f64).sqrt()
                })
                .collect();
            let allowed = |j: usize| mask.map_or(true, |m| m[j]);
            let max = (0..n).filter(|&j| allowed(j)).map(|j| scores[j]).fold(f64::MIN, f64::max);
            let exps: Vec<f64> = (0..n).map(|j| if allowed(j) { (scores[j] - max).exp() } else { 0.0 }).collect();
            let z: f64 = exps.iter().sum();
            for c in cols.clone() {
                concat[i][c] = (0..n).map(|j| exps[j] / z * v[j][c]).sum();
            }
        }
    }
    proj(&raw.w[3], &raw.b[3], &concat)
}

#[test]
fn attention_matches_loop_reference() {
    let mut rng = motionleak::rng::rng_from_seed(42);
    let raw = raw_attention(&mut rng, 8);
    let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    for mask in [None, Some(&[true, false, true, false][..])] {
        let mut g = G::new();
        let x = g.input(Tensor::new(&[4, 8], xs.concat()).unwrap());
        let p = attach(&mut g, &raw);
        let y = multi_head_self_attention(&mut g, x, &p, 2, mask).unwrap();
        let want = reference_attention(&xs, &raw, 2, mask);
        for (a, b) in g.value(y).data().iter().zip(want.concat()) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn attention_single_position_is_value_then_output_projection() {
    let mut rng = motionleak::rng::rng_from_seed(5);
    let raw = raw_attention(&mut rng, 4);
    let xs = vec![vec![0.3, -0.2, 0.9, 0.1]];
    let mut g = G::new();
    let x = g.input(Tensor::new(&[1, 4], xs[0].clone()).unwrap());
    let p = attach(&mut g, &raw);
    let y = multi_head_self_attention(&mut g, x, &p, 2, None).unwrap();
    let v = linear(&mut g, x, p.wv, p.bv).unwrap();
    let o = linear(&mut g, v, p.wo, p.bo).unwrap();
    for (a, b) in g.value(y).data().iter().zip(g.value(o).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn attention_all_masked_but_one_copies_that_value() {
    let mut rng = motionleak::rng::rng_from_seed(6);
    let raw = raw_attention(&mut rng, 4);
    let mut g = G::new();
    let x = g.input(rand_tensor(&mut rng, &[3, 4], 1.0));
    let p = attach(&mut g, &raw);
    let y = multi_head_self_attention(&mut g, x, &p, 2, Some(&[false, true, false])).unwrap();
    let v = linear(&mut g, x, p.wv, p.bv).unwrap();
    let v1 = g.value(v).data()[4..8].to_vec();
    let picked = g.input(Tensor::new(&[3, 4], [v1.clone(), v1.clone(), v1].concat()).unwrap());
    let o = linear(&mut g, picked, p.wo, p.bo).unwrap();
    for (a, b) in g.value(y).data().iter().zip(g.value(o).data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn attention_rejects_indivisible_heads() {
    let mut rng = motionleak::rng::rng_from_seed(7);
    let raw = raw_attention(&mut rng, 6);
    let mut g = G::new();
    let x = g.input(rand_tensor(&mut rng, &[2, 6], 1.0));
    let p = attach(&mut g, &raw);
    assert_eq!(
        multi_head_self_attention(&mut g, x, &p, 4, None).unwrap_err(),
        NnError::HeadDivisibility { dim: 6, heads: 4 }
    );
}

fn encoder_tensors(rng: &mut impl Rng, d: usize, hidden: usize) -> Vec<Tensor<f64>> {
    vec![
        Tensor::from_fn(&[d], |_| 1.0 + rng.gen_range(-0.2..0.2)),
        rand_tensor(rng, &[d], 0.2),
        rand_tensor(rng, &[d, d], 0.5),
        rand_tensor(rng, &[d], 0.2),
        rand_tensor(rng, &[d, d], 0.5),
        rand_tensor(rng, &[d], 0.2),
        rand_tensor(rng, &[d, d], 0.5),
        rand_tensor(rng, &[d], 0.2),
        rand_tensor(rng, &[d, d], 0.5),
        rand_tensor(rng, &[d], 0.2),
        Tensor::from_fn(&[d], |_| 1.0 + rng.gen_range(-0.2..0.2)),
        rand_tensor(rng, &[d], 0.2),
        rand_tensor(rng, &[d, hidden], 0.5),
        rand_tensor(rng, &[hidden], 0.2),
        rand_tensor(rng, &[hidden, d], 0.5),
        rand_tensor(rng, &[d], 0.2),
    ]
}

fn encoder_params(v: &[Var]) -> EncoderParams {
    EncoderParams {
        ln1_gain: v[0],
        ln1_bias: v[1],
        attn: AttentionParams {
            wq: v[2],
            bq: v[3],
            wk: v[4],
            bk: v[5],
            wv: v[6],
            bv: v[7],
            wo: v[8],
            bo: v[9],
        },
        ln2_gain: v[10],
        ln2_bias: v[11],
        ffn_w1: v[12],
        ffn_b1: v[13],
        ffn_w2: v[14],
        ffn_b2: v[15],
    }
}

#[test]
fn encoder_zero_input_with_zero_output_projections_is_zero() {
    let mut rng = motionleak::rng::rng_from_seed(8);
    let mut t = encoder_tensors(&mut rng, 6, 10);
    for i in [8, 9, 14, 15] {
        t[i] = Tensor::zeros(t[i].shape());
    }
    let mut g = G::new();
    let vars: Vec<Var> = t.iter().map(|x| g.param(x.clone())).collect();
    let x = g.input(Tensor::zeros(&[5, 6]));
    let y = encoder_layer(&mut g, x, &encoder_params(&vars), 2, None).unwrap();
    assert!(g.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn stacked_layers_equal_repeated_application() {
    let mut rng = motionleak::rng::rng_from_seed(9);
    let t = encoder_tensors(&mut rng, 6, 10);
    let xin = rand_tensor(&mut rng, &[5, 6], 1.0);
    let mut g = G::new();
    let vars: Vec<Var> = t.iter().map(|x| g.param(x.clone())).collect();
    let p = encoder_params(&vars);
    let x = g.input(xin.clone());
    let mut h = x;
    for _ in 0..2 {
        h = encoder_layer(&mut g, h, &p, 2, None).unwrap();
    }
    let once = encoder_layer(&mut g, x, &p, 2, None).unwrap();
    let twice = encoder_layer(&mut g, once, &p, 2, None).unwrap();
    assert_eq!(g.value(h).data(), g.value(twice).data());
}

#[test]
fn gradcheck_linear() {
    let mut rng = motionleak::rng::rng_from_seed(10);
    let x = rand_tensor(&mut rng, &[4, 3], 1.0);
    let w = rand_tensor(&mut rng, &[4 * 5], 1.0);
    let err = gradient_check(
        &[x, rand_tensor(&mut rng, &[3, 5], 1.0), rand_tensor(&mut rng, &[5], 1.0)],
        H,
        |g, v| {
            let y = linear(g, v[0], v[1], v[2]).unwrap();
            g.weighted_sum(y, w.data()).unwrap()
        },
    );
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn gradcheck_layer_norm() {
    let mut rng = motionleak::rng::rng_from_seed(11);
    let w = rand_tensor(&mut rng, &[3 * 6], 1.0);
    let params = [
        rand_tensor(&mut rng, &[3, 6], 2.0),
        Tensor::from_fn(&[6], |_| 1.0 + rng.gen_range(-0.5..0.5)),
        rand_tensor(&mut rng, &[6], 0.5),
    ];
    let err = gradient_check(&params, H, |g, v| {
        let y = layer_norm(g, v[0], v[1], v[2]).unwrap();
        g.weighted_sum(y, w.data()).unwrap()
    });
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn gradcheck_attention_with_and_without_mask() {
    let mut rng = motionleak::rng::rng_from_seed(12);
    let raw = raw_attention(&mut rng, 6);
    let x = rand_tensor(&mut rng, &[5, 6], 1.0);
    let w = rand_tensor(&mut rng, &[5 * 6], 1.0);
    let mut params = vec![x];
    params.extend(raw.w.iter().cloned());
    params.extend(raw.b.iter().cloned());
    for mask in [None, Some(&[true, true, false, true, false][..])] {
        let err = gradient_check(&params, H, |g, v| {
            let p = AttentionParams {
                wq: v[1],
                wk: v[2],
                wv: v[3],
                wo: v[4],
                bq: v[5],
                bk: v[6],
                bv: v[7],
                bo: v[8],
            };
            let y = multi_head_self_attention(g, v[0], &p, 2, mask).unwrap();
            g.weighted_sum(y, w.data()).unwrap()
        });
        assert!(err <= TOL, "rel err {err}");
    }
}

#[test]
fn gradcheck_encoder_layer() {
    let mut rng = motionleak::rng::rng_from_seed(13);
    let mut params = vec![rand_tensor(&mut rng, &[8, 6], 1.0)];
    params.extend(encoder_tensors(&mut rng, 6, 12));
    let w = rand_tensor(&mut rng, &[8 * 6], 1.0);
    let err = gradient_check(&params, H, |g, v| {
        let y = encoder_layer(g, v[0], &encoder_params(&v[1..]), 2, None).unwrap();
        g.weighted_sum(y, w.data()).unwrap()
    });
    assert!(err <= TOL, "rel err {err}");
}

#[test]
fn gradcheck_pool_sigmoid_bce() {
    let mut rng = motionleak::rng::rng_from_seed(14);
    let params = [rand_tensor(&mut rng, &[7, 4], 1.0), rand_tensor(&mut rng, &[4, 1], 1.0), rand_tensor(&mut rng, &[1], 1.0)];
    for target in [0.0, 1.0] {
        let err = gradient_check(&params, H, |g, v| {
            let pooled = g.mean_rows(v[0], 5).unwrap();
            let logit = linear(g, pooled, v[1], v[2]).unwrap();
            let p = g.sigmoid(logit);
            g.bce(p, &[target]).unwrap()
        });
        assert!(err <= TOL, "rel err {err}");
    }
}

#[test]
fn gradcheck_relu_scale_concat_slice() {
    let mut rng = motionleak::rng::rng_from_seed(15);
    let params = [rand_tensor(&mut rng, &[3, 4], 1.0), rand_tensor(&mut rng, &[3, 2], 1.0)];
    let w = rand_tensor(&mut rng, &[3 * 5], 1.0);
    let err = gradient_check(&params, H, |g, v| {
        let r = g.relu(v[0]);
        let s = g.scale(r, 1.7);
        let a = g.slice_cols(s, 1, 3).unwrap();
        let c = g.concat_cols(&[a, v[1]]).unwrap();
        g.weighted_sum(c, w.data()).unwrap()
    });
    assert!(err <= TOL, "rel err {err}");
}
