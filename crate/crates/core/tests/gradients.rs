//! Analytic gradients checked against the central-difference oracle, per
//! primitive and for the full model loss on a tiny instance.

use phaseline::gradcheck::{finite_diff_gradient, max_rel_error};
use phaseline::loss::{
    attention_reg_loss, balanced_cross_entropy, cee_vector, median_freq_weights, total_loss,
    FrameConfidence,
};
use phaseline::model::{forward_taped, CausalMask, ModelConfig, ModelParams};
use phaseline::synth::{generate_video, SynthConfig};
use phaseline::tape::Tape;
use phaseline::tensor::Tensor;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random_vec(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

/// Check d(loss)/d(x) for a scalar loss built from a single leaf tensor.
fn check_unary(shape: Vec<usize>, seed: u64, build: impl Fn(&mut Tape, phaseline::tape::Var) -> phaseline::tape::Var) {
    let numel: usize = shape.iter().product();
    let x0 = random_vec(numel, seed);

    let mut tape = Tape::new();
    let x = tape.param(&Tensor::new(shape.clone(), x0.clone()));
    let loss = build(&mut tape, x);
    tape.backward(loss).unwrap();
    let analytic = tape.grad(x).to_vec();

    let numeric = finite_diff_gradient(
        |v| {
            let mut t = Tape::new();
            let x = t.param(&Tensor::new(shape.clone(), v.to_vec()));
            let loss = build(&mut t, x);
            t.data(loss)[0]
        },
        &x0,
        H,
    );
    let err = max_rel_error(&analytic, &numeric);
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn matmul_gradients() {
    let b = Tensor::new(vec![3, 2], random_vec(6, 100));
    check_unary(vec![2, 3], 1, |tape, x| {
        let b = tape.input(&b);
        let c = tape.matmul(x, b).unwrap();
        tape.sum_all(c)
    });
    // Gradient w.r.t. the right operand as well.
    let a = Tensor::new(vec![2, 3], random_vec(6, 101));
    check_unary(vec![3, 2], 2, |tape, x| {
        let a = tape.input(&a);
        let c = tape.matmul(a, x).unwrap();
        let k = vec![0.3, -1.1, 0.7, 0.2];
        tape.dot_const(c, &k).unwrap()
    });
}

#[test]
fn softmax_gradients() {
    let k = random_vec(12, 102);
    check_unary(vec![3, 4], 3, |tape, x| {
        let s = tape.softmax_rows(x).unwrap();
        tape.dot_const(s, &k).unwrap()
    });
}

#[test]
fn masked_softmax_gradients() {
    let mask = CausalMask::new(4).unwrap();
    let keep = mask.keep_flags();
    let k = random_vec(16, 103);
    check_unary(vec![4, 4], 4, move |tape, x| {
        let m = tape.masked_fill_neg_inf(x, &keep).unwrap();
        let s = tape.softmax_rows(m).unwrap();
        tape.dot_const(s, &k).unwrap()
    });
}

#[test]
fn layer_norm_gradients() {
    let k = random_vec(12, 104);
    let gamma0 = random_vec(4, 105);
    let beta0 = random_vec(4, 106);

    // d/dx
    let (g, b) = (gamma0.clone(), beta0.clone());
    let kx = k.clone();
    check_unary(vec![3, 4], 5, move |tape, x| {
        let gamma = tape.input(&Tensor::vector(g.clone()));
        let beta = tape.input(&Tensor::vector(b.clone()));
        let y = tape.layer_norm_rows(x, gamma, beta, 1e-5).unwrap();
        tape.dot_const(y, &kx).unwrap()
    });

    // d/dgamma and d/dbeta
    let x0 = Tensor::new(vec![3, 4], random_vec(12, 107));
    let (x_in, kg) = (x0.clone(), k.clone());
    let b2 = beta0.clone();
    check_unary(vec![4], 6, move |tape, gamma| {
        let x = tape.input(&x_in);
        let beta = tape.input(&Tensor::vector(b2.clone()));
        let y = tape.layer_norm_rows(x, gamma, beta, 1e-5).unwrap();
        tape.dot_const(y, &kg).unwrap()
    });
    let g2 = gamma0.clone();
    check_unary(vec![4], 7, move |tape, beta| {
        let x = tape.input(&x0);
        let gamma = tape.input(&Tensor::vector(g2.clone()));
        let y = tape.layer_norm_rows(x, gamma, beta, 1e-5).unwrap();
        tape.dot_const(y, &k).unwrap()
    });
}

#[test]
fn elementwise_and_slicing_gradients() {
    let other = Tensor::new(vec![2, 3], random_vec(6, 108));
    let o = other.clone();
    check_unary(vec![2, 3], 8, move |tape, x| {
        let y = tape.input(&o);
        let sum = tape.add(x, y).unwrap();
        let prod = tape.mul(sum, x).unwrap();
        let scaled = tape.scale(prod, -0.75);
        tape.sum_all(scaled)
    });
    check_unary(vec![3, 4], 9, |tape, x| {
        let s = tape.slice_cols(x, 1, 2).unwrap();
        let t = tape.transpose(s).unwrap();
        let cols = tape.sum_cols(t).unwrap();
        let weighted = tape.mul_const(cols, &[2.0, -1.0, 0.5]).unwrap();
        tape.sum_all(weighted)
    });
}

#[test]
fn gather_ln_clip_gradients() {
    // Probability-like entries away from the clip floor.
    let mut rng = ChaCha8Rng::seed_from_u64(110);
    let x0: Vec<f64> = (0..8).map(|_| rng.gen_range(0.05..0.95)).collect();
    let labels = vec![1, 0, 1, 0];

    let mut tape = Tape::new();
    let x = tape.param(&Tensor::new(vec![4, 2], x0.clone()));
    let picked = tape.gather_rows(x, &labels).unwrap();
    let logs = tape.ln_clipped(picked, 1e-12);
    let loss = tape.dot_const(logs, &[-0.25; 4]).unwrap();
    tape.backward(loss).unwrap();
    let analytic = tape.grad(x).to_vec();

    let numeric = finite_diff_gradient(
        |v| {
            let mut t = Tape::new();
            let x = t.param(&Tensor::new(vec![4, 2], v.to_vec()));
            let picked = t.gather_rows(x, &labels).unwrap();
            let logs = t.ln_clipped(picked, 1e-12);
            let loss = t.dot_const(logs, &[-0.25; 4]).unwrap();
            t.data(loss)[0]
        },
        &x0,
        H,
    );
    let err = max_rel_error(&analytic, &numeric);
    assert!(err < TOL, "max relative error {err}");
}

#[test]
fn backward_linearity_of_accumulation() {
    let x0 = Tensor::new(vec![2, 2], random_vec(4, 111));

    let grads_for = |which: u8| -> Vec<f64> {
        let mut tape = Tape::new();
        let x = tape.param(&x0);
        let l1 = tape.sum_all(x);
        let sq = tape.mul(x, x).unwrap();
        let l2 = tape.sum_all(sq);
        match which {
            1 => tape.backward(l1).unwrap(),
            2 => tape.backward(l2).unwrap(),
            _ => {
                let both = tape.add(l1, l2).unwrap();
                tape.backward(both).unwrap();
            }
        }
        tape.grad(x).to_vec()
    };
    let g1 = grads_for(1);
    let g2 = grads_for(2);
    let gsum = grads_for(0);

    // Separate backward calls on one tape accumulate the same total.
    let mut tape = Tape::new();
    let x = tape.param(&x0);
    let l1 = tape.sum_all(x);
    let sq = tape.mul(x, x).unwrap();
    let l2 = tape.sum_all(sq);
    tape.backward(l1).unwrap();
    tape.backward(l2).unwrap();
    let accumulated = tape.grad(x).to_vec();

    for i in 0..4 {
        assert!((g1[i] + g2[i] - gsum[i]).abs() < 1e-12);
        assert!((accumulated[i] - gsum[i]).abs() < 1e-12);
    }
}

// ── Full model losses ────────────────────────────────────────────────

struct TinyInstance {
    params: ModelParams,
    features: Tensor,
    labels: Vec<usize>,
    conf: FrameConfidence,
    weights: phaseline::loss::ClassWeights,
}

fn tiny_instance() -> TinyInstance {
    let synth = SynthConfig {
        classes: 3,
        feature_dim: 6,
        t_min: 6,
        t_max: 6,
        dwell_min: 1,
        dwell_max: 3,
        noise_sigma: 0.5,
        corruption_rate: 0.3,
        corruption_strength: 1.0,
        seed: 1234,
    };
    let video = generate_video(&synth, 0).unwrap();
    let config = ModelConfig {
        layers: 2,
        attn_dim: 4,
        feature_dim: 6,
        classes: 3,
        use_pe: false,
        ln_eps: 1e-5,
    };
    let params = ModelParams::init(config, 99).unwrap();
    let conf = cee_vector(&video.backbone_probs, &video.labels).unwrap();
    let mut counts = vec![0usize; 3];
    for &l in &video.labels {
        counts[l] += 1;
    }
    let weights = median_freq_weights(&counts).unwrap();
    TinyInstance { params, features: video.features, labels: video.labels, conf, weights }
}

/// loss_kind: 0 = L_c, 1 = L_reg, 2 = combined with lambda = 1.
fn model_loss(inst: &TinyInstance, flat: &[f64], loss_kind: u8) -> f64 {
    let mut params = inst.params.clone();
    params.set_flat(flat);
    let mut tape = Tape::new();
    let taped = params.bind(&mut tape, true);
    let fwd = forward_taped(&mut tape, &taped, &params.config, &inst.features).unwrap();
    let loss = match loss_kind {
        0 => balanced_cross_entropy(&mut tape, fwd.probs, &inst.labels, &inst.weights).unwrap(),
        1 => attention_reg_loss(&mut tape, fwd.n_layers[0], &inst.conf).unwrap(),
        _ => {
            let l_c =
                balanced_cross_entropy(&mut tape, fwd.probs, &inst.labels, &inst.weights).unwrap();
            let l_reg = attention_reg_loss(&mut tape, fwd.n_layers[0], &inst.conf).unwrap();
            total_loss(&mut tape, l_c, l_reg, 1.0).unwrap()
        }
    };
    tape.data(loss)[0]
}

fn model_analytic_grad(inst: &TinyInstance, loss_kind: u8) -> Vec<f64> {
    let mut tape = Tape::new();
    let taped = inst.params.bind(&mut tape, true);
    let fwd = forward_taped(&mut tape, &taped, &inst.params.config, &inst.features).unwrap();
    let loss = match loss_kind {
        0 => balanced_cross_entropy(&mut tape, fwd.probs, &inst.labels, &inst.weights).unwrap(),
        1 => attention_reg_loss(&mut tape, fwd.n_layers[0], &inst.conf).unwrap(),
        _ => {
            let l_c =
                balanced_cross_entropy(&mut tape, fwd.probs, &inst.labels, &inst.weights).unwrap();
            let l_reg = attention_reg_loss(&mut tape, fwd.n_layers[0], &inst.conf).unwrap();
            total_loss(&mut tape, l_c, l_reg, 1.0).unwrap()
        }
    };
    tape.backward(loss).unwrap();
    taped.grads(&tape).concat()
}

#[test]
fn full_model_loss_gradients_match_oracle() {
    let inst = tiny_instance();
    let flat = inst.params.flat();
    for (kind, name) in [(0u8, "L_c"), (1, "L_reg"), (2, "combined")] {
        let analytic = model_analytic_grad(&inst, kind);
        let numeric = finite_diff_gradient(|v| model_loss(&inst, v, kind), &flat, H);
        let err = max_rel_error(&analytic, &numeric);
        assert!(err < TOL, "{name}: max relative error {err}");
    }
}

#[test]
fn reg_loss_gradient_reaches_only_first_layer_attention_params() {
    let inst = tiny_instance();
    let mut tape = Tape::new();
    let taped = inst.params.bind(&mut tape, true);
    let fwd = forward_taped(&mut tape, &taped, &inst.params.config, &inst.features).unwrap();
    let l_reg = attention_reg_loss(&mut tape, fwd.n_layers[0], &inst.conf).unwrap();
    tape.backward(l_reg).unwrap();

    let w0 = tape.grad(taped.layers[0].w_qkv);
    assert!(w0.iter().any(|g| g.abs() > 1e-12), "no gradient into the first QKV map");
    // The regularizer reads the first attention map, which no other
    // parameter can influence.
    assert!(tape.grad(taped.layers[1].w_qkv).iter().all(|g| *g == 0.0));
    assert!(tape.grad(taped.head_w).iter().all(|g| *g == 0.0));
    assert!(tape.grad(taped.layers[0].ln_gamma).iter().all(|g| *g == 0.0));
}
