//! Causally masked single-head self-attention encoder stack with a linear
//! softmax head, producing per-frame class probabilities for online phase
//! labeling. Exposes every layer's attention map for introspection and for
//! the attention regularizer.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

// ── Causal mask ──────────────────────────────────────────────────────

/// Lower-triangular binary mask: frame i may attend to frames j <= i only,
/// so a prediction at time t never sees the future.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalMask {
    t: usize,
}

impl CausalMask {
    pub fn new(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::invalid("causal mask needs at least one frame"));
        }
        Ok(CausalMask { t })
    }

    pub fn len(&self) -> usize {
        self.t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        j <= i
    }

    /// Row-major keep flags for masked-fill: true iff j <= i.
    pub fn keep_flags(&self) -> Vec<bool> {
        let t = self.t;
        let mut keep = vec![false; t * t];
        for i in 0..t {
            for j in 0..=i {
                keep[i * t + j] = true;
            }
        }
        keep
    }

    /// Column sums: frame j is unmasked in rows j..T, i.e. T - j times.
    pub fn col_counts(&self) -> Vec<f64> {
        (0..self.t).map(|j| (self.t - j) as f64).collect()
    }

    pub fn to_tensor(&self) -> Tensor {
        let t = self.t;
        let data = self.keep_flags().into_iter().map(|k| if k { 1.0 } else { 0.0 }).collect();
        Tensor::new(vec![t, t], data)
    }
}

// ── Positional encoding ──────────────────────────────────────────────

/// Interleaved sin/cos of position over geometric frequencies:
/// PE[pos][2i] = sin(pos / 10000^(2i/width)), PE[pos][2i+1] = cos(same).
pub fn sinusoidal_pe(t: usize, width: usize) -> Result<Tensor> {
    if width % 2 != 0 {
        return Err(Error::invalid(format!("positional encoding width must be even, got {width}")));
    }
    let mut data = vec![0.0; t * width];
    for pos in 0..t {
        for i in 0..width / 2 {
            let freq = 10000f64.powf(-2.0 * i as f64 / width as f64);
            let arg = pos as f64 * freq;
            data[pos * width + 2 * i] = arg.sin();
            data[pos * width + 2 * i + 1] = arg.cos();
        }
    }
    Ok(Tensor::new(vec![t, width], data))
}

// ── Parameters ───────────────────────────────────────────────────────

/// Encoder hyperparameters, persisted alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of encoder layers (L).
    pub layers: usize,
    /// Attention dimension d (Q, K, V width).
    pub attn_dim: usize,
    /// Input feature width.
    pub feature_dim: usize,
    /// Output classes c.
    pub classes: usize,
    /// Add a fixed sinusoidal encoding to the first-layer input.
    pub use_pe: bool,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::invalid("model needs at least one encoder layer"));
        }
        if self.attn_dim == 0 || self.feature_dim == 0 || self.classes == 0 {
            return Err(Error::invalid("attn_dim, feature_dim and classes must be positive"));
        }
        if self.use_pe && self.feature_dim % 2 != 0 {
            return Err(Error::invalid("positional encoding requires an even feature width"));
        }
        Ok(())
    }
}

/// One encoder layer: a single 3d-wide linear map producing Q, K, V, plus the
/// layer-norm affine parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w_qkv: Tensor,
    pub ln_gamma: Tensor,
    pub ln_beta: Tensor,
}

/// All trainable weights of the encoder stack plus the classification head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub layers: Vec<LayerParams>,
    pub head_w: Tensor,
}

impl ModelParams {
    /// Seeded uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for the linear
    /// maps; layer norm starts at identity (gamma 1, beta 0).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.attn_dim;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let in_dim = if l == 0 { config.feature_dim } else { d };
            layers.push(LayerParams {
                w_qkv: uniform_init(&mut rng, in_dim, 3 * d),
                ln_gamma: Tensor::vector(vec![1.0; d]),
                ln_beta: Tensor::vector(vec![0.0; d]),
            });
        }
        let head_w = uniform_init(&mut rng, d, config.classes);
        Ok(ModelParams { config, layers, head_w })
    }

    /// Zero linear maps (layer norm still at identity); handy for tests.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let mut p = Self::init(config, 0)?;
        for layer in &mut p.layers {
            layer.w_qkv.data.iter_mut().for_each(|v| *v = 0.0);
        }
        p.head_w.data.iter_mut().for_each(|v| *v = 0.0);
        Ok(p)
    }

    /// Stable (name, tensor) listing; the flat parameter order everywhere.
    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.w_qkv"), &layer.w_qkv));
            out.push((format!("layer{l}.ln_gamma"), &layer.ln_gamma));
            out.push((format!("layer{l}.ln_beta"), &layer.ln_beta));
        }
        out.push(("head.w".to_string(), &self.head_w));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.w_qkv);
            out.push(&mut layer.ln_gamma);
            out.push(&mut layer.ln_beta);
        }
        out.push(&mut self.head_w);
        out
    }

    pub fn num_params(&self) -> usize {
        self.named().iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (_, t) in self.named() {
            out.extend_from_slice(&t.data);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.numel();
            t.data.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        assert_eq!(offset, flat.len(), "flat parameter vector length mismatch");
    }

    /// Register every parameter on a tape. `trainable` controls whether
    /// gradients are tracked (forward-only evaluation skips the bookkeeping).
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> TapedParams {
        let layers = self
            .layers
            .iter()
            .map(|l| TapedLayer {
                w_qkv: tape.leaf(&l.w_qkv, trainable),
                ln_gamma: tape.leaf(&l.ln_gamma, trainable),
                ln_beta: tape.leaf(&l.ln_beta, trainable),
            })
            .collect();
        TapedParams { layers, head_w: tape.leaf(&self.head_w, trainable) }
    }

    // ── Checkpoint container ─────────────────────────────────────

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            params: self
                .named()
                .into_iter()
                .map(|(name, t)| NamedTensor { name, shape: t.shape.clone(), data: t.data.clone() })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Format {
            path: path.display().to_string(),
            source: e,
        })?;
        std::fs::write(path, json + "\n")
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Io { path: path.display().to_string(), source: e })?;
        let file: CheckpointFile = serde_json::from_str(&raw)
            .map_err(|e| Error::Format { path: path.display().to_string(), source: e })?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint format version {} (expected {})",
                file.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        let mut params = ModelParams::zeros(file.config.clone())?;
        {
            let expected: Vec<String> = params.named().iter().map(|(n, _)| n.clone()).collect();
            let got: Vec<String> = file.params.iter().map(|p| p.name.clone()).collect();
            if expected != got {
                return Err(Error::invalid(format!(
                    "checkpoint parameter list {got:?} does not match config (expected {expected:?})"
                )));
            }
        }
        for (dst, src) in params.tensors_mut().into_iter().zip(&file.params) {
            if dst.shape != src.shape {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} has shape {:?}, expected {:?}",
                    src.name, src.shape, dst.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(params)
    }
}

fn uniform_init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(vec![fan_in, fan_out], data)
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    params: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Tape handles for one layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct TapedLayer {
    pub w_qkv: Var,
    pub ln_gamma: Var,
    pub ln_beta: Var,
}

/// Tape handles for the whole parameter set.
#[derive(Debug, Clone)]
pub struct TapedParams {
    pub layers: Vec<TapedLayer>,
    pub head_w: Var,
}

impl TapedParams {
    /// Gradient slices after backward, in [`ModelParams::named`] order.
    pub fn grads(&self, tape: &Tape) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(tape.grad(layer.w_qkv).to_vec());
            out.push(tape.grad(layer.ln_gamma).to_vec());
            out.push(tape.grad(layer.ln_beta).to_vec());
        }
        out.push(tape.grad(self.head_w).to_vec());
        out
    }
}

// ── Forward pass ─────────────────────────────────────────────────────

/// Masked scaled dot-product attention weights: softmax(mask(QK^T / sqrt(d))).
/// Masked positions carry a -inf sentinel before the softmax, so they come
/// out as exact zeros and every row is a distribution over frames <= i.
pub fn attention_weights(tape: &mut Tape, q: Var, k: Var, mask: &CausalMask) -> Result<Var> {
    let (sq, sk) = (tape.shape(q).to_vec(), tape.shape(k).to_vec());
    if sq != sk || sq.len() != 2 {
        return Err(Error::ShapeMismatch { op: "attention_weights", lhs: sq, rhs: sk });
    }
    if sq[0] != mask.len() {
        return Err(Error::ShapeMismatch {
            op: "attention_weights mask",
            lhs: sq,
            rhs: vec![mask.len(), mask.len()],
        });
    }
    let d = sq[1];
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scaled = tape.scale(scores, 1.0 / (d as f64).sqrt());
    let masked = tape.masked_fill_neg_inf(scaled, &mask.keep_flags())?;
    tape.softmax_rows(masked)
}

/// Attention(Q,K,V) = AttentionWeights(Q,K) V.
pub fn attention_output(tape: &mut Tape, a: Var, v: Var) -> Result<Var> {
    tape.matmul(a, v)
}

/// One encoder layer: linear QKV split, masked attention, residual, post-norm.
///
/// The residual is V on the first layer (the raw input has a different width
/// there) and the layer input afterwards. Returns the normalized output and
/// the attention map.
pub fn encoder_layer_forward(
    tape: &mut Tape,
    layer: &TapedLayer,
    x: Var,
    mask: &CausalMask,
    first_layer: bool,
    ln_eps: f64,
) -> Result<(Var, Var)> {
    let qkv = tape.matmul(x, layer.w_qkv)?;
    let width = tape.shape(qkv)[1];
    debug_assert_eq!(width % 3, 0);
    let d = width / 3;
    let q = tape.slice_cols(qkv, 0, d)?;
    let k = tape.slice_cols(qkv, d, d)?;
    let v = tape.slice_cols(qkv, 2 * d, d)?;
    let a = attention_weights(tape, q, k, mask)?;
    let h = attention_output(tape, a, v)?;
    let residual = if first_layer { v } else { x };
    let summed = tape.add(h, residual)?;
    let out = tape.layer_norm_rows(summed, layer.ln_gamma, layer.ln_beta, ln_eps)?;
    Ok((out, a))
}

/// Tape handles produced by a full forward pass.
pub struct TapedForward {
    /// T x c per-frame class probabilities.
    pub probs: Var,
    /// One T x T attention map per layer.
    pub attn: Vec<Var>,
    /// Per-layer normalized frame-wise attention (length-T vectors).
    pub n_layers: Vec<Var>,
}

/// Run the encoder stack on a tape so gradients can flow to the bound
/// parameters. `ln_eps` comes from the config on the parameters used to
/// build `taped`.
pub fn forward_taped(
    tape: &mut Tape,
    taped: &TapedParams,
    config: &ModelConfig,
    features: &Tensor,
) -> Result<TapedForward> {
    let (t, width) = features.dims2()?;
    if width != config.feature_dim {
        return Err(Error::ShapeMismatch {
            op: "model input",
            lhs: features.shape.clone(),
            rhs: vec![t, config.feature_dim],
        });
    }
    let mask = CausalMask::new(t)?;
    let mut x = tape.input(features);
    if config.use_pe {
        let pe = tape.input(&sinusoidal_pe(t, width)?);
        x = tape.add(x, pe)?;
    }
    let mut attn = Vec::with_capacity(config.layers);
    for (l, layer) in taped.layers.iter().enumerate() {
        let (out, a) = encoder_layer_forward(tape, layer, x, &mask, l == 0, config.ln_eps)?;
        x = out;
        attn.push(a);
    }
    let logits = tape.matmul(x, taped.head_w)?;
    let probs = tape.softmax_rows(logits)?;

    let inv_counts: Vec<f64> = mask.col_counts().iter().map(|c| 1.0 / c).collect();
    let mut n_layers = Vec::with_capacity(attn.len());
    for &a in &attn {
        let col_sums = tape.sum_cols(a)?;
        n_layers.push(tape.mul_const(col_sums, &inv_counts)?);
    }
    Ok(TapedForward { probs, attn, n_layers })
}

// ── Inference with attention introspection ───────────────────────────

/// Per-layer attention maps plus the derived frame-attention summaries for
/// one forward pass.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    /// One row-stochastic T x T map per layer.
    pub attn: Vec<Tensor>,
    pub mask: CausalMask,
    /// Normalized frame-wise attention of the first layer.
    pub n_first: Vec<f64>,
    /// Layer-summed normalized attention per frame.
    pub frame_scores: Vec<f64>,
}

/// Forward pass without gradient tracking. Returns per-frame class
/// probabilities and the attention record.
pub fn model_forward(params: &ModelParams, features: &Tensor) -> Result<(Tensor, AttentionRecord)> {
    let mut tape = Tape::new();
    let taped = params.bind(&mut tape, false);
    let fwd = forward_taped(&mut tape, &taped, &params.config, features)?;
    let t = features.dims2()?.0;
    let mut frame_scores = vec![0.0; t];
    for &n in &fwd.n_layers {
        for (s, v) in frame_scores.iter_mut().zip(tape.data(n)) {
            *s += v;
        }
    }
    let record = AttentionRecord {
        attn: fwd.attn.iter().map(|&a| tape.to_tensor(a)).collect(),
        mask: CausalMask::new(t)?,
        n_first: tape.data(fwd.n_layers[0]).to_vec(),
        frame_scores,
    };
    Ok((tape.to_tensor(fwd.probs), record))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            layers: 2,
            attn_dim: 4,
            feature_dim: 6,
            classes: 3,
            use_pe: false,
            ln_eps: 1e-5,
        }
    }

    fn random_features(t: usize, width: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![t, width], (0..t * width).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn causal_mask_shape_and_counts() {
        assert!(CausalMask::new(0).is_err());
        let m = CausalMask::new(1).unwrap();
        assert_eq!(m.to_tensor().data, vec![1.0]);

        let m = CausalMask::new(3).unwrap();
        assert_eq!(
            m.to_tensor().data,
            vec![1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0]
        );
        assert_eq!(CausalMask::new(4).unwrap().col_counts(), vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn attention_weights_zero_logits_are_uniform_causal() {
        let mut tape = Tape::new();
        let q = tape.input(&Tensor::zeros(vec![3, 2]));
        let k = tape.input(&Tensor::zeros(vec![3, 2]));
        let mask = CausalMask::new(3).unwrap();
        let a = attention_weights(&mut tape, q, k, &mask).unwrap();
        let got = tape.data(a);
        let want = [1.0, 0.0, 0.0, 0.5, 0.5, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-15, "{got:?}");
        }
    }

    #[test]
    fn attention_weights_hand_softmax() {
        let mut tape = Tape::new();
        let q = tape.input(&Tensor::from_rows(&[vec![1.0], vec![1.0]]));
        let k = tape.input(&Tensor::from_rows(&[vec![1.0], vec![0.0]]));
        let mask = CausalMask::new(2).unwrap();
        let a = attention_weights(&mut tape, q, k, &mask).unwrap();
        let got = tape.data(a);
        let e = std::f64::consts::E;
        assert!((got[2] - e / (e + 1.0)).abs() < 1e-12);
        assert!((got[3] - 1.0 / (e + 1.0)).abs() < 1e-12);
        // First frame always attends only to itself.
        assert_eq!(got[0], 1.0);
        assert_eq!(got[1], 0.0);
    }

    #[test]
    fn attention_output_identity_and_averaging() {
        let mut tape = Tape::new();
        let eye = tape.input(&Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]));
        let v = tape.input(&Tensor::from_rows(&[vec![2.0], vec![5.0]]));
        let out = attention_output(&mut tape, eye, v).unwrap();
        assert_eq!(tape.data(out), &[2.0, 5.0]);

        // Uniform-causal A over 3 frames against V = [1, 2, 3].
        let a = tape.input(&Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.0],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        ]));
        let v = tape.input(&Tensor::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]));
        let out = attention_output(&mut tape, a, v).unwrap();
        let got = tape.data(out);
        assert!((got[0] - 1.0).abs() < 1e-15);
        assert!((got[1] - 1.5).abs() < 1e-15);
        assert!((got[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_network_outputs_zeros() {
        let mut config = tiny_config();
        config.layers = 2;
        let mut params = ModelParams::zeros(config).unwrap();
        for layer in &mut params.layers {
            layer.ln_gamma.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let features = random_features(4, 6, 7);
        let mut tape = Tape::new();
        let taped = params.bind(&mut tape, false);
        let x = tape.input(&features);
        let mask = CausalMask::new(4).unwrap();
        let (out, _) = encoder_layer_forward(&mut tape, &taped.layers[0], x, &mask, true, 1e-5).unwrap();
        assert!(tape.data(out).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_frame_layer_is_layer_norm_of_two_v() {
        let params = ModelParams::init(tiny_config(), 11).unwrap();
        let features = random_features(1, 6, 3);
        let mask = CausalMask::new(1).unwrap();

        let mut tape = Tape::new();
        let taped = params.bind(&mut tape, false);
        let x = tape.input(&features);
        let (out, a) = encoder_layer_forward(&mut tape, &taped.layers[0], x, &mask, true, 1e-5).unwrap();
        assert_eq!(tape.data(a), &[1.0]);

        // Direct route: layer_norm(V + V).
        let qkv = tape.matmul(x, taped.layers[0].w_qkv).unwrap();
        let v = tape.slice_cols(qkv, 8, 4).unwrap();
        let vv = tape.add(v, v).unwrap();
        let direct = tape
            .layer_norm_rows(vv, taped.layers[0].ln_gamma, taped.layers[0].ln_beta, 1e-5)
            .unwrap();
        assert_eq!(tape.data(out), tape.data(direct));
    }

    #[test]
    fn future_perturbation_leaves_past_rows_bit_identical() {
        let params = ModelParams::init(tiny_config(), 5).unwrap();
        let features = random_features(6, 6, 9);
        let mut perturbed = features.clone();
        for j in 0..6 {
            perturbed.data[4 * 6 + j] += 13.25; // frame 4 of 6
        }
        let (p0, r0) = model_forward(&params, &features).unwrap();
        let (p1, r1) = model_forward(&params, &perturbed).unwrap();
        for t in 0..4 {
            assert_eq!(p0.row(t), p1.row(t), "probs row {t} changed");
            for l in 0..2 {
                assert_eq!(r0.attn[l].row(t), r1.attn[l].row(t), "attention row {t} changed");
            }
        }
    }

    #[test]
    fn sinusoidal_pe_values() {
        assert!(sinusoidal_pe(4, 5).is_err());
        let pe = sinusoidal_pe(4, 6).unwrap();
        for i in 0..3 {
            assert_eq!(pe.at(0, 2 * i), 0.0);
            assert_eq!(pe.at(0, 2 * i + 1), 1.0);
        }
        assert!((pe.at(1, 0) - 1.0f64.sin()).abs() < 1e-15);
        assert!(pe.data.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn zero_head_gives_uniform_probs() {
        let mut params = ModelParams::init(tiny_config(), 2).unwrap();
        params.head_w.data.iter_mut().for_each(|v| *v = 0.0);
        let (probs, rec) = model_forward(&params, &random_features(5, 6, 1)).unwrap();
        for t in 0..5 {
            for j in 0..3 {
                assert!((probs.at(t, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert_eq!(rec.attn.len(), 2);
        for a in &rec.attn {
            assert_eq!(a.shape, vec![5, 5]);
        }
    }

    #[test]
    fn online_prefix_consistency() {
        let params = ModelParams::init(tiny_config(), 21).unwrap();
        let features = random_features(8, 6, 4);
        let (full, _) = model_forward(&params, &features).unwrap();
        for t in 1..=8 {
            let prefix = Tensor::new(vec![t, 6], features.data[..t * 6].to_vec());
            let (probs, _) = model_forward(&params, &prefix).unwrap();
            for i in 0..t {
                for j in 0..3 {
                    assert!(
                        (probs.at(i, j) - full.at(i, j)).abs() <= 1e-12,
                        "prefix {t} row {i} diverged"
                    );
                }
            }
        }
    }

    #[test]
    fn pe_distinguishes_identical_frames() {
        let base = ModelParams::init(tiny_config(), 31).unwrap();
        let mut with_pe = base.clone();
        with_pe.config.use_pe = true;
        let row: Vec<f64> = (0..6).map(|i| 0.1 * i as f64).collect();
        let features = Tensor::from_rows(&[row.clone(), row]);

        let (p_off, _) = model_forward(&base, &features).unwrap();
        assert_eq!(p_off.row(0), p_off.row(1));

        let (p_on, _) = model_forward(&with_pe, &features).unwrap();
        let diff: f64 =
            p_on.row(0).iter().zip(p_on.row(1)).map(|(a, b)| (a - b).abs()).sum();
        assert!(diff > 1e-9, "positions indistinguishable with PE on");
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let params = ModelParams::init(tiny_config(), 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        params.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(params, loaded);
    }

    #[test]
    fn model_rejects_width_mismatch() {
        let params = ModelParams::init(tiny_config(), 1).unwrap();
        let err = model_forward(&params, &Tensor::zeros(vec![4, 5])).unwrap_err();
        assert!(err.to_string().contains("model input"), "{err}");
    }
}
