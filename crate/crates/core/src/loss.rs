//! Training objective: class-balanced cross-entropy over the head output,
//! plus an attention regularizer that prices first-layer attention mass by
//! the frozen backbone's per-frame confidence.

use crate::error::{Error, Result};
use crate::model::CausalMask;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Probability floor under every log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-frame cross-entropy of the frozen backbone against ground truth.
/// Computed outside the tape: the backbone is frozen, so no gradient may
/// ever flow through these values.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameConfidence {
    pub cee: Vec<f64>,
}

/// cee[t] = -ln(clip(backbone_probs[t][labels[t]], 1e-12, 1)).
pub fn cee_vector(backbone_probs: &Tensor, labels: &[usize]) -> Result<FrameConfidence> {
    let (rows, classes) = backbone_probs.dims2()?;
    if rows != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "cee_vector",
            lhs: backbone_probs.shape.clone(),
            rhs: vec![labels.len()],
        });
    }
    let mut cee = Vec::with_capacity(rows);
    for (t, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes, frame: t });
        }
        let p = backbone_probs.at(t, label).clamp(PROB_FLOOR, 1.0);
        cee.push(-p.ln());
    }
    Ok(FrameConfidence { cee })
}

/// Normalized frame-wise attention: n_j = (sum_i A_ij) / (sum_i M_ij).
/// The mask column counts remove the positional bias the causal mask induces
/// (frame 0 can receive attention T times, the last frame once).
pub fn normalized_frame_attention(tape: &mut Tape, attn: Var, mask: &CausalMask) -> Result<Var> {
    let shape = tape.shape(attn).to_vec();
    let t = mask.len();
    if shape != [t, t] {
        return Err(Error::ShapeMismatch {
            op: "normalized_frame_attention",
            lhs: shape,
            rhs: vec![t, t],
        });
    }
    let col_sums = tape.sum_cols(attn)?;
    let inv_counts: Vec<f64> = mask.col_counts().iter().map(|c| 1.0 / c).collect();
    tape.mul_const(col_sums, &inv_counts)
}

/// Attention regularizer <n, CEE>. Gradient flows into n (and from there to
/// the first attention layer) only; CEE enters as a constant.
pub fn attention_reg_loss(tape: &mut Tape, n: Var, conf: &FrameConfidence) -> Result<Var> {
    if tape.data(n).len() != conf.cee.len() {
        return Err(Error::ShapeMismatch {
            op: "attention_reg_loss",
            lhs: tape.shape(n).to_vec(),
            rhs: vec![conf.cee.len()],
        });
    }
    tape.dot_const(n, &conf.cee)
}

/// Per-class loss weights from median frequency balancing.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub w: Vec<f64>,
}

impl ClassWeights {
    pub fn uniform(classes: usize) -> Self {
        ClassWeights { w: vec![1.0; classes] }
    }
}

/// w_k = median(freq over present classes) / freq_k. Classes absent from the
/// counts inherit the maximum present weight, so a split missing a rare
/// phase cannot produce infinite weights.
pub fn median_freq_weights(label_counts: &[usize]) -> Result<ClassWeights> {
    let total: usize = label_counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("median_freq_weights: all class counts are zero"));
    }
    let mut present: Vec<f64> =
        label_counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / total as f64).collect();
    present.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = present.len() / 2;
    let median = if present.len() % 2 == 1 {
        present[mid]
    } else {
        0.5 * (present[mid - 1] + present[mid])
    };
    let mut max_w: f64 = 0.0;
    let mut w = vec![0.0; label_counts.len()];
    for (k, &count) in label_counts.iter().enumerate() {
        if count > 0 {
            w[k] = median / (count as f64 / total as f64);
            max_w = max_w.max(w[k]);
        }
    }
    for (k, &count) in label_counts.iter().enumerate() {
        if count == 0 {
            w[k] = max_w;
        }
    }
    Ok(ClassWeights { w })
}

/// (1/T) * sum_t w[labels[t]] * (-ln probs[t][labels[t]]), probabilities
/// floored at 1e-12 under the log.
pub fn balanced_cross_entropy(
    tape: &mut Tape,
    probs: Var,
    labels: &[usize],
    weights: &ClassWeights,
) -> Result<Var> {
    let shape = tape.shape(probs).to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "balanced_cross_entropy",
            lhs: shape,
            rhs: vec![labels.len()],
        });
    }
    let classes = shape[1];
    for (t, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes, frame: t });
        }
    }
    let t_len = labels.len() as f64;
    let picked = tape.gather_rows(probs, labels)?;
    let logs = tape.ln_clipped(picked, PROB_FLOOR);
    let coeffs: Vec<f64> = labels.iter().map(|&y| -weights.w[y] / t_len).collect();
    tape.dot_const(logs, &coeffs)
}

/// L = L_c + lambda * L_reg.
pub fn total_loss(tape: &mut Tape, l_c: Var, l_reg: Var, lambda: f64) -> Result<Var> {
    let scaled = tape.scale(l_reg, lambda);
    tape.add(l_c, scaled)
}
