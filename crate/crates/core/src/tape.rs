//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Every differentiable value lives as a node in a [`Tape`] arena, addressed
//! by a copyable [`Var`]. Forward methods record one op per output node;
//! [`Tape::backward`] replays the record in reverse and accumulates exact
//! partial derivatives of a scalar loss into every tracked node.
//!
//! Constant payloads (masks, gather indices, fixed weight vectors) are stored
//! in side arenas so ops stay cheap to clone and gradients never flow into
//! them. A tape is built per forward pass and dropped after the step; a model
//! evaluated on independent tapes can run concurrently.

use crate::error::{Error, Result};
use crate::tensor::{mm, mm_nt, mm_tn, Tensor};

/// Handle to a tensor node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy)]
struct FConst(usize);
#[derive(Debug, Clone, Copy)]
struct BConst(usize);
#[derive(Debug, Clone, Copy)]
struct IConst(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// out = a + b (same shape)
    Add { a: usize, b: usize },
    /// out = a * b elementwise (same shape)
    Mul { a: usize, b: usize },
    /// out = c * x
    Scale { x: usize, c: f64 },
    /// out[m,n] = a[m,k] @ b[k,n]
    MatMul { a: usize, b: usize, m: usize, k: usize, n: usize },
    /// out = x^T for 2D x
    Transpose { x: usize, rows: usize, cols: usize },
    /// out = x[:, start..start+width]
    SliceCols { x: usize, start: usize, width: usize, cols: usize },
    /// out[i] = keep[i] ? x[i] : -inf
    MaskedFill { x: usize, keep: BConst },
    /// row-wise softmax with row-max subtraction
    SoftmaxRows { x: usize, cols: usize },
    /// row-wise layer norm with affine scale/shift
    LayerNormRows { x: usize, gamma: usize, beta: usize, eps: f64, cols: usize },
    /// scalar sum of all entries
    SumAll { x: usize },
    /// out[j] = sum_i x[i,j]
    SumCols { x: usize, rows: usize, cols: usize },
    /// out[i] = x[i] * k[i] with constant k (no gradient into k)
    MulConstVec { x: usize, k: FConst },
    /// out[t] = x[t, idx[t]]
    GatherRows { x: usize, idx: IConst, cols: usize },
    /// out[i] = ln(clamp(x[i], floor, 1))
    LnClip { x: usize, floor: f64 },
    /// scalar <x, k> with constant k
    DotConst { x: usize, k: FConst },
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    /// Persistent accumulator; empty unless the node is tracked.
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of primitive operations over an arena of tensor nodes.
pub struct Tape {
    nodes: Vec<Node>,
    fconsts: Vec<Vec<f64>>,
    bconsts: Vec<Vec<bool>>,
    iconsts: Vec<Vec<usize>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), fconsts: Vec::new(), bconsts: Vec::new(), iconsts: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        // Leaves get an eager accumulator (callers read them even when no
        // gradient flows); interior accumulators materialize on first touch.
        let grad = if requires_grad && matches!(op, Op::Leaf) {
            vec![0.0; data.len()]
        } else {
            Vec::new()
        };
        self.nodes.push(Node { shape, data, grad, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn fconst(&mut self, k: Vec<f64>) -> FConst {
        self.fconsts.push(k);
        FConst(self.fconsts.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    // ── Node access ──────────────────────────────────────────────

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.nodes[v.0].shape.clone(), self.nodes[v.0].data.clone())
    }

    /// Accumulated gradient of a tracked node. Panics if the node was created
    /// with `requires_grad = false`. Leaves always hold a full accumulator
    /// (zeros until touched); an interior node no backward pass has reached
    /// yet yields an empty slice.
    pub fn grad(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        assert!(node.requires_grad, "grad() on untracked node");
        &node.grad
    }

    // ── Leaves ───────────────────────────────────────────────────

    pub fn leaf(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        self.push(t.shape.clone(), t.data.clone(), requires_grad, Op::Leaf)
    }

    /// Trainable leaf: gradients accumulate here.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.leaf(t, true)
    }

    /// Non-trainable leaf (inputs, fixed encodings).
    pub fn input(&mut self, t: &Tensor) -> Var {
        self.leaf(t, false)
    }

    // ── Forward ops ──────────────────────────────────────────────

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data: Vec<f64> =
            self.nodes[a.0].data.iter().zip(&self.nodes[b.0].data).map(|(x, y)| x + y).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(shape, data, rg, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let data: Vec<f64> =
            self.nodes[a.0].data.iter().zip(&self.nodes[b.0].data).map(|(x, y)| x * y).collect();
        let shape = self.nodes[a.0].shape.clone();
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(shape, data, rg, Op::Mul { a: a.0, b: b.0 }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let data: Vec<f64> = self.nodes[x.0].data.iter().map(|v| c * v).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.requires(x);
        self.push(shape, data, rg, Op::Scale { x: x.0, c })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ok = sa.len() == 2 && sb.len() == 2 && sa[1] == sb[0];
        if !ok {
            return Err(Error::ShapeMismatch { op: "matmul", lhs: sa.to_vec(), rhs: sb.to_vec() });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = mm(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n);
        let rg = self.requires(a) || self.requires(b);
        Ok(self.push(vec![m, n], data, rg, Op::MatMul { a: a.0, b: b.0, m, k, n }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::invalid(format!("transpose expects a 2D tensor, got {:?}", s)));
        }
        let (rows, cols) = (s[0], s[1]);
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                data[j * rows + i] = src[i * cols + j];
            }
        }
        let rg = self.requires(x);
        Ok(self.push(vec![cols, rows], data, rg, Op::Transpose { x: x.0, rows, cols }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || start + width > s[1] {
            return Err(Error::invalid(format!(
                "slice_cols [{start}, {}) out of range for shape {:?}",
                start + width,
                s
            )));
        }
        let (rows, cols) = (s[0], s[1]);
        let src = &self.nodes[x.0].data;
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&src[r * cols + start..r * cols + start + width]);
        }
        let rg = self.requires(x);
        Ok(self.push(vec![rows, width], data, rg, Op::SliceCols { x: x.0, start, width, cols }))
    }

    /// Replace entries where `keep` is false with the -inf sentinel.
    pub fn masked_fill_neg_inf(&mut self, x: Var, keep: &[bool]) -> Result<Var> {
        if keep.len() != self.nodes[x.0].data.len() {
            return Err(Error::ShapeMismatch {
                op: "masked_fill",
                lhs: self.shape(x).to_vec(),
                rhs: vec![keep.len()],
            });
        }
        let data: Vec<f64> = self.nodes[x.0]
            .data
            .iter()
            .zip(keep)
            .map(|(&v, &k)| if k { v } else { f64::NEG_INFINITY })
            .collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.requires(x);
        self.bconsts.push(keep.to_vec());
        let keep = BConst(self.bconsts.len() - 1);
        Ok(self.push(shape, data, rg, Op::MaskedFill { x: x.0, keep }))
    }

    /// Row-wise softmax with row-max subtraction. -inf entries come out as
    /// exact zeros; a fully masked row is rejected.
    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let t = self.to_tensor(x);
        let (rows, cols) = t.dims2()?;
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &t.data[r * cols..(r + 1) * cols];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::FullyMaskedRow { row: r });
            }
            if !max.is_finite() {
                return Err(Error::invalid(format!("softmax row {r} has non-finite entries")));
            }
            let out = &mut data[r * cols..(r + 1) * cols];
            let mut sum = 0.0;
            for j in 0..cols {
                let e = (row[j] - max).exp();
                out[j] = e;
                sum += e;
            }
            for v in out.iter_mut() {
                *v /= sum;
            }
        }
        let rg = self.requires(x);
        Ok(self.push(t.shape.clone(), data, rg, Op::SoftmaxRows { x: x.0, cols }))
    }

    /// Per-row zero-mean unit-variance normalization (variance + eps under the
    /// root) followed by elementwise `gamma * xhat + beta`.
    pub fn layer_norm_rows(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::invalid(format!("layer_norm expects a 2D input, got {:?}", s)));
        }
        let (rows, cols) = (s[0], s[1]);
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if self.nodes[v.0].data.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: if name == "gamma" { "layer_norm gamma" } else { "layer_norm beta" },
                    lhs: s.clone(),
                    rhs: self.shape(v).to_vec(),
                });
            }
        }
        if eps <= 0.0 {
            return Err(Error::invalid(format!("layer_norm eps must be > 0, got {eps}")));
        }
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &self.nodes[x.0].data[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let std = (var + eps).sqrt();
            for j in 0..cols {
                let xhat = (row[j] - mean) / std;
                data[r * cols + j] =
                    self.nodes[gamma.0].data[j] * xhat + self.nodes[beta.0].data[j];
            }
        }
        let rg = self.requires(x) || self.requires(gamma) || self.requires(beta);
        Ok(self.push(
            s,
            data,
            rg,
            Op::LayerNormRows { x: x.0, gamma: gamma.0, beta: beta.0, eps, cols },
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].data.iter().sum();
        let rg = self.requires(x);
        self.push(vec![1], vec![s], rg, Op::SumAll { x: x.0 })
    }

    /// Column sums of a 2D tensor, as a length-`cols` vector.
    pub fn sum_cols(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::invalid(format!("sum_cols expects a 2D tensor, got {:?}", s)));
        }
        let (rows, cols) = (s[0], s[1]);
        let mut data = vec![0.0; cols];
        for r in 0..rows {
            for j in 0..cols {
                data[j] += self.nodes[x.0].data[r * cols + j];
            }
        }
        let rg = self.requires(x);
        Ok(self.push(vec![cols], data, rg, Op::SumCols { x: x.0, rows, cols }))
    }

    /// Elementwise product with a constant array; no gradient flows into `k`.
    pub fn mul_const(&mut self, x: Var, k: &[f64]) -> Result<Var> {
        if k.len() != self.nodes[x.0].data.len() {
            return Err(Error::ShapeMismatch {
                op: "mul_const",
                lhs: self.shape(x).to_vec(),
                rhs: vec![k.len()],
            });
        }
        let data: Vec<f64> = self.nodes[x.0].data.iter().zip(k).map(|(v, c)| v * c).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.requires(x);
        let k = self.fconst(k.to_vec());
        Ok(self.push(shape, data, rg, Op::MulConstVec { x: x.0, k }))
    }

    /// out[t] = x[t, idx[t]] for a 2D x.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 || idx.len() != s[0] {
            return Err(Error::ShapeMismatch {
                op: "gather_rows",
                lhs: s.to_vec(),
                rhs: vec![idx.len()],
            });
        }
        let (rows, cols) = (s[0], s[1]);
        for (t, &j) in idx.iter().enumerate() {
            if j >= cols {
                return Err(Error::LabelOutOfRange { label: j, classes: cols, frame: t });
            }
        }
        let data: Vec<f64> =
            idx.iter().enumerate().map(|(t, &j)| self.nodes[x.0].data[t * cols + j]).collect();
        let rg = self.requires(x);
        self.iconsts.push(idx.to_vec());
        let idx = IConst(self.iconsts.len() - 1);
        Ok(self.push(vec![rows], data, rg, Op::GatherRows { x: x.0, idx, cols }))
    }

    /// Elementwise ln(clamp(x, floor, 1)).
    pub fn ln_clipped(&mut self, x: Var, floor: f64) -> Var {
        let data: Vec<f64> =
            self.nodes[x.0].data.iter().map(|&v| v.clamp(floor, 1.0).ln()).collect();
        let shape = self.nodes[x.0].shape.clone();
        let rg = self.requires(x);
        self.push(shape, data, rg, Op::LnClip { x: x.0, floor })
    }

    /// Scalar inner product with a constant vector; no gradient into `k`.
    pub fn dot_const(&mut self, x: Var, k: &[f64]) -> Result<Var> {
        if k.len() != self.nodes[x.0].data.len() {
            return Err(Error::ShapeMismatch {
                op: "dot_const",
                lhs: self.shape(x).to_vec(),
                rhs: vec![k.len()],
            });
        }
        let s: f64 = self.nodes[x.0].data.iter().zip(k).map(|(v, c)| v * c).sum();
        let rg = self.requires(x);
        let k = self.fconst(k.to_vec());
        Ok(self.push(vec![1], vec![s], rg, Op::DotConst { x: x.0, k }))
    }

    // ── Backward ─────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Partials of this loss are added into
    /// every tracked node's accumulator, so two backward calls accumulate the
    /// sum of both losses' gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::NonScalarLoss { shape: self.shape(loss).to_vec() });
        }
        let n = self.nodes.len();
        // Per-call scratch so repeated backward calls stay linear; buffers
        // materialize only for nodes this loss actually reaches.
        let mut d: Vec<Vec<f64>> = (0..n).map(|_| Vec::new()).collect();
        let mut touched = vec![false; n];
        if self.nodes[loss.0].requires_grad {
            d[loss.0] = vec![1.0];
            touched[loss.0] = true;
        }

        for i in (0..n).rev() {
            if !touched[i] {
                continue;
            }
            let g = std::mem::take(&mut d[i]);
            self.propagate(i, &g, &mut d, &mut touched);
            // Fold this loss's contribution into the persistent accumulator.
            let node = &mut self.nodes[i];
            if node.grad.is_empty() {
                node.grad = g;
            } else {
                for (acc, gi) in node.grad.iter_mut().zip(&g) {
                    *acc += gi;
                }
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], d: &mut [Vec<f64>], touched: &mut [bool]) {
        let mut seed = |j: usize, add: &dyn Fn(&mut [f64])| {
            if self.nodes[j].requires_grad {
                if d[j].is_empty() {
                    d[j] = vec![0.0; self.nodes[j].data.len()];
                }
                add(&mut d[j]);
                touched[j] = true;
            }
        };
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                seed(*a, &|dst| {
                    for (x, y) in dst.iter_mut().zip(g) {
                        *x += y;
                    }
                });
                seed(*b, &|dst| {
                    for (x, y) in dst.iter_mut().zip(g) {
                        *x += y;
                    }
                });
            }
            Op::Mul { a, b } => {
                let (av, bv) = (&self.nodes[*a].data, &self.nodes[*b].data);
                seed(*a, &|dst| {
                    for ((x, y), z) in dst.iter_mut().zip(g).zip(bv) {
                        *x += y * z;
                    }
                });
                seed(*b, &|dst| {
                    for ((x, y), z) in dst.iter_mut().zip(g).zip(av) {
                        *x += y * z;
                    }
                });
            }
            Op::Scale { x, c } => {
                seed(*x, &|dst| {
                    for (v, y) in dst.iter_mut().zip(g) {
                        *v += c * y;
                    }
                });
            }
            Op::MatMul { a, b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                if self.nodes[*a].requires_grad {
                    let da = mm_nt(g, &self.nodes[*b].data, m, n, k);
                    seed(*a, &|dst| {
                        for (x, y) in dst.iter_mut().zip(&da) {
                            *x += y;
                        }
                    });
                }
                if self.nodes[*b].requires_grad {
                    let db = mm_tn(&self.nodes[*a].data, g, m, k, n);
                    seed(*b, &|dst| {
                        for (x, y) in dst.iter_mut().zip(&db) {
                            *x += y;
                        }
                    });
                }
            }
            Op::Transpose { x, rows, cols } => {
                let (rows, cols) = (*rows, *cols);
                seed(*x, &|dst| {
                    for i in 0..rows {
                        for j in 0..cols {
                            dst[i * cols + j] += g[j * rows + i];
                        }
                    }
                });
            }
            Op::SliceCols { x, start, width, cols } => {
                let (start, width, cols) = (*start, *width, *cols);
                let rows = g.len() / width;
                seed(*x, &|dst| {
                    for r in 0..rows {
                        for j in 0..width {
                            dst[r * cols + start + j] += g[r * width + j];
                        }
                    }
                });
            }
            Op::MaskedFill { x, keep } => {
                let keep = &self.bconsts[keep.0];
                seed(*x, &|dst| {
                    for ((v, y), &k) in dst.iter_mut().zip(g).zip(keep) {
                        if k {
                            *v += y;
                        }
                    }
                });
            }
            Op::SoftmaxRows { x, cols } => {
                let cols = *cols;
                let out = &self.nodes[i].data;
                let rows = out.len() / cols;
                seed(*x, &|dst| {
                    for r in 0..rows {
                        let s = &out[r * cols..(r + 1) * cols];
                        let gr = &g[r * cols..(r + 1) * cols];
                        let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let dr = &mut dst[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            dr[j] += s[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::LayerNormRows { x, gamma, beta, eps, cols } => {
                let (eps, cols) = (*eps, *cols);
                let xv = &self.nodes[*x].data;
                let gv = &self.nodes[*gamma].data;
                let rows = xv.len() / cols;
                // Recompute per-row statistics; forward is cheap and exact.
                let mut xhat = vec![0.0; xv.len()];
                let mut inv_std = vec![0.0; rows];
                for r in 0..rows {
                    let row = &xv[r * cols..(r + 1) * cols];
                    let mean = row.iter().sum::<f64>() / cols as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
                    let std = (var + eps).sqrt();
                    inv_std[r] = 1.0 / std;
                    for j in 0..cols {
                        xhat[r * cols + j] = (row[j] - mean) / std;
                    }
                }
                seed(*x, &|dst| {
                    for r in 0..rows {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let xh = &xhat[r * cols..(r + 1) * cols];
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..cols {
                            let dxh = gr[j] * gv[j];
                            m1 += dxh;
                            m2 += dxh * xh[j];
                        }
                        m1 /= cols as f64;
                        m2 /= cols as f64;
                        let dr = &mut dst[r * cols..(r + 1) * cols];
                        for j in 0..cols {
                            let dxh = gr[j] * gv[j];
                            dr[j] += (dxh - m1 - xh[j] * m2) * inv_std[r];
                        }
                    }
                });
                seed(*gamma, &|dst| {
                    for r in 0..rows {
                        for j in 0..cols {
                            dst[j] += g[r * cols + j] * xhat[r * cols + j];
                        }
                    }
                });
                seed(*beta, &|dst| {
                    for r in 0..rows {
                        for j in 0..cols {
                            dst[j] += g[r * cols + j];
                        }
                    }
                });
            }
            Op::SumAll { x } => {
                seed(*x, &|dst| {
                    for v in dst.iter_mut() {
                        *v += g[0];
                    }
                });
            }
            Op::SumCols { x, rows, cols } => {
                let (rows, cols) = (*rows, *cols);
                seed(*x, &|dst| {
                    for r in 0..rows {
                        for j in 0..cols {
                            dst[r * cols + j] += g[j];
                        }
                    }
                });
            }
            Op::MulConstVec { x, k } => {
                let k = &self.fconsts[k.0];
                seed(*x, &|dst| {
                    for ((v, y), c) in dst.iter_mut().zip(g).zip(k) {
                        *v += y * c;
                    }
                });
            }
            Op::GatherRows { x, idx, cols } => {
                let cols = *cols;
                let idx = &self.iconsts[idx.0];
                seed(*x, &|dst| {
                    for (t, &j) in idx.iter().enumerate() {
                        dst[t * cols + j] += g[t];
                    }
                });
            }
            Op::LnClip { x, floor } => {
                let floor = *floor;
                let xv = &self.nodes[*x].data;
                seed(*x, &|dst| {
                    for ((v, y), &xi) in dst.iter_mut().zip(g).zip(xv) {
                        if xi >= floor && xi <= 1.0 {
                            *v += y / xi.clamp(floor, 1.0);
                        }
                    }
                });
            }
            Op::DotConst { x, k } => {
                let k = &self.fconsts[k.0];
                seed(*x, &|dst| {
                    for (v, c) in dst.iter_mut().zip(k) {
                        *v += g[0] * c;
                    }
                });
            }
        }
    }
}
