//! Tape-based reverse-mode automatic differentiation over dense f64 tensors.
//!
//! Operations append nodes to an append-only tape; `backward` walks the
//! tape in reverse exactly once. A tape and its tensors are confined to
//! one thread; parameter values live in a shared [`ParamStore`] that the
//! tape borrows immutably, with per-tape gradient buffers merged back by
//! the caller.

use crate::error::{Error, Result};
use crate::tensor::store::{ParamId, ParamStore};

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorRef(pub(crate) usize);

enum Data {
    Owned(Vec<f64>),
    Param(ParamId),
}

enum Op {
    Leaf,
    /// [m,k] x [k,n]
    Matmul { a: usize, b: usize },
    /// [m,k] x [n,k]^T
    MatmulNt { a: usize, b: usize },
    Add { a: usize, b: usize },
    /// a[r, h] + b[h] broadcast over rows
    AddRow { a: usize, b: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Relu { a: usize },
    /// softmax over the last dimension; own data is the saved output
    Softmax { a: usize },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    GatherRows { table: usize, ids: Vec<usize> },
    SliceCols { a: usize, start: usize, len: usize },
    /// column-wise concat of 2-D parts with equal row counts
    ConcatCols { parts: Vec<usize>, cols: Vec<usize> },
    ConcatRows { parts: Vec<usize> },
    SliceRows { a: usize, start: usize, len: usize },
    SumAll { a: usize },
    /// mean of -log softmax(logits)[label] over non-ignored labels;
    /// saved probs are the row softmaxes
    CrossEntropyMasked {
        logits: usize,
        labels: Vec<i64>,
        probs: Vec<f64>,
        n_active: usize,
    },
    /// -(l log s + (1-l) log(1-s)) on a scalar logit, s = sigmoid(logit)
    LogisticLoss { logit: usize, label: f64, s: f64 },
    /// -(1/|C| or 1) * sum_{c in C} log softmax(logits)[c]
    SetCrossEntropy {
        logits: usize,
        ids: Vec<usize>,
        normalize: bool,
        probs: Vec<f64>,
    },
    Sigmoid { a: usize },
}

struct Node {
    shape: Vec<usize>,
    data: Data,
    op: Op,
    requires_grad: bool,
}

/// Result of a backward pass: gradients per tape node and per parameter.
pub struct Gradients {
    node_grads: Vec<Option<Vec<f64>>>,
    param_grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn of(&self, t: TensorRef) -> Option<&[f64]> {
        self.node_grads[t.0].as_deref()
    }

    /// Per-parameter gradient buffers indexed by ParamId.
    pub fn param_grads(&self) -> &[Option<Vec<f64>>] {
        &self.param_grads
    }

    pub fn into_param_grads(self) -> Vec<Option<Vec<f64>>> {
        self.param_grads
    }
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

const NEG_INF_MASK: f64 = -1e9;

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    /// Additive mask value for forbidden attention links.
    pub const MASK_NEG: f64 = NEG_INF_MASK;

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> TensorRef {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.nodes.push(Node {
            shape,
            data: Data::Owned(data),
            op,
            requires_grad,
        });
        TensorRef(self.nodes.len() - 1)
    }

    /// Non-differentiable constant input.
    pub fn constant(&mut self, data: Vec<f64>, shape: Vec<usize>) -> TensorRef {
        self.push(shape, data, Op::Leaf, false)
    }

    /// Differentiable leaf input (used by the gradient checker).
    pub fn input(&mut self, data: Vec<f64>, shape: Vec<usize>) -> TensorRef {
        self.push(shape, data, Op::Leaf, true)
    }

    /// The parameter store this tape reads from.
    pub fn store(&self) -> &ParamStore {
        self.store
    }

    /// Reference a stored parameter without copying its data.
    pub fn param(&mut self, id: ParamId) -> TensorRef {
        let shape = self.store.get(id).shape.clone();
        self.nodes.push(Node {
            shape,
            data: Data::Param(id),
            op: Op::Leaf,
            requires_grad: true,
        });
        TensorRef(self.nodes.len() - 1)
    }

    pub fn value(&self, t: TensorRef) -> &[f64] {
        match &self.nodes[t.0].data {
            Data::Owned(v) => v,
            Data::Param(id) => &self.store.get(*id).data,
        }
    }

    pub fn shape(&self, t: TensorRef) -> &[usize] {
        &self.nodes[t.0].shape
    }

    fn requires(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn rows_cols(&self, t: TensorRef, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape(t);
        match *s {
            [r, c] => Ok((r, c)),
            [c] => Ok((1, c)),
            _ => Err(Error::ShapeMismatch {
                op,
                lhs: s.to_vec(),
                rhs: vec![],
            }),
        }
    }

    // ---- ops ----

    pub fn matmul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (m, k) = self.rows_cols(a, "matmul")?;
        let (k2, n) = self.rows_cols(b, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out = matmul_nn(self.value(a), self.value(b), m, k, n);
        let rg = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(vec![m, n], out, Op::Matmul { a: a.0, b: b.0 }, rg))
    }

    /// a[m,k] times b[n,k] transposed -> [m,n]
    pub fn matmul_nt(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let (m, k) = self.rows_cols(a, "matmul_nt")?;
        let (n, k2) = self.rows_cols(b, "matmul_nt")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out = matmul_nt(self.value(a), self.value(b), m, k, n);
        let rg = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(vec![m, n], out, Op::MatmulNt { a: a.0, b: b.0 }, rg))
    }

    pub fn add(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, Op::Add { a: a.0, b: b.0 }, rg))
    }

    /// Broadcast-add a row vector b[h] to every row of a[..., h].
    pub fn add_row(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        let h = *self.shape(a).last().unwrap_or(&0);
        if self.shape(b) != [h] {
            return Err(Error::ShapeMismatch {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let bv = self.value(b).to_vec();
        let out: Vec<f64> = self
            .value(a)
            .chunks(h)
            .flat_map(|row| row.iter().zip(&bv).map(|(x, y)| x + y).collect::<Vec<_>>())
            .collect();
        let rg = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, Op::AddRow { a: a.0, b: b.0 }, rg))
    }

    pub fn mul(&mut self, a: TensorRef, b: TensorRef) -> Result<TensorRef> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::ShapeMismatch {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.requires(a.0) || self.requires(b.0);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, Op::Mul { a: a.0, b: b.0 }, rg))
    }

    pub fn scale(&mut self, a: TensorRef, c: f64) -> TensorRef {
        let out: Vec<f64> = self.value(a).iter().map(|x| x * c).collect();
        let rg = self.requires(a.0);
        self.push(self.nodes[a.0].shape.clone(), out, Op::Scale { a: a.0, c }, rg)
    }

    pub fn relu(&mut self, a: TensorRef) -> TensorRef {
        let out: Vec<f64> = self.value(a).iter().map(|x| x.max(0.0)).collect();
        let rg = self.requires(a.0);
        self.push(self.nodes[a.0].shape.clone(), out, Op::Relu { a: a.0 }, rg)
    }

    pub fn sigmoid(&mut self, a: TensorRef) -> TensorRef {
        let out: Vec<f64> = self.value(a).iter().map(|x| sigmoid(*x)).collect();
        let rg = self.requires(a.0);
        self.push(self.nodes[a.0].shape.clone(), out, Op::Sigmoid { a: a.0 }, rg)
    }

    /// Softmax over the last dimension, with an optional additive mask
    /// (same shape, typically 0 / MASK_NEG). A slice with every position
    /// masked is a caller bug and reported as a contract violation.
    pub fn softmax_lastdim(&mut self, x: TensorRef, mask: Option<TensorRef>) -> Result<TensorRef> {
        let z = match mask {
            Some(m) => self.add(x, m)?,
            None => x,
        };
        let h = *self.shape(z).last().ok_or_else(|| Error::contract("softmax on rank-0 tensor"))?;
        let zv = self.value(z);
        let mut out = Vec::with_capacity(zv.len());
        for row in zv.chunks(h) {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if max <= NEG_INF_MASK / 2.0 {
                return Err(Error::contract(
                    "softmax_lastdim: slice with all positions masked",
                ));
            }
            let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            out.extend(exps.iter().map(|e| e / sum));
        }
        let rg = self.requires(z.0);
        Ok(self.push(self.nodes[z.0].shape.clone(), out, Op::Softmax { a: z.0 }, rg))
    }

    /// Per-last-dim normalization followed by affine gain/bias.
    pub fn layer_norm(
        &mut self,
        x: TensorRef,
        gain: TensorRef,
        bias: TensorRef,
        eps: f64,
    ) -> Result<TensorRef> {
        if eps <= 0.0 {
            return Err(Error::contract("layer_norm: eps must be positive"));
        }
        let h = *self.shape(x).last().unwrap_or(&0);
        if self.shape(gain) != [h] || self.shape(bias) != [h] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(gain).to_vec(),
            });
        }
        let xv = self.value(x);
        let g = self.value(gain).to_vec();
        let b = self.value(bias).to_vec();
        let rows = xv.len() / h;
        let mut out = Vec::with_capacity(xv.len());
        let mut means = Vec::with_capacity(rows);
        let mut inv_stds = Vec::with_capacity(rows);
        for row in xv.chunks(h) {
            let mean = row.iter().sum::<f64>() / h as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / h as f64;
            let inv_std = 1.0 / (var + eps).sqrt();
            means.push(mean);
            inv_stds.push(inv_std);
            for (j, v) in row.iter().enumerate() {
                out.push((v - mean) * inv_std * g[j] + b[j]);
            }
        }
        let rg = self.requires(x.0) || self.requires(gain.0) || self.requires(bias.0);
        Ok(self.push(
            self.nodes[x.0].shape.clone(),
            out,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                mean: means,
                inv_std: inv_stds,
            },
            rg,
        ))
    }

    /// Gather rows `ids` from a 2-D table (embedding lookup).
    pub fn gather_rows(&mut self, table: TensorRef, ids: &[usize]) -> Result<TensorRef> {
        let (rows, h) = self.rows_cols(table, "gather_rows")?;
        let tv = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * h);
        for &i in ids {
            if i >= rows {
                return Err(Error::IndexOutOfRange {
                    what: "gather_rows id",
                    got: i,
                    limit: rows,
                });
            }
            out.extend_from_slice(&tv[i * h..(i + 1) * h]);
        }
        let rg = self.requires(table.0);
        Ok(self.push(
            vec![ids.len(), h],
            out,
            Op::GatherRows {
                table: table.0,
                ids: ids.to_vec(),
            },
            rg,
        ))
    }

    pub fn slice_cols(&mut self, a: TensorRef, start: usize, len: usize) -> Result<TensorRef> {
        let (rows, h) = self.rows_cols(a, "slice_cols")?;
        if start + len > h {
            return Err(Error::IndexOutOfRange {
                what: "slice_cols end",
                got: start + len,
                limit: h,
            });
        }
        let av = self.value(a);
        let mut out = Vec::with_capacity(rows * len);
        for r in 0..rows {
            out.extend_from_slice(&av[r * h + start..r * h + start + len]);
        }
        let rg = self.requires(a.0);
        Ok(self.push(vec![rows, len], out, Op::SliceCols { a: a.0, start, len }, rg))
    }

    pub fn slice_rows(&mut self, a: TensorRef, start: usize, len: usize) -> Result<TensorRef> {
        let (rows, h) = self.rows_cols(a, "slice_rows")?;
        if start + len > rows {
            return Err(Error::IndexOutOfRange {
                what: "slice_rows end",
                got: start + len,
                limit: rows,
            });
        }
        let out = self.value(a)[start * h..(start + len) * h].to_vec();
        let rg = self.requires(a.0);
        Ok(self.push(vec![len, h], out, Op::SliceRows { a: a.0, start, len }, rg))
    }

    /// Concatenate 2-D tensors along rows. Parts must share the column count.
    pub fn concat_rows(&mut self, parts: &[TensorRef]) -> Result<TensorRef> {
        if parts.is_empty() {
            return Err(Error::contract("concat_rows: empty part list"));
        }
        let (_, h) = self.rows_cols(parts[0], "concat_rows")?;
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let (r, h2) = self.rows_cols(p, "concat_rows")?;
            if h2 != h {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            rows += r;
            out.extend_from_slice(self.value(p));
        }
        let rg = parts.iter().any(|p| self.requires(p.0));
        Ok(self.push(
            vec![rows, h],
            out,
            Op::ConcatRows {
                parts: parts.iter().map(|p| p.0).collect(),
            },
            rg,
        ))
    }

    /// Concatenate 2-D tensors along columns. Parts must share rows.
    pub fn concat_cols(&mut self, parts: &[TensorRef]) -> Result<TensorRef> {
        if parts.is_empty() {
            return Err(Error::contract("concat_cols: empty part list"));
        }
        let (rows, _) = self.rows_cols(parts[0], "concat_cols")?;
        let mut cols = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.rows_cols(p, "concat_cols")?;
            if r != rows {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            cols.push(c);
        }
        let total: usize = cols.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &c) in parts.iter().zip(&cols) {
                out.extend_from_slice(&self.value(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|p| self.requires(p.0));
        Ok(self.push(
            vec![rows, total],
            out,
            Op::ConcatCols {
                parts: parts.iter().map(|p| p.0).collect(),
                cols,
            },
            rg,
        ))
    }

    pub fn sum_all(&mut self, a: TensorRef) -> TensorRef {
        let s: f64 = self.value(a).iter().sum();
        let rg = self.requires(a.0);
        self.push(vec![1], vec![s], Op::SumAll { a: a.0 }, rg)
    }

    pub fn mean_all(&mut self, a: TensorRef) -> TensorRef {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Mean over non-ignored positions of -log softmax(logits)[label].
    /// Positions whose label equals `ignore_id` contribute nothing; if all
    /// positions are ignored the result is exactly 0 with zero gradient.
    pub fn cross_entropy_masked(
        &mut self,
        logits: TensorRef,
        labels: &[i64],
        ignore_id: i64,
    ) -> Result<TensorRef> {
        let (t, v) = self.rows_cols(logits, "cross_entropy_masked")?;
        if labels.len() != t {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy_masked",
                lhs: vec![t, v],
                rhs: vec![labels.len()],
            });
        }
        let lv = self.value(logits);
        let mut probs = vec![0.0; lv.len()];
        let mut loss = 0.0;
        let mut n_active = 0usize;
        for (r, &label) in labels.iter().enumerate() {
            if label == ignore_id {
                continue;
            }
            if label < 0 || label as usize >= v {
                return Err(Error::IndexOutOfRange {
                    what: "cross_entropy label",
                    got: label.max(0) as usize,
                    limit: v,
                });
            }
            let row = &lv[r * v..(r + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let log_z = max + sum.ln();
            loss += log_z - row[label as usize];
            for (j, x) in row.iter().enumerate() {
                probs[r * v + j] = (x - log_z).exp();
            }
            n_active += 1;
        }
        let out = if n_active == 0 { 0.0 } else { loss / n_active as f64 };
        let rg = self.requires(logits.0) && n_active > 0;
        Ok(self.push(
            vec![1],
            vec![out],
            Op::CrossEntropyMasked {
                logits: logits.0,
                labels: labels.to_vec(),
                probs,
                n_active,
            },
            rg,
        ))
    }

    /// Binary cross-entropy on a scalar logit: -(l log s + (1-l) log(1-s)).
    pub fn logistic_loss(&mut self, logit: TensorRef, label: f64) -> Result<TensorRef> {
        if self.value(logit).len() != 1 {
            return Err(Error::contract("logistic_loss: logit must be scalar"));
        }
        let z = self.value(logit)[0];
        let s = sigmoid(z);
        // stable: log(1 + exp(-|z|)) form
        let loss = z.max(0.0) - z * label + (1.0 + (-z.abs()).exp()).ln();
        let rg = self.requires(logit.0);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::LogisticLoss {
                logit: logit.0,
                label,
                s,
            },
            rg,
        ))
    }

    /// Multi-label set cross-entropy over a single softmax:
    /// -(1/|C|)^normalize * sum_{c in C} log softmax(logits)[c].
    pub fn set_cross_entropy(
        &mut self,
        logits: TensorRef,
        ids: &[usize],
        normalize: bool,
    ) -> Result<TensorRef> {
        if ids.is_empty() {
            return Err(Error::contract("set_cross_entropy: empty attribute set"));
        }
        let lv = self.value(logits);
        let v = lv.len();
        for &c in ids {
            if c >= v {
                return Err(Error::IndexOutOfRange {
                    what: "attribute id",
                    got: c,
                    limit: v,
                });
            }
        }
        let max = lv.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = lv.iter().map(|x| (x - max).exp()).sum();
        let log_z = max + sum.ln();
        let probs: Vec<f64> = lv.iter().map(|x| (x - log_z).exp()).collect();
        let mut loss: f64 = ids.iter().map(|&c| log_z - lv[c]).sum();
        if normalize {
            loss /= ids.len() as f64;
        }
        let rg = self.requires(logits.0);
        Ok(self.push(
            vec![1],
            vec![loss],
            Op::SetCrossEntropy {
                logits: logits.0,
                ids: ids.to_vec(),
                normalize,
                probs,
            },
            rg,
        ))
    }

    /// Reverse sweep from a scalar loss. Visits each node once, in reverse
    /// topological (= insertion) order.
    pub fn backward(&self, loss: TensorRef) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::contract("backward: loss must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.store.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g_out) = grads[i].take() else { continue };
            // stash param grads from leaves
            if let Data::Param(pid) = self.nodes[i].data {
                let dst = param_grads[pid].get_or_insert_with(|| vec![0.0; g_out.len()]);
                for (d, s) in dst.iter_mut().zip(&g_out) {
                    *d += s;
                }
                // params are leaves; nothing to propagate
                grads[i] = Some(g_out);
                continue;
            }
            self.backprop_node(i, &g_out, &mut grads)?;
            grads[i] = Some(g_out);
        }
        Ok(Gradients {
            node_grads: grads,
            param_grads,
        })
    }

    fn accumulate(&self, grads: &mut Vec<Option<Vec<f64>>>, idx: usize, delta: &[f64]) {
        if !self.nodes[idx].requires_grad {
            return;
        }
        let g = grads[idx].get_or_insert_with(|| vec![0.0; self.node_len(idx)]);
        for (d, s) in g.iter_mut().zip(delta) {
            *d += s;
        }
    }

    fn node_len(&self, idx: usize) -> usize {
        match &self.nodes[idx].data {
            Data::Owned(v) => v.len(),
            Data::Param(id) => self.store.get(*id).numel(),
        }
    }

    fn node_value(&self, idx: usize) -> &[f64] {
        match &self.nodes[idx].data {
            Data::Owned(v) => v,
            Data::Param(id) => &self.store.get(*id).data,
        }
    }

    fn backprop_node(
        &self,
        i: usize,
        g_out: &[f64],
        grads: &mut Vec<Option<Vec<f64>>>,
    ) -> Result<()> {
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = two_dims(&self.nodes[*a].shape);
                let n = self.nodes[i].shape[self.nodes[i].shape.len() - 1];
                if self.requires(*a) {
                    // dA = dC . B^T
                    let da = matmul_nt(g_out, self.node_value(*b), m, n, k);
                    self.accumulate(grads, *a, &da);
                }
                if self.requires(*b) {
                    // dB = A^T . dC
                    let db = matmul_tn(self.node_value(*a), g_out, m, k, n);
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::MatmulNt { a, b } => {
                let (m, k) = two_dims(&self.nodes[*a].shape);
                let (n, _) = two_dims(&self.nodes[*b].shape);
                if self.requires(*a) {
                    // C = A B^T => dA = dC . B
                    let da = matmul_nn(g_out, self.node_value(*b), m, n, k);
                    self.accumulate(grads, *a, &da);
                }
                if self.requires(*b) {
                    // dB = dC^T . A
                    let db = matmul_tn(g_out, self.node_value(*a), m, n, k);
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, g_out);
                self.accumulate(grads, *b, g_out);
            }
            Op::AddRow { a, b } => {
                self.accumulate(grads, *a, g_out);
                if self.requires(*b) {
                    let h = self.node_len(*b);
                    let mut db = vec![0.0; h];
                    for row in g_out.chunks(h) {
                        for (d, s) in db.iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Mul { a, b } => {
                if self.requires(*a) {
                    let da: Vec<f64> = g_out
                        .iter()
                        .zip(self.node_value(*b))
                        .map(|(g, y)| g * y)
                        .collect();
                    self.accumulate(grads, *a, &da);
                }
                if self.requires(*b) {
                    let db: Vec<f64> = g_out
                        .iter()
                        .zip(self.node_value(*a))
                        .map(|(g, x)| g * x)
                        .collect();
                    self.accumulate(grads, *b, &db);
                }
            }
            Op::Scale { a, c } => {
                let da: Vec<f64> = g_out.iter().map(|g| g * c).collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Relu { a } => {
                let da: Vec<f64> = g_out
                    .iter()
                    .zip(self.node_value(*a))
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Sigmoid { a } => {
                let y = match &self.nodes[i].data {
                    Data::Owned(v) => v,
                    _ => unreachable!(),
                };
                let da: Vec<f64> = g_out
                    .iter()
                    .zip(y)
                    .map(|(g, s)| g * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *a, &da);
            }
            Op::Softmax { a } => {
                let y = match &self.nodes[i].data {
                    Data::Owned(v) => v,
                    _ => unreachable!(),
                };
                let h = *self.nodes[i].shape.last().unwrap();
                let mut da = vec![0.0; y.len()];
                for r in 0..y.len() / h {
                    let yr = &y[r * h..(r + 1) * h];
                    let gr = &g_out[r * h..(r + 1) * h];
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for j in 0..h {
                        da[r * h + j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            } => {
                let h = *self.nodes[i].shape.last().unwrap();
                let xv = self.node_value(*x);
                let g = self.node_value(*gain);
                let rows = xv.len() / h;
                if self.requires(*x) {
                    let mut dx = vec![0.0; xv.len()];
                    for r in 0..rows {
                        let xr = &xv[r * h..(r + 1) * h];
                        let gr = &g_out[r * h..(r + 1) * h];
                        let is = inv_std[r];
                        let mu = mean[r];
                        // dy/dxhat then standard layer-norm backward
                        let dxhat: Vec<f64> = gr.iter().zip(g).map(|(go, gg)| go * gg).collect();
                        let sum_dxhat: f64 = dxhat.iter().sum();
                        let sum_dxhat_xhat: f64 = dxhat
                            .iter()
                            .zip(xr)
                            .map(|(d, xv)| d * (xv - mu) * is)
                            .sum();
                        for j in 0..h {
                            let xhat = (xr[j] - mu) * is;
                            dx[r * h + j] = is / h as f64
                                * (h as f64 * dxhat[j] - sum_dxhat - xhat * sum_dxhat_xhat);
                        }
                    }
                    self.accumulate(grads, *x, &dx);
                }
                if self.requires(*gain) {
                    let mut dg = vec![0.0; h];
                    for r in 0..rows {
                        for j in 0..h {
                            let xhat = (xv[r * h + j] - mean[r]) * inv_std[r];
                            dg[j] += g_out[r * h + j] * xhat;
                        }
                    }
                    self.accumulate(grads, *gain, &dg);
                }
                if self.requires(*bias) {
                    let mut db = vec![0.0; h];
                    for r in 0..rows {
                        for j in 0..h {
                            db[j] += g_out[r * h + j];
                        }
                    }
                    self.accumulate(grads, *bias, &db);
                }
            }
            Op::GatherRows { table, ids } => {
                if self.requires(*table) {
                    let h = *self.nodes[i].shape.last().unwrap();
                    let mut dt = vec![0.0; self.node_len(*table)];
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..h {
                            dt[id * h + j] += g_out[r * h + j];
                        }
                    }
                    self.accumulate(grads, *table, &dt);
                }
            }
            Op::SliceCols { a, start, len } => {
                let (rows, h) = two_dims(&self.nodes[*a].shape);
                let mut da = vec![0.0; rows * h];
                for r in 0..rows {
                    for j in 0..*len {
                        da[r * h + start + j] = g_out[r * len + j];
                    }
                }
                self.accumulate(grads, *a, &da);
            }
            Op::SliceRows { a, start, len } => {
                let (_, h) = two_dims(&self.nodes[*a].shape);
                let mut da = vec![0.0; self.node_len(*a)];
                da[start * h..(start + len) * h].copy_from_slice(g_out);
                self.accumulate(grads, *a, &da);
            }
            Op::ConcatCols { parts, cols } => {
                let total: usize = cols.iter().sum();
                let rows = self.nodes[i].shape[0];
                let mut off = 0;
                for (&p, &c) in parts.iter().zip(cols) {
                    if self.requires(p) {
                        let mut dp = vec![0.0; rows * c];
                        for r in 0..rows {
                            dp[r * c..(r + 1) * c]
                                .copy_from_slice(&g_out[r * total + off..r * total + off + c]);
                        }
                        self.accumulate(grads, p, &dp);
                    }
                    off += c;
                }
            }
            Op::ConcatRows { parts } => {
                let mut off = 0;
                for &p in parts {
                    let n = self.node_len(p);
                    self.accumulate(grads, p, &g_out[off..off + n]);
                    off += n;
                }
            }
            Op::SumAll { a } => {
                let da = vec![g_out[0]; self.node_len(*a)];
                self.accumulate(grads, *a, &da);
            }
            Op::CrossEntropyMasked {
                logits,
                labels,
                probs,
                n_active,
            } => {
                if *n_active > 0 && self.requires(*logits) {
                    let v = probs.len() / labels.len();
                    let scale = g_out[0] / *n_active as f64;
                    let mut dl = vec![0.0; probs.len()];
                    for (r, &label) in labels.iter().enumerate() {
                        if label < 0 || probs[r * v..(r + 1) * v].iter().all(|p| *p == 0.0) {
                            continue;
                        }
                        for j in 0..v {
                            let ind = if j as i64 == label { 1.0 } else { 0.0 };
                            dl[r * v + j] = scale * (probs[r * v + j] - ind);
                        }
                    }
                    self.accumulate(grads, *logits, &dl);
                }
            }
            Op::LogisticLoss { logit, label, s } => {
                let dl = vec![g_out[0] * (s - label)];
                self.accumulate(grads, *logit, &dl);
            }
            Op::SetCrossEntropy {
                logits,
                ids,
                normalize,
                probs,
            } => {
                if self.requires(*logits) {
                    let count = ids.len() as f64;
                    let w = if *normalize { 1.0 / count } else { 1.0 };
                    let mut dl: Vec<f64> = probs.iter().map(|p| g_out[0] * w * count * p).collect();
                    for &c in ids {
                        dl[c] -= g_out[0] * w;
                    }
                    self.accumulate(grads, *logits, &dl);
                }
            }
        }
        Ok(())
    }
}

fn two_dims(shape: &[usize]) -> (usize, usize) {
    match *shape {
        [r, c] => (r, c),
        [c] => (1, c),
        _ => panic!("expected rank <= 2, got {shape:?}"),
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// ---- raw matmul kernels (row-major) ----

fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let cr = &mut c[i * n..(i + 1) * n];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let br = &b[p * n..(p + 1) * n];
            for (cv, &bv) in cr.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// c[m,n] = a[m,k] . b[n,k]^T
fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let br = &b[j * k..(j + 1) * k];
            c[i * n + j] = ar.iter().zip(br).map(|(x, y)| x * y).sum();
        }
    }
    c
}

/// c[k,n] = a[m,k]^T . b[m,n]
fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; k * n];
    for i in 0..m {
        let ar = &a[i * k..(i + 1) * k];
        let br = &b[i * n..(i + 1) * n];
        for (p, &av) in ar.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let cr = &mut c[p * n..(p + 1) * n];
            for (cv, &bv) in cr.iter_mut().zip(br) {
                *cv += av * bv;
            }
        }
    }
    c
}
