//! Minimal reverse-mode autodiff over f64 vectors.
//!
//! A [`Graph`] is a tape: every operation appends a node whose parents are
//! earlier nodes, so the reverse sweep is a single backward pass over the
//! tape. Values and gradients live in two flat arenas indexed by per-node
//! offsets, which lets [`Graph::clear`] recycle all storage between samples
//! without freeing it.
//!
//! Matrices are flat row-major vectors; `matvec` takes its weight operand as
//! an ordinary node, so generated parameters (hypernetwork outputs)
//! differentiate exactly like stored ones.

use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatVec { w: NodeId, x: NodeId, rows: usize, cols: usize },
    Add { a: NodeId, b: NodeId },
    Sub { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Tanh { x: NodeId },
    Relu { x: NodeId },
    Scale { x: NodeId, c: f64 },
    Concat { parts: Vec<NodeId> },
    Slice { x: NodeId, start: usize },
    Softmax { x: NodeId },
    MeanOf { parts: Vec<NodeId> },
    NegLogEntry { p: NodeId, index: usize, floor: f64 },
    HingeMargin { p: NodeId, index: usize, margin: f64 },
    // stacked variants: k independent rows processed in one node
    MatMatT { w: NodeId, x: NodeId, k: usize, rows: usize, cols: usize },
    AddBroadcast { a: NodeId, b: NodeId, k: usize, n: usize },
    ConcatCols { a: NodeId, b: NodeId, k: usize, n_a: usize, n_b: usize },
    SoftmaxRows { x: NodeId, k: usize, n: usize },
    MeanRows { x: NodeId, k: usize, n: usize },
    HeadApply { theta: NodeId, e: NodeId, k: usize, classes: usize, edim: usize },
}

#[derive(Debug, Clone)]
struct NodeMeta {
    off: usize,
    len: usize,
    op: Op,
}

/// A parameter tensor: values plus an accumulated gradient.
#[derive(Debug, Clone, Default)]
pub struct Tensor {
    pub data: Vec<f64>,
    pub grad: Vec<f64>,
}

/// Owned storage for all parameters of a model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&mut self, len: usize) -> usize {
        self.tensors.push(Tensor {
            data: vec![0.0; len],
            grad: vec![0.0; len],
        });
        self.tensors.len() - 1
    }

    pub fn slot_count(&self) -> usize {
        self.tensors.len()
    }

    pub fn tensor(&self, slot: usize) -> &Tensor {
        &self.tensors[slot]
    }

    pub fn tensor_mut(&mut self, slot: usize) -> &mut Tensor {
        &mut self.tensors[slot]
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.grad.iter().copied())
            .collect()
    }

    pub fn set_flat_values(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.scalar_count() {
            return Err(Error::shape(format!(
                "flat parameter vector has {} entries, store holds {}",
                flat.len(),
                self.scalar_count()
            )));
        }
        let mut i = 0;
        for t in &mut self.tensors {
            let n = t.data.len();
            t.data.copy_from_slice(&flat[i..i + n]);
            i += n;
        }
        Ok(())
    }

    pub fn any_non_finite(&self) -> bool {
        self.tensors
            .iter()
            .any(|t| t.data.iter().any(|v| !v.is_finite()))
    }
}

/// Reverse-mode tape.
#[derive(Debug, Default)]
pub struct Graph {
    meta: Vec<NodeMeta>,
    values: Vec<f64>,
    grads: Vec<f64>,
    /// (slot, node) pairs for parameters bound into this graph.
    bound_params: Vec<(usize, NodeId)>,
    /// Number of log-floor clamps hit while building.
    pub clamp_events: u64,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drop all nodes but keep the allocated storage.
    pub fn clear(&mut self) {
        self.meta.clear();
        self.values.clear();
        self.grads.clear();
        self.bound_params.clear();
        self.clamp_events = 0;
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    #[inline]
    fn span(&self, id: NodeId) -> (usize, usize) {
        let m = &self.meta[id.0];
        (m.off, m.len)
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        let (off, len) = self.span(id);
        &self.values[off..off + len]
    }

    pub fn grad(&self, id: NodeId) -> &[f64] {
        let (off, len) = self.span(id);
        &self.grads[off..off + len]
    }

    fn push(&mut self, len: usize, op: Op) -> NodeId {
        let off = self.values.len();
        self.values.resize(off + len, 0.0);
        self.grads.resize(off + len, 0.0);
        self.meta.push(NodeMeta { off, len, op });
        NodeId(self.meta.len() - 1)
    }

    fn len_of(&self, id: NodeId) -> usize {
        self.meta[id.0].len
    }

    /// New leaf holding `values`.
    pub fn input(&mut self, values: &[f64]) -> NodeId {
        let id = self.push(values.len(), Op::Leaf);
        let (off, len) = self.span(id);
        self.values[off..off + len].copy_from_slice(values);
        id
    }

    /// Leaf bound to a parameter slot; repeated binds of one slot share a
    /// node so gradients accumulate.
    pub fn param(&mut self, store: &ParamStore, slot: usize) -> NodeId {
        if let Some(&(_, id)) = self.bound_params.iter().find(|(s, _)| *s == slot) {
            return id;
        }
        let id = self.input(&store.tensor(slot).data);
        self.bound_params.push((slot, id));
        id
    }

    /// Add each bound parameter's gradient into the store.
    pub fn accumulate_param_grads(&self, store: &mut ParamStore) {
        for &(slot, id) in &self.bound_params {
            let g = self.grad(id);
            for (dst, src) in store.tensor_mut(slot).grad.iter_mut().zip(g) {
                *dst += src;
            }
        }
    }

    /// Output region of the freshly pushed `id` plus everything before it.
    /// Valid because parents always precede children on the tape.
    fn split_out(&mut self, off: usize, len: usize) -> (&[f64], &mut [f64]) {
        let (head, tail) = self.values.split_at_mut(off);
        (&head[..], &mut tail[..len])
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        if self.len_of(w) != rows * cols || self.len_of(x) != cols {
            return Err(Error::shape(format!(
                "matvec {rows}x{cols}: weight len {} input len {}",
                self.len_of(w),
                self.len_of(x)
            )));
        }
        let (w_off, _) = self.span(w);
        let (x_off, _) = self.span(x);
        let id = self.push(rows, Op::MatVec { w, x, rows, cols });
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let wv = &head[w_off..w_off + rows * cols];
        let xv = &head[x_off..x_off + cols];
        for r in 0..rows {
            let row = &wv[r * cols..(r + 1) * cols];
            out[r] = row.iter().zip(xv).map(|(a, b)| a * b).sum();
        }
        Ok(id)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, Op::Add { a, b }, |x, y| x + y)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, Op::Sub { a, b }, |x, y| x - y)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_op(a, b, Op::Mul { a, b }, |x, y| x * y)
    }

    fn zip_op(
        &mut self,
        a: NodeId,
        b: NodeId,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<NodeId> {
        let n = self.len_of(a);
        if n != self.len_of(b) {
            return Err(Error::shape(format!(
                "elementwise op on lengths {n} and {}",
                self.len_of(b)
            )));
        }
        let (a_off, _) = self.span(a);
        let (b_off, _) = self.span(b);
        let id = self.push(n, op);
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        for i in 0..n {
            out[i] = f(head[a_off + i], head[b_off + i]);
        }
        Ok(id)
    }

    fn map_op(&mut self, x: NodeId, op: Op, f: impl Fn(f64) -> f64) -> NodeId {
        let n = self.len_of(x);
        let (x_off, _) = self.span(x);
        let id = self.push(n, op);
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        for i in 0..n {
            out[i] = f(head[x_off + i]);
        }
        id
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map_op(x, Op::Tanh { x }, f64::tanh)
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map_op(x, Op::Relu { x }, |v| v.max(0.0))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        self.map_op(x, Op::Scale { x, c }, |v| c * v)
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::shape("concat of zero parts"));
        }
        let spans: Vec<(usize, usize)> = parts.iter().map(|&p| self.span(p)).collect();
        let n: usize = spans.iter().map(|(_, l)| l).sum();
        let id = self.push(
            n,
            Op::Concat {
                parts: parts.to_vec(),
            },
        );
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let mut at = 0;
        for (p_off, p_len) in spans {
            out[at..at + p_len].copy_from_slice(&head[p_off..p_off + p_len]);
            at += p_len;
        }
        Ok(id)
    }

    pub fn slice(&mut self, x: NodeId, start: usize, len: usize) -> Result<NodeId> {
        if start + len > self.len_of(x) {
            return Err(Error::shape(format!(
                "slice {start}..{} of node with length {}",
                start + len,
                self.len_of(x)
            )));
        }
        let (x_off, _) = self.span(x);
        let id = self.push(len, Op::Slice { x, start });
        let (off, out_len) = self.span(id);
        let (head, out) = self.split_out(off, out_len);
        out.copy_from_slice(&head[x_off + start..x_off + start + len]);
        Ok(id)
    }

    /// Numerically stable softmax.
    pub fn softmax(&mut self, x: NodeId) -> NodeId {
        let n = self.len_of(x);
        let (x_off, _) = self.span(x);
        let id = self.push(n, Op::Softmax { x });
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let xs = &head[x_off..x_off + n];
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (o, &v) in out.iter_mut().zip(xs) {
            *o = (v - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        id
    }

    /// Elementwise mean of same-length nodes.
    pub fn mean_of(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("mean of zero parts"))?;
        let n = self.len_of(first);
        let spans: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| {
                let s = self.span(p);
                if s.1 != n {
                    return Err(Error::shape("mean over differing lengths"));
                }
                Ok(s)
            })
            .collect::<Result<_>>()?;
        let id = self.push(
            n,
            Op::MeanOf {
                parts: parts.to_vec(),
            },
        );
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let k = spans.len() as f64;
        for (p_off, _) in spans {
            for i in 0..n {
                out[i] += head[p_off + i];
            }
        }
        for o in out.iter_mut() {
            *o /= k;
        }
        Ok(id)
    }

    /// Stacked matrix product: `x` holds `k` rows of `cols` entries, `w` is
    /// `rows x cols`; the output holds `k` rows of `rows` entries.
    pub fn matmat_t(
        &mut self,
        w: NodeId,
        x: NodeId,
        k: usize,
        rows: usize,
        cols: usize,
    ) -> Result<NodeId> {
        if self.len_of(w) != rows * cols || self.len_of(x) != k * cols {
            return Err(Error::shape(format!(
                "stacked matmul {k}x{cols} * {rows}x{cols}^T: weight len {} input len {}",
                self.len_of(w),
                self.len_of(x)
            )));
        }
        let (w_off, _) = self.span(w);
        let (x_off, _) = self.span(x);
        let id = self.push(k * rows, Op::MatMatT { w, x, k, rows, cols });
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let wv = &head[w_off..w_off + rows * cols];
        for ki in 0..k {
            let xrow = &head[x_off + ki * cols..x_off + (ki + 1) * cols];
            let orow = &mut out[ki * rows..(ki + 1) * rows];
            for (r, o) in orow.iter_mut().enumerate() {
                let wrow = &wv[r * cols..(r + 1) * cols];
                *o = wrow.iter().zip(xrow).map(|(a, b)| a * b).sum();
            }
        }
        Ok(id)
    }

    /// Add a length-`n` vector to each of the `k` rows of `a`.
    pub fn add_broadcast(&mut self, a: NodeId, b: NodeId, k: usize, n: usize) -> Result<NodeId> {
        if self.len_of(a) != k * n || self.len_of(b) != n {
            return Err(Error::shape(format!(
                "broadcast add {k}x{n}: lhs len {} rhs len {}",
                self.len_of(a),
                self.len_of(b)
            )));
        }
        let (a_off, _) = self.span(a);
        let (b_off, _) = self.span(b);
        let id = self.push(k * n, Op::AddBroadcast { a, b, k, n });
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let bv = &head[b_off..b_off + n];
        for ki in 0..k {
            let arow = &head[a_off + ki * n..a_off + (ki + 1) * n];
            let orow = &mut out[ki * n..(ki + 1) * n];
            for ((o, a), b) in orow.iter_mut().zip(arow).zip(bv) {
                *o = a + b;
            }
        }
        Ok(id)
    }

    /// Row-wise concatenation of two stacks with `k` rows each.
    pub fn concat_cols(
        &mut self,
        a: NodeId,
        b: NodeId,
        k: usize,
        n_a: usize,
        n_b: usize,
    ) -> Result<NodeId> {
        if self.len_of(a) != k * n_a || self.len_of(b) != k * n_b {
            return Err(Error::shape(format!(
                "column concat {k}x({n_a}+{n_b}): lhs len {} rhs len {}",
                self.len_of(a),
                self.len_of(b)
            )));
        }
        let (a_off, _) = self.span(a);
        let (b_off, _) = self.span(b);
        let id = self.push(k * (n_a + n_b), Op::ConcatCols { a, b, k, n_a, n_b });
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let n = n_a + n_b;
        for ki in 0..k {
            out[ki * n..ki * n + n_a]
                .copy_from_slice(&head[a_off + ki * n_a..a_off + (ki + 1) * n_a]);
            out[ki * n + n_a..(ki + 1) * n]
                .copy_from_slice(&head[b_off + ki * n_b..b_off + (ki + 1) * n_b]);
        }
        Ok(id)
    }

    /// Softmax applied independently to each of the `k` rows.
    pub fn softmax_rows(&mut self, x: NodeId, k: usize, n: usize) -> Result<NodeId> {
        if self.len_of(x) != k * n {
            return Err(Error::shape(format!(
                "row softmax {k}x{n}: input len {}",
                self.len_of(x)
            )));
        }
        let (x_off, _) = self.span(x);
        let id = self.push(k * n, Op::SoftmaxRows { x, k, n });
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        for ki in 0..k {
            let xrow = &head[x_off + ki * n..x_off + (ki + 1) * n];
            let orow = &mut out[ki * n..(ki + 1) * n];
            let max = xrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (o, &v) in orow.iter_mut().zip(xrow) {
                *o = (v - max).exp();
                total += *o;
            }
            for o in orow.iter_mut() {
                *o /= total;
            }
        }
        Ok(id)
    }

    /// Column means over the `k` rows of a stack.
    pub fn mean_rows(&mut self, x: NodeId, k: usize, n: usize) -> Result<NodeId> {
        if self.len_of(x) != k * n || k == 0 {
            return Err(Error::shape(format!(
                "row mean {k}x{n}: input len {}",
                self.len_of(x)
            )));
        }
        let (x_off, _) = self.span(x);
        let id = self.push(n, Op::MeanRows { x, k, n });
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        for ki in 0..k {
            let xrow = &head[x_off + ki * n..x_off + (ki + 1) * n];
            for (o, v) in out.iter_mut().zip(xrow) {
                *o += v;
            }
        }
        for o in out.iter_mut() {
            *o /= k as f64;
        }
        Ok(id)
    }

    /// Apply `k` generated linear heads to one embedding: row `ki` of
    /// `theta` holds `[w (classes*edim), b (classes)]` and produces logits
    /// `w . e - b`.
    pub fn head_apply(
        &mut self,
        theta: NodeId,
        e: NodeId,
        k: usize,
        classes: usize,
        edim: usize,
    ) -> Result<NodeId> {
        let theta_row = classes * edim + classes;
        if self.len_of(theta) != k * theta_row || self.len_of(e) != edim {
            return Err(Error::shape(format!(
                "head apply {k}x({classes}x{edim}): theta len {} embed len {}",
                self.len_of(theta),
                self.len_of(e)
            )));
        }
        let (t_off, _) = self.span(theta);
        let (e_off, _) = self.span(e);
        let id = self.push(
            k * classes,
            Op::HeadApply {
                theta,
                e,
                k,
                classes,
                edim,
            },
        );
        let (off, len) = self.span(id);
        let (head, out) = self.split_out(off, len);
        let ev = &head[e_off..e_off + edim];
        for ki in 0..k {
            let trow = &head[t_off + ki * theta_row..t_off + (ki + 1) * theta_row];
            let orow = &mut out[ki * classes..(ki + 1) * classes];
            for (c, o) in orow.iter_mut().enumerate() {
                let wrow = &trow[c * edim..(c + 1) * edim];
                let dot: f64 = wrow.iter().zip(ev).map(|(a, b)| a * b).sum();
                *o = dot - trow[classes * edim + c];
            }
        }
        Ok(id)
    }

    /// Scalar margin loss `max(0, margin - (p[index] - max_{j != index} p[j]))`:
    /// pushes the correct entry past every competitor by `margin`, then
    /// releases the point.
    pub fn hinge_margin(&mut self, p: NodeId, index: usize, margin: f64) -> Result<NodeId> {
        let (p_off, p_len) = self.span(p);
        if index >= p_len {
            return Err(Error::domain(format!(
                "label {index} out of range for {p_len} classes"
            )));
        }
        if p_len < 2 {
            return Err(Error::domain("margin loss needs at least 2 classes"));
        }
        let pv = &self.values[p_off..p_off + p_len];
        let rival = rival_index(pv, index);
        let delta = pv[index] - pv[rival];
        let id = self.push(1, Op::HingeMargin { p, index, margin });
        let (off, _) = self.span(id);
        self.values[off] = (margin - delta).max(0.0);
        Ok(id)
    }

    /// Scalar loss `-ln(max(p[index], floor))`. Hitting the floor is counted
    /// in [`Graph::clamp_events`] and contributes zero gradient.
    pub fn neg_log_entry(&mut self, p: NodeId, index: usize, floor: f64) -> Result<NodeId> {
        if index >= self.len_of(p) {
            return Err(Error::domain(format!(
                "label {index} out of range for {} classes",
                self.len_of(p)
            )));
        }
        let (p_off, _) = self.span(p);
        let v = self.values[p_off + index];
        let id = self.push(1, Op::NegLogEntry { p, index, floor });
        let (off, _) = self.span(id);
        if v < floor {
            self.clamp_events += 1;
            self.values[off] = -floor.ln();
        } else {
            self.values[off] = -v.ln();
        }
        Ok(id)
    }

    /// Reverse sweep from a scalar loss node.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.len_of(loss) != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got length {}",
                self.len_of(loss)
            )));
        }
        let (loss_off, _) = self.span(loss);
        self.grads[loss_off] = 1.0;

        for idx in (0..=loss.0).rev() {
            let NodeMeta { off, len, ref op } = self.meta[idx];
            match *op {
                Op::Leaf => {}
                Op::MatVec { w, x, rows, cols } => {
                    let (w_off, _) = self.span(w);
                    let (x_off, _) = self.span(x);
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    let xv = &self.values[x_off..x_off + cols];
                    let wv = &self.values[w_off..w_off + rows * cols];
                    for r in 0..rows {
                        let gr = gout[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let grow = &mut gh[w_off + r * cols..w_off + (r + 1) * cols];
                        for (gw, xc) in grow.iter_mut().zip(xv) {
                            *gw += gr * xc;
                        }
                    }
                    let gx = &mut gh[x_off..x_off + cols];
                    for r in 0..rows {
                        let gr = gout[r];
                        if gr == 0.0 {
                            continue;
                        }
                        let wrow = &wv[r * cols..(r + 1) * cols];
                        for (g, wc) in gx.iter_mut().zip(wrow) {
                            *g += gr * wc;
                        }
                    }
                }
                Op::Add { a, b } => {
                    let a_off = self.span(a).0;
                    let b_off = self.span(b).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for i in 0..len {
                        gh[a_off + i] += gout[i];
                        gh[b_off + i] += gout[i];
                    }
                }
                Op::Sub { a, b } => {
                    let a_off = self.span(a).0;
                    let b_off = self.span(b).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for i in 0..len {
                        gh[a_off + i] += gout[i];
                        gh[b_off + i] -= gout[i];
                    }
                }
                Op::Mul { a, b } => {
                    let a_off = self.span(a).0;
                    let b_off = self.span(b).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for i in 0..len {
                        gh[a_off + i] += gout[i] * self.values[b_off + i];
                        gh[b_off + i] += gout[i] * self.values[a_off + i];
                    }
                }
                Op::Tanh { x } => {
                    let x_off = self.span(x).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for i in 0..len {
                        let y = self.values[off + i];
                        gh[x_off + i] += gout[i] * (1.0 - y * y);
                    }
                }
                Op::Relu { x } => {
                    let x_off = self.span(x).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for i in 0..len {
                        if self.values[x_off + i] > 0.0 {
                            gh[x_off + i] += gout[i];
                        }
                    }
                }
                Op::Scale { x, c } => {
                    let x_off = self.span(x).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for i in 0..len {
                        gh[x_off + i] += c * gout[i];
                    }
                }
                Op::Concat { ref parts } => {
                    let spans: Vec<(usize, usize)> =
                        parts.iter().map(|&p| self.span(p)).collect();
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    let mut at = 0;
                    for (p_off, p_len) in spans {
                        for i in 0..p_len {
                            gh[p_off + i] += gout[at + i];
                        }
                        at += p_len;
                    }
                }
                Op::Slice { x, start } => {
                    let x_off = self.span(x).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for i in 0..len {
                        gh[x_off + start + i] += gout[i];
                    }
                }
                Op::Softmax { x } => {
                    let x_off = self.span(x).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    let y = &self.values[off..off + len];
                    let dot: f64 = gout.iter().zip(y).map(|(g, yv)| g * yv).sum();
                    for i in 0..len {
                        gh[x_off + i] += y[i] * (gout[i] - dot);
                    }
                }
                Op::MeanOf { ref parts } => {
                    let k = parts.len() as f64;
                    let spans: Vec<usize> = parts.iter().map(|&p| self.span(p).0).collect();
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for p_off in spans {
                        for i in 0..len {
                            gh[p_off + i] += gout[i] / k;
                        }
                    }
                }
                Op::NegLogEntry { p, index, floor } => {
                    let p_off = self.span(p).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    let v = self.values[p_off + index];
                    if v >= floor {
                        gh[p_off + index] -= gout[0] / v;
                    }
                }
                Op::HingeMargin { p, index, margin } => {
                    let (p_off, p_len) = self.span(p);
                    let pv = &self.values[p_off..p_off + p_len];
                    let rival = rival_index(pv, index);
                    let active = margin - (pv[index] - pv[rival]) > 0.0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    if active {
                        gh[p_off + index] -= gout[0];
                        gh[p_off + rival] += gout[0];
                    }
                }
                Op::MatMatT { w, x, k, rows, cols } => {
                    let (w_off, _) = self.span(w);
                    let (x_off, _) = self.span(x);
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for ki in 0..k {
                        let grow = &gout[ki * rows..(ki + 1) * rows];
                        let xrow = &self.values[x_off + ki * cols..x_off + (ki + 1) * cols];
                        for (r, &gr) in grow.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            let gw = &mut gh[w_off + r * cols..w_off + (r + 1) * cols];
                            for (g, xv) in gw.iter_mut().zip(xrow) {
                                *g += gr * xv;
                            }
                        }
                    }
                    let wv = &self.values[w_off..w_off + rows * cols];
                    for ki in 0..k {
                        let grow = &gout[ki * rows..(ki + 1) * rows];
                        let gx = &mut gh[x_off + ki * cols..x_off + (ki + 1) * cols];
                        for (r, &gr) in grow.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            let wrow = &wv[r * cols..(r + 1) * cols];
                            for (g, wc) in gx.iter_mut().zip(wrow) {
                                *g += gr * wc;
                            }
                        }
                    }
                }
                Op::AddBroadcast { a, b, k, n } => {
                    let a_off = self.span(a).0;
                    let b_off = self.span(b).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for ki in 0..k {
                        let grow = &gout[ki * n..(ki + 1) * n];
                        let ga = &mut gh[a_off + ki * n..a_off + (ki + 1) * n];
                        for (g, gr) in ga.iter_mut().zip(grow) {
                            *g += gr;
                        }
                    }
                    let gb = &mut gh[b_off..b_off + n];
                    for ki in 0..k {
                        let grow = &gout[ki * n..(ki + 1) * n];
                        for (g, gr) in gb.iter_mut().zip(grow) {
                            *g += gr;
                        }
                    }
                }
                Op::ConcatCols { a, b, k, n_a, n_b } => {
                    let a_off = self.span(a).0;
                    let b_off = self.span(b).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    let n = n_a + n_b;
                    for ki in 0..k {
                        for i in 0..n_a {
                            gh[a_off + ki * n_a + i] += gout[ki * n + i];
                        }
                        for i in 0..n_b {
                            gh[b_off + ki * n_b + i] += gout[ki * n + n_a + i];
                        }
                    }
                }
                Op::SoftmaxRows { x, k, n } => {
                    let x_off = self.span(x).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    for ki in 0..k {
                        let y = &self.values[off + ki * n..off + (ki + 1) * n];
                        let grow = &gout[ki * n..(ki + 1) * n];
                        let dot: f64 = grow.iter().zip(y).map(|(g, yv)| g * yv).sum();
                        let gx = &mut gh[x_off + ki * n..x_off + (ki + 1) * n];
                        for ((g, &gr), &yv) in gx.iter_mut().zip(grow).zip(y) {
                            *g += yv * (gr - dot);
                        }
                    }
                }
                Op::MeanRows { x, k, n } => {
                    let x_off = self.span(x).0;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    let inv = 1.0 / k as f64;
                    for ki in 0..k {
                        let gx = &mut gh[x_off + ki * n..x_off + (ki + 1) * n];
                        for (g, gr) in gx.iter_mut().zip(gout) {
                            *g += gr * inv;
                        }
                    }
                }
                Op::HeadApply {
                    theta,
                    e,
                    k,
                    classes,
                    edim,
                } => {
                    let t_off = self.span(theta).0;
                    let e_off = self.span(e).0;
                    let theta_row = classes * edim + classes;
                    let (gh, gout) = split_grad(&mut self.grads, off, len);
                    let ev: Vec<f64> = self.values[e_off..e_off + edim].to_vec();
                    for ki in 0..k {
                        let grow = &gout[ki * classes..(ki + 1) * classes];
                        let trow_off = t_off + ki * theta_row;
                        for (c, &gr) in grow.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            let gw = &mut gh[trow_off + c * edim..trow_off + (c + 1) * edim];
                            for (g, xv) in gw.iter_mut().zip(&ev) {
                                *g += gr * xv;
                            }
                            gh[trow_off + classes * edim + c] -= gr;
                        }
                        // embedding gradient (e is usually a leaf)
                        for (c, &gr) in grow.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            let trow =
                                &self.values[trow_off + c * edim..trow_off + (c + 1) * edim];
                            let ge = &mut gh[e_off..e_off + edim];
                            for (g, wv) in ge.iter_mut().zip(trow) {
                                *g += gr * wv;
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn split_grad(grads: &mut [f64], off: usize, len: usize) -> (&mut [f64], &[f64]) {
    let (head, tail) = grads.split_at_mut(off);
    (head, &tail[..len])
}

/// Largest entry excluding `index`, ties toward the smallest position.
fn rival_index(values: &[f64], index: usize) -> usize {
    let mut best = usize::MAX;
    for (j, &v) in values.iter().enumerate() {
        if j == index {
            continue;
        }
        if best == usize::MAX || v > values[best] {
            best = j;
        }
    }
    best
}
