//! Minimal reverse-mode automatic differentiation over dense row-major
//! `f64` matrices. A [`Tape`] records every operation; [`Tape::backward`]
//! replays it in reverse from a scalar.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length");
        Tensor { rows, cols, data }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor::from_vec(1, 1, vec![v])
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c ← op(a)·op(b) + beta·c` where `op` optionally transposes.
#[allow(clippy::too_many_arguments)]
pub fn gemm(a: &Tensor, ta: bool, b: &Tensor, tb: bool, beta: f64, c: &mut Tensor) {
    let (m, k) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (k2, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c.data {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: shapes and strides are checked above against the buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

pub type NodeId = usize;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// `a · bᵀ`
    MatMulT(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Add(NodeId, NodeId),
    Relu(NodeId),
    Gather(NodeId, Rc<Vec<usize>>),
    ScatterAdd(NodeId, Rc<Vec<usize>>),
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    MaxRows(NodeId, Vec<usize>),
    MeanRows(NodeId),
    NormalizeRows(NodeId, Vec<f64>),
    LogSoftmax(NodeId, bool),
    Exp(NodeId),
    Pick(NodeId, usize),
    DiagSum(NodeId),
    SqDist(NodeId, NodeId),
    Sum(NodeId),
    WeightedSum(Vec<(NodeId, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        self.nodes.len() - 1
    }

    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        let mut out = Tensor::zeros(av.rows, bv.cols);
        gemm(av, false, bv, false, 0.0, &mut out);
        self.push(out, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        let mut out = Tensor::zeros(av.rows, bv.rows);
        gemm(av, false, bv, true, 0.0, &mut out);
        self.push(out, Op::MatMulT(a, b))
    }

    /// Adds the `1 × cols` row `bias` to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let mut out = self.nodes[x].value.clone();
        let b = &self.nodes[bias].value;
        assert_eq!((b.rows, b.cols), (1, out.cols), "bias shape");
        for r in 0..out.rows {
            for (v, bb) in out.row_mut(r).iter_mut().zip(&b.data) {
                *v += bb;
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut out = self.nodes[a].value.clone();
        out.add_assign(&self.nodes[b].value);
        self.push(out, Op::Add(a, b))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let mut out = self.nodes[x].value.clone();
        for v in &mut out.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.push(out, Op::Relu(x))
    }

    /// Row `k` of the output is row `idx[k]` of `x`.
    pub fn gather(&mut self, x: NodeId, idx: Rc<Vec<usize>>) -> NodeId {
        let xv = &self.nodes[x].value;
        let mut out = Tensor::zeros(idx.len(), xv.cols);
        for (k, &r) in idx.iter().enumerate() {
            out.row_mut(k).copy_from_slice(xv.row(r));
        }
        self.push(out, Op::Gather(x, idx))
    }

    /// Row `k` of `x` is added into output row `idx[k]`.
    pub fn scatter_add(&mut self, x: NodeId, idx: Rc<Vec<usize>>, rows: usize) -> NodeId {
        let xv = &self.nodes[x].value;
        assert_eq!(xv.rows, idx.len(), "scatter index length");
        let mut out = Tensor::zeros(rows, xv.cols);
        for (k, &r) in idx.iter().enumerate() {
            for (o, v) in out.row_mut(r).iter_mut().zip(xv.row(k)) {
                *o += v;
            }
        }
        self.push(out, Op::ScatterAdd(x, idx))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(av.rows, bv.rows, "concat rows");
        let mut out = Tensor::zeros(av.rows, av.cols + bv.cols);
        for r in 0..av.rows {
            let row = out.row_mut(r);
            row[..av.cols].copy_from_slice(av.row(r));
            row[av.cols..].copy_from_slice(bv.row(r));
        }
        self.push(out, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, parts: Vec<NodeId>) -> NodeId {
        let cols = self.nodes[parts[0]].value.cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let v = &self.nodes[p].value;
            assert_eq!(v.cols, cols, "concat cols");
            data.extend_from_slice(&v.data);
            rows += v.rows;
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts))
    }

    /// Column-wise maximum as a `1 × cols` row; zeros when `x` has no rows.
    pub fn max_rows(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let mut out = Tensor::zeros(1, xv.cols);
        let mut arg = vec![usize::MAX; xv.cols];
        for c in 0..xv.cols {
            for r in 0..xv.rows {
                let v = xv.data[r * xv.cols + c];
                if arg[c] == usize::MAX || v > out.data[c] {
                    out.data[c] = v;
                    arg[c] = r;
                }
            }
        }
        self.push(out, Op::MaxRows(x, arg))
    }

    pub fn mean_rows(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let mut out = Tensor::zeros(1, xv.cols);
        if xv.rows > 0 {
            for r in 0..xv.rows {
                for (o, v) in out.data.iter_mut().zip(xv.row(r)) {
                    *o += v;
                }
            }
            let inv = 1.0 / xv.rows as f64;
            for o in &mut out.data {
                *o *= inv;
            }
        }
        self.push(out, Op::MeanRows(x))
    }

    /// Scales every row to unit Euclidean norm (norms floored at 1e-12).
    pub fn normalize_rows(&mut self, x: NodeId) -> NodeId {
        let mut out = self.nodes[x].value.clone();
        let mut norms = Vec::with_capacity(out.rows);
        for r in 0..out.rows {
            let row = out.row_mut(r);
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            for v in row.iter_mut() {
                *v /= n;
            }
            norms.push(n);
        }
        self.push(out, Op::NormalizeRows(x, norms))
    }

    /// Log-softmax over each row, or over all entries when `per_row` is false.
    pub fn log_softmax(&mut self, x: NodeId, per_row: bool) -> NodeId {
        let mut out = self.nodes[x].value.clone();
        let width = if per_row { out.cols } else { out.data.len() };
        if width > 0 {
            for chunk in out.data.chunks_mut(width) {
                let mx = chunk.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + chunk.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                for v in chunk.iter_mut() {
                    *v -= lse;
                }
            }
        }
        self.push(out, Op::LogSoftmax(x, per_row))
    }

    pub fn exp(&mut self, x: NodeId) -> NodeId {
        let mut out = self.nodes[x].value.clone();
        for v in &mut out.data {
            *v = v.exp();
        }
        self.push(out, Op::Exp(x))
    }

    /// Entry `k` in row-major order, as a scalar.
    pub fn pick(&mut self, x: NodeId, k: usize) -> NodeId {
        let v = self.nodes[x].value.data[k];
        self.push(Tensor::scalar(v), Op::Pick(x, k))
    }

    pub fn diag_sum(&mut self, x: NodeId) -> NodeId {
        let xv = &self.nodes[x].value;
        let s = (0..xv.rows.min(xv.cols))
            .map(|i| xv.data[i * xv.cols + i])
            .sum();
        self.push(Tensor::scalar(s), Op::DiagSum(x))
    }

    /// `‖a − b‖²` over all entries.
    pub fn sq_dist(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (&self.nodes[a].value, &self.nodes[b].value);
        assert_eq!(av.data.len(), bv.data.len(), "sq_dist length");
        let s = av
            .data
            .iter()
            .zip(&bv.data)
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        self.push(Tensor::scalar(s), Op::SqDist(a, b))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x].value.data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    /// `Σ w_k · x_k` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: Vec<(NodeId, f64)>) -> NodeId {
        let s = terms
            .iter()
            .map(|&(id, w)| w * self.nodes[id].value.data[0])
            .sum();
        self.push(Tensor::scalar(s), Op::WeightedSum(terms))
    }

    /// Gradients of the scalar `root` with respect to every node.
    pub fn backward(&self, root: NodeId) -> Vec<Option<Tensor>> {
        let mut grads: Vec<Option<Tensor>> = vec![None; root + 1];
        grads[root] = Some(Tensor::scalar(1.0));
        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads);
            grads[id] = Some(g);
        }
        grads
    }

    fn propagate(&self, id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[id];
        let val = |k: NodeId| &self.nodes[k].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(av.rows, av.cols);
                gemm(g, false, bv, true, 0.0, &mut ga);
                accumulate(grads, *a, ga);
                let mut gb = Tensor::zeros(bv.rows, bv.cols);
                gemm(av, true, g, false, 0.0, &mut gb);
                accumulate(grads, *b, gb);
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(av.rows, av.cols);
                gemm(g, false, bv, false, 0.0, &mut ga);
                accumulate(grads, *a, ga);
                let mut gb = Tensor::zeros(bv.rows, bv.cols);
                gemm(g, true, av, false, 0.0, &mut gb);
                accumulate(grads, *b, gb);
            }
            Op::AddRow(x, bias) => {
                accumulate(grads, *x, g.clone());
                let mut gb = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                        *o += v;
                    }
                }
                accumulate(grads, *bias, gb);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.clone());
                accumulate(grads, *b, g.clone());
            }
            Op::Relu(x) => {
                let mut gx = g.clone();
                for (d, y) in gx.data.iter_mut().zip(&node.value.data) {
                    if *y <= 0.0 {
                        *d = 0.0;
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Gather(x, idx) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows, xv.cols);
                for (k, &r) in idx.iter().enumerate() {
                    for (o, v) in gx.row_mut(r).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::ScatterAdd(x, idx) => {
                let mut gx = Tensor::zeros(idx.len(), g.cols);
                for (k, &r) in idx.iter().enumerate() {
                    gx.row_mut(k).copy_from_slice(g.row(r));
                }
                accumulate(grads, *x, gx);
            }
            Op::ConcatCols(a, b) => {
                let ca = val(*a).cols;
                let mut ga = Tensor::zeros(g.rows, ca);
                let mut gb = Tensor::zeros(g.rows, g.cols - ca);
                for r in 0..g.rows {
                    ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                    gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = val(p).data.len();
                    let gp = Tensor::from_vec(
                        val(p).rows,
                        g.cols,
                        g.data[offset..offset + n].to_vec(),
                    );
                    offset += n;
                    accumulate(grads, p, gp);
                }
            }
            Op::MaxRows(x, arg) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows, xv.cols);
                for (c, &r) in arg.iter().enumerate() {
                    if r != usize::MAX {
                        gx.data[r * xv.cols + c] += g.data[c];
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::MeanRows(x) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows, xv.cols);
                if xv.rows > 0 {
                    let inv = 1.0 / xv.rows as f64;
                    for r in 0..xv.rows {
                        for (o, v) in gx.row_mut(r).iter_mut().zip(&g.data) {
                            *o = v * inv;
                        }
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::NormalizeRows(x, norms) => {
                // d(x/‖x‖) = (g − y·(y·g)) / ‖x‖
                let y = &node.value;
                let mut gx = Tensor::zeros(y.rows, y.cols);
                for r in 0..y.rows {
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, yy), gg) in gx.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = (gg - yy * dot) / norms[r];
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::LogSoftmax(x, per_row) => {
                // dx = g − softmax · Σg
                let y = &node.value;
                let width = if *per_row { y.cols } else { y.data.len() };
                let mut gx = g.clone();
                if width > 0 {
                    for (gc, yc) in gx.data.chunks_mut(width).zip(y.data.chunks(width)) {
                        let s: f64 = gc.iter().sum();
                        for (o, l) in gc.iter_mut().zip(yc) {
                            *o -= l.exp() * s;
                        }
                    }
                }
                accumulate(grads, *x, gx);
            }
            Op::Exp(x) => {
                let mut gx = g.clone();
                for (o, y) in gx.data.iter_mut().zip(&node.value.data) {
                    *o *= y;
                }
                accumulate(grads, *x, gx);
            }
            Op::Pick(x, k) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows, xv.cols);
                gx.data[*k] = g.data[0];
                accumulate(grads, *x, gx);
            }
            Op::DiagSum(x) => {
                let xv = val(*x);
                let mut gx = Tensor::zeros(xv.rows, xv.cols);
                for i in 0..xv.rows.min(xv.cols) {
                    gx.data[i * xv.cols + i] = g.data[0];
                }
                accumulate(grads, *x, gx);
            }
            Op::SqDist(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let mut ga = Tensor::zeros(av.rows, av.cols);
                for ((o, x), y) in ga.data.iter_mut().zip(&av.data).zip(&bv.data) {
                    *o = 2.0 * (x - y) * g.data[0];
                }
                let mut gb = ga.clone();
                for v in &mut gb.data {
                    *v = -*v;
                }
                gb.rows = bv.rows;
                gb.cols = bv.cols;
                accumulate(grads, *a, ga);
                accumulate(grads, *b, gb);
            }
            Op::Sum(x) => {
                let xv = val(*x);
                let gx = Tensor::from_vec(xv.rows, xv.cols, vec![g.data[0]; xv.data.len()]);
                accumulate(grads, *x, gx);
            }
            Op::WeightedSum(terms) => {
                for &(k, w) in terms {
                    accumulate(grads, k, Tensor::scalar(w * g.data[0]));
                }
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    /// Checks the gradient of `f` at every entry of `inputs` by central differences.
    fn check(inputs: Vec<Tensor>, f: impl Fn(&mut Tape, &[NodeId]) -> NodeId) {
        let eval = |vals: &[Tensor]| {
            let mut t = Tape::new();
            let ids: Vec<_> = vals.iter().map(|v| t.leaf(v.clone())).collect();
            let out = f(&mut t, &ids);
            (t.value(out).data[0], t, ids, out)
        };
        let (_, tape, ids, out) = eval(&inputs);
        let grads = tape.backward(out);
        let h = 1e-6;
        for (p, id) in ids.iter().enumerate() {
            let g = grads[*id].clone().unwrap_or(Tensor::zeros(inputs[p].rows, inputs[p].cols));
            for k in 0..inputs[p].data.len() {
                let mut plus = inputs.clone();
                plus[p].data[k] += h;
                let mut minus = inputs.clone();
                minus[p].data[k] -= h;
                let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * h);
                assert!(
                    (fd - g.data[k]).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "input {p} entry {k}: fd {fd} vs {}",
                    g.data[k]
                );
            }
        }
    }

    #[test]
    fn gemm_with_transposes() {
        let a = Tensor::from_vec(2, 3, vec![1., 2., 3., 4., 5., 6.]);
        let b = Tensor::from_vec(2, 3, vec![1., 0., 1., 0., 1., 0.]);
        let mut c = Tensor::zeros(2, 2);
        gemm(&a, false, &b, true, 0.0, &mut c);
        assert_eq!(c.data, vec![4., 2., 10., 5.]);
        let mut d = Tensor::zeros(3, 3);
        gemm(&a, true, &b, false, 0.0, &mut d);
        assert_eq!(d.data, vec![1., 4., 1., 2., 5., 2., 3., 6., 3.]);
    }

    #[test]
    fn mlp_chain_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![
            rand_tensor(&mut rng, 4, 3),
            rand_tensor(&mut rng, 3, 5),
            rand_tensor(&mut rng, 1, 5),
            rand_tensor(&mut rng, 4, 5),
        ];
        check(inputs, |t, x| {
            let h = t.matmul(x[0], x[1]);
            let h = t.add_row(h, x[2]);
            let h = t.relu(h);
            let h = t.add(h, x[3]);
            let c = t.concat_cols(h, x[3]);
            let mx = t.max_rows(c);
            let mn = t.mean_rows(c);
            let both = t.concat_rows(vec![mx, mn]);
            let nrm = t.normalize_rows(both);
            let s = t.matmul_t(nrm, nrm);
            let ls = t.log_softmax(s, true);
            t.diag_sum(ls)
        });
    }

    #[test]
    fn graph_op_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let idx = Rc::new(vec![0, 2, 2, 1, 0]);
        let inputs = vec![rand_tensor(&mut rng, 3, 4), rand_tensor(&mut rng, 5, 1)];
        check(inputs, move |t, x| {
            let g = t.gather(x[0], idx.clone());
            let s = t.scatter_add(g, idx.clone(), 4);
            let ones = t_leaf_ones(t, 4, 1);
            let sc = t.matmul(s, ones);
            let lp = t.log_softmax(sc, false);
            let p = t.exp(lp);
            let lp2 = t.log_softmax(x[1], false);
            let q = t.exp(lp2);
            let q4 = t.gather(q, Rc::new(vec![0, 1, 2, 3]));
            let d = t.sq_dist(p, q4);
            let a = t.pick(lp, 1);
            let tot = t.sum(x[1]);
            t.weighted_sum(vec![(d, 0.5), (a, -1.0), (tot, 0.1)])
        });
    }

    fn t_leaf_ones(t: &mut Tape, r: usize, c: usize) -> NodeId {
        t.leaf(Tensor::from_vec(r, c, vec![1.0; r * c]))
    }

    #[test]
    fn empty_pools_are_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(0, 3));
        let m = t.max_rows(x);
        let a = t.mean_rows(x);
        assert_eq!(t.value(m).data, vec![0.0; 3]);
        assert_eq!(t.value(a).data, vec![0.0; 3]);
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let run = |a: &Tensor, b: &Tensor| {
            let mut t = Tape::new();
            let (x, y) = (t.leaf(a.clone()), t.leaf(b.clone()));
            let z = t.matmul(x, y);
            let s = t.sum(z);
            t.backward(s)[x].clone().unwrap()
        };
        let (a, b) = (rand_tensor(&mut rng, 7, 9), rand_tensor(&mut rng, 9, 4));
        assert_eq!(run(&a, &b), run(&a, &b));
    }
}
