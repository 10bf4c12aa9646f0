//! Reverse-mode automatic differentiation on a flat tape.
//!
//! Forward values are computed eagerly as ops are recorded; `backward` walks
//! the tape in reverse and accumulates gradients. The op set is exactly what
//! the models and losses in this crate need: matmul (with transposes), row and
//! column broadcasts, pointwise nonlinearities, rowwise softmax family, table
//! lookups, and a handful of reductions.
//!
//! Leaves created with [`Graph::param`] are differentiated; leaves created
//! with [`Graph::constant`] are not (noise injections, masks, reference model
//! outputs).

use alloc::vec;
use alloc::vec::Vec;


// Required for the no_std build; std builds resolve these methods inherently.
#[allow(unused_imports)]
use num_traits::Float;

use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position on the tape; indexes the vector returned by [`Graph::backward`].
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Const,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    MatMul { a: NodeId, b: NodeId, ta: bool, tb: bool },
    /// `[m,n] + [1,n]`
    AddRow(NodeId, NodeId),
    /// `[m,n] * [1,n]`
    MulRow(NodeId, NodeId),
    /// `[m,n] - [m,1]`
    SubCol(NodeId, NodeId),
    /// `[m,n] * [m,1]`
    MulCol(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Tanh(NodeId),
    Softplus(NodeId),
    /// `1 / sqrt(x + eps)` elementwise.
    RsqrtEps(NodeId, f64),
    /// `[m,n] -> [m,1]`
    RowMean(NodeId),
    Softmax(NodeId),
    LogSoftmax(NodeId),
    /// Row gather: `out[i,:] = table[ids[i],:]`.
    Embed { table: NodeId, ids: Vec<usize> },
    /// Flat-index gather: `out.data[i] = x.data[idx[i]]` (im2col, shifts).
    Gather { x: NodeId, idx: Vec<usize> },
    /// Same data, new shape.
    Reshape(NodeId),
    /// Column pick: `out[i,0] = x[i, ids[i]]`.
    PickCol { x: NodeId, ids: Vec<usize> },
    Sum(NodeId),
    Mean(NodeId),
    /// `sum_iv p0[i,v] * (logp0[i,v] - logp[i,v])` with `p0`, `logp0` fixed.
    KlConst { logp: NodeId, p0: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A single-use tape. Build the forward pass, call [`Graph::backward`], read
/// gradients off the leaves.
pub struct Graph {
    nodes: Vec<Node>,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node { value, op, requires_grad });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Param, true)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Const, false)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        let rg = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        let rg = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        let rg = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), rg)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        self.matmul_t(a, b, false, false)
    }

    pub fn matmul_t(&mut self, a: NodeId, b: NodeId, ta: bool, tb: bool) -> NodeId {
        let v = self.value(a).matmul(self.value(b), ta, tb);
        let rg = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul { a, b, ta, tb }, rg)
    }

    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        debug_assert_eq!(self.value(row).shape(), (1, n));
        let mut v = self.value(a).clone();
        for i in 0..m {
            for j in 0..n {
                let x = v.at(i, j) + self.value(row).at(0, j);
                v.set(i, j, x);
            }
        }
        let rg = self.needs(a) || self.needs(row);
        self.push(v, Op::AddRow(a, row), rg)
    }

    pub fn mul_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        debug_assert_eq!(self.value(row).shape(), (1, n));
        let mut v = self.value(a).clone();
        for i in 0..m {
            for j in 0..n {
                let x = v.at(i, j) * self.value(row).at(0, j);
                v.set(i, j, x);
            }
        }
        let rg = self.needs(a) || self.needs(row);
        self.push(v, Op::MulRow(a, row), rg)
    }

    pub fn sub_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        debug_assert_eq!(self.value(col).shape(), (m, 1));
        let mut v = self.value(a).clone();
        for i in 0..m {
            let c = self.value(col).at(i, 0);
            for j in 0..n {
                let x = v.at(i, j) - c;
                v.set(i, j, x);
            }
        }
        let rg = self.needs(a) || self.needs(col);
        self.push(v, Op::SubCol(a, col), rg)
    }

    pub fn mul_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        debug_assert_eq!(self.value(col).shape(), (m, 1));
        let mut v = self.value(a).clone();
        for i in 0..m {
            let c = self.value(col).at(i, 0);
            for j in 0..n {
                let x = v.at(i, j) * c;
                v.set(i, j, x);
            }
        }
        let rg = self.needs(a) || self.needs(col);
        self.push(v, Op::MulCol(a, col), rg)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a).map(|x| x * k);
        let rg = self.needs(a);
        self.push(v, Op::Scale(a, k), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, k: f64) -> NodeId {
        let v = self.value(a).map(|x| x + k);
        let rg = self.needs(a);
        self.push(v, Op::AddScalar(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        let rg = self.needs(a);
        self.push(v, Op::Relu(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.tanh());
        let rg = self.needs(a);
        self.push(v, Op::Tanh(a), rg)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| x.max(0.0) + (-x.abs()).exp().ln_1p());
        let rg = self.needs(a);
        self.push(v, Op::Softplus(a), rg)
    }

    pub fn rsqrt_eps(&mut self, a: NodeId, eps: f64) -> NodeId {
        let v = self.value(a).map(|x| 1.0 / (x + eps).sqrt());
        let rg = self.needs(a);
        self.push(v, Op::RsqrtEps(a, eps), rg)
    }

    pub fn row_mean(&mut self, a: NodeId) -> NodeId {
        let (m, n) = self.value(a).shape();
        let mut v = Tensor::zeros(m, 1);
        for i in 0..m {
            let s: f64 = self.value(a).row(i).iter().sum();
            v.set(i, 0, s / n as f64);
        }
        let rg = self.needs(a);
        self.push(v, Op::RowMean(a), rg)
    }

    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = rowwise_softmax(self.value(a), false);
        let rg = self.needs(a);
        self.push(v, Op::Softmax(a), rg)
    }

    pub fn log_softmax(&mut self, a: NodeId) -> NodeId {
        let v = rowwise_softmax(self.value(a), true);
        let rg = self.needs(a);
        self.push(v, Op::LogSoftmax(a), rg)
    }

    pub fn embed(&mut self, table: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(table);
        let n = t.cols();
        let mut v = Tensor::zeros(ids.len(), n);
        for (i, &id) in ids.iter().enumerate() {
            for j in 0..n {
                v.set(i, j, t.at(id, j));
            }
        }
        let rg = self.needs(table);
        self.push(v, Op::Embed { table, ids: ids.to_vec() }, rg)
    }

    pub fn gather(&mut self, x: NodeId, idx: &[usize], rows: usize, cols: usize) -> NodeId {
        debug_assert_eq!(idx.len(), rows * cols);
        let src = self.value(x);
        let data: Vec<f64> = idx.iter().map(|&i| src.data()[i]).collect();
        let rg = self.needs(x);
        self.push(Tensor::from_vec(rows, cols, data), Op::Gather { x, idx: idx.to_vec() }, rg)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let v = self.value(a);
        debug_assert_eq!(v.len(), rows * cols);
        let t = Tensor::from_vec(rows, cols, v.data().to_vec());
        let rg = self.needs(a);
        self.push(t, Op::Reshape(a), rg)
    }

    pub fn pick_col(&mut self, x: NodeId, ids: &[usize]) -> NodeId {
        let t = self.value(x);
        let mut v = Tensor::zeros(ids.len(), 1);
        debug_assert_eq!(t.rows(), ids.len());
        for (i, &id) in ids.iter().enumerate() {
            v.set(i, 0, t.at(i, id));
        }
        let rg = self.needs(x);
        self.push(v, Op::PickCol { x, ids: ids.to_vec() }, rg)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.needs(a);
        self.push(v, Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let n = self.value(a).len() as f64;
        let v = Tensor::scalar(self.value(a).data().iter().sum::<f64>() / n);
        let rg = self.needs(a);
        self.push(v, Op::Mean(a), rg)
    }

    /// KL(p0 || p) summed over all rows, where `p0` is a fixed reference
    /// distribution per row and `logp` are this graph's log-probabilities.
    pub fn kl_from_const(&mut self, logp: NodeId, p0: Tensor, logp0: Tensor) -> NodeId {
        debug_assert_eq!(self.value(logp).shape(), p0.shape());
        let lp = self.value(logp);
        let mut total = 0.0;
        for i in 0..p0.len() {
            let p = p0.data()[i];
            if p > 0.0 {
                total += p * (logp0.data()[i] - lp.data()[i]);
            }
        }
        let rg = self.needs(logp);
        self.push(Tensor::scalar(total), Op::KlConst { logp, p0 }, rg)
    }

    /// Gradients of a scalar `loss` node with respect to every node that
    /// requires one. Indexed by `NodeId`.
    pub fn backward(&self, loss: NodeId) -> Vec<Option<Tensor>> {
        debug_assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let g = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            if !self.nodes[idx].requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            self.accumulate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        grads
    }

    fn accumulate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let add_to = |grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor| {
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&delta),
                slot @ None => *slot = Some(delta),
            }
        };
        match &self.nodes[idx].op {
            Op::Param | Op::Const => {}
            Op::Add(a, b) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    add_to(grads, *b, g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.clone());
                }
                if self.needs(*b) {
                    add_to(grads, *b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.zip(self.value(*b), |gi, bi| gi * bi));
                }
                if self.needs(*b) {
                    add_to(grads, *b, g.zip(self.value(*a), |gi, ai| gi * ai));
                }
            }
            Op::MatMul { a, b, ta, tb } => {
                let (ta, tb) = (*ta, *tb);
                let av = self.value(*a);
                let bv = self.value(*b);
                if self.needs(*a) {
                    // dA' = g @ B'^T, transposed back if needed.
                    let da = if !ta {
                        if !tb { g.matmul(bv, false, true) } else { g.matmul(bv, false, false) }
                    } else if !tb {
                        bv.matmul(g, false, true)
                    } else {
                        bv.matmul(g, true, true)
                    };
                    add_to(grads, *a, da);
                }
                if self.needs(*b) {
                    // dB' = A'^T @ g, transposed back if needed.
                    let db = if !tb {
                        if !ta { av.matmul(g, true, false) } else { av.matmul(g, false, false) }
                    } else if !ta {
                        g.matmul(av, true, false)
                    } else {
                        g.matmul(av, true, true)
                    };
                    add_to(grads, *b, db);
                }
            }
            Op::AddRow(a, row) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.clone());
                }
                if self.needs(*row) {
                    add_to(grads, *row, col_sums(g));
                }
            }
            Op::MulRow(a, row) => {
                let (m, n) = g.shape();
                if self.needs(*a) {
                    let rv = self.value(*row);
                    let mut da = g.clone();
                    for i in 0..m {
                        for j in 0..n {
                            let x = da.at(i, j) * rv.at(0, j);
                            da.set(i, j, x);
                        }
                    }
                    add_to(grads, *a, da);
                }
                if self.needs(*row) {
                    let av = self.value(*a);
                    let mut dr = Tensor::zeros(1, n);
                    for i in 0..m {
                        for j in 0..n {
                            let x = dr.at(0, j) + g.at(i, j) * av.at(i, j);
                            dr.set(0, j, x);
                        }
                    }
                    add_to(grads, *row, dr);
                }
            }
            Op::SubCol(a, col) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.clone());
                }
                if self.needs(*col) {
                    add_to(grads, *col, row_sums(g).map(|x| -x));
                }
            }
            Op::MulCol(a, col) => {
                let (m, n) = g.shape();
                if self.needs(*a) {
                    let cv = self.value(*col);
                    let mut da = g.clone();
                    for i in 0..m {
                        let c = cv.at(i, 0);
                        for j in 0..n {
                            let x = da.at(i, j) * c;
                            da.set(i, j, x);
                        }
                    }
                    add_to(grads, *a, da);
                }
                if self.needs(*col) {
                    let av = self.value(*a);
                    let mut dc = Tensor::zeros(m, 1);
                    for i in 0..m {
                        let mut s = 0.0;
                        for j in 0..n {
                            s += g.at(i, j) * av.at(i, j);
                        }
                        dc.set(i, 0, s);
                    }
                    add_to(grads, *col, dc);
                }
            }
            Op::Scale(a, k) => {
                if self.needs(*a) {
                    let k = *k;
                    add_to(grads, *a, g.map(|x| x * k));
                }
            }
            Op::AddScalar(a) => {
                if self.needs(*a) {
                    add_to(grads, *a, g.clone());
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let da = g.zip(self.value(*a), |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    add_to(grads, *a, da);
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let out = &self.nodes[idx].value;
                    add_to(grads, *a, g.zip(out, |gi, yi| gi * (1.0 - yi * yi)));
                }
            }
            Op::Softplus(a) => {
                if self.needs(*a) {
                    let da = g.zip(self.value(*a), |gi, xi| gi / (1.0 + (-xi).exp()));
                    add_to(grads, *a, da);
                }
            }
            Op::RsqrtEps(a, eps) => {
                if self.needs(*a) {
                    let eps = *eps;
                    let da = g.zip(self.value(*a), |gi, xi| {
                        let r = 1.0 / (xi + eps).sqrt();
                        gi * (-0.5 * r * r * r)
                    });
                    add_to(grads, *a, da);
                }
            }
            Op::RowMean(a) => {
                if self.needs(*a) {
                    let (m, n) = self.value(*a).shape();
                    let mut da = Tensor::zeros(m, n);
                    for i in 0..m {
                        let gi = g.at(i, 0) / n as f64;
                        for j in 0..n {
                            da.set(i, j, gi);
                        }
                    }
                    add_to(grads, *a, da);
                }
            }
            Op::Softmax(a) => {
                if self.needs(*a) {
                    let s = &self.nodes[idx].value;
                    let (m, n) = s.shape();
                    let mut da = Tensor::zeros(m, n);
                    for i in 0..m {
                        let dot: f64 = (0..n).map(|j| g.at(i, j) * s.at(i, j)).sum();
                        for j in 0..n {
                            da.set(i, j, s.at(i, j) * (g.at(i, j) - dot));
                        }
                    }
                    add_to(grads, *a, da);
                }
            }
            Op::LogSoftmax(a) => {
                if self.needs(*a) {
                    let lp = &self.nodes[idx].value;
                    let (m, n) = lp.shape();
                    let mut da = Tensor::zeros(m, n);
                    for i in 0..m {
                        let gsum: f64 = (0..n).map(|j| g.at(i, j)).sum();
                        for j in 0..n {
                            da.set(i, j, g.at(i, j) - lp.at(i, j).exp() * gsum);
                        }
                    }
                    add_to(grads, *a, da);
                }
            }
            Op::Embed { table, ids } => {
                if self.needs(*table) {
                    let (v, n) = self.value(*table).shape();
                    let mut dt = Tensor::zeros(v, n);
                    for (i, &id) in ids.iter().enumerate() {
                        for j in 0..n {
                            let x = dt.at(id, j) + g.at(i, j);
                            dt.set(id, j, x);
                        }
                    }
                    add_to(grads, *table, dt);
                }
            }
            Op::Gather { x, idx } => {
                if self.needs(*x) {
                    let (m, n) = self.value(*x).shape();
                    let mut dx = Tensor::zeros(m, n);
                    for (i, &src) in idx.iter().enumerate() {
                        dx.data_mut()[src] += g.data()[i];
                    }
                    add_to(grads, *x, dx);
                }
            }
            Op::Reshape(a) => {
                if self.needs(*a) {
                    let (m, n) = self.value(*a).shape();
                    add_to(grads, *a, Tensor::from_vec(m, n, g.data().to_vec()));
                }
            }
            Op::PickCol { x, ids } => {
                if self.needs(*x) {
                    let (m, n) = self.value(*x).shape();
                    let mut dx = Tensor::zeros(m, n);
                    for (i, &id) in ids.iter().enumerate() {
                        dx.set(i, id, g.at(i, 0));
                    }
                    add_to(grads, *x, dx);
                }
            }
            Op::Sum(a) => {
                if self.needs(*a) {
                    let gi = g.item();
                    let (m, n) = self.value(*a).shape();
                    add_to(grads, *a, Tensor::from_vec(m, n, vec![gi; m * n]));
                }
            }
            Op::Mean(a) => {
                if self.needs(*a) {
                    let (m, n) = self.value(*a).shape();
                    let gi = g.item() / (m * n) as f64;
                    add_to(grads, *a, Tensor::from_vec(m, n, vec![gi; m * n]));
                }
            }
            Op::KlConst { logp, p0, .. } => {
                if self.needs(*logp) {
                    let gi = g.item();
                    add_to(grads, *logp, p0.map(|p| -p * gi));
                }
            }
        }
    }
}

fn rowwise_softmax(x: &Tensor, log: bool) -> Tensor {
    let (m, n) = x.shape();
    let mut out = Tensor::zeros(m, n);
    for i in 0..m {
        let row = x.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for &v in row {
            z += (v - max).exp();
        }
        let lz = z.ln() + max;
        for j in 0..n {
            let v = if log { row[j] - lz } else { (row[j] - lz).exp() };
            out.set(i, j, v);
        }
    }
    out
}

fn col_sums(g: &Tensor) -> Tensor {
    let (m, n) = g.shape();
    let mut out = Tensor::zeros(1, n);
    for i in 0..m {
        for j in 0..n {
            let x = out.at(0, j) + g.at(i, j);
            out.set(0, j, x);
        }
    }
    out
}

fn row_sums(g: &Tensor) -> Tensor {
    let (m, n) = g.shape();
    let mut out = Tensor::zeros(m, 1);
    for i in 0..m {
        let s: f64 = (0..n).map(|j| g.at(i, j)).sum();
        out.set(i, 0, s);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    /// Finite-difference check of `f`'s gradient with respect to its single
    /// parameter leaf.
    fn check(dim: (usize, usize), init: &[f64], f: impl Fn(&mut Graph, NodeId) -> NodeId) {
        let x0 = Tensor::from_vec(dim.0, dim.1, init.to_vec());
        let eval = |data: &[f64]| {
            let mut g = Graph::new();
            let x = g.param(Tensor::from_vec(dim.0, dim.1, data.to_vec()));
            let loss = f(&mut g, x);
            g.value(loss).item()
        };
        let mut g = Graph::new();
        let x = g.param(x0.clone());
        let loss = f(&mut g, x);
        let grads = g.backward(loss);
        let analytic = grads[0].as_ref().expect("param grad");

        let eps = 1e-6;
        for i in 0..init.len() {
            let mut plus: Vec<f64> = init.to_vec();
            plus[i] += eps;
            let mut minus: Vec<f64> = init.to_vec();
            minus[i] -= eps;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * eps);
            let a = analytic.data()[i];
            let denom = a.abs().max(numeric.abs()).max(1.0);
            assert!(
                (a - numeric).abs() / denom < 1e-6,
                "coord {i}: analytic {a} vs numeric {numeric}"
            );
        }
    }

    #[test]
    fn grad_matmul_chain() {
        let w = [0.3, -0.2, 0.5, 0.1, 0.7, -0.4];
        check((2, 3), &w, |g, x| {
            let c = g.constant(Tensor::from_vec(3, 2, alloc::vec![1.0, 2.0, -1.0, 0.5, 0.3, -0.7]));
            let y = g.matmul(x, c);
            let t = g.tanh(y);
            g.sum(t)
        });
        check((2, 3), &w, |g, x| {
            let c = g.constant(Tensor::from_vec(2, 4, alloc::vec![0.2; 8]));
            let y = g.matmul_t(x, c, true, false);
            g.mean(y)
        });
        check((2, 3), &w, |g, x| {
            let c = g.constant(Tensor::from_vec(4, 3, alloc::vec![0.1, -0.3, 0.2, 0.4, 0.0, 0.6, -0.2, 0.5, 0.3, 0.7, -0.1, 0.2]));
            let y = g.matmul_t(x, c, false, true);
            let r = g.relu(y);
            g.sum(r)
        });
    }

    #[test]
    fn grad_softmax_family() {
        let w = [0.5, -1.0, 2.0, 0.3, 0.0, -0.5];
        check((2, 3), &w, |g, x| {
            let s = g.softmax(x);
            let c = g.constant(Tensor::from_vec(2, 3, alloc::vec![0.2, 0.5, 0.3, 0.1, 0.1, 0.8]));
            let m = g.mul(s, c);
            g.sum(m)
        });
        check((2, 3), &w, |g, x| {
            let lp = g.log_softmax(x);
            g.pick_and_sum(lp)
        });
    }

    impl Graph {
        fn pick_and_sum(&mut self, lp: NodeId) -> NodeId {
            let picked = self.pick_col(lp, &[2, 0]);
            self.sum(picked)
        }
    }

    #[test]
    fn grad_broadcast_and_norm_ops() {
        let w = [0.5, -1.0, 2.0, 0.3, 0.0, -0.5];
        check((2, 3), &w, |g, x| {
            let r = g.constant(Tensor::from_vec(1, 3, alloc::vec![0.4, -0.2, 1.0]));
            let y = g.add_row(x, r);
            let z = g.mul_row(y, r);
            g.sum(z)
        });
        check((2, 3), &w, |g, x| {
            let mu = g.row_mean(x);
            let xc = g.sub_col(x, mu);
            let sq = g.mul(xc, xc);
            let var = g.row_mean(sq);
            let r = g.rsqrt_eps(var, 1e-5);
            let y = g.mul_col(xc, r);
            g.sum(y)
        });
        check((1, 4), &[0.5, -2.0, 0.1, 3.0], |g, x| {
            let sp = g.softplus(x);
            let s = g.scale(sp, 0.7);
            let t = g.add_scalar(s, 1.3);
            g.mean(t)
        });
    }

    #[test]
    fn grad_gather_and_reshape() {
        let w = [0.4, -0.6, 1.2, 0.0, 0.7, -0.3];
        check((2, 3), &w, |g, x| {
            // duplicate-index gather exercises scatter-add accumulation
            let gathered = g.gather(x, &[5, 0, 0, 2], 2, 2);
            let r = g.reshape(gathered, 1, 4);
            let t = g.tanh(r);
            g.sum(t)
        });
    }

    #[test]
    fn grad_embed_and_kl() {
        let w = [0.1, 0.2, 0.3, -0.1, -0.2, -0.3, 0.5, 0.0, 0.4];
        check((3, 3), &w, |g, x| {
            let e = g.embed(x, &[2, 0, 1, 2]);
            let t = g.tanh(e);
            g.sum(t)
        });
        check((2, 3), &w[..6], |g, x| {
            let lp = g.log_softmax(x);
            let p0 = Tensor::from_vec(2, 3, alloc::vec![0.2, 0.3, 0.5, 0.6, 0.1, 0.3]);
            let logp0 = p0.map(|p: f64| p.ln());
            g.kl_from_const(lp, p0, logp0)
        });
    }

    #[test]
    fn mul_same_node_accumulates_both_sides() {
        let mut g = Graph::new();
        let x = g.param(Tensor::from_vec(1, 2, alloc::vec![3.0, -2.0]));
        let sq = g.mul(x, x);
        let loss = g.sum(sq);
        let grads = g.backward(loss);
        // d/dx sum(x*x) = 2x
        assert_eq!(grads[0].as_ref().unwrap().data(), &[6.0, -4.0]);
    }

    #[test]
    fn kl_of_identical_distributions_is_exactly_zero() {
        let mut g = Graph::new();
        let logits = Tensor::from_vec(1, 4, alloc::vec![0.3, -1.2, 0.8, 0.0]);
        let x = g.param(logits.clone());
        let lp = g.log_softmax(x);
        let lp0 = rowwise_softmax(&logits, true);
        let p0 = lp0.map(|l: f64| l.exp());
        let kl = g.kl_from_const(lp, p0, lp0);
        assert_eq!(g.value(kl).item(), 0.0);
    }
}
