//! A small reverse-mode tape over [`Tensor`] values.
//!
//! A [`Graph`] is built per forward pass and borrows the [`ParamStore`]
//! read-only, so several graphs can run concurrently over one set of
//! parameters. [`Graph::backward`] returns a [`Gradients`] buffer indexed by
//! parameter id; batches sum those buffers in a fixed order.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::tensor::{softmax, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Named parameter tensors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }
}

/// Gradient buffers, one optional tensor per parameter.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    fn accumulate(&mut self, id: ParamId, g: &Tensor, scale: f64) {
        match &mut self.grads[id.0] {
            Some(acc) => acc.add_scaled(g, scale),
            slot @ None => {
                let mut t = g.clone();
                if scale != 1.0 {
                    t.scale(scale);
                }
                *slot = Some(t);
            }
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (i, g) in other.grads.iter().enumerate() {
            if let Some(g) = g {
                self.accumulate(ParamId(i), g, scale);
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.grads.iter_mut().flatten() {
            g.scale(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().flatten().all(Tensor::is_finite)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

enum Op {
    Leaf,
    Param(ParamId),
    /// Rows of a parameter table; gradients scatter back into the table.
    Gather(ParamId, Vec<usize>),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulT(Var, Var),
    Add(Var, Var),
    /// Adds a `1 x c` row to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    SoftmaxRows(Var),
    /// Parameter-free layer normalisation per row; stores `1/sigma` per row.
    LayerNorm(Var, Vec<f64>),
    MeanRows(Var, usize, usize),
    ConcatCols(Var, Var),
    ConcatRows(Vec<Var>),
    /// Scalar with precomputed local gradients for each input.
    Fused(Vec<(Var, Tensor)>),
    WeightedSum(Vec<(Var, f64)>),
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    param_cache: HashMap<ParamId, Var>,
}

const LN_EPS: f64 = 1e-5;

impl<'a> Graph<'a> {
    pub fn new(store: &'a ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_cache: HashMap::new(),
        }
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_cache.get(&id) {
            return v;
        }
        let v = self.push(self.store.get(id).clone(), Op::Param(id));
        self.param_cache.insert(id, v);
        v
    }

    pub fn gather(&mut self, table: ParamId, rows: &[usize]) -> Var {
        let src = self.store.get(table);
        let mut out = Tensor::zeros(rows.len(), src.cols);
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(out, Op::Gather(table, rows.to_vec()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_t(self.value(b));
        self.push(v, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1, "add_row expects a single row");
        let mut v = self.value(a).clone();
        assert_eq!(v.cols, r.cols, "add_row width mismatch");
        for i in 0..v.rows {
            for (x, b) in v.row_mut(i).iter_mut().zip(&r.data) {
                *x += b;
            }
        }
        self.push(v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut v = self.value(a).clone();
        v.scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            v.row_mut(r).copy_from_slice(&softmax(x.row(r)));
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = Tensor::zeros(x.rows, x.cols);
        let mut inv = Vec::with_capacity(x.rows);
        let n = x.cols as f64;
        for r in 0..x.rows {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
            let is = 1.0 / (var + LN_EPS).sqrt();
            for (o, y) in v.row_mut(r).iter_mut().zip(row) {
                *o = (y - mean) * is;
            }
            inv.push(is);
        }
        self.push(v, Op::LayerNorm(a, inv))
    }

    /// Mean of rows `start..end`, as a `1 x c` row.
    pub fn mean_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(start < end && end <= x.rows, "mean_rows range out of bounds");
        let mut v = Tensor::zeros(1, x.cols);
        let k = (end - start) as f64;
        for r in start..end {
            for (o, y) in v.data.iter_mut().zip(x.row(r)) {
                *o += y;
            }
        }
        v.scale(1.0 / k);
        self.push(v, Op::MeanRows(a, start, end))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows, y.rows, "concat_cols row mismatch");
        let mut v = Tensor::zeros(x.rows, x.cols + y.cols);
        for r in 0..x.rows {
            v.row_mut(r)[..x.cols].copy_from_slice(x.row(r));
            v.row_mut(r)[x.cols..].copy_from_slice(y.row(r));
        }
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols, cols, "concat_rows width mismatch");
            data.extend_from_slice(&t.data);
            rows += t.rows;
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// A scalar whose local gradients are supplied by the caller.
    pub fn fused_scalar(&mut self, value: f64, local: Vec<(Var, Tensor)>) -> Var {
        for (v, g) in &local {
            assert_eq!(self.value(*v).shape(), g.shape(), "fused gradient shape");
        }
        self.push(Tensor::scalar(value), Op::Fused(local))
    }

    /// Softmax cross-entropy of a `1 x k` logit row against `target`.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, 1, "cross_entropy expects a single row");
        let p = softmax(&x.data);
        let loss = -p[target].ln();
        let mut g = Tensor::row_vector(p);
        g.data[target] -= 1.0;
        self.fused_scalar(loss, vec![(logits, g)])
    }

    /// Binary cross-entropy on a `1 x 1` logit, computed from the logit for
    /// stability.
    pub fn bce_with_logits(&mut self, logit: Var, target: f64) -> Var {
        let z = self.value(logit).item();
        // max(z,0) - z*y + ln(1 + e^{-|z|})
        let loss = z.max(0.0) - z * target + (-z.abs()).exp().ln_1p();
        let g = crate::tensor::sigmoid(z) - target;
        self.fused_scalar(loss, vec![(logit, Tensor::scalar(g))])
    }

    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Var {
        let mut total = 0.0;
        for &(v, w) in terms {
            total += w * self.value(v).item();
        }
        self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()))
    }

    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let weighted: Vec<(Var, f64)> = terms.iter().map(|&v| (v, 1.0)).collect();
        self.weighted_sum(&weighted)
    }

    /// Reverse pass from a scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        assert_eq!(self.value(root).data.len(), 1, "backward from non-scalar");
        let mut grads = Gradients::zeros_like(self.store);
        let mut adj: Vec<Option<Tensor>> = vec![None; root.0 + 1];
        adj[root.0] = Some(Tensor::scalar(1.0));

        fn acc(adj: &mut [Option<Tensor>], v: Var, g: Tensor) {
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(up) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => grads.accumulate(*id, &up, 1.0),
                Op::Gather(id, rows) => {
                    let table = self.store.get(*id);
                    let mut g = Tensor::zeros(table.rows, table.cols);
                    for (k, &r) in rows.iter().enumerate() {
                        for (o, u) in g.row_mut(r).iter_mut().zip(up.row(k)) {
                            *o += u;
                        }
                    }
                    grads.accumulate(*id, &g, 1.0);
                }
                Op::MatMul(a, b) => {
                    let ga = up.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&up);
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    // c = a b^T: da = up b, db = up^T a
                    let ga = up.matmul(self.value(*b));
                    let gb = up.t_matmul(self.value(*a));
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, up.clone());
                    acc(&mut adj, *b, up);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Tensor::zeros(1, up.cols);
                    for r in 0..up.rows {
                        for (o, u) in gr.data.iter_mut().zip(up.row(r)) {
                            *o += u;
                        }
                    }
                    acc(&mut adj, *row, gr);
                    acc(&mut adj, *a, up);
                }
                Op::Scale(a, s) => {
                    let mut g = up;
                    g.scale(*s);
                    acc(&mut adj, *a, g);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let mut g = up;
                    for (gv, yv) in g.data.iter_mut().zip(&y.data) {
                        *gv *= 1.0 - yv * yv;
                    }
                    acc(&mut adj, *a, g);
                }
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let mut g = up;
                    for (gv, xv) in g.data.iter_mut().zip(&x.data) {
                        if *xv <= 0.0 {
                            *gv = 0.0;
                        }
                    }
                    acc(&mut adj, *a, g);
                }
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut g = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let ur = up.row(r);
                        let dot: f64 = yr.iter().zip(ur).map(|(p, u)| p * u).sum();
                        for (c, o) in g.row_mut(r).iter_mut().enumerate() {
                            *o = yr[c] * (ur[c] - dot);
                        }
                    }
                    acc(&mut adj, *a, g);
                }
                Op::LayerNorm(a, inv) => {
                    let y = &node.value;
                    let n = y.cols as f64;
                    let mut g = Tensor::zeros(y.rows, y.cols);
                    for r in 0..y.rows {
                        let yr = y.row(r);
                        let ur = up.row(r);
                        let mean_u = ur.iter().sum::<f64>() / n;
                        let mean_uy = ur.iter().zip(yr).map(|(u, y)| u * y).sum::<f64>() / n;
                        for (c, o) in g.row_mut(r).iter_mut().enumerate() {
                            *o = inv[r] * (ur[c] - mean_u - yr[c] * mean_uy);
                        }
                    }
                    acc(&mut adj, *a, g);
                }
                Op::MeanRows(a, start, end) => {
                    let x = self.value(*a);
                    let k = (end - start) as f64;
                    let mut g = Tensor::zeros(x.rows, x.cols);
                    for r in *start..*end {
                        for (o, u) in g.row_mut(r).iter_mut().zip(&up.data) {
                            *o = u / k;
                        }
                    }
                    acc(&mut adj, *a, g);
                }
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols;
                    let cb = self.value(*b).cols;
                    let mut ga = Tensor::zeros(up.rows, ca);
                    let mut gb = Tensor::zeros(up.rows, cb);
                    for r in 0..up.rows {
                        ga.row_mut(r).copy_from_slice(&up.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&up.row(r)[ca..]);
                    }
                    acc(&mut adj, *a, ga);
                    acc(&mut adj, *b, gb);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.value(p).rows;
                        let cols = up.cols;
                        let slice = up.data[offset * cols..(offset + rows) * cols].to_vec();
                        acc(&mut adj, p, Tensor::from_vec(rows, cols, slice));
                        offset += rows;
                    }
                }
                Op::Fused(local) => {
                    let u = up.item();
                    for (v, g) in local {
                        let mut g = g.clone();
                        g.scale(u);
                        acc(&mut adj, *v, g);
                    }
                }
                Op::WeightedSum(terms) => {
                    let u = up.item();
                    for &(v, w) in terms {
                        acc(&mut adj, v, Tensor::scalar(u * w));
                    }
                }
            }
        }
        grads
    }
}
