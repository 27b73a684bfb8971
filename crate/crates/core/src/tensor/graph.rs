use std::collections::HashMap;

use super::gemm::{gemm, Operand};
use super::{ParamId, ParamStore, Precision, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

/// Train mode enables dropout; eval mode makes it the identity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug)]
pub(crate) enum Op {
    Input,
    Param(ParamId),
    MatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
        groups: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    AddBias {
        x: Var,
        bias: Var,
    },
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Reshape(Var),
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Concat {
        parts: Vec<Var>,
    },
    Conv1d {
        x: Var,
        kernel: Var,
        bias: Var,
        cols: Vec<f64>,
        width: usize,
        mask: Vec<f64>,
    },
    MaxPoolTime {
        x: Var,
        argmax: Vec<usize>,
    },
    MaskedSoftmax {
        x: Var,
    },
    WeightedSum {
        weights: Var,
        x: Var,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    SelectTime {
        x: Var,
        index: Vec<usize>,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Dropout {
        x: Var,
        keep_scale: Vec<f64>,
    },
    GradReverse(Var),
    CrossEntropy {
        probs: Var,
        gold: Vec<usize>,
    },
    Sum(Var),
    Sru(Box<SruSaved>),
}

#[derive(Debug)]
pub(crate) struct SruSaved {
    pub u: Var,
    pub highway: Var,
    pub v_f: Var,
    pub v_r: Var,
    pub b_f: Var,
    pub b_r: Var,
    pub reverse: bool,
    pub mask: Vec<f64>,
    /// `c_{t-1}`, `f_t`, `r_t`, `c_t` per (batch, time), each `[B×T×d]`.
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
}

pub(crate) struct Node {
    pub value: Tensor,
    pub op: Op,
    pub requires_grad: bool,
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Input | Op::Param(_) => vec![],
            Op::MatMul { a, b, .. } | Op::BatchMatMul { a, b, .. } | Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::AddBias { x, bias } => vec![*x, *bias],
            Op::Scale(x, _)
            | Op::Tanh(x)
            | Op::Sigmoid(x)
            | Op::Relu(x)
            | Op::Reshape(x)
            | Op::GradReverse(x)
            | Op::Sum(x)
            | Op::Permute { x, .. }
            | Op::MaxPoolTime { x, .. }
            | Op::MaskedSoftmax { x }
            | Op::SelectTime { x, .. }
            | Op::Dropout { x, .. } => vec![*x],
            Op::Concat { parts } => parts.clone(),
            Op::Conv1d { x, kernel, bias, .. } => vec![*x, *kernel, *bias],
            Op::WeightedSum { weights, x } => vec![*weights, *x],
            Op::Gather { table, .. } => vec![*table],
            Op::LayerNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::CrossEntropy { probs, .. } => vec![*probs],
            Op::Sru(s) => vec![s.u, s.highway, s.v_f, s.v_r, s.b_f, s.b_r],
        }
    }
}

/// A single-threaded tape. Nodes refer only to earlier nodes, so index order
/// is a topological order of the DAG.
pub struct Graph {
    pub(crate) nodes: Vec<Node>,
    precision: Precision,
    param_nodes: HashMap<ParamId, Var>,
}

/// Gradients of a scalar root with respect to every node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

impl Graph {
    pub fn new(precision: Precision) -> Self {
        Graph {
            nodes: Vec::new(),
            precision,
            param_nodes: HashMap::new(),
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub(crate) fn push(&mut self, mut value: Tensor, op: Op, name: &str) -> Result<Var> {
        value.round_to(self.precision);
        if !value.all_finite() {
            return Err(Error::NonFinite(name.to_string()));
        }
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        let v = self.push(value, Op::Input, "input")?;
        self.nodes[v.0].requires_grad = requires_grad;
        Ok(v)
    }

    /// Differentiable leaf that is not a parameter; its gradient is
    /// available from [`Graph::gradients`].
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// Leaf that never receives a gradient (masks, fixed features).
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf bound to a parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let mut value = store.value(id).clone();
        value.round_to(self.precision);
        self.nodes.push(Node {
            value,
            op: Op::Param(id),
            requires_grad: store.get(id).trainable,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    /// Reverse sweep from a scalar root. Returns the gradient of every node.
    pub fn gradients(&self, root: Var) -> Result<Gradients> {
        let root_value = &self.nodes[root.0].value;
        if root_value.len() != 1 {
            return Err(Error::NonScalarRoot(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor::full(root_value.shape(), 1.0));
        for i in (0..=root.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Accumulates d(root)/d(param) into every reachable trainable parameter.
    /// Repeated calls add to the existing accumulators.
    pub fn backward(&self, root: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(root)?;
        for (i, node) in self.nodes.iter().enumerate() {
            let Op::Param(id) = node.op else { continue };
            if let Some(g) = grads.get(Var(i)) {
                let p = store.get_mut(id);
                if p.trainable {
                    if !g.all_finite() {
                        return Err(Error::NonFinite(format!("gradient of {}", p.name)));
                    }
                    p.grad.add_assign(g);
                }
            }
        }
        Ok(())
    }

    fn backward_node(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let prec = self.precision;
        let val = |v: Var| &self.nodes[v.0].value;
        match &self.nodes[i].op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul { a, b, trans_b } => {
                let av = val(*a);
                let bv = val(*b);
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = g.shape()[1];
                if self.requires_grad(*a) {
                    let mut da = vec![0.0; m * k];
                    let bo = if *trans_b {
                        // y = a·bᵀ with b: n×k
                        Operand::plain(bv.data())
                    } else {
                        Operand::t(bv.data())
                    };
                    gemm(prec, m, n, k, Operand::plain(g.data()), bo, 0.0, &mut da);
                    accumulate(grads, *a, av.shape(), da);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![0.0; k * n];
                    if *trans_b {
                        gemm(prec, n, m, k, Operand::t(g.data()), Operand::plain(av.data()), 0.0, &mut db);
                    } else {
                        gemm(prec, k, m, n, Operand::t(av.data()), Operand::plain(g.data()), 0.0, &mut db);
                    }
                    accumulate(grads, *b, bv.shape(), db);
                }
            }
            Op::BatchMatMul {
                a,
                b,
                trans_b,
                groups,
            } => {
                let av = val(*a);
                let bv = val(*b);
                let gs = *groups;
                let m = av.shape()[1];
                let k = av.shape()[2];
                let n = g.shape()[2];
                let mut da = vec![0.0; av.len()];
                let mut db = vec![0.0; bv.len()];
                for q in 0..gs {
                    let ga = &g.data()[q * m * n..(q + 1) * m * n];
                    let asl = &av.data()[q * m * k..(q + 1) * m * k];
                    let bsl = &bv.data()[q * k * n..(q + 1) * k * n];
                    let da_s = &mut da[q * m * k..(q + 1) * m * k];
                    let db_s = &mut db[q * k * n..(q + 1) * k * n];
                    if *trans_b {
                        gemm(prec, m, n, k, Operand::plain(ga), Operand::plain(bsl), 0.0, da_s);
                        gemm(prec, n, m, k, Operand::t(ga), Operand::plain(asl), 0.0, db_s);
                    } else {
                        gemm(prec, m, n, k, Operand::plain(ga), Operand::t(bsl), 0.0, da_s);
                        gemm(prec, k, m, n, Operand::t(asl), Operand::plain(ga), 0.0, db_s);
                    }
                }
                accumulate(grads, *a, av.shape(), da);
                accumulate(grads, *b, bv.shape(), db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, g.shape(), g.data().to_vec());
                accumulate(grads, *b, g.shape(), g.data().to_vec());
            }
            Op::Mul(a, b) => {
                let av = val(*a);
                let bv = val(*b);
                let da = g.data().iter().zip(bv.data()).map(|(g, b)| g * b).collect();
                let db = g.data().iter().zip(av.data()).map(|(g, a)| g * a).collect();
                accumulate(grads, *a, av.shape(), da);
                accumulate(grads, *b, bv.shape(), db);
            }
            Op::AddBias { x, bias } => {
                let n = val(*bias).len();
                let mut db = vec![0.0; n];
                for row in g.data().chunks(n) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                accumulate(grads, *x, g.shape(), g.data().to_vec());
                accumulate(grads, *bias, val(*bias).shape(), db);
            }
            Op::Scale(x, s) => {
                let dx = g.data().iter().map(|v| v * s).collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::Tanh(x) => {
                let y = &self.nodes[i].value;
                let dx = g.data().iter().zip(y.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::Sigmoid(x) => {
                let y = &self.nodes[i].value;
                let dx = g.data().iter().zip(y.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::Relu(x) => {
                let xv = val(*x);
                let dx = g
                    .data()
                    .iter()
                    .zip(xv.data())
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::Reshape(x) => {
                accumulate(grads, *x, val(*x).shape(), g.data().to_vec());
            }
            Op::Permute { x, axes } => {
                let mut inverse = vec![0; axes.len()];
                for (i, &a) in axes.iter().enumerate() {
                    inverse[a] = i;
                }
                let dx = permute_data(g, &inverse);
                accumulate(grads, *x, val(*x).shape(), dx.into_data());
            }
            Op::Concat { parts } => {
                let total = g.last_dim();
                let rows = g.len() / total.max(1);
                let mut offset = 0;
                for p in parts {
                    let pv = val(*p);
                    let w = pv.last_dim();
                    let mut dp = Vec::with_capacity(pv.len());
                    for r in 0..rows {
                        dp.extend_from_slice(&g.data()[r * total + offset..r * total + offset + w]);
                    }
                    accumulate(grads, *p, pv.shape(), dp);
                    offset += w;
                }
            }
            Op::Conv1d {
                x,
                kernel,
                bias,
                cols,
                width,
                mask,
            } => {
                let xv = val(*x);
                let kv = val(*kernel);
                let (b, t, d_in) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let d_out = kv.shape()[2];
                let h = *width;
                let rows = b * t;
                let kdim = h * d_in;
                let mut dk = vec![0.0; kdim * d_out];
                gemm(prec, kdim, rows, d_out, Operand::t(cols), Operand::plain(g.data()), 0.0, &mut dk);
                let mut db = vec![0.0; d_out];
                for row in g.data().chunks(d_out) {
                    for (d, v) in db.iter_mut().zip(row) {
                        *d += v;
                    }
                }
                accumulate(grads, *kernel, kv.shape(), dk);
                accumulate(grads, *bias, val(*bias).shape(), db);
                if !self.requires_grad(*x) {
                    return;
                }
                let mut dcols = vec![0.0; rows * kdim];
                gemm(prec, rows, d_out, kdim, Operand::plain(g.data()), Operand::t(kv.data()), 0.0, &mut dcols);
                let pad = (h - 1) / 2;
                let mut dx = vec![0.0; xv.len()];
                for bi in 0..b {
                    for ti in 0..t {
                        let row = &dcols[(bi * t + ti) * kdim..(bi * t + ti + 1) * kdim];
                        for k in 0..h {
                            let src = ti as isize + k as isize - pad as isize;
                            if src < 0 || src >= t as isize {
                                continue;
                            }
                            let src = src as usize;
                            if mask[bi * t + src] == 0.0 {
                                continue;
                            }
                            let dst = &mut dx[(bi * t + src) * d_in..(bi * t + src + 1) * d_in];
                            for (d, v) in dst.iter_mut().zip(&row[k * d_in..(k + 1) * d_in]) {
                                *d += v;
                            }
                        }
                    }
                }
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::MaxPoolTime { x, argmax } => {
                let xv = val(*x);
                let d = xv.shape()[2];
                let t = xv.shape()[1];
                let mut dx = vec![0.0; xv.len()];
                for (j, &ti) in argmax.iter().enumerate() {
                    let (bi, di) = (j / d, j % d);
                    dx[(bi * t + ti) * d + di] += g.data()[j];
                }
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::MaskedSoftmax { x } => {
                let y = &self.nodes[i].value;
                let t = y.last_dim();
                let mut dx = vec![0.0; y.len()];
                for ((dr, yr), gr) in dx.chunks_mut(t).zip(y.data().chunks(t)).zip(g.data().chunks(t)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = y * (g - dot);
                    }
                }
                accumulate(grads, *x, y.shape(), dx);
            }
            Op::WeightedSum { weights, x } => {
                let wv = val(*weights);
                let xv = val(*x);
                let (b, t, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let mut dw = vec![0.0; b * t];
                let mut dx = vec![0.0; xv.len()];
                for bi in 0..b {
                    let gr = &g.data()[bi * d..(bi + 1) * d];
                    for ti in 0..t {
                        let off = (bi * t + ti) * d;
                        let xr = &xv.data()[off..off + d];
                        dw[bi * t + ti] = xr.iter().zip(gr).map(|(x, g)| x * g).sum();
                        let a = wv.data()[bi * t + ti];
                        for (dd, gg) in dx[off..off + d].iter_mut().zip(gr) {
                            *dd = a * gg;
                        }
                    }
                }
                accumulate(grads, *weights, wv.shape(), dw);
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::Gather { table, ids } => {
                let tv = val(*table);
                let d = tv.last_dim();
                let mut dt = vec![0.0; tv.len()];
                for (r, &id) in ids.iter().enumerate() {
                    for (dst, src) in dt[id * d..(id + 1) * d].iter_mut().zip(&g.data()[r * d..(r + 1) * d]) {
                        *dst += src;
                    }
                }
                accumulate(grads, *table, tv.shape(), dt);
            }
            Op::SelectTime { x, index } => {
                let xv = val(*x);
                let (t, d) = (xv.shape()[1], xv.shape()[2]);
                let mut dx = vec![0.0; xv.len()];
                for (bi, &ti) in index.iter().enumerate() {
                    dx[(bi * t + ti) * d..(bi * t + ti + 1) * d].copy_from_slice(&g.data()[bi * d..(bi + 1) * d]);
                }
                accumulate(grads, *x, xv.shape(), dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let gv = val(*gamma);
                let d = gv.len();
                let mut dx = vec![0.0; normalized.len()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for (r, ((dxr, xh), gr)) in dx
                    .chunks_mut(d)
                    .zip(normalized.chunks(d))
                    .zip(g.data().chunks(d))
                    .enumerate()
                {
                    let mut sum_dxh = 0.0;
                    let mut sum_dxh_xh = 0.0;
                    for j in 0..d {
                        dgamma[j] += gr[j] * xh[j];
                        dbeta[j] += gr[j];
                        let dxh = gr[j] * gv.data()[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xh[j];
                    }
                    let s = inv_std[r] / d as f64;
                    for j in 0..d {
                        let dxh = gr[j] * gv.data()[j];
                        dxr[j] = s * (d as f64 * dxh - sum_dxh - xh[j] * sum_dxh_xh);
                    }
                }
                accumulate(grads, *x, g.shape(), dx);
                accumulate(grads, *gamma, gv.shape(), dgamma);
                accumulate(grads, *beta, val(*beta).shape(), dbeta);
            }
            Op::Dropout { x, keep_scale } => {
                let dx = g.data().iter().zip(keep_scale).map(|(g, s)| g * s).collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::GradReverse(x) => {
                let dx = g.data().iter().map(|v| -v).collect();
                accumulate(grads, *x, g.shape(), dx);
            }
            Op::CrossEntropy { probs, gold } => {
                let pv = val(*probs);
                let c = pv.last_dim();
                let scale = g.item() / gold.len() as f64;
                let mut dp = vec![0.0; pv.len()];
                for (r, &y) in gold.iter().enumerate() {
                    let p = pv.data()[r * c + y];
                    if p > super::ops::PROB_FLOOR {
                        dp[r * c + y] = -scale / p;
                    }
                }
                accumulate(grads, *probs, pv.shape(), dp);
            }
            Op::Sum(x) => {
                let xv = val(*x);
                accumulate(grads, *x, xv.shape(), vec![g.item(); xv.len()]);
            }
            Op::Sru(saved) => self.backward_sru(saved, g, grads),
        }
    }

    fn backward_sru(&self, s: &SruSaved, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let val = |v: Var| &self.nodes[v.0].value;
        let uv = val(s.u);
        let hw = val(s.highway);
        let vf = val(s.v_f).data();
        let vr = val(s.v_r).data();
        let (b, t, d) = (g.shape()[0], g.shape()[1], g.shape()[2]);
        let mut du = vec![0.0; uv.len()];
        let mut dhw = vec![0.0; hw.len()];
        let mut dvf = vec![0.0; d];
        let mut dvr = vec![0.0; d];
        let mut dbf = vec![0.0; d];
        let mut dbr = vec![0.0; d];
        let mut carry = vec![0.0; d];
        for bi in 0..b {
            carry.iter_mut().for_each(|c| *c = 0.0);
            // Undo the forward visiting order.
            let order: Box<dyn Iterator<Item = usize>> = if s.reverse {
                Box::new(0..t)
            } else {
                Box::new((0..t).rev())
            };
            for ti in order {
                let bt = bi * t + ti;
                if s.mask[bt] == 0.0 {
                    continue;
                }
                let off = bt * d;
                let uoff = bt * 3 * d;
                for j in 0..d {
                    let c_prev = s.c_prev[off + j];
                    let f = s.f[off + j];
                    let r = s.r[off + j];
                    let c = s.c[off + j];
                    let xt = uv.data()[uoff + j];
                    let dh = g.data()[off + j];
                    let dr = dh * (c - hw.data()[off + j]);
                    let dc = carry[j] + dh * r;
                    dhw[off + j] = dh * (1.0 - r);
                    let drpre = dr * r * (1.0 - r);
                    let df = dc * (c_prev - xt);
                    let dfpre = df * f * (1.0 - f);
                    du[uoff + j] = dc * (1.0 - f);
                    du[uoff + d + j] = dfpre;
                    du[uoff + 2 * d + j] = drpre;
                    dvf[j] += dfpre * c_prev;
                    dvr[j] += drpre * c_prev;
                    dbf[j] += dfpre;
                    dbr[j] += drpre;
                    carry[j] = dc * f + dfpre * vf[j] + drpre * vr[j];
                }
            }
        }
        accumulate(grads, s.u, uv.shape(), du);
        accumulate(grads, s.highway, hw.shape(), dhw);
        accumulate(grads, s.v_f, &[d], dvf);
        accumulate(grads, s.v_r, &[d], dvr);
        accumulate(grads, s.b_f, &[d], dbf);
        accumulate(grads, s.b_r, &[d], dbr);
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, shape: &[usize], data: Vec<f64>) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(&data) {
                *a += b;
            }
        }
        slot @ None => {
            *slot = Some(Tensor {
                shape: shape.to_vec(),
                data,
            })
        }
    }
}

/// Generic axis permutation: output axis `i` is input axis `axes[i]`.
pub(crate) fn permute_data(x: &Tensor, axes: &[usize]) -> Tensor {
    let in_shape = x.shape();
    let rank = in_shape.len();
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let mut in_strides = vec![1; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; rank];
    for _ in 0..x.len() {
        let src: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(x.data()[src]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            if idx[ax] < out_shape[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
    Tensor {
        shape: out_shape,
        data: out,
    }
}
