use super::gemm::{gemm, Operand};
use super::graph::{permute_data, Op, SruSaved};
use super::{Graph, Mode, RngStream, Tensor, Var};
use crate::error::{Error, Result};

/// Lower clamp for probabilities inside `log`.
pub const PROB_FLOOR: f64 = 1e-12;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    /// `a·b` for `a: m×k`, `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a·bᵀ` for `a: m×k`, `b: n×k` (weights stored as `[out × in]`).
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let (m, k) = (sa[0], sa[1]);
        let (kb, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if k != kb {
            return Err(Error::shape("matmul", &sa, &sb));
        }
        let mut out = vec![0.0; m * n];
        let bo = if trans_b {
            Operand::t(self.value(b).data())
        } else {
            Operand::plain(self.value(b).data())
        };
        gemm(self.precision(), m, k, n, Operand::plain(self.value(a).data()), bo, 0.0, &mut out);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul { a, b, trans_b }, "matmul")
    }

    /// Per-group product of `[G×m×k]` and `[G×k×n]` (or `[G×n×k]` transposed).
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(Error::shape("batch_matmul", &sa, &sb));
        }
        let (groups, m, k) = (sa[0], sa[1], sa[2]);
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if k != kb {
            return Err(Error::shape("batch_matmul", &sa, &sb));
        }
        let mut out = vec![0.0; groups * m * n];
        let prec = self.precision();
        {
            let av = self.value(a).data();
            let bv = self.value(b).data();
            for q in 0..groups {
                let asl = &av[q * m * k..(q + 1) * m * k];
                let bsl = &bv[q * k * n..(q + 1) * k * n];
                let bo = if trans_b { Operand::t(bsl) } else { Operand::plain(bsl) };
                gemm(prec, m, k, n, Operand::plain(asl), bo, 0.0, &mut out[q * m * n..(q + 1) * m * n]);
            }
        }
        self.push(
            Tensor::new(vec![groups, m, n], out)?,
            Op::BatchMatMul {
                a,
                b,
                trans_b,
                groups,
            },
            "batch_matmul",
        )
    }

    fn zip_same(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::shape(name, av.shape(), bv.shape()));
        }
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "add", |x, y| x + y)?;
        self.push(t, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same(a, b, "mul", |x, y| x * y)?;
        self.push(t, Op::Mul(a, b), "mul")
    }

    /// Adds a vector to every row of `x` along its last axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.rank() != 1 || xv.last_dim() != bv.len() {
            return Err(Error::shape("add_bias", xv.shape(), bv.shape()));
        }
        let n = bv.len();
        let mut data = xv.data().to_vec();
        for row in data.chunks_mut(n) {
            for (v, b) in row.iter_mut().zip(bv.data()) {
                *v += b;
            }
        }
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(t, Op::AddBias { x, bias }, "add_bias")
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Result<Var> {
        let t = self.value(x).map(|v| v * s);
        self.push(t, Op::Scale(x, s), "scale")
    }

    pub fn neg(&mut self, x: Var) -> Result<Var> {
        self.scale(x, -1.0)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(f64::tanh);
        self.push(t, Op::Tanh(x), "tanh")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(sigmoid);
        self.push(t, Op::Sigmoid(x), "sigmoid")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).map(|v| v.max(0.0));
        self.push(t, Op::Relu(x), "relu")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        self.push(t, Op::Reshape(x), "reshape")
    }

    /// Output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let rank = self.value(x).rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape("permute", self.shape(x), axes));
        }
        let t = permute_data(self.value(x), axes);
        self.push(t, Op::Permute { x, axes: axes.to_vec() }, "permute")
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]).to_vec();
        let lead = &first[..first.len() - 1];
        for p in parts {
            let s = self.shape(*p);
            if &s[..s.len() - 1] != lead {
                return Err(Error::shape("concat", &first, s));
            }
        }
        let rows: usize = lead.iter().product();
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).last_dim()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let mut shape = lead.to_vec();
        shape.push(total);
        let t = Tensor::new(shape, data)?;
        self.push(t, Op::Concat { parts: parts.to_vec() }, "concat")
    }

    /// Time convolution with "same" zero padding of `(h-1)/2` steps per side.
    ///
    /// `x: [B×T×D_in]`, `kernel: [h×D_in×D_out]`, `bias: [D_out]`, `mask: [B×T]`.
    /// Masked input positions read as zeros, so a padded batch row convolves
    /// exactly like its unpadded sentence.
    pub fn conv1d_same(&mut self, x: Var, kernel: Var, bias: Var, mask: &Tensor) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ks = self.shape(kernel).to_vec();
        if xs.len() != 3 || ks.len() != 3 || ks[1] != xs[2] {
            return Err(Error::shape("conv1d_same", &xs, &ks));
        }
        let h = ks[0];
        if h.is_multiple_of(2) {
            return Err(Error::UnsupportedWidth(h));
        }
        let (b, t, d_in) = (xs[0], xs[1], xs[2]);
        let d_out = ks[2];
        if self.value(bias).shape() != [d_out] {
            return Err(Error::shape("conv1d_same", &ks, self.shape(bias)));
        }
        if mask.shape() != [b, t] {
            return Err(Error::shape("conv1d_same", &xs, mask.shape()));
        }
        let pad = (h - 1) / 2;
        let kdim = h * d_in;
        let mut cols = vec![0.0; b * t * kdim];
        {
            let xv = self.value(x).data();
            for bi in 0..b {
                for ti in 0..t {
                    let row = &mut cols[(bi * t + ti) * kdim..(bi * t + ti + 1) * kdim];
                    for k in 0..h {
                        let src = ti as isize + k as isize - pad as isize;
                        if src < 0 || src >= t as isize {
                            continue;
                        }
                        let src = src as usize;
                        if mask.data()[bi * t + src] == 0.0 {
                            continue;
                        }
                        row[k * d_in..(k + 1) * d_in]
                            .copy_from_slice(&xv[(bi * t + src) * d_in..(bi * t + src + 1) * d_in]);
                    }
                }
            }
        }
        let mut out = vec![0.0; b * t * d_out];
        for row in out.chunks_mut(d_out) {
            row.copy_from_slice(self.value(bias).data());
        }
        gemm(
            self.precision(),
            b * t,
            kdim,
            d_out,
            Operand::plain(&cols),
            Operand::plain(self.value(kernel).data()),
            1.0,
            &mut out,
        );
        let tensor = Tensor::new(vec![b, t, d_out], out)?;
        self.push(
            tensor,
            Op::Conv1d {
                x,
                kernel,
                bias,
                cols,
                width: h,
                mask: mask.data().to_vec(),
            },
            "conv1d_same",
        )
    }

    /// Per-feature maximum over unmasked time steps: `[B×T×D] -> [B×D]`.
    pub fn max_pool_time(&mut self, x: Var, mask: &Tensor) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || mask.shape() != [xs[0], xs[1]] {
            return Err(Error::shape("max_pool_time", &xs, mask.shape()));
        }
        let (b, t, d) = (xs[0], xs[1], xs[2]);
        let xv = self.value(x).data();
        let mut out = vec![f64::NEG_INFINITY; b * d];
        let mut argmax = vec![usize::MAX; b * d];
        for bi in 0..b {
            for ti in 0..t {
                if mask.data()[bi * t + ti] == 0.0 {
                    continue;
                }
                for di in 0..d {
                    let v = xv[(bi * t + ti) * d + di];
                    if argmax[bi * d + di] == usize::MAX || v > out[bi * d + di] {
                        out[bi * d + di] = v;
                        argmax[bi * d + di] = ti;
                    }
                }
            }
            if d > 0 && argmax[bi * d] == usize::MAX {
                return Err(Error::EmptySequence("max_pool_time"));
            }
        }
        let tensor = Tensor::new(vec![b, d], out)?;
        self.push(tensor, Op::MaxPoolTime { x, argmax }, "max_pool_time")
    }

    /// Softmax along the last axis with max subtraction.
    ///
    /// `mask`, when given, has shape `[M×T]` and row `r` of the logits uses
    /// mask row `r / (rows / M)`; masked outputs are exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: Option<&Tensor>) -> Result<Var> {
        let xv = self.value(x);
        let t = xv.last_dim();
        let rows = xv.len() / t.max(1);
        let group = match mask {
            Some(m) => {
                let mr = m.len() / t.max(1);
                if m.last_dim() != t || mr == 0 || !rows.is_multiple_of(mr) {
                    return Err(Error::shape("masked_softmax", xv.shape(), m.shape()));
                }
                rows / mr
            }
            None => 1,
        };
        let mut out = vec![0.0; xv.len()];
        for r in 0..rows {
            let logits = &xv.data()[r * t..(r + 1) * t];
            let keep = |j: usize| mask.is_none_or(|m| m.data()[(r / group) * t + j] != 0.0);
            let max = (0..t)
                .filter(|&j| keep(j))
                .map(|j| logits[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(Error::EmptySequence("masked_softmax"));
            }
            let row = &mut out[r * t..(r + 1) * t];
            let mut z = 0.0;
            for j in 0..t {
                if keep(j) {
                    row[j] = (logits[j] - max).exp();
                    z += row[j];
                }
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let tensor = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(tensor, Op::MaskedSoftmax { x }, "masked_softmax")
    }

    /// `weights: [B×T]`, `x: [B×T×D]` -> `Σ_t weights[b,t]·x[b,t,:]`.
    pub fn weighted_sum(&mut self, weights: Var, x: Var) -> Result<Var> {
        let (ws, xs) = (self.shape(weights).to_vec(), self.shape(x).to_vec());
        if xs.len() != 3 || ws != xs[..2] {
            return Err(Error::shape("weighted_sum", &ws, &xs));
        }
        let (b, t, d) = (xs[0], xs[1], xs[2]);
        let (wv, xv) = (self.value(weights).data(), self.value(x).data());
        let mut out = vec![0.0; b * d];
        for bi in 0..b {
            for ti in 0..t {
                let a = wv[bi * t + ti];
                if a == 0.0 {
                    continue;
                }
                for di in 0..d {
                    out[bi * d + di] += a * xv[(bi * t + ti) * d + di];
                }
            }
        }
        let tensor = Tensor::new(vec![b, d], out)?;
        self.push(tensor, Op::WeightedSum { weights, x }, "weighted_sum")
    }

    /// Row lookup: `table: [V×D]`, ids of length N -> `[N×D]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.rank() != 2 {
            return Err(Error::shape("gather", tv.shape(), &[ids.len()]));
        }
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::shape("gather", tv.shape(), &[id]));
            }
            out.extend_from_slice(&tv.data()[id * d..(id + 1) * d]);
        }
        let tensor = Tensor::new(vec![ids.len(), d], out)?;
        self.push(
            tensor,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
            "gather",
        )
    }

    /// Picks time step `index[b]` from each batch row: `[B×T×D] -> [B×D]`.
    pub fn select_time(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || index.len() != xs[0] || index.iter().any(|&i| i >= xs[1]) {
            return Err(Error::shape("select_time", &xs, index));
        }
        let (t, d) = (xs[1], xs[2]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(index.len() * d);
        for (bi, &ti) in index.iter().enumerate() {
            out.extend_from_slice(&xv[(bi * t + ti) * d..(bi * t + ti + 1) * d]);
        }
        let tensor = Tensor::new(vec![xs[0], d], out)?;
        self.push(
            tensor,
            Op::SelectTime {
                x,
                index: index.to_vec(),
            },
            "select_time",
        )
    }

    /// Layer normalization over the last axis.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let xv = self.value(x);
        let d = xv.last_dim();
        if self.value(gamma).shape() != [d] || self.value(beta).shape() != [d] {
            return Err(Error::shape("layer_norm", xv.shape(), self.shape(gamma)));
        }
        let rows = xv.len() / d;
        let mut normalized = vec![0.0; xv.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; xv.len()];
        let (gv, bv) = (self.value(gamma).data(), self.value(beta).data());
        for r in 0..rows {
            let row = &xv.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let xh = (row[j] - mean) * is;
                normalized[r * d + j] = xh;
                out[r * d + j] = xh * gv[j] + bv[j];
            }
        }
        let tensor = Tensor::new(xv.shape().to_vec(), out)?;
        self.push(
            tensor,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            "layer_norm",
        )
    }

    /// Inverted dropout: survivors are scaled by `1/(1-rate)`; eval mode is
    /// the identity.
    pub fn dropout(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut RngStream) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidRate(rate));
        }
        if mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let scale = 1.0 / keep;
        let xv = self.value(x);
        let keep_scale: Vec<f64> = (0..xv.len())
            .map(|_| if rng.bernoulli(keep) { scale } else { 0.0 })
            .collect();
        let data = xv.data().iter().zip(&keep_scale).map(|(v, s)| v * s).collect();
        let tensor = Tensor::new(xv.shape().to_vec(), data)?;
        self.push(tensor, Op::Dropout { x, keep_scale }, "dropout")
    }

    /// Identity forward, negated gradient backward.
    pub fn grad_reverse(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x).clone();
        self.push(t, Op::GradReverse(x), "grad_reverse")
    }

    /// Mean over rows of `-ln(max(p[gold], 1e-12))`; `probs: [N×C]` or `[C]`.
    pub fn cross_entropy(&mut self, probs: Var, gold: &[usize]) -> Result<Var> {
        let pv = self.value(probs);
        let c = pv.last_dim();
        let rows = pv.len() / c.max(1);
        if rows != gold.len() || rows == 0 {
            return Err(Error::LengthMismatch(rows, gold.len()));
        }
        let mut total = 0.0;
        for (r, &y) in gold.iter().enumerate() {
            if y >= c {
                return Err(Error::ClassIndex { index: y, classes: c });
            }
            total -= pv.data()[r * c + y].max(PROB_FLOOR).ln();
        }
        let t = Tensor::scalar(total / rows as f64);
        self.push(
            t,
            Op::CrossEntropy {
                probs,
                gold: gold.to_vec(),
            },
            "cross_entropy",
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(x).data().iter().sum());
        self.push(t, Op::Sum(x), "sum")
    }

    /// Fused SRU recurrence over `[B×T×·]` inputs.
    ///
    /// `u` packs `[W x_t | W_f x_t | W_r x_t]` as `[B×T×3d]`; `highway` is the
    /// `[B×T×d]` skip term. With `c_0 = 0`, for each unmasked step in visiting
    /// order:
    ///
    /// ```text
    /// f_t = σ(W_f x_t + v_f ⊙ c_{t-1} + b_f)
    /// c_t = f_t ⊙ c_{t-1} + (1 - f_t) ⊙ W x_t
    /// r_t = σ(W_r x_t + v_r ⊙ c_{t-1} + b_r)
    /// h_t = r_t ⊙ c_t + (1 - r_t) ⊙ highway_t
    /// ```
    ///
    /// Masked steps emit `h_t = 0` and carry the state unchanged. `reverse`
    /// visits time steps from last to first.
    #[allow(clippy::too_many_arguments)]
    pub fn sru(
        &mut self,
        u: Var,
        highway: Var,
        v_f: Var,
        v_r: Var,
        b_f: Var,
        b_r: Var,
        mask: &Tensor,
        reverse: bool,
    ) -> Result<Var> {
        let hs = self.shape(highway).to_vec();
        let us = self.shape(u).to_vec();
        if hs.len() != 3 || us != [hs[0], hs[1], 3 * hs[2]] || mask.shape() != [hs[0], hs[1]] {
            return Err(Error::shape("sru", &us, &hs));
        }
        let (b, t, d) = (hs[0], hs[1], hs[2]);
        for p in [v_f, v_r, b_f, b_r] {
            if self.shape(p) != [d] {
                return Err(Error::shape("sru", &hs, self.shape(p)));
            }
        }
        let n = b * t * d;
        let mut c_prev_all = vec![0.0; n];
        let mut f_all = vec![0.0; n];
        let mut r_all = vec![0.0; n];
        let mut c_all = vec![0.0; n];
        let mut h = vec![0.0; n];
        {
            let uv = self.value(u).data();
            let hw = self.value(highway).data();
            let vf = self.value(v_f).data();
            let vr = self.value(v_r).data();
            let bf = self.value(b_f).data();
            let br = self.value(b_r).data();
            let mut c = vec![0.0; d];
            for bi in 0..b {
                c.iter_mut().for_each(|v| *v = 0.0);
                for step in 0..t {
                    let ti = if reverse { t - 1 - step } else { step };
                    let bt = bi * t + ti;
                    let off = bt * d;
                    if mask.data()[bt] == 0.0 {
                        c_prev_all[off..off + d].copy_from_slice(&c);
                        c_all[off..off + d].copy_from_slice(&c);
                        continue;
                    }
                    let uoff = bt * 3 * d;
                    for j in 0..d {
                        let cp = c[j];
                        let xt = uv[uoff + j];
                        let f = sigmoid(uv[uoff + d + j] + vf[j] * cp + bf[j]);
                        let r = sigmoid(uv[uoff + 2 * d + j] + vr[j] * cp + br[j]);
                        let cn = f * cp + (1.0 - f) * xt;
                        c_prev_all[off + j] = cp;
                        f_all[off + j] = f;
                        r_all[off + j] = r;
                        c_all[off + j] = cn;
                        h[off + j] = r * cn + (1.0 - r) * hw[off + j];
                        c[j] = cn;
                    }
                }
            }
        }
        let tensor = Tensor::new(vec![b, t, d], h)?;
        self.push(
            tensor,
            Op::Sru(Box::new(SruSaved {
                u,
                highway,
                v_f,
                v_r,
                b_f,
                b_r,
                reverse,
                mask: mask.data().to_vec(),
                c_prev: c_prev_all,
                f: f_all,
                r: r_all,
                c: c_all,
            })),
            "sru",
        )
    }

    /// Multiplies each time step of `[B×T×D]` by its `[B×T]` mask value.
    pub fn apply_time_mask(&mut self, x: Var, mask: &Tensor) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || mask.shape() != [xs[0], xs[1]] {
            return Err(Error::shape("apply_time_mask", &xs, mask.shape()));
        }
        let d = xs[2];
        let mut m = Vec::with_capacity(xs.iter().product());
        for &v in mask.data() {
            m.extend(std::iter::repeat_n(v, d));
        }
        let mv = self.constant(Tensor::new(xs, m)?)?;
        self.mul(x, mv)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamStore, Precision};

    fn g64() -> Graph {
        Graph::new(Precision::F64)
    }

    #[test]
    fn matmul_identity_and_hand_case() {
        let mut g = g64();
        let i2 = g.input(Tensor::matrix(&[vec![1.0, 0.0], vec![0.0, 1.0]])).unwrap();
        let v = g.input(Tensor::matrix(&[vec![5.0], vec![7.0]])).unwrap();
        let y = g.matmul(i2, v).unwrap();
        assert_eq!(g.value(y).data(), &[5.0, 7.0]);

        let a = g.input(Tensor::matrix(&[vec![1.0, 2.0], vec![3.0, 4.0]])).unwrap();
        let ones = g.input(Tensor::matrix(&[vec![1.0], vec![1.0]])).unwrap();
        let y = g.matmul(a, ones).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 7.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut g = g64();
        let a = g.input(Tensor::zeros(&[2, 3])).unwrap();
        let b = g.input(Tensor::zeros(&[2, 3])).unwrap();
        let err = g.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn conv_rejects_even_width() {
        let mut g = g64();
        let x = g.input(Tensor::zeros(&[1, 4, 2])).unwrap();
        let k = g.input(Tensor::zeros(&[2, 2, 3])).unwrap();
        let b = g.input(Tensor::zeros(&[3])).unwrap();
        let mask = Tensor::full(&[1, 4], 1.0);
        assert!(matches!(g.conv1d_same(x, k, b, &mask), Err(Error::UnsupportedWidth(2))));
    }

    #[test]
    fn conv_hand_case_and_zero_kernel() {
        let mut g = g64();
        let x = g.input(Tensor::new(vec![1, 3, 1], vec![1.0, 2.0, 3.0]).unwrap()).unwrap();
        let k = g.input(Tensor::new(vec![3, 1, 1], vec![1.0, 1.0, 1.0]).unwrap()).unwrap();
        let b = g.input(Tensor::zeros(&[1])).unwrap();
        let mask = Tensor::full(&[1, 3], 1.0);
        let y = g.conv1d_same(x, k, b, &mask).unwrap();
        assert_eq!(g.value(y).data(), &[3.0, 6.0, 5.0]);

        let k0 = g.input(Tensor::zeros(&[5, 1, 2])).unwrap();
        let bc = g.input(Tensor::vector(vec![0.25, -1.5])).unwrap();
        let y = g.conv1d_same(x, k0, bc, &mask).unwrap();
        assert_eq!(g.value(y).data(), &[0.25, -1.5, 0.25, -1.5, 0.25, -1.5]);
    }

    #[test]
    fn max_pool_hand_cases() {
        let mut g = g64();
        let x = g.input(Tensor::new(vec![1, 2, 2], vec![1.0, 3.0, 2.0, 0.0]).unwrap()).unwrap();
        let y = g.max_pool_time(x, &Tensor::full(&[1, 2], 1.0)).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 3.0]);

        let x = g.input(Tensor::new(vec![1, 3, 2], vec![1.0, 3.0, 2.0, 0.0, 9.0, 9.0]).unwrap()).unwrap();
        let mask = Tensor::new(vec![1, 3], vec![1.0, 1.0, 0.0]).unwrap();
        let y = g.max_pool_time(x, &mask).unwrap();
        assert_eq!(g.value(y).data(), &[2.0, 3.0]);

        let none = Tensor::zeros(&[1, 3]);
        assert!(matches!(g.max_pool_time(x, &none), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn softmax_hand_cases() {
        let mut g = g64();
        let x = g.input(Tensor::vector(vec![0.0, 0.0])).unwrap();
        let y = g.masked_softmax(x, None).unwrap();
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let x = g.input(Tensor::matrix(&[vec![-3.7, 1e6]])).unwrap();
        let m = Tensor::matrix(&[vec![1.0, 0.0]]);
        let y = g.masked_softmax(x, Some(&m)).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0]);

        let all_masked = Tensor::zeros(&[1, 2]);
        assert!(matches!(
            g.masked_softmax(x, Some(&all_masked)),
            Err(Error::EmptySequence(_))
        ));
    }

    #[test]
    fn cross_entropy_values() {
        let mut g = g64();
        let p = g.input(Tensor::vector(vec![0.0, 1.0])).unwrap();
        let l = g.cross_entropy(p, &[1]).unwrap();
        assert_eq!(g.value(l).item(), 0.0);
        let p = g.input(Tensor::vector(vec![0.5, 0.5])).unwrap();
        let l = g.cross_entropy(p, &[0]).unwrap();
        assert!((g.value(l).item() - std::f64::consts::LN_2).abs() < 1e-15);
        let p = g.input(Tensor::vector(vec![0.0, 1.0])).unwrap();
        let l = g.cross_entropy(p, &[0]).unwrap();
        assert!((g.value(l).item() - (-(1e-12f64).ln())).abs() < 1e-12);
        assert!(matches!(g.cross_entropy(p, &[2]), Err(Error::ClassIndex { .. })));
    }

    #[test]
    fn dropout_modes() {
        let mut g = g64();
        let mut rng = RngStream::new(1);
        let x = g.input(Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let y = g.dropout(x, 0.0, Mode::Train, &mut rng).unwrap();
        assert_eq!(g.value(y), g.value(x));
        let y = g.dropout(x, 0.5, Mode::Eval, &mut rng).unwrap();
        assert_eq!(g.value(y), g.value(x));
        assert!(matches!(g.dropout(x, 1.0, Mode::Train, &mut rng), Err(Error::InvalidRate(_))));
    }

    #[test]
    fn dropout_preserves_mean() {
        let mut g = g64();
        let mut rng = RngStream::new(99);
        let n = 100_000;
        let x = g.input(Tensor::full(&[n], 2.0)).unwrap();
        let y = g.dropout(x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean = g.value(y).data().iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() / 2.0 < 0.02, "mean {mean}");
    }

    #[test]
    fn grad_reverse_forward_and_backward() {
        let mut g = g64();
        let x = g.input(Tensor::vector(vec![1.0, -2.0])).unwrap();
        let y = g.grad_reverse(x).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0]);
        let w = g.input(Tensor::vector(vec![0.3, -0.5])).unwrap();
        let yw = g.mul(y, w).unwrap();
        let s = g.sum(yw).unwrap();
        let grads = g.gradients(s).unwrap();
        assert_eq!(grads.get(y).unwrap().data(), &[0.3, -0.5]);
        assert_eq!(grads.get(x).unwrap().data(), &[-0.3, 0.5]);
    }

    #[test]
    fn backward_product_rule_and_accumulation() {
        let mut store = ParamStore::new();
        let px = store.add("x", Tensor::scalar(2.0));
        let py = store.add("y", Tensor::scalar(3.0));
        for round in 1..=2 {
            let mut g = g64();
            let x = g.param(&store, px);
            let y = g.param(&store, py);
            let z = g.mul(x, y).unwrap();
            g.backward(z, &mut store).unwrap();
            assert_eq!(store.grad(px).item(), 3.0 * round as f64);
            assert_eq!(store.grad(py).item(), 2.0 * round as f64);
        }
    }

    #[test]
    fn backward_through_reversal_gives_minus_one() {
        let mut store = ParamStore::new();
        let p = store.add("x", Tensor::vector(vec![0.1, 0.2, 0.3]));
        let mut g = g64();
        let x = g.param(&store, p);
        let r = g.grad_reverse(x).unwrap();
        let s = g.sum(r).unwrap();
        g.backward(s, &mut store).unwrap();
        assert_eq!(store.grad(p).data(), &[-1.0, -1.0, -1.0]);
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = g64();
        let x = g.input(Tensor::zeros(&[2])).unwrap();
        assert!(matches!(g.gradients(x), Err(Error::NonScalarRoot(_))));
    }

    #[test]
    fn non_finite_is_reported() {
        let mut g = g64();
        let x = g.input(Tensor::vector(vec![1e300])).unwrap();
        let y = g.input(Tensor::vector(vec![1e300])).unwrap();
        assert!(matches!(g.mul(x, y), Err(Error::NonFinite(_))));
    }

    #[test]
    fn f32_mode_rounds_values() {
        let mut g = Graph::new(Precision::F32);
        let x = g.input(Tensor::vector(vec![0.1])).unwrap();
        assert_eq!(g.value(x).data()[0], 0.1f32 as f64);
    }
}
