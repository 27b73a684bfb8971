use super::layers::{glorot, uniform};
use crate::error::{Error, Result};
use crate::tensor::{Graph, NormAxis, ParamId, ParamStore, RngStream, Tensor, Var};

/// One direction of a simple recurrent unit.
///
/// `weight` stacks `[W ; W_f ; W_r]` as a `[3d × d_in]` matrix so the input
/// projections for every time step come from a single matrix product; only
/// the elementwise recurrence runs sequentially.
#[derive(Debug, Clone)]
pub struct SruLayer {
    pub weight: ParamId,
    pub v_f: ParamId,
    pub v_r: ParamId,
    pub b_f: ParamId,
    pub b_r: ParamId,
    /// Highway projection `P: [d × d_in]`, present when `d_in != d`.
    pub projection: Option<ParamId>,
    pub in_dim: usize,
    pub hidden: usize,
}

impl SruLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        max_norm: Option<f64>,
        rng: &mut RngStream,
    ) -> Self {
        let weight = store.add_constrained(
            format!("{name}.weight"),
            glorot(&[3 * hidden, in_dim], in_dim, hidden, rng),
            max_norm,
            NormAxis::Rows,
        );
        let lim = (3.0 / hidden as f64).sqrt() * 0.5;
        let v_f = store.add(format!("{name}.v_f"), uniform(&[hidden], lim, rng));
        let v_r = store.add(format!("{name}.v_r"), uniform(&[hidden], lim, rng));
        let b_f = store.add(format!("{name}.b_f"), Tensor::zeros(&[hidden]));
        let b_r = store.add(format!("{name}.b_r"), Tensor::zeros(&[hidden]));
        let projection = (in_dim != hidden).then(|| {
            store.add_constrained(
                format!("{name}.projection"),
                glorot(&[hidden, in_dim], in_dim, hidden, rng),
                max_norm,
                NormAxis::Rows,
            )
        });
        SruLayer {
            weight,
            v_f,
            v_r,
            b_f,
            b_r,
            projection,
            in_dim,
            hidden,
        }
    }

    /// `x: [B×T×d_in]` -> `h: [B×T×d]`, visiting time steps backwards when
    /// `reverse` is set.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor, reverse: bool) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        if shape.len() != 3 || shape[2] != self.in_dim {
            return Err(Error::shape("sru", &shape, &[self.in_dim]));
        }
        let (b, t) = (shape[0], shape[1]);
        let flat = g.reshape(x, &[b * t, self.in_dim])?;
        let w = g.param(store, self.weight);
        let u = g.matmul_nt(flat, w)?;
        let u = g.reshape(u, &[b, t, 3 * self.hidden])?;
        let highway = match self.projection {
            Some(p) => {
                let p = g.param(store, p);
                let hw = g.matmul_nt(flat, p)?;
                g.reshape(hw, &[b, t, self.hidden])?
            }
            None => x,
        };
        let v_f = g.param(store, self.v_f);
        let v_r = g.param(store, self.v_r);
        let b_f = g.param(store, self.b_f);
        let b_r = g.param(store, self.b_r);
        g.sru(u, highway, v_f, v_r, b_f, b_r, mask, reverse)
    }
}

/// Stacked bidirectional SRU; each layer's input is the concatenation of
/// the previous layer's forward and backward outputs.
#[derive(Debug, Clone)]
pub struct BiSruStack {
    pub layers: Vec<(SruLayer, SruLayer)>,
    pub hidden: usize,
}

/// Last-layer directional outputs, each `[B×T×d]`.
#[derive(Debug, Clone, Copy)]
pub struct BiStates {
    pub forward: Var,
    pub backward: Var,
}

impl BiSruStack {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        depth: usize,
        max_norm: Option<f64>,
        rng: &mut RngStream,
    ) -> Self {
        let layers = (0..depth)
            .map(|l| {
                let d_in = if l == 0 { in_dim } else { 2 * hidden };
                (
                    SruLayer::new(store, &format!("{name}.l{l}.fwd"), d_in, hidden, max_norm, rng),
                    SruLayer::new(store, &format!("{name}.l{l}.bwd"), d_in, hidden, max_norm, rng),
                )
            })
            .collect();
        BiSruStack { layers, hidden }
    }

    /// `[last forward state ; first backward state ; masked max-pool of both]`.
    pub fn out_dim(&self) -> usize {
        4 * self.hidden
    }

    pub fn states(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor) -> Result<BiStates> {
        let mut input = x;
        let mut out = None;
        for (fwd, bwd) in &self.layers {
            let hf = fwd.forward(g, store, input, mask, false)?;
            let hb = bwd.forward(g, store, input, mask, true)?;
            input = g.concat(&[hf, hb])?;
            out = Some(BiStates {
                forward: hf,
                backward: hb,
            });
        }
        out.ok_or_else(|| Error::Invalid("BiSRU stack has no layers".into()))
    }

    /// Sentence vectors `[B×4d]`. `lengths[i]` is the unmasked prefix length
    /// of batch row `i`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor, lengths: &[usize]) -> Result<Var> {
        if lengths.contains(&0) {
            return Err(Error::EmptySequence("bisru_encode"));
        }
        let s = self.states(g, store, x, mask)?;
        let last: Vec<usize> = lengths.iter().map(|&l| l - 1).collect();
        let first = vec![0; lengths.len()];
        let fwd_last = g.select_time(s.forward, &last)?;
        let bwd_first = g.select_time(s.backward, &first)?;
        let both = g.concat(&[s.forward, s.backward])?;
        let pooled = g.max_pool_time(both, mask)?;
        g.concat(&[fwd_last, bwd_first, pooled])
    }
}
