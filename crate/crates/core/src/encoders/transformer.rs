use super::layers::{uniform, Linear};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Mode, ParamId, ParamStore, RngStream, Tensor, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransformerDims {
    pub vocab_size: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
}

#[derive(Debug, Clone)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        LayerNormParams {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[d], 1.0)),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[d])),
        }
    }

    fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, gamma, beta, LAYER_NORM_EPS)
    }
}

#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub norm_attn: LayerNormParams,
    pub ff_in: Linear,
    pub ff_out: Linear,
    pub norm_ff: LayerNormParams,
}

/// Self-attention encoder over token ids with learned positions
/// (post-norm blocks, ReLU feed-forward).
#[derive(Debug, Clone)]
pub struct TransformerWordEncoder {
    pub dims: TransformerDims,
    pub token_embedding: ParamId,
    pub position_embedding: ParamId,
    pub blocks: Vec<EncoderBlock>,
}

/// Final-block word encodings plus per-block attention weights
/// `[B·H × T × T]`.
#[derive(Debug, Clone)]
pub struct TransformerOutput {
    pub encodings: Var,
    pub attention: Vec<Var>,
}

impl TransformerWordEncoder {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dims: TransformerDims,
        max_norm: Option<f64>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        if dims.heads == 0 || !dims.d_model.is_multiple_of(dims.heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by {} heads",
                dims.d_model, dims.heads
            )));
        }
        let d = dims.d_model;
        let token_embedding = store.add(format!("{name}.tokens"), uniform(&[dims.vocab_size, d], 0.1, rng));
        let position_embedding = store.add(format!("{name}.positions"), uniform(&[dims.max_len, d], 0.1, rng));
        let blocks = (0..dims.layers)
            .map(|l| {
                let p = format!("{name}.block{l}");
                EncoderBlock {
                    query: Linear::new(store, &format!("{p}.query"), d, d, max_norm, rng),
                    key: Linear::new(store, &format!("{p}.key"), d, d, max_norm, rng),
                    value: Linear::new(store, &format!("{p}.value"), d, d, max_norm, rng),
                    output: Linear::new(store, &format!("{p}.output"), d, d, max_norm, rng),
                    norm_attn: LayerNormParams::new(store, &format!("{p}.norm_attn"), d),
                    ff_in: Linear::new(store, &format!("{p}.ff_in"), d, dims.d_ff, max_norm, rng),
                    ff_out: Linear::new(store, &format!("{p}.ff_out"), dims.d_ff, d, max_norm, rng),
                    norm_ff: LayerNormParams::new(store, &format!("{p}.norm_ff"), d),
                }
            })
            .collect();
        Ok(TransformerWordEncoder {
            dims,
            token_embedding,
            position_embedding,
            blocks,
        })
    }

    pub fn out_dim(&self) -> usize {
        self.dims.d_model
    }

    /// `token_ids` is row-major `[B×T]`; padded steps of the result are zero.
    #[allow(clippy::too_many_arguments)]
    pub fn encode(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        token_ids: &[usize],
        mask: &Tensor,
        dropout: f64,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<TransformerOutput> {
        let (b, t) = (mask.shape()[0], mask.shape()[1]);
        if t > self.dims.max_len {
            return Err(Error::TooLong {
                len: t,
                max: self.dims.max_len,
            });
        }
        if token_ids.len() != b * t {
            return Err(Error::LengthMismatch(token_ids.len(), b * t));
        }
        let d = self.dims.d_model;
        let table = g.param(store, self.token_embedding);
        let tok = g.gather(table, token_ids)?;
        let pos_table = g.param(store, self.position_embedding);
        let pos_ids: Vec<usize> = (0..b).flat_map(|_| 0..t).collect();
        let pos = g.gather(pos_table, &pos_ids)?;
        let x = g.add(tok, pos)?;
        let mut x = g.reshape(x, &[b, t, d])?;
        x = g.dropout(x, dropout, mode, rng)?;
        let mut attention = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, att) = self.block(g, store, block, x, mask, dropout, mode, rng)?;
            x = y;
            attention.push(att);
        }
        let encodings = g.apply_time_mask(x, mask)?;
        Ok(TransformerOutput { encodings, attention })
    }

    #[allow(clippy::too_many_arguments)]
    fn block(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        block: &EncoderBlock,
        x: Var,
        mask: &Tensor,
        dropout: f64,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Var, Var)> {
        let (b, t, d) = (mask.shape()[0], mask.shape()[1], self.dims.d_model);
        let h = self.dims.heads;
        let dh = d / h;
        let split = |g: &mut Graph, v: Var| -> Result<Var> {
            let v = g.reshape(v, &[b, t, h, dh])?;
            let v = g.permute(v, &[0, 2, 1, 3])?;
            g.reshape(v, &[b * h, t, dh])
        };
        let q = block.query.forward(g, store, x)?;
        let q = split(g, q)?;
        let k = block.key.forward(g, store, x)?;
        let k = split(g, k)?;
        let v = block.value.forward(g, store, x)?;
        let v = split(g, v)?;
        let scores = g.batch_matmul(q, k, true)?;
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let att = g.masked_softmax(scores, Some(mask))?;
        let ctx = g.batch_matmul(att, v, false)?;
        let ctx = g.reshape(ctx, &[b, h, t, dh])?;
        let ctx = g.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = g.reshape(ctx, &[b, t, d])?;
        let out = block.output.forward(g, store, ctx)?;
        let out = g.dropout(out, dropout, mode, rng)?;
        let res = g.add(x, out)?;
        let x = block.norm_attn.apply(g, store, res)?;
        let ff = block.ff_in.forward(g, store, x)?;
        let ff = g.relu(ff)?;
        let ff = block.ff_out.forward(g, store, ff)?;
        let ff = g.dropout(ff, dropout, mode, rng)?;
        let res = g.add(x, ff)?;
        let y = block.norm_ff.apply(g, store, res)?;
        Ok((y, att))
    }
}
