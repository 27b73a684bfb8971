use super::layers::{glorot, uniform, Linear};
use crate::error::Result;
use crate::tensor::{Graph, NormAxis, ParamId, ParamStore, RngStream, Tensor, Var};

#[derive(Debug, Clone)]
pub struct ConvFilter {
    pub width: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
}

/// Parallel "same"-padded convolutions, one per filter width.
#[derive(Debug, Clone)]
pub struct ConvBank {
    pub filters: Vec<ConvFilter>,
    pub channels: usize,
    pub in_dim: usize,
}

impl ConvBank {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        channels: usize,
        max_norm: Option<f64>,
        rng: &mut RngStream,
    ) -> Self {
        let filters = widths
            .iter()
            .map(|&h| {
                let kernel = store.add_constrained(
                    format!("{name}.conv{h}.kernel"),
                    glorot(&[h, in_dim, channels], h * in_dim, channels, rng),
                    max_norm,
                    NormAxis::Last,
                );
                let bias = store.add(format!("{name}.conv{h}.bias"), Tensor::zeros(&[channels]));
                ConvFilter { width: h, kernel, bias }
            })
            .collect();
        ConvBank {
            filters,
            channels,
            in_dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.filters.len() * self.channels
    }

    fn activations(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor) -> Result<Vec<Var>> {
        self.filters
            .iter()
            .map(|f| {
                let k = g.param(store, f.kernel);
                let b = g.param(store, f.bias);
                let c = g.conv1d_same(x, k, b, mask)?;
                g.relu(c)
            })
            .collect()
    }

    /// Per-token encodings `[B×T×out_dim]`: ReLU of each convolution,
    /// concatenated on the feature axis, zero at padded steps.
    pub fn word_encode(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor) -> Result<Var> {
        let acts = self.activations(g, store, x, mask)?;
        let cat = if acts.len() == 1 { acts[0] } else { g.concat(&acts)? };
        g.apply_time_mask(cat, mask)
    }

    /// Sentence vector `[B×out_dim]`: masked max-pool of each filter's
    /// ReLU activations, concatenated.
    pub fn maxpool_encode(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor) -> Result<Var> {
        let pooled = self
            .activations(g, store, x, mask)?
            .into_iter()
            .map(|a| g.max_pool_time(a, mask))
            .collect::<Result<Vec<_>>>()?;
        if pooled.len() == 1 {
            Ok(pooled[0])
        } else {
            g.concat(&pooled)
        }
    }
}

/// Convolutional word encoder followed by attention pooling.
#[derive(Debug, Clone)]
pub struct CnnAttEncoder {
    pub bank: ConvBank,
    /// Nonlinearity `f(e) = tanh(W e + b)` inside the attention score.
    pub score_transform: Linear,
    /// Context vector `v`, shape `[attention_width]`.
    pub context: ParamId,
}

/// Attention weights `[B×T]` and pooled sentence vectors `[B×D]`.
#[derive(Debug, Clone, Copy)]
pub struct Pooled {
    pub weights: Var,
    pub sentence: Var,
}

impl CnnAttEncoder {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        widths: &[usize],
        channels: usize,
        attention_width: usize,
        max_norm: Option<f64>,
        rng: &mut RngStream,
    ) -> Self {
        let bank = ConvBank::new(store, name, in_dim, widths, channels, max_norm, rng);
        let score_transform = Linear::new(
            store,
            &format!("{name}.att"),
            bank.out_dim(),
            attention_width,
            max_norm,
            rng,
        );
        let limit = (3.0 / attention_width as f64).sqrt();
        let context = store.add_constrained(
            format!("{name}.att.context"),
            uniform(&[attention_width], limit, rng),
            max_norm,
            NormAxis::Rows,
        );
        CnnAttEncoder {
            bank,
            score_transform,
            context,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.bank.out_dim()
    }

    pub fn word_encode(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor) -> Result<Var> {
        self.bank.word_encode(g, store, x, mask)
    }

    /// `a = masked_softmax(vᵀ tanh(W e_i + b))`, `s = Σ_i a_i e_i`.
    pub fn attention_pool(&self, g: &mut Graph, store: &ParamStore, e: Var, mask: &Tensor) -> Result<Pooled> {
        let shape = g.shape(e).to_vec();
        let (b, t) = (shape[0], shape[1]);
        let f = self.score_transform.forward(g, store, e)?;
        let f = g.tanh(f)?;
        let width = self.score_transform.out_dim;
        let f = g.reshape(f, &[b * t, width])?;
        let v = g.param(store, self.context);
        let v = g.reshape(v, &[width, 1])?;
        let scores = g.matmul(f, v)?;
        let scores = g.reshape(scores, &[b, t])?;
        let weights = g.masked_softmax(scores, Some(mask))?;
        let sentence = g.weighted_sum(weights, e)?;
        Ok(Pooled { weights, sentence })
    }

    pub fn encode(&self, g: &mut Graph, store: &ParamStore, x: Var, mask: &Tensor) -> Result<Pooled> {
        let e = self.word_encode(g, store, x, mask)?;
        self.attention_pool(g, store, e, mask)
    }
}
