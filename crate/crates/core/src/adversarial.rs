//! Suggestion and domain classifier heads and the joint objective.

use crate::encoders::Linear;
use crate::error::{Error, Result};
use crate::tensor::{Graph, Mode, ParamStore, RngStream, Var};

/// `in -> hidden -> hidden -> classes` with tanh hidden activations,
/// dropout before every affine map, softmax output.
#[derive(Debug, Clone)]
pub struct MlpHead {
    pub layers: Vec<Linear>,
}

impl MlpHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        hidden: usize,
        classes: usize,
        max_norm: Option<f64>,
        rng: &mut RngStream,
    ) -> Self {
        let dims = [in_dim, hidden, hidden, classes];
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], max_norm, rng))
            .collect();
        MlpHead { layers }
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    /// Class distribution `[B×classes]` for `x: [B×in]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        dropout: f64,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<Var> {
        let width = g.shape(x).last().copied().unwrap_or(0);
        if g.shape(x).len() != 2 || width != self.in_dim() {
            return Err(Error::shape("mlp head", g.shape(x), &[self.in_dim()]));
        }
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            h = g.dropout(h, dropout, mode, rng)?;
            h = layer.forward(g, store, h)?;
            if i + 1 < self.layers.len() {
                h = g.tanh(h)?;
            }
        }
        g.masked_softmax(h, None)
    }
}

/// `p(y) = MLP_y(joint)`.
pub fn predict_suggestion(
    g: &mut Graph,
    store: &ParamStore,
    head: &MlpHead,
    joint: Var,
    dropout: f64,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<Var> {
    head.forward(g, store, joint, dropout, mode, rng)
}

/// `p(d) = MLP_d(GradRev(joint))`.
pub fn predict_domain(
    g: &mut Graph,
    store: &ParamStore,
    head: &MlpHead,
    joint: Var,
    dropout: f64,
    mode: Mode,
    rng: &mut RngStream,
) -> Result<Var> {
    let reversed = g.grad_reverse(joint)?;
    head.forward(g, store, reversed, dropout, mode, rng)
}

/// `CE(p_y, y) + λ·CE(p_d, d)`; either term may be absent.
pub fn combined_loss(
    g: &mut Graph,
    suggestion: Option<(Var, &[usize])>,
    domain: Option<(Var, &[usize])>,
    lambda: f64,
) -> Result<Var> {
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda must be a non-negative real, got {lambda}")));
    }
    let ce_y = suggestion.map(|(p, y)| g.cross_entropy(p, y)).transpose()?;
    let ce_d = match domain {
        Some((p, d)) => {
            let ce = g.cross_entropy(p, d)?;
            Some(g.scale(ce, lambda)?)
        }
        None => None,
    };
    match (ce_y, ce_d) {
        (Some(a), Some(b)) => g.add(a, b),
        (Some(a), None) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::Invalid("combined loss needs at least one term".into())),
    }
}

pub const DEFAULT_GAMMA: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub gamma: f64,
    pub total_epochs: usize,
}

impl LambdaSchedule {
    pub fn new(total_epochs: usize) -> Self {
        LambdaSchedule {
            gamma: DEFAULT_GAMMA,
            total_epochs,
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        lambda_at(epoch, self.total_epochs, self.gamma)
    }
}

/// `λ = 2/(1+exp(-γ·p)) - 1` with `p = epoch / max(total-1, 1)`.
pub fn lambda_at(epoch: usize, total_epochs: usize, gamma: f64) -> f64 {
    let p = epoch as f64 / total_epochs.saturating_sub(1).max(1) as f64;
    2.0 / (1.0 + (-gamma * p).exp()) - 1.0
}
