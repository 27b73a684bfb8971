use crate::error::Result;
use crate::tensor::{Graph, NormAxis, ParamId, ParamStore, RngStream, Tensor, Var};

/// Glorot-uniform initialized tensor.
pub fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    uniform(shape, limit, rng)
}

pub fn uniform(shape: &[usize], limit: f64, rng: &mut RngStream) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.uniform(-limit, limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}

/// Affine map with weights stored `[out × in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        max_norm: Option<f64>,
        rng: &mut RngStream,
    ) -> Self {
        let weight = store.add_constrained(
            format!("{name}.weight"),
            glorot(&[out_dim, in_dim], in_dim, out_dim, rng),
            max_norm,
            NormAxis::Rows,
        );
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]));
        Linear {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    /// Applies the map to the last axis of `x` (any rank ≥ 1).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = g.shape(x).to_vec();
        let rows = shape[..shape.len() - 1].iter().product::<usize>();
        let flat = if shape.len() == 2 {
            x
        } else {
            g.reshape(x, &[rows, self.in_dim])?
        };
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul_nt(flat, w)?;
        let y = g.add_bias(y, b)?;
        if shape.len() == 2 {
            Ok(y)
        } else {
            let mut out = shape;
            *out.last_mut().expect("rank ≥ 1") = self.out_dim;
            g.reshape(y, &out)
        }
    }
}
