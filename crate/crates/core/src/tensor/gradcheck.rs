//! Central finite-difference verification of analytic gradients.

use super::{Graph, ParamId, ParamStore, Precision, RngStream, Var};
use crate::error::{Error, Result};

/// Outcome of a gradient check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub max_rel_error: f64,
    pub coordinates: usize,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
}

/// `|a-n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn eval_loss<F>(build: &mut F, store: &ParamStore) -> Result<f64>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new(Precision::F64);
    let root = build(&mut g, store)?;
    let v = g.value(root).item();
    if !v.is_finite() {
        return Err(Error::NonFinite("gradient-check loss".into()));
    }
    Ok(v)
}

/// Compares the tape's gradients of the scalar built by `build` against
/// `(f(θ+ε) - f(θ-ε)) / 2ε` on up to `samples` randomly chosen trainable
/// coordinates (all of them when there are fewer). The graph is always built
/// in 64-bit mode; `build` must be deterministic.
pub fn gradient_check<F>(build: F, store: &mut ParamStore, eps: f64, samples: usize, rng: &mut RngStream) -> Result<CheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let build = std::cell::RefCell::new(build);
    gradient_check_against(
        |g, s| (build.borrow_mut())(g, s),
        |g, s, _| (build.borrow_mut())(g, s),
        store,
        eps,
        samples,
        rng,
    )
}

/// Like [`gradient_check`], but the numeric derivative of a coordinate is
/// taken from `reference(graph, store, parameter_name)`. Graphs whose
/// backward pass deliberately differs from the derivative of their forward
/// pass (gradient reversal) are checked against the objective they imply.
pub fn gradient_check_against<F, R>(
    mut build: F,
    mut reference: R,
    store: &mut ParamStore,
    eps: f64,
    samples: usize,
    rng: &mut RngStream,
) -> Result<CheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
    R: FnMut(&mut Graph, &ParamStore, &str) -> Result<Var>,
{
    store.zero_grads();
    {
        let mut g = Graph::new(Precision::F64);
        let root = build(&mut g, store)?;
        if !g.value(root).item().is_finite() {
            return Err(Error::NonFinite("gradient-check loss".into()));
        }
        g.backward(root, store)?;
    }

    let mut coords: Vec<(ParamId, usize)> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .flat_map(|(id, p)| (0..p.value.len()).map(move |i| (id, i)))
        .collect();
    if coords.len() > samples {
        rng.shuffle(&mut coords);
        coords.truncate(samples);
    }

    let mut report = CheckReport {
        max_rel_error: 0.0,
        coordinates: coords.len(),
        worst: None,
    };
    for (id, i) in coords {
        let analytic = store.grad(id).data()[i];
        let original = store.value(id).data()[i];
        let name = store.get(id).name.clone();
        let mut f = |g: &mut Graph, s: &ParamStore| reference(g, s, &name);
        store.get_mut(id).value.data_mut()[i] = original + eps;
        let plus = eval_loss(&mut f, store);
        store.get_mut(id).value.data_mut()[i] = original - eps;
        let minus = eval_loss(&mut f, store);
        store.get_mut(id).value.data_mut()[i] = original;
        let numeric = (plus? - minus?) / (2.0 * eps);
        let err = relative_error(analytic, numeric);
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((name, i));
        }
    }
    Ok(report)
}
