use super::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which axis indexes output units for the max-norm constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormAxis {
    /// `[units × fan_in]` matrices (linear layers).
    Rows,
    /// Units along the last axis (convolution kernels `[h × d_in × d_out]`).
    Last,
}

#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub max_norm: Option<(f64, NormAxis)>,
    pub trainable: bool,
}

impl Parameter {
    /// Applies the max-norm bound, if any.
    pub fn project(&mut self) {
        match self.max_norm {
            Some((bound, NormAxis::Rows)) => max_norm_project(&mut self.value, bound),
            Some((bound, NormAxis::Last)) => max_norm_project_columns(&mut self.value, bound),
            None => {}
        }
    }
}

/// Named collection of trainable tensors owned by one model.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
            max_norm: None,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    /// Adds a weight tensor under a max-norm constraint.
    pub fn add_constrained(
        &mut self,
        name: impl Into<String>,
        value: Tensor,
        bound: Option<f64>,
        axis: NormAxis,
    ) -> ParamId {
        let id = self.add(name, value);
        self.params[id.0].max_norm = bound.map(|b| (b, axis));
        id
    }

    pub fn add_frozen(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let id = self.add(name, value);
        self.params[id.0].trainable = false;
        id
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }
}

// Relative slack keeps a second projection from nudging rows that sit on the
// boundary up to rounding.
fn exceeds(norm: f64, bound: f64) -> bool {
    norm > bound * (1.0 + 1e-9)
}

/// Rescales every row whose L2 norm exceeds `bound` onto the ball of radius
/// `bound`. Vectors are treated as a single row.
pub fn max_norm_project(t: &mut Tensor, bound: f64) {
    let rows = if t.rank() <= 1 { 1 } else { t.shape()[0] };
    if rows == 0 {
        return;
    }
    let width = t.len() / rows;
    for row in t.data_mut().chunks_mut(width.max(1)) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if exceeds(norm, bound) {
            let s = bound / norm;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Same as [`max_norm_project`] with units along the last axis.
pub fn max_norm_project_columns(t: &mut Tensor, bound: f64) {
    let cols = t.last_dim();
    if cols == 0 {
        return;
    }
    let rows = t.len() / cols;
    let data = t.data_mut();
    for c in 0..cols {
        let norm = (0..rows).map(|r| data[r * cols + c].powi(2)).sum::<f64>().sqrt();
        if exceeds(norm, bound) {
            let s = bound / norm;
            for r in 0..rows {
                data[r * cols + c] *= s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row_norms(t: &Tensor) -> Vec<f64> {
        let w = t.last_dim();
        t.data().chunks(w).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    #[test]
    fn short_rows_untouched() {
        let mut t = Tensor::matrix(&[vec![0.6, 0.8]]);
        max_norm_project(&mut t, 3.0);
        assert_eq!(t.data(), &[0.6, 0.8]);
    }

    #[test]
    fn long_row_rescaled_proportionally() {
        let mut t = Tensor::matrix(&[vec![6.0, 8.0], vec![1.0, 0.0]]);
        max_norm_project(&mut t, 3.0);
        assert!((t.data()[0] - 1.8).abs() < 1e-12);
        assert!((t.data()[1] - 2.4).abs() < 1e-12);
        assert_eq!(&t.data()[2..], &[1.0, 0.0]);
    }

    #[test]
    fn columns_variant() {
        let mut t = Tensor::matrix(&[vec![6.0, 1.0], vec![8.0, 0.0]]);
        max_norm_project_columns(&mut t, 3.0);
        assert!((t.data()[0] - 1.8).abs() < 1e-12);
        assert!((t.data()[2] - 2.4).abs() < 1e-12);
        assert_eq!(t.data()[1], 1.0);
    }

    proptest! {
        #[test]
        fn projection_bounds_and_idempotent(
            data in proptest::collection::vec(-20.0f64..20.0, 12)
        ) {
            let mut t = Tensor::new(vec![4, 3], data).unwrap();
            max_norm_project(&mut t, 3.0);
            for n in row_norms(&t) {
                prop_assert!(n <= 3.0 + 1e-6);
            }
            let once = t.clone();
            max_norm_project(&mut t, 3.0);
            prop_assert_eq!(once, t);
        }
    }
}
