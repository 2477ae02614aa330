use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter<R> {
    pub name: String,
    pub value: Tensor<R>,
    pub grad: Tensor<R>,
}

/// Owns every learned tensor of a model together with its gradient accumulator.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<R> {
    params: Vec<Parameter<R>>,
}

impl<R: Real> ParamStore<R> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<R>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter<R> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<R> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<R> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<R> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<R> {
        &self.params[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<R>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<R>> {
        self.params.iter_mut()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(R::zero());
        }
    }

    pub fn fill_values(&mut self, value: R) {
        for p in &mut self.params {
            p.value.fill(value);
        }
    }

    /// Adds a gradient buffer produced by a backward pass into the accumulators.
    pub fn accumulate(&mut self, grads: &Gradients<R>) {
        for (i, g) in grads.buffers.iter().enumerate() {
            if let Some(g) = g {
                for (acc, &x) in self.params[i].grad.data_mut().iter_mut().zip(g) {
                    *acc += x;
                }
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .map(|p| p.grad.norm_sq())
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: R) {
        for p in &mut self.params {
            p.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
        }
    }

    /// Copies parameter values from `other` (same layout) without touching gradients.
    pub fn copy_values_from(&mut self, other: &ParamStore<R>) {
        assert_eq!(self.params.len(), other.params.len());
        for (dst, src) in self.params.iter_mut().zip(&other.params) {
            dst.value.data_mut().copy_from_slice(src.value.data());
        }
    }

    pub fn cast<S: Real>(&self) -> ParamStore<S> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
        }
    }

    pub fn values_equal(&self, other: &ParamStore<R>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.value == b.value)
    }
}

/// Per-parameter gradient buffers written by [`Tape::backward`](super::Tape::backward).
/// Buffers are allocated lazily, so parameters never reached stay `None`.
#[derive(Clone, Debug)]
pub struct Gradients<R> {
    buffers: Vec<Option<Vec<R>>>,
}

impl<R: Real> Gradients<R> {
    pub fn for_store(store: &ParamStore<R>) -> Self {
        Self {
            buffers: vec![None; store.len()],
        }
    }

    pub(crate) fn buffer(&mut self, id: ParamId, len: usize) -> &mut [R] {
        if self.buffers.len() <= id.0 {
            self.buffers.resize(id.0 + 1, None);
        }
        self.buffers[id.0].get_or_insert_with(|| vec![R::zero(); len])
    }

    pub fn get(&self, id: ParamId) -> Option<&[R]> {
        self.buffers.get(id.0).and_then(|b| b.as_deref())
    }

    pub fn clear(&mut self) {
        self.buffers.iter_mut().for_each(|b| *b = None);
    }
}
