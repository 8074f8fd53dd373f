use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::tensor::{shape_str, Matrix};
use crate::error::{Error, Result};

/// Index of a parameter tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
    pub(crate) m: Matrix,
    pub(crate) v: Matrix,
}

/// Named parameter tensors with parallel gradient and Adam moment slots.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    pub(crate) step: u64,
}

/// Gradients for every parameter of a store, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Matrix>);

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients(
            store
                .params
                .iter()
                .map(|p| Matrix::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        )
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.0[id.0]
    }

    pub fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_scaled(b, scale);
        }
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        debug_assert!(self.lookup(&name).is_none(), "duplicate parameter name {name}");
        let (r, c) = value.shape();
        self.params.push(Param {
            name,
            grad: Matrix::zeros(r, c),
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform Glorot initialisation for a `rows × cols` weight.
    pub fn add_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data).expect("sized"))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix {
        &self.params[id.0].grad
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    /// Replaces a parameter's value, keeping its shape.
    pub fn set_value(&mut self, id: ParamId, value: Matrix) -> Result<()> {
        let p = &mut self.params[id.0];
        if !p.value.same_shape(&value) {
            return Err(Error::shape(
                "ParamStore::set_value",
                shape_str(&p.value),
                shape_str(&value),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn set_grads(&mut self, grads: &Gradients) -> Result<()> {
        if grads.0.len() != self.params.len() {
            return Err(Error::shape("ParamStore::set_grads", self.params.len(), grads.0.len()));
        }
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            if !p.grad.same_shape(g) {
                return Err(Error::shape("ParamStore::set_grads", shape_str(&p.grad), shape_str(g)));
            }
            p.grad.as_mut_slice().copy_from_slice(g.as_slice());
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub(crate) fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    /// Flat copy of every parameter value, in store order.
    pub fn flatten(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.as_slice().iter().copied())
            .collect()
    }
}
