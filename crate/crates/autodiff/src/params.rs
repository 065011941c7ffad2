use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Float, Matrix, Result, Tape};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Initialization scheme for a new parameter.
#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    /// Uniform in `[-a, a]`.
    Uniform(f64),
    /// Glorot uniform over `[rows, cols]`.
    Xavier,
}

#[derive(Clone, Debug)]
struct Param<F> {
    name: String,
    value: Matrix<F>,
    grad: Matrix<F>,
    trainable: bool,
}

/// Named, ordered collection of trainable matrices and their gradients.
#[derive(Clone, Debug)]
pub struct ParamStore<F> {
    params: Vec<Param<F>>,
    by_name: HashMap<String, ParamId>,
    rng: ChaCha8Rng,
}

impl<F: Float> ParamStore<F> {
    pub fn new(seed: u64) -> Self {
        Self {
            params: Vec::new(),
            by_name: HashMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Registers a parameter; names must be unique.
    pub fn add(&mut self, name: impl Into<String>, shape: (usize, usize), init: Init) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name {name}"
        );
        let bound = match init {
            Init::Zeros | Init::Ones => 0.0,
            Init::Uniform(a) => a,
            Init::Xavier => (6.0 / (shape.0 + shape.1) as f64).sqrt(),
        };
        let value = match init {
            Init::Zeros => Matrix::zeros(shape),
            Init::Ones => Matrix::ones(shape),
            Init::Uniform(_) | Init::Xavier => Matrix::from_shape_simple_fn(shape, || {
                F::from_f64(self.rng.random_range(-bound..=bound))
            }),
        };
        let id = ParamId(self.params.len());
        self.params.push(Param {
            name: name.clone(),
            grad: Matrix::zeros(shape),
            value,
            trainable: true,
        });
        self.by_name.insert(name, id);
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar entries.
    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Matrix<F> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Matrix<F> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Matrix<F> {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Matrix<F> {
        &mut self.params[id.0].grad
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(F::zero());
        }
    }

    /// Adds the gradients collected by `tape` into the stored buffers.
    pub fn accumulate(&mut self, tape: &Tape<F>) {
        for (id, g) in tape.param_grads() {
            self.params[id.0].grad += &g;
        }
    }

    /// Global L2 norm of all gradients.
    pub fn grad_norm(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter())
            .map(|g| g.to_f64() * g.to_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Replaces a value by name, checking the shape.
    pub fn set(&mut self, name: &str, value: Matrix<F>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name}")))?;
        let p = &mut self.params[id.0];
        if p.value.dim() != value.dim() {
            return Err(Error::ShapeMismatch {
                op: "set",
                lhs: p.value.shape().to_vec(),
                rhs: value.shape().to_vec(),
            });
        }
        p.value = value;
        Ok(())
    }

    /// Sets every value to zero.
    pub fn zero_values(&mut self) {
        for p in &mut self.params {
            p.value.fill(F::zero());
        }
    }
}
