use rand::Rng;

use crate::{Error, Result};

/// Handle to one array inside a [`WeightStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Named real arrays, row-major, with fixed shapes. Values may change during
/// training; names and shapes never do once added.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightStore {
    tensors: Vec<Tensor>,
    seed: u64,
}

impl WeightStore {
    pub fn new(seed: u64) -> Self {
        Self {
            tensors: Vec::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, shape: &[usize], data: Vec<f64>) -> Result<ParamId> {
        if self.id(name).is_some() {
            return Err(Error::Shape(format!("duplicate weight name {name:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::Shape(format!(
                "{name}: shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        self.tensors.push(Tensor {
            name: name.to_string(),
            shape: shape.to_vec(),
            data,
        });
        Ok(ParamId(self.tensors.len() - 1))
    }

    /// Adds an array drawn from U(-bound, bound).
    pub fn add_uniform<R: Rng>(&mut self, rng: &mut R, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add(name, shape, data)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.tensors[id.0].data
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.tensors[id.0].data
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients {
            data: self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect(),
        }
    }

    /// Copies values from `other`, which must hold the same names and shapes
    /// in the same order.
    pub fn load_values(&mut self, other: &WeightStore) -> Result<()> {
        if self.tensors.len() != other.tensors.len() {
            return Err(Error::Shape(format!(
                "expected {} arrays, found {}",
                self.tensors.len(),
                other.tensors.len()
            )));
        }
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Shape(format!(
                    "expected {} {:?}, found {} {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.copy_from_slice(&b.data);
        }
        Ok(())
    }
}

/// Gradient buffers laid out like the store they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub data: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.data[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.data[id.0]
    }

    pub fn fill_zero(&mut self) {
        for g in &mut self.data {
            g.fill(0.0);
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    /// First array/index holding a non-finite value.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .enumerate()
            .find_map(|(t, g)| g.iter().position(|v| !v.is_finite()).map(|i| (t, i)))
    }
}
