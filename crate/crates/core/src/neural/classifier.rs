use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::evidential::{classification_loss_unchecked, DirichletParams, SquaredErrorForm};
use crate::{Error, Result};

use super::layers::{sigmoid, softplus, Dense};
use super::weights::{Gradients, WeightStore};

/// Maps the output layer to non-negative evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvidenceActivation {
    #[default]
    Relu,
    Softplus,
}

impl EvidenceActivation {
    fn apply(self, z: f64) -> f64 {
        match self {
            EvidenceActivation::Relu => z.max(0.0),
            EvidenceActivation::Softplus => softplus(z),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            EvidenceActivation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            EvidenceActivation::Softplus => sigmoid(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub t_in: usize,
    pub n_in: usize,
    /// Widths of the ReLU hidden layers.
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub activation: EvidenceActivation,
    pub loss_form: SquaredErrorForm,
}

impl ClassifierSpec {
    pub fn new(t_in: usize, n_in: usize, hidden: Vec<usize>) -> Self {
        Self {
            t_in,
            n_in,
            hidden,
            classes: 2,
            activation: EvidenceActivation::Relu,
            loss_form: SquaredErrorForm::Expected,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.t_in == 0 || self.n_in == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!("classifier widths must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.t_in * self.n_in
    }
}

/// Feed-forward network emitting Dirichlet concentrations α = evidence + 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    spec: ClassifierSpec,
    hidden: Vec<Dense>,
    out: Dense,
}

impl Classifier {
    pub fn init(spec: ClassifierSpec, seed: u64) -> Result<(Self, WeightStore)> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new(seed);
        let mut hidden = Vec::with_capacity(spec.hidden.len());
        let mut width = spec.input_len();
        for (k, &h) in spec.hidden.iter().enumerate() {
            // He-uniform keeps ReLU activations from shrinking layer by layer
            let bound = (6.0 / width as f64).sqrt();
            hidden.push(Dense::with_bound(&mut store, &mut rng, &format!("hidden.{k}"), width, h, bound)?);
            width = h;
        }
        let bound = (6.0 / (width + spec.classes) as f64).sqrt();
        let out = Dense::with_bound(&mut store, &mut rng, "out", width, spec.classes, bound)?;
        Ok((Self { spec, hidden, out }, store))
    }

    pub fn spec(&self) -> &ClassifierSpec {
        &self.spec
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_len() {
            return Err(Error::Shape(format!(
                "classifier input has {} values, expected {}",
                input.len(),
                self.spec.input_len()
            )));
        }
        Ok(())
    }

    // activations entering each layer, plus the output pre-activation
    fn trace(&self, w: &WeightStore, input: &[f64]) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut acts = vec![input.to_vec()];
        for layer in &self.hidden {
            let z = layer.forward(w, acts.last().unwrap());
            acts.push(z.into_iter().map(|v| v.max(0.0)).collect());
        }
        let z = self.out.forward(w, acts.last().unwrap());
        (acts, z)
    }

    pub fn forward(&self, w: &WeightStore, input: &[f64]) -> Result<DirichletParams> {
        self.check_input(input)?;
        let (_, z) = self.trace(w, input);
        DirichletParams::new(z.iter().map(|&v| self.spec.activation.apply(v) + 1.0).collect())
    }

    /// Loss of one sample against a one-hot target; gradients accumulate
    /// into `grads` when given.
    pub fn sample_loss(&self, w: &WeightStore, input: &[f64], target: &[f64], grads: Option<&mut Gradients>) -> Result<f64> {
        self.check_input(input)?;
        if target.len() != self.spec.classes {
            return Err(Error::Shape(format!(
                "classifier target has {} values, expected {}",
                target.len(),
                self.spec.classes
            )));
        }
        let (acts, z) = self.trace(w, input);
        let alpha: Vec<f64> = z.iter().map(|&v| self.spec.activation.apply(v) + 1.0).collect();
        let (loss, d_alpha) = classification_loss_unchecked(target, &alpha, self.spec.loss_form);
        if let Some(grads) = grads {
            let dz: Vec<f64> = d_alpha
                .iter()
                .zip(&z)
                .map(|(g, &v)| g * self.spec.activation.derivative(v))
                .collect();
            let mut d = self.out.backward(w, acts.last().unwrap(), &dz, grads);
            for (k, layer) in self.hidden.iter().enumerate().rev() {
                // acts[k + 1] is the ReLU output of this layer
                for (dv, &a) in d.iter_mut().zip(&acts[k + 1]) {
                    if a <= 0.0 {
                        *dv = 0.0;
                    }
                }
                d = layer.backward(w, &acts[k], &d, grads);
            }
        }
        Ok(loss)
    }
}
