//! A small deterministic neural stack: dense and LSTM layers with hand-written
//! backward passes, dropout and Adam, composed into an LSTM encoder-decoder
//! regressor (evidential or Gaussian head) and feed-forward evidential
//! classifiers.

mod adam;
mod checkpoint;
mod classifier;
mod layers;
mod regressor;
mod train;
mod weights;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use classifier::{Classifier, ClassifierSpec, EvidenceActivation};
pub use layers::{dropout_mask, lstm_cell_step, sigmoid, softplus, Dense, Lstm, LstmStep};
pub use regressor::{GaussianOutput, McPrediction, Regressor, RegressorHead, RegressorSpec, POSITIVE_FLOOR};
pub use train::{train, EpochStats, TrainConfig, TrainOutcome};
pub use weights::{Gradients, ParamId, Tensor, WeightStore};

use crate::evidential::SquaredErrorForm;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Regressor(RegressorSpec),
    Classifier(ClassifierSpec),
}

impl ModelSpec {
    /// `key=value` lines identifying the architecture.
    pub fn descriptor(&self) -> String {
        let mut s = String::new();
        match self {
            ModelSpec::Regressor(r) => {
                let head = match r.head {
                    RegressorHead::Evidential => "evidential",
                    RegressorHead::Gaussian => "gaussian",
                };
                let _ = write!(
                    s,
                    "model=regressor\nn_in={}\nhidden={}\nlayers={}\ndropout={}\nt_in={}\nl_out={}\nn_out={}\nhead={head}\n",
                    r.n_in, r.hidden, r.layers, r.dropout, r.t_in, r.l_out, r.n_out
                );
            }
            ModelSpec::Classifier(c) => {
                let hidden: Vec<String> = c.hidden.iter().map(usize::to_string).collect();
                let act = match c.activation {
                    EvidenceActivation::Relu => "relu",
                    EvidenceActivation::Softplus => "softplus",
                };
                let form = match c.loss_form {
                    SquaredErrorForm::Expected => "expected",
                    SquaredErrorForm::Plain => "plain",
                };
                let _ = write!(
                    s,
                    "model=classifier\nt_in={}\nn_in={}\nhidden={}\nclasses={}\nactivation={act}\nloss={form}\n",
                    c.t_in,
                    c.n_in,
                    hidden.join(","),
                    c.classes
                );
            }
        }
        s
    }

    /// Parses a descriptor; unknown keys are ignored so extra metadata can
    /// ride along.
    pub fn from_descriptor(text: &str) -> Result<Self> {
        let kv: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Checkpoint(format!("descriptor lacks {k:?}")));
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("descriptor field {k:?} is not an integer")))
        };
        let spec = match get("model")? {
            "regressor" => ModelSpec::Regressor(RegressorSpec {
                n_in: num("n_in")?,
                hidden: num("hidden")?,
                layers: num("layers")?,
                dropout: get("dropout")?
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad dropout".into()))?,
                t_in: num("t_in")?,
                l_out: num("l_out")?,
                n_out: num("n_out")?,
                head: match get("head")? {
                    "evidential" => RegressorHead::Evidential,
                    "gaussian" => RegressorHead::Gaussian,
                    other => return Err(Error::Checkpoint(format!("unknown head {other:?}"))),
                },
            }),
            "classifier" => {
                let hidden = get("hidden")?;
                let hidden = if hidden.is_empty() {
                    Vec::new()
                } else {
                    hidden
                        .split(',')
                        .map(|h| h.parse().map_err(|_| Error::Checkpoint(format!("bad hidden width {h:?}"))))
                        .collect::<Result<_>>()?
                };
                ModelSpec::Classifier(ClassifierSpec {
                    t_in: num("t_in")?,
                    n_in: num("n_in")?,
                    hidden,
                    classes: num("classes")?,
                    activation: match get("activation")? {
                        "relu" => EvidenceActivation::Relu,
                        "softplus" => EvidenceActivation::Softplus,
                        other => return Err(Error::Checkpoint(format!("unknown activation {other:?}"))),
                    },
                    loss_form: match get("loss")? {
                        "expected" => SquaredErrorForm::Expected,
                        "plain" => SquaredErrorForm::Plain,
                        other => return Err(Error::Checkpoint(format!("unknown loss form {other:?}"))),
                    },
                })
            }
            other => return Err(Error::Checkpoint(format!("unknown model kind {other:?}"))),
        };
        Ok(spec)
    }
}

/// Either network, so training and checkpointing can treat them alike.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Regressor(Regressor),
    Classifier(Classifier),
}

impl Model {
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<(Self, WeightStore)> {
        Ok(match spec {
            ModelSpec::Regressor(s) => {
                let (m, w) = Regressor::init(s.clone(), seed)?;
                (Model::Regressor(m), w)
            }
            ModelSpec::Classifier(s) => {
                let (m, w) = Classifier::init(s.clone(), seed)?;
                (Model::Classifier(m), w)
            }
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Regressor(r) => ModelSpec::Regressor(r.spec().clone()),
            Model::Classifier(c) => ModelSpec::Classifier(c.spec().clone()),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Model::Regressor(r) => r.spec().input_len(),
            Model::Classifier(c) => c.spec().input_len(),
        }
    }

    fn uses_dropout(&self) -> bool {
        matches!(self, Model::Regressor(r) if r.spec().dropout > 0.0)
    }

    /// Training loss of one sample; `dropout` is ignored by classifiers.
    pub fn sample_loss(
        &self,
        w: &WeightStore,
        input: &[f64],
        target: &[f64],
        lambda: f64,
        dropout: Option<&mut ChaCha8Rng>,
        grads: Option<&mut Gradients>,
    ) -> Result<f64> {
        match self {
            Model::Regressor(r) => r.sample_loss(w, input, target, lambda, dropout, grads),
            Model::Classifier(c) => c.sample_loss(w, input, target, grads),
        }
    }
}
