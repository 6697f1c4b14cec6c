use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::SampleSet;
use crate::{Error, Result};

use super::adam::{adam_step, AdamState};
use super::weights::WeightStore;
use super::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Evidence regularizer weight; only used by regressors.
    pub lambda: f64,
    pub seed: u64,
    /// Stop after this many epochs without a better validation loss;
    /// 0 disables early stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 64,
            epochs: 50,
            lambda: 0.01,
            seed: 0,
            patience: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || self.batch_size == 0 || self.epochs == 0 || !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("invalid training config: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-sample loss seen during the epoch's updates.
    pub train_loss: f64,
    /// Mean per-sample loss on the validation set, dropout off.
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss (training loss
    /// when there is no validation set).
    pub weights: WeightStore,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

fn check_set(model: &Model, set: &SampleSet, what: &str) -> Result<()> {
    let n = model.input_len();
    for (i, (x, y)) in set.inputs.iter().zip(&set.targets).enumerate() {
        if x.len() != n {
            return Err(Error::Shape(format!("{what} sample {i} has {} inputs, model expects {n}", x.len())));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Training(format!("{what} sample {i} contains a non-finite value")));
        }
    }
    Ok(())
}

fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Mean loss with dropout off.
pub fn evaluate(model: &Model, w: &WeightStore, set: &SampleSet, lambda: f64) -> Result<f64> {
    let mut total = 0.0;
    for (x, y) in set.inputs.iter().zip(&set.targets) {
        total += model.sample_loss(w, x, y, lambda, None, None)?;
    }
    Ok(total / set.len().max(1) as f64)
}

/// Mini-batch Adam on the mean per-sample loss. The run depends only on the
/// data, the model, its initial weights and `cfg`: shuffling and dropout
/// masks derive from `cfg.seed`, and per-sample gradients are summed in
/// sample order.
pub fn train(model: &Model, init: WeightStore, train_set: &SampleSet, val_set: &SampleSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    check_set(model, train_set, "training")?;
    check_set(model, val_set, "validation")?;

    let mut w = init;
    let mut adam = AdamState::new(&w);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grads = w.zero_grads();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, WeightStore)> = None;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            for &i in batch {
                let mut rng = model.uses_dropout().then(|| sample_rng(cfg.seed, epoch, i));
                epoch_loss += model.sample_loss(
                    &w,
                    &train_set.inputs[i],
                    &train_set.targets[i],
                    cfg.lambda,
                    rng.as_mut(),
                    Some(&mut grads),
                )?;
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads.data {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            adam_step(&mut w, &grads, &mut adam, cfg.lr)
                .map_err(|e| Error::Training(format!("epoch {epoch}: {e}")))?;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            None
        } else {
            Some(evaluate(model, &w, val_set, cfg.lambda)?)
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(Error::Training(format!("epoch {epoch}: loss became {score}")));
        }
        match &best {
            Some((b, _, _)) if score >= *b => {}
            _ => best = Some((score, epoch, w.clone())),
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if cfg.patience > 0 && epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, weights) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        weights,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{ClassifierSpec, ModelSpec, RegressorSpec};
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = SampleSet::new(2, 1);
        for i in 0..n {
            let a: f64 = rng.random_range(0.0..1.0);
            let b: f64 = rng.random_range(0.0..1.0);
            let y = if a + b > 1.0 { vec![0.0, 1.0] } else { vec![1.0, 0.0] };
            s.push(vec![a, b], y, i as u64);
        }
        s
    }

    fn classifier() -> (Model, WeightStore) {
        Model::init(&ModelSpec::Classifier(ClassifierSpec::new(2, 1, vec![8])), 4).unwrap()
    }

    #[test]
    fn classifier_loss_decreases_on_separable_data() {
        let (model, w) = classifier();
        let data = separable(200, 1);
        let cfg = TrainConfig {
            lr: 0.03,
            batch_size: 16,
            epochs: 30,
            patience: 0,
            ..Default::default()
        };
        let out = train(&model, w, &data, &SampleSet::new(2, 1), &cfg).unwrap();
        let losses: Vec<f64> = out.history.iter().map(|e| e.train_loss).collect();
        let smooth: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
        for pair in smooth.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9, "{smooth:?}");
        }
        assert!(losses.last().unwrap() < &(0.6 * losses[0]), "{losses:?}");
    }

    #[test]
    fn same_seed_same_weights() {
        let mut spec = RegressorSpec::new(3, 2);
        spec.hidden = 6;
        spec.t_in = 3;
        let spec = ModelSpec::Regressor(spec);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut data = SampleSet::new(3, 3);
        for i in 0..40 {
            let x = (0..9).map(|_| rng.random_range(0.0..1.0)).collect();
            let y = (0..2).map(|_| rng.random_range(0.0..1.0)).collect();
            data.push(x, y, i);
        }
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 8,
            seed: 5,
            ..Default::default()
        };
        let run = || {
            let (m, w) = Model::init(&spec, 1).unwrap();
            train(&m, w, &data, &data.subset(&[0, 1, 2]), &cfg).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn empty_training_set_is_rejected() {
        let (model, w) = classifier();
        let empty = SampleSet::new(2, 1);
        assert!(matches!(train(&model, w, &empty, &empty, &TrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn early_stopping_returns_best_epoch() {
        let (model, w) = classifier();
        let data = separable(50, 2);
        // validation labels flipped: validation loss rises as training fits
        let mut val = separable(50, 3);
        for y in &mut val.targets {
            y.reverse();
        }
        let cfg = TrainConfig {
            lr: 0.05,
            epochs: 40,
            patience: 3,
            batch_size: 10,
            ..Default::default()
        };
        let out = train(&model, w, &data, &val, &cfg).unwrap();
        assert!(out.history.len() < 40);
        let best = out.history.iter().map(|e| e.val_loss.unwrap()).fold(f64::INFINITY, f64::min);
        assert_eq!(out.history[out.best_epoch].val_loss.unwrap(), best);
        assert!((evaluate(&model, &out.weights, &val, 0.0).unwrap() - best).abs() < 1e-12);
    }
}
