use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::evidential::{regression_loss_unchecked, NigParams};
use crate::{Error, Result};

use super::layers::{dropout_mask, sigmoid, softplus, Dense, Lstm, LstmStep};
use super::weights::{Gradients, WeightStore};

/// Floor added to every softplus output so v, α-1, β and σ stay strictly
/// positive even when the raw activation underflows.
pub const POSITIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegressorHead {
    /// Normal-Inverse-Gamma parameters (x̂, v, α, β) per output feature.
    #[default]
    Evidential,
    /// Mean and standard deviation per output feature, trained with the
    /// Gaussian NLL. Used for MC-dropout.
    Gaussian,
}

impl RegressorHead {
    fn width(self) -> usize {
        match self {
            RegressorHead::Evidential => 4,
            RegressorHead::Gaussian => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressorSpec {
    pub n_in: usize,
    pub hidden: usize,
    /// LSTM layers in the encoder, and again in the decoder.
    pub layers: usize,
    pub dropout: f64,
    /// Input window length T.
    pub t_in: usize,
    /// Output length L.
    pub l_out: usize,
    /// Predicted features; they must be the first `n_out` input features.
    pub n_out: usize,
    pub head: RegressorHead,
}

impl RegressorSpec {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            hidden: 128,
            layers: 1,
            dropout: 0.1,
            t_in: 10,
            l_out: 1,
            n_out,
            head: RegressorHead::Evidential,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.hidden == 0 || self.layers == 0 || self.t_in == 0 || self.l_out == 0 || self.n_out == 0 {
            return Err(Error::Config(format!("regressor widths and lengths must be positive: {self:?}")));
        }
        if self.n_out > self.n_in {
            return Err(Error::Config(format!(
                "n_out={} exceeds n_in={}: targets must be a prefix of the input features",
                self.n_out, self.n_in
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.t_in * self.n_in
    }

    pub fn target_len(&self) -> usize {
        self.l_out * self.n_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOutput {
    pub mean: f64,
    pub var: f64,
}

/// Per-feature MC-dropout summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McPrediction {
    pub mean: f64,
    /// Mean of the per-pass σ².
    pub aleatoric: f64,
    /// Variance of the per-pass means.
    pub epistemic: f64,
}

/// LSTM encoder-decoder with an evidential or Gaussian output head.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressor {
    spec: RegressorSpec,
    encoder: Vec<Lstm>,
    decoder: Vec<Lstm>,
    head: Dense,
}

struct Trace {
    enc: Vec<Vec<LstmStep>>,
    dec: Vec<Vec<LstmStep>>,
    enc_masks: Vec<Vec<f64>>,
    dec_masks: Vec<Vec<f64>>,
    head_in: Vec<Vec<f64>>,
    raw: Vec<Vec<f64>>,
}

impl Regressor {
    /// Builds the network and draws fresh weights from `seed`.
    pub fn init(spec: RegressorSpec, seed: u64) -> Result<(Self, WeightStore)> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = WeightStore::new(seed);
        let h = spec.hidden;
        let mut encoder = Vec::with_capacity(spec.layers);
        for k in 0..spec.layers {
            let n_in = if k == 0 { spec.n_in } else { h };
            encoder.push(Lstm::new(&mut store, &mut rng, &format!("encoder.{k}"), n_in, h)?);
        }
        let mut decoder = Vec::with_capacity(spec.layers);
        for k in 0..spec.layers {
            let n_in = if k == 0 { spec.n_out } else { h };
            decoder.push(Lstm::new(&mut store, &mut rng, &format!("decoder.{k}"), n_in, h)?);
        }
        let head = Dense::new(&mut store, &mut rng, "head", h, spec.n_out * spec.head.width())?;
        Ok((
            Self {
                spec,
                encoder,
                decoder,
                head,
            },
            store,
        ))
    }

    pub fn spec(&self) -> &RegressorSpec {
        &self.spec
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.spec.input_len() {
            return Err(Error::Shape(format!(
                "regressor input has {} values, expected T·n_in = {}",
                input.len(),
                self.spec.input_len()
            )));
        }
        Ok(())
    }

    fn trace(&self, w: &WeightStore, input: &[f64], target: Option<&[f64]>, mut rng: Option<&mut ChaCha8Rng>) -> Trace {
        let s = &self.spec;
        let h = s.hidden;
        let nl = s.layers;
        let rate = if rng.is_some() { s.dropout } else { 0.0 };
        let mut mask = |n: usize| match rng.as_deref_mut() {
            Some(r) => dropout_mask(r, n, rate),
            None => vec![1.0; n],
        };

        let mut state: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; h], vec![0.0; h]); nl];
        let mut enc: Vec<Vec<LstmStep>> = vec![Vec::with_capacity(s.t_in); nl];
        for t in 0..s.t_in {
            let mut x = input[t * s.n_in..(t + 1) * s.n_in].to_vec();
            for k in 0..nl {
                let step = self.encoder[k].step(w, &x, &state[k].0, &state[k].1);
                state[k] = (step.h.clone(), step.c.clone());
                x = step.h.clone();
                enc[k].push(step);
            }
        }
        let enc_masks: Vec<Vec<f64>> = (0..nl).map(|_| mask(h)).collect();
        for (st, m) in state.iter_mut().zip(&enc_masks) {
            for (v, mv) in st.0.iter_mut().zip(m) {
                *v *= mv;
            }
        }

        let width = s.head.width();
        let last = (s.t_in - 1) * s.n_in;
        let mut feed = input[last..last + s.n_out].to_vec();
        let mut dec: Vec<Vec<LstmStep>> = vec![Vec::with_capacity(s.l_out); nl];
        let mut dec_masks = Vec::with_capacity(s.l_out);
        let mut head_in = Vec::with_capacity(s.l_out);
        let mut raw = Vec::with_capacity(s.l_out);
        for l in 0..s.l_out {
            let mut x = feed.clone();
            for k in 0..nl {
                let step = self.decoder[k].step(w, &x, &state[k].0, &state[k].1);
                state[k] = (step.h.clone(), step.c.clone());
                x = step.h.clone();
                dec[k].push(step);
            }
            let m = mask(h);
            let hin: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a * b).collect();
            let r = self.head.forward(w, &hin);
            feed = match target {
                Some(y) => y[l * s.n_out..(l + 1) * s.n_out].to_vec(),
                None => (0..s.n_out).map(|d| r[d * width]).collect(),
            };
            dec_masks.push(m);
            head_in.push(hin);
            raw.push(r);
        }
        Trace {
            enc,
            dec,
            enc_masks,
            dec_masks,
            head_in,
            raw,
        }
    }

    fn backward(&self, w: &WeightStore, tr: &Trace, d_raw: &[Vec<f64>], grads: &mut Gradients) {
        let s = &self.spec;
        let h = s.hidden;
        let nl = s.layers;
        let mut dh_next = vec![vec![0.0; h]; nl];
        let mut dc_next = vec![vec![0.0; h]; nl];
        for l in (0..s.l_out).rev() {
            let dhin = self.head.backward(w, &tr.head_in[l], &d_raw[l], grads);
            let mut from_above: Vec<f64> = dhin.iter().zip(&tr.dec_masks[l]).map(|(a, b)| a * b).collect();
            for k in (0..nl).rev() {
                let dh: Vec<f64> = from_above.iter().zip(&dh_next[k]).map(|(a, b)| a + b).collect();
                let (dx, dhp, dcp) = self.decoder[k].step_backward(w, &tr.dec[k][l], &dh, &dc_next[k], grads);
                dh_next[k] = dhp;
                dc_next[k] = dcp;
                from_above = dx;
            }
        }
        for (d, m) in dh_next.iter_mut().zip(&tr.enc_masks) {
            for (a, b) in d.iter_mut().zip(m) {
                *a *= b;
            }
        }
        for t in (0..s.t_in).rev() {
            let mut from_above = vec![0.0; h];
            for k in (0..nl).rev() {
                let dh: Vec<f64> = from_above.iter().zip(&dh_next[k]).map(|(a, b)| a + b).collect();
                let (dx, dhp, dcp) = self.encoder[k].step_backward(w, &tr.enc[k][t], &dh, &dc_next[k], grads);
                dh_next[k] = dhp;
                dc_next[k] = dcp;
                from_above = dx;
            }
        }
    }

    /// Evidential forward pass; `dropout` enables training-mode dropout.
    /// Returns L rows of `n_out` parameter sets.
    pub fn forward_nig(&self, w: &WeightStore, input: &[f64], dropout: Option<&mut ChaCha8Rng>) -> Result<Vec<Vec<NigParams>>> {
        if self.spec.head != RegressorHead::Evidential {
            return Err(Error::Config("forward_nig needs an evidential head".into()));
        }
        self.check_input(input)?;
        let tr = self.trace(w, input, None, dropout);
        Ok(tr.raw.iter().map(|r| r.chunks(4).map(nig_from_raw).collect()).collect())
    }

    /// Gaussian-head forward pass; returns L rows of `n_out` (mean, σ²).
    pub fn forward_gaussian(
        &self,
        w: &WeightStore,
        input: &[f64],
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Vec<Vec<GaussianOutput>>> {
        if self.spec.head != RegressorHead::Gaussian {
            return Err(Error::Config("forward_gaussian needs a Gaussian head".into()));
        }
        self.check_input(input)?;
        let tr = self.trace(w, input, None, dropout);
        Ok(tr
            .raw
            .iter()
            .map(|r| {
                r.chunks(2)
                    .map(|c| {
                        let sigma = softplus(c[1]) + POSITIVE_FLOOR;
                        GaussianOutput {
                            mean: c[0],
                            var: sigma * sigma,
                        }
                    })
                    .collect()
            })
            .collect())
    }

    /// Loss of one sample (summed over the L steps and output features) with
    /// teacher forcing. Gradients are accumulated into `grads` when given.
    pub fn sample_loss(
        &self,
        w: &WeightStore,
        input: &[f64],
        target: &[f64],
        lambda: f64,
        dropout: Option<&mut ChaCha8Rng>,
        grads: Option<&mut Gradients>,
    ) -> Result<f64> {
        self.check_input(input)?;
        if target.len() != self.spec.target_len() {
            return Err(Error::Shape(format!(
                "regressor target has {} values, expected L·n_out = {}",
                target.len(),
                self.spec.target_len()
            )));
        }
        let tr = self.trace(w, input, Some(target), dropout);
        let n_out = self.spec.n_out;
        let mut total = 0.0;
        let mut d_raw = Vec::with_capacity(self.spec.l_out);
        for (l, r) in tr.raw.iter().enumerate() {
            let mut dr = vec![0.0; r.len()];
            for d in 0..n_out {
                let y = target[l * n_out + d];
                match self.spec.head {
                    RegressorHead::Evidential => {
                        let c = &r[4 * d..4 * d + 4];
                        let (loss, g) = regression_loss_unchecked(y, &nig_from_raw(c), lambda);
                        total += loss;
                        dr[4 * d] = g.x_hat;
                        dr[4 * d + 1] = g.v * sigmoid(c[1]);
                        dr[4 * d + 2] = g.alpha * sigmoid(c[2]);
                        dr[4 * d + 3] = g.beta * sigmoid(c[3]);
                    }
                    RegressorHead::Gaussian => {
                        let (mu, raw_s) = (r[2 * d], r[2 * d + 1]);
                        let sigma = softplus(raw_s) + POSITIVE_FLOOR;
                        let e = y - mu;
                        total += 0.5 * (2.0 * std::f64::consts::PI).ln() + sigma.ln() + e * e / (2.0 * sigma * sigma);
                        dr[2 * d] = -e / (sigma * sigma);
                        dr[2 * d + 1] = (1.0 / sigma - e * e / (sigma * sigma * sigma)) * sigmoid(raw_s);
                    }
                }
            }
            d_raw.push(dr);
        }
        if let Some(g) = grads {
            self.backward(w, &tr, &d_raw, g);
        }
        Ok(total)
    }

    /// Runs `passes` forward passes with independent dropout masks and
    /// summarizes each output feature.
    pub fn mc_dropout_predict(&self, w: &WeightStore, input: &[f64], passes: usize, seed: u64) -> Result<Vec<Vec<McPrediction>>> {
        if passes < 2 {
            return Err(Error::Config(format!("MC dropout needs at least 2 passes, got {passes}")));
        }
        let (l_out, n_out) = (self.spec.l_out, self.spec.n_out);
        let mut shift = Vec::new();
        let mut sum = vec![0.0; l_out * n_out];
        let mut sum_sq = vec![0.0; l_out * n_out];
        let mut var_sum = vec![0.0; l_out * n_out];
        for p in 0..passes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            let out = self.forward_gaussian(w, input, Some(&mut rng))?;
            if p == 0 {
                shift = out.iter().flatten().map(|o| o.mean).collect();
            }
            // deviations from the first pass keep the variance exact when
            // every pass agrees
            for (i, o) in out.iter().flatten().enumerate() {
                let d = o.mean - shift[i];
                sum[i] += d;
                sum_sq[i] += d * d;
                var_sum[i] += o.var;
            }
        }
        let n = passes as f64;
        let flat: Vec<McPrediction> = (0..l_out * n_out)
            .map(|i| {
                let d = sum[i] / n;
                McPrediction {
                    mean: shift[i] + d,
                    aleatoric: var_sum[i] / n,
                    epistemic: (sum_sq[i] / n - d * d).max(0.0),
                }
            })
            .collect();
        Ok(flat.chunks(n_out).map(<[_]>::to_vec).collect())
    }
}

fn nig_from_raw(c: &[f64]) -> NigParams {
    NigParams {
        x_hat: c[0],
        v: softplus(c[1]) + POSITIVE_FLOOR,
        alpha: 1.0 + softplus(c[2]) + POSITIVE_FLOOR,
        beta: softplus(c[3]) + POSITIVE_FLOOR,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small(head: RegressorHead, layers: usize, l_out: usize) -> RegressorSpec {
        RegressorSpec {
            n_in: 5,
            hidden: 8,
            layers,
            dropout: 0.2,
            t_in: 4,
            l_out,
            n_out: 3,
            head,
        }
    }

    fn batch(spec: &RegressorSpec, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x = (0..spec.input_len()).map(|_| rng.random_range(0.0..1.0)).collect();
                let y = (0..spec.target_len()).map(|_| rng.random_range(0.0..1.0)).collect();
                (x, y)
            })
            .collect()
    }

    // mean loss over a batch with fixed per-sample dropout masks, checked
    // against central differences on every weight
    fn check_gradients(spec: RegressorSpec) {
        let (net, w) = Regressor::init(spec.clone(), 11).unwrap();
        let data = batch(&spec, 4, 5);
        let lambda = 0.01;
        let mean_loss = |w: &WeightStore, grads: Option<&mut Gradients>| {
            let mut g = grads;
            let mut total = 0.0;
            for (i, (x, y)) in data.iter().enumerate() {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
                total += net.sample_loss(w, x, y, lambda, Some(&mut rng), g.as_deref_mut()).unwrap();
            }
            total / data.len() as f64
        };
        let mut grads = w.zero_grads();
        mean_loss(&w, Some(&mut grads));
        let scale = 1.0 / data.len() as f64;
        let mut worst = 0.0f64;
        for (t, tensor) in w.tensors().iter().enumerate() {
            for i in 0..tensor.data.len() {
                let id = super::super::weights::ParamId(t);
                let mut p = w.clone();
                p.get_mut(id)[i] += 1e-6;
                let mut m = w.clone();
                m.get_mut(id)[i] -= 1e-6;
                let num = (mean_loss(&p, None) - mean_loss(&m, None)) / 2e-6;
                let ana = grads.get(id)[i] * scale;
                let rel = (ana - num).abs() / ana.abs().max(num.abs()).max(1e-3);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn evidential_gradients_match_finite_differences() {
        check_gradients(small(RegressorHead::Evidential, 1, 1));
    }

    #[test]
    fn stacked_multi_step_gradients_match_finite_differences() {
        check_gradients(small(RegressorHead::Evidential, 2, 3));
    }

    #[test]
    fn gaussian_gradients_match_finite_differences() {
        check_gradients(small(RegressorHead::Gaussian, 1, 2));
    }

    #[test]
    fn outputs_satisfy_constraints_and_eval_is_deterministic() {
        let spec = small(RegressorHead::Evidential, 1, 2);
        let (net, mut w) = Regressor::init(spec.clone(), 3).unwrap();
        for v in w.get_mut(net.head.b) {
            *v = -50.0;
        }
        for (x, _) in batch(&spec, 5, 1) {
            let a = net.forward_nig(&w, &x, None).unwrap();
            assert_eq!(a, net.forward_nig(&w, &x, None).unwrap());
            for p in a.iter().flatten() {
                assert!(p.v > 0.0 && p.alpha > 1.0 && p.beta > 0.0, "{p:?}");
            }
        }
    }

    #[test]
    fn wrong_input_length_is_rejected() {
        let (net, w) = Regressor::init(small(RegressorHead::Evidential, 1, 1), 0).unwrap();
        assert!(net.forward_nig(&w, &[0.0; 3], None).is_err());
        assert!(net.forward_gaussian(&w, &[0.0; 20], None).is_err());
    }

    #[test]
    fn mc_dropout_without_dropout_has_no_epistemic_spread() {
        let mut spec = small(RegressorHead::Gaussian, 1, 1);
        spec.dropout = 0.0;
        let (net, w) = Regressor::init(spec.clone(), 9).unwrap();
        let (x, _) = batch(&spec, 1, 2).remove(0);
        let out = net.mc_dropout_predict(&w, &x, 10, 1).unwrap();
        assert!(out[0].iter().all(|p| p.epistemic == 0.0 && p.aleatoric > 0.0));
        assert!(net.mc_dropout_predict(&w, &x, 1, 1).is_err());

        spec.dropout = 0.3;
        let (net, w) = Regressor::init(spec, 9).unwrap();
        let out = net.mc_dropout_predict(&w, &x, 10, 1).unwrap();
        assert!(out[0].iter().all(|p| p.epistemic > 0.0));
    }

    #[test]
    fn spec_validation() {
        let mut s = RegressorSpec::new(4, 5);
        assert!(s.validate().is_err());
        s.n_out = 4;
        s.validate().unwrap();
        s.dropout = 1.0;
        assert!(s.validate().is_err());
        let d = RegressorSpec::new(9, 4);
        assert_eq!((d.hidden, d.layers, d.dropout, d.t_in, d.l_out), (128, 1, 0.1, 10, 1));
    }
}
