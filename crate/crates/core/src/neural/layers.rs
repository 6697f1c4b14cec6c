use rand::Rng;

use crate::{Error, Result};

use super::weights::{Gradients, ParamId, WeightStore};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + eˣ) without overflow. Its derivative is [`sigmoid`].
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// y = W x + b with W stored `[n_out, n_in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new<R: Rng>(store: &mut WeightStore, rng: &mut R, name: &str, n_in: usize, n_out: usize) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Shape(format!("{name}: dense layer needs positive widths")));
        }
        let bound = 1.0 / (n_in as f64).sqrt();
        let w = store.add_uniform(rng, &format!("{name}.w"), &[n_out, n_in], bound)?;
        let b = store.add_uniform(rng, &format!("{name}.b"), &[n_out], bound)?;
        Ok(Self { w, b, n_in, n_out })
    }

    /// Weights from U(±`bound`), biases zero.
    pub fn with_bound<R: Rng>(store: &mut WeightStore, rng: &mut R, name: &str, n_in: usize, n_out: usize, bound: f64) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Shape(format!("{name}: dense layer needs positive widths")));
        }
        let w = store.add_uniform(rng, &format!("{name}.w"), &[n_out, n_in], bound)?;
        let b = store.add(&format!("{name}.b"), &[n_out], vec![0.0; n_out])?;
        Ok(Self { w, b, n_in, n_out })
    }

    pub fn forward(&self, store: &WeightStore, x: &[f64]) -> Vec<f64> {
        let w = store.get(self.w);
        let b = store.get(self.b);
        (0..self.n_out)
            .map(|o| {
                let row = &w[o * self.n_in..(o + 1) * self.n_in];
                b[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&self, store: &WeightStore, x: &[f64], dy: &[f64], grads: &mut Gradients) -> Vec<f64> {
        let w = store.get(self.w);
        {
            let gw = grads.get_mut(self.w);
            for o in 0..self.n_out {
                let row = &mut gw[o * self.n_in..(o + 1) * self.n_in];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dy[o] * xi;
                }
            }
        }
        for (g, d) in grads.get_mut(self.b).iter_mut().zip(dy) {
            *g += d;
        }
        let mut dx = vec![0.0; self.n_in];
        for o in 0..self.n_out {
            let row = &w[o * self.n_in..(o + 1) * self.n_in];
            for (d, wi) in dx.iter_mut().zip(row) {
                *d += dy[o] * wi;
            }
        }
        dx
    }
}

/// LSTM layer. W is `[4H, n_in + H]` acting on `[x, h_prev]`, gate blocks
/// ordered i, f, g, o.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lstm {
    pub w: ParamId,
    pub b: ParamId,
    pub n_in: usize,
    pub hidden: usize,
}

/// Everything a single step needs for its backward pass.
#[derive(Debug, Clone)]
pub struct LstmStep {
    xh: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Lstm {
    pub fn new<R: Rng>(store: &mut WeightStore, rng: &mut R, name: &str, n_in: usize, hidden: usize) -> Result<Self> {
        if n_in == 0 || hidden == 0 {
            return Err(Error::Shape(format!("{name}: LSTM needs positive widths")));
        }
        let fan_in = n_in + hidden;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = store.add_uniform(rng, &format!("{name}.w"), &[4 * hidden, fan_in], bound)?;
        let b = store.add_uniform(rng, &format!("{name}.b"), &[4 * hidden], bound)?;
        for v in &mut store.get_mut(b)[hidden..2 * hidden] {
            *v += 1.0;
        }
        Ok(Self { w, b, n_in, hidden })
    }

    pub fn step(&self, store: &WeightStore, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
        let (w, b) = (store.get(self.w), store.get(self.b));
        let mut step = lstm_step_raw(w, b, self.hidden, x, h_prev, c_prev);
        step.c_prev = c_prev.to_vec();
        step
    }

    /// Backward through one step given upstream gradients on h and c.
    /// Returns (dx, dh_prev, dc_prev).
    pub fn step_backward(
        &self,
        store: &WeightStore,
        s: &LstmStep,
        dh: &[f64],
        dc: &[f64],
        grads: &mut Gradients,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hd = self.hidden;
        let fan_in = self.n_in + hd;
        let mut dz = vec![0.0; 4 * hd];
        let mut dc_prev = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, g, o) = (s.gates[j], s.gates[hd + j], s.gates[2 * hd + j], s.gates[3 * hd + j]);
            let dct = dc[j] + dh[j] * o * (1.0 - s.tanh_c[j] * s.tanh_c[j]);
            dz[j] = dct * g * i * (1.0 - i);
            dz[hd + j] = dct * s.c_prev[j] * f * (1.0 - f);
            dz[2 * hd + j] = dct * i * (1.0 - g * g);
            dz[3 * hd + j] = dh[j] * s.tanh_c[j] * o * (1.0 - o);
            dc_prev[j] = dct * f;
        }
        let w = store.get(self.w);
        {
            let gw = grads.get_mut(self.w);
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (g, v) in gw[r * fan_in..(r + 1) * fan_in].iter_mut().zip(&s.xh) {
                    *g += d * v;
                }
            }
        }
        for (g, d) in grads.get_mut(self.b).iter_mut().zip(&dz) {
            *g += d;
        }
        let mut dxh = vec![0.0; fan_in];
        for (r, &d) in dz.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (acc, wv) in dxh.iter_mut().zip(&w[r * fan_in..(r + 1) * fan_in]) {
                *acc += d * wv;
            }
        }
        let dh_prev = dxh.split_off(self.n_in);
        (dxh, dh_prev, dc_prev)
    }
}

fn lstm_step_raw(w: &[f64], b: &[f64], hd: usize, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let mut xh = Vec::with_capacity(x.len() + hd);
    xh.extend_from_slice(x);
    xh.extend_from_slice(h_prev);
    let fan_in = xh.len();
    let mut gates: Vec<f64> = (0..4 * hd)
        .map(|r| b[r] + w[r * fan_in..(r + 1) * fan_in].iter().zip(&xh).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    for (r, z) in gates.iter_mut().enumerate() {
        *z = if (2 * hd..3 * hd).contains(&r) { z.tanh() } else { sigmoid(*z) };
    }
    let mut c = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for j in 0..hd {
        c[j] = gates[hd + j] * c_prev[j] + gates[j] * gates[2 * hd + j];
        tanh_c[j] = c[j].tanh();
        h[j] = gates[3 * hd + j] * tanh_c[j];
    }
    LstmStep {
        xh,
        c_prev: Vec::new(),
        gates,
        tanh_c,
        h,
        c,
    }
}

/// One LSTM step on raw arrays: `w` is `[4H, n_in + H]` row-major, `b` is
/// `[4H]`, gates ordered i, f, g, o.
pub fn lstm_cell_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], w: &[f64], b: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let hd = h_prev.len();
    if hd == 0 || c_prev.len() != hd || b.len() != 4 * hd || w.len() != 4 * hd * (x.len() + hd) {
        return Err(Error::Shape(format!(
            "lstm step: x {}, h {}, c {}, w {}, b {}",
            x.len(),
            hd,
            c_prev.len(),
            w.len(),
            b.len()
        )));
    }
    let s = lstm_step_raw(w, b, hd, x, h_prev, c_prev);
    Ok((s.h, s.c))
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// 1/(1-rate).
pub fn dropout_mask<R: Rng>(rng: &mut R, n: usize, rate: f64) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; n];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}
