//! Stochastic forward passes of the one-hidden-layer network.
//!
//! Matrices follow the "from row, to column" convention: `w[[j, i]]` is the
//! weight from input `j` to hidden unit `i`, and `w_rec[[j, i]]` the weight
//! from hidden unit `j` to hidden unit `i`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{bernoulli_unchecked, sigmoid, Rng};

/// All weights of the network plus the recurrent strength `c`.
///
/// `c` scales the recurrent input but is a hyperparameter: it never appears
/// in a [`ParamDelta`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub w_rec: Array2<f64>,
    pub c: f64,
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

impl LayerParams {
    pub fn zeros(state_dim: usize, n_hidden: usize, c: f64) -> Self {
        Self {
            w: Array2::zeros((state_dim, n_hidden)),
            b: Array1::zeros(n_hidden),
            w_rec: Array2::zeros((n_hidden, n_hidden)),
            c,
            w_out: Array1::zeros(n_hidden),
            b_out: 0.0,
        }
    }

    /// Fan-in scaled uniform weights, zero biases and zero recurrent weights.
    /// Draws `W` row by row, then `W_out`.
    pub fn init(state_dim: usize, n_hidden: usize, c: f64, rng: &mut Rng) -> Self {
        let mut p = Self::zeros(state_dim, n_hidden, c);
        let lim = 1.0 / (state_dim as f64).sqrt();
        p.w.iter_mut().for_each(|x| *x = rng.uniform_in(-lim, lim));
        let lim = 1.0 / (n_hidden as f64).sqrt();
        p.w_out.iter_mut().for_each(|x| *x = rng.uniform_in(-lim, lim));
        p
    }

    pub fn state_dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.b.len()
    }

    /// Number of learnable scalars.
    pub fn len(&self) -> usize {
        let (d, n) = (self.state_dim(), self.n_hidden());
        d * n + n + n * n + n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_finite(&self) -> bool {
        self.w.iter().chain(&self.b).chain(&self.w_rec).chain(&self.w_out).all(|x| x.is_finite())
            && self.b_out.is_finite()
            && self.c.is_finite()
    }

    /// Symmetric recurrent matrix with an exactly zero diagonal.
    pub fn check_boltzmann(&self) -> Result<()> {
        let n = self.n_hidden();
        for i in 0..n {
            if self.w_rec[[i, i]] != 0.0 {
                return Err(Error::Mode(format!("recurrent diagonal entry {i} is {}", self.w_rec[[i, i]])));
            }
            for j in 0..i {
                if self.w_rec[[i, j]] != self.w_rec[[j, i]] {
                    return Err(Error::Mode(format!("recurrent weights not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has length {}, network expects {}",
                s.len(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    fn check_hidden(&self, h: &[f64]) -> Result<()> {
        if h.len() != self.n_hidden() {
            return Err(Error::Shape(format!(
                "hidden vector has length {}, network has {} units",
                h.len(),
                self.n_hidden()
            )));
        }
        Ok(())
    }

    /// Adds `scale * delta` to every learnable entry.
    pub fn add_scaled(&mut self, delta: &ParamDelta, scale: f64) {
        self.w.scaled_add(scale, &delta.w);
        self.b.scaled_add(scale, &delta.b);
        self.w_rec.scaled_add(scale, &delta.w_rec);
        self.w_out.scaled_add(scale, &delta.w_out);
        self.b_out += scale * delta.b_out;
    }

    /// Adds a flat vector laid out as [`ParamDelta::flatten`].
    pub fn add_flat(&mut self, flat: &[f64]) {
        debug_assert_eq!(flat.len(), self.len());
        let mut it = flat.iter();
        for x in self.w.iter_mut().chain(self.b.iter_mut()).chain(self.w_rec.iter_mut()).chain(self.w_out.iter_mut()) {
            *x += it.next().unwrap();
        }
        self.b_out += it.next().unwrap();
    }
}

/// A gradient-shaped update for every learnable entry of [`LayerParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDelta {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub w_rec: Array2<f64>,
    pub w_out: Array1<f64>,
    pub b_out: f64,
}

impl ParamDelta {
    pub fn zeros(state_dim: usize, n_hidden: usize) -> Self {
        Self {
            w: Array2::zeros((state_dim, n_hidden)),
            b: Array1::zeros(n_hidden),
            w_rec: Array2::zeros((n_hidden, n_hidden)),
            w_out: Array1::zeros(n_hidden),
            b_out: 0.0,
        }
    }

    pub fn zeros_like(params: &LayerParams) -> Self {
        Self::zeros(params.state_dim(), params.n_hidden())
    }

    pub fn len(&self) -> usize {
        self.w.len() + self.b.len() + self.w_rec.len() + self.w_out.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Entries in the order `w` (row-major), `b`, `w_rec` (row-major), `w_out`, `b_out`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        self.flatten_into(&mut v);
        v
    }

    pub fn flatten_into(&self, v: &mut Vec<f64>) {
        v.clear();
        v.extend(self.w.iter().chain(&self.b).chain(&self.w_rec).chain(&self.w_out));
        v.push(self.b_out);
    }

    pub fn from_flat(state_dim: usize, n_hidden: usize, flat: &[f64]) -> Result<Self> {
        let mut d = Self::zeros(state_dim, n_hidden);
        if flat.len() != d.len() {
            return Err(Error::Shape(format!("flat delta has {} entries, expected {}", flat.len(), d.len())));
        }
        let mut it = flat.iter().copied();
        for x in d.w.iter_mut().chain(d.b.iter_mut()).chain(d.w_rec.iter_mut()).chain(d.w_out.iter_mut()) {
            *x = it.next().unwrap();
        }
        d.b_out = it.next().unwrap();
        Ok(d)
    }

    /// Human-readable name of flat entry `k`.
    pub fn entry_name(state_dim: usize, n_hidden: usize, k: usize) -> String {
        let (d, n) = (state_dim, n_hidden);
        let mut k = k;
        if k < d * n {
            return format!("w[{},{}]", k / n, k % n);
        }
        k -= d * n;
        if k < n {
            return format!("b[{k}]");
        }
        k -= n;
        if k < n * n {
            return format!("w_rec[{},{}]", k / n, k % n);
        }
        k -= n * n;
        if k < n {
            return format!("w_out[{k}]");
        }
        "b_out".to_string()
    }

    pub fn add_scaled(&mut self, other: &ParamDelta, scale: f64) {
        self.w.scaled_add(scale, &other.w);
        self.b.scaled_add(scale, &other.b);
        self.w_rec.scaled_add(scale, &other.w_rec);
        self.w_out.scaled_add(scale, &other.w_out);
        self.b_out += scale * other.b_out;
    }

    pub fn scale(&mut self, k: f64) {
        self.w *= k;
        self.b *= k;
        self.w_rec *= k;
        self.w_out *= k;
        self.b_out *= k;
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|&x| x == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.flatten().iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Full record of one synchronous sampling run.
///
/// `states[0]` is the feedforward draw, `states[t]` the state after update
/// `t`. `probs[t - 1]` holds the firing probabilities used for update `t`;
/// `initial_probs` those of the feedforward draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTrace {
    pub states: Vec<Array1<f64>>,
    pub initial_probs: Array1<f64>,
    pub probs: Vec<Array1<f64>>,
}

impl SampleTrace {
    /// A trace with no recurrent updates, as produced by the independent layer.
    pub fn independent(h: Array1<f64>, p: Array1<f64>) -> Self {
        Self { states: vec![h], initial_probs: p, probs: Vec::new() }
    }

    /// Number of recurrent updates `T`.
    pub fn steps(&self) -> usize {
        self.probs.len()
    }

    /// The sample passed on to the output unit, `H_(T)`.
    pub fn hidden(&self) -> &Array1<f64> {
        self.states.last().expect("trace holds at least the initial state")
    }

    /// Probabilities that generated [`SampleTrace::hidden`].
    pub fn final_probs(&self) -> &Array1<f64> {
        self.probs.last().unwrap_or(&self.initial_probs)
    }
}

/// Feedforward input `a = Wᵀ s + b`.
pub fn logits(params: &LayerParams, s: &[f64]) -> Result<Array1<f64>> {
    params.check_state(s)?;
    Ok(logits_unchecked(params, s))
}

pub(crate) fn logits_unchecked(params: &LayerParams, s: &[f64]) -> Array1<f64> {
    let mut a = Array1::zeros(params.n_hidden());
    accumulate_rows(&params.w, s, a.as_slice_mut().unwrap());
    a += &params.b;
    a
}

/// `out[i] += Σ_j m[[j, i]] x[j]`, summed in ascending `j`. Zero inputs are
/// skipped, which is exact for the binary vectors used here.
#[inline]
fn accumulate_rows(m: &Array2<f64>, x: &[f64], out: &mut [f64]) {
    let cols = m.ncols();
    let data = m.as_slice().expect("parameters are stored contiguously");
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let row = &data[j * cols..(j + 1) * cols];
        for (o, &wji) in out.iter_mut().zip(row) {
            *o += wji * xj;
        }
    }
}

/// Samples every hidden unit independently from `σ(a)`.
pub fn sample_independent(params: &LayerParams, s: &[f64], rng: &mut Rng) -> Result<(Array1<f64>, Array1<f64>)> {
    let a = logits(params, s)?;
    let p = a.mapv(sigmoid);
    let h = draw(&p, rng);
    Ok((h, p))
}

fn draw(p: &Array1<f64>, rng: &mut Rng) -> Array1<f64> {
    p.mapv(|pi| bernoulli_unchecked(pi, rng) as f64)
}

/// Firing probabilities `σ(c Σ_j W_rec[j,i] h_j + a_i)` given the other units.
pub fn conditional_prob(params: &LayerParams, h: &[f64], s: &[f64]) -> Result<Array1<f64>> {
    params.check_hidden(h)?;
    let a = logits(params, s)?;
    Ok(recurrent_probs(params, &a, h))
}

/// Firing probabilities given feedforward input `a` and previous state `h`.
pub fn recurrent_probs(params: &LayerParams, a: &Array1<f64>, h: &[f64]) -> Array1<f64> {
    let mut rec = vec![0.0; params.n_hidden()];
    accumulate_rows(&params.w_rec, h, &mut rec);
    let c = params.c;
    Array1::from_iter(rec.iter().zip(a).map(|(&r, &ai)| sigmoid(c * r + ai)))
}

/// One synchronous update of all hidden units.
pub fn gibbs_step(params: &LayerParams, a: &Array1<f64>, h_prev: &[f64], rng: &mut Rng) -> (Array1<f64>, Array1<f64>) {
    let p = recurrent_probs(params, a, h_prev);
    let h = draw(&p, rng);
    (h, p)
}

/// Feedforward draw followed by `steps` synchronous updates.
pub fn gibbs_sample(params: &LayerParams, s: &[f64], steps: usize, rng: &mut Rng) -> Result<SampleTrace> {
    if steps == 0 {
        return Err(Error::Config("number of sampling steps must be at least 1".into()));
    }
    let a = logits(params, s)?;
    let p0 = a.mapv(sigmoid);
    let h0 = draw(&p0, rng);
    let mut trace = SampleTrace {
        states: Vec::with_capacity(steps + 1),
        initial_probs: p0,
        probs: Vec::with_capacity(steps),
    };
    trace.states.push(h0);
    for _ in 0..steps {
        let prev = trace.states.last().unwrap();
        let (h, p) = gibbs_step(params, &a, prev.as_slice().unwrap(), rng);
        trace.states.push(h);
        trace.probs.push(p);
    }
    Ok(trace)
}

/// Probability that the output unit emits 1.
pub fn output_prob(params: &LayerParams, h: &[f64]) -> Result<f64> {
    params.check_hidden(h)?;
    let z = h.iter().zip(&params.w_out).fold(0.0, |acc, (&hj, &wj)| acc + wj * hj) + params.b_out;
    Ok(sigmoid(z))
}

pub fn output_sample(params: &LayerParams, h: &[f64], rng: &mut Rng) -> Result<(u8, f64)> {
    let p = output_prob(params, h)?;
    Ok((bernoulli_unchecked(p, rng), p))
}
