use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{AdamState, Rng};

pub const DEFAULT_HIDDEN: usize = 64;

/// One-hidden-layer tanh network estimating `E[R | S]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Critic {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array1<f64>,
    pub b2: f64,
    pub alpha: f64,
    pub adam: AdamState,
}

/// Hidden activations kept from a forward pass.
struct Forward {
    hidden: Vec<f64>,
    out: f64,
}

impl Critic {
    /// Fan-in uniform first layer, zero output layer: a fresh critic predicts 0.
    pub fn new(state_dim: usize, hidden: usize, alpha: f64, rng: &mut Rng) -> Self {
        let lim = 1.0 / (state_dim as f64).sqrt();
        let w1 = Array2::from_shape_fn((state_dim, hidden), |_| rng.uniform_in(-lim, lim));
        let n_params = state_dim * hidden + 2 * hidden + 1;
        Self {
            w1,
            b1: Array1::zeros(hidden),
            w2: Array1::zeros(hidden),
            b2: 0.0,
            alpha,
            adam: AdamState::new(n_params),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.b1.len()
    }

    pub fn n_params(&self) -> usize {
        self.adam.len()
    }

    fn forward(&self, s: &[f64]) -> Forward {
        let k = self.hidden();
        let mut pre = self.b1.to_vec();
        let w1 = self.w1.as_slice().unwrap();
        for (j, &sj) in s.iter().enumerate() {
            if sj == 0.0 {
                continue;
            }
            for (p, &w) in pre.iter_mut().zip(&w1[j * k..(j + 1) * k]) {
                *p += w * sj;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|x| x.tanh()).collect();
        let out = hidden.iter().zip(&self.w2).fold(self.b2, |acc, (h, w)| acc + h * w);
        Forward { hidden, out }
    }

    fn check_state(&self, s: &[f64]) -> Result<()> {
        if s.len() != self.state_dim() {
            return Err(Error::Shape(format!("critic expects state of length {}, got {}", self.state_dim(), s.len())));
        }
        Ok(())
    }

    pub fn predict(&self, s: &[f64]) -> Result<f64> {
        self.check_state(s)?;
        Ok(self.forward(s).out)
    }

    /// Adds `err * ∂prediction/∂θ` to `grad`, flat layout `w1, b1, w2, b2`.
    pub fn accumulate_gradient(&self, s: &[f64], err: f64, grad: &mut [f64]) -> Result<()> {
        self.check_state(s)?;
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("critic error signal {err}")));
        }
        if grad.len() != self.n_params() {
            return Err(Error::Shape("critic gradient buffer has the wrong length".into()));
        }
        let k = self.hidden();
        let d = self.state_dim();
        let fwd = self.forward(s);
        let (g_w1, rest) = grad.split_at_mut(d * k);
        let (g_b1, rest) = rest.split_at_mut(k);
        let (g_w2, g_b2) = rest.split_at_mut(k);
        for i in 0..k {
            let back = err * self.w2[i] * (1.0 - fwd.hidden[i] * fwd.hidden[i]);
            g_b1[i] += back;
            g_w2[i] += err * fwd.hidden[i];
            for (j, &sj) in s.iter().enumerate() {
                g_w1[j * k + i] += back * sj;
            }
        }
        g_b2[0] += err;
        Ok(())
    }

    /// One Adam step along `grad` (already averaged by the caller).
    pub fn apply(&mut self, grad: &[f64]) -> Result<()> {
        let delta = self.adam.step(grad, self.alpha)?;
        let mut it = delta.iter();
        for x in self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()) {
            *x += it.next().unwrap();
        }
        self.b2 += it.next().unwrap();
        Ok(())
    }

    /// Single-sample backprop step on `½ err²`, `err = R - prediction`.
    pub fn train(&mut self, s: &[f64], err: f64) -> Result<()> {
        let mut grad = vec![0.0; self.n_params()];
        self.accumulate_gradient(s, err, &mut grad)?;
        self.apply(&grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_critic_predicts_zero() {
        let c = Critic::new(6, DEFAULT_HIDDEN, 0.005, &mut Rng::new(0));
        assert_eq!(c.predict(&[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]).unwrap(), 0.0);
        assert!(c.predict(&[1.0]).is_err());
    }

    #[test]
    fn zero_error_leaves_parameters_unchanged() {
        let mut c = Critic::new(3, 8, 0.005, &mut Rng::new(1));
        let before = (c.w1.clone(), c.b1.clone(), c.w2.clone(), c.b2);
        c.train(&[1.0, 0.0, 1.0], 0.0).unwrap();
        assert_eq!(before, (c.w1.clone(), c.b1.clone(), c.w2.clone(), c.b2));
    }

    #[test]
    fn rejects_non_finite_error() {
        let mut c = Critic::new(3, 8, 0.005, &mut Rng::new(1));
        assert!(c.train(&[1.0, 0.0, 1.0], f64::NAN).is_err());
    }

    #[test]
    fn converges_to_constant_reward() {
        for &r0 in &[0.7, -1.0] {
            let mut c = Critic::new(4, DEFAULT_HIDDEN, 0.005, &mut Rng::new(2));
            let s = [1.0, 0.0, 0.0, 1.0];
            for _ in 0..10_000 {
                let err = r0 - c.predict(&s).unwrap();
                c.train(&s, err).unwrap();
            }
            let pred = c.predict(&s).unwrap();
            assert!((pred - r0).abs() < 0.05, "prediction {pred} for target {r0}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut c = Critic::new(3, 5, 0.005, &mut Rng::new(3));
        let mut rng = Rng::new(4);
        c.w2.iter_mut().for_each(|x| *x = rng.uniform_in(-1.0, 1.0));
        c.b1.iter_mut().for_each(|x| *x = rng.uniform_in(-0.5, 0.5));
        let s = [1.0, 0.0, 1.0];
        let mut grad = vec![0.0; c.n_params()];
        c.accumulate_gradient(&s, 1.0, &mut grad).unwrap();
        let h = 1e-6;
        let n = c.n_params();
        for k in 0..n {
            let mut plus = c.clone();
            let mut minus = c.clone();
            perturb(&mut plus, k, h);
            perturb(&mut minus, k, -h);
            let fd = (plus.predict(&s).unwrap() - minus.predict(&s).unwrap()) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "entry {k}: fd {fd} vs {}", grad[k]);
        }
    }

    fn perturb(c: &mut Critic, k: usize, h: f64) {
        let x = c
            .w1
            .iter_mut()
            .chain(c.b1.iter_mut())
            .chain(c.w2.iter_mut())
            .chain(std::iter::once(&mut c.b2))
            .nth(k)
            .unwrap();
        *x += h;
    }
}
