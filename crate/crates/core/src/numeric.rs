//! Numeric primitives shared by every other module: the logistic function,
//! the seeded random stream, Bernoulli draws and the Adam optimizer.

use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logistic function, evaluated on the branch that never exponentiates a
/// positive number.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`sigmoid`] expressed through its output.
#[inline]
pub fn sigmoid_prime_from_output(p: f64) -> f64 {
    p * (1.0 - p)
}

/// Seeded random stream.
///
/// Backed by ChaCha8, a counter-based generator. Independent streams for
/// one seed are obtained with [`Rng::stream`], which selects a distinct
/// ChaCha stream id (the 64-bit nonce) while keeping the key derived from
/// the seed, so streams never overlap.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::stream(seed, 0)
    }

    /// Stream `id` under key `seed`.
    pub fn stream(seed: u64, id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(id);
        Self { seed, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform draw in `[lo, hi)`.
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

impl RngCore for Rng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Draws a bit that is 1 with probability `p`. Consumes exactly one
/// uniform draw.
pub fn bernoulli(p: f64, rng: &mut Rng) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    Ok(bernoulli_unchecked(p, rng))
}

/// [`bernoulli`] for callers that produced `p` from [`sigmoid`].
#[inline]
pub(crate) fn bernoulli_unchecked(p: f64, rng: &mut Rng) -> u8 {
    (rng.uniform() < p) as u8
}

/// Adam moment estimates for a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub const BETA1: f64 = 0.9;
    pub const BETA2: f64 = 0.999;
    pub const EPS: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        Self::with_constants(len, Self::BETA1, Self::BETA2, Self::EPS)
    }

    pub fn with_constants(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// One Adam step on `grad`. Returns the additive parameter change, which
    /// points along `grad` (ascent).
    pub fn step(&mut self, grad: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let mut delta = vec![0.0; grad.len()];
        self.step_into(grad, alpha, &mut delta)?;
        Ok(delta)
    }

    /// Same as [`AdamState::step`] but writes into a caller-provided buffer.
    pub fn step_into(&mut self, grad: &[f64], alpha: f64, delta: &mut [f64]) -> Result<()> {
        if grad.len() != self.m.len() || delta.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam state has {} entries, gradient {}, output {}",
                self.m.len(),
                grad.len(),
                delta.len()
            )));
        }
        if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient entry {g}")));
        }
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for k in 0..grad.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            delta[k] = alpha * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};
    use super::Rng;

    #[test]
    fn sigmoid_symmetry_point() {
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn sigmoid_of_two() {
        // 1 / (1 + e^-2), evaluated to 20 digits offline.
        let hi = 0.880_797_077_977_882_3;
        assert!((sigmoid(2.0) - hi).abs() < 1e-15);
        assert!((sigmoid(-2.0) - (1.0 - hi)).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_saturates_without_nan() {
        let p = sigmoid(500.0);
        assert!(p > 1.0 - 1e-12 && p <= 1.0);
        let q = sigmoid(-500.0);
        assert!(q.is_finite() && (0.0..1e-12).contains(&q));
    }

    proptest! {
        #[test]
        fn sigmoid_complement(x in -30.0f64..30.0) {
            prop_assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn sigmoid_monotone(x in -40.0f64..40.0, d in 1e-6f64..5.0) {
            prop_assert!(sigmoid(x + d) >= sigmoid(x));
        }
    }

    #[test]
    fn bernoulli_degenerate_probabilities() {
        let mut rng = Rng::new(7);
        for _ in 0..1000 {
            assert_eq!(bernoulli(0.0, &mut rng).unwrap(), 0);
            assert_eq!(bernoulli(1.0, &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn bernoulli_rejects_bad_probabilities() {
        let mut rng = Rng::new(0);
        assert!(bernoulli(-0.1, &mut rng).is_err());
        assert!(bernoulli(1.5, &mut rng).is_err());
        assert!(bernoulli(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_mean_within_three_standard_errors() {
        let mut rng = Rng::new(11);
        let n = 100_000;
        let hits: u32 = (0..n).map(|_| bernoulli(0.3, &mut rng).unwrap() as u32).sum();
        let mean = hits as f64 / n as f64;
        let se = (0.3f64 * 0.7 / n as f64).sqrt();
        assert!((mean - 0.3).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn bernoulli_consumes_one_draw() {
        let mut a = Rng::new(5);
        let mut b = Rng::new(5);
        bernoulli(0.4, &mut a).unwrap();
        b.uniform();
        assert_eq!(a.uniform(), b.uniform());
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |mut r: Rng| (0..64).map(|_| bernoulli(0.5, &mut r).unwrap()).collect::<Vec<_>>();
        assert_eq!(draw(Rng::stream(3, 1)), draw(Rng::stream(3, 1)));
        assert_ne!(draw(Rng::stream(3, 1)), draw(Rng::stream(3, 2)));
        assert_ne!(draw(Rng::stream(3, 1)), draw(Rng::stream(4, 1)));
    }

    #[test]
    fn adam_zero_gradient_is_a_fixed_point() {
        let mut st = AdamState::new(4);
        for _ in 0..50 {
            let d = st.step(&[0.0; 4], 0.005).unwrap();
            assert!(d.iter().all(|&x| x == 0.0));
        }
        assert_eq!(st.t, 50);
    }

    #[test]
    fn adam_first_step_is_signed_step_size() {
        let g = [3.0, -0.25, 1e-3, -40.0];
        let alpha = 0.005;
        let mut st = AdamState::new(4);
        let d = st.step(&g, alpha).unwrap();
        for (k, &gk) in g.iter().enumerate() {
            let m_hat = st.m[k] / (1.0 - st.beta1);
            assert_eq!(m_hat, gk);
            let expect = alpha * gk / (gk.abs() + st.eps);
            assert!((d[k] - expect).abs() <= 1e-15, "{} vs {}", d[k], expect);
            assert_eq!(d[k].signum(), gk.signum());
        }
    }

    #[test]
    fn adam_rejects_shape_mismatch() {
        let mut st = AdamState::new(3);
        assert!(matches!(st.step(&[1.0, 2.0], 0.1), Err(Error::Shape(_))));
        assert_eq!(st.t, 0);
    }

    #[test]
    fn adam_resume_from_serialized_state_is_bit_exact() {
        let mut rng = Rng::new(1);
        let grads: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..5).map(|_| rng.uniform_in(-2.0, 2.0)).collect())
            .collect();
        let mut st = AdamState::new(5);
        for g in &grads[..20] {
            st.step(g, 0.01).unwrap();
        }
        let saved = serde_json::to_string(&st).unwrap();
        let mut resumed: AdamState = serde_json::from_str(&saved).unwrap();
        for g in &grads[20..] {
            let a = st.step(g, 0.01).unwrap();
            let b = resumed.step(g, 0.01).unwrap();
            assert_eq!(a, b);
        }
        assert!(st.v.iter().all(|&v| v >= 0.0));
    }
}
