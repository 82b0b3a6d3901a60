//! The k-bit multiplexer as a single-step task.
//!
//! A state holds `k` address bits followed by `2^k` data bits, all encoded
//! as `0.0` / `1.0`. The address is little-endian over the first `k`
//! entries; the target is the data bit it selects.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::numeric::Rng;

/// Address widths above this are rejected (state would not fit the sampler).
pub const MAX_ADDRESS_BITS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuxTask {
    k: u32,
}

impl MuxTask {
    pub fn new(k: u32) -> Result<Self> {
        if k == 0 || k > MAX_ADDRESS_BITS {
            return Err(Error::Config(format!(
                "multiplexer address bits must be in 1..={MAX_ADDRESS_BITS}, got {k}"
            )));
        }
        Ok(Self { k })
    }

    pub fn address_bits(&self) -> u32 {
        self.k
    }

    pub fn state_dim(&self) -> usize {
        self.k as usize + (1usize << self.k)
    }

    /// Number of distinct states, `2^state_dim`.
    pub fn state_count(&self) -> u64 {
        1u64 << self.state_dim()
    }

    /// Uniform draw over all binary vectors of length `state_dim`.
    pub fn sample_state(&self, rng: &mut Rng) -> Vec<f64> {
        let mut s = vec![0.0; self.state_dim()];
        self.sample_state_into(rng, &mut s);
        s
    }

    pub fn sample_state_into(&self, rng: &mut Rng, s: &mut [f64]) {
        debug_assert_eq!(s.len(), self.state_dim());
        let bits = rng.next_u64();
        for (i, x) in s.iter_mut().enumerate() {
            *x = ((bits >> i) & 1) as f64;
        }
    }

    /// State number `index`, bit `i` of the index giving entry `i`.
    pub fn state_from_index(&self, index: u64) -> Vec<f64> {
        (0..self.state_dim()).map(|i| ((index >> i) & 1) as f64).collect()
    }

    pub fn mux_output(&self, s: &[f64]) -> Result<u8> {
        if s.len() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has length {}, task expects {}",
                s.len(),
                self.state_dim()
            )));
        }
        let addr = s[..self.k as usize]
            .iter()
            .enumerate()
            .fold(0usize, |acc, (i, &b)| acc | (((b > 0.5) as usize) << i));
        Ok((s[self.k as usize + addr] > 0.5) as u8)
    }

    /// Rewards for actions 0 and 1 in state `s`.
    pub fn reward_table(&self, s: &[f64]) -> Result<[f64; 2]> {
        let target = self.mux_output(s)?;
        Ok([reward(0, target), reward(1, target)])
    }
}

/// +1 when the action matches the target, −1 otherwise.
#[inline]
pub fn reward(action: u8, target: u8) -> f64 {
    if action == target {
        1.0
    } else {
        -1.0
    }
}
