use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::policy::SampleTrace;

/// Exponentially decayed sums of the per-step score terms of the
/// recurrent hidden layer.
///
/// `z_rec[[j, i]]` accumulates `(H'_i - p_i) H_j`, `z[i]` accumulates
/// `H'_i - p_i`. A trace is opened with [`EligibilityTraces::start`], fed one
/// step at a time, and closed with [`EligibilityTraces::finish`] before a
/// learning rule may read it.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityTraces {
    pub z_rec: Array2<f64>,
    pub z: Array1<f64>,
    pub lambda: f64,
    open: bool,
    steps: usize,
}

impl EligibilityTraces {
    /// Zeroed traces for `n_hidden` units, open for accumulation.
    pub fn start(n_hidden: usize, lambda: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("trace decay must be in [0, 1], got {lambda}")));
        }
        Ok(Self {
            z_rec: Array2::zeros((n_hidden, n_hidden)),
            z: Array1::zeros(n_hidden),
            lambda,
            open: true,
            steps: 0,
        })
    }

    /// Zeroes the sums and reopens the traces for a new episode.
    pub fn reset(&mut self) {
        self.z_rec.fill(0.0);
        self.z.fill(0.0);
        self.open = true;
        self.steps = 0;
    }

    /// Folds in one synchronous update `h_prev -> h_new` drawn with
    /// probabilities `p`.
    pub fn accumulate(&mut self, h_prev: &[f64], h_new: &[f64], p: &[f64]) -> Result<()> {
        if !self.open {
            return Err(Error::Mode("eligibility traces accumulated outside an episode".into()));
        }
        let n = self.z.len();
        if h_prev.len() != n || h_new.len() != n || p.len() != n {
            return Err(Error::Shape(format!("trace step vectors must have length {n}")));
        }
        let lambda = self.lambda;
        let z_rec = self.z_rec.as_slice_mut().unwrap();
        for i in 0..n {
            let e = h_new[i] - p[i];
            self.z[i] = lambda * self.z[i] + e;
            for j in 0..n {
                let zji = &mut z_rec[j * n + i];
                *zji = lambda * *zji + e * h_prev[j];
            }
        }
        self.steps += 1;
        Ok(())
    }

    pub fn finish(&mut self) {
        self.open = false;
    }

    pub fn is_finished(&self) -> bool {
        !self.open
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Traces over every recurrent update of `trace`.
    ///
    /// With `score_initial` the feedforward draw `H_(0)` is folded in first as
    /// an update from the all-zero state, which adds its score to `z` and
    /// nothing to `z_rec`.
    pub fn from_trace(trace: &SampleTrace, lambda: f64, score_initial: bool) -> Result<Self> {
        let n = trace.initial_probs.len();
        let mut tr = Self::start(n, lambda)?;
        if score_initial {
            let zero = vec![0.0; n];
            tr.accumulate(&zero, trace.states[0].as_slice().unwrap(), trace.initial_probs.as_slice().unwrap())?;
        }
        for t in 1..trace.states.len() {
            tr.accumulate(
                trace.states[t - 1].as_slice().unwrap(),
                trace.states[t].as_slice().unwrap(),
                trace.probs[t - 1].as_slice().unwrap(),
            )?;
        }
        tr.finish();
        Ok(tr)
    }
}
