//! Exact reference computations by exhaustive enumeration.
//!
//! Hidden configurations are indexed by integers: bit `i` of the index is
//! `h_i`. Everything here is tractable only for a handful of hidden units
//! and exists to certify the sampled learning rules.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::learn::{self, Alg2Options, CenteringMode, EligibilityTraces, EpisodeRecord, SteBackward};
use crate::numeric::{sigmoid, Rng};
use crate::policy::{self, LayerParams, ParamDelta, SampleTrace};

/// Largest hidden layer [`exact_boltzmann`] will enumerate.
pub const MAX_BOLTZMANN_UNITS: usize = 20;
/// Largest hidden layer for the synchronous-chain transition matrix.
pub const MAX_CHAIN_UNITS: usize = 10;
/// Largest `N * (T + 1)` for explicit trajectory enumeration.
pub const MAX_TRAJECTORY_BITS: usize = 16;

/// Law of the hidden sample `H` handed to the output unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Law {
    /// Independent units, `P(h) = Π σ(a_i)^{h_i} (1 - σ(a_i))^{1 - h_i}`.
    Independent,
    /// Fully connected Boltzmann machine with pairwise energy
    /// `c Σ_{i<j} W_rec[i,j] h_i h_j`. `W_rec` must be symmetric with a
    /// zero diagonal.
    Boltzmann,
    /// `H_(T)` of the synchronous chain started from a feedforward draw.
    Chain { steps: usize },
}

/// Exact first and second moments of a distribution over `{0,1}^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactMoments {
    /// `E[H_i | S]`.
    pub first: Array1<f64>,
    /// `E[H_i H_j | S]`; the diagonal equals `first`.
    pub second: Array2<f64>,
    /// Probability of every configuration, by index.
    pub distribution: Vec<f64>,
}

impl ExactMoments {
    fn from_distribution(n: usize, distribution: Vec<f64>) -> Self {
        let mut first = Array1::zeros(n);
        let mut second = Array2::zeros((n, n));
        for (idx, &pr) in distribution.iter().enumerate() {
            for i in 0..n {
                if bit(idx, i) {
                    first[i] += pr;
                    for j in 0..n {
                        if bit(idx, j) {
                            second[[i, j]] += pr;
                        }
                    }
                }
            }
        }
        Self { first, second, distribution }
    }

    /// Draws a configuration by inverting the cumulative distribution with a
    /// single uniform draw.
    pub fn sample(&self, rng: &mut Rng) -> Array1<f64> {
        let u = rng.uniform();
        let mut acc = 0.0;
        let mut pick = self.distribution.len() - 1;
        for (idx, &pr) in self.distribution.iter().enumerate() {
            acc += pr;
            if u < acc {
                pick = idx;
                break;
            }
        }
        config(pick, self.first.len())
    }
}

#[inline]
fn bit(idx: usize, i: usize) -> bool {
    (idx >> i) & 1 == 1
}

/// Configuration number `idx` as a 0/1 vector.
pub fn config(idx: usize, n: usize) -> Array1<f64> {
    Array1::from_iter((0..n).map(|i| bit(idx, i) as u8 as f64))
}

fn check_state(params: &LayerParams, s: &[f64]) -> Result<()> {
    if s.len() != params.state_dim() {
        return Err(Error::Shape(format!("state has length {}, network expects {}", s.len(), params.state_dim())));
    }
    Ok(())
}

/// Unnormalized log-weight of configuration `h` under the Boltzmann law.
fn boltzmann_energy(params: &LayerParams, a: &Array1<f64>, h: &Array1<f64>) -> f64 {
    let n = h.len();
    let mut e = 0.0;
    for i in 0..n {
        if h[i] == 0.0 {
            continue;
        }
        e += a[i];
        for j in 0..i {
            if h[j] != 0.0 {
                e += params.c * 0.5 * (params.w_rec[[i, j]] + params.w_rec[[j, i]]);
            }
        }
    }
    e
}

/// Exact moments of the Boltzmann law of `H` given `s`.
pub fn exact_boltzmann(params: &LayerParams, s: &[f64]) -> Result<ExactMoments> {
    let n = params.n_hidden();
    if n > MAX_BOLTZMANN_UNITS {
        return Err(Error::TooLarge(format!("{n} hidden units exceeds the Boltzmann limit {MAX_BOLTZMANN_UNITS}")));
    }
    params.check_boltzmann()?;
    let a = policy::logits(params, s)?;
    let energies: Vec<f64> = (0..1usize << n).map(|idx| boltzmann_energy(params, &a, &config(idx, n))).collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = energies.iter().map(|e| (e - max).exp()).collect();
    let z: f64 = weights.iter().sum();
    Ok(ExactMoments::from_distribution(n, weights.into_iter().map(|w| w / z).collect()))
}

/// Exact product law of independent units.
pub fn exact_independent(params: &LayerParams, s: &[f64]) -> Result<ExactMoments> {
    let n = params.n_hidden();
    if n > MAX_BOLTZMANN_UNITS {
        return Err(Error::TooLarge(format!("{n} hidden units exceeds the enumeration limit {MAX_BOLTZMANN_UNITS}")));
    }
    let p = policy::logits(params, s)?.mapv(sigmoid);
    Ok(ExactMoments::from_distribution(n, (0..1usize << n).map(|idx| product_prob(&p, idx)).collect()))
}

fn product_prob(p: &Array1<f64>, idx: usize) -> f64 {
    p.iter().enumerate().map(|(i, &pi)| if bit(idx, i) { pi } else { 1.0 - pi }).product()
}

/// Transition structure of the synchronous chain for a fixed state.
struct Chain {
    n: usize,
    /// Feedforward input.
    a: Array1<f64>,
    /// Law of the feedforward draw `H_(0)`.
    initial: Vec<f64>,
    /// `probs[h]`: firing probabilities of every unit given previous state `h`.
    probs: Vec<Array1<f64>>,
    /// `transition[h][h']`.
    transition: Vec<Vec<f64>>,
}

impl Chain {
    fn new(params: &LayerParams, s: &[f64]) -> Result<Self> {
        let n = params.n_hidden();
        if n > MAX_CHAIN_UNITS {
            return Err(Error::TooLarge(format!("{n} hidden units exceeds the chain limit {MAX_CHAIN_UNITS}")));
        }
        let a = policy::logits(params, s)?;
        let k = 1usize << n;
        let p0 = a.mapv(sigmoid);
        let initial = (0..k).map(|idx| product_prob(&p0, idx)).collect();
        let probs: Vec<Array1<f64>> = (0..k)
            .map(|idx| policy::recurrent_probs(params, &a, config(idx, n).as_slice().unwrap()))
            .collect();
        let transition = probs.iter().map(|p| (0..k).map(|to| product_prob(p, to)).collect()).collect();
        Ok(Self { n, a, initial, probs, transition })
    }

    fn states(&self) -> usize {
        1 << self.n
    }

    /// Marginals of `H_(0) .. H_(T)`.
    fn forward(&self, steps: usize) -> Vec<Vec<f64>> {
        let k = self.states();
        let mut out = Vec::with_capacity(steps + 1);
        out.push(self.initial.clone());
        for _ in 0..steps {
            let prev = out.last().unwrap();
            let mut next = vec![0.0; k];
            for (from, &pf) in prev.iter().enumerate() {
                if pf == 0.0 {
                    continue;
                }
                for (to, nt) in next.iter_mut().enumerate() {
                    *nt += pf * self.transition[from][to];
                }
            }
            out.push(next);
        }
        out
    }

    /// `β_t(h) = E[g(H_(T)) | H_(t) = h]` for `t = 0 .. T`.
    fn backward(&self, steps: usize, terminal: &[f64]) -> Vec<Vec<f64>> {
        let k = self.states();
        let mut out = vec![terminal.to_vec()];
        for _ in 0..steps {
            let next = out.last().unwrap();
            let prev: Vec<f64> = (0..k)
                .map(|from| (0..k).map(|to| self.transition[from][to] * next[to]).sum())
                .collect();
            out.push(prev);
        }
        out.reverse();
        out
    }
}

/// Exact law of the synchronous chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainDistribution {
    /// Every trajectory `(H_(0), .., H_(T))` as configuration indices, with
    /// its probability.
    pub trajectories: Vec<(Vec<usize>, f64)>,
    /// Law of `H_(T)`.
    pub marginal: Vec<f64>,
}

/// Law of `H_(T)` by forward recursion over the transition matrix.
pub fn exact_chain_marginal(params: &LayerParams, s: &[f64], steps: usize) -> Result<Vec<f64>> {
    let chain = Chain::new(params, s)?;
    Ok(chain.forward(steps).pop().unwrap())
}

/// Law of every trajectory of the synchronous chain, by enumeration.
pub fn exact_chain_distribution(params: &LayerParams, s: &[f64], steps: usize) -> Result<ChainDistribution> {
    let n = params.n_hidden();
    if n * (steps + 1) > MAX_TRAJECTORY_BITS {
        return Err(Error::TooLarge(format!(
            "{n} units over {} states is beyond the trajectory limit of {MAX_TRAJECTORY_BITS} bits",
            steps + 1
        )));
    }
    let chain = Chain::new(params, s)?;
    let k = chain.states();
    let mut trajectories = Vec::with_capacity(k.pow(steps as u32 + 1));
    let mut marginal = vec![0.0; k];
    let mut path = Vec::with_capacity(steps + 1);
    fn walk(chain: &Chain, steps: usize, prob: f64, path: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>, marginal: &mut [f64]) {
        if path.len() == steps + 1 {
            marginal[*path.last().unwrap()] += prob;
            out.push((path.clone(), prob));
            return;
        }
        for to in 0..chain.states() {
            let pr = match path.last() {
                None => chain.initial[to],
                Some(&from) => chain.transition[from][to],
            };
            path.push(to);
            walk(chain, steps, prob * pr, path, out, marginal);
            path.pop();
        }
    }
    walk(&chain, steps, 1.0, &mut path, &mut trajectories, &mut marginal);
    Ok(ChainDistribution { trajectories, marginal })
}

/// Law of `H` under `law`, by configuration index.
pub fn hidden_law(params: &LayerParams, s: &[f64], law: Law) -> Result<Vec<f64>> {
    match law {
        Law::Independent => Ok(exact_independent(params, s)?.distribution),
        Law::Boltzmann => Ok(exact_boltzmann(params, s)?.distribution),
        Law::Chain { steps } => exact_chain_marginal(params, s, steps),
    }
}

/// `E[R | H = h]` for the output unit and action rewards `[R(s,0), R(s,1)]`.
fn output_value(params: &LayerParams, h: &Array1<f64>, rewards: [f64; 2]) -> f64 {
    let po = policy::output_prob(params, h.as_slice().unwrap()).expect("shape checked by caller");
    (1.0 - po) * rewards[0] + po * rewards[1]
}

/// Exact `E[R | S = s]`.
pub fn exact_expected_reward(params: &LayerParams, s: &[f64], rewards: [f64; 2], law: Law) -> Result<f64> {
    check_state(params, s)?;
    let n = params.n_hidden();
    let dist = hidden_law(params, s, law)?;
    Ok(dist.iter().enumerate().map(|(idx, &pr)| pr * output_value(params, &config(idx, n), rewards)).sum())
}

/// Adds `weight * ∇_{θ_out} E[R | H = h]` to `grad`.
fn add_output_gradient(params: &LayerParams, h: &Array1<f64>, rewards: [f64; 2], weight: f64, grad: &mut ParamDelta) {
    let po = policy::output_prob(params, h.as_slice().unwrap()).expect("shape checked by caller");
    let dz = weight * (rewards[1] - rewards[0]) * po * (1.0 - po);
    grad.w_out.scaled_add(dz, h);
    grad.b_out += dz;
}

/// Exact gradient of `E[R | S = s]` with respect to every learnable entry.
///
/// Under [`Law::Boltzmann`] the recurrent entries `[j,i]` and `[i,j]` both
/// hold the derivative with respect to their shared (tied) value and the
/// diagonal is zero. Under [`Law::Independent`] the recurrent gradient is
/// zero. Under [`Law::Chain`] every recurrent entry is a free parameter and
/// the feedforward draw `H_(0)` contributes its own score.
pub fn exact_gradient(params: &LayerParams, s: &[f64], rewards: [f64; 2], law: Law) -> Result<ParamDelta> {
    check_state(params, s)?;
    match law {
        Law::Independent => {
            let m = exact_independent(params, s)?;
            Ok(gradient_from_law(params, s, rewards, &m, false))
        }
        Law::Boltzmann => {
            let m = exact_boltzmann(params, s)?;
            Ok(gradient_from_law(params, s, rewards, &m, true))
        }
        Law::Chain { steps } => chain_gradient(params, s, rewards, steps),
    }
}

/// Score-function gradient for an exponential-family law over `H`.
fn gradient_from_law(params: &LayerParams, s: &[f64], rewards: [f64; 2], m: &ExactMoments, pairwise: bool) -> ParamDelta {
    let n = params.n_hidden();
    let mut grad = ParamDelta::zeros_like(params);
    let mut cov_h = Array1::<f64>::zeros(n);
    let mut cov_hh = Array2::<f64>::zeros((n, n));
    for (idx, &pr) in m.distribution.iter().enumerate() {
        if pr == 0.0 {
            continue;
        }
        let h = config(idx, n);
        let g = output_value(params, &h, rewards);
        for i in 0..n {
            cov_h[i] += pr * g * (h[i] - m.first[i]);
            if pairwise {
                for j in 0..n {
                    if i != j {
                        cov_hh[[j, i]] += pr * g * (h[i] * h[j] - m.second[[i, j]]);
                    }
                }
            }
        }
        add_output_gradient(params, &h, rewards, pr, &mut grad);
    }
    for (mut row, &sj) in grad.w.rows_mut().into_iter().zip(s) {
        row.assign(&(&cov_h * sj));
    }
    grad.b.assign(&cov_h);
    if pairwise {
        grad.w_rec = cov_hh * params.c;
    }
    grad
}

fn chain_gradient(params: &LayerParams, s: &[f64], rewards: [f64; 2], steps: usize) -> Result<ParamDelta> {
    if steps == 0 {
        return Err(Error::Config("chain law needs at least one step".into()));
    }
    let chain = Chain::new(params, s)?;
    let n = chain.n;
    let k = chain.states();
    let configs: Vec<Array1<f64>> = (0..k).map(|idx| config(idx, n)).collect();
    let terminal: Vec<f64> = configs.iter().map(|h| output_value(params, h, rewards)).collect();
    let alpha = chain.forward(steps);
    let beta = chain.backward(steps, &terminal);

    let mut grad = ParamDelta::zeros_like(params);
    let mut g_ff = Array1::<f64>::zeros(n);

    // Feedforward draw.
    let p0 = chain.a.mapv(sigmoid);
    for (idx, h) in configs.iter().enumerate() {
        let wgt = chain.initial[idx] * beta[0][idx];
        for i in 0..n {
            g_ff[i] += wgt * (h[i] - p0[i]);
        }
    }

    // Recurrent updates: joint weight of (H_(t-1) = h, H_(t) = h') summed over t.
    let mut pair = vec![vec![0.0; k]; k];
    for t in 1..=steps {
        for from in 0..k {
            let af = alpha[t - 1][from];
            if af == 0.0 {
                continue;
            }
            for to in 0..k {
                pair[from][to] += af * chain.transition[from][to] * beta[t][to];
            }
        }
    }
    for from in 0..k {
        let p = &chain.probs[from];
        let h_prev = &configs[from];
        for to in 0..k {
            let wgt = pair[from][to];
            if wgt == 0.0 {
                continue;
            }
            let h_new = &configs[to];
            for i in 0..n {
                let e = wgt * (h_new[i] - p[i]);
                g_ff[i] += e;
                for j in 0..n {
                    grad.w_rec[[j, i]] += params.c * e * h_prev[j];
                }
            }
        }
    }
    for (mut row, &sj) in grad.w.rows_mut().into_iter().zip(s) {
        row.assign(&(&g_ff * sj));
    }
    grad.b.assign(&g_ff);
    for (idx, h) in configs.iter().enumerate() {
        add_output_gradient(params, h, rewards, alpha[steps][idx], &mut grad);
    }
    Ok(grad)
}

/// Central finite differences of [`exact_expected_reward`].
///
/// Under [`Law::Boltzmann`] each off-diagonal recurrent pair is perturbed
/// together, matching the tied parametrization of [`exact_gradient`].
pub fn finite_difference_gradient(params: &LayerParams, s: &[f64], rewards: [f64; 2], law: Law, step: f64) -> Result<ParamDelta> {
    let d = params.state_dim();
    let n = params.n_hidden();
    let zero = ParamDelta::zeros_like(params);
    let len = zero.len();
    let mut out = vec![0.0; len];
    let rec_start = d * n + n;
    for k in 0..len {
        let mut e = vec![0.0; len];
        e[k] = 1.0;
        if (rec_start..rec_start + n * n).contains(&k) {
            let (j, i) = ((k - rec_start) / n, (k - rec_start) % n);
            match law {
                Law::Boltzmann if i == j => continue,
                Law::Boltzmann => e[rec_start + i * n + j] = 1.0,
                _ => {}
            }
        }
        let dir = ParamDelta::from_flat(d, n, &e)?;
        let mut plus = params.clone();
        plus.add_scaled(&dir, step);
        let mut minus = params.clone();
        minus.add_scaled(&dir, -step);
        let fp = exact_expected_reward(&plus, s, rewards, law)?;
        let fm = exact_expected_reward(&minus, s, rewards, law)?;
        out[k] = (fp - fm) / (2.0 * step);
    }
    ParamDelta::from_flat(d, n, &out)
}

/// A learning rule under test, with the law its hidden samples come from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    /// `R (H - p) S` on independent units.
    Reinforce,
    /// `(R - b)(H - p) S` on independent units.
    ReinforceBaseline,
    /// `(R - b) H S` on independent units.
    ReinforceRewardCentered,
    /// Boltzmann layer with exact negative statistics, `H` drawn exactly.
    BoltzmannNegStats,
    /// Boltzmann layer centered on the reward, `H` drawn exactly.
    Boltzmann,
    /// Recurrent layer with eligibility traces over `steps` updates.
    Recurrent { steps: usize, lambda: f64, score_initial: bool },
    /// Straight-through baseline (biased; not expected to match).
    Ste(SteBackward),
}

impl Rule {
    pub fn law(&self) -> Law {
        match *self {
            Rule::Reinforce | Rule::ReinforceBaseline | Rule::ReinforceRewardCentered | Rule::Ste(_) => Law::Independent,
            Rule::BoltzmannNegStats | Rule::Boltzmann => Law::Boltzmann,
            Rule::Recurrent { steps, .. } => Law::Chain { steps },
        }
    }

    pub fn name(&self) -> String {
        match *self {
            Rule::Reinforce => "reinforce".into(),
            Rule::ReinforceBaseline => "reinforce-baseline".into(),
            Rule::ReinforceRewardCentered => "reinforce-reward-centered".into(),
            Rule::BoltzmannNegStats => "boltzmann-negstats".into(),
            Rule::Boltzmann => "boltzmann".into(),
            Rule::Recurrent { steps, lambda, score_initial } => {
                format!("recurrent-t{steps}-l{lambda}{}", if score_initial { "-init" } else { "" })
            }
            Rule::Ste(b) => format!("ste-{b}"),
        }
    }

    /// Parses `reinforce`, `reinforce-baseline`, `reinforce-reward-centered`,
    /// `boltzmann-negstats`, `boltzmann`, `recurrent` (T = 2, λ = 1, initial
    /// draw scored) or `ste`.
    pub fn parse(id: &str) -> Result<Self> {
        Ok(match id {
            "reinforce" => Rule::Reinforce,
            "reinforce-baseline" => Rule::ReinforceBaseline,
            "reinforce-reward-centered" => Rule::ReinforceRewardCentered,
            "boltzmann-negstats" => Rule::BoltzmannNegStats,
            "boltzmann" => Rule::Boltzmann,
            "recurrent" => Rule::Recurrent { steps: 2, lambda: 1.0, score_initial: true },
            "ste" => Rule::Ste(SteBackward::SigmoidDerivative),
            other => return Err(Error::Config(format!("unknown rule id `{other}`"))),
        })
    }

    fn delta(&self, params: &LayerParams, record: &EpisodeRecord, moments: Option<&ExactMoments>) -> Result<ParamDelta> {
        match *self {
            Rule::Reinforce => learn::indep_update(params, record, CenteringMode::OneSidedAction),
            Rule::ReinforceBaseline => learn::indep_update(params, record, CenteringMode::TwoSided),
            Rule::ReinforceRewardCentered => learn::indep_update(params, record, CenteringMode::OneSidedReward),
            Rule::BoltzmannNegStats => learn::alg1_update_negstats(params, record, moments.expect("moments computed for Boltzmann rules")),
            Rule::Boltzmann => learn::alg1_update(params, record),
            Rule::Recurrent { lambda, score_initial, .. } => {
                let tr = EligibilityTraces::from_trace(&record.trace, lambda, score_initial)?;
                learn::alg2_update(params, record, &tr, Alg2Options::default())
            }
            Rule::Ste(b) => learn::ste_update(params, record, b),
        }
    }
}

/// Monte-Carlo mean of a rule's delta at a fixed state.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedUpdate {
    pub mean: ParamDelta,
    /// Per-entry standard error of `mean`.
    pub std_err: ParamDelta,
    pub n_samples: usize,
}

/// Averages `n_samples` independent episodes of `rule` at state `s`.
pub fn expected_update(
    rule: Rule,
    params: &LayerParams,
    s: &[f64],
    rewards: [f64; 2],
    baseline: f64,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<ExpectedUpdate> {
    check_state(params, s)?;
    if n_samples < 2 {
        return Err(Error::Config("expected_update needs at least two samples".into()));
    }
    let moments = match rule.law() {
        Law::Boltzmann => Some(exact_boltzmann(params, s)?),
        _ => None,
    };
    let d = params.state_dim();
    let n = params.n_hidden();
    let len = ParamDelta::zeros(d, n).len();
    let mut mean = vec![0.0; len];
    let mut m2 = vec![0.0; len];
    let mut flat = Vec::with_capacity(len);
    for k in 0..n_samples {
        let trace = match rule.law() {
            Law::Independent => {
                let (h, p) = policy::sample_independent(params, s, rng)?;
                SampleTrace::independent(h, p)
            }
            Law::Boltzmann => {
                let m = moments.as_ref().unwrap();
                SampleTrace::independent(m.sample(rng), m.first.clone())
            }
            Law::Chain { steps } => policy::gibbs_sample(params, s, steps, rng)?,
        };
        let (action, output_prob) = policy::output_sample(params, trace.hidden().as_slice().unwrap(), rng)?;
        let record = EpisodeRecord {
            state: s.to_vec(),
            trace,
            action,
            output_prob,
            reward: rewards[action as usize],
            baseline,
        };
        rule.delta(params, &record, moments.as_ref())?.flatten_into(&mut flat);
        let count = (k + 1) as f64;
        for ((mu, q), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(&flat) {
            let dx = x - *mu;
            *mu += dx / count;
            *q += dx * (x - *mu);
        }
    }
    let nf = n_samples as f64;
    let se: Vec<f64> = m2.iter().map(|q| (q / (nf - 1.0) / nf).sqrt()).collect();
    Ok(ExpectedUpdate {
        mean: ParamDelta::from_flat(d, n, &mean)?,
        std_err: ParamDelta::from_flat(d, n, &se)?,
        n_samples,
    })
}

/// A small random test problem on the one-address-bit multiplexer.
#[derive(Debug, Clone)]
pub struct Instance {
    pub params: LayerParams,
    pub state: Vec<f64>,
    pub rewards: [f64; 2],
}

impl Instance {
    /// Random weights of order one; `symmetric` selects a Boltzmann-valid
    /// recurrent matrix, otherwise every recurrent entry (diagonal included)
    /// is free.
    pub fn random(n_hidden: usize, symmetric: bool, rng: &mut Rng) -> Self {
        let task = crate::env::MuxTask::new(1).expect("k = 1 is valid");
        let d = task.state_dim();
        let c = rng.uniform_in(0.2, 1.0);
        let mut params = LayerParams::zeros(d, n_hidden, c);
        params.w.iter_mut().for_each(|x| *x = rng.uniform_in(-1.0, 1.0));
        params.b.iter_mut().for_each(|x| *x = rng.uniform_in(-1.0, 1.0));
        for j in 0..n_hidden {
            for i in 0..n_hidden {
                if symmetric {
                    if i < j {
                        let v = rng.uniform_in(-1.5, 1.5);
                        params.w_rec[[j, i]] = v;
                        params.w_rec[[i, j]] = v;
                    }
                } else {
                    params.w_rec[[j, i]] = rng.uniform_in(-1.5, 1.5);
                }
            }
        }
        params.w_out.iter_mut().for_each(|x| *x = rng.uniform_in(-2.0, 2.0));
        params.b_out = rng.uniform_in(-1.0, 1.0);
        let state = task.sample_state(rng);
        let rewards = task.reward_table(&state).expect("state drawn from the task");
        Self { params, state, rewards }
    }
}

/// Outcome of comparing a rule's Monte-Carlo mean with the exact gradient.
#[derive(Debug, Clone)]
pub struct RuleCheck {
    pub rule: Rule,
    /// Largest `|mean - exact| / SE` over entries with non-zero SE.
    pub max_z: f64,
    pub worst_entry: String,
    /// Entries whose deviation exceeds `z_limit` standard errors, or that
    /// have zero SE but do not match exactly.
    pub failures: Vec<String>,
    pub entries_checked: usize,
}

impl RuleCheck {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs [`expected_update`] with the exact expected reward as baseline and
/// compares every entry to [`exact_gradient`] under the rule's law.
pub fn check_rule(rule: Rule, inst: &Instance, n_samples: usize, z_limit: f64, rng: &mut Rng) -> Result<RuleCheck> {
    let law = rule.law();
    let exact = exact_gradient(&inst.params, &inst.state, inst.rewards, law)?;
    let baseline = exact_expected_reward(&inst.params, &inst.state, inst.rewards, law)?;
    let est = expected_update(rule, &inst.params, &inst.state, inst.rewards, baseline, n_samples, rng)?;
    let (d, n) = (inst.params.state_dim(), inst.params.n_hidden());
    let (ex, mu, se) = (exact.flatten(), est.mean.flatten(), est.std_err.flatten());
    let mut check = RuleCheck { rule, max_z: 0.0, worst_entry: String::new(), failures: Vec::new(), entries_checked: ex.len() };
    for k in 0..ex.len() {
        let dev = (mu[k] - ex[k]).abs();
        let name = ParamDelta::entry_name(d, n, k);
        if se[k] == 0.0 {
            if dev > 1e-12 {
                check.failures.push(format!("{name}: zero variance but mean {} vs exact {}", mu[k], ex[k]));
            }
            continue;
        }
        let z = dev / se[k];
        if z > check.max_z {
            check.max_z = z;
            check.worst_entry = name.clone();
        }
        if z > z_limit {
            check.failures.push(format!("{name}: {z:.2} SE (mean {:.6}, exact {:.6})", mu[k], ex[k]));
        }
    }
    Ok(check)
}
