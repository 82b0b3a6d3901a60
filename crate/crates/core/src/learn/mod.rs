//! Learning rules. Every rule maps one completed episode to a
//! gradient-shaped [`ParamDelta`] in the ascent direction; the caller
//! averages deltas over a batch and hands them to Adam.

mod critic;
mod traces;

pub use critic::{Critic, DEFAULT_HIDDEN as DEFAULT_CRITIC_HIDDEN};
pub use traces::EligibilityTraces;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::ExactMoments;
use crate::policy::{LayerParams, ParamDelta, SampleTrace};

/// Which factors of the covariance estimate `Cov(R, H_i)` are centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenteringMode {
    /// `(R - b)(H - p)`: REINFORCE with a baseline.
    TwoSided,
    /// `(R - b) H`: a unit that does not fire is not updated.
    OneSidedReward,
    /// `R (H - p)`: plain REINFORCE.
    OneSidedAction,
}

impl std::str::FromStr for CenteringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-sided" => Ok(Self::TwoSided),
            "one-sided-reward" => Ok(Self::OneSidedReward),
            "one-sided-action" => Ok(Self::OneSidedAction),
            other => Err(Error::Config(format!("unknown centering mode `{other}`"))),
        }
    }
}

impl std::fmt::Display for CenteringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::TwoSided => "two-sided",
            Self::OneSidedReward => "one-sided-reward",
            Self::OneSidedAction => "one-sided-action",
        })
    }
}

/// Backward substitute for `dH_i/da_i` in the straight-through baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SteBackward {
    SigmoidDerivative,
    Identity,
}

impl std::str::FromStr for SteBackward {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Self::SigmoidDerivative),
            "identity" => Ok(Self::Identity),
            other => Err(Error::Config(format!("unknown STE backward `{other}`"))),
        }
    }
}

impl std::fmt::Display for SteBackward {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::SigmoidDerivative => "sigmoid",
            Self::Identity => "identity",
        })
    }
}

/// Everything observed in one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub state: Vec<f64>,
    pub trace: SampleTrace,
    pub action: u8,
    /// Output firing probability that generated `action`.
    pub output_prob: f64,
    pub reward: f64,
    /// Critic estimate of `E[R | S]` at the time of the episode.
    pub baseline: f64,
}

impl EpisodeRecord {
    pub fn advantage(&self) -> f64 {
        self.reward - self.baseline
    }

    fn check(&self, params: &LayerParams) -> Result<()> {
        if self.state.len() != params.state_dim() || self.trace.hidden().len() != params.n_hidden() {
            return Err(Error::Shape("episode record does not match network shape".into()));
        }
        Ok(())
    }
}

/// `(R - b) ∇ log P(A | H)` for the output unit.
fn output_delta(record: &EpisodeRecord, delta: &mut ParamDelta) {
    let g = record.advantage() * (record.action as f64 - record.output_prob);
    delta.w_out.zip_mut_with(record.trace.hidden(), |d, &h| *d = g * h);
    delta.b_out = g;
}

/// `ΔW[j,i] = g_i s_j`, `Δb_i = g_i`.
fn feedforward_delta(state: &[f64], g: &Array1<f64>, delta: &mut ParamDelta) {
    for (mut row, &sj) in delta.w.rows_mut().into_iter().zip(state) {
        row.zip_mut_with(g, |d, &gi| *d = gi * sj);
    }
    delta.b.assign(g);
}

/// REINFORCE for a layer of independent units, in one of the three
/// centering variants.
pub fn indep_update(params: &LayerParams, record: &EpisodeRecord, mode: CenteringMode) -> Result<ParamDelta> {
    record.check(params)?;
    if record.trace.steps() > 0 && params.c != 0.0 {
        return Err(Error::Mode("independent rule applied to a trace sampled with recurrent coupling".into()));
    }
    let h = record.trace.hidden();
    let p = record.trace.final_probs();
    let r = record.reward;
    let adv = record.advantage();
    let g = match mode {
        CenteringMode::TwoSided => Array1::from_iter(h.iter().zip(p).map(|(&hi, &pi)| adv * (hi - pi))),
        CenteringMode::OneSidedReward => h.mapv(|hi| adv * hi),
        CenteringMode::OneSidedAction => Array1::from_iter(h.iter().zip(p).map(|(&hi, &pi)| r * (hi - pi))),
    };
    let mut delta = ParamDelta::zeros_like(params);
    feedforward_delta(&record.state, &g, &mut delta);
    output_delta(record, &mut delta);
    Ok(delta)
}

/// Boltzmann-layer rule centered on the reward only: a reward-modulated
/// Hebbian update of the off-diagonal recurrent weights.
pub fn alg1_update(params: &LayerParams, record: &EpisodeRecord) -> Result<ParamDelta> {
    record.check(params)?;
    params.check_boltzmann()?;
    let h = record.trace.hidden();
    let adv = record.advantage();
    let g = h.mapv(|hi| adv * hi);
    let mut delta = ParamDelta::zeros_like(params);
    feedforward_delta(&record.state, &g, &mut delta);
    let cg = params.c * adv;
    hebbian_offdiag(&mut delta.w_rec, h, |hi, hj| cg * hi * hj);
    output_delta(record, &mut delta);
    Ok(delta)
}

fn hebbian_offdiag(w_rec: &mut Array2<f64>, h: &Array1<f64>, f: impl Fn(f64, f64) -> f64) {
    let n = h.len();
    for j in 0..n {
        for i in 0..n {
            if i != j {
                w_rec[[j, i]] = f(h[i], h[j]);
            }
        }
    }
}

/// Boltzmann-layer rule using exact negative statistics instead of a
/// reward baseline.
pub fn alg1_update_negstats(params: &LayerParams, record: &EpisodeRecord, negstats: &ExactMoments) -> Result<ParamDelta> {
    record.check(params)?;
    params.check_boltzmann()?;
    let n = params.n_hidden();
    if negstats.first.len() != n || negstats.second.dim() != (n, n) {
        return Err(Error::Shape(format!("negative statistics do not match {n} hidden units")));
    }
    let h = record.trace.hidden();
    let r = record.reward;
    let g = Array1::from_iter(h.iter().zip(&negstats.first).map(|(&hi, &mi)| r * (hi - mi)));
    let mut delta = ParamDelta::zeros_like(params);
    feedforward_delta(&record.state, &g, &mut delta);
    let cr = params.c * r;
    for j in 0..n {
        for i in 0..n {
            if i != j {
                delta.w_rec[[j, i]] = cr * (h[i] * h[j] - negstats.second[[i, j]]);
            }
        }
    }
    output_delta(record, &mut delta);
    Ok(delta)
}

/// Options for the recurrent-layer rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alg2Options {
    /// Also learn the self-connections `W_rec[i,i]`.
    pub update_recurrent_diagonal: bool,
}

impl Default for Alg2Options {
    fn default() -> Self {
        Self { update_recurrent_diagonal: true }
    }
}

/// Recurrent-layer rule driven by eligibility traces, with the reward
/// centered by the baseline.
pub fn alg2_update(
    params: &LayerParams,
    record: &EpisodeRecord,
    traces: &EligibilityTraces,
    opts: Alg2Options,
) -> Result<ParamDelta> {
    record.check(params)?;
    if !traces.is_finished() {
        return Err(Error::Mode("eligibility traces must be finished before the update".into()));
    }
    if traces.z.len() != params.n_hidden() {
        return Err(Error::Shape("eligibility traces do not match network shape".into()));
    }
    let adv = record.advantage();
    let g = traces.z.mapv(|z| adv * z);
    let mut delta = ParamDelta::zeros_like(params);
    feedforward_delta(&record.state, &g, &mut delta);
    let cg = params.c * adv;
    delta.w_rec.zip_mut_with(&traces.z_rec, |d, &z| *d = cg * z);
    if !opts.update_recurrent_diagonal {
        delta.w_rec.diag_mut().fill(0.0);
    }
    output_delta(record, &mut delta);
    Ok(delta)
}

/// Straight-through baseline: the output score is backpropagated into the
/// hidden layer as if `H` were a differentiable function of its input.
pub fn ste_update(params: &LayerParams, record: &EpisodeRecord, backward: SteBackward) -> Result<ParamDelta> {
    record.check(params)?;
    if params.c != 0.0 {
        return Err(Error::Mode("straight-through baseline requires c = 0".into()));
    }
    let p = record.trace.final_probs();
    let g_out = record.advantage() * (record.action as f64 - record.output_prob);
    let g = Array1::from_iter(p.iter().zip(&params.w_out).map(|(&pi, &wo)| {
        let dh = match backward {
            SteBackward::SigmoidDerivative => pi * (1.0 - pi),
            SteBackward::Identity => 1.0,
        };
        g_out * wo * dh
    }));
    let mut delta = ParamDelta::zeros_like(params);
    feedforward_delta(&record.state, &g, &mut delta);
    output_delta(record, &mut delta);
    Ok(delta)
}

/// The three single-sample estimators of `Cov(R, H)`:
/// `[(R - E R)(H - E H), (R - E R) H, R (H - E H)]`.
pub fn covariance_estimates(r: f64, r_mean: f64, h: f64, h_mean: f64) -> [f64; 3] {
    [(r - r_mean) * (h - h_mean), (r - r_mean) * h, r * (h - h_mean)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{sigmoid, AdamState, Rng};
    use crate::policy::{gibbs_sample, output_sample, sample_independent};
    use ndarray::array;

    fn independent_record(params: &LayerParams, s: &[f64], rng: &mut Rng, reward: f64, baseline: f64) -> EpisodeRecord {
        let (h, p) = sample_independent(params, s, rng).unwrap();
        let (a, po) = output_sample(params, h.as_slice().unwrap(), rng).unwrap();
        EpisodeRecord { state: s.to_vec(), trace: SampleTrace::independent(h, p), action: a, output_prob: po, reward, baseline }
    }

    fn chain_record(params: &LayerParams, s: &[f64], steps: usize, rng: &mut Rng, reward: f64, baseline: f64) -> EpisodeRecord {
        let trace = gibbs_sample(params, s, steps, rng).unwrap();
        let (a, po) = output_sample(params, trace.hidden().as_slice().unwrap(), rng).unwrap();
        EpisodeRecord { state: s.to_vec(), trace, action: a, output_prob: po, reward, baseline }
    }

    #[test]
    fn one_sided_reward_skips_silent_units() {
        let mut p = LayerParams::zeros(2, 2, 0.0);
        p.b = array![-40.0, 40.0];
        let rec = independent_record(&p, &[1.0, 1.0], &mut Rng::new(0), 1.0, -0.3);
        assert_eq!(rec.trace.hidden()[0], 0.0);
        let d = indep_update(&p, &rec, CenteringMode::OneSidedReward).unwrap();
        assert_eq!(d.w.column(0).to_vec(), vec![0.0, 0.0]);
        assert_eq!(d.b[0], 0.0);
        assert_eq!(d.b[1], 1.3);
    }

    #[test]
    fn centered_rules_vanish_when_reward_equals_baseline() {
        let p = LayerParams::init(3, 4, 0.0, &mut Rng::new(1));
        let mut rng = Rng::new(2);
        for _ in 0..20 {
            let rec = independent_record(&p, &[1.0, 0.0, 1.0], &mut rng, 0.4, 0.4);
            assert!(indep_update(&p, &rec, CenteringMode::TwoSided).unwrap().is_zero());
            assert!(indep_update(&p, &rec, CenteringMode::OneSidedReward).unwrap().is_zero());
            assert!(ste_update(&p, &rec, SteBackward::SigmoidDerivative).unwrap().is_zero());
        }
        let mut q = LayerParams::init(3, 4, 0.3, &mut Rng::new(3));
        q.w_rec = array![[0.0, 0.2, -0.1, 0.4], [0.2, 0.0, 0.3, 0.1], [-0.1, 0.3, 0.0, 0.5], [0.4, 0.1, 0.5, 0.0]];
        for _ in 0..20 {
            let rec = chain_record(&q, &[0.0, 1.0, 1.0], 3, &mut rng, -1.0, -1.0);
            assert!(alg1_update(&q, &rec).unwrap().is_zero());
            let tr = EligibilityTraces::from_trace(&rec.trace, 0.5, false).unwrap();
            assert!(alg2_update(&q, &rec, &tr, Alg2Options::default()).unwrap().is_zero());
        }
    }

    #[test]
    fn two_sided_single_unit_arithmetic() {
        let p = LayerParams::zeros(1, 1, 0.0);
        let rec = EpisodeRecord {
            state: vec![1.0],
            trace: SampleTrace::independent(array![1.0], array![0.5]),
            action: 1,
            output_prob: 0.5,
            reward: 1.0,
            baseline: 0.0,
        };
        let d = indep_update(&p, &rec, CenteringMode::TwoSided).unwrap();
        assert_eq!(d.w[[0, 0]], 0.5);
        assert_eq!(d.b[0], 0.5);
        assert_eq!(d.w_out[0], 0.5);
        assert_eq!(d.b_out, 0.5);
        let plain = indep_update(&p, &rec, CenteringMode::OneSidedAction).unwrap();
        assert_eq!(plain.w[[0, 0]], 0.5);
    }

    #[test]
    fn independent_rule_rejects_coupled_trace() {
        let mut p = LayerParams::zeros(1, 2, 0.5);
        p.w_rec = array![[0.0, 1.0], [1.0, 0.0]];
        let rec = chain_record(&p, &[1.0], 2, &mut Rng::new(4), 1.0, 0.0);
        assert!(matches!(indep_update(&p, &rec, CenteringMode::TwoSided), Err(Error::Mode(_))));
    }

    #[test]
    fn hebbian_gating_and_symmetry() {
        let mut p = LayerParams::zeros(1, 3, 0.25);
        p.w_rec[[0, 1]] = 0.1;
        p.w_rec[[1, 0]] = 0.1;
        let rec = EpisodeRecord {
            state: vec![1.0],
            trace: SampleTrace { states: vec![array![0.0, 1.0, 1.0], array![1.0, 1.0, 0.0]], initial_probs: array![0.5, 0.5, 0.5], probs: vec![array![0.5, 0.5, 0.5]] },
            action: 0,
            output_prob: 0.5,
            reward: 1.5,
            baseline: -0.5,
        };
        let d = alg1_update(&p, &rec).unwrap();
        assert_eq!(d.w_rec[[0, 1]], 0.5);
        assert_eq!(d.w_rec[[1, 0]], 0.5);
        assert_eq!(d.w_rec[[0, 2]], 0.0);
        assert_eq!(d.w_rec[[2, 1]], 0.0);
        assert!(d.w_rec.diag().iter().all(|&x| x == 0.0));
        assert_eq!(d.w_rec, d.w_rec.t());
        p.w_rec[[1, 0]] = 0.2;
        assert!(alg1_update(&p, &rec).is_err());
    }

    #[test]
    fn negstats_rule_zero_cases() {
        let p = LayerParams::zeros(1, 2, 0.5);
        let rec = EpisodeRecord {
            state: vec![1.0],
            trace: SampleTrace::independent(array![1.0, 1.0], array![0.5, 0.5]),
            action: 1,
            output_prob: 0.5,
            reward: 0.0,
            baseline: 0.2,
        };
        let m = ExactMoments {
            first: array![0.6, 0.6],
            second: array![[0.6, 1.0], [1.0, 0.6]],
            distribution: vec![0.25; 4],
        };
        let d = alg1_update_negstats(&p, &rec, &m).unwrap();
        assert!(d.w.iter().chain(&d.b).chain(&d.w_rec).all(|&x| x == 0.0));
        let rec = EpisodeRecord { reward: 2.0, ..rec };
        let d = alg1_update_negstats(&p, &rec, &m).unwrap();
        assert_eq!(d.w_rec[[0, 1]], 0.0);
        assert!((d.b[0] - 2.0 * 0.4).abs() < 1e-15);
        let bad = ExactMoments { first: array![0.5], ..m };
        assert!(alg1_update_negstats(&p, &rec, &bad).is_err());
    }

    #[test]
    fn recurrent_rule_reduces_to_baseline_reinforce() {
        let p = LayerParams::init(3, 5, 0.0, &mut Rng::new(5));
        let mut rng = Rng::new(6);
        for _ in 0..50 {
            let rec = chain_record(&p, &[1.0, 1.0, 0.0], 3, &mut rng, 1.0, 0.37);
            let tr = EligibilityTraces::from_trace(&rec.trace, 0.0, false).unwrap();
            let a = alg2_update(&p, &rec, &tr, Alg2Options::default()).unwrap();
            let b = indep_update(&p, &rec, CenteringMode::TwoSided).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn recurrent_rule_needs_finished_traces_and_respects_diagonal_flag() {
        let mut p = LayerParams::init(2, 2, 0.5, &mut Rng::new(7));
        p.w_rec = array![[0.3, -0.2], [0.8, 0.1]];
        let rec = chain_record(&p, &[1.0, 0.0], 2, &mut Rng::new(8), 1.0, 0.0);
        let open = EligibilityTraces::start(2, 0.5).unwrap();
        assert!(alg2_update(&p, &rec, &open, Alg2Options::default()).is_err());
        let tr = EligibilityTraces::from_trace(&rec.trace, 1.0, false).unwrap();
        let d = alg2_update(&p, &rec, &tr, Alg2Options { update_recurrent_diagonal: false }).unwrap();
        assert!(d.w_rec.diag().iter().all(|&x| x == 0.0));
        let full = alg2_update(&p, &rec, &tr, Alg2Options::default()).unwrap();
        assert_eq!(full.w_rec[[0, 1]], d.w_rec[[0, 1]]);
        for i in 0..2 {
            assert_eq!(full.w_rec[[i, i]], 0.5 * tr.z_rec[[i, i]]);
        }
    }

    #[test]
    fn ste_shares_output_rule_and_rejects_coupling() {
        let p = LayerParams::init(3, 4, 0.0, &mut Rng::new(9));
        let rec = independent_record(&p, &[1.0, 0.0, 1.0], &mut Rng::new(10), -1.0, 0.2);
        let ste = ste_update(&p, &rec, SteBackward::SigmoidDerivative).unwrap();
        let rf = indep_update(&p, &rec, CenteringMode::TwoSided).unwrap();
        assert_eq!(ste.w_out, rf.w_out);
        assert_eq!(ste.b_out, rf.b_out);
        assert!(ste.flatten().iter().all(|x| x.is_finite()));
        let coupled = LayerParams { c: 0.1, ..p };
        assert!(ste_update(&coupled, &rec, SteBackward::Identity).is_err());
    }

    #[test]
    fn ste_matches_chain_rule_when_hidden_equals_its_mean() {
        // Deterministic surrogate: h = σ(w s + b), objective (R - b0) log P(A | h).
        let s = 1.0;
        let (w, b, wo, bo) = (0.7, -0.2, 1.3, -0.4);
        let (reward, baseline, action) = (1.0, 0.25, 1u8);
        let objective = |w: f64, b: f64| {
            let h = sigmoid(w * s + b);
            let po = sigmoid(wo * h + bo);
            let lp = if action == 1 { po.ln() } else { (1.0 - po).ln() };
            (reward - baseline) * lp
        };
        let mut params = LayerParams::zeros(1, 1, 0.0);
        params.w[[0, 0]] = w;
        params.b[0] = b;
        params.w_out[0] = wo;
        params.b_out = bo;
        let p = sigmoid(w * s + b);
        let po = sigmoid(wo * p + bo);
        let rec = EpisodeRecord {
            state: vec![s],
            trace: SampleTrace::independent(array![p], array![p]),
            action,
            output_prob: po,
            reward,
            baseline,
        };
        let d = ste_update(&params, &rec, SteBackward::SigmoidDerivative).unwrap();
        let eps = 1e-6;
        let fd_w = (objective(w + eps, b) - objective(w - eps, b)) / (2.0 * eps);
        let fd_b = (objective(w, b + eps) - objective(w, b - eps)) / (2.0 * eps);
        assert!((d.w[[0, 0]] - fd_w).abs() < 1e-9, "{} vs {fd_w}", d.w[[0, 0]]);
        assert!((d.b[0] - fd_b).abs() < 1e-9);
    }

    #[test]
    fn uncentered_recurrent_rule_only_grows_with_nonnegative_rewards() {
        let mut p = LayerParams::zeros(2, 3, 0.5);
        p.w_rec = array![[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]];
        let mut rng = Rng::new(11);
        for k in 0..200 {
            let reward = (k % 3) as f64;
            let rec = chain_record(&p, &[1.0, 1.0], 4, &mut rng, reward, 0.0);
            let d = alg1_update(&p, &rec).unwrap();
            assert!(d.w_rec.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn symmetry_survives_adam() {
        let mut p = LayerParams::init(3, 4, 0.5, &mut Rng::new(12));
        let mut adam = AdamState::new(p.len());
        let mut rng = Rng::new(13);
        for k in 0..300 {
            let rec = chain_record(&p, &[1.0, 0.0, 1.0], 3, &mut rng, if k % 2 == 0 { 1.0 } else { -1.0 }, 0.1);
            let d = alg1_update(&p, &rec).unwrap();
            let step = adam.step(&d.flatten(), 0.05).unwrap();
            p.add_flat(&step);
            p.check_boltzmann().unwrap();
        }
        assert!(p.w_rec.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn covariance_estimators_are_the_three_centerings() {
        let [two, one_r, one_h] = covariance_estimates(2.0, 0.5, 1.0, 0.25);
        assert_eq!(two, 1.5 * 0.75);
        assert_eq!(one_r, 1.5);
        assert_eq!(one_h, 2.0 * 0.75);
    }
}
