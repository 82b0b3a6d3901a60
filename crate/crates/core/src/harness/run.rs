use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, RunConfig};
use super::fmt_sig;
use crate::env::{self, MuxTask};
use crate::error::{Error, Result};
use crate::learn::{self, Alg2Options, Critic, EligibilityTraces, EpisodeRecord};
use crate::numeric::{AdamState, Rng};
use crate::oracle::{self, ExactMoments};
use crate::policy::{self, LayerParams, ParamDelta, SampleTrace};

/// RNG stream ids derived from the run seed.
const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_POLICY: u64 = 2;

/// Column order of the metrics CSV.
pub const METRICS_HEADER: [&str; 6] = ["episode", "reward", "reward_ma", "seed", "config_id", "wall_ms"];

/// Policy, critic and optimizer state of one run, advanced one batch at a time.
pub struct Learner {
    pub config: RunConfig,
    pub task: MuxTask,
    pub params: LayerParams,
    pub critic: Critic,
    pub adam: AdamState,
    env_rng: Rng,
    policy_rng: Rng,
    negstats: HashMap<Vec<u64>, ExactMoments>,
    updates: u64,
}

impl Learner {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let task = MuxTask::new(config.k)?;
        let d = task.state_dim();
        let mut init = Rng::stream(config.seed, STREAM_INIT);
        let params = LayerParams::init(d, config.n_hidden, config.c, &mut init);
        let critic = Critic::new(d, config.critic_hidden, config.critic_alpha, &mut init);
        let adam = AdamState::new(params.len());
        Ok(Self {
            env_rng: Rng::stream(config.seed, STREAM_ENV),
            policy_rng: Rng::stream(config.seed, STREAM_POLICY),
            config,
            task,
            params,
            critic,
            adam,
            negstats: HashMap::new(),
            updates: 0,
        })
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Draws the hidden sample for state `s`.
    ///
    /// With `c = 0` the recurrent steps cannot change the law of `H`, so the
    /// Boltzmann algorithms take the feedforward draw directly.
    fn sample_hidden(&mut self, s: &[f64]) -> Result<SampleTrace> {
        let cfg = &self.config;
        let recurrent = match cfg.algorithm {
            Algorithm::IndepReinforce | Algorithm::Ste => false,
            Algorithm::Alg1 | Algorithm::Alg1NegStats => cfg.c != 0.0,
            Algorithm::Alg2 => true,
        };
        if recurrent {
            policy::gibbs_sample(&self.params, s, cfg.gibbs_steps, &mut self.policy_rng)
        } else {
            let (h, p) = policy::sample_independent(&self.params, s, &mut self.policy_rng)?;
            Ok(SampleTrace::independent(h, p))
        }
    }

    /// Plays one episode with the current parameters: state, hidden sample,
    /// action, reward and critic baseline.
    pub fn episode(&mut self) -> Result<EpisodeRecord> {
        let s = self.task.sample_state(&mut self.env_rng);
        let trace = self.sample_hidden(&s)?;
        let (action, output_prob) = policy::output_sample(&self.params, trace.hidden().as_slice().unwrap(), &mut self.policy_rng)?;
        let reward = env::reward(action, self.task.mux_output(&s)?);
        let baseline = self.critic.predict(&s)?;
        Ok(EpisodeRecord { state: s, trace, action, output_prob, reward, baseline })
    }

    /// The configured rule's delta for one episode.
    pub fn delta(&mut self, record: &EpisodeRecord) -> Result<ParamDelta> {
        let cfg = &self.config;
        match cfg.algorithm {
            Algorithm::IndepReinforce => learn::indep_update(&self.params, record, cfg.centering),
            Algorithm::Alg1 => learn::alg1_update(&self.params, record),
            Algorithm::Alg1NegStats => {
                let key: Vec<u64> = record.state.iter().map(|x| x.to_bits()).collect();
                if !self.negstats.contains_key(&key) {
                    let m = oracle::exact_boltzmann(&self.params, &record.state)?;
                    self.negstats.insert(key.clone(), m);
                }
                learn::alg1_update_negstats(&self.params, record, &self.negstats[&key])
            }
            Algorithm::Alg2 => {
                let tr = EligibilityTraces::from_trace(&record.trace, cfg.lambda, cfg.score_initial)?;
                let opts = Alg2Options { update_recurrent_diagonal: cfg.update_recurrent_diagonal };
                learn::alg2_update(&self.params, record, &tr, opts)
            }
            Algorithm::Ste => learn::ste_update(&self.params, record, cfg.ste_backward),
        }
    }

    /// Plays one batch of episodes with frozen parameters.
    pub fn play_batch(&mut self) -> Result<Vec<EpisodeRecord>> {
        (0..self.config.batch).map(|_| self.episode()).collect()
    }

    /// Averages the rule's deltas over `records`, applies one Adam step to
    /// the policy and one to the critic. Returns the averaged delta.
    pub fn update(&mut self, records: &[EpisodeRecord]) -> Result<ParamDelta> {
        let (d, n) = (self.params.state_dim(), self.params.n_hidden());
        let mut sum = vec![0.0; self.params.len()];
        let mut flat = Vec::with_capacity(sum.len());
        let mut critic_grad = vec![0.0; self.critic.n_params()];
        for rec in records {
            self.delta(rec)?.flatten_into(&mut flat);
            for (acc, x) in sum.iter_mut().zip(&flat) {
                *acc += x;
            }
            self.critic.accumulate_gradient(&rec.state, rec.reward - rec.baseline, &mut critic_grad)?;
        }
        let inv = 1.0 / records.len() as f64;
        sum.iter_mut().for_each(|x| *x *= inv);
        critic_grad.iter_mut().for_each(|x| *x *= inv);
        let step = self.adam.step(&sum, self.config.alpha)?;
        self.params.add_flat(&step);
        if !self.params.is_finite() {
            return Err(Error::NonFinite(format!("policy parameters after update {}", self.updates + 1)));
        }
        self.critic.apply(&critic_grad)?;
        self.negstats.clear();
        self.updates += 1;
        ParamDelta::from_flat(d, n, &sum)
    }
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: RunConfig,
    /// Reward of every episode, in order.
    pub rewards: Vec<f64>,
    /// Elapsed milliseconds at every logged episode, when timing is on.
    pub wall_ms: Option<Vec<u64>>,
    pub params: LayerParams,
    pub critic: Critic,
}

/// Final state written next to the metrics.
#[derive(Debug, Serialize, Deserialize)]
pub struct Snapshot {
    pub config: RunConfig,
    pub params: LayerParams,
    pub critic: Critic,
}

/// Executes the configured training loop for `episodes` episodes.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let mut learner = Learner::new(config.clone())?;
    let mut rewards = Vec::with_capacity(config.episodes as usize);
    let start = Instant::now();
    let mut wall = config.timing.then(Vec::new);
    for _ in 0..config.updates() {
        let records = learner.play_batch()?;
        for r in &records {
            rewards.push(r.reward);
            if let Some(w) = wall.as_mut() {
                if (rewards.len() as u64).is_multiple_of(config.log_every) {
                    w.push(start.elapsed().as_millis() as u64);
                }
            }
        }
        learner.update(&records)?;
    }
    Ok(RunOutput { config: config.clone(), rewards, wall_ms: wall, params: learner.params, critic: learner.critic })
}

/// Trailing mean over the last `window` values (fewer at the start).
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut sum = 0.0;
    for (t, &x) in xs.iter().enumerate() {
        sum += x;
        if t >= window {
            sum -= xs[t - window];
        }
        out.push(sum / (t + 1).min(window) as f64);
    }
    out
}

impl RunOutput {
    /// Writes the metrics CSV: one row per logged episode.
    pub fn write_metrics<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(METRICS_HEADER)?;
        let ma = moving_average(&self.rewards, self.config.ma_window);
        let id = self.config.config_id();
        let seed = self.config.seed.to_string();
        let every = self.config.log_every as usize;
        for (row, t) in (every - 1..self.rewards.len()).step_by(every).enumerate() {
            let ms = self.wall_ms.as_ref().map_or(0, |w| w[row]);
            w.write_record([
                t.to_string(),
                fmt_sig(self.rewards[t]),
                fmt_sig(ma[t]),
                seed.clone(),
                id.clone(),
                ms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { config: self.config.clone(), params: self.params.clone(), critic: self.critic.clone() }
    }

    /// Writes `metrics_<id>_seed<seed>.csv` and `params_<id>_seed<seed>.json`
    /// under `dir`; returns both paths.
    pub fn save(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let stem = format!("{}_seed{}", self.config.config_id(), self.config.seed);
        let metrics = dir.join(format!("metrics_{stem}.csv"));
        let params = dir.join(format!("params_{stem}.json"));
        self.write_metrics(std::io::BufWriter::new(std::fs::File::create(&metrics)?))?;
        serde_json::to_writer(std::io::BufWriter::new(std::fs::File::create(&params)?), &self.snapshot())?;
        Ok((metrics, params))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Preset;
    use crate::learn::CenteringMode;

    fn short(algorithm: Algorithm, c: f64) -> RunConfig {
        RunConfig {
            algorithm,
            c,
            k: 1,
            n_hidden: 4,
            gibbs_steps: 3,
            episodes: 320,
            ma_window: 50,
            ..RunConfig::preset(Preset::Desk)
        }
    }

    #[test]
    fn moving_average_examples() {
        assert_eq!(moving_average(&[1.0, -1.0, 1.0, 1.0], 2), vec![1.0, 0.0, 0.0, 1.0]);
        assert!(moving_average(&[], 3).is_empty());
    }

    #[test]
    fn update_count_and_rewards() {
        for alg in Algorithm::ALL {
            let c = if matches!(alg, Algorithm::Ste | Algorithm::IndepReinforce) { 0.0 } else { 0.5 };
            let cfg = short(alg, c);
            let out = run(&cfg).unwrap();
            assert_eq!(out.rewards.len(), 320);
            assert!(out.rewards.iter().all(|&r| r == 1.0 || r == -1.0));
            let mut l = Learner::new(cfg.clone()).unwrap();
            for _ in 0..cfg.updates() {
                let recs = l.play_batch().unwrap();
                l.update(&recs).unwrap();
            }
            assert_eq!(l.updates(), 20);
            assert_eq!(l.params, out.params);
        }
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(run(&RunConfig { episodes: 100, ..short(Algorithm::Alg1, 0.5) }).is_err());
        assert!(run(&short(Algorithm::Ste, 0.5)).is_err());
    }

    #[test]
    fn boltzmann_runs_keep_symmetry() {
        let out = run(&RunConfig { episodes: 1600, ..short(Algorithm::Alg1, 0.7) }).unwrap();
        let w = &out.params.w_rec;
        assert_eq!(w, &w.t());
        assert!(w.diag().iter().all(|&x| x == 0.0));
        assert!(w.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn metrics_csv_shape() {
        let cfg = RunConfig { log_every: 16, ..short(Algorithm::IndepReinforce, 0.0) };
        let out = run(&RunConfig { centering: CenteringMode::OneSidedReward, ..cfg }).unwrap();
        let mut buf = Vec::new();
        out.write_metrics(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "episode,reward,reward_ma,seed,config_id,wall_ms");
        assert_eq!(lines.len(), 1 + 20);
        assert!(lines[1].starts_with("15,"));
        assert!(lines.iter().skip(1).all(|l| l.ends_with(",0")));
    }
}
