use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learn::{CenteringMode, SteBackward, DEFAULT_CRITIC_HIDDEN};

/// First line every config file must carry.
pub const CONFIG_HEADER: &str = "# coordex-config v1";
/// Prefix of environment variables that override config keys.
pub const ENV_PREFIX: &str = "COORDEX_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Independent units trained by REINFORCE.
    IndepReinforce,
    /// Boltzmann layer, reward-centered Hebbian rule.
    Alg1,
    /// Boltzmann layer with exact negative statistics.
    Alg1NegStats,
    /// Recurrent layer with eligibility traces.
    Alg2,
    /// Straight-through estimator baseline.
    Ste,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::IndepReinforce,
        Algorithm::Alg1,
        Algorithm::Alg1NegStats,
        Algorithm::Alg2,
        Algorithm::Ste,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::IndepReinforce => "indep-reinforce",
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg1NegStats => "alg1-negstats",
            Algorithm::Alg2 => "alg2",
            Algorithm::Ste => "ste",
        }
    }

    /// Whether the hidden layer is sampled with recurrent steps.
    pub fn is_recurrent(&self) -> bool {
        matches!(self, Algorithm::Alg1 | Algorithm::Alg1NegStats | Algorithm::Alg2)
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Named starting points for a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// k = 2, N = 16, 2e5 episodes.
    Desk,
    /// k = 4, N = 64, 4e6 episodes.
    Paper,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "paper" => Ok(Preset::Paper),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }
}

/// Parameter grids of the published sweeps.
pub mod grids {
    pub const C: [f64; 8] = [0.0, 0.05, 0.10, 0.25, 0.40, 0.50, 0.75, 1.0];
    pub const N: [usize; 6] = [8, 16, 32, 64, 96, 128];
    pub const LAMBDA: [f64; 7] = [0.0, 0.10, 0.25, 0.40, 0.50, 0.90, 0.99];
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Centering of the independent-unit rule.
    pub centering: CenteringMode,
    /// Address bits of the multiplexer.
    pub k: u32,
    pub n_hidden: usize,
    /// Recurrent sampling steps `T`.
    pub gibbs_steps: usize,
    pub c: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub batch: usize,
    pub episodes: u64,
    pub seed: u64,
    /// Seeds used by sweeps, starting at `seed`.
    pub seeds: usize,
    pub critic_hidden: usize,
    pub critic_alpha: f64,
    pub update_recurrent_diagonal: bool,
    /// Fold the score of the feedforward draw into the recurrent traces.
    pub score_initial: bool,
    pub ste_backward: SteBackward,
    /// Moving-average window of the metrics stream.
    pub ma_window: usize,
    /// Write every `log_every`-th episode to the metrics CSV.
    pub log_every: u64,
    /// Record wall-clock time in the metrics (breaks byte determinism).
    pub timing: bool,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Alg1,
            centering: CenteringMode::TwoSided,
            k: 4,
            n_hidden: 64,
            gibbs_steps: 25,
            c: 0.25,
            lambda: 0.25,
            alpha: 0.005,
            batch: 16,
            episodes: 4_000_000,
            seed: 0,
            seeds: 5,
            critic_hidden: DEFAULT_CRITIC_HIDDEN,
            critic_alpha: 0.005,
            update_recurrent_diagonal: true,
            score_initial: false,
            ste_backward: SteBackward::SigmoidDerivative,
            ma_window: 10_000,
            log_every: 1,
            timing: false,
            out: PathBuf::from("runs"),
        }
    }
}

/// Keys accepted by [`RunConfig::set`], config files and the environment.
pub const KEYS: [&str; 21] = [
    "algorithm",
    "centering",
    "k",
    "n_hidden",
    "gibbs_steps",
    "c",
    "lambda",
    "alpha",
    "batch",
    "episodes",
    "seed",
    "seeds",
    "critic_hidden",
    "critic_alpha",
    "update_recurrent_diagonal",
    "score_initial",
    "ste_backward",
    "ma_window",
    "log_every",
    "timing",
    "out",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

/// Integers may be written as `4e6`.
fn parse_count(key: &str, value: &str) -> Result<u64> {
    if let Ok(v) = value.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = parse(key, value)?;
    if f >= 0.0 && f.fract() == 0.0 && f <= u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(Error::Config(format!("`{key}` must be a non-negative integer, got `{value}`")))
    }
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let base = Self::default();
        match preset {
            Preset::Desk => Self { k: 2, n_hidden: 16, episodes: 200_000, ..base },
            Preset::Paper => Self { k: 4, n_hidden: 64, episodes: 4_000_000, ..base },
        }
    }

    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "algorithm" => self.algorithm = value.parse()?,
            "centering" => self.centering = value.parse().map_err(|_| Error::Config(format!("unknown centering `{value}`")))?,
            "k" => self.k = parse(key, value)?,
            "n_hidden" => self.n_hidden = parse(key, value)?,
            "gibbs_steps" => self.gibbs_steps = parse(key, value)?,
            "c" => self.c = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "episodes" => self.episodes = parse_count(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "seeds" => self.seeds = parse(key, value)?,
            "critic_hidden" => self.critic_hidden = parse(key, value)?,
            "critic_alpha" => self.critic_alpha = parse(key, value)?,
            "update_recurrent_diagonal" => self.update_recurrent_diagonal = parse(key, value)?,
            "score_initial" => self.score_initial = parse(key, value)?,
            "ste_backward" => {
                self.ste_backward = value.parse().map_err(|_| Error::Config(format!("unknown STE backward `{value}`")))?
            }
            "ma_window" => self.ma_window = parse(key, value)?,
            "log_every" => self.log_every = parse_count(key, value)?,
            "timing" => self.timing = parse(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies a `key = value` file. The first line must be [`CONFIG_HEADER`];
    /// blank lines and lines starting with `#` are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some(CONFIG_HEADER) => {}
            Some(other) => return Err(Error::Config(format!("config header must be `{CONFIG_HEADER}`, found `{other}`"))),
            None => return Err(Error::Config("empty config file".into())),
        }
        for (no, line) in lines.enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 2)))?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        self.apply_text(&text)
    }

    /// Applies `COORDEX_<KEY>` variables from `vars`, e.g. `COORDEX_N_HIDDEN`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        let mut found: Vec<(String, String)> = vars
            .into_iter()
            .filter_map(|(k, v)| {
                let key = k.strip_prefix(ENV_PREFIX)?.to_ascii_lowercase();
                KEYS.contains(&key.as_str()).then_some((key, v))
            })
            .collect();
        found.sort();
        for (k, v) in found {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Serializes in the config-file format.
    pub fn to_text(&self) -> String {
        let mut out = format!("{CONFIG_HEADER}\n");
        for key in KEYS {
            out.push_str(&format!("{key} = {}\n", self.get(key)));
        }
        out
    }

    fn get(&self, key: &str) -> String {
        match key {
            "algorithm" => self.algorithm.to_string(),
            "centering" => self.centering.to_string(),
            "k" => self.k.to_string(),
            "n_hidden" => self.n_hidden.to_string(),
            "gibbs_steps" => self.gibbs_steps.to_string(),
            "c" => self.c.to_string(),
            "lambda" => self.lambda.to_string(),
            "alpha" => self.alpha.to_string(),
            "batch" => self.batch.to_string(),
            "episodes" => self.episodes.to_string(),
            "seed" => self.seed.to_string(),
            "seeds" => self.seeds.to_string(),
            "critic_hidden" => self.critic_hidden.to_string(),
            "critic_alpha" => self.critic_alpha.to_string(),
            "update_recurrent_diagonal" => self.update_recurrent_diagonal.to_string(),
            "score_initial" => self.score_initial.to_string(),
            "ste_backward" => self.ste_backward.to_string(),
            "ma_window" => self.ma_window.to_string(),
            "log_every" => self.log_every.to_string(),
            "timing" => self.timing.to_string(),
            "out" => self.out.display().to_string(),
            _ => unreachable!("key list and getter agree"),
        }
    }

    /// Checks ranges and combinations.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k == 0 || self.k > crate::env::MAX_ADDRESS_BITS {
            return bad(format!("k must be in 1..={}, got {}", crate::env::MAX_ADDRESS_BITS, self.k));
        }
        if self.n_hidden == 0 {
            return bad("n_hidden must be positive".into());
        }
        if self.batch == 0 {
            return bad("batch must be positive".into());
        }
        if self.episodes == 0 || !self.episodes.is_multiple_of(self.batch as u64) {
            return bad(format!("episodes ({}) must be a positive multiple of batch ({})", self.episodes, self.batch));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.critic_alpha > 0.0 && self.critic_alpha.is_finite()) {
            return bad("step sizes must be positive and finite".into());
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("c must be non-negative, got {}", self.c));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if self.algorithm.is_recurrent() && self.gibbs_steps == 0 {
            return bad(format!("{} needs gibbs_steps >= 1", self.algorithm));
        }
        if matches!(self.algorithm, Algorithm::Ste | Algorithm::IndepReinforce) && self.c != 0.0 {
            return bad(format!("{} has no lateral connections; c must be 0, got {}", self.algorithm, self.c));
        }
        if self.algorithm == Algorithm::Alg1NegStats && self.n_hidden > crate::oracle::MAX_BOLTZMANN_UNITS {
            return bad(format!("alg1-negstats enumerates 2^N states; N must be at most {}", crate::oracle::MAX_BOLTZMANN_UNITS));
        }
        if self.seeds == 0 {
            return bad("seeds must be positive".into());
        }
        if self.ma_window == 0 || self.log_every == 0 {
            return bad("ma_window and log_every must be positive".into());
        }
        if self.critic_hidden == 0 {
            return bad("critic_hidden must be positive".into());
        }
        Ok(())
    }

    /// Stable label of the learning setup (seed excluded).
    pub fn config_id(&self) -> String {
        let mut id = format!("{}-k{}-n{}", self.algorithm, self.k, self.n_hidden);
        match self.algorithm {
            Algorithm::IndepReinforce => id.push_str(&format!("-{}", self.centering)),
            Algorithm::Ste => id.push_str(&format!("-{}", self.ste_backward)),
            Algorithm::Alg1 | Algorithm::Alg1NegStats => id.push_str(&format!("-t{}-c{}", self.gibbs_steps, self.c)),
            Algorithm::Alg2 => id.push_str(&format!("-t{}-c{}-l{}", self.gibbs_steps, self.c, self.lambda)),
        }
        id
    }

    pub fn updates(&self) -> u64 {
        self.episodes / self.batch as u64
    }
}
