use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;

use super::config::RunConfig;
use super::run::{moving_average, run, RunOutput};
use super::{fmt_sig, mean_std};
use crate::error::{Error, Result};

/// Hyperparameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    C,
    T,
    Lambda,
    N,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c" => Ok(Axis::C),
            "t" | "T" | "gibbs-steps" => Ok(Axis::T),
            "lambda" => Ok(Axis::Lambda),
            "n" | "N" | "n-hidden" => Ok(Axis::N),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::C => "c",
            Axis::T => "t",
            Axis::Lambda => "lambda",
            Axis::N => "n",
        })
    }
}

impl Axis {
    /// `base` with this axis set to `value`.
    pub fn apply(&self, base: &RunConfig, value: f64) -> Result<RunConfig> {
        let mut cfg = base.clone();
        let count = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{self} takes whole numbers, got {v}")))
            }
        };
        match self {
            Axis::C => cfg.c = value,
            Axis::T => cfg.gibbs_steps = count(value)?,
            Axis::Lambda => cfg.lambda = value,
            Axis::N => cfg.n_hidden = count(value)?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One finished `(value, seed)` cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub value: f64,
    pub output: RunOutput,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
    /// Cells in `(value, seed)` order.
    pub cells: Vec<Cell>,
}

/// Seeds `base.seed, base.seed + 1, ...` of a config.
pub fn seeds_of(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.seeds as u64).map(|i| cfg.seed + i).collect()
}

/// Runs every `(value, seed)` combination in parallel. Results come back in
/// deterministic `(value, seed)` order regardless of scheduling.
pub fn sweep(base: &RunConfig, axis: Axis, values: &[f64]) -> Result<Sweep> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let mut jobs = Vec::new();
    for &v in values {
        let cfg = axis.apply(base, v)?;
        for seed in seeds_of(base) {
            jobs.push((v, RunConfig { seed, ..cfg.clone() }));
        }
    }
    let cells = jobs
        .into_par_iter()
        .map(|(value, cfg)| run(&cfg).map(|output| Cell { value, output }))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { axis, values: values.to_vec(), cells })
}

impl Sweep {
    pub fn cells_for(&self, value: f64) -> impl Iterator<Item = &Cell> {
        self.cells.iter().filter(move |c| c.value == value)
    }

    /// Aggregated learning curves: mean and standard deviation of the moving
    /// average across seeds, per value and logged episode.
    pub fn write_aggregate<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["axis", "value", "config_id", "episode", "mean_reward_ma", "std_reward_ma", "n_seeds", "note"])?;
        for &v in &self.values {
            let cells: Vec<&Cell> = self.cells_for(v).collect();
            let cfg = &cells[0].output.config;
            let mas: Vec<Vec<f64>> = cells.iter().map(|c| moving_average(&c.output.rewards, cfg.ma_window)).collect();
            let note = if cells.len() == 1 { "single-seed-std" } else { "" };
            let every = cfg.log_every as usize;
            let mut col = Vec::with_capacity(cells.len());
            for t in (every - 1..mas[0].len()).step_by(every) {
                col.clear();
                col.extend(mas.iter().map(|m| m[t]));
                let (mean, std) = mean_std(&col);
                w.write_record([
                    self.axis.to_string(),
                    fmt_sig(v),
                    cfg.config_id(),
                    t.to_string(),
                    fmt_sig(mean),
                    fmt_sig(std),
                    cells.len().to_string(),
                    note.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
